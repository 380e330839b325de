"""Command-line entry point: ``flowsift <subcommand> ...``.

Exit codes: 0 ok, 1 usage, 2 data/format, 3 model, 4 endpoint.
Machine-readable output goes to files; tables to stdout; logs to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import parallel
from .dataset import (
    EncodingPolicy,
    SplitSpec,
    class_distribution,
    read_dataset_csv,
    train_test_split,
)
from .errors import DataError, EndpointError, FlowsiftError, ModelError

log = logging.getLogger("flowsift")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL, EXIT_ENDPOINT = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"--param expects key=value, got {text!r}")
    key, value = text.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    if isinstance(parsed, list):
        parsed = tuple(parsed)
    return key, parsed


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="file of 'key = value' defaults; flags win")
    common.add_argument("--threads", type=int, default=1, help="worker cap for parallel stages")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="flowsift", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("extract", parents=[common], help="pcap file/dir -> labeled flow CSV")
    s.add_argument("--pcap", required=True)
    s.add_argument("--label", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--idle-timeout", type=float, default=None)

    s = sub.add_parser("merge", parents=[common], help="concatenate flow CSVs")
    s.add_argument("--in", dest="inputs", nargs="+", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic flow CSV")
    s.add_argument("--per-class", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--separation", type=float, default=1.0)
    s.add_argument("--xor", action="store_true")
    s.add_argument("--pathological", action="store_true")
    s.add_argument("--out", required=True)

    s = sub.add_parser("engineer", parents=[common], help="feature pruning pipeline")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--no-paper-pipeline", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--importance-trees", type=int, default=50)
    s.add_argument("--with-ips", action="store_true")

    for name in ("train", "tune"):
        s = sub.add_parser(name, parents=[common],
                           help="fit one model" if name == "train" else "grid search + refit")
        s.add_argument("--model", required=True)
        s.add_argument("--in", dest="input", required=True)
        s.add_argument("--split", type=float, default=0.8)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", required=True)
        s.add_argument("--with-ips", action="store_true")
        if name == "train":
            s.add_argument("--param", type=_param, action="append", default=[],
                           help="hyperparameter key=value (JSON value), repeatable")
            s.add_argument("--report")
        else:
            s.add_argument("--folds", type=int, default=5)
            s.add_argument("--cv-report", required=True)
            s.add_argument("--grid", help="JSON file: {axis: [values]} or [ {params}, ... ]")

    s = sub.add_parser("evaluate", parents=[common], help="score a saved model on a CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--split", type=float, default=None,
                   help="evaluate only the test part of this train fraction")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("llm-eval", parents=[common], help="zero/few-shot LLM evaluation")
    s.add_argument("--mode", choices=["zero-shot", "few-shot"], default="zero-shot")
    s.add_argument("--shots", type=int, default=5)
    s.add_argument("--per-class", type=int, default=100)
    s.add_argument("--endpoint", default="http://localhost:8000/v1")
    s.add_argument("--model-name", default="gpt-4o")
    s.add_argument("--api-key-env", default="FLOWSIFT_LLM_API_KEY")
    s.add_argument("--train")
    s.add_argument("--test", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--mock", help="scripted mock transport (JSON) instead of HTTP")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-parallel", type=int, default=None)
    s.add_argument("--max-attempts", type=int, default=5)
    s.add_argument("--backoff", type=float, default=1.0)
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _resolved(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "verbose"):
            continue
        out[k] = [list(x) if isinstance(x, tuple) else x for x in v] if isinstance(v, list) else v
    return out


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _policy(args) -> EncodingPolicy:
    return EncodingPolicy(with_ips=getattr(args, "with_ips", False))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_extract(args) -> int:
    from .flows import assemble_flows, renumber, write_flows_csv
    from .pcap import DecodeStats, read_packets
    from .schema import CLASS_NAMES

    if args.label not in CLASS_NAMES:
        raise UsageError(f"--label {args.label!r}: expected one of {', '.join(CLASS_NAMES)}")
    src = Path(args.pcap)
    if src.is_dir():
        files = sorted(p for p in src.iterdir() if p.suffix in (".pcap", ".cap"))
        if not files:
            raise DataError(f"{src}: no .pcap files")
    else:
        files = [src]
    flows = []
    for f in files:
        stats = DecodeStats()
        try:
            packets = read_packets(f, stats)
        except DataError as exc:
            raise DataError(f"{f}: {exc}") from None
        file_flows = assemble_flows(packets, args.idle_timeout)
        log.info("%s: %s -> %d flows", f, stats.as_dict(), len(file_flows))
        flows.extend(file_flows)
    write_flows_csv(args.out, renumber(flows), args.label)
    print(f"{len(flows)} flows from {len(files)} file(s) -> {args.out}")
    return EXIT_OK


def _print_distribution(ds) -> None:
    print(f"{'Class #':<8}{'Class':<10}{'Count':>8}{'Percentage':>12}")
    from .schema import CLASS_INDEX
    for name, (count, pct) in class_distribution(ds).items():
        print(f"{CLASS_INDEX[name]:<8}{name:<10}{count:>8}{pct:>11.2f}%")


def cmd_merge(args) -> int:
    from .flows import merge_flow_files

    ds = merge_flow_files(args.inputs)
    ds.to_csv(args.out)
    print(f"{len(ds)} rows x {ds.shape[1]} columns -> {args.out}")
    _print_distribution(ds)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import generate_synthetic, pathology_fixture

    if args.pathological:
        ds = pathology_fixture(args.per_class, args.seed)
    else:
        ds = generate_synthetic(args.per_class, args.seed, args.separation, xor=args.xor)
    ds.to_csv(args.out)
    print(f"{len(ds)} rows -> {args.out}")
    return EXIT_OK


def cmd_engineer(args) -> int:
    from .features import FeatureReport, paper_pipeline, pearson_matrix, rf_feature_importance
    from .dataset import encode_features

    ds = read_dataset_csv(args.input)
    policy = _policy(args)
    if args.no_paper_pipeline:
        X, names = encode_features(ds, policy)
        report = FeatureReport(
            importances=rf_feature_importance(ds, args.importance_trees, args.seed, policy),
            pearson={"features": names, "matrix": pearson_matrix(X).tolist()})
        out = ds
    else:
        out, report = paper_pipeline(ds, seed=args.seed, importance_trees=args.importance_trees,
                                     policy=policy)
    out.to_csv(args.out)
    _write_json(args.report, {**report.to_dict(), "config": _resolved(args)})
    for name, reason in report.drops:
        print(f"dropped {name:<20} {reason}")
    print(f"{out.shape[1]} columns -> {args.out}")
    return EXIT_OK


def _split(ds, args):
    return train_test_split(ds, SplitSpec(args.split, args.seed, True))


def cmd_train(args) -> int:
    from .evaluation import evaluate_predictions
    from .models import ModelSpec, fit, save_model

    spec = ModelSpec(args.model, dict(args.param), args.seed)
    ds = read_dataset_csv(args.input)
    train, test = _split(ds, args)
    model = fit(spec, train, _policy(args))
    save_model(model, args.out)
    print(f"{args.model}: trained on {len(train)} rows, features {', '.join(model.feature_names)}")
    if len(test):
        report = evaluate_predictions(test.labels, model.predict_dataset(test))
        print(report.to_text(f"held-out {len(test)} rows"), end="")
        if args.report:
            _write_json(args.report, {**report.to_dict(), "config": _resolved(args)})
    return EXIT_OK


def cmd_tune(args) -> int:
    from .evaluation import evaluate_predictions, grid_search
    from .models import DEFAULT_GRIDS, ModelSpec, save_model

    ModelSpec(args.model)  # validates the family name
    if args.grid:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    else:
        grid = DEFAULT_GRIDS[args.model]
    ds = read_dataset_csv(args.input)
    train, test = _split(ds, args)
    result = grid_search(args.model, grid, train, args.folds, args.seed, _policy(args))
    save_model(result.model, args.out)
    doc = {**result.to_dict(), "config": _resolved(args)}
    for i, row in enumerate(result.table):
        acc = row["mean_accuracy"]
        print(f"{'*' if i == result.best_index else ' '} {json.dumps(row['params'])}  "
              f"{'failed' if acc is None else f'{acc:.4f}'}")
    if len(test):
        report = evaluate_predictions(test.labels, result.model.predict_dataset(test))
        doc["test"] = report.to_dict()
        print(report.to_text(f"held-out {len(test)} rows"), end="")
    _write_json(args.cv_report, doc)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import evaluate_predictions
    from .models import load_model

    model = load_model(args.model)
    ds = read_dataset_csv(args.input)
    if args.split is not None:
        _, ds = _split(ds, args)
    report = evaluate_predictions(ds.labels, model.predict_dataset(ds))
    _write_json(args.report, {**report.to_dict(), "model_spec": model.spec.to_dict(),
                              "config": _resolved(args)})
    print(report.to_text(f"{args.model} on {len(ds)} rows"), end="")
    return EXIT_OK


def cmd_llm_eval(args) -> int:
    from .llm import LlmEndpoint, MockTransport, PromptConfig, evaluate_llm

    mode = args.mode.replace("-", "_")
    if mode == "few_shot" and not args.train:
        raise UsageError("--mode few-shot needs --train")
    config = PromptConfig(mode=mode, shots_per_class=args.shots,
                          per_class_samples=args.per_class, seed=args.seed)
    endpoint = LlmEndpoint(args.endpoint, args.model_name, args.api_key_env,
                           max_parallel=args.max_parallel or args.threads,
                           max_attempts=args.max_attempts, backoff_base=args.backoff)
    test = read_dataset_csv(args.test)
    train = read_dataset_csv(args.train) if args.train else None
    transport = MockTransport.from_file(args.mock) if args.mock else None
    result = evaluate_llm(config, endpoint, train, test, transport)
    doc = result.to_dict()
    doc["config"] = _resolved(args)
    # worker counts never change the verdicts, so keep them out of the report
    doc["config"].pop("max_parallel", None)
    doc["config"].pop("threads", None)
    doc["endpoint"].pop("max_parallel", None)
    _write_json(args.report, doc)
    print(result.to_text(f"{args.model_name} {args.mode}"), end="")
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract, "merge": cmd_merge, "synth": cmd_synth, "engineer": cmd_engineer,
    "train": cmd_train, "tune": cmd_tune, "evaluate": cmd_evaluate, "llm-eval": cmd_llm_eval,
}


def _apply_config(parser, command: str, path: str) -> None:
    """Install config-file values as subcommand defaults so explicit flags still win."""
    cfg = read_config_file(path)
    subparser = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in subparser._actions}
    unknown = sorted(set(cfg) - set(actions) - {"config"})
    if unknown:
        raise UsageError(f"{path}: unknown key(s) {', '.join(unknown)}")
    defaults = {}
    for key, value in cfg.items():
        if key == "config":
            continue
        action = actions[key]
        if action.nargs == 0:
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"{path}: {key} expects true or false, got {value!r}")
            defaults[key] = value.lower() in ("true", "1", "yes")
        elif action.nargs in ("+", "*"):
            defaults[key] = [action.type(v) if action.type else v for v in value.split()]
        else:
            defaults[key] = value   # argparse applies the type to string defaults
        # a value from the file satisfies a required flag
        action.required = False
    subparser.set_defaults(**defaults)


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        command = next((a for a in argv if a in COMMANDS), None)
        if known.config and command:
            _apply_config(parser, command, known.config)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"flowsift: {exc}", file=sys.stderr)
        return EXIT_DATA

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    parallel.set_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"flowsift {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"flowsift {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(f"flowsift {args.command}: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except EndpointError as exc:
        print(f"flowsift {args.command}: endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (OSError, ValueError) as exc:
        print(f"flowsift {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FlowsiftError as exc:
        print(f"flowsift {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        parallel.set_threads(1)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
