"""Zero-/few-shot flow classification through a chat-completion endpoint."""
from __future__ import annotations

import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import parallel
from .dataset import LabeledDataset
from .errors import AuthFailure, EndpointUnreachable, MissingColumn, TransportError
from .evaluation import EvalReport, confusion_matrix, metrics
from .schema import CLASS_NAMES, FEATURE_GLOSSARY, REAL_COLUMNS, REPORT_LABEL_ORDER

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "FLOWSIFT_LLM_API_KEY"
DEFAULT_FEATURES = ("flow_srcport", "flow_dstport", "num_packets", "avg_packet_size",
                    "tcp_window_size_avg", "total_payload", "flow_duration")
STRICT_SUFFIX = "Answer with exactly one word: Backup, IPSec, Browsing, Web or Email."


@dataclass(frozen=True)
class PromptConfig:
    mode: str = "zero_shot"            # zero_shot | few_shot
    shots_per_class: int = 5
    per_class_samples: int = 100
    feature_columns: tuple = DEFAULT_FEATURES
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("zero_shot", "few_shot"):
            raise ValueError(f"mode must be zero_shot or few_shot, not {self.mode!r}")
        if self.mode == "few_shot" and self.shots_per_class < 1:
            raise ValueError("few_shot needs shots_per_class >= 1")
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))


@dataclass(frozen=True)
class LlmEndpoint:
    base_url: str
    model_name: str
    api_key_source: str = DEFAULT_KEY_ENV
    max_parallel: int = 4
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    timeout: float = 60.0

    def to_dict(self) -> dict:
        # the key itself is never serialized
        return {"base_url": self.base_url, "model_name": self.model_name,
                "api_key_source": self.api_key_source, "max_parallel": self.max_parallel,
                "max_attempts": self.max_attempts, "backoff_base": self.backoff_base,
                "backoff_factor": self.backoff_factor}


@dataclass(frozen=True)
class LlmVerdict:
    raw_text: str
    parsed: str | None     # class name, or None when unparsed
    latency: float
    attempts: int = 1


@dataclass(frozen=True)
class RequestContext:
    """Per-query metadata. HTTP transports ignore it; the mock uses it to script answers."""

    row_index: int
    true_label: str
    class_ordinal: int
    attempt: int = 0


# ---------------------------------------------------------------------------
# prompts & parsing
# ---------------------------------------------------------------------------

def _render_value(col: str, value) -> str:
    if col in REAL_COLUMNS or isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


def render_flow(row: dict, columns: Sequence[str]) -> str:
    missing = [c for c in columns if c not in row]
    if missing:
        raise MissingColumn(f"flow lacks column(s): {', '.join(missing)}")
    return "\n".join(f"{c}: {_render_value(c, row[c])}" for c in columns)


def system_message(columns: Sequence[str]) -> str:
    glossary = "\n".join(f"- {c}: {FEATURE_GLOSSARY.get(c, c)}" for c in columns)
    return (
        "You classify network flows by their statistics. Classify a network flow into "
        f"exactly one of: {', '.join(CLASS_NAMES)}.\n"
        f"Features:\n{glossary}\n"
        "Answer with exactly one label word and nothing else."
    )


def build_prompt(config: PromptConfig, exemplars: Sequence[tuple[dict, str]], flow: dict
                 ) -> list[dict]:
    """Messages for one query. Few-shot exemplars are (row, label) pairs, already
    ordered by ``select_exemplars``."""
    cols = config.feature_columns
    messages = [{"role": "system", "content": system_message(cols)}]
    if config.mode == "few_shot":
        for row, label in exemplars:
            messages.append({"role": "user",
                             "content": f"Example flow:\n{render_flow(row, cols)}\n→ {label}"})
    messages.append({"role": "user", "content": f"Flow:\n{render_flow(flow, cols)}\nLabel:"})
    return messages


def parse_verdict(raw_text: str) -> str | None:
    """Class named by the response, or None if zero or several classes match."""
    text = (raw_text or "").strip().casefold()
    for name in CLASS_NAMES:
        if text == name.casefold():
            return name
    hits = [name for name in CLASS_NAMES if name.casefold() in text]
    return hits[0] if len(hits) == 1 else None


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _rows(ds: LabeledDataset, index: np.ndarray, cols: Sequence[str]) -> list[dict]:
    missing = [c for c in cols if c not in ds.frame.columns]
    if missing:
        raise MissingColumn(f"dataset lacks column(s): {', '.join(missing)}")
    sub = ds.frame.iloc[index][list(cols)]
    return sub.to_dict(orient="records")


def sample_per_class(y: np.ndarray, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """``n`` distinct row indices for each class, in class-index order."""
    out = []
    for c in range(len(CLASS_NAMES)):
        idx = np.flatnonzero(y == c)
        if len(idx) < n:
            raise ValueError(f"class {CLASS_NAMES[c]} has {len(idx)} rows, {n} requested")
        out.append(np.sort(rng.choice(idx, size=n, replace=False)))
    return out


def select_exemplars(config: PromptConfig, train: LabeledDataset) -> list[tuple[dict, str]]:
    if config.mode != "few_shot":
        return []
    rng = np.random.default_rng([config.seed, 1])
    picks = sample_per_class(train.labels, config.shots_per_class, rng)
    pairs = []
    for c, idx in enumerate(picks):
        for row in _rows(train, idx, config.feature_columns):
            pairs.append((row, CLASS_NAMES[c]))
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


# ---------------------------------------------------------------------------
# transports
# ---------------------------------------------------------------------------

class Transport(Protocol):
    def complete(self, messages: list[dict], context: RequestContext) -> str: ...


class HttpTransport:
    """POST {base_url}/chat/completions with a bearer key from the environment."""

    def __init__(self, endpoint: LlmEndpoint):
        self.endpoint = endpoint
        self._key = os.environ.get(endpoint.api_key_source, "")

    def complete(self, messages, context):
        body = json.dumps({"model": self.endpoint.model_name, "messages": messages,
                           "temperature": 0}).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint.base_url.rstrip("/") + "/chat/completions", data=body,
            headers={"Content-Type": "application/json",
                     "Authorization": f"Bearer {self._key}"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.endpoint.timeout) as resp:
                doc = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code in (401, 403):
                raise AuthFailure(f"endpoint rejected credentials from "
                                  f"${self.endpoint.api_key_source} (HTTP {exc.code})") from None
            raise TransportError(f"HTTP {exc.code}") from None
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise TransportError(str(exc)) from None
        except json.JSONDecodeError as exc:
            raise TransportError(f"response is not JSON: {exc}") from None
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError("response lacks choices[0].message.content") from None


class MockTransport:
    """File-backed scripted transport.

    Script (JSON):
      {"mode": "echo"}                          answer the true label
      {"mode": "constant", "answer": "Backup"}
      {"mode": "by_label", "responses": {"Backup": ["Backup", "Email", ...], ...}}
          the j-th sampled row of a class gets that class's j-th response
      optional: "fail": {"<row_index>": n} fail the first n attempts of a row;
                "unreachable": true makes every call fail.
    """

    def __init__(self, script: dict):
        self.script = script
        self._fail = {int(k): int(v) for k, v in script.get("fail", {}).items()}

    @classmethod
    def from_file(cls, path) -> "MockTransport":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, messages, context):
        if self.script.get("unreachable"):
            raise TransportError("mock endpoint unreachable")
        if context.attempt < self._fail.get(context.row_index, 0):
            raise TransportError(f"injected failure for row {context.row_index}")
        mode = self.script.get("mode", "echo")
        if mode == "echo":
            return context.true_label
        if mode == "constant":
            return self.script["answer"]
        if mode == "by_label":
            seq = self.script["responses"][context.true_label]
            return seq[context.class_ordinal % len(seq)]
        raise ValueError(f"unknown mock mode {mode!r}")


def script_from_matrix(counts, labels: Sequence[str] = REPORT_LABEL_ORDER) -> dict:
    """A by_label script whose verdict multiset reproduces a confusion matrix."""
    responses = {}
    for i, true in enumerate(labels):
        seq = []
        for j, pred in enumerate(labels):
            seq.extend([pred] * int(counts[i][j]))
        responses[true] = seq
    return {"mode": "by_label", "responses": responses}


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class LlmEvalResult:
    report: EvalReport | None
    unparsed: dict
    verdicts: list
    config: PromptConfig
    endpoint: LlmEndpoint | None = None
    rows: list = field(default_factory=list)

    @property
    def unparsed_count(self) -> int:
        return sum(self.unparsed.values())

    def to_dict(self) -> dict:
        doc = {
            "config": {**self.config.__dict__, "feature_columns": list(self.config.feature_columns)},
            "unparsed": self.unparsed,
            "unparsed_count": self.unparsed_count,
            "verdicts": [{"row": r, "raw": v.raw_text, "parsed": v.parsed, "attempts": v.attempts}
                         for r, v in zip(self.rows, self.verdicts)],
        }
        if self.endpoint is not None:
            doc["endpoint"] = self.endpoint.to_dict()
        if self.report is not None:
            doc.update(self.report.to_dict())
        return doc

    def to_text(self, title: str | None = None) -> str:
        body = self.report.to_text(title) if self.report else "no parsed verdicts\n"
        return body + f"unparsed {self.unparsed_count}\n"


def _query(transport: Transport, messages: list[dict], ctx: RequestContext,
           endpoint: LlmEndpoint, sleep=time.sleep) -> LlmVerdict:
    t0 = time.perf_counter()
    attempts = 0

    def call(msgs):
        nonlocal attempts
        for attempt in range(endpoint.max_attempts):
            attempts += 1
            try:
                return transport.complete(msgs, RequestContext(
                    ctx.row_index, ctx.true_label, ctx.class_ordinal, attempts - 1))
            except TransportError as exc:
                if attempt + 1 == endpoint.max_attempts:
                    raise EndpointUnreachable(
                        f"{endpoint.base_url}: row {ctx.row_index} failed after "
                        f"{endpoint.max_attempts} attempts ({exc})") from None
                delay = endpoint.backoff_base * endpoint.backoff_factor ** attempt
                log.warning("row %d attempt %d failed (%s); retrying in %.1fs",
                            ctx.row_index, attempts, exc, delay)
                if delay > 0:
                    sleep(delay)

    raw = call(messages)
    parsed = parse_verdict(raw)
    if parsed is None:
        # one stricter retry before giving up
        strict = messages[:-1] + [{"role": "user",
                                   "content": messages[-1]["content"] + "\n" + STRICT_SUFFIX}]
        raw2 = call(strict)
        parsed = parse_verdict(raw2)
        if parsed is not None:
            raw = raw2
    return LlmVerdict(raw, parsed, time.perf_counter() - t0, attempts)


def evaluate_llm(config: PromptConfig, endpoint: LlmEndpoint, train: LabeledDataset | None,
                 test: LabeledDataset, transport: Transport | None = None) -> LlmEvalResult:
    """Sample ``per_class_samples`` test rows per class, query, and score.

    Unparsed verdicts are counted per class and left out of the confusion matrix.
    """
    if transport is None:
        transport = HttpTransport(endpoint)
    rng = np.random.default_rng(config.seed)
    per_class = sample_per_class(test.labels, config.per_class_samples, rng)
    exemplars = select_exemplars(config, train) if config.mode == "few_shot" else []
    jobs = []
    for c, idx in enumerate(per_class):
        for j, (row_idx, row) in enumerate(zip(idx, _rows(test, idx, config.feature_columns))):
            messages = build_prompt(config, exemplars, row)
            jobs.append((messages, RequestContext(int(row_idx), CLASS_NAMES[c], j)))
    verdicts = parallel.map_ordered(lambda job: _query(transport, job[0], job[1], endpoint),
                                    jobs, workers=endpoint.max_parallel)
    truths, preds = [], []
    unparsed = {name: 0 for name in REPORT_LABEL_ORDER}
    for (_, ctx), v in zip(jobs, verdicts):
        if v.parsed is None:
            unparsed[ctx.true_label] += 1
        else:
            truths.append(ctx.true_label)
            preds.append(v.parsed)
    report = metrics(confusion_matrix(truths, preds, REPORT_LABEL_ORDER)) if truths else None
    return LlmEvalResult(report, unparsed, verdicts, config, endpoint,
                         [ctx.row_index for _, ctx in jobs])
