"""Bidirectional flow assembly and the flow CSV format."""
from __future__ import annotations

import csv
import io
import os
import socket
from dataclasses import dataclass, fields, replace
from typing import Iterable, Sequence

from .errors import CsvFieldError, CsvSchemaMismatch
from .pcap import ParsedPacket
from .schema import CLASS_INDEX, CLASS_NAMES, FLOW_COLUMNS, REAL_COLUMNS


@dataclass(frozen=True, order=True)
class FlowKey:
    endpoint_a: tuple[bytes, int]
    endpoint_b: tuple[bytes, int]
    proto: int

    @classmethod
    def of(cls, pkt: ParsedPacket) -> tuple["FlowKey", bool]:
        """Canonical key plus whether ``pkt`` travels a -> b."""
        src = (socket.inet_aton(pkt.src_ip), pkt.src_port)
        dst = (socket.inet_aton(pkt.dst_ip), pkt.dst_port)
        if src <= dst:
            return cls(src, dst, pkt.proto), True
        return cls(dst, src, pkt.proto), False


@dataclass(frozen=True)
class FlowRecord:
    flow_id: int
    flow_ip_src: str
    flow_ip_dst: str
    flow_srcport: int
    flow_dstport: int
    flow_proto: int
    num_packets: int
    total_length: int
    avg_packet_size: float
    min_time: float
    max_time: float
    tcp_window_size_avg: float
    total_payload: int
    forward_packets: int
    receiving_packets: int
    fragments: int
    flow_duration: float
    target: str | None = None

    def with_label(self, label: str | None) -> "FlowRecord":
        return replace(self, target=label)


class _Accumulator:
    __slots__ = ("first", "a_to_b", "n", "length", "payload", "fwd", "frags", "win_sum",
                 "win_n", "t_min", "t_max", "last")

    def __init__(self, pkt: ParsedPacket, a_to_b: bool):
        self.first = pkt
        self.a_to_b = a_to_b
        self.n = self.length = self.payload = self.fwd = self.frags = 0
        self.win_sum = self.win_n = 0
        self.t_min = self.t_max = self.last = pkt.timestamp

    def add(self, pkt: ParsedPacket, a_to_b: bool):
        self.n += 1
        self.length += pkt.ip_total_length
        self.payload += pkt.l4_payload_length
        if a_to_b == self.a_to_b:
            self.fwd += 1
        if pkt.is_fragment:
            self.frags += 1
        if pkt.tcp_window is not None:
            self.win_sum += pkt.tcp_window
            self.win_n += 1
        t = pkt.timestamp
        if t < self.t_min:
            self.t_min = t
        if t > self.t_max:
            self.t_max = t
        self.last = t

    def record(self, flow_id: int) -> FlowRecord:
        p = self.first
        return FlowRecord(
            flow_id=flow_id,
            flow_ip_src=p.src_ip,
            flow_ip_dst=p.dst_ip,
            flow_srcport=p.src_port,
            flow_dstport=p.dst_port,
            flow_proto=p.proto,
            num_packets=self.n,
            total_length=self.length,
            avg_packet_size=self.length / self.n,
            min_time=self.t_min,
            max_time=self.t_max,
            tcp_window_size_avg=self.win_sum / self.win_n if self.win_n else 0.0,
            total_payload=self.payload,
            forward_packets=self.fwd,
            receiving_packets=self.n - self.fwd,
            fragments=self.frags,
            flow_duration=self.t_max - self.t_min,
        )


def assemble_flows(packets: Iterable[ParsedPacket],
                   idle_timeout: float | None = None) -> list[FlowRecord]:
    """Group packets of one capture into bidirectional flows.

    The first packet of a flow fixes its orientation (src/dst, forward).
    Flows are numbered in first-seen order. With ``idle_timeout`` set, a gap
    longer than the timeout closes the flow and the next packet opens a new one.
    """
    active: dict[FlowKey, _Accumulator] = {}
    done: list[_Accumulator] = []
    for pkt in packets:
        key, a_to_b = FlowKey.of(pkt)
        acc = active.get(key)
        if acc is not None and idle_timeout is not None and pkt.timestamp - acc.last > idle_timeout:
            acc = None
        if acc is None:
            acc = _Accumulator(pkt, a_to_b)
            active[key] = acc
            done.append(acc)
        acc.add(pkt, a_to_b)
    return [acc.record(i) for i, acc in enumerate(done)]


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

HEADER_LINE = ",".join(FLOW_COLUMNS)
_FIELD_NAMES = [f.name for f in fields(FlowRecord) if f.name != "target"]


def _fmt(col: str, value) -> str:
    if col in REAL_COLUMNS:
        return f"{value:.6f}"
    return str(value)


def flow_row(flow: FlowRecord, label: str | None = None) -> list[str]:
    label = label if label is not None else flow.target
    row = [_fmt(name, getattr(flow, name)) for name in _FIELD_NAMES]
    if label is None:
        row += ["", ""]
    else:
        if label not in CLASS_INDEX:
            raise ValueError(f"unknown class label {label!r}; expected one of {CLASS_NAMES}")
        row += [label, str(CLASS_INDEX[label])]
    return row


def flows_to_csv(flows: Iterable[FlowRecord], label: str | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FLOW_COLUMNS)
    for f in flows:
        w.writerow(flow_row(f, label))
    return buf.getvalue()


def write_flows_csv(path: str | os.PathLike, flows: Iterable[FlowRecord],
                    label: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(flows_to_csv(flows, label))


def _parse_field(row_idx: int, col: str, text: str):
    try:
        if col in REAL_COLUMNS:
            return float(text)
        if col in ("flow_ip_src", "flow_ip_dst"):
            socket.inet_aton(text)
            if text.count(".") != 3:
                raise ValueError("not a dotted quad")
            return text
        value = int(text)
        if value < 0:
            raise ValueError("negative")
        return value
    except (ValueError, OSError) as exc:
        raise CsvFieldError(row_idx, col, f"cannot parse {text!r} ({exc})") from None


def csv_to_flows(stream: str | io.TextIOBase | Iterable[str], *, source: str = "<csv>"
                 ) -> list[FlowRecord]:
    """Parse a flow CSV. Unlabeled rows (empty Target) are accepted."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(header) != FLOW_COLUMNS:
        raise CsvSchemaMismatch(f"{source}: header does not match the flow schema "
                                f"(got {header!r})")
    out = []
    for i, row in enumerate(reader):
        if not row:
            continue
        if len(row) != len(FLOW_COLUMNS):
            raise CsvFieldError(i, "*", f"{source}: expected {len(FLOW_COLUMNS)} fields, "
                                        f"got {len(row)}")
        values = {name: _parse_field(i, name, text) for name, text in zip(_FIELD_NAMES, row)}
        label, numeric = row[-2], row[-1]
        if label == "" and numeric == "":
            target = None
        else:
            if label not in CLASS_INDEX:
                raise CsvFieldError(i, "Target", f"{source}: unknown class {label!r}")
            if numeric != str(CLASS_INDEX[label]):
                raise CsvFieldError(i, "Target as numeric",
                                    f"{source}: {numeric!r} does not match class {label!r}")
            target = label
        out.append(FlowRecord(**values, target=target))
    return out


def read_flows_csv(path: str | os.PathLike) -> list[FlowRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return csv_to_flows(fh, source=str(path))


def renumber(flows: Sequence[FlowRecord], start: int = 0) -> list[FlowRecord]:
    return [replace(f, flow_id=start + i) for i, f in enumerate(flows)]


def merge_flow_files(files: Sequence[str | os.PathLike]):
    """Concatenate flow CSVs into one dataset, renumbering flow_id globally."""
    from .dataset import LabeledDataset

    merged: list[FlowRecord] = []
    for path in files:
        merged.extend(read_flows_csv(path))
    return LabeledDataset.from_flows(renumber(merged))
