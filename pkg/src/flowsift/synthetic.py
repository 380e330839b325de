"""Synthetic flow datasets in the 19-column flow schema.

Each class draws (num_packets, avg_packet_size, tcp_window_size_avg,
flow_duration) from independent log-normals with a shared log-sd of
``LOG_SD``. Class centres ``CLASS_LOG_CENTRES`` are pulled towards their
common mean by ``separation``; at ``separation=1`` every pair of classes is
at least 4 log-sd apart in some coordinate (checked by
``min_pairwise_gap``), so the generating recipe has a Bayes error well
under 1%.

Ports follow class-typical services; a class-dependent fraction of flows is
observed server-first, so the source port carries the service port there.
``fragments`` is always 0.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .dataset import LabeledDataset
from .schema import CLASS_NAMES

LOG_SD = 0.35

# ln(num_packets), ln(avg_packet_size), ln(tcp_window), ln(duration seconds)
CLASS_LOG_CENTRES = np.array([
    [6.0, 7.05, 11.0, 5.0],    # Backup: long, bulk transfers
    [3.5, 5.0, np.nan, 2.5],   # IPSec: UDP 500/4500, no TCP window
    [2.5, 6.4, 10.3, 0.5],     # Browsing
    [4.0, 6.9, 9.0, -1.0],     # Web
    [2.0, 5.5, 9.7, 2.2],      # Email
])

SERVICE_PORTS = (
    (22, 873),      # Backup: ssh/rsync
    (500, 4500),    # IPSec: IKE / NAT-T
    (443, 80),      # Browsing
    (443, 80),      # Web
    (25, 465),      # Email
)
SERVER_FIRST_FRACTION = (0.30, 0.50, 0.05, 0.20, 0.10)
PROTOS = (6, 17, 6, 6, 6)

EPOCH_START = 1_700_000_000.0
TCP_HEADERS = 40
UDP_HEADERS = 28


def class_centres(separation: float = 1.0) -> np.ndarray:
    base = CLASS_LOG_CENTRES
    mean = np.nanmean(base, axis=0)
    return mean + separation * (base - mean)


def min_pairwise_gap(separation: float = 1.0) -> float:
    """Smallest, over class pairs, of the largest per-coordinate gap in log-sd units."""
    c = class_centres(separation)
    worst = np.inf
    for a in range(len(c)):
        for b in range(a + 1, len(c)):
            gaps = np.abs(c[a] - c[b])
            gaps = gaps[~np.isnan(gaps)]
            worst = min(worst, gaps.max() / LOG_SD)
    return float(worst)


def _counts(n_per_class: int | Sequence[int]) -> list[int]:
    if np.isscalar(n_per_class):
        return [int(n_per_class)] * len(CLASS_NAMES)
    counts = [int(n) for n in n_per_class]
    if len(counts) != len(CLASS_NAMES):
        raise ValueError(f"need {len(CLASS_NAMES)} per-class counts, got {len(counts)}")
    return counts


def _random_ips(rng: np.random.Generator, n: int, prefix: int, bits: int) -> list[str]:
    values = prefix | rng.integers(1, 1 << bits, size=n)
    return [f"{v >> 24 & 255}.{v >> 16 & 255}.{v >> 8 & 255}.{v & 255}" for v in values]


def _assemble(rng, y, ln_np, ln_avg, ln_win, ln_dur, proto, service, server_first):
    n = len(y)
    num_packets = np.maximum(1, np.rint(np.exp(ln_np))).astype(np.int64)
    avg = np.clip(np.exp(ln_avg), 60.0, 1500.0)
    total_length = np.rint(num_packets * avg).astype(np.int64)
    headers = np.where(proto == 17, UDP_HEADERS, TCP_HEADERS)
    total_payload = np.maximum(0, total_length - num_packets * headers)
    window = np.where(proto == 6, np.minimum(65535.0, np.exp(ln_win)), 0.0)
    window = np.round(window, 6)
    duration = np.where(num_packets > 1, np.round(np.exp(ln_dur), 6), 0.0)
    min_time = np.round(EPOCH_START + rng.uniform(0, 86400.0, size=n), 6)
    max_time = np.round(min_time + duration, 6)
    forward = 1 + rng.binomial(num_packets - 1, 0.55)
    ephemeral = rng.integers(1024, 65536, size=n)
    srcport = np.where(server_first, service, ephemeral)
    dstport = np.where(server_first, ephemeral, service)
    src = _random_ips(rng, n, 10 << 24, 24)
    dst = _random_ips(rng, n, (172 << 24) | (16 << 16), 20)
    return LabeledDataset.from_columns({
        "flow_id": np.arange(n),
        "flow_ip_src": src,
        "flow_ip_dst": dst,
        "flow_srcport": srcport,
        "flow_dstport": dstport,
        "flow_proto": proto,
        "num_packets": num_packets,
        "total_length": total_length,
        "avg_packet_size": total_length / num_packets,
        "min_time": min_time,
        "max_time": max_time,
        "tcp_window_size_avg": window,
        "total_payload": total_payload,
        "forward_packets": forward,
        "receiving_packets": num_packets - forward,
        "fragments": np.zeros(n, dtype=np.int64),
        "flow_duration": duration,
        "Target": [CLASS_NAMES[c] for c in y],
        "Target as numeric": y,
    })


def generate_synthetic(n_per_class: int | Sequence[int], seed: int = 0,
                       separation: float = 1.0, *, xor: bool = False) -> LabeledDataset:
    """Draw a labeled dataset; ``n_per_class`` may be one count or five.

    With ``xor=True`` all class information sits in a 5x5 checkerboard over
    (ln num_packets, ln avg_packet_size): class = (row + col) mod 5, so every
    single-feature class-conditional marginal is the same for all classes.
    """
    if separation <= 0:
        raise ValueError("separation must be > 0")
    counts = _counts(n_per_class)
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(len(CLASS_NAMES)), counts)
    y = y[rng.permutation(len(y))]
    n = len(y)
    pick = rng.integers(0, 2, size=n)

    if xor:
        row = rng.integers(0, 5, size=n)
        col = (y - row) % 5
        ln_np = 2.0 + 0.6 * (row + rng.uniform(0.1, 0.9, size=n))
        ln_avg = 4.5 + 0.5 * (col + rng.uniform(0.1, 0.9, size=n))
        ln_win = rng.normal(10.0, LOG_SD, size=n)
        ln_dur = rng.normal(1.0, LOG_SD, size=n)
        proto = np.full(n, 6, dtype=np.int64)
        service = np.where(pick == 0, 443, 80)
        server_first = rng.uniform(size=n) < 0.1
        return _assemble(rng, y, ln_np, ln_avg, ln_win, ln_dur, proto, service, server_first)

    centres = class_centres(separation)
    z = rng.normal(0.0, LOG_SD, size=(n, 4))
    ln = np.nan_to_num(centres[y], nan=0.0) + z
    proto = np.asarray(PROTOS, dtype=np.int64)[y]
    ports = np.asarray(SERVICE_PORTS)
    service = ports[y, pick]
    server_first = rng.uniform(size=n) < np.asarray(SERVER_FIRST_FRACTION)[y]
    return _assemble(rng, y, ln[:, 0], ln[:, 1], ln[:, 2], ln[:, 3], proto, service,
                     server_first)


def pathology_fixture(n_per_class: int = 300, seed: int = 0,
                      equal_fraction: float = 0.96) -> LabeledDataset:
    """Synthetic data carrying the pathologies that trigger every pruning rule.

    * ``fragments`` constant,
    * ``flow_proto`` split TCP/UDP in exactly the same proportion in every class,
    * ``total_payload == total_length`` on exactly ``equal_fraction`` of rows.
    """
    ds = generate_synthetic(n_per_class, seed)
    rng = np.random.default_rng([seed, 1])
    y = ds.labels
    n = len(ds)
    proto = np.empty(n, dtype=np.int64)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        half = len(idx) // 2
        proto[idx[:half]] = 6
        proto[idx[half:]] = 17
    length = ds.column("total_length").astype(np.int64)
    npk = ds.column("num_packets").astype(np.int64)
    payload = np.maximum(0, length - TCP_HEADERS * npk)
    n_equal = int(round(equal_fraction * n))
    equal_rows = rng.permutation(n)[:n_equal]
    payload[equal_rows] = length[equal_rows]
    return ds.with_column("flow_proto", proto).with_column("total_payload", payload)
