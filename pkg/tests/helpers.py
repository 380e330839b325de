"""Shared fixture builders for the test suite."""
from __future__ import annotations

import numpy as np

from flowsift.pcap import PROTO_TCP, PROTO_UDP, PacketRecord, build_frame

A, B = "192.168.1.10", "10.1.2.3"

# Gemini / GPT-4o confusion tables; rows = true label, columns = predicted,
# both in the order Backup, Browsing, Email, IPSec, Web.
GEMINI_ZERO_SHOT = [[19, 12, 36, 0, 3],
            [1, 37, 13, 0, 19],
            [3, 5, 54, 0, 8],
            [19, 6, 0, 27, 18],
            [7, 10, 44, 2, 7]]
GPT4O_ZERO_SHOT = [[66, 16, 0, 0, 18],
           [40, 0, 0, 0, 60],
           [1, 20, 0, 0, 79],
           [44, 24, 0, 0, 32],
           [1, 7, 1, 0, 91]]
GEMINI_FEW_SHOT = [[67, 10, 3, 13, 7],
            [14, 73, 4, 9, 0],
            [8, 14, 66, 1, 11],
            [17, 1, 9, 61, 12],
            [1, 5, 3, 9, 82]]
# Backup/Web cell is blank in the source; rows sum to 100, so it is 0.
GPT4O_FEW_SHOT = [[69, 1, 13, 17, None],
             [7, 69, 19, 0, 5],
             [0, 0, 100, 0, 0],
             [0, 43, 2, 43, 12],
             [0, 5, 69, 0, 26]]
CLASS_COUNTS = {"Backup": 6444, "IPSec": 6349, "Browsing": 6135, "Web": 6016, "Email": 6015}
CLASS_PCT = {"Backup": 20.82, "IPSec": 20.51, "Browsing": 19.82, "Web": 19.43, "Email": 19.43}


def fill_blank_by_row_sum(table, row_total=100):
    out = []
    for row in table:
        known = sum(v for v in row if v is not None)
        out.append([row_total - known if v is None else v for v in row])
    return out


# SYN-style option block (MSS, SACK-permitted, timestamps, NOP, window scale): 20 bytes
SYN_OPTIONS = bytes.fromhex("020405b4" "0402" "080a0000000100000000" "01" "030307")
# NOP, NOP, timestamps: 12 bytes
TS_OPTIONS = bytes.fromhex("0101" "080a0000000200000001")


def golden_records() -> list[PacketRecord]:
    """A:1000 -> B:80, B -> A, A -> B carrying 1448 bytes; IP lengths 60, 60, 1500."""
    p1 = build_frame(A, B, 1000, 80, window=64240, tcp_flags=0x02, tcp_options=SYN_OPTIONS)
    p2 = build_frame(B, A, 80, 1000, window=29200, tcp_flags=0x12, tcp_options=SYN_OPTIONS)
    p3 = build_frame(A, B, 1000, 80, window=64240, tcp_options=TS_OPTIONS, payload=1448)
    t0 = 0
    return [PacketRecord.from_frame(p1, t0),
            PacketRecord.from_frame(p2, t0 + 10_000_000),
            PacketRecord.from_frame(p3, t0 + 20_000_000)]


def random_records(n: int, seed: int = 0, *, n_hosts: int = 12) -> list[PacketRecord]:
    """A mixed TCP/UDP corpus among a small host pool, strictly increasing timestamps."""
    rng = np.random.default_rng(seed)
    hosts = [f"10.0.{i // 250}.{i % 250 + 1}" for i in range(n_hosts)]
    t = 1_600_000_000 * 10**9
    out = []
    for _ in range(n):
        s, d = rng.choice(n_hosts, size=2, replace=False)
        proto = PROTO_TCP if rng.random() < 0.7 else PROTO_UDP
        frame = build_frame(hosts[s], hosts[d], int(rng.integers(1024, 1100)),
                            int(rng.choice([80, 443, 53, 22])), proto=proto,
                            payload=int(rng.integers(0, 600)),
                            window=int(rng.integers(0, 65536)))
        t += int(rng.integers(1, 5_000_000))
        out.append(PacketRecord.from_frame(frame, t))
    return out
