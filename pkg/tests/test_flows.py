import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from flowsift.errors import CsvFieldError, CsvSchemaMismatch
from flowsift.flows import (
    FlowRecord,
    assemble_flows,
    csv_to_flows,
    flows_to_csv,
    merge_flow_files,
    write_flows_csv,
)
from flowsift.pcap import PROTO_TCP, PROTO_UDP, ParsedPacket, decode_all
from flowsift.schema import FLOW_COLUMNS

from helpers import A, B, golden_records

HEADER = ("flow_id,flow_ip_src,flow_ip_dst,flow_srcport,flow_dstport,flow_proto,num_packets,"
          "total_length,avg_packet_size,min_time,max_time,tcp_window_size_avg,total_payload,"
          "forward_packets,receiving_packets,fragments,flow_duration,Target,Target as numeric")


def pkt(src, dst, sport, dport, *, proto=PROTO_TCP, length=60, payload=0, window=1000,
        t=0.0, frag=False):
    has_l4 = not (frag and sport == 0)
    return ParsedPacket(src, dst, sport, dport, proto, length, payload,
                        window if proto == PROTO_TCP and has_l4 else None, frag, has_l4, t)


def golden_flow() -> FlowRecord:
    (flow,) = assemble_flows(decode_all(golden_records()))
    return flow


class TestGolden:
    def test_fields(self):
        f = golden_flow()
        assert (f.flow_ip_src, f.flow_ip_dst, f.flow_srcport, f.flow_dstport) == (A, B, 1000, 80)
        assert f.flow_proto == PROTO_TCP
        assert f.num_packets == 3
        assert f.total_length == 1620
        assert f.avg_packet_size == 540.0
        assert f.tcp_window_size_avg == (64240 + 29200 + 64240) / 3 == 52560.0
        assert f.total_payload == 1448
        assert (f.forward_packets, f.receiving_packets) == (2, 1)
        assert f.fragments == 0
        assert f.flow_duration == pytest.approx(0.020, abs=1e-12)
        assert f.flow_id == 0

    def test_csv_row(self):
        text = flows_to_csv([golden_flow()], label="Web")
        lines = text.split("\n")
        assert lines[0] == HEADER
        assert lines[1] == (f"0,{A},{B},1000,80,6,3,1620,540.000000,0.000000,0.020000,"
                            "52560.000000,1448,2,1,0,0.020000,Web,3")
        assert lines[2] == "" and "\r" not in text

    def test_header_constant(self):
        assert ",".join(FLOW_COLUMNS) == HEADER


def test_empty():
    assert assemble_flows([]) == []


def test_single_udp():
    (f,) = assemble_flows([pkt(A, B, 53, 41000, proto=PROTO_UDP, length=80, payload=52,
                               t=10.0)])
    assert (f.num_packets, f.total_length, f.avg_packet_size, f.total_payload) == (1, 80, 80.0, 52)
    assert (f.forward_packets, f.receiving_packets) == (1, 0)
    assert f.tcp_window_size_avg == 0.0 and f.flow_duration == 0.0


def test_first_seen_numbering_and_orientation():
    ps = [pkt(B, A, 80, 1000, t=0), pkt("1.1.1.1", "2.2.2.2", 5, 6, t=1), pkt(A, B, 1000, 80, t=2)]
    f0, f1 = assemble_flows(ps)
    assert f0.flow_id == 0 and f0.flow_ip_src == B and f0.num_packets == 2
    assert (f0.forward_packets, f0.receiving_packets) == (1, 1)
    assert f1.flow_id == 1 and f1.flow_ip_src == "1.1.1.1"


def test_protocol_separates_flows():
    ps = [pkt(A, B, 5, 5, proto=PROTO_TCP), pkt(A, B, 5, 5, proto=PROTO_UDP)]
    assert len(assemble_flows(ps)) == 2


def test_non_first_fragments_aggregate_on_port_zero():
    ps = [pkt(A, B, 0, 0, frag=True, t=0.0), pkt(A, B, 0, 0, frag=True, t=0.1),
          pkt(A, B, 1000, 80, frag=True, t=0.2)]
    f0, f1 = assemble_flows(ps)
    assert (f0.flow_srcport, f0.num_packets, f0.fragments) == (0, 2, 2)
    assert f1.fragments == 1


def test_idle_timeout_splits():
    ps = [pkt(A, B, 1, 2, t=0.0), pkt(A, B, 1, 2, t=1.0), pkt(A, B, 1, 2, t=100.0)]
    assert len(assemble_flows(ps)) == 1
    assert [f.num_packets for f in assemble_flows(ps, idle_timeout=30.0)] == [2, 1]


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

HOSTS = ["10.0.0.1", "10.0.0.2", "10.0.0.3", "9.9.9.9"]


@st.composite
def packet_lists(draw):
    n = draw(st.integers(0, 40))
    out = []
    for i in range(n):
        s, d = draw(st.sampled_from([(a, b) for a in HOSTS for b in HOSTS if a != b]))
        proto = draw(st.sampled_from([PROTO_TCP, PROTO_UDP]))
        length = draw(st.integers(28, 1500))
        out.append(pkt(s, d, draw(st.sampled_from([80, 443, 1000])),
                       draw(st.sampled_from([80, 443, 1000])), proto=proto, length=length,
                       payload=draw(st.integers(0, length - 28)),
                       window=draw(st.integers(0, 65535)), t=i * 0.25 + draw(st.floats(0, 0.2)),
                       frag=draw(st.booleans())))
    return out


def flip(p: ParsedPacket) -> ParsedPacket:
    return dataclasses.replace(p, src_ip=p.dst_ip, dst_ip=p.src_ip, src_port=p.dst_port,
                               dst_port=p.src_port)


@settings(max_examples=150, deadline=None)
@given(packet_lists())
def test_record_invariants(ps):
    flows = assemble_flows(ps)
    assert sum(f.num_packets for f in flows) == len(ps)
    for f in flows:
        assert f.num_packets == f.forward_packets + f.receiving_packets >= 1
        assert f.avg_packet_size * f.num_packets == pytest.approx(f.total_length, rel=1e-15)
        assert f.flow_duration == f.max_time - f.min_time >= 0
        if f.num_packets == 1:
            assert f.flow_duration == 0
        assert f.total_payload <= f.total_length


INVARIANT = ("num_packets", "total_length", "avg_packet_size", "min_time", "max_time",
             "total_payload", "fragments", "flow_duration", "flow_proto")


def _by_key(flows):
    return sorted(tuple(getattr(f, k) for k in INVARIANT) for f in flows)


@settings(max_examples=100, deadline=None)
@given(packet_lists(), st.randoms(use_true_random=False))
def test_permutation_invariance(ps, rnd):
    shuffled = list(ps)
    rnd.shuffle(shuffled)
    assert _by_key(assemble_flows(ps)) == _by_key(assemble_flows(shuffled))


@settings(max_examples=100, deadline=None)
@given(packet_lists())
def test_reversal_swaps_directions(ps):
    a = assemble_flows(ps)
    b = assemble_flows([flip(p) for p in ps])
    assert len(a) == len(b)
    for fa, fb in zip(a, b):
        assert (fa.forward_packets, fa.receiving_packets) == (fb.forward_packets,
                                                              fb.receiving_packets)
        assert (fa.flow_ip_src, fa.flow_srcport) == (fb.flow_ip_dst, fb.flow_dstport)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def random_flows(n, seed=0):
    rnd = random.Random(seed)
    out = []
    for i in range(n):
        npk = rnd.randint(1, 500)
        length = rnd.randint(28 * npk, 1500 * npk)
        t0 = round(rnd.uniform(1.6e9, 1.7e9), 6)
        dur = round(rnd.uniform(0, 100), 6)
        fwd = rnd.randint(0, npk)
        out.append(FlowRecord(
            i, f"10.{rnd.randint(0, 255)}.{rnd.randint(0, 255)}.{rnd.randint(1, 254)}",
            f"172.16.{rnd.randint(0, 255)}.{rnd.randint(1, 254)}", rnd.randint(0, 65535),
            rnd.randint(0, 65535), rnd.choice([6, 17]), npk, length, round(length / npk, 6), t0,
            round(t0 + dur, 6), round(rnd.uniform(0, 65535), 6), rnd.randint(0, length), fwd,
            npk - fwd, rnd.randint(0, npk), dur, rnd.choice(["Backup", "Web", None])))
    return out


def test_roundtrip_1000():
    flows = random_flows(1000, seed=4)
    back = csv_to_flows(flows_to_csv(flows))
    assert back == flows


def test_reordered_header_rejected():
    text = flows_to_csv(random_flows(3))
    cols = HEADER.split(",")
    cols[1], cols[2] = cols[2], cols[1]
    with pytest.raises(CsvSchemaMismatch):
        csv_to_flows(",".join(cols) + text[len(HEADER):])


@pytest.mark.parametrize("col, bad", [("flow_srcport", "x"), ("flow_ip_src", "10.0.0"),
                                      ("avg_packet_size", "big"), ("num_packets", "-1")])
def test_field_errors_name_row_and_column(col, bad):
    lines = flows_to_csv(random_flows(3), "Email").split("\n")
    row = lines[2].split(",")
    row[FLOW_COLUMNS.index(col)] = bad
    lines[2] = ",".join(row)
    with pytest.raises(CsvFieldError) as exc:
        csv_to_flows("\n".join(lines))
    assert exc.value.row == 1 and exc.value.column == col


def test_label_mismatch_rejected():
    text = flows_to_csv(random_flows(1), "Email").replace(",Email,4", ",Email,3")
    with pytest.raises(CsvFieldError):
        csv_to_flows(text)


def test_unknown_label_on_write():
    with pytest.raises(ValueError):
        flows_to_csv(random_flows(1), "Video")


class TestMerge:
    def test_one_file_identity(self, tmp_path):
        flows = [dataclasses.replace(f, flow_id=10 + i, target="IPSec")
                 for i, f in enumerate(random_flows(20, seed=1))]
        p = tmp_path / "a.csv"
        write_flows_csv(p, flows)
        ds = merge_flow_files([p])
        assert len(ds) == 20
        assert list(ds.column("flow_id")) == list(range(20))
        assert list(ds.column("num_packets")) == [f.num_packets for f in flows]

    def test_different_headers(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_flows_csv(a, random_flows(2), "Web")
        b.write_text("flow_id,foo\n1,2\n")
        with pytest.raises(CsvSchemaMismatch):
            merge_flow_files([a, b])

    def test_renumbers_across_files(self, tmp_path):
        paths = []
        for i, label in enumerate(["Backup", "Email"]):
            p = tmp_path / f"{label}.csv"
            write_flows_csv(p, random_flows(5, seed=i), label)
            paths.append(p)
        ds = merge_flow_files(paths)
        assert list(ds.column("flow_id")) == list(range(10))
        assert list(ds.labels) == [0] * 5 + [4] * 5
