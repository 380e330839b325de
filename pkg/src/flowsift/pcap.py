"""Classic libpcap reader/writer and Ethernet/IPv4/TCP/UDP decoding.

Reading is streaming: one record header plus one frame is held in memory
at a time. Only linktype 1 (Ethernet) is decoded; pcapng is rejected.
"""
from __future__ import annotations

import io
import os
import socket
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .errors import (
    BadMagic,
    MalformedPacket,
    PcapError,
    PcapNgNotSupported,
    SnaplenExceeded,
    TruncatedHeader,
    TruncatedRecord,
    UnsupportedLinktype,
)

LINKTYPE_ETHERNET = 1

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
DEFAULT_SNAPLEN = 262144

ETH_IPV4 = 0x0800
ETH_VLAN = 0x8100
ETH_QINQ = 0x88A8

PROTO_TCP = 6
PROTO_UDP = 17

_ENDIAN = {"little": "<", "big": ">"}
_FRAC_PER_SEC = {"us": 1_000_000, "ns": 1_000_000_000}


@dataclass(frozen=True)
class PcapFileHeader:
    magic: int
    version_major: int
    version_minor: int
    snaplen: int
    linktype: int
    resolution: str  # "us" | "ns"
    byte_order: str  # "little" | "big"
    thiszone: int = 0
    sigfigs: int = 0


@dataclass(frozen=True)
class PacketRecord:
    """One captured frame. ``timestamp_ns`` is integer nanoseconds since epoch."""

    timestamp_ns: int
    captured_len: int
    original_len: int
    frame_bytes: bytes

    def __post_init__(self):
        if self.captured_len != len(self.frame_bytes):
            raise ValueError(
                f"captured_len {self.captured_len} != len(frame_bytes) {len(self.frame_bytes)}"
            )

    @property
    def timestamp(self) -> float:
        return self.timestamp_ns / 1e9

    @classmethod
    def from_frame(cls, frame: bytes, timestamp_ns: int, original_len: int | None = None):
        return cls(timestamp_ns, len(frame), len(frame) if original_len is None else original_len,
                   bytes(frame))


@dataclass(frozen=True)
class ParsedPacket:
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: int
    ip_total_length: int
    l4_payload_length: int
    tcp_window: int | None
    is_fragment: bool
    has_l4_header: bool
    timestamp: float


@dataclass(frozen=True)
class Skipped:
    reason: str


@dataclass
class DecodeStats:
    decoded: int = 0
    malformed: int = 0
    skipped: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        return {"decoded": self.decoded, "malformed": self.malformed,
                "skipped": dict(sorted(self.skipped.items()))}


# ---------------------------------------------------------------------------
# reading
# ---------------------------------------------------------------------------

def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def parse_global_header(raw: bytes) -> PcapFileHeader:
    if len(raw) < GLOBAL_HEADER_LEN:
        raise TruncatedHeader(f"pcap global header needs 24 bytes, got {len(raw)}")
    (magic_le,) = struct.unpack("<I", raw[:4])
    if magic_le == PCAPNG_MAGIC:
        raise PcapNgNotSupported("pcapng format is not supported; convert to classic pcap")
    if magic_le in (MAGIC_US, MAGIC_NS):
        order = "little"
    else:
        (magic_be,) = struct.unpack(">I", raw[:4])
        if magic_be not in (MAGIC_US, MAGIC_NS):
            raise BadMagic(f"bad pcap magic 0x{magic_le:08x}")
        order = "big"
    e = _ENDIAN[order]
    magic, vmaj, vmin, thiszone, sigfigs, snaplen, linktype = struct.unpack(
        e + "IHHiIII", raw[:GLOBAL_HEADER_LEN])
    if (vmaj, vmin) != (2, 4):
        raise PcapError(f"unsupported pcap version {vmaj}.{vmin}")
    return PcapFileHeader(
        magic=magic, version_major=vmaj, version_minor=vmin, snaplen=snaplen,
        linktype=linktype, resolution="ns" if magic == MAGIC_NS else "us",
        byte_order=order, thiszone=thiszone, sigfigs=sigfigs,
    )


class PcapReader:
    """Iterate over the records of a classic pcap stream.

    The global header is validated on construction; records are read lazily.
    """

    def __init__(self, stream: BinaryIO, *, require_ethernet: bool = True):
        self._stream = stream
        self.header = parse_global_header(_read_exact(stream, GLOBAL_HEADER_LEN))
        if require_ethernet and self.header.linktype != LINKTYPE_ETHERNET:
            raise UnsupportedLinktype(
                f"linktype {self.header.linktype} not supported (only 1, Ethernet)")
        self._rec = struct.Struct(_ENDIAN[self.header.byte_order] + "IIII")
        self._scale = 1_000_000_000 // _FRAC_PER_SEC[self.header.resolution]
        self.count = 0

    def __iter__(self) -> Iterator[PacketRecord]:
        snaplen = self.header.snaplen
        while True:
            raw = _read_exact(self._stream, RECORD_HEADER_LEN)
            if not raw:
                return
            if len(raw) < RECORD_HEADER_LEN:
                raise TruncatedRecord(
                    f"record {self.count}: header has {len(raw)} of 16 bytes")
            ts_sec, ts_frac, incl_len, orig_len = self._rec.unpack(raw)
            if snaplen and incl_len > snaplen:
                raise SnaplenExceeded(
                    f"record {self.count}: incl_len {incl_len} > snaplen {snaplen}")
            frame = _read_exact(self._stream, incl_len)
            if len(frame) < incl_len:
                raise TruncatedRecord(
                    f"record {self.count}: promises {incl_len} bytes, {len(frame)} remain")
            self.count += 1
            yield PacketRecord(ts_sec * 1_000_000_000 + ts_frac * self._scale,
                               incl_len, orig_len, frame)


def parse_pcap(stream: BinaryIO | bytes, *, require_ethernet: bool = True) -> PcapReader:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = io.BytesIO(bytes(stream))
    return PcapReader(stream, require_ethernet=require_ethernet)


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------

def write_pcap(packets: Iterable[PacketRecord], resolution: str = "us",
               byte_order: str = "little", *, snaplen: int = DEFAULT_SNAPLEN,
               linktype: int = LINKTYPE_ETHERNET, out: BinaryIO | None = None) -> bytes | None:
    """Serialize records as classic pcap.

    Timestamps are floored to ``resolution``. Returns the bytes, or writes to
    ``out`` and returns None.
    """
    if resolution not in _FRAC_PER_SEC:
        raise ValueError(f"resolution must be 'us' or 'ns', not {resolution!r}")
    e = _ENDIAN[byte_order]
    sink = out if out is not None else io.BytesIO()
    magic = MAGIC_NS if resolution == "ns" else MAGIC_US
    sink.write(struct.pack(e + "IHHiIII", magic, 2, 4, 0, 0, snaplen, linktype))
    rec = struct.Struct(e + "IIII")
    scale = 1_000_000_000 // _FRAC_PER_SEC[resolution]
    for i, p in enumerate(packets):
        if p.captured_len > snaplen:
            raise SnaplenExceeded(f"packet {i}: captured_len {p.captured_len} > snaplen {snaplen}")
        sec, rem = divmod(p.timestamp_ns, 1_000_000_000)
        sink.write(rec.pack(sec, rem // scale, p.captured_len, p.original_len))
        sink.write(p.frame_bytes)
    if out is None:
        return sink.getvalue()
    return None


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

_inet_ntoa = socket.inet_ntoa


def decode_packet(rec: PacketRecord, linktype: int = LINKTYPE_ETHERNET) -> ParsedPacket | Skipped:
    """Decode one Ethernet frame down to the IPv4 / L4 view.

    Returns ``Skipped`` for traffic outside the feature schema and raises
    ``MalformedPacket`` for inconsistent headers. Never raises anything else.
    """
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinktype(f"linktype {linktype} not supported")
    buf = rec.frame_bytes
    n = len(buf)
    if n < 14:
        raise MalformedPacket(f"ethernet frame too short ({n} bytes)")
    ethertype = (buf[12] << 8) | buf[13]
    off = 14
    if ethertype == ETH_VLAN:
        if n < 18:
            raise MalformedPacket("VLAN tag truncated")
        ethertype = (buf[16] << 8) | buf[17]
        off = 18
        if ethertype in (ETH_VLAN, ETH_QINQ):
            return Skipped("qinq")
    elif ethertype == ETH_QINQ:
        return Skipped("qinq")
    if ethertype != ETH_IPV4:
        return Skipped("ipv6" if ethertype == 0x86DD else "arp" if ethertype == 0x0806
                       else "non_ipv4")

    if n < off + 20:
        raise MalformedPacket("IPv4 header extends past captured bytes")
    vihl = buf[off]
    if vihl >> 4 != 4:
        raise MalformedPacket(f"IP version {vihl >> 4} under ethertype 0x0800")
    ihl = vihl & 0x0F
    if ihl < 5:
        raise MalformedPacket(f"IHL {ihl} < 5")
    ip_hlen = 4 * ihl
    if n < off + ip_hlen:
        raise MalformedPacket("IPv4 options extend past captured bytes")
    total_length = (buf[off + 2] << 8) | buf[off + 3]
    if total_length < ip_hlen:
        raise MalformedPacket(f"IP total length {total_length} < header length {ip_hlen}")
    flags_frag = (buf[off + 6] << 8) | buf[off + 7]
    more_fragments = bool(flags_frag & 0x2000)
    frag_offset = flags_frag & 0x1FFF
    proto = buf[off + 9]
    src = _inet_ntoa(buf[off + 12:off + 16])
    dst = _inet_ntoa(buf[off + 16:off + 20])
    ts = rec.timestamp
    is_fragment = more_fragments or frag_offset > 0
    ip_payload = total_length - ip_hlen

    if frag_offset > 0 or proto not in (PROTO_TCP, PROTO_UDP):
        return ParsedPacket(src, dst, 0, 0, proto, total_length, ip_payload, None,
                            is_fragment, False, ts)

    l4 = off + ip_hlen
    if proto == PROTO_TCP:
        if n < l4 + 20:
            raise MalformedPacket("TCP header extends past captured bytes")
        data_offset = buf[l4 + 12] >> 4
        if data_offset < 5:
            raise MalformedPacket(f"TCP data offset {data_offset} < 5")
        l4_hlen = 4 * data_offset
        window = (buf[l4 + 14] << 8) | buf[l4 + 15]
    else:
        if n < l4 + 8:
            raise MalformedPacket("UDP header extends past captured bytes")
        l4_hlen = 8
        window = None
    payload = ip_payload - l4_hlen
    if payload < 0:
        raise MalformedPacket(f"IP total length {total_length} too small for L4 header")
    sport = (buf[l4] << 8) | buf[l4 + 1]
    dport = (buf[l4 + 2] << 8) | buf[l4 + 3]
    return ParsedPacket(src, dst, sport, dport, proto, total_length, payload, window,
                        is_fragment, True, ts)


def decode_all(records: Iterable[PacketRecord], linktype: int = LINKTYPE_ETHERNET,
               stats: DecodeStats | None = None) -> Iterator[ParsedPacket]:
    """Decode records, counting skips and malformed frames instead of failing."""
    stats = stats if stats is not None else DecodeStats()
    for rec in records:
        try:
            out = decode_packet(rec, linktype)
        except MalformedPacket:
            stats.malformed += 1
            continue
        if isinstance(out, Skipped):
            stats.skipped[out.reason] += 1
        else:
            stats.decoded += 1
            yield out


def read_packets(path: str | os.PathLike, stats: DecodeStats | None = None) -> list[ParsedPacket]:
    with open(path, "rb") as fh:
        reader = parse_pcap(fh)
        return list(decode_all(reader, reader.header.linktype, stats))


# ---------------------------------------------------------------------------
# frame construction (fixtures, synthetic captures)
# ---------------------------------------------------------------------------

def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    s = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def build_frame(src_ip: str, dst_ip: str, src_port: int = 0, dst_port: int = 0, *,
                proto: int = PROTO_TCP, payload: bytes | int = b"", window: int = 65535,
                tcp_flags: int = 0x18, tcp_options: bytes = b"", ident: int = 0,
                frag_offset: int = 0,
                more_fragments: bool = False, vlan: int | None = None, ttl: int = 64,
                src_mac: bytes = b"\x02\x00\x00\x00\x00\x01",
                dst_mac: bytes = b"\x02\x00\x00\x00\x00\x02") -> bytes:
    """Build an Ethernet/IPv4 frame carrying TCP, UDP or an opaque payload."""
    if isinstance(payload, int):
        payload = bytes(payload)
    if frag_offset > 0 or proto not in (PROTO_TCP, PROTO_UDP):
        l4 = payload
    elif proto == PROTO_TCP:
        if len(tcp_options) % 4 or len(tcp_options) > 40:
            raise ValueError("TCP options must be a multiple of 4 bytes, at most 40")
        doff = 5 + len(tcp_options) // 4
        l4 = struct.pack("!HHIIBBHHH", src_port, dst_port, 0, 0, doff << 4, tcp_flags,
                         window, 0, 0) + tcp_options + payload
    else:
        l4 = struct.pack("!HHHH", src_port, dst_port, 8 + len(payload), 0) + payload
    flags_frag = (0x2000 if more_fragments else 0) | (frag_offset & 0x1FFF)
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(l4), ident, flags_frag, ttl, proto,
                     0, socket.inet_aton(src_ip), socket.inet_aton(dst_ip))
    ip = ip[:10] + struct.pack("!H", _checksum(ip)) + ip[12:]
    eth = dst_mac + src_mac
    if vlan is not None:
        eth += struct.pack("!HH", ETH_VLAN, vlan & 0x0FFF)
    eth += struct.pack("!H", ETH_IPV4)
    return eth + ip + l4
