"""Flow CSV column schema and the class label mapping."""

CLASS_NAMES = ("Backup", "IPSec", "Browsing", "Web", "Email")
CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}

# Order used by the confusion-matrix tables of LLM reports.
REPORT_LABEL_ORDER = ("Backup", "Browsing", "Email", "IPSec", "Web")

FLOW_COLUMNS = (
    "flow_id",
    "flow_ip_src",
    "flow_ip_dst",
    "flow_srcport",
    "flow_dstport",
    "flow_proto",
    "num_packets",
    "total_length",
    "avg_packet_size",
    "min_time",
    "max_time",
    "tcp_window_size_avg",
    "total_payload",
    "forward_packets",
    "receiving_packets",
    "fragments",
    "flow_duration",
    "Target",
    "Target as numeric",
)

LABEL_COLUMN = "Target"
LABEL_NUMERIC_COLUMN = "Target as numeric"

# identifier | categorical | numeric | label
COLUMN_KINDS = {
    "flow_id": "identifier",
    "flow_ip_src": "categorical",
    "flow_ip_dst": "categorical",
    "flow_srcport": "numeric",
    "flow_dstport": "numeric",
    "flow_proto": "categorical",
    "num_packets": "numeric",
    "total_length": "numeric",
    "avg_packet_size": "numeric",
    "min_time": "numeric",
    "max_time": "numeric",
    "tcp_window_size_avg": "numeric",
    "total_payload": "numeric",
    "forward_packets": "numeric",
    "receiving_packets": "numeric",
    "fragments": "numeric",
    "flow_duration": "numeric",
    "Target": "label",
    "Target as numeric": "label",
}

REAL_COLUMNS = frozenset(
    {"avg_packet_size", "min_time", "max_time", "tcp_window_size_avg", "flow_duration"})
IP_COLUMNS = ("flow_ip_src", "flow_ip_dst")
INT_COLUMNS = frozenset(
    c for c in FLOW_COLUMNS
    if c not in REAL_COLUMNS and c not in IP_COLUMNS and c != LABEL_COLUMN
)

# Short descriptions used in LLM prompts.
FEATURE_GLOSSARY = {
    "flow_id": "Identifier for the flow",
    "flow_ip_src": "Source IP address of the flow",
    "flow_ip_dst": "Destination IP address of the flow",
    "flow_srcport": "Source port of the flow",
    "flow_dstport": "Destination port of the flow",
    "flow_proto": "IP protocol number of the flow (6 = TCP, 17 = UDP)",
    "num_packets": "Number of packets in the flow",
    "total_length": "Sum of IP packet lengths in the flow, bytes",
    "avg_packet_size": "Average IP packet size in the flow, bytes",
    "min_time": "Timestamp of the first packet, seconds",
    "max_time": "Timestamp of the last packet, seconds",
    "tcp_window_size_avg": "Average TCP window size in the flow",
    "total_payload": "Sum of transport payload bytes in the flow",
    "forward_packets": "Packets sent in the direction of the first packet",
    "receiving_packets": "Packets sent in the opposite direction",
    "fragments": "Number of fragmented IP packets in the flow",
    "flow_duration": "Duration of the flow, seconds",
}


def class_index(name: str) -> int:
    from .errors import UnknownLabel

    try:
        return CLASS_INDEX[name]
    except KeyError:
        raise UnknownLabel(f"unknown class {name!r}; expected one of {', '.join(CLASS_NAMES)}")
