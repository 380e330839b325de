"""Exception hierarchy.

Every error carries enough context (file, row, column, flag) to be acted on.
The CLI maps the top-level families onto exit codes.
"""


class FlowsiftError(Exception):
    """Base class for all package errors."""


# -- data / format errors (CLI exit 2) ---------------------------------------

class DataError(FlowsiftError):
    pass


class PcapError(DataError):
    pass


class BadMagic(PcapError):
    pass


class PcapNgNotSupported(BadMagic):
    pass


class TruncatedHeader(PcapError):
    pass


class TruncatedRecord(PcapError):
    pass


class UnsupportedLinktype(PcapError):
    pass


class SnaplenExceeded(PcapError):
    pass


class MalformedPacket(PcapError):
    pass


class CsvSchemaMismatch(DataError):
    pass


class CsvFieldError(DataError):
    def __init__(self, row: int, column: str, message: str):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column


class EmptyDataset(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class UnknownColumn(DataError):
    pass


class MissingColumn(DataError):
    pass


class TooFewRows(DataError):
    pass


class LengthMismatch(DataError):
    pass


class UnknownLabel(DataError):
    pass


class EmptyMatrix(DataError):
    pass


# -- model errors (CLI exit 3) -----------------------------------------------

class ModelError(FlowsiftError):
    pass


class UnknownHyperparameter(ModelError):
    pass


class SingleClassTrain(ModelError):
    pass


class NegativeFeature(ModelError):
    pass


class NonFiniteLoss(ModelError):
    pass


class ArityMismatch(ModelError):
    pass


class CorruptModel(ModelError):
    pass


class UnknownVersion(ModelError):
    pass


# -- endpoint errors (CLI exit 4) --------------------------------------------

class EndpointError(FlowsiftError):
    pass


class EndpointUnreachable(EndpointError):
    pass


class AuthFailure(EndpointError):
    pass


class TransportError(EndpointError):
    """A single failed request; retried by the harness."""
