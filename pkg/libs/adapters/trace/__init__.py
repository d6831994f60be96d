from .csv_sink import CsvTracePort
from .fakes import FakeTracePort, NullTracePort

__all__ = ["CsvTracePort", "FakeTracePort", "NullTracePort"]
