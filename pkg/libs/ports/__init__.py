from .artifacts import ArtifactWriterPort
from .trace import ConvergenceTracePort, TraceRecord

__all__ = [
    "ArtifactWriterPort",
    "ConvergenceTracePort",
    "TraceRecord",
]
