from .fakes import InMemoryArtifactWriter
from .filesystem import FileArtifactWriter

__all__ = ["FileArtifactWriter", "InMemoryArtifactWriter"]
