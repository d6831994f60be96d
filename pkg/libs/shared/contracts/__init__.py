from .v1 import reports as reports

__all__ = ["reports"]
