"""Error types shared by all modules.  Each carries a JSON-able payload."""


class ConeStokesError(Exception):
    kind = "error"
    exit_code = 3

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        return {"error": self.kind, "message": self.message,
                "details": {k: _plain(v) for k, v in self.details.items()}}


def _plain(v):
    try:
        import numpy as np
        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
    except ImportError:
        pass
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


class DomainError(ConeStokesError, ValueError):
    """Input outside the domain of an operation (validation failure)."""
    kind = "domain"
    exit_code = 2


class DataError(ConeStokesError, ValueError):
    kind = "data"
    exit_code = 2


class NumericError(ConeStokesError, RuntimeError):
    """Integrator, root finder or linear solve failed."""
    kind = "numeric"
    exit_code = 3


class ResonanceError(NumericError):
    kind = "unresolved-resonance"
