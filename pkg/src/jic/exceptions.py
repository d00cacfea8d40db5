"""Exception hierarchy shared by all jic modules."""


class JICError(Exception):
    """Base class for errors raised by jic."""


class DimensionError(JICError, ValueError):
    """Blocks or factors have incompatible shapes."""


class DegenerateInputError(JICError, ValueError):
    """Input carries no usable variation (zero matrix, constant sample)."""


class InputError(JICError, ValueError):
    """Input contains non-finite or otherwise malformed values."""


class RankError(JICError, ValueError):
    """A requested rank is infeasible for the data dimensions."""


class SizeError(JICError, ValueError):
    """An exhaustive computation was requested on a too-large instance."""


class InconsistentSelectionError(JICError):
    """Scanned subspace ranks give no valid cluster numbers.

    The raw ranks are kept on the exception so callers can report them.
    """

    def __init__(self, message, E, E_m):
        super().__init__(message)
        self.E = E
        self.E_m = list(E_m)
