"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so the CLI can map
them to a distinct exit code; malformed inputs derive from :class:`InputError`
(a ``ValueError``).
"""


class VolmfError(Exception):
    """Base class for every error raised by volmf."""


class InputError(VolmfError, ValueError):
    """Invalid user-supplied data or parameters."""


class NumericalError(VolmfError, ArithmeticError):
    """A numerical kernel could not produce a trustworthy result."""


class NotPositiveDefinite(NumericalError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class ZeroResidual(NumericalError):
    """SPA ran out of residual energy before selecting ``r`` columns."""


class ZeroRow(NumericalError):
    pass


class DimensionMismatch(InputError):
    pass


class ZeroDataNorm(InputError):
    pass


class EmptyComplement(InputError):
    pass


class DegenerateVector(InputError):
    pass


class NegativeInput(InputError):
    pass


class InvalidBounds(InputError):
    pass


class EmptyMask(InputError):
    pass


class DegenerateRow(InputError):
    pass


class UnknownFixture(InputError, KeyError):
    pass


class MaskResampleExhausted(VolmfError, RuntimeError):
    pass


class RaggedRows(InputError):
    pass


class UnparsableCell(InputError):
    def __init__(self, row, col, token):
        super().__init__(f"cannot parse cell ({row}, {col}): {token!r}")
        self.row = row
        self.col = col
        self.token = token


class AllMissing(InputError):
    pass


class ShapeMismatch(InputError):
    pass
