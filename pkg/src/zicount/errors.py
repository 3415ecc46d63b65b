"""Exception types shared across the package."""


class ZicountError(Exception):
    """Base class for all package errors."""


class DomainError(ZicountError, ValueError):
    """An argument lies outside the domain of a distribution or routine."""


class NonFiniteObjective(ZicountError, ArithmeticError):
    """The objective or its gradient could not be evaluated to a finite value."""


class SingularInformation(ZicountError, ArithmeticError):
    """An information (or cross-product) matrix is not positive definite.

    Usually means the model is not identified on the data or the fit did
    not reach an interior maximum.
    """


class UnreachableZeroRate(ZicountError, ValueError):
    """No zero-part slope reproduces the requested marginal zero rate."""

    def __init__(self, target, low, high, cell=None):
        self.target = target
        self.low = low
        self.high = high
        self.cell = cell
        where = f" (scenario {cell})" if cell else ""
        super().__init__(
            f"zero rate {target:g} is not reachable{where}; achievable interval is "
            f"[{low:.6f}, {high:.6f}]"
        )


class InputError(ZicountError, ValueError):
    """Malformed user input, e.g. a data file that cannot be parsed."""
