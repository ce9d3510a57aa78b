"""Exception types shared across the package."""


class CamisError(Exception):
    """Base class for all package-specific errors."""


class InstanceError(CamisError):
    """A configuration does not match the graph it is paired with."""


class SizeLimitError(CamisError):
    """An exact computation was requested beyond its size limit."""

    def __init__(self, n, limit, what):
        super().__init__(
            f"{what} refused for n={n}: exact limit is n<={limit} "
            f"(pass a higher limit explicitly to override)"
        )
        self.n = n
        self.limit = limit


class NumericalError(CamisError):
    """A linear solve or factorization failed."""


class IntegrationError(CamisError):
    """A propagation step violated its accuracy contract."""
