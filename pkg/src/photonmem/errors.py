"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 3, NumericsError and
its subclasses -> 4. Invalid argument values raise plain ValueError
(usage-level mistakes, exit code 2 in the CLI).
"""


class PhotonMemError(Exception):
    """Base class for package-specific errors."""


class DataError(PhotonMemError):
    """Malformed, missing or inconsistent input data (files, datasets)."""


class NumericsError(PhotonMemError):
    """A numerical procedure failed on otherwise valid inputs."""


class EstimationError(NumericsError):
    """An estimator cannot be evaluated on the given dataset."""


class FitError(NumericsError):
    """A fit failed to converge or the problem is degenerate."""


class UnidentifiableFitError(FitError):
    """The data do not constrain the requested parameters."""


class NoCrossingError(FitError):
    """A fitted curve never crosses the requested threshold."""
