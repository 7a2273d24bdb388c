"""Exception hierarchy shared across the package."""


class MfgmixError(Exception):
    """Base class for every error raised by this package."""


# ---------------------------------------------------------------- validation

class NegativeEntryError(MfgmixError, ValueError):
    """A probability vector carries a negative entry."""


class MassMismatchError(MfgmixError, ValueError):
    """A probability vector does not sum to one within tolerance."""


# --------------------------------------------------------------- persistence

class FormatVersionMismatchError(MfgmixError, ValueError):
    """Model file carries an unknown format header."""


class DimensionMismatchError(MfgmixError, ValueError):
    """Model file content disagrees with its declared dimensions."""


class CorruptFileError(MfgmixError, ValueError):
    """Model file is structurally unreadable."""


# --------------------------------------------------------------------- solver

class ZeroProbabilityWithEntropyError(MfgmixError, ValueError):
    """A zero transition probability was fed to an entropy-weighted cost."""


class UnsupportedCostError(MfgmixError, ValueError):
    """Requested cost/penalization combination has no implemented minimizer."""


class NonconvergentRootFindError(MfgmixError, RuntimeError):
    """Scalar root bracketing or bisection exhausted its budget."""


class SingularSystemError(MfgmixError, RuntimeError):
    """Policy evaluation produced a singular linear system."""


class NonUniqueStationaryError(MfgmixError, RuntimeError):
    """Transition matrix admits more than one stationary distribution."""


class PositivityViolationError(MfgmixError, RuntimeError):
    """Entropy-regularized solve returned a non-positive stationary mass."""


class MaxIterationsExceededError(MfgmixError, RuntimeError):
    """Iteration budget exhausted; carries the best iterate found so far."""

    def __init__(self, message, best=None, diagnostic=None):
        super().__init__(message)
        self.best = best
        self.diagnostic = diagnostic


# -------------------------------------------------------------------- mixture

class AllComponentsVanishError(MfgmixError, ValueError):
    """Every mixture component assigns zero mass to some observed sample."""


class EmptyClusterError(MfgmixError, RuntimeError):
    """A component's responsibility mass fell below the floor."""

    def __init__(self, component, mass):
        super().__init__(f"component {component} holds responsibility mass {mass:.3g}")
        self.component = component
        self.mass = mass


class OutOfDomainError(MfgmixError, ValueError):
    """A transformed Bernoulli parameter left the open unit interval."""


class SubsystemError(MfgmixError, RuntimeError):
    """One (component, coordinate) subsystem solve failed."""

    def __init__(self, component, coordinate, cause):
        super().__init__(f"subsystem (k={component}, d={coordinate}) failed: {cause}")
        self.component = component
        self.coordinate = coordinate


# --------------------------------------------------------------------- ingest

class BadMagicError(MfgmixError, ValueError):
    """IDX stream starts with an unexpected magic number."""


class TruncatedFileError(MfgmixError, ValueError):
    """IDX payload length disagrees with the declared dimensions."""


class DimensionOverflowError(MfgmixError, ValueError):
    """IDX header declares dimensions too large to materialize."""


class UnknownLabelWarning(UserWarning):
    """A requested class label does not occur in the data."""


# --------------------------------------------------------------------- report

class EmptyClassError(MfgmixError, ValueError):
    """A class has no samples to average responsibilities over."""


class NotSquareError(MfgmixError, ValueError):
    """Coordinate count is not the square of the requested image side."""


class IoFailureError(MfgmixError, OSError):
    """Writing an export artifact failed."""
