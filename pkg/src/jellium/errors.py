"""Exception types shared across the package."""


class JelliumError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(JelliumError):
    """Bad experiment configuration (unknown key, wrong type, missing field)."""


class EmptyErosion(JelliumError):
    """Eroding an interval by ceil(L^{7/8}) on both sides left nothing."""


class SingularPoint(JelliumError):
    """Kernel evaluated exactly at its singularity."""


class GridTooCoarse(JelliumError):
    """Grid spacing too large to resolve the smearing radius."""


class NotNeutral(JelliumError):
    """Operation requires a charge-neutral configuration / density."""


class SolverDiverged(JelliumError):
    """Iterative Poisson solve failed to reach the requested residual."""


class InfeasibleNeutrality(JelliumError):
    """No collar extension can restore neutrality (window overfull)."""


class NoGoodBoundary(JelliumError):
    """No scanned abscissa passed the tameness and field-average tests."""


class NeutralityBroken(JelliumError):
    """Assembled screened configuration does not have exactly |domain| bridges."""


class CellNotNeutral(JelliumError):
    """A per-cell solve was requested on a cell whose total charge is not zero."""


class BadPartition(JelliumError):
    """Block average requested with N != m * R."""


class OutOfRange(JelliumError):
    """Abscissa outside the admissible interval."""
