"""Exception hierarchy shared by all hheat modules."""


class HHeatError(Exception):
    """Base class for all hheat errors."""


class ParameterOutOfRange(HHeatError):
    """Geodesic parameter outside the maximal interval (-2pi/|lam|, 2pi/|lam|)."""


class ConvergenceFailure(HHeatError):
    """A root finder failed after its retry ladder; signals a bug or extreme input."""


class DegenerateGradient(HHeatError):
    """|grad F| too small to define a normal at the queried point."""


class CharacteristicPoint(HHeatError):
    """Horizontal normal vanishes (nh_norm <= char_tol); operation undefined."""


class CharacteristicDomain(HHeatError):
    """Characteristic scan found flagged boundary nodes; domain fails the standing assumption."""


class OutOfChart(HHeatError):
    """Chart coordinates (or their preimage) leave the certified invertibility box."""


class NoRoot(HHeatError):
    """Boundary-graph root finder found no sign change in its bracket ladder."""


class MultipleRoots(HHeatError):
    """Boundary-graph root finder found more than one crossing in the bracket."""


class StepTooLarge(HHeatError):
    """Surface projection failed to converge after an integration step."""


class ReachExceeded(HHeatError):
    """Tube parametrization queried beyond the (probed) reach of the boundary."""


class IllConditioned(HHeatError):
    """Weighted least squares design matrix condition number exceeds the guard."""


class ConfigError(HHeatError):
    """Malformed run configuration or CSV schema violation."""
