"""Exception hierarchy for the solver.

Every failure mode that a caller may want to branch on gets its own class;
all of them derive from EPNozzleError so batch drivers can catch one type.
"""


class EPNozzleError(Exception):
    """Base class for all solver errors."""


class NonPositiveEnthalpy(EPNozzleError):
    """Bernoulli density closure received a non-positive enthalpy argument
    (vacuum, or the subsonic ansatz broke down)."""


class OutOfDomain(EPNozzleError):
    """A coordinate fell outside the nozzle domain."""


class SonicDegenerate(EPNozzleError):
    """Mach-squared is too close to 1 for the ODE right-hand side."""


class SonicBreakdown(EPNozzleError):
    """Background integration left the uniformly subsonic range."""


class VacuumBreakdown(EPNozzleError):
    """Background reconstruction produced a non-positive density."""


class InvalidBracket(EPNozzleError):
    """Bisection bracket endpoints show the same success/failure behaviour."""


class StagnationError(EPNozzleError):
    """Radial velocity approached zero while tracing a characteristic."""


class SingularSystem(EPNozzleError):
    """The assembled linear system is singular (loss of discrete coercivity)."""


class NonConvergedLinearSolve(EPNozzleError):
    """Linear solver failed to reach the requested residual tolerance."""


class DivergenceError(EPNozzleError):
    """Fixed-point iteration diverged or left the trust ball."""


class CompatibilityError(EPNozzleError):
    """Boundary profiles violate the corner compatibility conditions."""


class ConfigError(EPNozzleError):
    """Run configuration is malformed or violates an invariant."""
