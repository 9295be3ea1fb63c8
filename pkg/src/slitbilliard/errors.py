"""Exception hierarchy shared by every module of the package."""


class SlitBilliardError(Exception):
    """Base class for all package errors."""


class ConfigError(SlitBilliardError, ValueError):
    """Invalid wall motion, table geometry or experiment parameters."""


class SingularHit(SlitBilliardError):
    """A slit contact coincides with a jump time of the wall (excluded set)."""


class Grazing(SlitBilliardError):
    """Tangential contact with the moving wall."""


class StencilCrossesSingularity(SlitBilliardError):
    """A finite-difference stencil orbit left the branch of the base orbit."""


class QuadratureFailure(SlitBilliardError):
    pass


class WrongChamberSign(SlitBilliardError, ValueError):
    """Velocity sign inconsistent with the chamber (v > 0 upper, v < 0 lower)."""


class NoConvergence(SlitBilliardError):
    pass


class NotInStrip(SlitBilliardError, ValueError):
    pass


class NearBranchBoundary(SlitBilliardError):
    """Point lies inside the O(1/I) fuzz band of a branch threshold."""


class BranchMismatch(SlitBilliardError, ValueError):
    pass


class InsufficientSamples(SlitBilliardError, ValueError):
    pass


class NotTrapping(SlitBilliardError, ValueError):
    pass


class NotHyperbolic(SlitBilliardError, ValueError):
    pass
