"""Exception types raised across the package."""


class AcousticLabError(Exception):
    """Base class for all package errors."""


class MomentResidualTooLarge(AcousticLabError):
    def __init__(self, moment: str, residual: float, tol: float):
        self.moment = moment
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"grid moment '{moment}' residual {residual:.3e} exceeds tol_moment {tol:.1e}"
        )


class GridMismatch(AcousticLabError):
    pass


class GammaOutOfRange(AcousticLabError):
    def __init__(self, gamma: float):
        self.gamma = gamma
        super().__init__(f"GammaOutOfRange: gamma={gamma!r} must lie in (-3, 1]")


class UnsupportedKernel(AcousticLabError):
    pass


class AssemblyBudgetExceeded(AcousticLabError):
    pass


class NullspaceDefect(AcousticLabError):
    pass


class NonpositiveGap(AcousticLabError):
    pass


class IllConditionedGram(AcousticLabError):
    pass


class UnsupportedN(AcousticLabError):
    pass


class SolveFailure(AcousticLabError):
    pass


class InadmissibleInitialData(AcousticLabError):
    pass


class ConfigError(AcousticLabError):
    pass


class PositivityWarning(UserWarning):
    pass
