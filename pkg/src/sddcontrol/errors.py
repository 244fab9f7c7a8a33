"""Exception hierarchy shared by all solvers."""


class SddError(Exception):
    """Base class for every error raised by the toolkit."""


class NonCommensurateDelay(SddError, ValueError):
    pass


class RankDeficientBasis(SddError):
    pass


class NonFiniteState(SddError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class PicardDivergence(SddError):
    def __init__(self, message, gaps=()):
        super().__init__(message)
        self.gaps = list(gaps)


class InversionFailure(SddError):
    def __init__(self, message, path=None, step=None):
        super().__init__(message)
        self.path = path
        self.step = step


class DegenerateDiffusion(SddError, ValueError):
    pass


class DelayPresent(SddError, ValueError):
    pass


class DegenerateMultipliers(SddError, ValueError):
    pass


class ShapeMismatch(SddError, ValueError):
    pass


class EmptyConstraintSet(SddError, ValueError):
    pass


class InfeasibleStall(SddError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class ConfigError(SddError):
    pass
