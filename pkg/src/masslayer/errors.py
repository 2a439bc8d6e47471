"""Exception hierarchy shared by all masslayer modules."""


class MassLayerError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(MassLayerError):
    pass


class NotBistable(MassLayerError):
    """Fewer than three roots of f(., v) were found."""


class FoldNotFound(MassLayerError):
    pass


class NoMaxwellPoint(MassLayerError):
    pass


class MultipleMaxwellPoints(MassLayerError):
    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = list(candidates)


class XiOutOfRange(MassLayerError):
    pass


class DegeneratePotential(MassLayerError):
    pass


class NewtonDiverged(MassLayerError):
    def __init__(self, message, eps=None):
        super().__init__(message)
        self.eps = eps


class JacobianSingular(MassLayerError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class EigensolverFailed(MassLayerError):
    pass


class AmbiguousMassMode(MassLayerError):
    pass


class StepRejected(MassLayerError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class FitFailed(MassLayerError):
    pass


class NumericalFailure(MassLayerError):
    """Generic numerical failure without a more specific class."""
