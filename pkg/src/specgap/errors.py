"""Exception hierarchy shared by all modules."""


class SpecGapError(Exception):
    """Base class for every error raised by the package."""


class NonStochastic(SpecGapError):
    pass


class NotReversible(SpecGapError):
    def __init__(self, residual: float):
        super().__init__(f"detailed balance violated, max residual {residual:.3e}")
        self.residual = residual


class Reducible(SpecGapError):
    pass


class NoConvergence(SpecGapError):
    pass


class SizeOverflow(SpecGapError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"state space of size {size} exceeds cap {cap}")
        self.size = size
        self.cap = cap


class EmptyBlock(SpecGapError):
    pass


class NotPerpendicular(SpecGapError):
    pass


class NotUnit(SpecGapError):
    pass


class DomainError(SpecGapError):
    pass


class ProbabilityOverflow(SpecGapError):
    pass


class InconsistentPrefix(SpecGapError):
    pass


class NotCertifiable(SpecGapError):
    pass


class NoNNEdge(SpecGapError):
    pass
