"""Exception types shared across the package."""


class TsfemError(Exception):
    """Base class for all package errors."""


class NonConvergence(TsfemError):
    """An iterative procedure failed to reach its tolerance."""


class DegenerateGradient(TsfemError):
    """Level-set gradient too small to define a normal direction."""


class DegenerateTriangle(TsfemError):
    """Triangle with (numerically) vanishing area."""


class LengthMismatch(TsfemError):
    """Sequence length inconsistent with the time grid."""


class TooFewNodes(TsfemError):
    """Not enough time nodes for the requested recovery stencil."""


class RankDeficientPatch(TsfemError):
    """Vertex patch cannot support a full quadratic fit."""


class SolverDivergence(TsfemError):
    """Conjugate gradients exceeded its iteration cap."""


class IncompatibleData(TsfemError):
    """Right-hand side violates the discrete compatibility condition."""

    def __init__(self, magnitude, tol):
        self.magnitude = magnitude
        self.tol = tol
        super().__init__(
            f"incompatible data: relative zero-mode imbalance {magnitude:.3e} "
            f"exceeds tolerance {tol:.3e}"
        )


class UnknownBenchmark(TsfemError):
    """Benchmark name not recognized."""
