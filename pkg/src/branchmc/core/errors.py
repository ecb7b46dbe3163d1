"""Error types raised by branchmc."""

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from branchmc.core.feasibility import EllAnalysis


class BranchMCError(Exception):
    """Base error for this package."""


class InputValidationError(BranchMCError, ValueError):
    """Problem or run configuration violates its contract."""


class ZeroPsiBound(InputValidationError):
    """The declared payoff bound is zero, so the comparison function is undefined."""

    def __init__(self) -> None:
        super().__init__(
            "payoff bound |psi|_0 is zero; supply an explicit shifted bound (psi_shift=eps)"
        )


class PopulationCap(BranchMCError):
    """The number of alive particles exceeded the configured cap."""

    def __init__(self, alive: int, cap: int):
        super().__init__(f"alive particle count {alive} exceeded cap {cap}")
        self.alive = alive
        self.cap = cap


class NonFiniteState(BranchMCError, FloatingPointError):
    """A diffusion state or sample value became non-finite."""

    def __init__(self, time: float):
        super().__init__(f"non-finite state at t={time:.6g}")
        self.time = time


class UnstableGrid(BranchMCError):
    """Finite-difference grid violates the explicit-scheme stability bound."""


class FeasibilityRejected(BranchMCError):
    """A run was refused because the problem failed the well-posedness check."""

    def __init__(self, analysis: "EllAnalysis"):
        super().__init__(
            f"problem is {analysis.classification.value}: "
            f"comparison ODE blows up at t={analysis.blow_up_time:.6g} "
            f"before horizon {analysis.horizon:.6g}"
        )
        self.analysis = analysis


class TooManyFailures(BranchMCError):
    """More Monte Carlo samples failed than the tolerated fraction."""

    def __init__(self, failed: int, samples: int, reason: str):
        super().__init__(f"{failed} of {samples} samples failed (last error: {reason})")
        self.failed = failed
        self.samples = samples
