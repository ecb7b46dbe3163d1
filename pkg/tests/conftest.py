"""Shared builders for branchmc tests."""

from collections.abc import Sequence

import numpy as np
import pytest

from branchmc.core.functionals import Constant, ConstantPayoff, ConstantVol, GeometricVol, ZeroDrift
from branchmc.core.model import ProblemSpec
from branchmc.utils.logger import set_verbosity


@pytest.fixture(autouse=True)
def quiet_logging():
    set_verbosity("warning")
    yield
    set_verbosity("info")


def constant_spec(
    coeffs: Sequence[float],
    psi: float,
    beta: float = 0.1,
    horizon: float = 2.0,
    offspring: Sequence[float] | None = None,
    dim: int = 1,
    sigma: float = 0.2,
) -> ProblemSpec:
    """Constant coefficients and constant payoff over a GBM diffusion."""
    return ProblemSpec(
        dim=dim,
        horizon=horizon,
        beta=beta,
        coeffs=tuple(Constant(float(c)) for c in coeffs),
        coeff_bounds=tuple(abs(float(c)) for c in coeffs),
        payoff=ConstantPayoff(psi),
        payoff_bound=abs(psi),
        drift=ZeroDrift(),
        vol=GeometricVol(sigma),
        x0=np.ones(dim),
        offspring=tuple(offspring) if offspring is not None else None,
        name="test_constant",
    )


def diffusion_spec(
    vol=None,
    dim: int = 1,
    horizon: float = 1.0,
    x0: float = 1.0,
) -> ProblemSpec:
    """No branching (beta = 0): only the diffusion matters."""
    return ProblemSpec(
        dim=dim,
        horizon=horizon,
        beta=0.0,
        coeffs=(Constant(1.0),),
        coeff_bounds=(1.0,),
        payoff=ConstantPayoff(1.0),
        payoff_bound=1.0,
        drift=ZeroDrift(),
        vol=vol if vol is not None else ConstantVol(0.0),
        x0=np.full(dim, x0),
        name="test_diffusion",
    )
