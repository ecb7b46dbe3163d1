"""Vectorized engine: all particles of a batch of samples advance together.

Applies when every functional of the problem reads only the Markov state (x, integral of x)
through a `batch` method. Grid convention matches the lineage engine: global nodes k*dt with
each particle's branch time inserted as an extra node.
"""

from dataclasses import dataclass

import numpy as np

from branchmc.core.functionals import supports_batch
from branchmc.core.model import DiscretePath, ProblemSpec
from branchmc.utils.logger import get_logger
from branchmc.utils.streams import gaussians

log = get_logger("batch")


@dataclass(frozen=True)
class BatchStart:
    """Markov state a run starts from."""

    time: float
    x: np.ndarray
    integral: np.ndarray

    @classmethod
    def from_path(cls, prefix: DiscretePath) -> "BatchStart":
        return cls(prefix.end, prefix.terminal.copy(), prefix.integral())


@dataclass
class BatchOutcome:
    psi: np.ndarray
    n_alive: np.ndarray
    n_branchings: np.ndarray
    max_abs_payoff: np.ndarray
    failed: np.ndarray

    @property
    def extinct(self) -> np.ndarray:
        return self.n_alive == 0


def batch_capable(spec: ProblemSpec) -> bool:
    return supports_batch(spec.payoff, spec.drift, spec.vol, *spec.coeffs)


class _Accumulator:
    """Per-sample product of weights and payoffs in log-magnitude and sign."""

    def __init__(self, n: int):
        self.log_mag = np.zeros(n)
        self.sign = np.ones(n)

    def absorb(self, owner: np.ndarray, factors: np.ndarray) -> None:
        with np.errstate(divide="ignore"):
            np.add.at(self.log_mag, owner, np.log(np.abs(factors)))
        np.multiply.at(self.sign, owner, np.sign(factors))

    def values(self) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            out = self.sign * np.exp(self.log_mag)
        out[self.sign == 0] = 0.0
        return out


def _next_node(t: np.ndarray, dt: float) -> np.ndarray:
    node = (np.floor(t / dt) + 1.0) * dt
    return np.where(node > t, node, node + dt)


def run_batch(
    spec: ProblemSpec,
    start: BatchStart,
    n_samples: int,
    dt: float,
    rng: np.random.Generator,
    population_cap: int,
) -> BatchOutcome:
    horizon = spec.horizon
    beta = spec.beta
    law = spec.offspring_law
    d = spec.dim

    def lifetimes(size: int) -> np.ndarray:
        if beta == 0:
            return np.full(size, np.inf)
        return rng.exponential(1.0 / beta, size=size)

    owner = np.arange(n_samples)
    t = np.full(n_samples, start.time)
    x = np.tile(np.asarray(start.x, dtype=float), (n_samples, 1))
    integ = np.tile(np.asarray(start.integral, dtype=float), (n_samples, 1))
    death = t + lifetimes(n_samples)

    product = _Accumulator(n_samples)
    n_alive = np.zeros(n_samples, dtype=np.int64)
    n_branchings = np.zeros(n_samples, dtype=np.int64)
    max_abs = np.zeros(n_samples)
    failed = np.zeros(n_samples, dtype=bool)

    while owner.size:
        target = np.minimum(np.minimum(_next_node(t, dt), horizon), death)
        delta = target - t

        mu = spec.drift.batch(t, x, integ)  # type: ignore[attr-defined]
        sigma = spec.vol.batch(t, x, integ)  # type: ignore[attr-defined]
        xi = gaussians(rng, (owner.size, d))
        noise = np.einsum("nij,nj->ni", sigma, xi) * np.sqrt(delta)[:, None]
        x_new = x + mu * delta[:, None] + noise
        integ = integ + 0.5 * (x + x_new) * delta[:, None]
        x, t = x_new, target

        broken = ~np.all(np.isfinite(x), axis=1)
        if broken.any():
            failed[owner[broken]] = True
            log.debug(f"{int(broken.sum())} particles left the finite range")

        done = (t >= horizon) & ~broken
        if done.any():
            payoff = spec.payoff.batch(x[done], integ[done])  # type: ignore[attr-defined]
            product.absorb(owner[done], payoff)
            np.add.at(n_alive, owner[done], 1)
            np.maximum.at(max_abs, owner[done], np.abs(payoff))

        branching = (t == death) & (t < horizon) & ~broken
        children: tuple[np.ndarray, ...] | None = None
        if branching.any():
            b_owner, b_t = owner[branching], t[branching]
            b_x, b_integ = x[branching], integ[branching]
            counts = rng.choice(law.size, size=b_owner.size, p=law)
            weights = np.empty(b_owner.size)
            for k in np.unique(counts):
                sel = counts == k
                coeff = spec.coeffs[k]
                a_k = coeff.batch(b_t[sel], b_x[sel], b_integ[sel])  # type: ignore[attr-defined]
                weights[sel] = a_k / law[k]
            product.absorb(b_owner, weights)
            np.add.at(n_branchings, b_owner, 1)
            children = (
                np.repeat(b_owner, counts),
                np.repeat(b_t, counts),
                np.repeat(b_x, counts, axis=0),
                np.repeat(b_integ, counts, axis=0),
            )

        keep = ~(done | branching | broken)
        owner, t, x, integ, death = owner[keep], t[keep], x[keep], integ[keep], death[keep]
        if children is not None and children[0].size:
            c_owner, c_t, c_x, c_integ = children
            owner = np.concatenate([owner, c_owner])
            t = np.concatenate([t, c_t])
            x = np.vstack([x, c_x])
            integ = np.vstack([integ, c_integ])
            death = np.concatenate([death, c_t + lifetimes(c_owner.size)])

        population = np.bincount(owner, minlength=n_samples) + n_alive
        over = population > population_cap
        if over.any():
            log.debug(f"{int(over.sum())} samples exceeded the population cap {population_cap}")
            failed |= over
        if failed.any():
            live = ~failed[owner]
            owner, t, x, integ, death = owner[live], t[live], x[live], integ[live], death[live]

    psi = product.values()
    failed |= ~np.isfinite(psi)
    return BatchOutcome(psi, n_alive, n_branchings, max_abs, failed)
