"""Birth-death genealogy of the branching particle system.

Particles are identified by an integer pid allocated at birth (the root is 0). Index tuples
in the (k, 1) / (k, c) relabeling convention are reconstructed on demand from parent links.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from branchmc.core.errors import InputValidationError, PopulationCap
from branchmc.utils.logger import get_logger

log = get_logger("branching")

DEFAULT_POPULATION_CAP = 1_000_000

# birth_event of the root particle; branch events are numbered from 1
ROOT_EVENT = 0


@dataclass(slots=True)
class ParticleRecord:
    pid: int
    parent: int | None
    child_number: int
    birth: float
    birth_event: int
    end: float = 0.0
    branched: bool = False

    @property
    def stream_id(self) -> int:
        return self.pid


@dataclass
class ParticleTree:
    """Realized genealogy on [0, horizon] (times relative to the start of the run)."""

    horizon: float
    branch_times: list[float] = field(default_factory=list)
    offspring_counts: list[int] = field(default_factory=list)
    branchers: list[int] = field(default_factory=list)
    particles: list[ParticleRecord] = field(default_factory=list)
    alive_ids: list[int] = field(default_factory=list)

    @property
    def n_alive(self) -> int:
        return len(self.alive_ids)

    @property
    def n_branchings(self) -> int:
        return len(self.branch_times)

    @property
    def extinct(self) -> bool:
        return not self.alive_ids

    def children(self, event: int) -> list[ParticleRecord]:
        """Particles born at branch event `event` (1-based), in child order."""
        return [rec for rec in self.particles if rec.birth_event == event]

    def ancestry(self, pid: int) -> list[ParticleRecord]:
        chain = []
        current: int | None = pid
        while current is not None:
            rec = self.particles[current]
            chain.append(rec)
            current = rec.parent
        chain.reverse()
        return chain

    def index_tuple(self, pid: int, after_event: int | None = None) -> tuple[int, ...]:
        """Index of particle `pid` once `after_event` branch events have happened.

        Every event appends one entry: the child number for the particle born there,
        1 for every particle that merely survived it.
        """
        last = self.n_branchings if after_event is None else after_event
        chain = self.ancestry(pid)
        if chain[-1].birth_event > last:
            raise InputValidationError(f"particle {pid} is not born by event {last}")
        index = [1]
        position = 0
        for event in range(1, last + 1):
            nxt = chain[position + 1] if position + 1 < len(chain) else None
            if nxt is not None and nxt.birth_event == event:
                index.append(nxt.child_number)
                position += 1
            else:
                index.append(1)
        return tuple(index)

    @property
    def brancher_ids(self) -> list[tuple[int, ...]]:
        """Index tuple of the branching particle just before each event."""
        return [
            self.index_tuple(pid, after_event=event - 1)
            for event, pid in enumerate(self.branchers, start=1)
        ]

    @property
    def alive_at_horizon(self) -> frozenset[tuple[int, ...]]:
        return frozenset(self.index_tuple(pid) for pid in self.alive_ids)

    def alive_at(self, time: float) -> list[int]:
        return [
            rec.pid
            for rec in self.particles
            if rec.birth <= time and (time < rec.end or not rec.branched)
        ]

    def dump(self) -> str:
        """One line per branch event: time, brancher index, offspring count."""
        lines = [f"# horizon={self.horizon:.17g} alive={self.n_alive}"]
        for t, k, count in zip(
            self.branch_times, self.brancher_ids, self.offspring_counts, strict=True
        ):
            lines.append(f"{t:.17g} {','.join(map(str, k))} {count}")
        return "\n".join(lines)


def simulate_tree(
    beta: float,
    p: Sequence[float] | np.ndarray,
    horizon: float,
    rng: np.random.Generator,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> ParticleTree:
    """Event-driven simulation: the next branching after Exp(N beta), brancher uniform."""
    law = np.asarray(p, dtype=float)
    if horizon <= 0:
        raise InputValidationError(f"horizon must be positive, got {horizon}")

    tree = ParticleTree(horizon=horizon)
    tree.particles.append(ParticleRecord(0, None, 1, 0.0, ROOT_EVENT))
    alive = [0]
    t = 0.0

    while alive and beta > 0:
        t += rng.exponential(1.0 / (beta * len(alive)))
        if t > horizon:
            break
        slot = int(rng.integers(len(alive)))
        pid = alive[slot]
        count = int(rng.choice(law.size, p=law))

        rec = tree.particles[pid]
        rec.end = t
        rec.branched = True
        alive[slot] = alive[-1]
        alive.pop()

        tree.branch_times.append(t)
        tree.offspring_counts.append(count)
        tree.branchers.append(pid)
        event = len(tree.branch_times)
        for child in range(1, count + 1):
            new_pid = len(tree.particles)
            tree.particles.append(ParticleRecord(new_pid, pid, child, t, event))
            alive.append(new_pid)

        if len(alive) > population_cap:
            raise PopulationCap(len(alive), population_cap)

    for pid in alive:
        tree.particles[pid].end = horizon
    tree.alive_ids = sorted(alive)
    return tree


def index_code(index: Sequence[int], n0: int) -> int:
    """sum_i k_i (n0 + 1)^i with i counted from 1, in unbounded precision."""
    if not index:
        raise InputValidationError("index tuple must be non-empty")
    base = n0 + 1
    code = 0
    for i, k in enumerate(index, start=1):
        if not 1 <= k <= n0:
            raise InputValidationError(f"index entries must lie in 1..{n0}, got {k}")
        code += int(k) * base**i
    return code


@dataclass(frozen=True)
class PopulationMoments:
    mean_alive: float
    mean_branchings: float


def population_moments(
    beta: float, p: Sequence[float] | np.ndarray, horizon: float
) -> PopulationMoments:
    """Expected alive count e^{beta(m-1)T} and expected number of branchings."""
    law = np.asarray(p, dtype=float)
    growth = beta * (float(np.dot(np.arange(law.size), law)) - 1.0)
    mean_branchings, _ = quad(lambda s: beta * np.exp(growth * s), 0.0, horizon)
    return PopulationMoments(float(np.exp(growth * horizon)), float(mean_branchings))
