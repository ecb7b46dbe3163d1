"""Euler scheme with frozen coefficients along particle lineages."""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from branchmc.core.errors import InputValidationError, NonFiniteState
from branchmc.core.model import DiscretePath, ProblemSpec
from branchmc.utils.logger import get_logger
from branchmc.utils.streams import gaussians

log = get_logger("paths")

# stream id of the prefix segment a run starts from (no Brownian increments)
PREFIX_STREAM = -1


@dataclass(frozen=True)
class Segment:
    birth_time: float
    path: DiscretePath
    stream_id: int


@dataclass(frozen=True, eq=False)
class LineagePath:
    """One particle's trajectory as a chain of shared, immutable segments."""

    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise InputValidationError("lineage needs at least one segment")

    @classmethod
    def root(cls, prefix: DiscretePath) -> "LineagePath":
        return cls((Segment(prefix.start, prefix, PREFIX_STREAM),))

    @property
    def start(self) -> float:
        return self.segments[0].path.start

    @property
    def end(self) -> float:
        return self.segments[-1].path.end

    @property
    def terminal(self) -> np.ndarray:
        return self.segments[-1].path.terminal

    @cached_property
    def whole(self) -> DiscretePath:
        if len(self.segments) == 1:
            return self.segments[0].path
        grid = [self.segments[0].path.grid]
        values = [self.segments[0].path.values]
        for seg in self.segments[1:]:
            grid.append(seg.path.grid[1:])
            values.append(seg.path.values[1:])
        return DiscretePath.trusted(np.concatenate(grid), np.vstack(values))

    def appended(self, segment: Segment) -> "LineagePath":
        if segment.path.start != self.end:
            raise InputValidationError(
                f"segment starts at {segment.path.start} but lineage ends at {self.end}"
            )
        return LineagePath((*self.segments, segment))

    def restricted(self, t: float) -> "LineagePath":
        """Lineage on [start, t]; segments ending by t are kept by reference."""
        kept: list[Segment] = []
        for seg in self.segments:
            if seg.path.end <= t:
                kept.append(seg)
                continue
            if seg.path.start < t or not kept:
                kept.append(Segment(seg.birth_time, seg.path.stopped(t), seg.stream_id))
            break
        return LineagePath(tuple(kept))


def _nodes(t_from: float, t_to: float, dt: float) -> np.ndarray:
    """Global grid nodes k*dt strictly inside (t_from, t_to), plus both endpoints."""
    first = int(np.floor(t_from / dt))
    last = int(np.ceil(t_to / dt))
    inner = np.arange(first, last + 1) * dt
    inner = inner[(inner > t_from) & (inner < t_to)]
    return np.concatenate([[t_from], inner, [t_to]])


def euler_step_path(
    spec: ProblemSpec,
    lineage: LineagePath,
    t_from: float,
    t_to: float,
    dt: float,
    rng: np.random.Generator,
) -> DiscretePath:
    """Advance X from `t_from` to `t_to`, returning the new segment including its start node.

    Drift and volatility are frozen at each node and read the interpolated path so far.
    """
    if not t_from < t_to:
        raise InputValidationError(f"need t_from < t_to, got [{t_from}, {t_to}]")
    if dt <= 0:
        raise InputValidationError(f"dt must be positive, got {dt}")
    if lineage.end != t_from:
        raise InputValidationError(f"lineage ends at {lineage.end}, cannot step from {t_from}")

    times = _nodes(t_from, t_to, dt)
    history = lineage.whole
    offset = len(history)
    grid = np.concatenate([history.grid, times[1:]])
    values = np.empty((grid.size, spec.dim))
    values[:offset] = history.values

    for i in range(times.size - 1):
        n = offset + i
        t, delta = times[i], times[i + 1] - times[i]
        so_far = DiscretePath.trusted(grid[:n], values[:n])
        mu = np.asarray(spec.drift(t, so_far), dtype=float)
        sigma = np.asarray(spec.vol(t, so_far), dtype=float)
        xi = gaussians(rng, spec.dim)
        step = values[n - 1] + mu * delta + sigma @ (np.sqrt(delta) * xi)
        if not np.all(np.isfinite(step)):
            raise NonFiniteState(float(times[i + 1]))
        values[n] = step

    return DiscretePath.trusted(grid[offset - 1 :], values[offset - 1 :])


def extend_lineage(
    parent: LineagePath,
    branch_time: float,
    child_stream_id: int,
    spec: ProblemSpec,
    dt: float,
    rng: np.random.Generator,
    until: float | None = None,
) -> LineagePath:
    """Child lineage: the parent's segments up to `branch_time`, then a fresh segment."""
    if not parent.start <= branch_time <= parent.end:
        raise InputValidationError(
            f"branch time {branch_time} outside parent span [{parent.start}, {parent.end}]"
        )
    shared = parent.restricted(branch_time)
    if until is None or until <= branch_time:
        return shared
    segment = euler_step_path(spec, shared, branch_time, until, dt, rng)
    return shared.appended(Segment(branch_time, segment, child_stream_id))


def path_frame(path: DiscretePath) -> pd.DataFrame:
    columns = {"time": path.grid}
    for i in range(path.dim):
        columns[f"x{i + 1}"] = path.values[:, i]
    return pd.DataFrame(columns)


def dump_path_csv(path: DiscretePath | LineagePath, target: str | Path) -> None:
    """Write (time, x1..xd) rows for one path."""
    if isinstance(path, LineagePath):
        path = path.whole
    path_frame(path).to_csv(target, index=False, float_format="%.17g")
    log.debug(f"Wrote path dump to {target}")
