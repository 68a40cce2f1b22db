"""Stroboscopic Poincare sections and fixed-point hunting on the period map."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .integrate import EventSpec, IntegrationError, IntegratorConfig, fall_events, integrate
from .model import HALF_PI, THREE_HALF_PI, TWO_PI, ForceModel, Params, State, full_field
from .orbits import OrbitResult, ShootingError, find_periodic, worker_count

ESCAPE_P = 50.0


@dataclass(frozen=True, eq=False)
class SectionJob:
    """Grid of seeds for the ``T``-stroboscopic map.

    A single grid node along an axis sits at the midpoint of that range.
    """

    params: Params
    force: ForceModel
    q_range: tuple = (HALF_PI, THREE_HALF_PI)
    p_range: tuple = (-2.0, 2.0)
    grid: tuple = (101, 101)
    iterations: int = 500
    escape_p: float = ESCAPE_P

    def __post_init__(self):
        for name in ("q_range", "p_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must be a finite interval with lo < hi, got {(lo, hi)}")
        nq, np_ = self.grid
        if int(nq) != nq or int(np_) != np_ or nq < 1 or np_ < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.grid}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")

    def seeds(self) -> np.ndarray:
        """Seeds in row-major order (q outer, p inner), shape ``(nq * np, 2)``."""
        qs = _axis(self.q_range, self.grid[0])
        ps = _axis(self.p_range, self.grid[1])
        Q, P = np.meshgrid(qs, ps, indexing="ij")
        return np.column_stack((Q.ravel(), P.ravel()))


def _axis(rng, n):
    lo, hi = rng
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, int(n))


@dataclass(frozen=True, eq=False)
class SectionCloud:
    """Iterates of the stroboscopic map.

    ``points`` has columns ``seed_id, iteration, q mod 2 pi, p``, ordered by
    ``(seed_id, iteration)``; iteration 0 is the seed itself.
    """

    points: np.ndarray
    escaped: np.ndarray
    seeds: np.ndarray = field(repr=False)

    @property
    def n_seeds(self) -> int:
        return self.seeds.shape[0]

    def of_seed(self, seed_id: int) -> np.ndarray:
        return self.points[self.points[:, 0] == seed_id]


def _orbit_of_seed(seed, job: SectionJob, cfg, rhs, events):
    q, p = float(seed[0]), float(seed[1])
    rows = [(0, q, p)]
    # a seed on or beyond the fall lines has already fallen
    if not (HALF_PI < q < THREE_HALF_PI) or abs(p) > job.escape_p:
        return rows, True
    T = job.params.T
    state = State(q, p, 0.0)
    for n in range(1, job.iterations + 1):
        try:
            res = integrate(rhs, state, state.t + T, cfg, events)
        except IntegrationError:
            return rows, True
        if res.events_hit:
            return rows, True
        y = res.traj.y[-1]
        rows.append((n, float(y[0]), float(y[1])))
        state = State(float(y[0]), float(y[1]), n * T)
    return rows, False


def generate_section(job: SectionJob, cfg: Optional[IntegratorConfig] = None,
                     threads: Optional[int] = None) -> SectionCloud:
    """Iterate the period map from every grid seed.

    A seed escapes when a fall event fires, ``|p|`` exceeds ``job.escape_p``
    or the integration fails; it then contributes the iterates before the
    escape.  Seeds run concurrently; the merge is ordered by seed id, so the
    result does not depend on the thread count.
    """
    seeds = job.seeds()
    rhs = full_field(job.params, job.force)
    events = fall_events(terminal=True) + (
        EventSpec.level(job.escape_p, "p", terminal=True, name="escape_high"),
        EventSpec.level(-job.escape_p, "p", terminal=True, name="escape_low"))

    def work(seed):
        return _orbit_of_seed(seed, job, cfg, rhs, events)

    n_workers = threads if threads is not None else worker_count(len(seeds))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(work, seeds))
    else:
        results = [work(s) for s in seeds]

    blocks, escaped = [], np.zeros(len(seeds), dtype=bool)
    for i, (rows, esc) in enumerate(results):
        arr = np.asarray(rows, dtype=float)
        blocks.append(np.column_stack((np.full(len(arr), i), arr)))
        escaped[i] = esc
    points = np.concatenate(blocks) if blocks else np.empty((0, 4))
    points[:, 2] = np.mod(points[:, 2], TWO_PI)
    return SectionCloud(points, escaped, seeds)


@dataclass(frozen=True, eq=False)
class FixedPointSearch:
    orbits: list
    failures: list  # (seed, message)


def _same_point(a, b, tol):
    dq = (a[0] - b[0] + math.pi) % TWO_PI - math.pi
    return math.hypot(dq, a[1] - b[1]) < tol


def find_map_fixed_points(seeds: Sequence, params: Params, force: ForceModel,
                          cfg: Optional[IntegratorConfig] = None, dedupe_tol: float = 1e-6,
                          **kwargs) -> FixedPointSearch:
    """Newton from each seed on the full period map; duplicates are merged.

    Seeds that fail to converge are listed in ``failures`` instead of raising.
    """
    found: list[OrbitResult] = []
    failures = []
    for seed in seeds:
        try:
            orbit = find_periodic(seed, params.T, "full", params, force, cfg, **kwargs)
        except (ShootingError, IntegrationError, ValueError) as exc:
            failures.append((tuple(seed), str(exc)))
            continue
        if not any(_same_point(orbit.fixed_point, o.fixed_point, dedupe_tol) for o in found):
            found.append(orbit)
    return FixedPointSearch(found, failures)
