"""δ-spacelike configurations, partition bookkeeping and the family-by-family
construction of a consistent multi-time wave function for 1D Dirac particles
interacting through a pair potential of finite range.

Notation: a configuration ``q`` lists one space-time point ``(t_j, x_j)`` per
particle. Particles are 0-based in code; user-facing output is 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConsistencyAssertionError, IntegratorFailure, InvalidInputError, ShapeError
from .lattice import (
    ALPHA_1D, BETA_1D, Grid, GridFunction, _check_boundary, _check_steps, apply_spin,
    characteristic_steps, product_state, stencil, truncate_range,
)
from .partitions import Partition, partitions_between


@dataclass(frozen=True)
class SpacetimeConfig:
    """``N`` space-time points; ``positions`` has shape ``(N, d)`` with ``d`` in {1, 3}."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != len(t) or x.shape[1] not in (1, 3):
            raise ShapeError("positions must have shape (N, 1) or (N, 3) matching times")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise InvalidInputError("configuration must be finite")
        t.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)

    @classmethod
    def from_points(cls, points: Sequence) -> "SpacetimeConfig":
        """Build from ``[(t, x), ...]`` with scalar or 3-vector ``x``."""
        ts = [p[0] for p in points]
        xs = [np.atleast_1d(np.asarray(p[1], dtype=float)) for p in points]
        return cls(np.array(ts), np.array(xs))

    @property
    def n_particles(self) -> int:
        return len(self.times)

    @property
    def space_dim(self) -> int:
        return self.positions.shape[1]

    def with_time(self, members: Sequence[int], t: float) -> "SpacetimeConfig":
        times = self.times.copy()
        times[list(members)] = t
        return SpacetimeConfig(times, self.positions)

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "positions": self.positions.tolist()}

    def _pairwise(self):
        dt = np.abs(self.times[:, None] - self.times[None, :])
        dx = np.linalg.norm(self.positions[:, None, :] - self.positions[None, :, :], axis=-1)
        return dt, dx


def _check_delta(delta: float):
    if not delta > 0:
        raise InvalidInputError("delta must be positive")


def is_spacelike(q: SpacetimeConfig) -> bool:
    """Every pair is strictly spacelike separated or the two points coincide."""
    dt, dx = q._pairwise()
    same = np.all(q.positions[:, None, :] == q.positions[None, :, :], axis=-1) & (dt == 0)
    ok = (dt ** 2 - dx ** 2 < 0) | same
    np.fill_diagonal(ok, True)
    return bool(np.all(ok))


def is_delta_spacelike(q: SpacetimeConfig, delta: float, margin: float = 0.0) -> bool:
    """Every pair has equal times or distance ``> |dt| + delta + margin``.

    Comparisons are exact floating point; ``margin`` keeps callers away from
    the boundary of this open set.
    """
    _check_delta(delta)
    dt, dx = q._pairwise()
    ok = (dt == 0) | (dx > dt + delta + margin)
    return bool(np.all(ok))


def in_S_delta_P(q: SpacetimeConfig, partition: Partition, delta: float,
                 margin: float = 0.0) -> bool:
    """Equal times inside each block, strict distance bound across blocks."""
    _check_delta(delta)
    if partition.n != q.n_particles:
        raise InvalidInputError("partition size does not match the configuration")
    dt, dx = q._pairwise()
    lab = np.array(partition.labels())
    same_block = lab[:, None] == lab[None, :]
    within = np.all(dt[same_block] == 0)
    across = np.all(dx[~same_block] > dt[~same_block] + delta + margin)
    return bool(within and across)


def _classes(n: int, related: np.ndarray) -> Partition:
    """Equivalence classes of the transitive hull of a symmetric relation."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, k in zip(*np.nonzero(related)):
        parent[find(i)] = find(k)
    return Partition.from_labels([find(i) for i in range(n)])


def _require_S_delta(q: SpacetimeConfig, delta: float):
    if not is_delta_spacelike(q, delta):
        raise InvalidInputError("configuration is not delta-spacelike")


def coarsest_partition(q: SpacetimeConfig) -> Partition:
    """Equal-time classes of ``q``."""
    dt, _ = q._pairwise()
    return _classes(q.n_particles, dt == 0)


def finest_partition(q: SpacetimeConfig, delta: float) -> Partition:
    """Classes of the transitive hull of ``|x_j - x_k| <= |t_j - t_k| + delta``."""
    _require_S_delta(q, delta)
    dt, dx = q._pairwise()
    return _classes(q.n_particles, dx <= dt + delta)


def admissible_partitions(q: SpacetimeConfig, delta: float) -> list[Partition]:
    """All ``P`` with ``finest <= P <= coarsest``, i.e. all ``P`` with ``q`` in ``S_{delta,P}``.

    Examples
    --------
    >>> q = SpacetimeConfig([0.0, 0.0, 0.0], [[0.0], [10.0], [20.0]])
    >>> len(admissible_partitions(q, 1.0))
    5
    """
    _require_S_delta(q, delta)
    return partitions_between(finest_partition(q, delta), coarsest_partition(q))


# ------------------------------------------------------------ construction

@dataclass
class MultiTimeSlice:
    """Result of :func:`construct_phi`.

    ``value`` is the spinor at the target, shape ``(2,) * N``. ``data`` is the
    final array on the whole grid (``None`` for trimmed runs); it equals the
    multi-time wave function near the target. ``trace`` lists the family
    solves in execution order.
    """

    target: SpacetimeConfig
    partition: Partition
    family_times: list
    value: np.ndarray
    data: GridFunction | None = None
    trace: list = field(default_factory=list)


def _check_range(w: Callable, delta: float, grid: Grid):
    """Reject pair potentials that are nonzero at a lattice offset ``>= delta``."""
    offsets = grid.spacing * np.arange(-(grid.points_per_axis - 1), grid.points_per_axis)
    far = np.abs(offsets) >= delta
    if np.any(np.asarray(w(offsets[far]), dtype=float) != 0):
        raise InvalidInputError("pair potential does not vanish beyond delta")


def _pair_sum(w: Callable | None, coords: Sequence[np.ndarray], members: Sequence[int]):
    """``sum_{i != k in members} w(x_i - x_k)`` with per-particle coordinate arrays."""
    n = len(coords)
    if w is None or len(members) < 2:
        return None
    out = 0.0
    for i in members:
        for k in members:
            if i == k:
                continue
            si = [1] * n
            sk = [1] * n
            si[i], sk[k] = len(coords[i]), len(coords[k])
            out = out + w(coords[i].reshape(si) - coords[k].reshape(sk))
    return np.broadcast_to(out, tuple(len(c) for c in coords)) if np.ndim(out) else None


def _stage_plan(times: Sequence[float], blocks: Sequence[Sequence[int]], pivot: int):
    """Ordered family solves ``(members, t_from, t_to)``.

    Families are sorted by time. All particles first evolve together to the
    pivot family's time. Each later family level is then reached by evolving
    the union of all families at or above it; each earlier level by evolving
    the union of all families at or below it, backwards. Zero-duration solves
    are dropped.
    """
    order = sorted(range(len(blocks)), key=lambda a: times[a])
    T = [times[a] for a in order]
    fam = [list(blocks[a]) for a in order]
    L = len(fam)
    if not 0 <= pivot < L:
        raise InvalidInputError(f"pivot must be in 0..{L - 1}")
    everyone = sorted(p for b in fam for p in b)
    plan = [(everyone, 0.0, T[pivot])]
    for a in range(pivot + 1, L):
        plan.append((sorted(p for b in fam[a:] for p in b), T[a - 1], T[a]))
    for a in range(pivot - 1, -1, -1):
        plan.append((sorted(p for b in fam[:a + 1] for p in b), T[a + 1], T[a]))
    return [s for s in plan if s[1] != s[2]]


def _cropped_product(factors: Sequence[GridFunction], slices) -> np.ndarray:
    """Product-state array built only on the given per-particle index ranges."""
    vals = np.ones((), complex)
    for f, sl in zip(factors, slices):
        vals = np.multiply.outer(vals, f.values[sl])
    n = len(factors)
    return np.transpose(vals, [2 * j for j in range(n)] + [2 * j + 1 for j in range(n)])


def construct_phi(phi0, target: SpacetimeConfig, w: Callable | None,
                  delta: float, mass: float = 0.0, partition: Partition | None = None,
                  pivot: int = 0, trim: bool = False, return_slice: bool = False,
                  norm_tol: float = 1e-9) -> MultiTimeSlice:
    """Multi-time wave function at ``target`` built family by family.

    With ``pivot = 0`` this follows the induction on the number of families:
    everything evolves jointly to the earliest family time, then the
    families that are still later keep evolving with the pair terms among
    themselves only, level by level. Other pivots give equally valid
    construction orders that reach the later families forward and the
    earlier ones backward from the pivot time. Every solve checks that pair
    terms between evolving and frozen particles vanish on the part of the
    lattice that can still influence the target.

    Parameters
    ----------
    phi0 : GridFunction or sequence of GridFunction
        1D Dirac state of ``N`` particles at all times zero (zero boundary),
        or its single-particle factors for a product state. Trimmed runs
        with factors never build the full product.
    target : SpacetimeConfig
        Point of the δ-spacelike set; positions are grid nodes and times are
        multiples of the spacing.
    w : callable or None
        Pair potential ``W(x)`` of range ``delta`` (see :func:`range_delta`).
        ``None`` means no interaction.
    partition : Partition, optional
        Family structure to use; defaults to the equal-time classes.
    trim : bool
        Solve only on the product of per-particle dependency intervals of the
        target. The target value is unchanged.

    Raises
    ------
    InvalidInputError
        Target outside the δ-spacelike set, partition not admissible, or
        ``w`` nonzero beyond ``delta``.
    BoundaryContactError
        Untrimmed run whose light cone reaches the grid edge.
    ConsistencyAssertionError
        A pair term between an evolving and a frozen particle is nonzero
        where it could affect the target.
    """
    factors = None
    if not isinstance(phi0, GridFunction):
        factors = list(phi0)
        if any(f.n_particles != 1 or f.grid != factors[0].grid for f in factors):
            raise ShapeError("factors must be single-particle states on one grid")
        if not trim:
            phi0 = product_state(factors)
    g = factors[0].grid if factors is not None else phi0.grid
    n = len(factors) if factors is not None else phi0.n_particles
    if g.space_dim != 1 or target.space_dim != 1:
        raise InvalidInputError("the construction is implemented for 1D particles")
    if target.n_particles != n:
        raise ShapeError("target and phi0 have different particle numbers")
    if g.boundary != "zero":
        raise InvalidInputError("construction needs a zero-padded grid")
    _require_S_delta(target, delta)
    if partition is None:
        partition = coarsest_partition(target)
    elif not in_S_delta_P(target, partition, delta):
        raise InvalidInputError(f"target is not in the set for partition {partition}")
    if return_slice and trim:
        raise InvalidInputError("trimmed runs do not produce a full slice")
    if w is not None:
        _check_range(w, delta, g)
    idx = [g.index_of(x) for x in target.positions[:, 0]]
    blocks = [list(b) for b in partition.blocks]
    fam_times = [float(target.times[b[0]]) for b in blocks]
    for t in fam_times:
        _check_steps(t, g.spacing)
    plan = _stage_plan(fam_times, blocks, pivot)
    plan_steps = [(m, _check_steps(t1, g.spacing) - _check_steps(t0, g.spacing), t0, t1)
                  for m, t0, t1 in plan]

    # remaining steps per particle before each solve: dependency radii
    remaining = np.zeros((len(plan_steps) + 1, n), dtype=int)
    for s in range(len(plan_steps) - 1, -1, -1):
        remaining[s] = remaining[s + 1]
        remaining[s, plan_steps[s][0]] += abs(plan_steps[s][1])
    full = [g.coords for _ in range(n)]

    if trim:
        lo = [max(idx[j] - remaining[0, j], 0) for j in range(n)]
        hi = [min(idx[j] + remaining[0, j], g.points_per_axis - 1) for j in range(n)]
        box = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        if factors is not None:
            vals = _cropped_product(factors, box)
        else:
            vals = phi0.values[box]
        coords = [g.coords[a:b + 1] for a, b in zip(lo, hi)]
        local = tuple(i - a for i, a in zip(idx, lo))
    else:
        vals = phi0.values
        coords = full
        local = tuple(idx)

    trace = []
    for s, (members, steps, t0, t1) in enumerate(plan_steps):
        frozen = [j for j in range(n) if j not in members]
        _assert_decoupled(w, g, idx, remaining[s], members, frozen)
        if not trim:
            _check_boundary(vals, members, abs(steps))
        before = float(np.sqrt(np.sum(np.abs(vals) ** 2)))
        v = _pair_sum(w, coords, members)
        vals = characteristic_steps(vals, n, members, steps, g.spacing, mass, v)
        after = float(np.sqrt(np.sum(np.abs(vals) ** 2)))
        drift = abs(after - before) / before if before else 0.0
        if not trim and drift > norm_tol:
            raise IntegratorFailure(f"norm drift {drift:.3e} in family solve {s}")
        trace.append({"particles": [m + 1 for m in members], "t_from": t0, "t_to": t1,
                      "steps": steps, "norm_drift": drift})

    value = np.array(vals[local], dtype=complex)
    data = phi0.with_values(vals) if return_slice else None
    return MultiTimeSlice(target, partition, fam_times, value, data, trace)


def _assert_decoupled(w, grid: Grid, idx, radius, members, frozen):
    """Pair terms between evolving and frozen particles vanish on the lattice
    points that can still reach the target."""
    if w is None or not frozen:
        return
    c = grid.coords
    h = grid.spacing
    total = 0.0
    for i in members:
        xi = c[idx[i]] + h * np.arange(-radius[i], radius[i] + 1)
        for j in frozen:
            xj = c[idx[j]] + h * np.arange(-radius[j], radius[j] + 1)
            d = xi[:, None] - xj[None, :]
            total += float(np.sum(np.abs(w(d))) + np.sum(np.abs(w(-d))))
    if total != 0.0:
        raise ConsistencyAssertionError(
            f"cross-family pair potential is nonzero ({total:.3e}) on the dependency cone")


def range_delta(w: Callable, delta: float, spacing: float) -> Callable:
    """Cut ``w`` smoothly to range ``delta`` (equal to ``w`` up to ``delta - 2 spacing``)."""
    return truncate_range(w, delta, spacing)


def gaussian_pair(amplitude: float, width: float, delta: float, spacing: float) -> Callable:
    """Gaussian ``W(x) = A exp(-x^2 / (2 width^2))`` cut to range ``delta``."""
    return range_delta(lambda x: amplitude * np.exp(-np.asarray(x) ** 2 / (2 * width ** 2)),
                       delta, spacing)


# ------------------------------------------------------------ consistency tests

@dataclass
class OverlapReport:
    """Largest pairwise ``L^inf`` deviation among target values of several constructions."""

    deviation: float
    labels: list
    values: list

    def __float__(self) -> float:
        return self.deviation


def _max_deviation(values) -> float:
    dev = 0.0
    for a in range(len(values)):
        for b in range(a + 1, len(values)):
            dev = max(dev, float(np.max(np.abs(values[a] - values[b]))))
    return dev


def overlap_welldefinedness(q: SpacetimeConfig, phi0: GridFunction, w: Callable | None,
                            delta: float, mass: float = 0.0, all_pivots: bool = True,
                            trim: bool = False) -> OverlapReport:
    """Construct the target value once per admissible partition and compare.

    Zero-duration solves are skipped, so partitions that only split
    equal-time families lead to the same solve sequence. With
    ``all_pivots`` every construction order of every partition is run as
    well, which makes the comparison sensitive to the actual dynamics.
    """
    labels, values = [], []
    for p in admissible_partitions(q, delta):
        pivots = range(len(p)) if all_pivots else [0]
        for pv in pivots:
            sl = construct_phi(phi0, q, w, delta, mass, partition=p, pivot=pv, trim=trim)
            labels.append((p.as_lists(), pv))
            values.append(sl.value)
    return OverlapReport(_max_deviation(values), labels, values)


def order_independence(q: SpacetimeConfig, phi0: GridFunction, w: Callable | None,
                       delta: float, mass: float = 0.0, trim: bool = False) -> OverlapReport:
    """Compare all construction orders (pivots) of the default partition."""
    p = coarsest_partition(q)
    labels, values = [], []
    for pv in range(len(p)):
        values.append(construct_phi(phi0, q, w, delta, mass, pivot=pv, trim=trim).value)
        labels.append((p.as_lists(), pv))
    return OverlapReport(_max_deviation(values), labels, values)


def free_multitime(phi0: GridFunction, times: Sequence[float], mass: float = 0.0) -> GridFunction:
    """Non-interacting evolution of each particle to its own time."""
    vals = phi0.values
    for j, t in enumerate(times):
        vals = characteristic_steps(vals, phi0.n_particles, [j], _check_steps(t, phi0.grid.spacing),
                                    phi0.grid.spacing, mass)
    return phi0.with_values(vals)


def family_residual(phi0: GridFunction, target: SpacetimeConfig, family: Sequence[int],
                    w: Callable | None, delta: float, mass: float = 0.0) -> float:
    """Finite-difference residual of the family equation at ``target``.

    Compares ``i d/dt`` of the constructed function, moving the times of
    ``family`` together by one spacing in each direction, with the family
    Hamiltonian applied by central differences. Returns the largest spinor
    component of the residual.
    """
    g = phi0.grid
    h = g.spacing
    fam = sorted(family)
    t = float(target.times[fam[0]])
    if np.any(target.times[fam] != t):
        raise InvalidInputError("family members must share their time")
    plus = construct_phi(phi0, target.with_time(fam, t + h), w, delta, mass).value
    minus = construct_phi(phi0, target.with_time(fam, t - h), w, delta, mass).value
    mid = construct_phi(phi0, target, w, delta, mass, return_slice=True)
    n = phi0.n_particles
    idx = tuple(g.index_of(x) for x in target.positions[:, 0])
    vals = mid.data.values
    hpsi = 0.0
    for j in fam:
        d = stencil(vals, j, h, 2, 1, False)
        hpsi = hpsi - 1j * apply_spin(ALPHA_1D, d, n + j) + mass * apply_spin(BETA_1D, vals, n + j)
    v = _pair_sum(w, [g.coords] * n, fam)
    if v is not None:
        hpsi = hpsi + v.reshape(v.shape + (1,) * n) * vals
    lhs = 1j * (plus - minus) / (2 * h)
    return float(np.max(np.abs(lhs - np.asarray(hpsi)[idx])))

