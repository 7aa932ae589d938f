"""Lattice partial Hamiltonians, commutator checks and light-cone-exact evolution.

Array layout of a :class:`GridFunction` with ``N`` particles in ``d``
dimensions: ``values.shape == (n,) * (d * N) + spin_dims``. Particle ``j``
owns the spatial axes ``j*d .. j*d + d - 1`` and the spin axis ``d*N + j``.

The 1D Dirac analog uses ``alpha = sigma_1`` and ``beta = sigma_3``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BoundaryContactError, IntegratorFailure, InvalidInputError, ShapeError,
)
from .operators import PAULI_X, PAULI_Y, PAULI_Z, matrix_exp

# Dirac matrices in the standard representation
DIRAC_BETA = np.diag([1, 1, -1, -1]).astype(complex)
DIRAC_ALPHA = np.array([np.block([[np.zeros((2, 2)), s], [s, np.zeros((2, 2))]])
                        for s in (PAULI_X, PAULI_Y, PAULI_Z)], dtype=complex)
ALPHA_1D = PAULI_X
BETA_1D = PAULI_Z

FIRST_DERIVATIVE = {
    2: ((-1, 1), (-0.5, 0.5)),
    4: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
}
SECOND_DERIVATIVE = {
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    4: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
}


@dataclass(frozen=True)
class Grid:
    """Uniform lattice ``origin + spacing * k`` for ``k = 0..points_per_axis-1``
    along each of ``space_dim`` axes (the same for every particle)."""

    space_dim: int
    points_per_axis: int
    spacing: float
    boundary: str = "zero"
    origin: float = 0.0

    def __post_init__(self):
        if self.space_dim not in (1, 3):
            raise InvalidInputError("space_dim must be 1 or 3")
        if self.points_per_axis < 8:
            raise InvalidInputError("points_per_axis must be >= 8")
        if not self.spacing > 0:
            raise InvalidInputError("spacing must be positive")
        if self.boundary not in ("zero", "periodic"):
            raise InvalidInputError("boundary must be 'zero' or 'periodic'")

    @classmethod
    def centered(cls, space_dim: int, points_per_axis: int, spacing: float,
                 boundary: str = "zero") -> "Grid":
        return cls(space_dim, points_per_axis, spacing, boundary,
                   -0.5 * (points_per_axis - 1) * spacing)

    @property
    def coords(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.points_per_axis)

    @property
    def extent(self) -> float:
        return self.spacing * (self.points_per_axis - 1)

    def index_of(self, x: float) -> int:
        k = (x - self.origin) / self.spacing
        ki = int(round(k))
        if abs(k - ki) > 1e-9 or not 0 <= ki < self.points_per_axis:
            raise InvalidInputError(f"position {x} is not a grid node")
        return ki

    def to_dict(self) -> dict:
        return {"space_dim": self.space_dim, "points_per_axis": self.points_per_axis,
                "spacing": self.spacing, "boundary": self.boundary, "origin": self.origin}


class GridFunction:
    """Spinor-valued function of ``N`` particle positions sampled on a grid."""

    def __init__(self, grid: Grid, n_particles: int, spin_dims: Sequence[int], values):
        spin_dims = tuple(int(k) for k in spin_dims)
        if len(spin_dims) != n_particles:
            raise ShapeError("one spin dimension per particle")
        values = np.asarray(values, dtype=complex)
        expected = (grid.points_per_axis,) * (grid.space_dim * n_particles) + spin_dims
        if values.shape != expected:
            raise ShapeError(f"values shape {values.shape}, expected {expected}")
        self.grid = grid
        self.n_particles = n_particles
        self.spin_dims = spin_dims
        self.values = values

    def spatial_axes(self, j: int) -> list[int]:
        d = self.grid.space_dim
        return list(range(j * d, (j + 1) * d))

    def spin_axis(self, j: int) -> int:
        return self.grid.space_dim * self.n_particles + j

    @property
    def cell_volume(self) -> float:
        return self.grid.spacing ** (self.grid.space_dim * self.n_particles)

    def norm(self) -> float:
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def inner(self, other: "GridFunction") -> complex:
        return complex(self.cell_volume * np.vdot(self.values, other.values))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, self.n_particles, self.spin_dims, values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self.with_values(self.values - other.values)

    def positions(self) -> np.ndarray:
        """Coordinates of every grid configuration, shape ``grid_shape + (N, d)``."""
        d, n = self.grid.space_dim, self.n_particles
        c = self.grid.coords
        mesh = np.meshgrid(*([c] * (d * n)), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(mesh[0].shape + (n, d))


# ------------------------------------------------------------ initial states

def smoothstep5(u):
    """Quintic C^2 step: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10 - 15 * u + 6 * u ** 2)


def compact_cutoff(r, inner: float, outer: float):
    """1 for ``r <= inner``, 0 for ``r >= outer``, C^2 in between."""
    if outer <= inner:
        raise InvalidInputError("cutoff needs outer > inner")
    return np.clip(1.0 - smoothstep5((np.asarray(r) - inner) / (outer - inner)), 0.0, 1.0)


def gaussian_state(grid: Grid, center, width: float, spinor=(1.0,), momentum=0.0,
                   cutoff: float | None = 3.0) -> GridFunction:
    """Single-particle Gaussian ``exp(-|x-c|^2/(4 w^2) + i k.x)`` times ``spinor``.

    With ``cutoff`` set, the profile is multiplied by a C^2 bump vanishing
    beyond ``cutoff * width`` (equal to 1 inside ``(cutoff - 1) * width``) so
    the support is exactly compact. The result is normalized.
    """
    d = grid.space_dim
    c = grid.coords
    mesh = np.stack(np.meshgrid(*([c] * d), indexing="ij"), axis=-1)
    center = np.broadcast_to(np.asarray(center, dtype=float), (d,))
    k = np.broadcast_to(np.asarray(momentum, dtype=float), (d,))
    r = np.linalg.norm(mesh - center, axis=-1)
    prof = np.exp(-r ** 2 / (4 * width ** 2) + 1j * mesh @ k)
    if cutoff is not None:
        prof = prof * compact_cutoff(r, (cutoff - 1) * width, cutoff * width)
    spinor = np.asarray(spinor, dtype=complex)
    psi = GridFunction(grid, 1, (len(spinor),), prof[..., None] * spinor)
    return psi.with_values(psi.values / psi.norm())


def plane_wave(grid: Grid, k: float, spinor=(1.0,)) -> GridFunction:
    if grid.space_dim != 1:
        raise InvalidInputError("plane_wave is provided for 1D grids")
    spinor = np.asarray(spinor, dtype=complex)
    return GridFunction(grid, 1, (len(spinor),), np.exp(1j * k * grid.coords)[:, None] * spinor)


def delta_cell(grid: Grid, index, spinor=(1.0,)) -> GridFunction:
    spinor = np.asarray(spinor, dtype=complex)
    vals = np.zeros((grid.points_per_axis,) * grid.space_dim + (len(spinor),), complex)
    vals[tuple(np.atleast_1d(index))] = spinor
    return GridFunction(grid, 1, (len(spinor),), vals)


def product_state(factors: Sequence[GridFunction]) -> GridFunction:
    """Tensor product of single-particle states on a common grid."""
    grid = factors[0].grid
    if any(f.grid != grid or f.n_particles != 1 for f in factors):
        raise ShapeError("factors must be single-particle states on one grid")
    d = grid.space_dim
    vals = np.ones((), complex)
    spins = []
    for f in factors:
        vals = np.multiply.outer(vals, f.values)
        spins.append(f.spin_dims[0])
    # reorder from (x1, s1, x2, s2, ...) to (x1, x2, ..., s1, s2, ...)
    n = len(factors)
    order = [j * (d + 1) + a for j in range(n) for a in range(d)] + [j * (d + 1) + d for j in range(n)]
    return GridFunction(grid, n, spins, np.transpose(vals, order))


# ------------------------------------------------------------- Hamiltonians

@dataclass(frozen=True)
class PartialHamiltonianSpec:
    """``H_j = H_j^free + V_j`` for particle ``j``.

    Parameters
    ----------
    particle : int
        Zero-based particle index.
    kind : {"schrodinger", "dirac", "dirac1d"}
    mass : float
    potential : callable, optional
        ``X (..., N, d) -> (...)`` real values or ``(..., k_j, k_j)`` Hermitian
        matrices acting on this particle's spin.
    stencil_order : {2, 4}
    """

    particle: int
    kind: str = "dirac1d"
    mass: float = 0.0
    potential: Callable | None = None
    stencil_order: int = 2

    def __post_init__(self):
        if self.kind not in ("schrodinger", "dirac", "dirac1d"):
            raise InvalidInputError(f"unknown kind {self.kind!r}")
        if self.mass < 0:
            raise InvalidInputError("mass must be >= 0")
        if self.stencil_order not in (2, 4):
            raise InvalidInputError("stencil_order must be 2 or 4")
        if self.kind == "schrodinger" and self.mass == 0:
            raise InvalidInputError("Schrodinger kind needs a positive mass")

    def required_spin(self, space_dim: int) -> int | None:
        if self.kind == "dirac":
            if space_dim != 3:
                raise ShapeError("3D Dirac kind needs a 3D grid")
            return 4
        if self.kind == "dirac1d":
            if space_dim != 1:
                raise ShapeError("dirac1d kind needs a 1D grid")
            return 2
        return None

    def alphas(self) -> np.ndarray:
        return DIRAC_ALPHA if self.kind == "dirac" else ALPHA_1D[None]

    def beta(self) -> np.ndarray:
        return DIRAC_BETA if self.kind == "dirac" else BETA_1D

    def without_potential(self) -> "PartialHamiltonianSpec":
        return PartialHamiltonianSpec(self.particle, self.kind, self.mass, None, self.stencil_order)


def shift(arr: np.ndarray, axis: int, k: int, periodic: bool) -> np.ndarray:
    """``out[i] = arr[i + k]`` along ``axis``; zero fill unless ``periodic``."""
    if k == 0:
        return arr
    if periodic:
        return np.roll(arr, -k, axis=axis)
    out = np.zeros_like(arr)
    n = arr.shape[axis]
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if abs(k) >= n:
        return out
    if k > 0:
        src[axis], dst[axis] = slice(k, None), slice(0, n - k)
    else:
        src[axis], dst[axis] = slice(0, n + k), slice(-k, None)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def stencil(arr: np.ndarray, axis: int, h: float, order: int, deriv: int, periodic: bool):
    offsets, coeffs = (FIRST_DERIVATIVE if deriv == 1 else SECOND_DERIVATIVE)[order]
    out = np.zeros_like(arr)
    for o, c in zip(offsets, coeffs):
        out += c * shift(arr, axis, o, periodic)
    return out / h ** deriv


def apply_spin(mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    """Apply ``mat`` to the spin index on ``axis``."""
    out = np.tensordot(mat, arr, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def _potential_term(spec: PartialHamiltonianSpec, x: np.ndarray, vals: np.ndarray,
                    spin_axis: int, n_spatial: int) -> np.ndarray:
    """``V_j(x) psi`` for values laid out with ``n_spatial`` leading axes."""
    v = np.asarray(spec.potential(x))
    spatial = x.shape[:-2]
    if v.shape == spatial:
        return v.reshape(spatial + (1,) * (vals.ndim - n_spatial)) * vals
    k = vals.shape[spin_axis]
    if v.shape != spatial + (k, k):
        raise ShapeError(f"potential returned {v.shape}")
    moved = np.moveaxis(vals, spin_axis, -1)
    extra = moved.ndim - n_spatial - 1
    vv = v.reshape(spatial + (1,) * extra + (k, k))
    out = np.einsum("...ab,...b->...a", vv, moved)
    return np.moveaxis(out, -1, spin_axis)


def apply_hamiltonian(spec: PartialHamiltonianSpec, psi: GridFunction) -> GridFunction:
    """``(H_j^free + V_j) psi`` with centered differences on particle ``j``'s axes."""
    g = psi.grid
    j = spec.particle
    if not 0 <= j < psi.n_particles:
        raise InvalidInputError("particle index out of range")
    need = spec.required_spin(g.space_dim)
    if need is not None and psi.spin_dims[j] != need:
        raise ShapeError(f"{spec.kind} needs spin dimension {need} for particle {j}")
    per = g.boundary == "periodic"
    vals = psi.values
    axes = psi.spatial_axes(j)
    if spec.kind == "schrodinger":
        lap = sum(stencil(vals, ax, g.spacing, spec.stencil_order, 2, per) for ax in axes)
        out = -lap / (2 * spec.mass)
    else:
        sa = psi.spin_axis(j)
        out = np.zeros_like(vals)
        for a, ax in enumerate(axes):
            out += -1j * apply_spin(spec.alphas()[a], stencil(vals, ax, g.spacing,
                                                               spec.stencil_order, 1, per), sa)
        if spec.mass:
            out += spec.mass * apply_spin(spec.beta(), vals, sa)
    if spec.potential is not None:
        n_sp = g.space_dim * psi.n_particles
        out = out + _potential_term(spec, psi.positions(), vals, psi.spin_axis(j), n_sp)
    return psi.with_values(out)


# ---------------------------------------------------- analytic application

class AnalyticState:
    """A smooth state given as a callable, probed at chosen configurations.

    Stencils are applied by evaluating the callable at shifted
    configurations, so no grid is ever allocated. ``fn(X)`` receives
    ``X`` of shape ``(P, N, d)`` and returns ``(P,) + spin_dims``.

    Parameters
    ----------
    fn : callable
    points : array, shape (P, N, d)
        Configurations where results are reported.
    spacing : float
        Stencil spacing.
    spin_dims : tuple of int
    """

    def __init__(self, fn: Callable, points, spacing: float, spin_dims: Sequence[int]):
        self.fn = fn
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 3:
            raise ShapeError("points must have shape (P, N, d)")
        if not spacing > 0:
            raise InvalidInputError("spacing must be positive")
        self.spacing = float(spacing)
        self.spin_dims = tuple(spin_dims)

    @property
    def n_particles(self) -> int:
        return self.points.shape[1]

    @property
    def space_dim(self) -> int:
        return self.points.shape[2]


def _stencil_callable(fn, j: int, a: int, h: float, order: int, deriv: int):
    offsets, coeffs = (FIRST_DERIVATIVE if deriv == 1 else SECOND_DERIVATIVE)[order]

    def out(x):
        acc = 0
        for o, c in zip(offsets, coeffs):
            y = x.copy()
            y[:, j, a] += o * h
            acc = acc + c * fn(y)
        return acc / h ** deriv

    return out


def hamiltonian_callable(spec: PartialHamiltonianSpec, fn: Callable, h: float,
                         n_particles: int, space_dim: int) -> Callable:
    """Return ``X -> (H_j fn)(X)`` with stencils of spacing ``h``."""
    j = spec.particle
    spin_axis = 1 + j  # values are (P,) + spin_dims

    def out(x):
        if spec.kind == "schrodinger":
            res = 0
            for a in range(space_dim):
                res = res + _stencil_callable(fn, j, a, h, spec.stencil_order, 2)(x)
            res = -res / (2 * spec.mass)
        else:
            res = 0
            for a in range(space_dim):
                d = _stencil_callable(fn, j, a, h, spec.stencil_order, 1)(x)
                res = res - 1j * apply_spin(spec.alphas()[a], d, spin_axis)
            if spec.mass:
                res = res + spec.mass * apply_spin(spec.beta(), fn(x), spin_axis)
        if spec.potential is not None:
            res = res + _potential_term(spec, x, fn(x), spin_axis, 1)
        return res

    return out


def gradient_callable(fn: Callable, j: int, h: float, order: int, space_dim: int) -> Callable:
    """``X -> grad_j fn(X)`` with a new axis 1 holding the components."""
    parts = [_stencil_callable(fn, j, a, h, order, 1) for a in range(space_dim)]
    return lambda x: np.stack([p(x) for p in parts], axis=1)


# -------------------------------------------------------- commutator checks

RhsFn = Callable[[np.ndarray, np.ndarray, list], np.ndarray]


def coulomb_schrodinger_rhs(mass: float = 1.0, charge: float = 1.0) -> RhsFn:
    """``[H_1, H_2] psi`` for the equally split Coulomb interaction:
    ``charge (x1 - x2) / (2 m r^3) . (grad_1 + grad_2) psi``."""
    def rhs(x, psi, grads):
        diff = x[:, 0] - x[:, 1]
        r = np.linalg.norm(diff, axis=-1)
        coef = charge * diff / (2 * mass * r[:, None] ** 3)  # (P, d)
        g = grads[0] + grads[1]  # (P, d, ...)
        return np.einsum("pa,pa...->p...", coef, g)
    return rhs


def coulomb_dirac_rhs(charge: float = 1.0) -> RhsFn:
    """``i charge (x1 - x2) / (2 r^3) . (alpha_1 + alpha_2) psi`` (3D Dirac)."""
    def rhs(x, psi, grads):
        diff = x[:, 0] - x[:, 1]
        r = np.linalg.norm(diff, axis=-1)
        coef = charge * diff / (2 * r[:, None] ** 3)
        out = 0
        for a in range(3):
            term = apply_spin(DIRAC_ALPHA[a], psi, 1) + apply_spin(DIRAC_ALPHA[a], psi, 2)
            out = out + 1j * coef[:, a].reshape((-1,) + (1,) * (psi.ndim - 1)) * term
        return out
    return rhs


def dirac1d_pair_rhs(dw: Callable) -> RhsFn:
    """``-i w'(x1 - x2) (alpha_1 + alpha_2) psi`` for ``V_1 = V_2 = w(x1 - x2)``."""
    def rhs(x, psi, grads):
        c = dw(x[:, 0, 0] - x[:, 1, 0]).reshape((-1,) + (1,) * (psi.ndim - 1))
        return -1j * c * (apply_spin(ALPHA_1D, psi, 1) + apply_spin(ALPHA_1D, psi, 2))
    return rhs


def _check_singularity_margin(x: np.ndarray, weight: np.ndarray, spacing: float):
    """Configurations with non-negligible amplitude must keep particles 5 cells apart."""
    support = weight > 1e-12 * max(float(weight.max()), 1e-300)
    diff = x[:, 0] - x[:, 1]
    r = np.linalg.norm(diff.reshape(len(x), -1), axis=-1)
    bad = support & (r < 5 * spacing)
    if np.any(bad):
        k = int(np.argmin(np.where(bad, r, np.inf)))
        raise InvalidInputError(
            f"state has support within 5 cells of the coincidence set, e.g. at "
            f"x1={x[k, 0].tolist()}, x2={x[k, 1].tolist()} (distance {r[k]:.3g})")


def commutator_check(spec1: PartialHamiltonianSpec, spec2: PartialHamiltonianSpec,
                     psi, analytic_rhs: RhsFn, chunk: int = 8192) -> float:
    """Relative residual ``||[H_1, H_2] psi - RHS psi|| / ||RHS psi||``.

    ``analytic_rhs(X, psi, grads)`` gets configurations ``X (P, N, d)``, the
    state values there and ``grads = [grad_1 psi, grad_2 psi]`` computed with
    the same stencils; it returns the closed-form commutator applied to psi.

    Parameters
    ----------
    psi : GridFunction or AnalyticState
        Grid states use array stencils over the whole grid (results within
        two stencil radii of a zero-padded edge are dropped). Analytic states
        are probed at their ``points`` with stencils of their ``spacing``.
    """
    order = max(spec1.stencil_order, spec2.stencil_order)
    if isinstance(psi, AnalyticState):
        n, d, h = psi.n_particles, psi.space_dim, psi.spacing
        for s in (spec1, spec2):
            need = s.required_spin(d)
            if need is not None and psi.spin_dims[s.particle] != need:
                raise ShapeError(f"{s.kind} needs spin dimension {need}")
        h1 = hamiltonian_callable(spec1, psi.fn, h, n, d)
        h2 = hamiltonian_callable(spec2, psi.fn, h, n, d)
        h12 = hamiltonian_callable(spec1, h2, h, n, d)
        h21 = hamiltonian_callable(spec2, h1, h, n, d)
        g1 = gradient_callable(psi.fn, spec1.particle, h, order, d)
        g2 = gradient_callable(psi.fn, spec2.particle, h, order, d)
        num = den = 0.0
        for start in range(0, len(psi.points), chunk):
            x = psi.points[start:start + chunk]
            vals = psi.fn(x)
            w = np.abs(vals.reshape(len(x), -1)).max(axis=1)
            _check_singularity_margin(x, w, h)
            comm = h12(x) - h21(x)
            rhs = analytic_rhs(x, vals, [g1(x), g2(x)])
            num += float(np.sum(np.abs(comm - rhs) ** 2))
            den += float(np.sum(np.abs(rhs) ** 2))
        return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))

    g = psi.grid
    x = psi.positions()
    flat_x = x.reshape(-1, psi.n_particles, g.space_dim)
    w = np.abs(psi.values.reshape(len(flat_x), -1)).max(axis=1)
    if spec1.potential is not None or spec2.potential is not None:
        _check_singularity_margin(flat_x, w, g.spacing)
    a = apply_hamiltonian(spec1, apply_hamiltonian(spec2, psi)).values
    b = apply_hamiltonian(spec2, apply_hamiltonian(spec1, psi)).values
    comm = a - b
    per = g.boundary == "periodic"
    grads = []
    for s in (spec1, spec2):
        comps = [stencil(psi.values, ax, g.spacing, order, 1, per) for ax in psi.spatial_axes(s.particle)]
        grads.append(np.stack([c.reshape(len(flat_x), *psi.spin_dims) for c in comps], axis=1))
    rhs = analytic_rhs(flat_x, psi.values.reshape(len(flat_x), *psi.spin_dims), grads)
    rhs = rhs.reshape(psi.values.shape)
    diff = comm - rhs
    if not per:
        m = 2 * (order // 2)
        inner = tuple(slice(m, -m) for _ in range(g.space_dim * psi.n_particles))
        diff, rhs = diff[inner], rhs[inner]
    den = np.linalg.norm(rhs)
    return float(np.linalg.norm(diff) / den) if den > 0 else float(np.linalg.norm(diff))


def coulomb_test_points(c1, c2, spacing: float = 0.05, n1: int = 32, n2: int = 2) -> np.ndarray:
    """Probe configurations: an ``n1^3`` block around ``c1`` for particle 1
    times an ``n2^3`` block around ``c2`` for particle 2, both of step ``spacing``."""
    def block(c, n):
        off = spacing * (np.arange(n) - 0.5 * (n - 1))
        m = np.stack(np.meshgrid(off, off, off, indexing="ij"), -1).reshape(-1, 3)
        return np.asarray(c, float) + m
    b1, b2 = block(c1, n1), block(c2, n2)
    x = np.empty((len(b1), len(b2), 2, 3))
    x[:, :, 0] = b1[:, None]
    x[:, :, 1] = b2[None, :]
    return x.reshape(-1, 2, 3)


def gaussian_pair_callable(c1, c2, width: float, spinor=None) -> Callable:
    """``X -> exp(-|x1-c1|^2/(4w^2) - |x2-c2|^2/(4w^2))`` (times ``spinor (x) spinor``)."""
    c1, c2 = np.asarray(c1, float), np.asarray(c2, float)

    def fn(x):
        r2 = np.sum((x[:, 0] - c1) ** 2, -1) + np.sum((x[:, 1] - c2) ** 2, -1)
        g = np.exp(-r2 / (4 * width ** 2))
        if spinor is None:
            return g[:, None, None].astype(complex)
        s = np.asarray(spinor, complex)
        return g[:, None, None] * np.multiply.outer(s, s)

    return fn


# ----------------------------------------------------------- order of evolution

def rk4_evolve(spec: PartialHamiltonianSpec, psi: GridFunction, t: float, dt: float) -> GridFunction:
    """Classical RK4 for ``i dpsi/dt = H psi`` with steps no larger than ``dt``."""
    if t == 0:
        return psi
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    n = int(np.ceil(abs(t) / dt - 1e-12))
    h = t / n
    norm0 = psi.norm()
    y = psi.values

    def f(v):
        return -1j * apply_hamiltonian(spec, psi.with_values(v)).values

    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    out = psi.with_values(y)
    if not np.all(np.isfinite(y)) or out.norm() > 1.01 * norm0:
        raise IntegratorFailure(f"norm grew from {norm0:.6g} to {out.norm():.6g}; reduce dt")
    return out


def order_gap(spec1: PartialHamiltonianSpec, spec2: PartialHamiltonianSpec,
              psi0: GridFunction, t1: float, t2: float, dt: float = 0.01) -> tuple[float, float]:
    """Compare ``e^{-iH_2 t_2} e^{-iH_1 t_1} psi0`` with the reverse order.

    Returns ``(gap, normalized)`` where ``normalized = gap / (t1 t2 ||[H1,H2] psi0||)``
    (``nan`` when the denominator vanishes).
    """
    a = rk4_evolve(spec2, rk4_evolve(spec1, psi0, t1, dt), t2, dt)
    b = rk4_evolve(spec1, rk4_evolve(spec2, psi0, t2, dt), t1, dt)
    gap = (a - b).norm()
    c = (apply_hamiltonian(spec1, apply_hamiltonian(spec2, psi0))
         - apply_hamiltonian(spec2, apply_hamiltonian(spec1, psi0))).norm()
    denom = abs(t1 * t2) * c
    return gap, (gap / denom if denom > 0 else float("nan"))


# ---------------------------------------------------- characteristic scheme

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def range_delta_bump(r, delta: float, spacing: float):
    """C^2 factor equal to 1 for ``|r| <= delta - 2 spacing`` and 0 for ``|r| >= delta``."""
    if delta <= 2 * spacing:
        raise InvalidInputError("delta must exceed two grid spacings")
    return compact_cutoff(np.abs(r), delta - 2 * spacing, delta)


def truncate_range(w: Callable, delta: float, spacing: float) -> Callable:
    """``w`` multiplied by :func:`range_delta_bump`, so it vanishes for ``|x| >= delta``."""
    def wd(x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) >= delta, 0.0, w(x) * range_delta_bump(x, delta, spacing))
    return wd


def pair_potential_grid(grid: Grid, n_particles: int, members: Sequence[int],
                        w: Callable | None) -> np.ndarray | float:
    """``sum_{i != k in members} w(x_i - x_k)`` on the 1D configuration grid
    (ordered pairs, so each unordered pair counts twice), broadcastable."""
    if w is None or len(members) < 2:
        return 0.0
    c = grid.coords
    out = 0.0
    for i in members:
        for k in members:
            if i == k:
                continue
            shape_i = [1] * n_particles
            shape_k = [1] * n_particles
            shape_i[i] = shape_k[k] = len(c)
            out = out + w(c.reshape(shape_i) - c.reshape(shape_k))
    return out


def _check_steps(t: float, spacing: float) -> int:
    k = t / spacing
    n = int(round(k))
    if abs(k - n) > 1e-9 * max(1.0, abs(k)):
        raise InvalidInputError(
            f"characteristic scheme needs dt = spacing: t={t} is not a multiple of {spacing}")
    return n


def _check_boundary(vals: np.ndarray, axes: Sequence[int], steps: int):
    for ax in axes:
        n = vals.shape[ax]
        if steps >= n:
            raise BoundaryContactError("evolution time exceeds the grid size")
        if steps == 0:
            continue
        lo = np.take(vals, range(steps), axis=ax)
        hi = np.take(vals, range(n - steps, n), axis=ax)
        if np.any(lo != 0) or np.any(hi != 0):
            raise BoundaryContactError(
                f"light cone reaches the edge of axis {ax} within {steps} steps")


def _apply_2x2(mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    """Elementwise 2x2 spin rotation; every cell is computed with the same
    arithmetic regardless of array size."""
    i0 = [slice(None)] * arr.ndim
    i1 = list(i0)
    i0[axis], i1[axis] = 0, 1
    i0, i1 = tuple(i0), tuple(i1)
    a0, a1 = arr[i0], arr[i1]
    out = np.empty_like(arr)
    out[i0] = mat[0, 0] * a0 + mat[0, 1] * a1
    out[i1] = mat[1, 0] * a0 + mat[1, 1] * a1
    return out


def characteristic_steps(vals: np.ndarray, n_particles: int, family: Sequence[int],
                         steps: int, spacing: float, mass: float = 0.0,
                         potential=None) -> np.ndarray:
    """Raw-array kernel of :func:`characteristic_evolve`.

    ``vals`` has one spatial axis per particle followed by ``n_particles``
    spin axes of size 2. Positive ``steps`` evolve forward by
    ``steps * spacing``, negative ones backward. No boundary check is made.
    """
    n_p = n_particles
    if steps == 0 or not family:
        return vals
    dt = np.sign(steps) * spacing
    direction = 1 if steps > 0 else -1
    # the scalar phase commutes with the spin rotation, so the two half
    # rotations between consecutive streams merge into one full rotation
    gen = HADAMARD @ BETA_1D @ HADAMARD
    if mass:
        half = matrix_exp(gen, -0.5j * mass * dt)
        full = matrix_exp(gen, -1j * mass * dt)
        first, last = half @ HADAMARD, HADAMARD @ half
    else:
        full, first, last = None, HADAMARD, HADAMARD
    half_phase = full_phase = None
    if potential is not None and np.any(np.asarray(potential) != 0):
        v = np.asarray(potential, dtype=float)
        shape = v.shape + (1,) * n_p
        half_phase = np.exp(-0.5j * dt * v).reshape(shape)
        full_phase = np.exp(-1j * dt * v).reshape(shape)

    def rotate(a, mat, phase):
        if mat is not None:
            for j in family:
                a = _apply_2x2(mat, a, n_p + j)
        return a if phase is None else a * phase

    vals = rotate(vals, first, half_phase)
    n = abs(steps)
    for k in range(n):
        for j in family:
            sa = n_p + j
            i0 = [slice(None)] * vals.ndim
            i1 = list(i0)
            i0[sa], i1[sa] = slice(0, 1), slice(1, 2)
            right = shift(vals[tuple(i0)], j, -direction, False)  # u_+(x) <- u_+(x - dt)
            left = shift(vals[tuple(i1)], j, direction, False)
            vals = np.concatenate([right, left], axis=sa)
        if k < n - 1:
            vals = rotate(vals, full, full_phase)
    return rotate(vals, last, half_phase)


def characteristic_evolve(psi0: GridFunction, t: float, family: Sequence[int] | None = None,
                          mass: float = 0.0, potential=None) -> GridFunction:
    """Evolve 1D Dirac particles in ``family`` by time ``t`` with ``dt = spacing``.

    Each step is a half local rotation ``exp(-i (sum_k beta_k m + V) dt/2)``,
    exact streaming of the ``alpha = +-1`` components by one cell, and a second
    half rotation. Particles outside ``family`` are parameters. The support
    therefore grows by exactly one cell per step along the evolved axes, and
    each step is unitary. ``t`` may be negative.

    Parameters
    ----------
    potential : array or float, optional
        Real multiplication operator on the configuration grid
        (broadcastable to the spatial shape).
    """
    g = psi0.grid
    if g.space_dim != 1:
        raise InvalidInputError("characteristic scheme is 1D only")
    if any(k != 2 for k in psi0.spin_dims):
        raise ShapeError("1D Dirac particles need spin dimension 2")
    n_p = psi0.n_particles
    family = list(range(n_p)) if family is None else sorted(set(family))
    steps = _check_steps(t, g.spacing)
    if steps == 0 or not family:
        return psi0
    if g.boundary != "zero":
        raise InvalidInputError("characteristic evolution uses zero-padded grids")
    _check_boundary(psi0.values, family, abs(steps))
    vals = characteristic_steps(psi0.values, n_p, family, steps, g.spacing, mass, potential)
    return psi0.with_values(vals)


def dirac1d_evolve(psi0: GridFunction, t: float, mass: float = 0.0,
                   potential: Callable | None = None) -> GridFunction:
    """Single-particle 1D Dirac evolution by the characteristic scheme.

    ``potential`` is a real function of position (time-independent).
    """
    if psi0.n_particles != 1:
        raise ShapeError("dirac1d_evolve takes a single-particle state")
    v = None if potential is None else np.asarray(potential(psi0.grid.coords), dtype=float)
    return characteristic_evolve(psi0, t, [0], mass, v)


def nparticle_dirac_evolve(psi0: GridFunction, family: Sequence[int], t: float,
                           pair_potential: Callable | None = None, mass: float = 0.0,
                           delta: float | None = None) -> GridFunction:
    """Evolve the particles in ``family`` with their mutual pair interaction.

    The family Hamiltonian is ``sum_{k in family} (-i alpha_k d_k + beta_k m)
    + sum_{i != k in family} W(x_i - x_k)``; other particles stay frozen.
    With ``delta`` given, ``W`` is first cut to range ``delta`` by
    :func:`truncate_range`.
    """
    w = pair_potential
    if w is not None and delta is not None:
        w = truncate_range(w, delta, psi0.grid.spacing)
    v = pair_potential_grid(psi0.grid, psi0.n_particles, list(family), w)
    return characteristic_evolve(psi0, t, family, mass, v if np.ndim(v) else None)


def outside_cone_amplitude(vals: np.ndarray, support_axes_bounds: dict, steps: int) -> float:
    """Largest ``|psi|`` outside the cone ``[lo - steps, hi + steps]`` per axis."""
    mask = np.zeros(vals.shape, dtype=bool)
    for ax, (lo, hi) in support_axes_bounds.items():
        idx = np.arange(vals.shape[ax])
        out = (idx < lo - steps) | (idx > hi + steps)
        shape = [1] * vals.ndim
        shape[ax] = len(idx)
        mask |= out.reshape(shape)
    return float(np.max(np.abs(vals[mask]), initial=0.0))


def support_bounds(vals: np.ndarray, axes: Sequence[int]) -> dict:
    """Index range of nonzero values along each axis in ``axes``."""
    nz = np.nonzero(vals)
    return {ax: (int(nz[ax].min()), int(nz[ax].max())) for ax in axes}
