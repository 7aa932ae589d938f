"""Consistency relations for interaction potentials and gauge extraction.

Configurations are arrays of space-time points with shape ``(..., N, 1 + d)``:
entry ``[..., i, 0]`` is the time ``t_i`` of particle ``i`` and
``[..., i, 1:]`` its position. Particles are labelled ``1..N`` in tables and
CSV output and indexed from zero in code.

For scalar potentials the necessary conditions for the multi-time equations
``i d/dt_j phi = (H_j^free + V_j) phi`` to be consistent are

* ``r1 = |dV_j/dt_i - dV_i/dt_j| = 0``
* ``r2 = max_a |dV_j/dx_{i,a}| = 0``

for all ``i != j``. When both hold, ``V_j = Vtilde_j(x_j, t_j) + dtheta/dt_j``
and :func:`gauge_decompose` recovers ``theta`` and ``Vtilde``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Sequence

import numpy as np
import sympy
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator

from .errors import InconsistentInputError, InvalidInputError, ShapeError
from .operators import dagger, is_hermitian

EvalFn = Callable[[int, np.ndarray], np.ndarray]

MIN_SEPARATION = 1e-2


class PotentialField:
    """Per-particle potentials ``V_j`` of all ``N`` space-time points.

    Parameters
    ----------
    n_particles : int
    space_dim : int
        1 or 3.
    eval_fn : callable ``(j, X) -> values``
        ``X`` has shape ``(..., N, 1 + space_dim)``. Scalar kinds return
        ``(...)`` real arrays, matrix kinds ``(..., k_j, k_j)`` Hermitian arrays.
    spin_dims : sequence of int, optional
        ``k_j`` per particle; ``None`` for scalar potentials.
    """

    def __init__(self, n_particles: int, space_dim: int, eval_fn: EvalFn,
                 spin_dims: Sequence[int] | None = None, name: str = "potential"):
        if space_dim not in (1, 3):
            raise InvalidInputError("space_dim must be 1 or 3")
        if n_particles < 1:
            raise InvalidInputError("need at least one particle")
        if spin_dims is not None and len(spin_dims) != n_particles:
            raise ShapeError("one spin dimension per particle")
        self.n_particles = n_particles
        self.space_dim = space_dim
        self._eval = eval_fn
        self.spin_dims = None if spin_dims is None else tuple(int(k) for k in spin_dims)
        self.name = name

    @property
    def kind(self) -> str:
        return "scalar" if self.spin_dims is None else "matrix"

    def __call__(self, j: int, config) -> np.ndarray:
        x = np.asarray(config, dtype=float)
        if x.shape[-2:] != (self.n_particles, 1 + self.space_dim):
            raise ShapeError(f"configuration shape {x.shape} does not match "
                             f"(N={self.n_particles}, {1 + self.space_dim})")
        out = np.asarray(self._eval(j, x))
        if self.kind == "scalar":
            return np.broadcast_to(out, x.shape[:-2]).astype(float)
        k = self.spin_dims[j]
        return np.broadcast_to(out, x.shape[:-2] + (k, k)).astype(complex)

    def validate(self, config, tol: float = 1e-10) -> None:
        if self.kind == "matrix":
            for j in range(self.n_particles):
                if not is_hermitian(self(j, config), tol):
                    raise InvalidInputError(f"V_{j + 1} is not Hermitian")

    def __add__(self, other: "PotentialField") -> "PotentialField":
        if (self.n_particles, self.space_dim, self.spin_dims) != (
                other.n_particles, other.space_dim, other.spin_dims):
            raise ShapeError("potentials are not compatible")
        return PotentialField(self.n_particles, self.space_dim,
                              lambda j, x: self._eval(j, x) + other._eval(j, x),
                              self.spin_dims, f"{self.name}+{other.name}")


# ----------------------------------------------------------------- builtins

def _pair_distances(x: np.ndarray, j: int) -> np.ndarray:
    """``|x_j - x_k|`` for all k, shape ``(..., N)`` (zero at k = j)."""
    pos = x[..., 1:]
    return np.linalg.norm(pos - pos[..., j:j + 1, :], axis=-1)


def coulomb_split(n_particles: int = 2, charge: float = 1.0, space_dim: int = 3) -> PotentialField:
    """Coulomb interaction with each pair term shared equally.

    ``V_j = (charge / 2) * sum_{k != j} 1 / |x_j - x_k|``, so the ``V_j`` add
    up to the usual Coulomb energy. Non-finite at coincident positions.
    """
    def ev(j, x):
        r = _pair_distances(x, j)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(np.arange(n_particles) == j, 0.0, 1.0 / r)
        return 0.5 * charge * inv.sum(axis=-1)

    return PotentialField(n_particles, space_dim, ev, name="coulomb-split")


def gaussian_pair(n_particles: int = 2, amplitude: float = 1.0, width: float = 1.0,
                  space_dim: int = 1) -> PotentialField:
    """Gaussian pair interaction shared equally between the two partners.

    ``V_j = (amplitude / 2) * sum_{k != j} exp(-|x_j - x_k|^2 / (2 width^2))``
    """
    def ev(j, x):
        r = _pair_distances(x, j)
        g = np.exp(-0.5 * (r / width) ** 2)
        g = np.where(np.arange(n_particles) == j, 0.0, g)
        return 0.5 * amplitude * g.sum(axis=-1)

    return PotentialField(n_particles, space_dim, ev, name="gaussian-pair")


def _spacetime_symbols(space_dim: int):
    t = sympy.Symbol("t")
    xs = (sympy.Symbol("x"),) if space_dim == 1 else sympy.symbols("x1:4")
    return t, xs


def _parse(expr, allowed, what: str):
    names = {str(s): s for s in allowed}
    e = sympy.sympify(expr, locals=names) if isinstance(expr, str) else sympy.sympify(expr)
    unknown = e.free_symbols - set(allowed)
    if unknown:
        raise InvalidInputError(f"{what}: unknown symbols {sorted(map(str, unknown))}")
    return e


def external(exprs: Sequence, space_dim: int = 1) -> PotentialField:
    """Non-interacting potentials ``V_j = u_j(t_j, x_j)`` from symbolic expressions.

    Expressions use ``t`` and ``x`` (1D) or ``x1, x2, x3`` (3D).
    """
    t, xs = _spacetime_symbols(space_dim)
    fns = [sympy.lambdify((t,) + xs, _parse(e, (t,) + xs, f"u_{j + 1}"), "numpy")
           for j, e in enumerate(exprs)]

    def ev(j, x):
        pt = x[..., j, :]
        return np.asarray(fns[j](*[pt[..., c] for c in range(1 + space_dim)]), dtype=float)

    return PotentialField(len(fns), space_dim, ev, name="external")


def gradient_gauge(g, exprs: Sequence | None = None, n_particles: int = 2,
                   space_dim: int = 1) -> PotentialField:
    """``V_j = dg/dt_j (t_1..t_N) + u_j(t_j, x_j)``, consistent by construction."""
    ts = sympy.symbols(f"t1:{n_particles + 1}")
    ge = _parse(g, ts, "g")
    grads = [sympy.lambdify(ts, sympy.diff(ge, s), "numpy") for s in ts]

    def ev(j, x):
        return np.asarray(grads[j](*[x[..., k, 0] for k in range(n_particles)]), dtype=float)

    pot = PotentialField(n_particles, space_dim, ev, name="gradient-gauge")
    pot.theta_exact = sympy.lambdify(ts, ge, "numpy")
    if exprs is not None:
        if len(exprs) != n_particles:
            raise ShapeError("one external expression per particle")
        pot = pot + external(exprs, space_dim)
        pot.theta_exact = sympy.lambdify(ts, ge, "numpy")
    return pot


def sample_configurations(rng: np.random.Generator, n_samples: int, n_particles: int,
                          space_dim: int, spread: float = 1.0, time_spread: float = 1.0,
                          min_separation: float = MIN_SEPARATION, warn: bool = True) -> np.ndarray:
    """Random configurations with pairwise distances at least ``min_separation``.

    Rejected draws are replaced and counted; with ``warn`` a warning reports
    the count.
    """
    out = np.empty((n_samples, n_particles, 1 + space_dim))
    rejected = 0
    i = 0
    while i < n_samples:
        c = np.empty((n_particles, 1 + space_dim))
        c[:, 0] = rng.uniform(-time_spread, time_spread, n_particles)
        c[:, 1:] = rng.uniform(-spread, spread, (n_particles, space_dim))
        d = np.linalg.norm(c[:, None, 1:] - c[None, :, 1:], axis=-1)
        if n_particles > 1 and np.min(d[np.triu_indices(n_particles, 1)]) < min_separation:
            rejected += 1
            continue
        out[i] = c
        i += 1
    if rejected and warn:
        warnings.warn(f"rejected {rejected} configurations closer than {min_separation}")
    return out


# ------------------------------------------------------------- residuals

def _partial(pot: PotentialField, j: int, configs: np.ndarray, i: int, mu: int, h: float):
    """Centered difference of ``V_j`` in coordinate ``mu`` of particle ``i``."""
    plus = configs.copy()
    minus = configs.copy()
    plus[..., i, mu] += h
    minus[..., i, mu] -= h
    return (pot(j, plus) - pot(j, minus)) / (2 * h)


@dataclass
class ResidualTable:
    """Rows ``(sample_id, i, j, *residuals)`` with 1-based particle labels."""

    columns: tuple
    rows: list = field(default_factory=list)
    flagged: list = field(default_factory=list)  # sample ids excluded as singular

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(self.columns))

    def max(self, column: str) -> float:
        k = self.columns.index(column)
        arr = self.as_array()
        return float(arr[:, k].max()) if len(arr) else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([int(row[0]), int(row[1]), int(row[2])]
                           + [repr(float(v)) for v in row[3:]])


def relation_residuals(pot: PotentialField, samples, fd_step: float = 1e-5) -> ResidualTable:
    """Scalar consistency residuals ``r1, r2`` for every sample and ordered pair.

    Samples where some ``V_j`` (or a shifted evaluation) is not finite are
    listed in ``flagged`` and left out of the table.
    """
    if pot.kind != "scalar":
        raise InvalidInputError("relation_residuals expects a scalar potential")
    if fd_step <= 0:
        raise InvalidInputError("fd_step must be positive")
    x = np.asarray(samples, dtype=float)
    if x.ndim == 2:
        x = x[None]
    n, d = pot.n_particles, pot.space_dim
    table = ResidualTable(("sample_id", "i", "j", "r1", "r2"))
    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.stack([np.stack([_partial(pot, j, x, i, 0, fd_step) for i in range(n)], -1)
                       for j in range(n)], -2)  # dt[s, j, i] = dV_j/dt_i
        dx = np.stack([np.stack([np.stack([_partial(pot, j, x, i, a, fd_step)
                                           for a in range(1, d + 1)], -1)
                                 for i in range(n)], -2)
                       for j in range(n)], -3)  # dx[s, j, i, a]
        base = np.stack([pot(j, x) for j in range(n)], -1)
    for s in range(x.shape[0]):
        if not (np.all(np.isfinite(base[s])) and np.all(np.isfinite(dt[s]))
                and np.all(np.isfinite(dx[s]))):
            table.flagged.append(s)
            continue
        for i, j in permutations(range(n), 2):
            r1 = abs(dt[s, j, i] - dt[s, i, j])
            r2 = float(np.max(np.abs(dx[s, j, i])))
            table.rows.append((s, i + 1, j + 1, float(r1), r2))
    return table


# -------------------------------------------------------- matrix potentials

def complete_hermitian_basis(first, tol: float = 1e-10) -> np.ndarray:
    """Extend linearly independent Hermitian matrices to a basis of all
    Hermitian ``k x k`` matrices (real dimension ``k**2``).

    The added elements are orthonormal in the Hilbert-Schmidt product and
    orthogonal to ``first``; the given elements are kept unchanged and first.
    """
    first = np.asarray(first, dtype=complex)
    k = first.shape[-1]
    cands = []
    for a in range(k):
        e = np.zeros((k, k), complex)
        e[a, a] = 1
        cands.append(e)
    for a in range(k):
        for b in range(a + 1, k):
            e = np.zeros((k, k), complex)
            e[a, b] = e[b, a] = 1 / np.sqrt(2)
            cands.append(e)
            e = np.zeros((k, k), complex)
            e[a, b], e[b, a] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            cands.append(e)
    ortho = []
    for m in first:  # orthonormalized copies used only for projection
        v = m - sum(np.vdot(q, m).real * q for q in ortho)
        nv = np.sqrt(np.vdot(v, v).real)
        if nv < tol:
            raise InvalidInputError("initial basis elements are linearly dependent")
        ortho.append(v / nv)
    extra = []
    for c in cands:
        v = c - sum(np.vdot(q, c).real * q for q in ortho)
        nv = np.sqrt(np.vdot(v, v).real)
        if nv > 1e-8:
            v = v / nv
            ortho.append(v)
            extra.append(v)
        if len(ortho) == k * k:
            break
    return np.concatenate([first, np.array(extra).reshape(-1, k, k)])


def basis_coefficients(values, basis, cond_limit: float = 1e8, label: str = "") -> np.ndarray:
    """Real coefficients ``d`` with ``values = sum_a d_a basis_a`` (least squares,
    Hilbert-Schmidt product).

    ``values`` has shape ``(..., k, k)`` and ``basis`` ``(..., n_b, k, k)``.
    Raises :class:`InvalidInputError` if the Gram matrix is ill-conditioned.
    """
    values = np.asarray(values, dtype=complex)
    basis = np.asarray(basis, dtype=complex)
    gram = np.einsum("...axy,...bxy->...ab", basis.conj(), basis).real
    cond = np.linalg.cond(gram)
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_limit):
        worst = float(np.max(np.where(np.isfinite(cond), cond, np.inf)))
        raise InvalidInputError(f"ill-conditioned basis {label} (condition {worst:.3g})")
    rhs = np.einsum("...axy,...xy->...a", basis.conj(), values).real
    return np.linalg.solve(gram, rhs[..., None])[..., 0]


def matrix_relation_residuals(pot: PotentialField, basis, samples,
                              fd_step: float = 1e-5) -> ResidualTable:
    """Residuals of the coefficient relations for matrix potentials.

    ``V_i = sum_alpha A_{i,alpha}(x_i) d_{i,alpha}``, where the first ``1 + d``
    basis elements are ``I`` and the matrices multiplying the spatial
    derivatives of particle ``i``. For every sample and ordered pair ``i != j``
    the table reports

    * ``r_extra = max |d d_{j,alpha} / d x_{i,mu}|`` over ``alpha >= 1 + d``
    * ``r_mixed = max |d d_{j,mu} / d x_{i,nu} - d d_{i,nu} / d x_{j,mu}|``
      over ``mu, nu in 0..d``

    Parameters
    ----------
    basis : callable ``(i, x_i) -> (..., n_b, k_i, k_i)`` or a list of
        constant arrays ``(n_b, k_i, k_i)``, one per particle.
    """
    if pot.kind != "matrix":
        raise InvalidInputError("matrix_relation_residuals expects a matrix potential")
    x = np.asarray(samples, dtype=float)
    if x.ndim == 2:
        x = x[None]
    n, d = pot.n_particles, pot.space_dim
    h = float(fd_step)

    def basis_at(i, xi):
        if callable(basis):
            return np.asarray(basis(i, xi), dtype=complex)
        b = np.asarray(basis[i], dtype=complex)
        return np.broadcast_to(b, xi.shape[:-1] + b.shape)

    def coeffs(j, cfg):
        b = basis_at(j, cfg[..., j, :])
        if b.shape[-3] != pot.spin_dims[j] ** 2:
            raise InvalidInputError(f"basis for particle {j + 1} must have k^2 elements")
        try:
            return basis_coefficients(pot(j, cfg), b)
        except InvalidInputError as exc:
            raise InvalidInputError(f"particle {j + 1}: {exc} near {cfg[..., j, :].tolist()}") from None

    for j in range(n):
        coeffs(j, x)  # conditioning check at the samples themselves

    # D[j][i][s, mu, alpha] = d d_{j,alpha} / d x_{i,mu}
    D = {}
    for j, i in permutations(range(n), 2):
        grads = []
        for mu in range(1 + d):
            plus, minus = x.copy(), x.copy()
            plus[:, i, mu] += h
            minus[:, i, mu] -= h
            grads.append((coeffs(j, plus) - coeffs(j, minus)) / (2 * h))
        D[j, i] = np.stack(grads, axis=1)

    table = ResidualTable(("sample_id", "i", "j", "r_extra", "r_mixed"))
    for s in range(x.shape[0]):
        for i, j in permutations(range(n), 2):
            dji = D[j, i][s]  # (mu, alpha)
            dij = D[i, j][s]
            extra = float(np.max(np.abs(dji[:, 1 + d:]), initial=0.0))
            # dji[nu, mu] = d d_{j,mu}/dx_{i,nu}; dij[mu, nu] = d d_{i,nu}/dx_{j,mu}
            mixed = float(np.max(np.abs(dji[:, :1 + d].T - dij[:, :1 + d])))
            table.rows.append((s, i + 1, j + 1, extra, mixed))
    return table


# ----------------------------------------------------- gauge decomposition

@dataclass
class GaugeDecomposition:
    """Gauge data ``theta``, ``Vtilde_j`` and the check residual.

    ``theta_grid`` holds ``theta`` on the tensor grid ``axes`` and ``w_grid``
    the functions ``W_j = V_j - Vtilde_j``, shape ``(N,) + grid``.
    """

    axes: list
    theta_grid: np.ndarray
    w_grid: np.ndarray
    v_tilde: list
    residual: float
    x_spread: float

    def theta(self, times) -> np.ndarray:
        interp = RegularGridInterpolator(self.axes, self.theta_grid, method="cubic")
        return interp(np.atleast_2d(np.asarray(times, dtype=float)))


def _time_axes(box, grid):
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] >= box[:, 1]):
        raise InvalidInputError("box must be a list of (lo, hi) pairs with lo < hi")
    if np.any(box[:, 0] > 0) or np.any(box[:, 1] < 0):
        raise InvalidInputError("box must contain the origin (theta is normalized there)")
    grid = np.broadcast_to(np.asarray(grid, dtype=int), (len(box),))
    axes = []
    for (lo, hi), m in zip(box, grid):
        ax = np.union1d(np.linspace(lo, hi, m), [0.0])
        axes.append(ax)
    return axes


def gauge_decompose(pot: PotentialField, box, grid=64, positions=None, tol: float = 1e-6,
                    fd_step: float = 1e-5, seed: int = 0) -> GaugeDecomposition:
    """Split a consistent scalar potential into ``Vtilde_j(x_j, t_j) + dtheta/dt_j``.

    Parameters
    ----------
    pot : PotentialField
        Scalar potential satisfying the relations within ``tol``.
    box : sequence of (lo, hi)
        Time box, one pair per particle; must contain the origin.
    grid : int or sequence of int
        Nodes per time axis.
    positions : array, shape (P, N, d), optional
        Spatial samples used to verify that ``W_j`` does not depend on
        positions. Defaults to 6 random well-separated configurations.
    tol : float
        Accepted size of the relation residuals.

    Raises
    ------
    InconsistentInputError
        If the relation residuals exceed ``10 * tol`` on the samples, or
        ``W_j`` varies with positions by more than ``10 * tol``.
    """
    if pot.kind != "scalar":
        raise InvalidInputError("gauge_decompose handles scalar potentials")
    n, d = pot.n_particles, pot.space_dim
    axes = _time_axes(box, grid)
    if len(axes) != n:
        raise ShapeError("box needs one interval per particle")
    rng = np.random.default_rng(seed)
    if positions is None:
        positions = sample_configurations(rng, 6, n, d, min_separation=0.5, warn=False)[..., 1:]
    positions = np.asarray(positions, dtype=float).reshape(-1, n, d)

    # premises: relation residuals at random times inside the box
    probe = np.empty((len(positions), n, 1 + d))
    probe[..., 1:] = positions
    lo = np.array([ax[0] for ax in axes])
    hi = np.array([ax[-1] for ax in axes])
    probe[..., 0] = rng.uniform(lo, hi, size=(len(positions), n))
    table = relation_residuals(pot, probe, fd_step)
    worst = max(table.max("r1"), table.max("r2"))
    if table.flagged or worst > 10 * tol:
        raise InconsistentInputError(
            f"{pot.name}: consistency relations violated (max residual {worst:.3g})")

    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)  # grid + (N,)
    gshape = mesh.shape[:-1]
    w = np.empty((len(positions), n) + gshape)
    for p, pos in enumerate(positions):
        cfg = np.empty(gshape + (n, 1 + d))
        cfg[..., 1:] = pos
        cfg[..., 0] = mesh
        for j in range(n):
            own = cfg.copy()
            own[..., 0] = 0.0
            own[..., j, 0] = mesh[..., j]
            w[p, j] = pot(j, cfg) - pot(j, own)
    spread = float(np.max(np.abs(w - w[:1]))) if len(w) > 1 else 0.0
    if spread > 10 * tol:
        raise InconsistentInputError(f"W_j depends on positions (spread {spread:.3g})")
    w_ref = w[0]

    # theta along the axis-ordered staircase 0 -> t, trapezoid rule
    zero_idx = [int(np.flatnonzero(ax == 0.0)[0]) for ax in axes]
    theta = np.zeros(gshape)
    for k in range(n):
        sl = tuple(slice(None) if m <= k else zero_idx[m] for m in range(n))
        wk = w_ref[k][sl]  # depends on t_1..t_k
        ck = cumulative_trapezoid(wk, axes[k], axis=k, initial=0.0)
        ck = ck - np.take(ck, [zero_idx[k]], axis=k)
        theta = theta + ck.reshape(ck.shape + (1,) * (n - k - 1))

    grads = np.gradient(theta, *axes, edge_order=2) if n > 1 else [np.gradient(theta, axes[0], edge_order=2)]
    residual = float(max(np.max(np.abs(g - w_ref[k])) for k, g in enumerate(grads)))

    def make_vtilde(j):
        ref = positions[0]

        def vt(xj):
            xj = np.asarray(xj, dtype=float)
            cfg = np.broadcast_to(np.concatenate([np.zeros((n, 1)), ref], 1),
                                  xj.shape[:-1] + (n, 1 + d)).copy()
            cfg[..., j, :] = xj
            return pot(j, cfg)
        return vt

    return GaugeDecomposition(axes, theta, w_ref, [make_vtilde(j) for j in range(n)],
                              residual, spread)
