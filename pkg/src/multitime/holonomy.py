"""Path-ordered exponentials, curvature and the consistency tests built on them.

Propagation convention: ``U`` along a path solves
``dU/ds = -i sum_j H_j(gamma(s)) gamma_j'(s) U`` with ``U(0) = I``, so later
factors multiply from the left.

Two scalings of the same 2-form are exposed:

* the consistency residual
  ``R_jk = [H_j, H_k] - i dH_k/dt_j + i dH_j/dt_k``
* the curvature
  ``F_jk = -dH_k/dt_j + dH_j/dt_k - i [H_j, H_k]``

related by ``F = -i R``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, ShapeError
from .fields import HamiltonianField
from .operators import commutator, dagger, matrix_exp, op_norm, ordered_product
from .paths import SurfacePatch, TimePath

DEFAULT_FD_STEP = 1e-4


# ---------------------------------------------------------------- curvature

def _check_step(fd_step: float) -> float:
    fd_step = float(fd_step)
    if not (fd_step > 0 and np.isfinite(fd_step)):
        raise InvalidInputError(f"fd_step must be positive, got {fd_step}")
    return fd_step


def residual_tensor(field: HamiltonianField, points, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """``R_jk`` at a batch of points, shape ``(n, N, N, dim, dim)``.

    Time derivatives use centered differences of step ``fd_step``.
    """
    h = _check_step(fd_step)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, nt = pts.shape
    if nt != field.n_times:
        raise ShapeError("points do not match the field's number of times")
    shifts = np.concatenate([np.eye(nt) * h, -np.eye(nt) * h])  # (2N, N)
    probe = (pts[:, None, :] + shifts[None]).reshape(-1, nt)
    vals = field.evaluate(np.vstack([pts, probe]))
    hh = vals[:n]
    shifted = vals[n:].reshape(n, 2, nt, nt, field.dim, field.dim)
    dh = (shifted[:, 0] - shifted[:, 1]) / (2 * h)  # dh[:, j, k] = dH_k/dt_j
    comm = hh[:, :, None] @ hh[:, None, :] - hh[:, None, :] @ hh[:, :, None]
    return comm - 1j * dh + 1j * np.swapaxes(dh, 1, 2)


def curvature_tensor(field: HamiltonianField, points, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """``F_jk = -i R_jk`` at a batch of points, shape ``(n, N, N, dim, dim)``."""
    return -1j * residual_tensor(field, points, fd_step)


@dataclass(frozen=True)
class CurvatureReport:
    """Residual and curvature for every pair ``j < k`` at one point."""

    point: np.ndarray
    residual: dict = dc_field(repr=False)
    curvature: dict = dc_field(repr=False)
    max_norm: float = 0.0

    def R(self, j: int, k: int) -> np.ndarray:
        if j == k:
            return np.zeros_like(next(iter(self.residual.values())))
        return self.residual[(j, k)] if j < k else -self.residual[(k, j)]

    def F(self, j: int, k: int) -> np.ndarray:
        return -1j * self.R(j, k)

    def norms(self) -> dict:
        return {jk: float(op_norm(r)) for jk, r in self.residual.items()}


def consistency_residual(field: HamiltonianField, point,
                         fd_step: float = DEFAULT_FD_STEP) -> CurvatureReport:
    """Evaluate the consistency residual ``R_jk`` for all ``j < k`` at ``point``.

    Returns
    -------
    CurvatureReport
        ``max_norm`` is the largest operator norm among the ``R_jk``; it is
        zero for ``N = 1``.

    Examples
    --------
    >>> from multitime.fields import pauli_pair
    >>> round(consistency_residual(pauli_pair(), [0.0, 0.0]).max_norm, 12)
    2.0
    """
    point = np.asarray(point, dtype=float)
    r = residual_tensor(field, point[None], fd_step)[0]
    pairs = {(j, k): r[j, k] for j, k in combinations(range(field.n_times), 2)}
    curv = {jk: -1j * m for jk, m in pairs.items()}
    mx = max((float(op_norm(m)) for m in pairs.values()), default=0.0)
    return CurvatureReport(point, pairs, curv, mx)


# ------------------------------------------------------- ordered exponentials

def step_propagators(field: HamiltonianField, path: TimePath) -> np.ndarray:
    """Per-substep factors ``exp(-i sum_j H_j(mid) dgamma_j)``, in path order."""
    if path.n_times != field.n_times:
        raise ShapeError("path and field have different numbers of times")
    mids, deltas = path.step_samples()
    hh = field.evaluate(mids)
    gen = np.einsum("mj,mjab->mab", deltas, hh)
    return matrix_exp(gen, -1j)


def path_ordered_exp(field: HamiltonianField, path: TimePath) -> np.ndarray:
    """Path-ordered exponential ``U_gamma`` by the exponential midpoint rule.

    Each substep contributes the exact exponential of the midpoint generator,
    so the result is unitary to rounding for Hermitian fields; the global
    error is second order in the step size.
    """
    if path.degenerate:
        return np.eye(field.dim, dtype=complex)
    return ordered_product(step_propagators(field, path))


def dyson_series(field: HamiltonianField, path: TimePath, order: int = 3) -> np.ndarray:
    """Truncated Dyson series ``I + D_1 + ... + D_order`` along ``path``.

    ``D_n(s) = int_0^s K(u) D_{n-1}(u) du`` with ``K = -i sum_j H_j gamma_j'``,
    integrated by the trapezoid rule on the path's substep nodes. Intended as
    an independent cross-check for short paths where ``||H|| T`` is small.
    """
    if order < 0:
        raise InvalidInputError("order must be >= 0")
    eye = np.eye(field.dim, dtype=complex)
    if path.degenerate:
        return eye
    left, right = [], []
    for a, b, n in zip(path.vertices[:-1], path.vertices[1:], path.steps):
        nodes = a + (np.arange(n + 1) / n)[:, None] * (b - a)
        hh = field.evaluate(nodes)
        k = -1j * np.einsum("j,mjab->mab", (b - a) / n, hh)
        left.append(k[:-1])
        right.append(k[1:])
    kl, kr = np.concatenate(left), np.concatenate(right)
    total = eye.copy()
    prev = np.broadcast_to(eye, (len(kl) + 1,) + eye.shape)
    for _ in range(order):
        terms = 0.5 * (kl @ prev[:-1] + kr @ prev[1:])
        cur = np.concatenate([np.zeros((1,) + eye.shape, complex), np.cumsum(terms, axis=0)])
        total = total + cur[-1]
        prev = cur
    return total


def _rectangle_paths(corner, j: int, k: int, dt: float, steps: int):
    corner = np.asarray(corner, dtype=float)
    ej = np.zeros_like(corner)
    ek = np.zeros_like(corner)
    ej[j] = dt
    ek[k] = dt
    se = TimePath([corner, corner + ej, corner + ej + ek], steps)
    wn = TimePath([corner, corner + ek, corner + ej + ek], steps)
    return se, wn


def _check_rectangle(field, corner, j, k, dt):
    if j == k:
        raise InvalidInputError("rectangle axes must differ")
    if not (0 <= j < field.n_times and 0 <= k < field.n_times):
        raise InvalidInputError("axis out of range")
    if len(np.asarray(corner)) != field.n_times:
        raise ShapeError("corner has the wrong number of times")
    if dt < 0 or not np.isfinite(dt):
        raise InvalidInputError("dt must be finite and >= 0")


def rectangle_holonomy(field: HamiltonianField, corner, j: int, k: int, dt: float,
                       steps: int = 16) -> np.ndarray:
    """Difference ``U_WN - U_SE`` of the two routes across a square of side ``dt``.

    The SE route runs along ``t_j`` first and then along ``t_k``; the WN route
    runs along ``t_k`` first. To second order the difference is
    ``(-[H_j, H_k] - i dH_j/dt_k + i dH_k/dt_j) dt**2``, i.e. ``-R_jk dt**2``.
    """
    _check_rectangle(field, corner, j, k, dt)
    if dt == 0:
        return np.zeros((field.dim, field.dim), dtype=complex)
    se, wn = _rectangle_paths(corner, j, k, dt, steps)
    return path_ordered_exp(field, wn) - path_ordered_exp(field, se)


def rectangle_loop(field: HamiltonianField, corner, j: int, k: int, dt: float,
                   steps: int = 16) -> np.ndarray:
    """Holonomy of the closed counterclockwise square (``+t_j, +t_k, -t_j, -t_k``).

    Equals ``U_WN^{-1} U_SE``; to second order ``I + R_jk dt**2``.
    """
    _check_rectangle(field, corner, j, k, dt)
    if dt == 0:
        return np.eye(field.dim, dtype=complex)
    se, wn = _rectangle_paths(corner, j, k, dt, steps)
    return path_ordered_exp(field, se.concat(wn.reversed()))


def path_independence_gap(field: HamiltonianField, start, end,
                          paths: Sequence[TimePath], atol: float = 1e-12) -> float:
    """Largest ``||U_gamma - U_gamma'||`` over all pairs of ``paths``."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    for p in paths:
        if not (np.allclose(p.start, start, atol=atol, rtol=0)
                and np.allclose(p.end, end, atol=atol, rtol=0)):
            raise InvalidInputError("path endpoints do not match start/end")
    us = [path_ordered_exp(field, p) for p in paths]
    gap = 0.0
    for a, b in combinations(us, 2):
        gap = max(gap, float(op_norm(a - b)))
    return gap


# ------------------------------------------------------------- Stokes surface

def _cumulative(steps: np.ndarray) -> np.ndarray:
    """Prefix products along axis 0, later factors on the left; index 0 is I."""
    out = np.empty((steps.shape[0] + 1,) + steps.shape[1:], dtype=complex)
    out[0] = np.eye(steps.shape[-1])
    for i in range(steps.shape[0]):
        out[i + 1] = steps[i] @ out[i]
    return out


def surface_ordered_exp(field: HamiltonianField, patch: SurfacePatch,
                        fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Surface-ordered exponential of the transported curvature over ``patch``.

    For the mesh cell with base corner ``(s_a, t_b)`` the curvature is pulled
    back to the base point ``f(0,0)`` by the transport ``T = g(s_a,t_b) h(s_a)``,
    where ``h`` runs along the bottom edge and ``g`` up the line ``s = s_a``.
    The cell contributes ``exp(i sum_{p,q} (T^-1 F_pq T) e_p e'_q)`` with
    ``e, e'`` the cell's edge vectors along ``s`` and ``t``. Cells of one
    column are multiplied with larger ``t`` on the left, and column products
    with larger ``s`` on the right. The result approximates the holonomy of
    :meth:`SurfacePatch.boundary_path` to first order in the mesh spacing.
    """
    if patch.n_times != field.n_times:
        raise ShapeError("patch and field have different numbers of times")
    eye = np.eye(field.dim, dtype=complex)
    if patch.is_degenerate():
        return eye
    ns, nt = patch.mesh
    s = np.linspace(0.0, 1.0, ns + 1)
    t = np.linspace(0.0, 1.0, nt + 1)
    pts = np.asarray(patch.f(*np.meshgrid(s, t, indexing="ij")), dtype=float)
    dim, n = field.dim, field.n_times

    def steps_between(a, b):
        shape = a.shape[:-1]
        a2, b2 = a.reshape(-1, n), b.reshape(-1, n)
        hh = field.evaluate(0.5 * (a2 + b2))
        gen = np.einsum("mj,mjab->mab", b2 - a2, hh)
        return matrix_exp(gen, -1j).reshape(shape + (dim, dim))

    bottom = _cumulative(steps_between(pts[:-1, 0], pts[1:, 0]))[:-1]  # h(s_a)
    vert = steps_between(pts[:-1, :-1], pts[:-1, 1:])  # (ns, nt)
    g = _cumulative(np.swapaxes(vert, 0, 1))[:-1]  # (nt, ns): g(s_a, t_b)
    transport = np.swapaxes(g, 0, 1) @ bottom[:, None]  # (ns, nt)
    inv = dagger(transport) if field.hermitian else np.linalg.inv(transport)

    corners = pts[:-1, :-1].reshape(-1, n)
    curv = curvature_tensor(field, corners, fd_step).reshape(ns, nt, n, n, dim, dim)
    e = pts[1:, :-1] - pts[:-1, :-1]
    e2 = pts[:-1, 1:] - pts[:-1, :-1]
    local = np.einsum("abp,abq,abpqxy->abxy", e, e2, curv)
    gen = inv @ local @ transport
    cells = matrix_exp(gen, 1j)  # (ns, nt)
    columns = ordered_product(np.swapaxes(cells, 0, 1))  # larger t on the left
    return ordered_product(columns[::-1])  # larger s on the right


def stokes_gap(field: HamiltonianField, patch: SurfacePatch, boundary_steps: int = 8,
               fd_step: float = DEFAULT_FD_STEP) -> float:
    """``||U(boundary) - surface_ordered_exp||`` for ``patch``."""
    loop = path_ordered_exp(field, patch.boundary_path(steps=boundary_steps))
    return float(op_norm(loop - surface_ordered_exp(field, patch, fd_step)))


# ----------------------------------------------------------- state evolution

def multitime_solve(field: HamiltonianField, phi0, target, path: TimePath | None = None,
                    start=None, steps: int = 1000) -> np.ndarray:
    """Propagate ``phi0`` from ``start`` (origin by default) to ``target``.

    Without an explicit path the axis-ordered staircase is used. The result
    only depends on the path when the field is not flat.
    """
    phi0 = np.asarray(phi0, dtype=complex)
    if phi0.shape != (field.dim,):
        raise ShapeError(f"phi0 must have length {field.dim}")
    target = np.asarray(target, dtype=float)
    start = np.zeros(field.n_times) if start is None else np.asarray(start, dtype=float)
    if path is None:
        path = TimePath.staircase(start, target, steps=steps)
    elif not (np.allclose(path.start, start, rtol=0, atol=1e-12)
              and np.allclose(path.end, target, rtol=0, atol=1e-12)):
        raise InvalidInputError("path does not run from start to target")
    return path_ordered_exp(field, path) @ phi0


def frobenius_residual(fs: Sequence[Callable], t, phi,
                       fd_step: float = DEFAULT_FD_STEP) -> float:
    """Residual of the integrability condition for ``dphi/dt_j = f_j(t, phi)``.

    For every pair ``j < k`` this forms
    ``df_j/dt_k + Df_j[f_k] - df_k/dt_j - Df_k[f_j]``, where ``Df[v]`` is the
    derivative of ``f`` in ``phi`` along ``v``. All derivatives are centered
    differences; the largest Euclidean norm over pairs is returned.

    Parameters
    ----------
    fs : sequence of callables ``f_j(t, phi) -> array like phi``
    t : array_like, shape (N,)
    phi : array_like
    """
    h = _check_step(fd_step)
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi)
    if len(fs) != len(t):
        raise ShapeError("need one map per time coordinate")
    vals = [np.asarray(f(t, phi)) for f in fs]

    def dt(f, k):
        e = np.zeros_like(t)
        e[k] = h
        return (np.asarray(f(t + e, phi)) - np.asarray(f(t - e, phi))) / (2 * h)

    def dphi(f, v):
        return (np.asarray(f(t, phi + h * v)) - np.asarray(f(t, phi - h * v))) / (2 * h)

    worst = 0.0
    for j, k in combinations(range(len(fs)), 2):
        lhs = dt(fs[j], k) + dphi(fs[j], vals[k])
        rhs = dt(fs[k], j) + dphi(fs[k], vals[j])
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst
