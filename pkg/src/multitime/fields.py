"""Hamiltonian fields: one Hermitian generator per time axis.

A field is evaluated in batches. ``field.evaluate(points)`` takes an array of
time tuples with shape ``(n, N)`` and returns ``(n, N, dim, dim)``, the slice
``[:, j]`` holding ``H_j`` at every point.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import sympy
from scipy.interpolate import RegularGridInterpolator

from .errors import InvalidInputError, ShapeError
from .operators import PAULI_X, PAULI_Z, as_operator, is_hermitian

BatchEval = Callable[[np.ndarray], np.ndarray]


class HamiltonianField:
    """A map from time tuples in R^N to N operators of size ``dim``.

    Parameters
    ----------
    n_times : int
        Number of time axes N.
    dim : int
        Hilbert space dimension.
    batch_eval : callable
        ``points (n, N) -> array (n, N, dim, dim)``. Must be a pure function.
    hermitian : bool
        Whether each ``H_j`` is declared Hermitian. Declared fields are
        spot-checked by :meth:`validate`.
    name : str
        Label used in reports and manifests.
    """

    def __init__(self, n_times: int, dim: int, batch_eval: BatchEval,
                 hermitian: bool = True, name: str = "field"):
        if n_times < 1 or dim < 1:
            raise InvalidInputError("n_times and dim must be positive")
        self.n_times = int(n_times)
        self.dim = int(dim)
        self._eval = batch_eval
        self.hermitian = hermitian
        self.name = name

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.n_times:
            raise ShapeError(f"points must have {self.n_times} coordinates, got {pts.shape}")
        out = np.asarray(self._eval(pts), dtype=complex)
        expected = (pts.shape[0], self.n_times, self.dim, self.dim)
        if out.shape != expected:
            raise ShapeError(f"field returned {out.shape}, expected {expected}")
        return out

    def __call__(self, t) -> np.ndarray:
        """All N generators at a single point, shape ``(N, dim, dim)``."""
        return self.evaluate(np.asarray(t, dtype=float)[None, :])[0]

    def component(self, j: int, t) -> np.ndarray:
        return self(t)[j]

    def validate(self, points, tol: float = 1e-10) -> None:
        """Check shapes, finiteness and (if declared) Hermiticity on samples."""
        vals = self.evaluate(points)
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError(f"{self.name}: non-finite values on samples")
        if self.hermitian and not is_hermitian(vals, tol):
            raise InvalidInputError(f"{self.name}: declared Hermitian but is not")

    def __add__(self, other: "HamiltonianField") -> "HamiltonianField":
        if (self.n_times, self.dim) != (other.n_times, other.dim):
            raise ShapeError("fields differ in n_times or dim")
        return HamiltonianField(
            self.n_times, self.dim,
            lambda p: self._eval(p) + other._eval(p),
            self.hermitian and other.hermitian,
            f"{self.name}+{other.name}",
        )

    def __repr__(self) -> str:
        return f"HamiltonianField({self.name!r}, n_times={self.n_times}, dim={self.dim})"


def constant_field(mats, name: str = "constant") -> HamiltonianField:
    """Time-independent field ``H_j(t) = mats[j]``."""
    mats = as_operator(mats)
    if mats.ndim != 3:
        raise ShapeError("expected a stack (N, dim, dim)")
    n, d = mats.shape[0], mats.shape[1]
    herm = is_hermitian(mats, 1e-12)

    def ev(p):
        return np.broadcast_to(mats, (p.shape[0],) + mats.shape)

    return HamiltonianField(n, d, ev, herm, name)


def commuting_diagonal(diagonals, basis=None, name: str = "commuting-diagonal") -> HamiltonianField:
    """Constant field ``H_j = U diag(diagonals[j]) U^dagger``.

    All ``H_j`` share the eigenbasis ``U`` (identity by default) and hence
    commute, so the field is flat.
    """
    diag = np.asarray(diagonals, dtype=float)
    if diag.ndim != 2:
        raise ShapeError("diagonals must have shape (N, dim)")
    mats = np.zeros(diag.shape + (diag.shape[1],), dtype=complex)
    idx = np.arange(diag.shape[1])
    mats[:, idx, idx] = diag
    if basis is not None:
        u = as_operator(basis)
        mats = u @ mats @ u.conj().T
        mats = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
    return constant_field(mats, name)


def pauli_pair(a1: float = 1.0, a2: float = 1.0) -> HamiltonianField:
    """N=2 field ``H_1 = a1 sigma_x``, ``H_2 = a2 sigma_z`` (noncommuting)."""
    return constant_field(np.stack([a1 * PAULI_X, a2 * PAULI_Z]), "pauli-pair")


def _sympy_gradient(g, n_times: int):
    """Parse ``g`` (sympy expression or string in t1..tN) and lambdify its gradient."""
    syms = sympy.symbols(f"t1:{n_times + 1}")
    expr = sympy.sympify(g, locals={str(s): s for s in syms}) if isinstance(g, str) else g
    unknown = expr.free_symbols - set(syms)
    if unknown:
        raise InvalidInputError(f"unknown symbols in g: {sorted(map(str, unknown))}")
    grads = [sympy.diff(expr, s) for s in syms]
    fn = sympy.lambdify(syms, grads, "numpy")
    g_fn = sympy.lambdify(syms, expr, "numpy")

    def grad(points):
        cols = [points[:, k] for k in range(n_times)]
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), points.shape[:1])
                         for v in fn(*cols)], axis=1)

    def value(points):
        points = np.atleast_2d(points)
        cols = [points[:, k] for k in range(n_times)]
        return np.broadcast_to(np.asarray(g_fn(*cols), dtype=float), points.shape[:1])

    return grad, value


def gradient_scalar(g, a, n_times: int = 2, name: str = "gradient-scalar") -> HamiltonianField:
    """Field ``H_j(t) = (dg/dt_j)(t) * A`` for a scalar ``g`` and fixed Hermitian ``A``.

    Such fields are flat: the commutators vanish because every ``H_j`` is a
    multiple of ``A``, and the derivative terms cancel by symmetry of mixed
    partials of ``g``. The propagator along any path from ``s`` to ``e`` is
    ``exp(-i (g(e) - g(s)) A)``. Use :func:`scalar_potential` to evaluate ``g``.
    """
    a = as_operator(a)
    grad, value = _sympy_gradient(g, n_times)

    def ev(p):
        return grad(p)[:, :, None, None] * a

    field = HamiltonianField(n_times, a.shape[0], ev, is_hermitian(a, 1e-12), name)
    field.potential = value
    return field


def scalar_potential(field: HamiltonianField):
    """The scalar ``g`` behind a :func:`gradient_scalar` field."""
    try:
        return field.potential
    except AttributeError:
        raise InvalidInputError(f"{field.name} carries no scalar potential") from None


def tabulated_field(axes: Sequence[Sequence[float]], samples,
                    name: str = "tabulated") -> HamiltonianField:
    """Multilinear interpolation of samples on a regular time grid.

    Parameters
    ----------
    axes : sequence of 1-D arrays
        Grid coordinates along each of the N time axes.
    samples : array, shape ``(len(axes[0]), ..., len(axes[N-1]), N, dim, dim)``
        Generator values at the grid nodes.
    """
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    samples = np.asarray(samples, dtype=complex)
    n = len(axes)
    grid_shape = tuple(len(ax) for ax in axes)
    if samples.shape[:n] != grid_shape or samples.ndim != n + 3 or samples.shape[n] != n:
        raise ShapeError(f"samples shape {samples.shape} does not match axes {grid_shape}")
    dim = samples.shape[-1]
    flat = samples.reshape(grid_shape + (-1,))
    re = RegularGridInterpolator(axes, flat.real, method="linear")
    im = RegularGridInterpolator(axes, flat.imag, method="linear")

    def ev(p):
        try:
            v = re(p) + 1j * im(p)
        except ValueError as exc:
            raise InvalidInputError(f"{name}: point outside tabulated box") from exc
        return v.reshape(p.shape[0], n, dim, dim)

    herm = is_hermitian(samples.reshape(-1, dim, dim), 1e-10)
    return HamiltonianField(n, dim, ev, herm, name)


def tabulate(field: HamiltonianField, axes: Sequence[Sequence[float]]) -> np.ndarray:
    """Sample ``field`` on the tensor grid spanned by ``axes`` (input for :func:`tabulated_field`)."""
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = field.evaluate(mesh.reshape(-1, len(axes)))
    return vals.reshape(mesh.shape[:-1] + vals.shape[1:])


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (z + z.conj().T)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
