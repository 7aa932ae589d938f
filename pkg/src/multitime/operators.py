"""Dense operators on finite-dimensional Hilbert spaces.

Operators are plain ``numpy`` arrays of dtype ``complex128`` with shape
``(dim, dim)``; most functions also accept a stack ``(..., dim, dim)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, ShapeError

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_operator(a, *, check_finite: bool = True) -> np.ndarray:
    """Validate and convert ``a`` to a complex square matrix (or stack of them)."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2] or arr.shape[-1] < 1:
        raise ShapeError(f"expected square matrix, got shape {arr.shape}")
    if check_finite and not np.all(np.isfinite(arr)):
        raise InvalidInputError("operator has non-finite entries")
    return arr


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a, tol: float = 1e-10) -> bool:
    a = as_operator(a, check_finite=False)
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol)


def op_norm(a) -> float | np.ndarray:
    """Operator (spectral) norm, the largest singular value."""
    a = np.asarray(a, dtype=complex)
    return np.linalg.norm(a, ord=2, axis=(-2, -1))


def fro_norm(a) -> float | np.ndarray:
    a = np.asarray(a, dtype=complex)
    return np.linalg.norm(a, ord="fro", axis=(-2, -1))


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape[-2:] != b.shape[-2:]:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def matrix_exp(a, scale: complex = 1.0) -> np.ndarray:
    """Return ``exp(scale * a)``.

    Hermitian input with purely imaginary ``scale`` goes through an
    eigendecomposition, which keeps the result unitary to rounding no matter
    how large ``|scale| * ||a||`` is. Everything else uses scipy's
    scaling-and-squaring Pade approximant. Stacks ``(..., d, d)`` are
    exponentiated elementwise.
    """
    a = as_operator(a)
    scale = complex(scale)
    if not np.isfinite(scale):
        raise InvalidInputError("scale must be finite")
    if scale.real == 0.0 and _all_hermitian(a):
        h = 0.5 * (a + dagger(a))
        w, v = np.linalg.eigh(h)
        phases = np.exp(1j * scale.imag * w)
        return (v * phases[..., None, :]) @ dagger(v)
    return scipy.linalg.expm(scale * a)


def _all_hermitian(a: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= 1e-13 * scale)


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """Return ``mats[n-1] @ ... @ mats[1] @ mats[0]`` (later factors to the left).

    Uses pairwise reduction so the work vectorizes over the stack.
    """
    mats = np.asarray(mats, dtype=complex)
    if mats.shape[0] == 0:
        raise InvalidInputError("empty product has no dimension")
    while mats.shape[0] > 1:
        n = mats.shape[0]
        paired = mats[1 : n - n % 2 : 2] @ mats[0 : n - n % 2 : 2]
        if n % 2:
            paired = np.concatenate([paired, mats[-1:]], axis=0)
        mats = paired
    return mats[0]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a Hermitian matrix with one orthogonal projector per
    (clustered) eigenvalue."""

    eigenvalues: np.ndarray
    projectors: list = field(repr=False)

    def reconstruct(self) -> np.ndarray:
        return sum(lam * p for lam, p in zip(self.eigenvalues, self.projectors))


def spectrum(a, cluster_tol: float | None = None) -> Spectrum:
    """Spectral decomposition; eigenvalues closer than ``cluster_tol``
    (default ``1e-8 * ||a||``) share one projector."""
    a = as_operator(a)
    if a.ndim != 2:
        raise ShapeError("spectrum expects a single matrix")
    if not is_hermitian(a, 1e-10 * max(1.0, float(op_norm(a)))):
        raise InvalidInputError("spectrum requires a Hermitian matrix")
    if cluster_tol is None:
        cluster_tol = 1e-8 * max(float(op_norm(a)), 1.0)
    w, v = np.linalg.eigh(0.5 * (a + dagger(a)))
    groups = [[0]]
    for k in range(1, len(w)):
        if w[k] - w[groups[-1][-1]] > cluster_tol:
            groups.append([k])
        else:
            groups[-1].append(k)
    eigenvalues = np.array([w[g].mean() for g in groups])
    projectors = [v[:, g] @ dagger(v[:, g]) for g in groups]
    return Spectrum(eigenvalues, projectors)


@dataclass(frozen=True)
class SpectralCommuteReport:
    commute: bool
    max_residual: float
    worst_pair: tuple  # (eigenvalue of A, eigenvalue of B)

    def __bool__(self) -> bool:
        return self.commute


def spectral_commute(a, b, tol: float = 1e-8) -> SpectralCommuteReport:
    """Test commutation of all spectral projectors of two Hermitian matrices.

    The residual is ``max ||[P_a, Q_b]||`` over eigenprojectors ``P_a`` of
    ``a`` and ``Q_b`` of ``b``.
    """
    a = as_operator(a)
    b = as_operator(b)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    for name, m in (("A", a), ("B", b)):
        if not is_hermitian(m, tol):
            raise InvalidInputError(f"{name} is not Hermitian within {tol}")
    sa, sb = spectrum(a), spectrum(b)
    worst, pair = -1.0, (None, None)
    for la, p in zip(sa.eigenvalues, sa.projectors):
        for lb, q in zip(sb.eigenvalues, sb.projectors):
            r = float(op_norm(commutator(p, q)))
            if r > worst:
                worst, pair = r, (float(la), float(lb))
    return SpectralCommuteReport(worst <= tol, worst, pair)


def operator_to_dict(a) -> dict:
    """Shared JSON matrix format: ``{dim, re, im}`` flattened row-major."""
    a = as_operator(a)
    if a.ndim != 2:
        raise ShapeError("only single matrices serialize")
    return {
        "dim": int(a.shape[0]),
        "re": a.real.ravel().tolist(),
        "im": a.imag.ravel().tolist(),
    }


def operator_from_dict(d: dict) -> np.ndarray:
    dim = int(d["dim"])
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d["im"], dtype=float)
    if dim < 1 or re.size != dim * dim or im.size != dim * dim:
        raise ShapeError("entry count does not match dim**2")
    return (re + 1j * im).reshape(dim, dim)
