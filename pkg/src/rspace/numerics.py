"""Dense linear algebra kernel: subspaces, least squares, matrix exponential.

Every numerical rank decision in the package goes through :func:`rank_tol`,
which defaults to 1e-9 (relative to the largest singular value) and can be
overridden with the ``RSPACE_TOL`` environment variable or :func:`set_rank_tol`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch

_DEFAULT_TOL = 1e-9
_tol_override: float | None = None


def rank_tol() -> float:
    if _tol_override is not None:
        return _tol_override
    env = os.environ.get("RSPACE_TOL")
    if env:
        return float(env)
    return _DEFAULT_TOL


def set_rank_tol(tol: float | None) -> None:
    """Set a process-wide rank tolerance; ``None`` restores the default."""
    global _tol_override
    if tol is not None and not tol > 0:
        raise ValueError("tolerance must be positive")
    _tol_override = tol


def _finite(a: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class Subspace:
    """A linear subspace of R^n stored as an orthonormal column basis."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise DimensionMismatch("basis must be a 2-d array")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def contains(self, v: np.ndarray, tol: float = 1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        off = v - self.basis @ (self.basis.T @ v)
        return float(np.linalg.norm(off)) <= tol * max(1.0, float(np.linalg.norm(v)))

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def numerical_rank(s: np.ndarray, tol: float | None = None) -> int:
    """Rank from a vector of singular values."""
    tol = rank_tol() if tol is None else tol
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def subspace_from_spanning(vectors: np.ndarray, tol: float | None = None) -> Subspace:
    v = _finite(np.atleast_2d(np.asarray(vectors, dtype=float)))
    n = v.shape[0]
    if v.shape[1] == 0:
        return Subspace(np.zeros((n, 0)))
    u, s, _ = np.linalg.svd(v, full_matrices=False)
    r = numerical_rank(s, tol)
    return Subspace(u[:, :r].copy())


def zero_subspace(n: int) -> Subspace:
    return Subspace(np.zeros((n, 0)))


def full_space(n: int) -> Subspace:
    return Subspace(np.eye(n))


def _check_same(a: Subspace, b: Subspace):
    if a.ambient_dim != b.ambient_dim:
        raise DimensionMismatch(
            f"ambient dimensions differ: {a.ambient_dim} vs {b.ambient_dim}")


def subspace_distance(a: Subspace, b: Subspace) -> float:
    """Frobenius norm of the difference of the orthogonal projectors."""
    _check_same(a, b)
    return float(np.linalg.norm(a.projector - b.projector))


def null_space(m: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of ker(m), rank decided relative to the top singular value."""
    m = _finite(np.atleast_2d(np.asarray(m, dtype=float)))
    n = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(m, full_matrices=True)
    r = numerical_rank(s, tol)
    return vt[r:].T.copy()


def orthogonal_complement(a: Subspace) -> Subspace:
    return Subspace(null_space(a.basis.T) if a.dim else np.eye(a.ambient_dim))


def subspace_intersect(a: Subspace, b: Subspace, tol: float | None = None) -> Subspace:
    _check_same(a, b)
    n = a.ambient_dim
    eye = np.eye(n)
    stacked = np.vstack([eye - a.projector, eye - b.projector])
    return Subspace(null_space(stacked, tol))


def subspace_sum(a: Subspace, b: Subspace, tol: float | None = None) -> Subspace:
    _check_same(a, b)
    return subspace_from_spanning(np.hstack([a.basis, b.basis]), tol)


def image_subspace(m: np.ndarray, a: Subspace, tol: float | None = None) -> Subspace:
    return subspace_from_spanning(np.asarray(m) @ a.basis, tol)


def transform_subspace(m: np.ndarray, a: Subspace) -> Subspace:
    """Image of a under an invertible map, keeping the dimension (QR, no rank decision)."""
    if a.dim == 0:
        return a
    q, _ = np.linalg.qr(_finite(np.asarray(m, dtype=float) @ a.basis))
    return Subspace(q)


def _nilpotent_order(m: np.ndarray, kmax: int = 4):
    """Smallest k <= kmax with m^k == 0 to roundoff, plus the powers; else None."""
    scale = max(1.0, float(np.linalg.norm(m)))
    powers = [np.eye(m.shape[0]), m]
    p = m
    for k in range(2, kmax + 1):
        p = p @ m
        if float(np.linalg.norm(p)) <= 1e-13 * scale ** k:
            return k, powers
        powers.append(p)
    return None


def mat_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential.

    Nilpotent matrices of order at most 4 use the exact finite series;
    everything else goes through scipy's scaling-and-squaring Pade routine.
    """
    m = _finite(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch("mat_exp needs a square matrix")
    nil = _nilpotent_order(m)
    if nil is not None:
        k, powers = nil
        out = np.zeros_like(m)
        fact = 1.0
        for j in range(k):
            if j:
                fact *= j
            out = out + powers[j] / fact
        return out
    return _finite(scipy.linalg.expm(m))


def least_squares(a: np.ndarray, b: np.ndarray):
    """Minimum-norm least-squares solution and the 2-norm of the residual."""
    a = _finite(np.atleast_2d(np.asarray(a, dtype=float)))
    b = _finite(np.asarray(b, dtype=float))
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    res = float(np.linalg.norm(a @ x - b))
    return x, res


@dataclass(frozen=True)
class ExtendedReal:
    """A point of R union {infinity}; ``value`` is None for infinity."""

    value: float | None

    @classmethod
    def of(cls, x) -> "ExtendedReal":
        if isinstance(x, ExtendedReal):
            return x
        x = float(x)
        if np.isinf(x):
            return INFINITY
        return cls(x)

    @property
    def is_infinite(self) -> bool:
        return self.value is None

    def __float__(self) -> float:
        return float("inf") if self.value is None else float(self.value)

    def __repr__(self):
        return "ExtendedReal(inf)" if self.value is None else f"ExtendedReal({self.value!r})"


INFINITY = ExtendedReal(None)
