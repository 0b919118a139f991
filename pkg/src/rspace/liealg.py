"""Real semisimple matrix Lie algebras: bracket, adjoint operators, Killing form.

Elements are coordinate vectors with respect to a fixed ordered basis of
matrices (the defining representation).  Structure constants and the
Killing form trace(ad x ad y) are computed once at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from functools import lru_cache

import numpy as np

from . import numerics
from .errors import AlgebraMismatch, UnsupportedAlgebra
from .numerics import Subspace


@dataclass(frozen=True, eq=False)
class LieAlgebraSpace:
    name: str
    basis_labels: tuple
    defining_rep: np.ndarray  # (dim, N, N)
    structure: np.ndarray = field(repr=False)  # c[i, j, k]: [e_i, e_j] = sum_k c[i,j,k] e_k
    killing: np.ndarray = field(repr=False)
    metric: np.ndarray | None = field(default=None, repr=False)
    _coord_map: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.basis_labels)

    @property
    def rep_dim(self) -> int:
        return self.defining_rep.shape[1]

    # raw-array helpers; the public wrappers below accept AlgebraElement
    def coords_of_matrix(self, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        flat = m.reshape(m.shape[:-2] + (-1,))
        return flat @ self._coord_map.T

    def matrix_of(self, coords: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(coords, dtype=float), self.defining_rep, axes=([-1], [0]))

    def ad_matrix(self, x: np.ndarray) -> np.ndarray:
        """ad x as a dim x dim matrix (columns are images of basis vectors)."""
        return np.einsum("...i,ijk->...kj", np.asarray(x, dtype=float), self.structure)

    def br(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("...i,...j,ijk->...k", x, y, self.structure)

    def kill(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", x, self.killing, y)

    def element(self, coords) -> "AlgebraElement":
        return AlgebraElement(self, np.asarray(coords, dtype=float))

    def basis_element(self, label) -> "AlgebraElement":
        i = self.basis_labels.index(label)
        return self.element(np.eye(self.dim)[i])

    def zero(self) -> "AlgebraElement":
        return self.element(np.zeros(self.dim))

    def random_element(self, rng: np.random.Generator, scale: float = 1.0) -> "AlgebraElement":
        return self.element(scale * rng.standard_normal(self.dim))

    def identity(self) -> "Automorphism":
        return Automorphism(self, np.eye(self.dim))


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    algebra: LieAlgebraSpace
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.shape != (self.algebra.dim,):
            raise AlgebraMismatch(f"expected {self.algebra.dim} coordinates, got shape {c.shape}")
        object.__setattr__(self, "coords", c)

    def _same(self, other):
        if other.algebra is not self.algebra:
            raise AlgebraMismatch("elements belong to different algebras")

    def __add__(self, other):
        self._same(other)
        return AlgebraElement(self.algebra, self.coords + other.coords)

    def __sub__(self, other):
        self._same(other)
        return AlgebraElement(self.algebra, self.coords - other.coords)

    def __neg__(self):
        return AlgebraElement(self.algebra, -self.coords)

    def __mul__(self, s):
        return AlgebraElement(self.algebra, float(s) * self.coords)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return AlgebraElement(self.algebra, self.coords / float(s))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))

    def matrix(self) -> np.ndarray:
        return self.algebra.matrix_of(self.coords)


@dataclass(frozen=True, eq=False)
class Automorphism:
    """A linear automorphism of the algebra, in basis coordinates."""

    algebra: LieAlgebraSpace
    matrix: np.ndarray

    def __call__(self, x):
        if isinstance(x, AlgebraElement):
            if x.algebra is not self.algebra:
                raise AlgebraMismatch("automorphism and element belong to different algebras")
            return AlgebraElement(self.algebra, self.matrix @ x.coords)
        return self.matrix @ np.asarray(x)

    def __matmul__(self, other: "Automorphism") -> "Automorphism":
        if other.algebra is not self.algebra:
            raise AlgebraMismatch("automorphisms of different algebras")
        return Automorphism(self.algebra, self.matrix @ other.matrix)

    def inverse(self) -> "Automorphism":
        return Automorphism(self.algebra, np.linalg.inv(self.matrix))

    def bracket_defect(self, rng: np.random.Generator | None = None, samples: int = 0) -> float:
        """max ||g[X,Y] - [gX,gY]|| over basis pairs (plus random pairs if asked)."""
        g = self.algebra
        eye = np.eye(g.dim)
        xs = [eye]
        if samples and rng is not None:
            xs.append(rng.standard_normal((samples, g.dim)))
        worst = 0.0
        for block in xs:
            for x in block:
                lhs = self.matrix @ g.ad_matrix(x)
                rhs = g.ad_matrix(self.matrix @ x) @ self.matrix
                worst = max(worst, float(np.abs(lhs - rhs).max()))
        return worst

    def killing_defect(self) -> float:
        k = self.algebra.killing
        return float(np.abs(self.matrix.T @ k @ self.matrix - k).max())


def _check(x: AlgebraElement, y: AlgebraElement):
    if x.algebra is not y.algebra:
        raise AlgebraMismatch("elements belong to different algebras")


def bracket(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    _check(x, y)
    return AlgebraElement(x.algebra, x.algebra.br(x.coords, y.coords))


def killing(x: AlgebraElement, y: AlgebraElement) -> float:
    _check(x, y)
    return float(x.algebra.kill(x.coords, y.coords))


def ad_operator(x: AlgebraElement) -> np.ndarray:
    return x.algebra.ad_matrix(x.coords)


def killing_polar(algebra: LieAlgebraSpace, s: Subspace, tol: float | None = None) -> Subspace:
    """{X : B(X, s) = 0 for all s in S}."""
    if s.ambient_dim != algebra.dim:
        raise AlgebraMismatch("subspace does not live in this algebra")
    if s.dim == 0:
        return numerics.full_space(algebra.dim)
    return Subspace(numerics.null_space(s.basis.T @ algebra.killing, tol))


def span(algebra: LieAlgebraSpace, *elements) -> Subspace:
    cols = [e.coords if isinstance(e, AlgebraElement) else np.asarray(e) for e in elements]
    if not cols:
        return numerics.zero_subspace(algebra.dim)
    return numerics.subspace_from_spanning(np.column_stack(cols))


def conjugation(algebra: LieAlgebraSpace, g: np.ndarray) -> Automorphism:
    """Ad(g) for an invertible matrix g of the defining representation."""
    g = np.asarray(g, dtype=float)
    ginv = np.linalg.inv(g)
    images = g[None] @ algebra.defining_rep @ ginv[None]
    return Automorphism(algebra, algebra.coords_of_matrix(images).T)


def exp_ad(x: AlgebraElement) -> Automorphism:
    return Automorphism(x.algebra, numerics.mat_exp(ad_operator(x)))


def _assemble(name, labels, mats, metric=None) -> LieAlgebraSpace:
    mats = np.asarray(mats, dtype=float)
    d = mats.shape[0]
    flat = mats.reshape(d, -1)
    coord_map = np.linalg.pinv(flat.T)  # maps flattened matrix to coordinates
    comm = np.einsum("iab,jbc->ijac", mats, mats) - np.einsum("jab,ibc->ijac", mats, mats)
    structure = comm.reshape(d, d, -1) @ coord_map.T
    # the bases used here have integer structure constants; snap the roundoff
    snapped = np.round(structure)
    structure = np.where(np.abs(structure - snapped) < 1e-10, snapped, structure)
    ads = np.einsum("ijk->ikj", structure)  # ads[i] = ad e_i
    killing_m = np.einsum("iab,jba->ij", ads, ads)
    for arr in (mats, structure, killing_m, coord_map):
        arr.setflags(write=False)
    return LieAlgebraSpace(name, tuple(labels), mats, structure, killing_m, metric, coord_map)


def _sl(n: int) -> LieAlgebraSpace:
    if n < 2:
        raise UnsupportedAlgebra("sl(n) needs n >= 2")
    mats, labels = [], []
    for i in range(n):
        for j in range(n):
            if i != j:
                m = np.zeros((n, n))
                m[i, j] = 1.0
                mats.append(m)
                labels.append(f"E{i + 1}{j + 1}")
    for i in range(n - 1):
        m = np.zeros((n, n))
        m[i, i], m[i + 1, i + 1] = 1.0, -1.0
        mats.append(m)
        labels.append(f"H{i + 1}")
    if n == 2:
        labels = ["E", "F", "H"]
    return _assemble(f"sl({n})", labels, mats)


def wedge_matrix(u: np.ndarray, v: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """Matrix of w -> (u,w) v - (v,w) u."""
    return np.outer(v, metric @ u) - np.outer(u, metric @ v)


def _so(p: int, q: int) -> LieAlgebraSpace:
    n = p + q
    if p < 0 or q < 0 or n < 3:
        raise UnsupportedAlgebra("so(p,q) needs p+q >= 3")
    metric = np.diag([1.0] * p + [-1.0] * q)
    eye = np.eye(n)
    mats, labels = [], []
    for i in range(n):
        for j in range(i + 1, n):
            mats.append(wedge_matrix(eye[i], eye[j], metric))
            labels.append(f"e{i + 1}^e{j + 1}")
    return _assemble(f"so({p},{q})", labels, mats, metric)


def build_algebra(kind: str, *params: int) -> LieAlgebraSpace:
    """``build_algebra("sl", n)`` or ``build_algebra("so", p, q)``.

    Cached: algebras are compared by identity, so equal requests share one instance.
    """
    return _build_algebra(kind.lower(), *(int(p) for p in params))


@lru_cache(maxsize=None)
def _build_algebra(kind: str, *params: int) -> LieAlgebraSpace:
    if kind == "sl" and len(params) == 1:
        return _sl(int(params[0]))
    if kind == "so" and len(params) == 2:
        return _so(int(params[0]), int(params[1]))
    raise UnsupportedAlgebra(f"unsupported algebra {kind}{params}")


def killing_signature(algebra: LieAlgebraSpace, tol: float = 1e-9):
    ev = np.linalg.eigvalsh(algebra.killing)
    top = np.abs(ev).max()
    return int(np.sum(ev > tol * top)), int(np.sum(ev < -tol * top))


def jacobi_defect(algebra: LieAlgebraSpace, x, y, z) -> float:
    br = algebra.br
    t = br(x, br(y, z)) + br(y, br(z, x)) + br(z, br(x, y))
    return float(np.abs(t).max())
