"""Geometric models of symmetric R-spaces and their point/parabolic dictionaries.

``conformal(p, q)`` is the projective light cone of R^{p+1,q+1}, the conformal
compactification of R^{p,q}, with algebra so(p+1, q+1).
``grassmannian(k, n)`` is the space of k-planes in R^n with algebra sl(n);
grassmannian(1, 2) is the real projective line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import numerics
from .errors import UnsupportedModel, WrongConjugacyClass
from .liealg import (AlgebraElement, Automorphism, LieAlgebraSpace, build_algebra,
                     conjugation, wedge_matrix)
from .numerics import INFINITY, ExtendedReal
from .parabolic import Parabolic, make_parabolic


@dataclass(frozen=True, eq=False)
class Model:
    kind: str
    params: tuple
    algebra: LieAlgebraSpace = field(repr=False)
    metric: np.ndarray | None = field(default=None, repr=False)
    v0: np.ndarray | None = field(default=None, repr=False)
    vinf: np.ndarray | None = field(default=None, repr=False)
    flat_basis: np.ndarray | None = field(default=None, repr=False)  # columns span R^{p,q}

    @property
    def tag(self) -> str:
        return f"{self.kind}:{','.join(str(x) for x in self.params)}"

    @property
    def rep_dim(self) -> int:
        return self.algebra.rep_dim

    @property
    def dim(self) -> int:
        return model_table(self)["dim"]

    @property
    def self_dual(self) -> bool:
        return model_table(self)["self_dual"]

    def __repr__(self):
        return f"Model({self.tag})"


@lru_cache(maxsize=None)
def conformal(p: int, q: int = 0) -> Model:
    if p < 0 or q < 0 or p + q < 2:
        raise UnsupportedModel("conformal(p,q) needs p+q >= 2")
    g = build_algebra("so", p + 1, q + 1)
    n = p + q + 2
    eye = np.eye(n)
    a, b = p, n - 1  # last positive and last negative basis vectors
    v0 = (eye[b] + eye[a]) / np.sqrt(2.0)
    vinf = (eye[b] - eye[a]) / np.sqrt(2.0)
    flat = np.column_stack([eye[i] for i in range(n) if i not in (a, b)])
    return Model("conformal", (p, q), g, g.metric, v0, vinf, flat)


@lru_cache(maxsize=None)
def grassmannian(k: int, n: int) -> Model:
    if not 0 < k < n:
        raise UnsupportedModel("grassmannian(k,n) needs 0 < k < n")
    return Model("grassmannian", (k, n), build_algebra("sl", n))


def rp1() -> Model:
    return grassmannian(1, 2)


_TAG = re.compile(r"^\s*(conformal|grassmannian|rp1)\s*(?:[:(]\s*(\d+)\s*,\s*(\d+)\s*\)?)?\s*$")


def model_from_tag(tag: str) -> Model:
    """Parse ``conformal:2,1``, ``conformal(2,1)``, ``grassmannian:1,2`` or ``rp1``."""
    m = _TAG.match(tag)
    if not m:
        raise UnsupportedModel(f"cannot parse model tag {tag!r}")
    kind, a, b = m.groups()
    if kind == "rp1":
        return rp1()
    if a is None:
        raise UnsupportedModel(f"model {kind} needs two parameters")
    return conformal(int(a), int(b)) if kind == "conformal" else grassmannian(int(a), int(b))


def model_table(model: Model) -> dict:
    if model.kind == "conformal":
        p, q = model.params
        return {"dim": p + q, "self_dual": True, "rank_z": 2}
    if model.kind == "grassmannian":
        k, n = model.params
        return {"dim": k * (n - k), "self_dual": 2 * k == n, "rank_z": min(k, n - k)}
    raise UnsupportedModel(model.kind)


def rank_z(model: Model) -> int:
    return model_table(model)["rank_z"]


@dataclass(frozen=True, eq=False)
class ModelPoint:
    model: Model
    representative: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.representative, dtype=float)
        if self.model.kind == "conformal":
            r = r.reshape(-1)
            if r.shape[0] != self.model.rep_dim or np.linalg.norm(r) == 0:
                raise ValueError("conformal points need a nonzero vector of the right size")
            if abs(r @ self.model.metric @ r) > 1e-10 * max(1.0, r @ r):
                raise ValueError("conformal representative is not null")
        else:
            k, n = self.model.params
            r = r.reshape(n, -1)
            if r.shape[1] != k or np.linalg.matrix_rank(r) != k:
                raise ValueError(f"need an {n}x{k} basis of full rank")
        r.setflags(write=False)
        object.__setattr__(self, "representative", r)

    def line_distance(self, other: "ModelPoint") -> float:
        a = numerics.subspace_from_spanning(self.representative.reshape(self.model.rep_dim, -1))
        b = numerics.subspace_from_spanning(other.representative.reshape(other.model.rep_dim, -1))
        return numerics.subspace_distance(a, b)


def _stabiliser_constraints(model: Model, w: np.ndarray) -> np.ndarray:
    reps = model.algebra.defining_rep
    w = w.reshape(model.rep_dim, -1)
    off = np.eye(model.rep_dim) - w @ np.linalg.pinv(w)
    images = off[None] @ reps @ w[None]  # (dim, N, k)
    return images.reshape(reps.shape[0], -1).T


def point_to_parabolic(pt: ModelPoint) -> Parabolic:
    g = pt.model.algebra
    stab = numerics.null_space(_stabiliser_constraints(pt.model, pt.representative))
    return make_parabolic(g, numerics.Subspace(stab))


def parabolic_to_point(p: Parabolic, model: Model) -> ModelPoint:
    if p.algebra is not model.algebra:
        raise WrongConjugacyClass(f"parabolic does not live in the algebra of {model.tag}")
    nil = model.algebra.matrix_of(p.nilradical.basis.T)  # (k, N, N)
    n = model.rep_dim
    if model.kind == "conformal":
        ker = numerics.null_space(nil.reshape(-1, n))
        if ker.shape[1] != 1:
            raise WrongConjugacyClass(f"common kernel has dimension {ker.shape[1]}")
        v = ker[:, 0]
        if abs(v @ model.metric @ v) > 1e-8:
            raise WrongConjugacyClass("common kernel is not a null line")
        rep = v
    else:
        k = model.params[0]
        img = numerics.subspace_from_spanning(np.concatenate(list(nil), axis=1))
        if img.dim != k:
            raise WrongConjugacyClass(f"common image has dimension {img.dim}, expected {k}")
        rep = img.basis
    pt = ModelPoint(model, rep)
    back = point_to_parabolic(pt)
    if back.distance(p) > 1e-7:
        raise WrongConjugacyClass("recovered point does not reproduce the parabolic")
    return pt


def nearest_point(p: Parabolic, model: Model) -> ModelPoint:
    """Least-squares model point of a parabolic that is only approximately a stabiliser.

    Conformal: the best common kernel of the nilradical, rescaled on the
    positive and negative parts of the metric to be exactly null.
    Grassmannian: the dominant k-dimensional common image.
    """
    if p.algebra is not model.algebra:
        raise WrongConjugacyClass(f"parabolic does not live in the algebra of {model.tag}")
    nil = model.algebra.matrix_of(p.nilradical.basis.T)
    n = model.rep_dim
    if model.kind == "conformal":
        _, _, vt = np.linalg.svd(nil.reshape(-1, n))
        v = vt[-1]
        pos = np.diag(model.metric) > 0
        a, b = np.linalg.norm(v[pos]), np.linalg.norm(v[~pos])
        if a == 0 or b == 0:
            raise WrongConjugacyClass("common kernel is far from the light cone")
        r = np.sqrt(a * b)
        v = np.where(pos, v * r / a, v * r / b)
        return ModelPoint(model, v)
    k = model.params[0]
    u, _, _ = np.linalg.svd(np.concatenate(list(nil), axis=1))
    return ModelPoint(model, u[:, :k])


def snap_parabolic(p: Parabolic, model: Model) -> Parabolic:
    """Project a numerically drifted parabolic back onto the model's conjugacy class."""
    return point_to_parabolic(nearest_point(p, model))


# conformal helpers

def conformal_point(model: Model, x) -> ModelPoint:
    """Inverse stereoprojection x -> <v0 + x + (x,x)/2 vinf>, or vinf for infinity."""
    if isinstance(x, ExtendedReal) and x.is_infinite:
        return ModelPoint(model, model.vinf)
    x = np.asarray(x, dtype=float)
    xv = model.flat_basis @ x
    norm = xv @ model.metric @ xv
    return ModelPoint(model, model.v0 + xv + 0.5 * norm * model.vinf)


def conformal_coords(pt: ModelPoint) -> np.ndarray:
    """Stereoprojection of a null line not equal to <vinf>."""
    m = pt.model
    v = pt.representative
    alpha = -(v @ m.metric @ m.vinf)
    if abs(alpha) < 1e-12 * np.linalg.norm(v):
        raise ValueError("point at infinity has no affine coordinates")
    return m.flat_basis.T @ v / alpha


def conformal_flat_element(model: Model, x) -> AlgebraElement:
    """The nilradical element x ^ vinf corresponding to x in R^{p,q}."""
    xv = model.flat_basis @ np.asarray(x, dtype=float)
    g = model.algebra
    return g.element(g.coords_of_matrix(wedge_matrix(xv, model.vinf, model.metric)))


def conformal_inner(model: Model, x, y) -> float:
    eta = model.flat_basis.T @ model.metric @ model.flat_basis
    return float(np.asarray(x) @ eta @ np.asarray(y))


# projective-line helpers

def rp1_point(x) -> ModelPoint:
    """Affine coordinate x maps to <e1 + x e2>; infinity to <e2>."""
    x = ExtendedReal.of(x)
    if x.is_infinite:
        return ModelPoint(rp1(), np.array([0.0, 1.0]))
    return ModelPoint(rp1(), np.array([1.0, x.value]))


def rp1_coord(pt: ModelPoint) -> ExtendedReal:
    a, b = pt.representative[:, 0]
    if abs(a) <= 1e-14 * abs(b):
        return INFINITY
    return ExtendedReal(float(b / a))


# group elements

def random_group_element(model: Model, rng: np.random.Generator, scale: float = 0.5):
    """Random defining-rep group element and its adjoint automorphism."""
    x = model.algebra.matrix_of(scale * rng.standard_normal(model.algebra.dim))
    g = numerics.mat_exp(x)
    return g, conjugation(model.algebra, g)


def act_on_point(g: np.ndarray, pt: ModelPoint) -> ModelPoint:
    return ModelPoint(pt.model, np.asarray(g) @ pt.representative)


def random_point(model: Model, rng: np.random.Generator) -> ModelPoint:
    if model.kind == "conformal":
        x = rng.standard_normal(model.flat_basis.shape[1])
        g, _ = random_group_element(model, rng)
        return act_on_point(g, conformal_point(model, x))
    k, n = model.params
    return ModelPoint(model, rng.standard_normal((n, k)))


def standard_triple(model: Model):
    """Three mutually complementary points at parameters 0, 1 and infinity of one circle.

    Conformal: 0, the first unit flat vector and infinity.  Self-dual
    Grassmannian G(k, 2k): the planes [I; 0], [I; I] and [0; I].
    """
    if model.kind == "conformal":
        unit = np.zeros(model.flat_basis.shape[1])
        unit[0] = 1.0
        return (conformal_point(model, np.zeros_like(unit)), conformal_point(model, unit),
                ModelPoint(model, model.vinf))
    k, n = model.params
    if 2 * k != n:
        raise UnsupportedModel("a standard triple needs a self-dual model")
    eye, zero = np.eye(k), np.zeros((k, k))
    return (ModelPoint(model, np.vstack([eye, zero])), ModelPoint(model, np.vstack([eye, eye])),
            ModelPoint(model, np.vstack([zero, eye])))


def random_triple(model: Model, rng: np.random.Generator, scale: float = 0.5):
    """The standard triple moved by a random group element: generic but well conditioned."""
    g, _ = random_group_element(model, rng, scale)
    return tuple(act_on_point(g, pt) for pt in standard_triple(model))


def random_complementary_pair(model: Model, rng: np.random.Generator, scale: float = 0.5):
    zero, _, inf = random_triple(model, rng, scale)
    return zero, inf
