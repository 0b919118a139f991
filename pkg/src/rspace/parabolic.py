"""Height-one parabolic subalgebras, complementary pairs, grading elements,
the simple factors Gamma(s), and stereoprojection charts."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import numerics
from .errors import (AlgebraMismatch, NotASubalgebra, NotComplementary,
                     NotInChart, NotNilpotent, NotParabolicHeightOne)
from .liealg import AlgebraElement, Automorphism, LieAlgebraSpace, killing_polar
from .numerics import Subspace

EQUAL_TOL = 1e-7
PAIR_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Parabolic:
    algebra: LieAlgebraSpace
    space: Subspace
    nilradical: Subspace

    @property
    def dim(self) -> int:
        return self.space.dim

    def distance(self, other: "Parabolic") -> float:
        return numerics.subspace_distance(self.space, other.space)

    def __repr__(self):
        return f"Parabolic({self.algebra.name}, dim={self.dim}, nil={self.nilradical.dim})"


def _off(sub: Subspace, vecs: np.ndarray) -> np.ndarray:
    return vecs - sub.basis @ (sub.basis.T @ vecs)


def _bracket_block(algebra: LieAlgebraSpace, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All brackets [a_i, b_j] of basis columns, as columns."""
    out = np.einsum("ai,bj,abk->kij", a, b, algebra.structure)
    return out.reshape(algebra.dim, -1)


def _scale(algebra: LieAlgebraSpace) -> float:
    return max(1.0, float(np.abs(algebra.structure).max()))


def make_parabolic(algebra: LieAlgebraSpace, s: Subspace, tol: float | None = None) -> Parabolic:
    if s.ambient_dim != algebra.dim:
        raise AlgebraMismatch("subspace does not live in this algebra")
    sc = _scale(algebra)
    if s.dim:
        closure = _off(s, _bracket_block(algebra, s.basis, s.basis))
        if np.abs(closure).max(initial=0.0) > 1e-8 * sc:
            raise NotASubalgebra("subspace is not closed under the bracket")
    nil = killing_polar(algebra, s, tol)
    if nil.dim == 0:
        raise NotParabolicHeightOne("polar is zero: the whole algebra is not a proper parabolic")
    if np.abs(_off(s, nil.basis)).max() > 1e-8:
        raise NotParabolicHeightOne("polar is not contained in the subalgebra")
    if np.abs(_bracket_block(algebra, nil.basis, nil.basis)).max() > 1e-9 * sc:
        raise NotParabolicHeightOne("polar is not abelian")
    return Parabolic(algebra, s, nil)


def parabolic_from_elements(algebra: LieAlgebraSpace, *elements) -> Parabolic:
    cols = [e.coords if isinstance(e, AlgebraElement) else np.asarray(e, float) for e in elements]
    return make_parabolic(algebra, numerics.subspace_from_spanning(np.column_stack(cols)))


def act_on_parabolic(g: Automorphism, p: Parabolic, validate: bool = True) -> Parabolic:
    if g.algebra is not p.algebra:
        raise AlgebraMismatch("automorphism and parabolic belong to different algebras")
    space = numerics.transform_subspace(g.matrix, p.space)
    if validate:
        return make_parabolic(p.algebra, space)
    return Parabolic(p.algebra, space, numerics.transform_subspace(g.matrix, p.nilradical))


def normaliser_defect(p: Parabolic, zeta: np.ndarray) -> float:
    """Size of the part of [zeta, p] lying off p (zero iff zeta normalises p)."""
    br = _bracket_block(p.algebra, np.asarray(zeta, float)[:, None], p.space.basis)
    return float(np.linalg.norm(_off(p.space, br)))


@dataclass(frozen=True, eq=False)
class ComplementaryPair:
    p: Parabolic
    q: Parabolic
    xi: AlgebraElement
    eig_minus: Subspace
    eig_zero: Subspace
    eig_plus: Subspace
    residual: float = 0.0

    @property
    def algebra(self) -> LieAlgebraSpace:
        return self.p.algebra

    @cached_property
    def ad_xi(self) -> np.ndarray:
        return self.algebra.ad_matrix(self.xi.coords)

    def gamma_matrix(self, s: float) -> np.ndarray:
        return gamma_matrix(self.ad_xi, s)

    def swapped(self) -> "ComplementaryPair":
        return ComplementaryPair(self.q, self.p, -self.xi, self.eig_plus, self.eig_zero,
                                 self.eig_minus, self.residual)


def gamma_matrix(ad_xi: np.ndarray, s) -> np.ndarray:
    """s on the +1 eigenspace, 1 on the kernel, 1/s on the -1 eigenspace of ad xi.

    Works on stacks of ad matrices; ``s`` may be a scalar or broadcastable array.
    """
    a = np.asarray(ad_xi)
    a2 = a @ a
    s = np.asarray(s, dtype=float)[..., None, None]
    eye = np.eye(a.shape[-1])
    return eye - a2 + 0.5 * s * (a2 + a) + 0.5 / s * (a2 - a)


def grading_element(algebra: LieAlgebraSpace, pnil: np.ndarray, qnil: np.ndarray,
                    common: np.ndarray):
    """Least-squares grading element in span(common); returns (coords, residual)."""
    if common.shape[1] == 0:
        return np.zeros(algebra.dim), float("inf")
    ad_p = algebra.ad_matrix(pnil.T)  # (k, dim, dim)
    ad_q = algebra.ad_matrix(qnil.T)
    lhs = np.concatenate([(ad_p @ common).reshape(-1, common.shape[1]),
                          (ad_q @ common).reshape(-1, common.shape[1])])
    rhs = np.concatenate([pnil.T.reshape(-1), -qnil.T.reshape(-1)])
    c, res = numerics.least_squares(lhs, rhs)
    return common @ c, res


def make_pair(p: Parabolic, q: Parabolic, tol: float | None = None) -> ComplementaryPair:
    if p.algebra is not q.algebra:
        raise AlgebraMismatch("parabolics belong to different algebras")
    algebra = p.algebra
    meet = numerics.subspace_intersect(p.nilradical, q.nilradical, tol)
    if meet.dim:
        raise NotComplementary(f"nilradicals meet in dimension {meet.dim}")
    common = numerics.subspace_intersect(p.space, q.space, tol)
    if p.nilradical.dim + common.dim + q.nilradical.dim != algebra.dim:
        raise NotComplementary("the three graded pieces do not fill the algebra")
    xi, res = grading_element(algebra, p.nilradical.basis, q.nilradical.basis, common.basis)
    # the equations are scaled by the basis of the nilradicals (orthonormal), so
    # the residual grows with |xi|; accept relative to that size
    if not res < PAIR_RESIDUAL_TOL * max(1.0, float(np.linalg.norm(xi))):
        raise NotComplementary(f"no grading element (residual {res:.3e})")
    return ComplementaryPair(p, q, AlgebraElement(algebra, xi), p.nilradical, common,
                             q.nilradical, res)


def grading_residual(pair: ComplementaryPair) -> float:
    """max |[xi, v] - lambda v| over the graded pieces (lambda = -1, 0, +1), relative to |xi|."""
    a = pair.ad_xi
    worst = 0.0
    for sub, lam in ((pair.eig_minus, -1.0), (pair.eig_zero, 0.0), (pair.eig_plus, 1.0)):
        if sub.dim:
            worst = max(worst, float(np.abs(a @ sub.basis - lam * sub.basis).max()))
    return worst / max(1.0, pair.xi.norm())


def are_complementary(p: Parabolic, q: Parabolic) -> bool:
    try:
        make_pair(p, q)
    except NotComplementary:
        return False
    return True


def gamma_factor(pair: ComplementaryPair, s: float) -> Automorphism:
    if s == 0:
        raise ValueError("Gamma(s) needs s != 0")
    return Automorphism(pair.algebra, pair.gamma_matrix(s))


def exp_nilpotent_matrix(ad_x: np.ndarray, check: bool = True) -> np.ndarray:
    a = np.asarray(ad_x)
    a2 = a @ a
    if check:
        a3 = a2 @ a
        scale = max(1.0, float(np.abs(a).max())) ** 3
        if np.abs(a3).max() > 1e-9 * scale:
            raise NotNilpotent("(ad x)^3 does not vanish")
    return np.eye(a.shape[-1]) + a + 0.5 * a2


def exp_nilpotent_action(x: AlgebraElement) -> Automorphism:
    return Automorphism(x.algebra, exp_nilpotent_matrix(x.algebra.ad_matrix(x.coords)))


@dataclass(frozen=True, eq=False)
class Chart:
    """Stereoprojection chart for the ordered pair (p0, pinf)."""

    pair: ComplementaryPair
    inf_basis: np.ndarray = field(repr=False)   # orthonormal basis of pinf-perp
    zero_basis: np.ndarray = field(repr=False)  # orthonormal basis of p0-perp

    @property
    def p0(self) -> Parabolic:
        return self.pair.p

    @property
    def pinf(self) -> Parabolic:
        return self.pair.q

    @property
    def algebra(self) -> LieAlgebraSpace:
        return self.pair.algebra

    def coords(self, f: AlgebraElement | np.ndarray) -> np.ndarray:
        v = f.coords if isinstance(f, AlgebraElement) else np.asarray(f)
        return v @ self.inf_basis

    def from_coords(self, c) -> AlgebraElement:
        return AlgebraElement(self.algebra, self.inf_basis @ np.asarray(c, float))

    def swapped(self) -> "Chart":
        return Chart(self.pair.swapped(), self.zero_basis, self.inf_basis)

    @cached_property
    def proj_inf(self) -> np.ndarray:
        """Projection onto pinf-perp along p0 (the +1 eigenspace of ad xi)."""
        a = self.pair.ad_xi
        return 0.5 * (a @ a + a)

    @cached_property
    def proj_zero(self) -> np.ndarray:
        """Projection onto p0-perp along pinf."""
        a = self.pair.ad_xi
        return 0.5 * (a @ a - a)


def make_chart(p0: Parabolic, pinf: Parabolic) -> Chart:
    pair = make_pair(p0, pinf)
    return Chart(pair, pinf.nilradical.basis, p0.nilradical.basis)


def stereoproject(chart: Chart, p: Parabolic) -> AlgebraElement:
    try:
        to_p = make_pair(chart.pinf, p)
    except NotComplementary as exc:
        raise NotInChart("point is not complementary to the chart's infinity") from exc
    f = chart.proj_inf @ (to_p.xi.coords + chart.pair.xi.coords)
    image = act_on_parabolic(Automorphism(chart.algebra, exp_nilpotent_matrix(
        chart.algebra.ad_matrix(f), check=False)), chart.p0, validate=False)
    res = image.distance(p)
    if res > 1e-8:
        raise NotInChart(f"stereoprojection residual {res:.3e}")
    return AlgebraElement(chart.algebra, f)


def inverse_stereoproject(chart: Chart, f: AlgebraElement) -> Parabolic:
    return act_on_parabolic(exp_nilpotent_action(f), chart.p0, validate=False)
