"""Circles through three mutually complementary points, cross-ratios and
concircular completion.

Ordering convention: ``cross_ratio(a, b, c, d)`` is the parameter of ``c`` on
the circle where ``d``, ``a``, ``b`` sit at parameters 0, 1 and infinity.  On
affine coordinates of the projective line this is the scalar
((a-b)(c-d)) / ((c-b)(a-d)), see :func:`scalar_cross_ratio`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import numerics
from .errors import NotComplementary, NotConcircular, NotPairwiseComplementary
from .liealg import AlgebraElement, Automorphism
from .numerics import INFINITY, ExtendedReal, Subspace
from .parabolic import (Parabolic, act_on_parabolic, exp_nilpotent_matrix, make_chart,
                        make_pair)

CONCIRCULAR_TOL = 1e-7


def _pair(p, q, what):
    try:
        return make_pair(p, q)
    except NotComplementary as exc:
        raise NotPairwiseComplementary(f"{what} are not complementary") from exc


@dataclass(frozen=True, eq=False)
class Circle:
    p0: Parabolic
    p1: Parabolic
    pinf: Parabolic
    x_inf: AlgebraElement
    sl2_span: Subspace = field(repr=False)

    @property
    def algebra(self):
        return self.p0.algebra

    @cached_property
    def ad_x_inf(self) -> np.ndarray:
        return self.algebra.ad_matrix(self.x_inf.coords)


def circle_through(p0: Parabolic, p1: Parabolic, pinf: Parabolic, validate: bool = True) -> Circle:
    _pair(p0, p1, "p0 and p1")
    xi0 = _pair(pinf, p0, "pinf and p0").xi
    xi1 = _pair(pinf, p1, "pinf and p1").xi
    x_inf = xi1 - xi0
    g = p0.algebra
    xi01 = _pair(p0, p1, "p0 and p1").xi
    span = numerics.subspace_from_spanning(np.column_stack([xi0.coords, xi1.coords, xi01.coords]))
    c = Circle(p0, p1, pinf, x_inf, span)
    if validate:
        image = act_on_parabolic(Automorphism(g, exp_nilpotent_matrix(c.ad_x_inf)), p0,
                                 validate=False)
        if image.distance(p1) > 1e-8:
            raise NotPairwiseComplementary("exp(x_inf) does not carry p0 to p1")
    return c


def circle_point(c: Circle, t) -> Parabolic:
    t = ExtendedReal.of(t)
    if t.is_infinite:
        return c.pinf
    g = Automorphism(c.algebra, exp_nilpotent_matrix(t.value * c.ad_x_inf, check=False))
    return act_on_parabolic(g, c.p0, validate=False)


def sl2_closure_defect(c: Circle) -> float:
    b = c.sl2_span.basis
    g = c.algebra
    br = np.einsum("ai,bj,abk->kij", b, b, g.structure).reshape(g.dim, -1)
    return float(np.abs(br - b @ (b.T @ br)).max())


def kernel_square_defect(c: Circle) -> float:
    """Distance between ker (ad x_inf)^2 and pinf."""
    a = c.ad_x_inf
    ker = Subspace(numerics.null_space(a @ a))
    return numerics.subspace_distance(ker, c.pinf.space)


def cross_ratio(a: Parabolic, b: Parabolic, c: Parabolic, d: Parabolic) -> ExtendedReal:
    _pair(a, b, "a and b")
    _pair(a, d, "a and d")
    chart_pair = _pair(d, b, "d and b")
    if c.distance(b) < 1e-7:
        return INFINITY
    if c.distance(d) < 1e-7:
        return ExtendedReal(0.0)
    try:
        to_c = make_pair(b, c)
    except NotComplementary as exc:
        raise NotConcircular("c is neither b nor complementary to it") from exc
    to_a = _pair(b, a, "b and a")
    x_inf = to_a.xi.coords + chart_pair.xi.coords
    f = to_c.xi.coords + chart_pair.xi.coords
    t = float(f @ x_inf / (x_inf @ x_inf))
    res = float(np.linalg.norm(f - t * x_inf))
    if res > CONCIRCULAR_TOL * max(1.0, float(np.linalg.norm(f))):
        raise NotConcircular(f"point lies off the circle (residual {res:.3e})")
    return ExtendedReal(t)


def cross_ratio_and_residual(a: Parabolic, b: Parabolic, c: Parabolic, d: Parabolic):
    """Least-squares circle parameter of c and its distance off the circle, without raising.

    For points that are only approximately concircular (numerical fields).
    """
    to_a = _pair(b, a, "b and a")
    chart_pair = _pair(d, b, "d and b")
    to_c = _pair(b, c, "b and c")
    x_inf = to_a.xi.coords + chart_pair.xi.coords
    f = to_c.xi.coords + chart_pair.xi.coords
    t = float(f @ x_inf / (x_inf @ x_inf))
    return t, float(np.linalg.norm(f - t * x_inf)) / max(1.0, float(np.linalg.norm(f)))


def fourth_point(a: Parabolic, b: Parabolic, d: Parabolic, lam: float) -> Parabolic:
    """The point c with cross_ratio(a, b, c, d) = lam."""
    _pair(a, b, "a and b")
    _pair(a, d, "a and d")
    pair = _pair(d, b, "d and b")
    return act_on_parabolic(Automorphism(a.algebra, pair.gamma_matrix(lam)), a, validate=False)


def scalar_cross_ratio(a, b, c, d) -> ExtendedReal:
    """((a-b)(c-d)) / ((c-b)(a-d)) on extended reals, with the limits at infinity."""
    vals = [ExtendedReal.of(x) for x in (a, b, c, d)]
    infs = [v.is_infinite for v in vals]
    a, b, c, d = (None if v.is_infinite else v.value for v in vals)
    if sum(infs) > 1:
        raise ValueError("at most one point may be at infinity")
    if infs[0]:
        num, den = (c - d), (c - b)
    elif infs[1]:
        num, den = (c - d), (a - d)
    elif infs[2]:
        num, den = (a - b), (a - d)
    elif infs[3]:
        num, den = (a - b), (c - b)
    else:
        num, den = (a - b) * (c - d), (c - b) * (a - d)
    if den == 0:
        return INFINITY
    return ExtendedReal(num / den)


def scalar_fourth_point(a, b, d, lam) -> ExtendedReal:
    """Solve scalar_cross_ratio(a, b, c, d) = lam for c (finite a, b, d)."""
    num = (a - b) * d - lam * b * (a - d)
    den = (a - b) - lam * (a - d)
    if den == 0:
        return INFINITY
    return ExtendedReal(num / den)


def mobius_fit(ts, ss):
    """Coefficients (p, q, r, u) with s = (p t + q)/(r t + u) through three pairs."""
    rows = []
    for t, s in zip(ts, ss):
        rows.append([t, 1.0, -s * t, -s])
    coeffs = numerics.null_space(np.array(rows, dtype=float))
    return coeffs[:, 0]


def mobius_apply(coeffs, t):
    p, q, r, u = coeffs
    return (p * t + q) / (r * t + u)


def concircularity_report(p: Parabolic, p1: Parabolic, p2: Parabolic, w: float) -> dict:
    """Checks for r = Gamma_p^{p1}(w) p2 and its image under tau = Gamma_p^{p1}(-1).

    Returns the five residuals used to certify that p, p1, p2, r, tau r lie on
    one circle with the expected parameters.
    """
    pair = _pair(p, p1, "p and p1")
    _pair(p, p2, "p and p2")
    _pair(p1, p2, "p1 and p2")
    g = p.algebra
    r = act_on_parabolic(Automorphism(g, pair.gamma_matrix(w)), p2, validate=False)
    tr = act_on_parabolic(Automorphism(g, pair.gamma_matrix(-1.0)), r, validate=False)
    out = {}
    out["r_tau_r_complementary"] = 0.0 if _complementary(r, tr) else 1.0
    out["r_parameter"] = abs(float(cross_ratio(p2, p1, r, p)) - w)
    out["tau_r_parameter"] = abs(float(cross_ratio(p2, p1, tr, p)) + w)
    back = act_on_parabolic(Automorphism(g, pair.gamma_matrix(1.0 / w)), r, validate=False)
    out["recover_p2"] = back.distance(p2)
    # the circle through p, p1, p2 meets r and tau r: check them in a second frame too
    out["r_in_other_frame"] = _on_circle_residual(p1, p2, p, r)
    return out


def _complementary(p, q) -> bool:
    try:
        make_pair(p, q)
    except NotComplementary:
        return False
    return True


def _on_circle_residual(a, b, d, c) -> float:
    chart = make_chart(d, b)
    x_inf = make_pair(b, a).xi.coords + chart.pair.xi.coords
    f = make_pair(b, c).xi.coords + chart.pair.xi.coords
    t = f @ x_inf / (x_inf @ x_inf)
    return float(np.linalg.norm(f - t * x_inf))
