"""Smooth isothermic maps sampled on rectangular parameter grids.

A sample stores, at every vertex, the parabolic f, the pointwise values of the
closed 1-form eta (one algebra element per coordinate direction, lying in the
nilradical of f) and a representative df_i of the derivative, with
d_i f = [df_i, f].  Edge values of 1-forms are obtained by 4-point polynomial
interpolation along grid lines: the midpoint value gives the second-order
transport used for residual checks, and the two Gauss-point values give the
fourth-order Magnus step used to propagate parallel sections.

All gauge fields are normalised to the identity at the grid origin (the
vertex with multi-index 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import (ComplementarityLost, GridDimensionMismatch, NotCartan, NotComplementary,
                     NotPairwiseComplementary, PathDependence, PoleParameter)
from .liealg import AlgebraElement, Automorphism
from .models import (Model, ModelPoint, parabolic_to_point, point_to_parabolic, rank_z)
from .numerics import rank_tol
from .parabolic import (Chart, Parabolic, act_on_parabolic, make_chart, make_pair,
                        stereoproject)

GAUSS = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)
F_PERP_TOL = 1e-9
CARTAN_TOL = 1e-10


# grids and stencils

@dataclass(frozen=True)
class Grid:
    shape: tuple
    spacing: tuple
    origin: tuple = None

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(h) for h in self.spacing)
        if len(shape) != len(spacing) or not shape:
            raise GridDimensionMismatch("shape and spacing need the same positive length")
        if any(n < 2 for n in shape) or any(not h > 0 for h in spacing):
            raise ValueError("each axis needs at least two points and a positive spacing")
        origin = (0.0,) * len(shape) if self.origin is None else tuple(float(x) for x in self.origin)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        axes = [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def refined(self) -> "Grid":
        """Same domain with half the spacing."""
        return Grid(tuple(2 * n - 1 for n in self.shape), tuple(h / 2 for h in self.spacing),
                    self.origin)

    def edge_shape(self, axis: int) -> tuple:
        s = list(self.shape)
        s[axis] -= 1
        return tuple(s)


def _weights(nodes: np.ndarray, x: float, deriv: int) -> np.ndarray:
    """Weights w with sum_j w_j p(nodes_j) = p^(deriv)(x) for polynomials of degree < len(nodes)."""
    k = len(nodes)
    powers = np.arange(k)
    vander = (nodes[None, :] - x) ** powers[:, None]
    rhs = np.zeros(k)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    return np.linalg.solve(vander, rhs)


@lru_cache(maxsize=None)
def _interp_matrix(n: int, theta: float) -> np.ndarray:
    """(n-1, n) matrix giving values at k + theta from a 4-point stencil on 0..n-1."""
    width = min(4, n)
    out = np.zeros((n - 1, n))
    for k in range(n - 1):
        s = int(np.clip(k - 1, 0, n - width))
        nodes = np.arange(s, s + width, dtype=float)
        out[k, s:s + width] = _weights(nodes, k + theta, 0)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _diff_matrix(n: int) -> np.ndarray:
    """(n, n) first-derivative matrix for unit spacing, 5-point stencils."""
    width = min(5, n)
    out = np.zeros((n, n))
    for k in range(n):
        s = int(np.clip(k - 2, 0, n - width))
        nodes = np.arange(s, s + width, dtype=float)
        out[k, s:s + width] = _weights(nodes, float(k), 1)
    out.setflags(write=False)
    return out


def _along(values: np.ndarray, grid: Grid, axis: int, mat: np.ndarray) -> np.ndarray:
    """Apply a line operator along one grid axis to per-vertex values (N, ...)."""
    tail = values.shape[1:]
    arr = values.reshape(grid.shape + tail)
    arr = np.moveaxis(arr, axis, 0)
    out = np.tensordot(mat, arr, axes=([1], [0]))
    out = np.moveaxis(out, 0, axis)
    return out.reshape((-1,) + tail)


def edge_values(form: np.ndarray, grid: Grid, axis: int, theta: float = 0.5) -> np.ndarray:
    """Interpolated values of form[:, axis] at fraction theta along every edge of one axis."""
    return _along(form[:, axis], grid, axis, _interp_matrix(grid.shape[axis], float(theta)))


def grid_derivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Fourth-order finite differences: (N, ...) -> (N, d, ...)."""
    outs = [_along(values, grid, a, _diff_matrix(grid.shape[a])) / grid.spacing[a]
            for a in range(grid.ndim)]
    return np.stack(outs, axis=1)


# samples

@dataclass(frozen=True, eq=False)
class IsothermicSample:
    model: Model
    grid: Grid
    f: tuple                 # Parabolic per vertex, C order
    eta: np.ndarray          # (N, d, dim) pointwise values eta(d/dx_i)
    df: np.ndarray           # (N, d, dim) with d_i f = [df_i, f]
    chart: Chart | None = None
    gauge: Callable | None = field(default=None, repr=False)  # t -> (N, dim, dim)

    @property
    def algebra(self):
        return self.model.algebra

    def __post_init__(self):
        n, d = self.grid.size, self.grid.ndim
        dim = self.model.algebra.dim
        if len(self.f) != n:
            raise GridDimensionMismatch(f"expected {n} vertices, got {len(self.f)}")
        for name in ("eta", "df"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (n, d, dim):
                raise GridDimensionMismatch(f"{name} has shape {a.shape}, expected {(n, d, dim)}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)


def eta_perp_residual(sample: IsothermicSample) -> float:
    """Largest relative component of eta off the nilradical of f at the same vertex."""
    worst = 0.0
    for v, p in enumerate(sample.f):
        b = p.nilradical.basis
        e = sample.eta[v].T
        off = e - b @ (b.T @ e)
        scale = max(1.0, float(np.abs(e).max()))
        worst = max(worst, float(np.abs(off).max()) / scale)
    return worst


def closedness_residual(sample: IsothermicSample) -> float:
    """Max over plaquettes of |sum of edge integrals of eta around the boundary|.

    Edge integrals use the midpoint value times the spacing.  Zero for 1-d grids.
    """
    g = sample.grid
    if g.ndim < 2:
        return 0.0
    worst = 0.0
    for a in range(g.ndim):
        for b in range(a + 1, g.ndim):
            ea = edge_values(sample.eta, g, a).reshape(g.edge_shape(a) + (-1,)) * g.spacing[a]
            eb = edge_values(sample.eta, g, b).reshape(g.edge_shape(b) + (-1,)) * g.spacing[b]
            lo_a = np.take(ea, range(g.shape[b] - 1), axis=b)
            hi_a = np.take(ea, range(1, g.shape[b]), axis=b)
            lo_b = np.take(eb, range(g.shape[a] - 1), axis=a)
            hi_b = np.take(eb, range(1, g.shape[a]), axis=a)
            circ = lo_a + hi_b - hi_a - lo_b
            worst = max(worst, float(np.linalg.norm(circ, axis=-1).max()))
    return worst


def validate_sample(sample: IsothermicSample, closed_tol: float | None = None) -> dict:
    """Check eta lies in f-perp and is closed to second order; raise ValueError otherwise."""
    perp = eta_perp_residual(sample)
    closed = closedness_residual(sample)
    h = max(sample.grid.spacing)
    scale = max(1.0, float(np.abs(sample.eta).max()))
    limit = 10.0 * h ** 2 * scale if closed_tol is None else closed_tol
    if perp > F_PERP_TOL * 100:
        raise ValueError(f"eta leaves f-perp (residual {perp:.3e})")
    if closed > limit:
        raise ValueError(f"eta is not closed (plaquette residual {closed:.3e})")
    return {"perp": perp, "closed": closed}


def sample_distance(a: IsothermicSample, b: IsothermicSample) -> float:
    return max(p.distance(q) for p, q in zip(a.f, b.f))


def _act_all(mats: np.ndarray, fs, algebra) -> tuple:
    return tuple(act_on_parabolic(Automorphism(algebra, m), p, validate=False)
                 for m, p in zip(mats, fs))


def _origin_normalised(mats: np.ndarray) -> np.ndarray:
    return np.linalg.solve(mats[0], mats)


# connections and transport

def _expm(stack: np.ndarray) -> np.ndarray:
    return scipy.linalg.expm(stack) if len(stack) else stack


def form_transports(form: np.ndarray, grid: Grid, algebra, t: float, axis: int,
                    order: int = 2) -> np.ndarray:
    """Transports tail -> head of d + t*form along every edge of one axis.

    Parallel sections satisfy zeta' = -t [form, zeta].  ``order`` 2 uses the
    midpoint value, 4 the two-point Gauss-Magnus step.
    """
    h = grid.spacing[axis]
    if order == 2:
        a = -t * h * algebra.ad_matrix(edge_values(form, grid, axis))
        return _expm(a)
    if order != 4:
        raise ValueError("order must be 2 or 4")
    a1 = -t * algebra.ad_matrix(edge_values(form, grid, axis, GAUSS[0]))
    a2 = -t * algebra.ad_matrix(edge_values(form, grid, axis, GAUSS[1]))
    omega = 0.5 * h * (a1 + a2) + (np.sqrt(3.0) / 12.0) * h * h * (a2 @ a1 - a1 @ a2)
    return _expm(omega)


def discrete_connection(sample: IsothermicSample, t: float, order: int = 2) -> tuple:
    """Per-axis arrays of edge transports of d + t*eta (tail -> head, C order of edges)."""
    return tuple(form_transports(sample.eta, sample.grid, sample.algebra, t, a, order)
                 for a in range(sample.grid.ndim))


def _edge_index(grid: Grid, tail, axis) -> int:
    return int(np.ravel_multi_index(tuple(tail), grid.edge_shape(axis)))


def boundary_loop(grid: Grid):
    """Moves (vertex, axis, sign) around the boundary of a 2-d grid, starting at the origin."""
    if grid.ndim != 2:
        raise GridDimensionMismatch("loops need a 2-d grid")
    n0, n1 = grid.shape
    moves = [((i, 0), 0, 1) for i in range(n0 - 1)]
    moves += [((n0 - 1, j), 1, 1) for j in range(n1 - 1)]
    moves += [((i, n1 - 1), 0, -1) for i in range(n0 - 1, 0, -1)]
    moves += [((0, j), 1, -1) for j in range(n1 - 1, 0, -1)]
    return moves


def corner_path(grid: Grid):
    """Moves from the origin along axis 0, then along axis 1 to the far corner."""
    n0 = grid.shape[0]
    moves = [((i,) + (0,) * (grid.ndim - 1), 0, 1) for i in range(n0 - 1)]
    if grid.ndim == 2:
        moves += [((n0 - 1, j), 1, 1) for j in range(grid.shape[1] - 1)]
    return moves


def path_transport(transports: tuple, grid: Grid, moves) -> np.ndarray:
    dim = transports[0].shape[-1]
    out = np.eye(dim)
    for vertex, axis, sign in moves:
        if sign > 0:
            out = transports[axis][_edge_index(grid, vertex, axis)] @ out
        else:
            tail = list(vertex)
            tail[axis] -= 1
            out = np.linalg.solve(transports[axis][_edge_index(grid, tail, axis)], out)
    return out


def holonomy_residual(sample: IsothermicSample, t: float) -> float:
    """|P - I| for the d + t*eta transport around the boundary of the whole grid.

    The loop has fixed physical size, so the residual converges at the order of
    the edge rule (second order).
    """
    if sample.grid.ndim < 2:
        return 0.0
    trans = discrete_connection(sample, t)
    hol = path_transport(trans, sample.grid, boundary_loop(sample.grid))
    return float(np.abs(hol - np.eye(hol.shape[0])).max())


def plaquette_holonomy(sample: IsothermicSample, t: float) -> np.ndarray:
    """|P - I| for every elementary plaquette of a 2-d grid, shape (n0-1, n1-1)."""
    g = sample.grid
    if g.ndim != 2:
        raise GridDimensionMismatch("plaquettes need a 2-d grid")
    t0, t1 = discrete_connection(sample, t)
    n0, n1 = g.shape
    a = t0.reshape(n0 - 1, n1, *t0.shape[1:])
    b = t1.reshape(n0, n1 - 1, *t1.shape[1:])
    # (i,j) -> (i+1,j) -> (i+1,j+1) versus (i,j) -> (i,j+1) -> (i+1,j+1)
    one = b[1:, :] @ a[:, :-1]
    two = a[:, 1:] @ b[:-1, :]
    return np.abs(np.linalg.solve(two, one) - np.eye(t0.shape[-1])).max(axis=(-1, -2))


def tree_transport(form: np.ndarray, grid: Grid, algebra, t: float, order: str = "column",
                   magnus: int = 4) -> np.ndarray:
    """Transport P(v <- origin) of d + t*form along a spanning tree, (N, dim, dim).

    ``column``: along the last axis at the origin line first, then along axis 0.
    ``row``: along axis 0 first, then along the last axis.
    """
    dim = algebra.dim
    if grid.ndim == 1:
        steps = form_transports(form, grid, algebra, t, 0, magnus)
        out = [np.eye(dim)]
        for s in steps:
            out.append(s @ out[-1])
        return np.stack(out)
    if grid.ndim != 2:
        raise GridDimensionMismatch("tree transport supports 1-d and 2-d grids")
    n0, n1 = grid.shape
    t0 = form_transports(form, grid, algebra, t, 0, magnus).reshape(n0 - 1, n1, dim, dim)
    t1 = form_transports(form, grid, algebra, t, 1, magnus).reshape(n0, n1 - 1, dim, dim)
    out = np.empty((n0, n1, dim, dim))
    out[0, 0] = np.eye(dim)
    if order == "column":
        for j in range(n1 - 1):
            out[0, j + 1] = t1[0, j] @ out[0, j]
        for i in range(n0 - 1):
            out[i + 1] = t0[i] @ out[i]
    elif order == "row":
        for i in range(n0 - 1):
            out[i + 1, 0] = t0[i, 0] @ out[i, 0]
        for j in range(n1 - 1):
            out[:, j + 1] = t1[:, j] @ out[:, j]
    else:
        raise ValueError(order)
    return out.reshape(-1, dim, dim)


def _path_limit(grid: Grid, scale: float) -> float:
    return 10.0 * max(grid.spacing) ** 2 * max(1.0, scale)


def checked_tree_transport(form, grid, algebra, t) -> np.ndarray:
    """Tree transport, cross-checked against the other tree; PathDependence on mismatch."""
    a = tree_transport(form, grid, algebra, t, "column")
    if grid.ndim == 1:
        return a
    b = tree_transport(form, grid, algebra, t, "row")
    gap = float(np.abs(a - b).max())
    if gap > _path_limit(grid, abs(t) * float(np.abs(form).max())):
        raise PathDependence(f"transport depends on the path (gap {gap:.3e})")
    return a


# Cartan subspaces

@dataclass(frozen=True, eq=False)
class CartanSubspace:
    chart: Chart
    basis: tuple  # AlgebraElements

    @property
    def dim(self) -> int:
        return len(self.basis)


def is_semisimple(algebra, x: np.ndarray, tol: float | None = None) -> bool:
    """rank(ad x) == rank((ad x)^2): no nilpotent Jordan part."""
    a = algebra.ad_matrix(x)
    tol = rank_tol() if tol is None else tol
    r1 = np.linalg.matrix_rank(a, tol=tol * max(1.0, np.linalg.norm(a, 2)))
    r2 = np.linalg.matrix_rank(a @ a, tol=tol * max(1.0, np.linalg.norm(a, 2) ** 2))
    return r1 == r2


def make_cartan_subspace(chart: Chart, elements, samples: int = 8) -> CartanSubspace:
    g = chart.algebra
    cols = [e.coords if isinstance(e, AlgebraElement) else np.asarray(e, float) for e in elements]
    if not cols:
        raise NotCartan("need at least one element")
    x = np.column_stack(cols)
    if np.linalg.matrix_rank(x) != len(cols):
        raise NotCartan("elements are linearly dependent")
    for c in cols:
        if np.abs(chart.proj_inf @ c + chart.proj_zero @ c - c).max() > 1e-9 * max(1.0, np.abs(c).max()):
            raise NotCartan("element has a component in the common Levi factor")
    for i in range(len(cols)):
        for j in range(i + 1, len(cols)):
            if np.abs(g.br(cols[i], cols[j])).max() > CARTAN_TOL:
                raise NotCartan(f"elements {i} and {j} do not commute")
    rng = np.random.default_rng(0)
    trial = [*cols] + [x @ rng.standard_normal(len(cols)) for _ in range(samples)]
    for c in trial:
        if not is_semisimple(g, c):
            raise NotCartan("an element of the span is not semisimple")
    gram = x.T @ g.killing @ x
    if np.linalg.matrix_rank(gram, tol=1e-9 * max(1.0, np.abs(gram).max())) != len(cols):
        raise NotCartan("the Killing form is degenerate on the span")
    return CartanSubspace(chart, tuple(g.element(c) for c in cols))


def standard_chart(model: Model) -> Chart:
    """Chart at the model's base points: (v0, vinf) for conformal, (<e1>, <e2>)-type otherwise."""
    if model.kind == "conformal":
        p0 = point_to_parabolic(ModelPoint(model, model.v0))
        pinf = point_to_parabolic(ModelPoint(model, model.vinf))
    else:
        k, n = model.params
        if 2 * k != n:
            raise NotCartan("the standard chart needs a self-dual Grassmannian")
        eye = np.eye(n)
        p0 = point_to_parabolic(ModelPoint(model, eye[:, :k]))
        pinf = point_to_parabolic(ModelPoint(model, eye[:, k:]))
    return make_chart(p0, pinf)


def conformal_cartan_subspace(model: Model, c: float = 0.7, dim: int = 2) -> CartanSubspace:
    """span{e_k ^ (vinf + s_k c v0)} with alternating signs s_k; a maximal choice has dim 2."""
    from .liealg import wedge_matrix
    if model.kind != "conformal":
        raise NotCartan("needs a conformal model")
    chart = standard_chart(model)
    g = model.algebra
    elems = []
    for k in range(dim):
        u = model.vinf + (1 if k % 2 == 0 else -1) * c * model.v0
        elems.append(g.coords_of_matrix(wedge_matrix(model.flat_basis[:, k], u, model.metric)))
    return make_cartan_subspace(chart, elems)


def rp1_cartan_subspace() -> CartanSubspace:
    """span{E + F} in sl(2) with the chart (<e1>, <e2>)."""
    from .models import rp1
    model = rp1()
    g = model.algebra
    chart = standard_chart(model)
    x = g.coords_of_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    return make_cartan_subspace(chart, [x])


def build_cartan_isothermic(model: Model, cs: CartanSubspace, grid: Grid) -> IsothermicSample:
    """f = exp(F) p0 with F, F^c the chart projections of the Cartan point at each vertex."""
    if grid.ndim != cs.dim:
        raise GridDimensionMismatch(f"grid has {grid.ndim} axes, Cartan subspace has dim {cs.dim}")
    g = model.algebra
    ch = cs.chart
    x = np.column_stack([e.coords for e in cs.basis])
    big_f = ch.proj_inf @ x        # (dim, d) columns F_i
    big_fc = ch.proj_zero @ x      # columns F^c_i
    pts = grid.points()
    fv = pts @ big_f.T             # (N, dim)
    fcv = pts @ big_fc.T
    ad_f = g.ad_matrix(fv)
    exp_f = np.eye(g.dim) + ad_f + 0.5 * ad_f @ ad_f  # ad F is nilpotent of order 3
    f = _act_all(exp_f, [ch.p0] * grid.size, g)
    eta = np.einsum("nab,bi->nia", exp_f, big_fc)
    df = np.broadcast_to(big_f.T, (grid.size,) + big_f.T.shape).copy()
    exp_minus = np.linalg.inv(exp_f)

    def gauge(t: float) -> np.ndarray:
        phi = _expm(g.ad_matrix(fv + t * fcv)) @ exp_minus
        return _origin_normalised(phi)

    return IsothermicSample(model, grid, f, eta, df, ch, gauge)


def cartan_stereoprojections(cs: CartanSubspace, grid: Grid):
    """(F, F^c) coordinates at every vertex, as (N, dim) arrays."""
    x = np.column_stack([e.coords for e in cs.basis])
    pts = grid.points()
    return pts @ (cs.chart.proj_inf @ x).T, pts @ (cs.chart.proj_zero @ x).T


def cartan_dimension_witness(model: Model, cs: CartanSubspace) -> dict:
    return {"dim": cs.dim, "rank_z": rank_z(model), "within_bound": cs.dim <= rank_z(model)}


# Darboux pairs

@dataclass(frozen=True, eq=False)
class DarbouxPairDecomposition:
    grid: Grid
    xi: np.ndarray         # (N, dim)
    ad_xi: np.ndarray      # (N, dim, dim)
    beta: np.ndarray       # (N, d, dim), values in fhat-perp
    beta_hat: np.ndarray   # (N, d, dim), values in f-perp
    level_part: np.ndarray  # (N, d, dim), part of d xi in f cap fhat (vanishes to O(h^4))

    @property
    def n_form(self) -> np.ndarray:
        return -self.beta - self.beta_hat


def pair_field(fs, fhats) -> list:
    out = []
    for v, (p, q) in enumerate(zip(fs, fhats)):
        try:
            out.append(make_pair(p, q))
        except NotComplementary as exc:
            raise ComplementarityLost(f"pair is not complementary at vertex {v}", location=v) from exc
    return out


def darboux_decomposition(grid: Grid, fs, fhats, pairs=None) -> DarbouxPairDecomposition:
    """Split d xi = beta - beta_hat with beta in fhat-perp and beta_hat in f-perp."""
    pairs = pair_field(fs, fhats) if pairs is None else pairs
    xi = np.stack([p.xi.coords for p in pairs])
    ad = np.stack([p.ad_xi for p in pairs])
    a2 = ad @ ad
    plus = 0.5 * (a2 + ad)
    minus = 0.5 * (a2 - ad)
    dxi = grid_derivative(xi, grid)
    beta = np.einsum("nab,nib->nia", plus, dxi)
    beta_hat = -np.einsum("nab,nib->nia", minus, dxi)
    return DarbouxPairDecomposition(grid, xi, ad, beta, beta_hat, dxi - beta + beta_hat)


def decomposition_residual(dec: DarbouxPairDecomposition) -> float:
    """|d xi - [xi, beta + beta_hat]| from the finite-difference d xi."""
    br = np.einsum("nab,nib->nia", dec.ad_xi, dec.beta + dec.beta_hat)
    dxi = dec.beta - dec.beta_hat + dec.level_part
    return float(np.abs(dxi - br).max())


def _gamma(ad: np.ndarray, s) -> np.ndarray:
    from .parabolic import gamma_matrix
    return gamma_matrix(ad, s)


def _partner_sample(base: IsothermicSample, fhat: tuple, m: float, pairs=None) -> IsothermicSample:
    """The m-Darboux partner of base with parabolics fhat: eta_hat = beta/m, df_hat = -m eta."""
    g = base.algebra
    pairs = pair_field(base.f, fhat) if pairs is None else pairs
    ad = np.stack([p.ad_xi for p in pairs])
    plus = 0.5 * (ad @ ad + ad)  # onto fhat-perp along f
    eta_hat = -np.einsum("nab,nib->nia", plus, base.df) / m
    df_hat = -m * base.eta
    gauge = None
    if base.gauge is not None:
        parent = base.gauge

        def gauge(t: float) -> np.ndarray:
            s = 1.0 - t / m
            if s == 0:
                raise PoleParameter(f"t = {t} is the Darboux parameter")
            return _origin_normalised(parent(t) @ np.linalg.inv(_gamma(ad, s)))

    return IsothermicSample(base.model, base.grid, fhat, eta_hat, df_hat, base.chart, gauge)


def darboux(sample: IsothermicSample, m: float, seed: Parabolic | None = None,
            route: str = "auto") -> IsothermicSample:
    """m-Darboux transform: the d + m*eta parallel field of parabolics through seed.

    ``route``: ``gauge`` uses the exact gauge, ``magnus`` fourth-order
    propagation, ``auto`` the gauge when available.
    """
    if m == 0:
        raise ValueError("Darboux parameter must be nonzero")
    if seed is None:
        if sample.chart is None:
            raise ValueError("no seed given and the sample has no chart")
        seed = sample.chart.pinf
    try:
        make_pair(sample.f[0], seed)
    except NotComplementary as exc:
        raise ComplementarityLost("seed is not complementary to f at the origin", location=0) from exc
    g = sample.algebra
    trans = None
    if route in ("auto", "gauge") and sample.gauge is not None:
        try:
            trans = np.linalg.inv(sample.gauge(m))
        except PoleParameter:
            if route == "gauge":
                raise
    elif route == "gauge":
        raise ValueError("sample has no exact gauge")
    if trans is None:
        trans = checked_tree_transport(sample.eta, sample.grid, g, m)
    fhat = _act_all(trans, [seed] * sample.grid.size, g)
    return _partner_sample(sample, fhat, m)


def gauge_identity_residual(sample: IsothermicSample, partner: IsothermicSample, m: float,
                            t: float) -> float:
    """Gamma_f^fhat(1 - t/m) d+t*eta = d + t*eta_hat, tested on transports along the corner path.

    Both sides use the second-order edge rule, so the residual is O(h^2).
    """
    s = 1.0 - t / m
    if s == 0:
        raise PoleParameter("t equals the Darboux parameter")
    grid = sample.grid
    moves = corner_path(grid)
    p = path_transport(discrete_connection(sample, t), grid, moves)
    phat = path_transport(discrete_connection(partner, t), grid, moves)
    end = np.unravel_index(0, grid.shape)
    end = list(moves[-1][0])
    end[moves[-1][1]] += moves[-1][2]
    end_idx = int(np.ravel_multi_index(tuple(end), grid.shape))
    g0 = make_pair(sample.f[0], partner.f[0]).gamma_matrix(s)
    g1 = make_pair(sample.f[end_idx], partner.f[end_idx]).gamma_matrix(s)
    return float(np.abs(g1 @ p @ np.linalg.inv(g0) - phat).max())


def gauge_check(sample: IsothermicSample, t: float) -> float:
    """Edge transport of d + t*eta against the exact gauge: max |Phi(head)^-1 Phi(tail) - T|."""
    if sample.gauge is None:
        raise ValueError("sample has no exact gauge")
    phi = sample.gauge(t)
    grid = sample.grid
    worst = 0.0
    for axis, trans in enumerate(discrete_connection(sample, t)):
        heads = np.arange(grid.size).reshape(grid.shape)
        tails = np.take(heads, range(grid.shape[axis] - 1), axis=axis).reshape(-1)
        heads = np.take(heads, range(1, grid.shape[axis]), axis=axis).reshape(-1)
        exact = np.linalg.solve(phi[heads], phi[tails])
        worst = max(worst, float(np.abs(exact - trans).max()))
    return worst


# T-transforms

def t_transform_gauge(sample: IsothermicSample, t: float) -> np.ndarray:
    """Phi_t with Phi_t . (d + t*eta) = d, identity at the origin."""
    if sample.gauge is not None:
        return sample.gauge(t)
    if t == 0:
        return np.broadcast_to(np.eye(sample.algebra.dim), (sample.grid.size,) * 1
                               + (sample.algebra.dim,) * 2).copy()
    p = checked_tree_transport(sample.eta, sample.grid, sample.algebra, t)
    return np.linalg.inv(p)


def t_transform(sample: IsothermicSample, t: float) -> IsothermicSample:
    g = sample.algebra
    phi = t_transform_gauge(sample, t)
    f = _act_all(phi, sample.f, g)
    eta = np.einsum("nab,nib->nia", phi, sample.eta)
    df = np.einsum("nab,nib->nia", phi, sample.df)
    gauge = None
    if sample.gauge is not None:
        parent = sample.gauge
        phi_inv = np.linalg.inv(phi)

        def gauge(s: float) -> np.ndarray:
            return _origin_normalised(parent(s + t) @ phi_inv)

    return IsothermicSample(sample.model, sample.grid, f, eta, df, None, gauge)


# Christoffel transform

def _stereo_data(sample: IsothermicSample, chart: Chart):
    """F at every vertex and dF_i, the part of df_i in pinf-perp along f."""
    g = sample.algebra
    big_f = np.empty((sample.grid.size, g.dim))
    d_f = np.empty_like(sample.df)
    for v, p in enumerate(sample.f):
        big_f[v] = stereoproject(chart, p).coords
        ad = make_pair(p, chart.pinf).ad_xi
        plus = 0.5 * (ad @ ad + ad)
        d_f[v] = sample.df[v] @ plus.T
    return big_f, d_f


def _integrate(form: np.ndarray, grid: Grid, order: str) -> np.ndarray:
    """Fourth-order integral of a closed vector-valued 1-form from the origin along a tree."""
    dim = form.shape[-1]
    incs = []
    for a in range(grid.ndim):
        w = 0.5 * grid.spacing[a] * (_interp_matrix(grid.shape[a], GAUSS[0])
                                     + _interp_matrix(grid.shape[a], GAUSS[1]))
        incs.append(_along(form[:, a], grid, a, w).reshape(grid.edge_shape(a) + (dim,)))
    if grid.ndim == 1:
        out = np.zeros((grid.shape[0], dim))
        out[1:] = np.cumsum(incs[0], axis=0)
        return out
    n0, n1 = grid.shape
    out = np.zeros((n0, n1, dim))
    if order == "column":
        out[0, 1:] = np.cumsum(incs[1][0], axis=0)
        out[1:] = out[0][None] + np.cumsum(incs[0], axis=0)
    else:
        out[1:, 0] = np.cumsum(incs[0][:, 0], axis=0)
        out[:, 1:] = out[:, 0][:, None] + np.cumsum(incs[1], axis=1)
    return out.reshape(-1, dim)


def christoffel(sample: IsothermicSample, chart: Chart | None = None,
                base: np.ndarray | AlgebraElement | None = None) -> IsothermicSample:
    """Christoffel transform with respect to the chart (p0, pinf).

    F^c integrates omega = proj onto p0-perp of exp(-F) eta, starting from
    ``base`` (default 0) at the origin; the output has f^c = exp(F^c) pinf,
    eta^c = exp(F^c) dF and the swapped chart.
    """
    chart = sample.chart if chart is None else chart
    if chart is None:
        raise ValueError("Christoffel transform needs a chart")
    g = sample.algebra
    big_f, d_f = _stereo_data(sample, chart)
    ad_f = g.ad_matrix(big_f)
    exp_minus = np.eye(g.dim) - ad_f + 0.5 * ad_f @ ad_f
    omega = np.einsum("ab,nbc,nic->nia", chart.proj_zero, exp_minus, sample.eta)
    fc = _integrate(omega, sample.grid, "column")
    if sample.grid.ndim > 1:
        gap = float(np.abs(fc - _integrate(omega, sample.grid, "row")).max())
        if gap > _path_limit(sample.grid, float(np.abs(omega).max())):
            raise PathDependence(f"omega is not closed (path gap {gap:.3e})")
    if base is not None:
        fc = fc + (base.coords if isinstance(base, AlgebraElement) else np.asarray(base, float))
    ad_fc = g.ad_matrix(fc)
    exp_fc = np.eye(g.dim) + ad_fc + 0.5 * ad_fc @ ad_fc
    f_c = _act_all(exp_fc, [chart.pinf] * sample.grid.size, g)
    eta_c = np.einsum("nab,nib->nia", exp_fc, d_f)
    return IsothermicSample(sample.model, sample.grid, f_c, eta_c, omega, chart.swapped())


def christoffel_stereoprojection(sample: IsothermicSample) -> np.ndarray:
    """Stereoprojections of a sample from its own chart's p0 side, (N, dim)."""
    return np.stack([stereoproject(sample.chart, p).coords for p in sample.f])


def bracket_residual(sample: IsothermicSample, christ: IsothermicSample) -> float:
    """[dF ^ dF^c] = [dF_0, dF^c_1] - [dF_1, dF^c_0], max over vertices."""
    if sample.grid.ndim < 2:
        return 0.0
    g = sample.algebra
    _, d_f = _stereo_data(sample, sample.chart)
    d_fc = christ.df
    r = g.br(d_f[:, 0], d_fc[:, 1]) - g.br(d_f[:, 1], d_fc[:, 0])
    return float(np.abs(r).max())


def christoffel_darboux_base(sample_f0: Parabolic, fhat0: Parabolic, chart: Chart,
                             m: float, base=None) -> np.ndarray:
    """Starting value of (fhat)^c matching D_m f^c: F^c(0) + proj_{p0-perp}(xi_f^fhat)/m."""
    xi = make_pair(sample_f0, fhat0).xi.coords
    start = np.zeros_like(xi) if base is None else np.asarray(base, float)
    return start + chart.proj_zero @ xi / m


# Bianchi permutability

def bianchi_point(p: Parabolic, p1: Parabolic, p2: Parabolic, m1: float, m2: float) -> Parabolic:
    """Gamma_{p2}^{p1}(m2/m1) p."""
    try:
        pair = make_pair(p2, p1)
    except NotComplementary as exc:
        raise NotPairwiseComplementary("the two Darboux transforms are not complementary") from exc
    return act_on_parabolic(Automorphism(p.algebra, pair.gamma_matrix(m2 / m1)), p, validate=False)


def bianchi_fourth(f: IsothermicSample, f1: IsothermicSample, m1: float,
                   f2: IsothermicSample, m2: float) -> IsothermicSample:
    """Fourth map of the Bianchi quadrilateral; it is the m2-Darboux partner of f1."""
    if m1 == m2:
        raise ValueError("Bianchi permutability needs distinct parameters")
    fhat = tuple(bianchi_point(p, p1, p2, m1, m2) for p, p1, p2 in zip(f.f, f1.f, f2.f))
    return _partner_sample(f1, fhat, m2)


def bianchi_certificates(f, f1, m1, f2, m2, fhat) -> dict:
    """Constant cross-ratio and the two Darboux relations of the quadrilateral."""
    from .circles import cross_ratio
    worst = 0.0
    for p, p1, ph, p2 in zip(f.f, f1.f, fhat.f, f2.f):
        worst = max(worst, abs(float(cross_ratio(p, p1, ph, p2)) - m2 / m1))
    via1 = darboux(f1, m2, fhat.f[0], route="magnus")
    via2 = darboux(f2, m1, fhat.f[0], route="magnus")
    return {"cross_ratio": worst, "darboux_from_f1": sample_distance(via1, fhat),
            "darboux_from_f2": sample_distance(via2, fhat)}


def bianchi_cube(f: IsothermicSample, legs) -> dict:
    """legs = ((m1, f1), (m2, f2), (m3, f3)); returns the pointwise cube and checks."""
    from .circles import cross_ratio
    (m1, f1), (m2, f2), (m3, f3) = legs
    if len({m1, m2, m3}) < 3:
        raise ValueError("cube parameters must be distinct")

    def fourth(base, a, ma, b, mb, stage):
        try:
            return tuple(bianchi_point(p, pa, pb, ma, mb) for p, pa, pb in zip(base, a, b))
        except NotPairwiseComplementary as exc:
            raise NotPairwiseComplementary(f"{stage}: {exc}") from exc

    f12 = fourth(f.f, f1.f, m1, f2.f, m2, "f12")
    f13 = fourth(f.f, f1.f, m1, f3.f, m3, "f13")
    f23 = fourth(f.f, f2.f, m2, f3.f, m3, "f23")
    way1 = fourth(f1.f, f12, m2, f13, m3, "f1(23)")
    way2 = fourth(f2.f, f23, m3, f12, m1, "f2(31)")
    way3 = fourth(f3.f, f13, m1, f23, m2, "f3(12)")
    agree = max(max(a.distance(b), a.distance(c)) for a, b, c in zip(way1, way2, way3))
    # both tetrahedra (f3, f1, f123, f2) and (f12, f23, f, f13) share this cross-ratio
    target = (1 - m3 / m1) / (1 - m3 / m2)
    cr = cr2 = 0.0
    for p, p1, p2, p3, p12, p13, p23, p123 in zip(f.f, f1.f, f2.f, f3.f, f12, f13, f23, way1):
        cr = max(cr, abs(float(cross_ratio(p3, p1, p123, p2)) - target))
        cr2 = max(cr2, abs(float(cross_ratio(p12, p23, p, p13)) - target))
    return {"f12": f12, "f13": f13, "f23": f23, "f123": way1, "three_way": agree,
            "cross_ratio": cr, "second_tetrahedron": cr2}


# Christoffel as a limit of Darboux transforms

def christoffel_blowup_check(sample: IsothermicSample, chart: Chart | None = None,
                             s_values=None) -> dict:
    """Distances of Gamma_{p0}^{pinf}(-s) fhat_s from f^c, fhat_s seeded at pinf."""
    chart = sample.chart if chart is None else chart
    s_values = [0.1 / 2 ** k for k in range(7)] if s_values is None else list(s_values)
    fc = christoffel(sample, chart)
    g = sample.algebra
    dist, eta_err = [], []
    for s in s_values:
        fhat = darboux(sample, s, chart.pinf)
        gm = Automorphism(g, chart.pair.gamma_matrix(-s))
        dist.append(max(act_on_parabolic(gm, p, validate=False).distance(q)
                        for p, q in zip(fhat.f, fc.f)))
        eta_err.append(float(np.abs(np.einsum("ab,nib->nia", gm.matrix, fhat.eta) - fc.eta).max()))
    ratios = [dist[k + 1] / dist[k] for k in range(len(dist) - 1)]
    return {"s": s_values, "distance": dist, "eta_error": eta_err, "ratios": ratios}


# quadratic form and curved flats

def quadratic_form(sample: IsothermicSample) -> np.ndarray:
    """q_ij = B(eta_i, df_j) at every vertex, (N, d, d)."""
    return np.einsum("nia,ab,njb->nij", sample.eta, sample.algebra.killing, sample.df)


def pair_quadratic_form(dec: DarbouxPairDecomposition, algebra, m: float) -> np.ndarray:
    """-(1/2m) B(N_i, N_j) for the pair decomposition.

    With d_i f = [df_i, f] one has df = -beta mod f, which fixes the sign.
    """
    n = dec.n_form
    return -np.einsum("nia,ab,njb->nij", n, algebra.killing, n) / (2 * m)


def curved_flat_residual(grid: Grid, fs, fhats, algebra) -> float:
    """max over vertices of |[N_0, N_1]| with N = -beta - beta_hat."""
    dec = darboux_decomposition(grid, fs, fhats)
    if grid.ndim < 2:
        return 0.0
    n = dec.n_form
    return float(np.abs(algebra.br(n[:, 0], n[:, 1])).max())


def moving_complement(grid: Grid, algebra, q: Parabolic, generators) -> tuple:
    """exp(sum_i x_i Y_i) q at every vertex: a generic complementary field for controls.

    A constant complement is always a curved flat (N then lies in the abelian
    q-perp), so controls need the field to move.
    """
    y = np.stack([np.asarray(gen.coords if isinstance(gen, AlgebraElement) else gen, float)
                  for gen in generators])
    mats = _expm(algebra.ad_matrix(grid.points() @ y))
    return _act_all(mats, [q] * grid.size, algebra)


def spectral_deformation_check(sample: IsothermicSample, partner: IsothermicSample, m: float,
                               u: float) -> dict:
    """Psi_u . d^u = d against the T-transforms with parameter m(1 - u^2).

    With gauges normalised at the origin, Psi_u f = C T f and
    Psi_u fhat = C' T fhat for the constants C = Gamma_f^fhat(u) and
    C' = Gamma_f^fhat(1/u) at the origin.
    """
    g = sample.algebra
    dec = darboux_decomposition(sample.grid, sample.f, partner.f)
    # d^u = d + (u - 1) N
    psi = np.linalg.inv(checked_tree_transport(dec.n_form, sample.grid, g, u - 1.0))
    s = m * (1 - u * u)
    tf = t_transform(sample, s)
    tfh = t_transform(partner, s)
    const = Automorphism(g, _gamma(dec.ad_xi[0], u))
    const_hat = Automorphism(g, _gamma(dec.ad_xi[0], 1.0 / u))
    worst_f = worst_h = 0.0
    for v in range(sample.grid.size):
        gv = Automorphism(g, psi[v])
        worst_f = max(worst_f, act_on_parabolic(gv, sample.f[v], validate=False).distance(
            act_on_parabolic(const, tf.f[v], validate=False)))
        worst_h = max(worst_h, act_on_parabolic(gv, partner.f[v], validate=False).distance(
            act_on_parabolic(const_hat, tfh.f[v], validate=False)))
    return {"f": worst_f, "fhat": worst_h}


def t_darboux_commutation(sample: IsothermicSample, m: float, seed: Parabolic, t: float) -> float:
    """T_t D_m f against D_{m-t} T_t f.

    With normalised gauges the two agree after the constant Gamma_f^fhat(1 - t/m)
    taken at the origin.
    """
    fhat = darboux(sample, m, seed)
    td = t_transform(fhat, t)
    tf = t_transform(sample, t)
    dt = darboux(tf, m - t, td.f[0])
    const = Automorphism(sample.algebra,
                         make_pair(sample.f[0], fhat.f[0]).gamma_matrix(1.0 - t / m))
    return max(a.distance(act_on_parabolic(const, b, validate=False)) for a, b in zip(td.f, dt.f))


# dressing with a real parameter

def dressing_real(f: IsothermicSample, f1: IsothermicSample, m1: float, w: float,
                  seed2: Parabolic) -> dict:
    """Dress the curved flat (f, f1) with r = Gamma_f^f1(w) f2, f2 = D_{m1(1-w^2)} f."""
    if w == 0 or abs(w) == 1:
        raise ValueError("w must be nonzero and different from +-1")
    m2 = m1 * (1 - w * w)
    g = f.algebra
    f2 = darboux(f, m2, seed2)
    pairs = pair_field(f.f, f1.f)
    ad = np.stack([p.ad_xi for p in pairs])
    r = _act_all(_gamma(ad, w), f2.f, g)
    tau_r = _act_all(_gamma(ad, -1.0), r, g)
    lam = (1 + w) / (1 - w)
    dressed_f, dressed_f1, r_pairs = [], [], []
    for v in range(f.grid.size):
        try:
            pr = make_pair(tau_r[v], r[v])
        except NotComplementary as exc:
            raise ComplementarityLost(f"r and tau r meet at vertex {v}", location=v) from exc
        r_pairs.append(pr)
        gm = Automorphism(g, pr.gamma_matrix(lam))
        dressed_f.append(act_on_parabolic(gm, f.f[v], validate=False))
        dressed_f1.append(act_on_parabolic(gm, f1.f[v], validate=False))
    fhat = bianchi_fourth(f, f1, m1, f2, m2)
    back = _act_all(_gamma(ad, 1.0 / w), r, g)
    dec = darboux_decomposition(f.grid, f.f, f1.f, pairs)
    p_w = checked_tree_transport(dec.n_form, f.grid, g, w - 1.0)
    r_par = _act_all(p_w, [r[0]] * f.grid.size, g)
    return {
        "m2": m2, "f2": f2, "fhat": fhat, "r": r, "tau_r": tau_r,
        "dressed_f": tuple(dressed_f), "dressed_f1": tuple(dressed_f1),
        "match_fhat": max(a.distance(b) for a, b in zip(dressed_f, fhat.f)),
        "match_f2": max(a.distance(b) for a, b in zip(dressed_f1, f2.f)),
        "recover_f2": max(a.distance(b) for a, b in zip(back, f2.f)),
        "r_parallel": max(a.distance(b) for a, b in zip(r_par, r)),
        "decomposition": dec, "r_pairs": r_pairs,
    }


def dressed_transport_norm(result: dict, grid: Grid, algebra, u: float, w: float,
                           edges: int = 4) -> float:
    """Largest entry of Gamma(u)(head) P^{d^u} Gamma(u)(tail)^-1 over the first edges of axis 0.

    Gamma(u) = Gamma_{tau r}^{r}((u - w)/(u + w)); the product stays bounded near u = +-w.
    """
    dec = result["decomposition"]
    trans = form_transports(dec.n_form, grid, algebra, u - 1.0, 0, order=4)
    lam = (u - w) / (u + w)
    worst = 0.0
    for k in range(min(edges, grid.shape[0] - 1)):
        tail = int(np.ravel_multi_index((k,) + (0,) * (grid.ndim - 1), grid.shape))
        head = int(np.ravel_multi_index((k + 1,) + (0,) * (grid.ndim - 1), grid.shape))
        e = _edge_index(grid, (k,) + (0,) * (grid.ndim - 1), 0)
        gt = result["r_pairs"][tail].gamma_matrix(lam)
        gh = result["r_pairs"][head].gamma_matrix(lam)
        worst = max(worst, float(np.abs(gh @ trans[e] @ np.linalg.inv(gt)).max()))
    return worst


# permutability with the Christoffel transform

def christoffel_darboux_permutability(sample: IsothermicSample, m: float, seed: Parabolic,
                                      chart: Chart | None = None) -> dict:
    """(D_m f)^c against D_m (f^c) with matching starting points."""
    chart = sample.chart if chart is None else chart
    fhat = darboux(sample, m, seed)
    fc = christoffel(sample, chart)
    base = christoffel_darboux_base(sample.f[0], fhat.f[0], chart, m)
    fhat_c = christoffel(fhat, chart, base)
    other = darboux(fc, m, fhat_c.f[0], route="magnus")
    return {"distance": sample_distance(fhat_c, other), "fhat": fhat, "fc": fc,
            "fhat_c": fhat_c, "darboux_of_fc": other}


def christoffel_bianchi_check(f: IsothermicSample, f1, m1, f2, m2, fhat,
                              chart: Chart | None = None) -> dict:
    """Christoffel transforms of a Bianchi quadrilateral form a Bianchi quadrilateral."""
    from .circles import cross_ratio_and_residual
    chart = f.chart if chart is None else chart
    fc = christoffel(f, chart)
    b1 = christoffel_darboux_base(f.f[0], f1.f[0], chart, m1)
    b2 = christoffel_darboux_base(f.f[0], f2.f[0], chart, m2)
    bh = christoffel_darboux_base(f1.f[0], fhat.f[0], chart, m2, b1)
    f1c = christoffel(f1, chart, b1)
    f2c = christoffel(f2, chart, b2)
    fhc = christoffel(fhat, chart, bh)
    cr = off = 0.0
    for a, b, c, d in zip(fc.f, f1c.f, fhc.f, f2c.f):
        t, res = cross_ratio_and_residual(a, b, c, d)
        cr, off = max(cr, abs(t - m2 / m1)), max(off, res)
    return {
        "cross_ratio": cr,
        "off_circle": off,
        "f1c_is_darboux": sample_distance(darboux(fc, m1, f1c.f[0], route="magnus"), f1c),
        "f2c_is_darboux": sample_distance(darboux(fc, m2, f2c.f[0], route="magnus"), f2c),
        "fhatc_is_darboux": sample_distance(darboux(f1c, m2, fhc.f[0], route="magnus"), fhc),
    }


# serialisation

def sample_to_json(sample: IsothermicSample, metadata: dict | None = None) -> str:
    from .nets import canonical_representative
    model = sample.model

    def rep(p):
        return np.round(canonical_representative(parabolic_to_point(p, model)), 15).tolist()

    doc = {
        "model": model.tag,
        "chart": None if sample.chart is None else [rep(sample.chart.p0), rep(sample.chart.pinf)],
        "grid_shape": list(sample.grid.shape),
        "spacings": list(sample.grid.spacing),
        "origin": list(sample.grid.origin),
        "vertices": [rep(p) for p in sample.f],
        "eta": np.round(sample.eta, 15).tolist(),
        "df": np.round(sample.df, 15).tolist(),
    }
    if metadata is not None:
        doc["metadata"] = metadata
    return json.dumps(doc, indent=1)


def sample_from_json(text: str) -> IsothermicSample:
    from .models import model_from_tag
    doc = json.loads(text)
    model = model_from_tag(doc["model"])

    def par(r):
        return point_to_parabolic(ModelPoint(model, np.array(r)))

    grid = Grid(tuple(doc["grid_shape"]), tuple(doc["spacings"]), tuple(doc["origin"]))
    chart = None if doc["chart"] is None else make_chart(par(doc["chart"][0]), par(doc["chart"][1]))
    return IsothermicSample(model, grid, tuple(par(r) for r in doc["vertices"]),
                            np.array(doc["eta"]), np.array(doc["df"]), chart)
