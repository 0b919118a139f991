"""Discrete isothermic nets on rectangles of Z^2.

Vertices are indexed (a, b) with 0 <= a < w and 0 <= b < h.  The elementary
quadrilateral at (a, b) has corners i = (a, b), j = (a+1, b), k = (a+1, b+1),
l = (a, b+1).  The factorising function lives on edge classes: every edge
from (a, b) to (a+1, b) carries ``m_h[a]`` and every edge from (a, b) to
(a, b+1) carries ``m_v[b]``, so opposite edges agree by construction.

Propagation over the rectangle uses a fixed spanning tree: up column a = 0
from the base vertex, then along each row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .circles import cross_ratio, fourth_point
from .errors import (ComplementarityLost, DegenerateQuad, NotComplementary, NotPairwiseComplementary,
                     NotSelfDual, PoleParameter)
from .liealg import Automorphism
from .models import (Model, ModelPoint, conformal_coords, parabolic_to_point, point_to_parabolic,
                     snap_parabolic)
from .parabolic import Parabolic, act_on_parabolic, make_pair

NET_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Net:
    model: Model
    f: tuple  # f[a][b] -> Parabolic
    m_h: np.ndarray
    m_v: np.ndarray
    _pairs: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self):
        return len(self.f), len(self.f[0])

    def vertices(self):
        w, h = self.shape
        for b in range(h):
            for a in range(w):
                yield a, b

    def edge_m(self, i, j) -> float:
        (a0, b0), (a1, b1) = i, j
        if b0 == b1 and abs(a1 - a0) == 1:
            return float(self.m_h[min(a0, a1)])
        if a0 == a1 and abs(b1 - b0) == 1:
            return float(self.m_v[min(b0, b1)])
        raise ValueError(f"{i} and {j} are not adjacent")

    def at(self, v) -> Parabolic:
        return self.f[v[0]][v[1]]

    def pair(self, i, j):
        """Complementary pair (f(i), f(j)), cached."""
        key = (tuple(i), tuple(j))
        if key not in self._pairs:
            rev = (tuple(j), tuple(i))
            if rev in self._pairs:
                self._pairs[key] = self._pairs[rev].swapped()
            else:
                self._pairs[key] = make_pair(self.at(i), self.at(j))
        return self._pairs[key]

    def quads(self):
        w, h = self.shape
        for b in range(h - 1):
            for a in range(w - 1):
                yield (a, b), (a + 1, b), (a + 1, b + 1), (a, b + 1)


def _require_self_dual(model: Model):
    if not model.self_dual:
        raise NotSelfDual(f"{model.tag} is not self-dual; nets need circles")


def _as_grid(rows_by_a):
    return tuple(tuple(col) for col in rows_by_a)


def quad_target(net: Net, quad) -> float:
    i, j, _, l = quad
    return net.edge_m(i, l) / net.edge_m(i, j)


def make_net(model: Model, f, m_h, m_v, validate: bool = True) -> Net:
    _require_self_dual(model)
    m_h = np.asarray(m_h, dtype=float)
    m_v = np.asarray(m_v, dtype=float)
    w, h = len(f), len(f[0])
    if m_h.shape != (max(w - 1, 0),) or m_v.shape != (max(h - 1, 0),):
        raise ValueError("factorising function has the wrong number of edge classes")
    if np.any(m_h == 0) or np.any(m_v == 0):
        raise ValueError("factorising function must be nonzero")
    net = Net(model, _as_grid(f), m_h, m_v)
    if validate:
        res = net_invariant_residual(net)
        if res > NET_TOL:
            raise DegenerateQuad(f"cross-ratio condition fails (residual {res:.3e})")
    return net


def net_invariant_residual(net: Net) -> float:
    worst = 0.0
    for quad in net.quads():
        i, j, k, l = quad
        try:
            for x, y in ((i, j), (j, k), (k, l), (l, i), (i, k), (j, l)):
                net.pair(x, y)
            cr = cross_ratio(net.at(i), net.at(j), net.at(k), net.at(l))
        except (NotComplementary, NotPairwiseComplementary) as exc:
            raise NotPairwiseComplementary(f"quad at {i}: {exc}") from exc
        worst = max(worst, abs(float(cr) - quad_target(net, quad)))
    return worst


def net_from_boundary(model: Model, axis_a, axis_b, m_h, m_v) -> Net:
    """Fill the rectangle from f(a, 0) = axis_a[a] and f(0, b) = axis_b[b]."""
    _require_self_dual(model)
    w, h = len(axis_a), len(axis_b)
    if w == 0 or h == 0:
        raise ValueError("empty boundary")
    if axis_a[0].distance(axis_b[0]) > 1e-9:
        raise ValueError("the two axes must share the base vertex")
    m_h = np.asarray(m_h, dtype=float)
    m_v = np.asarray(m_v, dtype=float)
    grid = [[None] * h for _ in range(w)]
    for a in range(w):
        grid[a][0] = axis_a[a]
    for b in range(h):
        grid[0][b] = axis_b[b]
    for a in range(w - 1):
        _check_adjacent(grid[a][0], grid[a + 1][0], (a, 0))
    for b in range(h - 1):
        _check_adjacent(grid[0][b], grid[0][b + 1], (0, b))
    for b in range(h - 1):
        for a in range(w - 1):
            lam = m_v[b] / m_h[a]
            if lam == 0 or lam == 1 or not np.isfinite(lam):
                raise DegenerateQuad(f"quad at {(a, b)} has cross-ratio target {lam}")
            fi, fj, fl = grid[a][b], grid[a + 1][b], grid[a][b + 1]
            try:
                # the Gamma action amplifies drift off the model by ~1/spacing,
                # so every new vertex is projected back before it is reused
                grid[a + 1][b + 1] = snap_parabolic(fourth_point(fi, fj, fl, lam), model)
            except NotPairwiseComplementary as exc:
                raise NotPairwiseComplementary(f"quad at {(a, b)}: {exc}") from exc
    return make_net(model, grid, m_h, m_v, validate=True)


def lattice_boundary(model: Model, m_h, m_v, bend: float = 0.05, scale: float = 1.0):
    """Axis points for a net close to a rectangular lattice with the given m.

    A rectangle with sides dx, dy in a spacelike plane has cross-ratio
    -dx^2/dy^2, and +dx^2/dy^2 when the second side is timelike, so the
    spacings are scale/sqrt|m|, the scaling m ~ 1/h^2 of a smooth limit.  The axes are bent by a small
    quadratic offset in a further direction, making the filled net non-planar.
    On the projective line the additive lattice u_a + v_b has cross-ratio
    du^2/dv^2; negative targets just fill from the same axes.
    """
    from .models import conformal_point, rp1_point
    m_h = np.asarray(m_h, dtype=float)
    m_v = np.asarray(m_v, dtype=float)
    ratios = np.outer(1.0 / m_h, m_v).ravel() if m_h.size and m_v.size else np.array([-1.0])
    if np.any(np.sign(ratios) != np.sign(ratios[0])):
        raise ValueError("lattice boundary needs m_v/m_h of one sign")
    positive = ratios[0] > 0
    dx, dy = 1.0 / np.sqrt(np.abs(m_h)), 1.0 / np.sqrt(np.abs(m_v))
    xs = np.concatenate([[0.0], np.cumsum(scale * dx)])
    ys = np.concatenate([[0.0], np.cumsum(scale * dy)])
    if model.kind == "grassmannian" and model.params == (1, 2):
        return ([point_to_parabolic(rp1_point(x)) for x in xs],
                [point_to_parabolic(rp1_point(-y if positive else y)) for y in ys])
    if model.kind != "conformal":
        raise ValueError("lattice boundaries exist for conformal models and the projective line")
    p, q = model.params
    eye = np.eye(p + q)
    if positive:
        if q == 0:
            raise ValueError("positive cross-ratios need a timelike direction")
        iy = p
    else:
        if p < 2:
            raise ValueError("negative cross-ratios need a spacelike plane")
        iy = 1
    spare = [i for i in range(p + q) if i not in (0, iy)]
    ez = eye[spare[0]] if spare else np.zeros(p + q)
    axis_a = [point_to_parabolic(conformal_point(model, x * eye[0] + bend * x * x * ez)) for x in xs]
    axis_b = [point_to_parabolic(conformal_point(model, y * eye[iy] - bend * y * y * ez)) for y in ys]
    return axis_a, axis_b


def lattice_net(model: Model, m_h, m_v, bend: float = 0.05, scale: float = 1.0) -> Net:
    axis_a, axis_b = lattice_boundary(model, m_h, m_v, bend, scale)
    return net_from_boundary(model, axis_a, axis_b, m_h, m_v)


def _check_adjacent(p, q, where):
    try:
        make_pair(p, q)
    except NotComplementary as exc:
        raise NotPairwiseComplementary(f"adjacent boundary points at {where} are not complementary") from exc


def net_edge_factor(net: Net, j, i, t: float) -> Automorphism:
    """Gamma^t(j, i) = Gamma_{f(i)}^{f(j)}(1 - t/m(i, j))."""
    m = net.edge_m(i, j)
    if t == m:
        raise PoleParameter(f"t = {t} is a pole on edge {i}-{j}")
    if t == 0:
        return net.model.algebra.identity()  # exact, not Gamma(1) up to roundoff
    return Automorphism(net.model.algebra, net.pair(i, j).gamma_matrix(1.0 - t / m))


def net_flatness_residual(net: Net, t: float) -> float:
    """Max over quads of |G(k,j)G(j,i) - G(k,l)G(l,i)|, relative to the size of the products."""
    worst = 0.0
    for i, j, k, l in net.quads():
        lhs = net_edge_factor(net, k, j, t).matrix @ net_edge_factor(net, j, i, t).matrix
        rhs = net_edge_factor(net, k, l, t).matrix @ net_edge_factor(net, l, i, t).matrix
        size = max(1.0, float(np.abs(lhs).max()), float(np.abs(rhs).max()))
        worst = max(worst, float(np.abs(lhs - rhs).max()) / size)
    return worst


def spanning_tree(shape, order: str = "column"):
    """Directed edges (parent, child) covering the rectangle from (0, 0).

    ``column``: up column 0, then along each row.  ``row``: along row 0, then
    up each column.
    """
    w, h = shape
    edges = []
    if order == "column":
        edges += [((0, b), (0, b + 1)) for b in range(h - 1)]
        for b in range(h):
            edges += [((a, b), (a + 1, b)) for a in range(w - 1)]
    elif order == "row":
        edges += [((a, 0), (a + 1, 0)) for a in range(w - 1)]
        for a in range(w):
            edges += [((a, b), (a, b + 1)) for b in range(h - 1)]
    else:
        raise ValueError(order)
    return edges


def _check_pole(net: Net, t: float):
    if np.any(net.m_h == t) or np.any(net.m_v == t):
        raise PoleParameter(f"t = {t} coincides with a value of the factorising function")


def net_darboux(net: Net, m_hat: float, seed: Parabolic, order: str = "column") -> Net:
    _check_pole(net, m_hat)
    w, h = net.shape
    g = net.model.algebra
    out = [[None] * h for _ in range(w)]
    out[0][0] = seed
    for parent, child in spanning_tree(net.shape, order):
        gam = net_edge_factor(net, child, parent, m_hat)
        out[child[0]][child[1]] = snap_parabolic(
            act_on_parabolic(gam, out[parent[0]][parent[1]], validate=False), net.model)
    for a, b in net.vertices():
        try:
            make_pair(net.f[a][b], out[a][b])
        except NotComplementary as exc:
            raise ComplementarityLost(f"Darboux transform meets f at vertex {(a, b)}",
                                      location=(a, b)) from exc
    return make_net(net.model, out, net.m_h, net.m_v, validate=False)


def darboux_edge_residual(net: Net, dual: Net, m_hat: float) -> float:
    """max |cross(f(i), f(j), fhat(j), fhat(i)) - m_hat/m(i,j)| over all edges."""
    worst = 0.0
    w, h = net.shape
    for a, b in net.vertices():
        for i, j in (((a, b), (a + 1, b)), ((a, b), (a, b + 1))):
            if j[0] >= w or j[1] >= h:
                continue
            cr = cross_ratio(net.at(i), net.at(j), dual.at(j), dual.at(i))
            worst = max(worst, abs(float(cr) - m_hat / net.edge_m(i, j)))
    return worst


def tetrahedron_residual(net: Net, dual: Net, m_hat: float) -> float:
    """fhat(k) against Gamma_{f(l)}^{f(j)}((1 - mhat/m(i,j)) / (1 - mhat/m(i,l))) fhat(i)."""
    worst = 0.0
    for i, j, k, l in net.quads():
        lam = (1 - m_hat / net.edge_m(i, j)) / (1 - m_hat / net.edge_m(i, l))
        pair = net.pair(l, j)
        pred = act_on_parabolic(Automorphism(net.model.algebra, pair.gamma_matrix(lam)),
                                dual.at(i), validate=False)
        worst = max(worst, pred.distance(dual.at(k)))
    return worst


def net_distance(n1: Net, n2: Net) -> float:
    return max(n1.at(v).distance(n2.at(v)) for v in n1.vertices())


@dataclass(frozen=True, eq=False)
class TTransformResult:
    net: Net
    gauge: dict  # vertex -> Automorphism


def net_t_transform(net: Net, s: float, order: str = "column") -> TTransformResult:
    _check_pole(net, s)
    g = net.model.algebra
    phi = {(0, 0): np.eye(g.dim)}
    for parent, child in spanning_tree(net.shape, order):
        # Gamma^s(child, parent) = Phi(child)^-1 Phi(parent)
        phi[child] = phi[parent] @ net_edge_factor(net, parent, child, s).matrix
    w, h = net.shape
    out = [[None] * h for _ in range(w)]
    for a, b in net.vertices():
        out[a][b] = snap_parabolic(
            act_on_parabolic(Automorphism(g, phi[(a, b)]), net.f[a][b], validate=False), net.model)
    new = make_net(net.model, out, net.m_h - s, net.m_v - s, validate=False)
    return TTransformResult(new, {v: Automorphism(g, m) for v, m in phi.items()})


def t_transform_gauge_residual(net: Net, result: TTransformResult, s: float, t: float) -> float:
    """Compare Phi(j) Gamma^{t+s}(j,i) Phi(i)^-1 with the new net's Gamma^t(j,i) on every edge."""
    new = result.net
    worst = 0.0
    w, h = net.shape
    for a, b in net.vertices():
        for i, j in (((a, b), (a + 1, b)), ((a, b), (a, b + 1))):
            if j[0] >= w or j[1] >= h:
                continue
            gauged = (result.gauge[j].matrix @ net_edge_factor(net, j, i, t + s).matrix
                      @ np.linalg.inv(result.gauge[i].matrix))
            direct = net_edge_factor(new, j, i, t).matrix
            worst = max(worst, float(np.abs(gauged - direct).max()))
    return worst


def net_3d_consistency(net: Net, m1: float, m2: float, seed1: Parabolic, seed2: Parabolic) -> dict:
    if m1 == m2:
        raise ValueError("the two Darboux parameters must differ")
    g = net.model.algebra
    f1 = net_darboux(net, m1, seed1)
    f2 = net_darboux(net, m2, seed2)
    base = (0, 0)
    pair = make_pair(f2.at(base), f1.at(base))
    seed12 = snap_parabolic(act_on_parabolic(Automorphism(g, pair.gamma_matrix(m2 / m1)),
                                             net.at(base), validate=False), net.model)
    via1 = net_darboux(f1, m2, seed12)
    via2 = net_darboux(f2, m1, seed12)
    worst_formula = 0.0
    for v in net.vertices():
        pv = make_pair(f2.at(v), f1.at(v))
        pred = act_on_parabolic(Automorphism(g, pv.gamma_matrix(m2 / m1)), net.at(v),
                                validate=False)
        worst_formula = max(worst_formula, pred.distance(via1.at(v)))
    return {
        "two_way": net_distance(via1, via2),
        "pointwise_formula": worst_formula,
        "f1": f1, "f2": f2, "f12": via1,
    }


# serialisation

def canonical_representative(pt: ModelPoint) -> np.ndarray:
    r = np.asarray(pt.representative, dtype=float).reshape(pt.model.rep_dim, -1)
    if r.shape[1] == 1:
        v = r[:, 0] / np.linalg.norm(r[:, 0])
        pivot = np.argmax(np.abs(v) > 1e-12 * np.abs(v).max())
        return v * np.sign(v[pivot])
    # reduced row echelon form of the k x n matrix r^T
    m = r.T.copy()
    k, n = m.shape
    row = 0
    for col in range(n):
        if row == k:
            break
        piv = row + int(np.argmax(np.abs(m[row:, col])))
        if abs(m[piv, col]) < 1e-12:
            continue
        m[[row, piv]] = m[[piv, row]]
        m[row] /= m[row, col]
        for other in range(k):
            if other != row:
                m[other] -= m[other, col] * m[row]
        row += 1
    return m.T


def net_to_json(net: Net, metadata: dict | None = None) -> str:
    w, h = net.shape
    verts = []
    for a, b in net.vertices():
        rep = canonical_representative(parabolic_to_point(net.at((a, b)), net.model))
        verts.append(np.round(rep, 15).tolist())
    doc = {
        "model": net.model.tag,
        "domain": [w, h],
        "base": [0, 0],
        "m_horizontal": [float(x) for x in net.m_h],
        "m_vertical": [float(x) for x in net.m_v],
        "vertices": verts,
    }
    if metadata is not None:
        doc["metadata"] = metadata
    return json.dumps(doc, indent=1)


def net_from_json(text: str) -> Net:
    from .models import model_from_tag
    doc = json.loads(text)
    model = model_from_tag(doc["model"])
    w, h = doc["domain"]
    grid = [[None] * h for _ in range(w)]
    for idx, rep in enumerate(doc["vertices"]):
        a, b = idx % w, idx // w
        grid[a][b] = point_to_parabolic(ModelPoint(model, np.array(rep)))
    return make_net(model, grid, doc["m_horizontal"], doc["m_vertical"])


def net_to_obj(net: Net) -> str:
    """Stereoprojected vertex positions (first three affine coordinates) with quad faces."""
    if net.model.kind != "conformal":
        raise ValueError("OBJ export needs a conformal model")
    w, h = net.shape
    lines = [f"# {net.model.tag} net {w}x{h}"]
    index = {}
    for n_, (a, b) in enumerate(net.vertices(), start=1):
        x = conformal_coords(parabolic_to_point(net.at((a, b)), net.model))
        xyz = np.zeros(3)
        xyz[:min(3, x.size)] = x[:3]
        lines.append("v " + " ".join(repr(float(c) + 0.0) for c in xyz))  # + 0.0 drops -0.0
        index[(a, b)] = n_
    for i, j, k, l in net.quads():
        lines.append(f"f {index[i]} {index[j]} {index[k]} {index[l]}")
    return "\n".join(lines) + "\n"
