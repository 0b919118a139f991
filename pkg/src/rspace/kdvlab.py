"""Isothermic curves in RP^1: projective curvature, KdV/mKdV flows, Miura and Backlund maps.

Fields live on a periodic grid x_j = -L/2 + j h, h = L/n.  Lifts psi are not
periodic in general (they carry monodromy), so derivatives of lifts use
one-sided stencils near the ends while periodic fields use wrapped stencils.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import BlowUp, Instability, VanishingLift

GAUSS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
SCHEMES = ("fd4", "fd2", "spectral")


@dataclass(frozen=True)
class PeriodicGrid:
    length: float
    n: int

    def __post_init__(self):
        if self.n < 8 or not self.length > 0:
            raise ValueError("periodic grid needs n >= 8 and length > 0")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return -self.length / 2 + self.h * np.arange(self.n)

    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)


@dataclass(frozen=True)
class CurveField:
    grid: PeriodicGrid
    psi: np.ndarray
    p: np.ndarray
    a: np.ndarray | None = None
    m_hat: float | None = None

    def __post_init__(self):
        n = self.grid.n
        if self.psi.shape != (n, 2) or self.p.shape != (n,):
            raise ValueError("psi must be (n, 2) and p must be (n,)")
        if self.a is not None and self.a.shape != (n,):
            raise ValueError("a must be (n,)")


@dataclass(frozen=True)
class FlowConfig:
    dt: float
    steps: int
    scheme: str = "fd4"
    save_every: int = 1

    def __post_init__(self):
        if not self.dt > 0 or self.steps < 0 or self.save_every < 1:
            raise ValueError("need dt > 0, steps >= 0, save_every >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @staticmethod
    def stability_bound(grid: PeriodicGrid, scheme: str = "fd4") -> float:
        # RK4 reaches 2.8 on the imaginary axis; the spectral third derivative has the
        # largest symbol (pi/h)^3, so it needs roughly half the finite-difference step
        return (0.1 if scheme == "spectral" else 0.2) * grid.h ** 3

    def is_stable(self, grid: PeriodicGrid) -> bool:
        return self.dt <= self.stability_bound(grid, self.scheme)

    @classmethod
    def for_time(cls, grid: PeriodicGrid, t_end: float, scheme: str = "fd4", save_every: int = 1):
        """Largest stable step that lands exactly on t_end."""
        steps = max(1, math.ceil(t_end / cls.stability_bound(grid, scheme)))
        return cls(dt=t_end / steps, steps=steps, scheme=scheme, save_every=save_every)


# stencils

def fd_weights(offsets, k: int) -> np.ndarray:
    """Weights w with sum w_i f(x + o_i h) = h^k f^(k)(x) + O(h^len(offsets))."""
    o = np.asarray(offsets, dtype=float)
    vander = np.vander(o, increasing=True).T
    rhs = np.zeros(len(o))
    rhs[k] = math.factorial(k)
    return np.linalg.solve(vander, rhs)


def periodic_derivative(f: np.ndarray, h: float, k: int, scheme: str = "fd4") -> np.ndarray:
    """k-th derivative of a periodic field along its last axis."""
    if scheme == "spectral":
        n = f.shape[-1]
        kk = 2 * np.pi * np.fft.fftfreq(n, d=h)
        mult = (1j * kk) ** k
        if k % 2 == 1 and n % 2 == 0:
            mult[n // 2] = 0.0
        return np.real(np.fft.ifft(np.fft.fft(f, axis=-1) * mult, axis=-1))
    half, weights = _central_stencil(k, {"fd4": 4, "fd2": 2}[scheme])
    n = f.shape[-1]
    padded = np.concatenate([f[..., n - half:], f, f[..., :half]], axis=-1)
    out = np.zeros(f.shape)
    for i, w in enumerate(weights):
        if w != 0.0:
            out += w * padded[..., i:i + n]
    return out / h ** k


@lru_cache(maxsize=None)
def _central_stencil(k: int, order: int):
    half = (k + order - 1) // 2
    return half, tuple(fd_weights(range(-half, half + 1), k))


def line_derivative(f: np.ndarray, h: float, k: int, order: int = 4) -> np.ndarray:
    """k-th derivative along axis 0 of a non-periodic sample, one-sided near the ends."""
    n = f.shape[0]
    width = k + order
    half = (k + order - 1) // 2
    central = list(range(-half, half + 1))
    if n < width:
        raise ValueError("too few points for the stencil")
    out = np.zeros_like(f, dtype=float)
    wc = fd_weights(central, k)
    inner = slice(half, n - half)
    for o, w in zip(central, wc):
        out[inner] += w * f[half + o:n - half + o]
    for i in list(range(half)) + list(range(n - half, n)):
        start = min(max(i - width // 2, 0), n - width)
        offs = list(range(start - i, start - i + width))
        out[i] = np.tensordot(fd_weights(offs, k), f[start:start + width], axes=1)
    return out / h ** k


def shifted(f: np.ndarray, grid: PeriodicGrid, theta: float) -> np.ndarray:
    """Trigonometric interpolation of a periodic field at x_j + theta h."""
    phase = np.exp(1j * grid.wavenumbers() * theta * grid.h)
    if grid.n % 2 == 0:
        phase[grid.n // 2] = np.cos(np.pi * theta)
    return np.real(np.fft.ifft(np.fft.fft(f, axis=-1) * phase, axis=-1))


# lifts and projective curvature

def wedge(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def curvature_from_lift(psi: np.ndarray, h: float) -> np.ndarray:
    """p with psi_xx = p psi, by least squares at each point."""
    norm2 = np.einsum("ij,ij->i", psi, psi)
    if np.min(norm2) <= 1e-24 * max(1.0, float(np.max(norm2))):
        raise VanishingLift(f"lift vanishes at index {int(np.argmin(norm2))}")
    psi_xx = line_derivative(psi, h, 2)
    return np.einsum("ij,ij->i", psi, psi_xx) / norm2


def _exp_traceless(om: np.ndarray) -> np.ndarray:
    """exp of a batch of traceless 2x2 matrices; the determinant is exactly one analytically."""
    delta = om[..., 0, 0] ** 2 + om[..., 0, 1] * om[..., 1, 0]
    s = np.sqrt(np.abs(delta))
    c = np.where(delta >= 0, np.cosh(s), np.cos(s))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(delta >= 0, np.sinh(s), np.sin(s)) / s
    ratio = np.where(s < 1e-8, 1.0 + delta / 6, ratio)
    return c[..., None, None] * np.eye(2) + ratio[..., None, None] * om


def _lift_steps(p: np.ndarray, grid: PeriodicGrid, shift: float = 0.0) -> np.ndarray:
    """Fourth-order Magnus steps for (psi, psi_x)' = [[0, 1], [p, 0]] (psi, psi_x), cell j -> j+1."""
    h = grid.h
    p1 = shifted(p, grid, GAUSS[0])
    p2 = shifted(p, grid, GAUSS[1])
    om = np.zeros(p.shape + (2, 2))
    c = math.sqrt(3) / 12 * h * h * (p1 - p2)
    om[..., 0, 0] = c
    om[..., 1, 1] = -c
    om[..., 0, 1] = h
    om[..., 1, 0] = h * (p1 + p2) / 2 + shift * h
    return _exp_traceless(om)


def _sweep(steps: np.ndarray, state0: np.ndarray, base: int) -> np.ndarray:
    """Propagate a (..., 2, k) state from index base across the grid with per-cell steps."""
    n = steps.shape[-3]
    out = np.empty(steps.shape[:-3] + (n,) + state0.shape[-2:])
    out[..., base, :, :] = state0
    for j in range(base, n - 1):
        out[..., j + 1, :, :] = steps[..., j, :, :] @ out[..., j, :, :]
    for j in range(base - 1, -1, -1):
        e = steps[..., j, :, :]
        inv = np.stack([np.stack([e[..., 1, 1], -e[..., 0, 1]], -1),
                        np.stack([-e[..., 1, 0], e[..., 0, 0]], -1)], -2)
        out[..., j, :, :] = inv @ out[..., j + 1, :, :]
    return out


@dataclass(frozen=True)
class Lift:
    psi: np.ndarray
    psi_x: np.ndarray
    monodromy: np.ndarray
    wronskian: np.ndarray

    @property
    def periodicity_defect(self) -> float:
        return float(np.max(np.abs(self.monodromy - np.eye(2))))

    @property
    def wronskian_drift(self) -> float:
        w = self.wronskian
        return float(np.max(np.abs(w - w[..., :1])) / np.max(np.abs(w[..., :1])))


def lift_from_curvature(p: np.ndarray, grid: PeriodicGrid, psi0, dpsi0, base: int = 0) -> Lift:
    """Integrate psi_xx = p psi from (psi0, dpsi0) at index base; p may carry leading batch axes."""
    psi0 = np.asarray(psi0, dtype=float)
    dpsi0 = np.asarray(dpsi0, dtype=float)
    if abs(float(np.min(np.abs(wedge(psi0, dpsi0))))) == 0.0:
        raise ValueError("initial data must satisfy psi ^ psi_x != 0")
    steps = _lift_steps(p, grid)
    state0 = np.stack([psi0, dpsi0], axis=-2)
    state0 = np.broadcast_to(state0, p.shape[:-1] + (2, 2))
    states = _sweep(steps, state0, base)
    mono = np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()
    for j in range(grid.n):
        mono = steps[..., j, :, :] @ mono
    psi, psi_x = states[..., 0, :], states[..., 1, :]
    return Lift(psi=psi, psi_x=psi_x, monodromy=mono, wronskian=wedge(psi, psi_x))


# flows

def kdv_rhs(p: np.ndarray, h: float, scheme: str = "fd4") -> np.ndarray:
    """-p_xxx / 2 + 3 p p_x."""
    return -0.5 * periodic_derivative(p, h, 3, scheme) + 3 * p * periodic_derivative(p, h, 1, scheme)


def mkdv_rhs(a: np.ndarray, m_hat: float, h: float, scheme: str = "fd4") -> np.ndarray:
    """-a_xxx / 2 + 3 (a^2 - m_hat) a_x."""
    return (-0.5 * periodic_derivative(a, h, 3, scheme)
            + 3 * (a * a - m_hat) * periodic_derivative(a, h, 1, scheme))


def coupled_a_rhs(p: np.ndarray, a: np.ndarray, m_hat: float, h: float, scheme: str = "fd4") -> np.ndarray:
    """a_t forced by keeping the complement parallel; involves only x-derivatives of p."""
    p_x = periodic_derivative(p, h, 1, scheme)
    p_xx = periodic_derivative(p, h, 2, scheme)
    return p_xx / 2 - p * p + a * p_x + a * a * p - m_hat * (2 * a * a - 2 * m_hat - p)


def miura(a: np.ndarray, m_hat: float, h: float, scheme: str = "fd4") -> np.ndarray:
    """p = a^2 - a_x - m_hat."""
    return a * a - periodic_derivative(a, h, 1, scheme) - m_hat


def miura_partner(a: np.ndarray, m_hat: float, h: float, scheme: str = "fd4") -> np.ndarray:
    """p_hat = a^2 + a_x - m_hat."""
    return a * a + periodic_derivative(a, h, 1, scheme) - m_hat


def soliton(x: np.ndarray, m_hat: float, center: float = 0.0, t: float = 0.0) -> np.ndarray:
    """-2 m_hat sech^2(sqrt(m_hat)(x - center - 2 m_hat t))."""
    r = math.sqrt(m_hat)
    return -2 * m_hat / np.cosh(r * (x - center - 2 * m_hat * t)) ** 2


@dataclass(frozen=True)
class BacklundResult:
    a: np.ndarray
    p_hat: np.ndarray
    periodicity_defect: float


def backlund(p: np.ndarray, grid: PeriodicGrid, m_hat: float, a0: float, base: int = 0,
             method: str = "linear", substeps: int = 4) -> BacklundResult:
    """Solve a_x = a^2 - m_hat - p from a(x_base) = a0; p_hat = p + 2 a_x.

    method="riccati" integrates the Riccati equation outward from base with RK4 and
    raises BlowUp once |a| leaves the range the substep resolves (see _riccati).  method="linear" integrates
    phi_xx = (p + m_hat) phi and reads a = -phi_x / phi, which passes through poles.
    """
    if m_hat == 0:
        raise ValueError("m_hat must be nonzero")
    n, h = grid.n, grid.h
    if method == "linear":
        steps = _lift_steps(p, grid, shift=m_hat)
        states = _sweep(steps, np.array([[1.0], [-a0]]), base)
        phi, phi_x = states[:, 0, 0], states[:, 1, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = -phi_x / phi
        end = steps[n - 1] @ states[n - 1]
        a_end = -end[1, 0] / end[0, 0] if end[0, 0] != 0 else math.inf
    elif method == "riccati":
        a, a_end = _riccati(p, grid, m_hat, a0, base, substeps)
    else:
        raise ValueError(f"unknown method {method!r}")
    p_hat = 2 * a * a - 2 * m_hat - p
    return BacklundResult(a=a, p_hat=p_hat, periodicity_defect=float(abs(a_end - a[0])))


def _riccati(p, grid, m_hat, a0, base, substeps):
    n, h = grid.n, grid.h
    ds = h / substeps
    # a pole looks like 1/(x0 - x); stop half a substep before RK4 loses it, but never
    # below ten times the natural size sqrt|m_hat + p| of bounded solutions
    limit = max(0.5 / ds, 10 * math.sqrt(abs(m_hat) + float(np.max(np.abs(p)))))
    # p sampled at every half substep, row j holds x_j + k ds / 2
    fine = np.stack([shifted(p, grid, k / (2 * substeps)) for k in range(2 * substeps + 1)], axis=1)

    def run(direction):
        a = np.empty(n)
        a[base] = a0
        cur = a0
        idx = range(base, n) if direction > 0 else range(base, 0, -1)
        end = a0
        for j in idx:
            cell = j if direction > 0 else j - 1
            pv = fine[cell % n] if direction > 0 else fine[cell][::-1]
            for s in range(substeps):
                k0 = 2 * s
                f = lambda av, pp: direction * (av * av - m_hat - pp)
                k1 = f(cur, pv[k0])
                k2 = f(cur + ds / 2 * k1, pv[k0 + 1])
                k3 = f(cur + ds / 2 * k2, pv[k0 + 1])
                k4 = f(cur + ds * k3, pv[k0 + 2])
                cur = cur + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                if not abs(cur) <= limit:
                    x = grid.x[cell] + direction * (s + 1) * ds if direction > 0 else grid.x[j] - (s + 1) * ds
                    raise BlowUp(f"Riccati solution escapes near x = {x:.6g}", location=x)
            nxt = j + 1 if direction > 0 else j - 1
            if nxt < n:
                a[nxt] = cur
            else:
                end = cur
        return a, end

    fwd, a_end = run(+1)
    bwd, _ = run(-1) if base > 0 else (fwd, None)
    a = np.concatenate([bwd[:base], fwd[base:]])
    return a, a_end


# time stepping

@dataclass
class Series:
    grid: PeriodicGrid
    times: np.ndarray
    p: np.ndarray
    a: np.ndarray | None
    m_hat: float | None
    scheme: str
    drift: dict = field(default_factory=dict)


def _conserved(p, h):
    return {"mass": float(np.sum(p) * h), "energy": float(np.sum(p * p) * h)}


def evolve(grid: PeriodicGrid, config: FlowConfig, which: str, p0=None, a0=None,
           m_hat: float | None = None) -> Series:
    """RK4 in time for which in {kdv, mkdv, coupled}; saves every save_every steps."""
    h, dt, scheme = grid.h, config.dt, config.scheme
    if which == "kdv":
        state = np.array([p0], dtype=float)
        rhs = lambda s: np.array([kdv_rhs(s[0], h, scheme)])
    elif which == "mkdv":
        state = np.array([a0], dtype=float)
        rhs = lambda s: np.array([mkdv_rhs(s[0], m_hat, h, scheme)])
    elif which == "coupled":
        state = np.array([p0, a0], dtype=float)
        rhs = lambda s: np.array([kdv_rhs(s[0], h, scheme), coupled_a_rhs(s[0], s[1], m_hat, h, scheme)])
    else:
        raise ValueError(f"unknown flow {which!r}")
    if which != "kdv" and m_hat is None:
        raise ValueError("m_hat is required for mkdv and coupled flows")
    scale = max(1.0, float(np.max(np.abs(state))))
    frames, times = [state.copy()], [0.0]
    for step in range(1, config.steps + 1):
        k1 = rhs(state)
        k2 = rhs(state + dt / 2 * k1)
        k3 = rhs(state + dt / 2 * k2)
        k4 = rhs(state + dt * k3)
        state = state + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        peak = float(np.max(np.abs(state)))
        if not peak <= 1e6 * scale:
            raise Instability(f"field norm grew beyond 1e6 times its start at step {step}", step=step)
        if step % config.save_every == 0 or step == config.steps:
            frames.append(state.copy())
            times.append(step * dt)
    frames = np.array(frames)
    if which == "mkdv":
        p_frames, a_frames = None, frames[:, 0]
    else:
        p_frames = frames[:, 0]
        a_frames = frames[:, 1] if which == "coupled" else None
    drift = {}
    watched = p_frames if p_frames is not None else a_frames
    start, end = _conserved(watched[0], h), _conserved(watched[-1], h)
    for key in start:
        drift[key] = abs(end[key] - start[key]) / max(abs(start[key]), 1e-300)
    return Series(grid=grid, times=np.array(times), p=p_frames, a=a_frames, m_hat=m_hat,
                  scheme=scheme, drift=drift)


def soliton_center(p: np.ndarray, grid: PeriodicGrid) -> float:
    """Centre of mass of the trough; assumes it sits away from the period boundary."""
    w = np.abs(p)
    return float(np.sum(grid.x * w) / np.sum(w))


def soliton_speed(grid: PeriodicGrid, m_hat: float, t_end: float = 1.0, center: float = -5.0,
                  scheme: str = "fd4") -> float:
    p0 = soliton(grid.x, m_hat, center)
    config = FlowConfig.for_time(grid, t_end, scheme=scheme, save_every=10 ** 9)
    series = evolve(grid, config, "kdv", p0=p0)
    return (soliton_center(series.p[-1], grid) - soliton_center(series.p[0], grid)) / t_end


def miura_intertwining(grid: PeriodicGrid, a0, m_hat: float, t_end: float, scheme: str = "fd4") -> float:
    """sup |miura(mKdV_t a0) - KdV_t(miura a0)| for a callable a0(x)."""
    a_init = a0(grid.x)
    config = FlowConfig.for_time(grid, t_end, scheme=scheme, save_every=10 ** 9)
    a_series = evolve(grid, config, "mkdv", a0=a_init, m_hat=m_hat)
    p_series = evolve(grid, config, "kdv", p0=miura(a_init, m_hat, grid.h, scheme))
    return float(np.max(np.abs(miura(a_series.a[-1], m_hat, grid.h, scheme) - p_series.p[-1])))


def miura_refinement(a0, m_hat: float, t_end: float, length: float, sizes, scheme: str = "fd2"):
    """Sup-differences on successively refined grids and their consecutive ratios."""
    errs = [miura_intertwining(PeriodicGrid(length, n), a0, m_hat, t_end, scheme) for n in sizes]
    return errs, [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]


# curved flats in the space of complementary pairs of RP^1

def partner_lift(psi, psi_x, a, p, m_hat):
    """psi_hat = a psi + psi_x and its x-derivative, using a_x = a^2 - m_hat - p."""
    a_x = a * a - m_hat - p
    psi_hat = a[..., None] * psi + psi_x
    psi_hat_x = (a_x + p)[..., None] * psi + a[..., None] * psi_x
    return psi_hat, psi_hat_x


def z_metric(u, v, x_vec, y_vec):
    """-4 du dv / (u - v)^2 in affine coordinates (u, v) of the two lines; tangent vectors (du, dv)."""
    return -2 * (x_vec[..., 0] * y_vec[..., 1] + x_vec[..., 1] * y_vec[..., 0]) / (u - v) ** 2


def _chart(w, w_x, w_xx):
    """Affine coordinate w2/w1 and its first two x-derivatives."""
    u = w[..., 1] / w[..., 0]
    u_x = wedge(w, w_x) / w[..., 0] ** 2
    u_xx = (wedge(w, w_xx) * w[..., 0] - 2 * wedge(w, w_x) * w_x[..., 0]) / w[..., 0] ** 3
    return u, u_x, u_xx


def unit_normal(u_x, v_x, m_hat):
    """Unit normal to phi_x; orientation fixed so that the f-leg of the flow is the KdV flow."""
    return np.stack([u_x, -v_x], axis=-1) / (2 * math.sqrt(abs(m_hat)))


def pair_curvature(psi, psi_x, a, p, p_x, m_hat):
    """Geodesic curvature of phi = (<psi>, <psi_hat>) in the metric of z_metric.

    Uses psi_xx = p psi and the Riccati relation, so it is chart-exact; compare with
    a / sqrt|m_hat|.  Requires both first lift components nonzero.
    """
    psi_xx = p[..., None] * psi
    a_x = a * a - m_hat - p
    a_xx = 2 * a * a_x - p_x
    psi_hat, psi_hat_x = partner_lift(psi, psi_x, a, p, m_hat)
    psi_hat_xx = (a_xx + p_x + a * p)[..., None] * psi + (2 * a_x + p)[..., None] * psi_x
    u, u_x, u_xx = _chart(psi, psi_x, psi_xx)
    v, v_x, v_xx = _chart(psi_hat, psi_hat_x, psi_hat_xx)
    accel = np.stack([u_xx - 2 * u_x ** 2 / (u - v), v_xx + 2 * v_x ** 2 / (u - v)], axis=-1)
    vel = np.stack([u_x, v_x], axis=-1)
    n = unit_normal(u_x, v_x, m_hat)
    speed2 = z_metric(u, v, vel, vel)
    return z_metric(u, v, accel, n) / np.abs(speed2) * np.sign(m_hat)


def _time_steps_at(series: Series, base: int, scheme: str):
    """Midpoint transport of (psi, psi_x) at the base point between saved frames."""
    h = series.grid.h
    p = series.p
    p_x = periodic_derivative(p, h, 1, scheme)[:, base]
    p_xx = periodic_derivative(p, h, 2, scheme)[:, base]
    pb = p[:, base]
    gen = np.zeros((len(pb), 2, 2))
    # rows act on (psi, psi_x): psi_t = -p_x/2 psi + p psi_x
    gen[:, 0, 0] = -p_x / 2
    gen[:, 0, 1] = pb
    gen[:, 1, 0] = -p_xx / 2 + pb * pb
    gen[:, 1, 1] = p_x / 2
    mids = (gen[1:] + gen[:-1]) / 2 * np.diff(series.times)[:, None, None]
    return _exp_traceless(mids)


def series_lifts(series: Series, psi0=(1.0, 0.0), dpsi0=(0.0, 1.0), base: int | None = None) -> Lift:
    """Normalised lifts for every saved frame, consistent in time through the base point."""
    grid = series.grid
    base = grid.n // 2 if base is None else base
    steps = _time_steps_at(series, base, series.scheme)
    init = [np.array([psi0, dpsi0], dtype=float)]
    for e in steps:
        init.append(e @ init[-1])
    init = np.array(init)
    return lift_from_curvature(series.p, grid, init[:, 0], init[:, 1], base=base)


def curved_flat_flow_residual(series: Series, base: int | None = None) -> float:
    """Max over saved frame pairs of the defect in phi_t = (a^2 - m) phi_x - 2 sqrt|m| a_x n.

    Velocities are measured against phi_x: a tangent vector of RP^1 at <w> is
    (w ^ w_t) / (w ^ w_x) times the unit x-velocity.  The time derivative is a
    forward difference between consecutive saved frames, hence first order.
    """
    if series.a is None or series.p is None:
        raise ValueError("a coupled series is required")
    m_hat = series.m_hat
    lift = series_lifts(series, base=base)
    a, p = series.a, series.p
    psi_hat, psi_hat_x = partner_lift(lift.psi, lift.psi_x, a, p, m_hat)
    a_x = a * a - m_hat - p
    dt = np.diff(series.times)[:, None]
    worst = 0.0
    for w, w_x, target in ((lift.psi, lift.psi_x, a * a - m_hat - a_x),
                           (psi_hat, psi_hat_x, a * a - m_hat + a_x)):
        speed = wedge(w[:-1], w[1:]) / (dt * wedge(w[:-1], w_x[:-1]))
        worst = max(worst, float(np.max(np.abs(speed - target[:-1]))))
    return worst


def series_to_csv(series: Series) -> str:
    """Columns x, t, p, a, p_hat; shortest round-trip floats; empty cells for absent fields."""
    buf = io.StringIO()
    buf.write("x,t,p,a,p_hat\n")
    h, m = series.grid.h, series.m_hat
    x = series.grid.x
    for k, t in enumerate(series.times):
        p = series.p[k] if series.p is not None else None
        a = series.a[k] if series.a is not None else None
        if a is not None and p is None:
            p = miura(a, m, h, series.scheme)
        p_hat = p + 2 * (a * a - m - p) if (a is not None and p is not None) else None
        for j in range(series.grid.n):
            cells = [repr(float(x[j])), repr(float(t)), repr(float(p[j])),
                     "" if a is None else repr(float(a[j])),
                     "" if p_hat is None else repr(float(p_hat[j]))]
            buf.write(",".join(cells) + "\n")
    return buf.getvalue()
