"""Density-matrix evolution, moments, trace dynamics and Ehrenfest trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _arb
from .errors import IntegrationError, TraceVanishedError
from .evolution import Propagator, build_hamiltonian, disentangle, disentangled_matrix
from .linalg import matrix_exponential
from .spin_algebra import make_spin_system

TRACE_FLOOR = 1e-300


@dataclass(frozen=True)
class DensityState:
    """Unnormalized density matrix; tr(rho) carries the state's intensity.

    ``factor`` optionally holds columns W with W W^dagger = matrix.  States
    built from a vector keep it, so evolution starts from the exact input
    rather than from a re-factorization that is only ulp-accurate.
    """

    spin: float
    matrix: np.ndarray
    factor: np.ndarray | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_pure(cls, spin, psi):
        psi = np.asarray(psi, dtype=complex)
        return cls(spin, np.outer(psi, psi.conj()), psi[:, None])

    @classmethod
    def maximally_mixed(cls, spin):
        d = make_spin_system(spin).dim
        return cls(spin, np.eye(d, dtype=complex) / d)

    @property
    def system(self):
        return make_spin_system(self.spin)

    @property
    def trace(self):
        return float(np.trace(self.matrix).real)

    def normalized(self):
        tr = self.trace
        W = None if self.factor is None else self.factor / math.sqrt(tr)
        return DensityState(self.spin, self.matrix / tr, W)

    def check(self, herm_tol=1e-10, psd_tol=1e-9):
        """Raise AssertionError unless rho is Hermitian, PSD, with positive trace."""
        rho = self.matrix
        scale = max(1.0, abs(self.trace))
        assert np.max(np.abs(rho - rho.conj().T)) <= herm_tol * scale, "rho not Hermitian"
        assert self.trace > 0, "trace not positive"
        herm = (rho + rho.conj().T) / 2
        assert np.linalg.eigvalsh(herm).min() >= -psd_tol * scale, "rho not positive semidefinite"


@dataclass(frozen=True)
class BlochPoint:
    sx: float
    sy: float
    sz: float

    @property
    def vector(self):
        return np.array([self.sx, self.sy, self.sz])

    def normalized(self, spin):
        """(x, y, z) = (sx, sy, sz) / S."""
        return self.vector / spin


@dataclass
class Trajectory:
    """Time series of Bloch vectors s(t) (unnormalized, units of hbar)."""

    times: np.ndarray
    points: np.ndarray
    speed: np.ndarray


@dataclass(frozen=True)
class CircleSolution:
    """Closed-form Ehrenfest orbit on the unit sphere for a coherent start.

    The orbit is r(a) = (xc, yc, 0) + (dx, dy, 0) cos a + (0, 0, rho) sin a
    with rho = sqrt(dx^2 + dy^2).  ``c1 = inf`` marks the vertical-plane
    limit x0 = 0; ``gamma = 0`` gives the plane x = x0.
    """

    c1: float
    p: float
    q: float
    xc: float
    yc: float
    dx: float
    dy: float
    degenerate: bool

    @property
    def radius(self):
        return math.hypot(self.dx, self.dy)

    def points(self, alpha):
        alpha = np.asarray(alpha, dtype=float)[..., None]
        return (np.array([self.xc, self.yc, 0.0])
                + np.array([self.dx, self.dy, 0.0]) * np.cos(alpha)
                + np.array([0.0, 0.0, self.radius]) * np.sin(alpha))

    def distance(self, pts):
        """Euclidean distance of points (..., 3) from the circle."""
        pts = np.asarray(pts, dtype=float)
        rel = pts - np.array([self.xc, self.yc, 0.0])
        rad = self.radius
        if rad == 0.0:
            return np.linalg.norm(rel, axis=-1)
        u = np.array([self.dx, self.dy, 0.0]) / rad
        n = np.array([u[1], -u[0], 0.0])
        a = rel @ u
        b = rel[..., 2]
        return np.hypot(rel @ n, np.hypot(a, b) - rad)

    def hausdorff(self, pts):
        """Hausdorff distance between a sampled orbit and this circle.

        The curve-to-circle part is the largest sample distance.  For the
        circle-to-curve part the samples are treated as a continuous curve:
        where their projections sweep the full circle it is bounded by the
        former; any uncovered arc is measured against the nearest sample.
        """
        pts = np.asarray(pts, dtype=float)
        to_circle = float(np.max(self.distance(pts)))
        rad = self.radius
        if rad == 0.0:
            return to_circle
        u = np.array([self.dx, self.dy, 0.0]) / rad
        rel = pts - np.array([self.xc, self.yc, 0.0])
        ang = np.unwrap(np.arctan2(rel[:, 2], rel @ u))
        if np.ptp(ang) >= 2 * np.pi:
            return to_circle
        probe = self.points(np.linspace(0, 2 * np.pi, 4096, endpoint=False))
        gaps = np.min(np.linalg.norm(probe[:, None, :] - pts[None, ::max(1, len(pts) // 2048), :], axis=-1), axis=1)
        return max(to_circle, float(gaps.max()))


def _as_matrix(U):
    return U.matrix if isinstance(U, Propagator) else np.asarray(U)


def evolve_density(rho0, U):
    """rho(t) = U rho0 U^dagger; the trace is not conserved."""
    Um = _as_matrix(U)
    if Um.shape != rho0.matrix.shape:
        raise ValueError(f"propagator shape {Um.shape} does not match state {rho0.matrix.shape}")
    out = Um @ rho0.matrix @ Um.conj().T
    out = (out + out.conj().T) / 2
    rho = DensityState(rho0.spin, out)
    if not rho.trace > TRACE_FLOOR:
        raise TraceVanishedError(f"tr(rho) = {rho.trace:.3e} fell below {TRACE_FLOOR:g}")
    return rho


def _factor(rho0):
    """Columns W with W W^dagger = rho0, dropping the null space."""
    lam, vec = np.linalg.eigh((rho0 + rho0.conj().T) / 2)
    keep = lam > 1e-14 * max(lam.max(), 0.0)
    if not keep.any():
        raise TraceVanishedError("initial state has no positive weight")
    return vec[:, keep] * np.sqrt(lam[keep])


def evolve_series(rho0, p, times, route="extended", factors=None):
    """rho(t) for each requested time.

    Parameters
    ----------
    rho0 : DensityState
    p : ModelParams
    times : array_like
        Non-negative, ascending.
    route : {'extended', 'disentangled'}
        'extended' writes rho0 = W W^dagger and steps W between output
        times with exactly exponentiated step propagators, carrying the
        columns in extended precision; this is accurate up to the EP.
        'disentangled' applies the assembled exp(-f Sz) exp(-g Sy)
        exp(-ih Sx) at each time in double precision; its factor norms
        reach exp(|f| S) and cancellation costs digits once gamma/v
        exceeds about one half.
    factors : DisentanglingFactors, optional
        Reused by the 'disentangled' route when they cover the range.

    Returns
    -------
    numpy.ndarray
        Shape (len(times), dim, dim), Hermitian, trace not normalized.
    """
    times = np.asarray(times, dtype=float)
    sys = p.system
    if rho0.matrix.shape != (sys.dim, sys.dim):
        raise ValueError("state and parameters disagree on the spin")
    if route == "extended":
        W0 = rho0.factor if rho0.factor is not None else _factor(rho0.matrix)
        W = _arb.evolve_columns(p, W0, times)
        out = W @ W.conj().transpose(0, 2, 1)
    elif route == "disentangled":
        if factors is None or factors.t_max < times.max():
            horizon = max(times.max(), 1e-12)
            factors = disentangle(p, horizon, horizon / 1000)
        fgh = factors.at(times)
        out = np.empty((len(times), sys.dim, sys.dim), dtype=complex)
        for k in range(len(times)):
            out[k] = evolve_density(rho0, disentangled_matrix(sys, *fgh[:, k])).matrix
    else:
        raise ValueError(f"unknown route {route!r}")
    tr = np.einsum("kii->k", out).real
    if np.any(~(tr > TRACE_FLOOR)):
        k = int(np.argmin(tr))
        raise TraceVanishedError(f"tr(rho) fell below {TRACE_FLOOR:g} at t={times[k]}")
    return out


def moments_series(series, spin):
    """Normalized first moments and variances along a series of density matrices.

    Returns
    -------
    trace : (n,) array
    s : (n, 3) array of <S_j>
    var : (n, 3) array of Var S_j
    """
    sys = make_spin_system(spin)
    series = np.asarray(series)
    tr = np.einsum("kii->k", series).real
    ops = (sys.sx, sys.sy, sys.sz)
    first = np.stack([np.einsum("kij,ji->k", series, A).real for A in ops], axis=1) / tr[:, None]
    second = np.stack([np.einsum("kij,ji->k", series, A @ A).real for A in ops], axis=1) / tr[:, None]
    return tr, first, second - first**2


def raw_expectation(rho, A):
    """tr(rho A) without normalization."""
    return float(np.trace(rho.matrix @ A).real)


def expectation(rho, A):
    """tr(rho A) / tr(rho)."""
    tr = rho.trace
    if not abs(tr) > TRACE_FLOOR:
        raise TraceVanishedError("expectation value undefined for vanishing trace")
    return raw_expectation(rho, A) / tr


def bloch_point(rho):
    sys = rho.system
    return BlochPoint(expectation(rho, sys.sx), expectation(rho, sys.sy), expectation(rho, sys.sz))


def variances(rho):
    """(Var Sx, Var Sy, Var Sz) from normalized moments."""
    sys = rho.system
    out = []
    for A in (sys.sx, sys.sy, sys.sz):
        out.append(expectation(rho, A @ A) - expectation(rho, A) ** 2)
    return tuple(out)


def coherence_functional(rho):
    """<Sx>^2 + <Sy>^2 + <Sz>^2; equals S^2 exactly for coherent states."""
    return float(np.sum(bloch_point(rho).vector ** 2))


def trace_rate_residual(rho, p, step=1e-5):
    """Mismatch between d tr(rho)/dt and 2 tr(Gamma rho), Gamma = -2 gamma Sz.

    The derivative is a central difference from propagating rho by +-step.
    Returned relative to max(1, |tr rho|).
    """
    H = build_hamiltonian(p)
    fwd = evolve_density(rho, matrix_exponential(-1j * step * H)).trace
    bwd = evolve_density(rho, matrix_exponential(1j * step * H)).trace
    numeric = (fwd - bwd) / (2 * step)
    predicted = 2 * raw_expectation(rho, -2 * p.gamma * rho.system.sz)
    return abs(numeric - predicted) / max(1.0, abs(rho.trace))


def ehrenfest_general_rhs(rho, p):
    """d<S_j>/dt from exact second moments of `rho` (no closure).

    This is the open hierarchy: it needs <{Sz, S_j}>, so it is only usable
    as an instantaneous check against the actual evolution.
    """
    sys = rho.system
    g, v = p.gamma, p.v
    sx, sy, sz = (expectation(rho, A) for A in (sys.sx, sys.sy, sys.sz))
    anti = lambda A: expectation(rho, sys.sz @ A + A @ sys.sz)  # noqa: E731
    return np.array([
        -2 * g * anti(sys.sx) + 4 * g * sx * sz,
        -2 * v * sz - 2 * g * anti(sys.sy) + 4 * g * sy * sz,
        2 * v * sy - 4 * g * expectation(rho, sys.sz @ sys.sz) + 4 * g * sz**2,
    ])


def ehrenfest_rhs(s, p):
    """Closed Ehrenfest equations valid for coherent states.

        sx' = 2g sx sz / S
        sy' = -2v sz + 2g sy sz / S
        sz' = 2v sy + 2g sz^2 / S - 2g S
    """
    if isinstance(s, BlochPoint):
        s = s.vector
    sx, sy, sz = np.asarray(s, dtype=float)
    S, v, g = p.spin, p.v, p.gamma
    return np.array([
        2 * g * sx * sz / S,
        -2 * v * sz + 2 * g * sy * sz / S,
        2 * v * sy + 2 * g * sz * sz / S - 2 * g * S,
    ])


def integrate_ehrenfest(s0, p, t_max, dt_out, rtol=1e-12, atol=1e-13):
    """Integrate the closed Ehrenfest system from a point on the sphere |s| = S."""
    if isinstance(s0, BlochPoint):
        s0 = s0.vector
    s0 = np.asarray(s0, dtype=float)
    if abs(np.linalg.norm(s0) - p.spin) > 1e-8 * p.spin:
        raise ValueError("the coherent closure needs |s0| = S")
    n = int(round(t_max / dt_out))
    times = dt_out * np.arange(n + 1)
    sol = solve_ivp(lambda t, y: ehrenfest_rhs(y, p), (0.0, times[-1]), s0, method="RK45",
                    t_eval=times, rtol=rtol, atol=atol * p.spin)
    if sol.status != 0:
        raise IntegrationError(sol.message, float(sol.t[-1]))
    pts = sol.y.T
    speed = np.array([np.linalg.norm(ehrenfest_rhs(x, p)) for x in pts])
    return Trajectory(times, pts, speed)


def analytic_circle(theta0, phi0, p, tol=1e-10):
    """Closed-form orbit of the coherent-state Ehrenfest flow through (theta0, phi0).

    Trajectories lie in the vertical plane y = c1 x + v/gamma through the
    starting point, so on the unit sphere they are circles centred in the
    xy-plane.
    """
    x0 = math.sin(theta0) * math.cos(phi0)
    y0 = math.sin(theta0) * math.sin(phi0)
    v, g = p.v, p.gamma
    if g == 0.0:
        half = math.sqrt(max(1.0 - x0 * x0, 0.0))
        return CircleSolution(0.0, math.nan, math.nan, x0, 0.0, 0.0, half, half < tol)
    if abs(x0) < 1e-15:
        # plane x = 0: the great circle through the poles
        return CircleSolution(math.inf, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, False)
    c1 = -(v / g - y0) / x0
    pp = (v / g) * c1 / (1 + c1 * c1)
    qq = (v * v / (g * g) - 1) / (1 + c1 * c1)
    disc = pp * pp - qq
    degenerate = abs(disc) < tol
    dx = math.sqrt(max(disc, 0.0))
    xc = -pp
    yc = c1 * xc + v / g
    return CircleSolution(c1, pp, qq, xc, yc, dx, c1 * dx, degenerate)


def trace_extrema(times, trace):
    """Indices of interior local minima and maxima of a sampled trace."""
    d = np.diff(trace)
    mins = np.where((d[:-1] < 0) & (d[1:] >= 0))[0] + 1
    maxs = np.where((d[:-1] > 0) & (d[1:] <= 0))[0] + 1
    return mins, maxs
