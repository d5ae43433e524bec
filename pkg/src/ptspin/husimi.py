"""Husimi Q-function on the sphere: evaluation, transport and PDE checks.

Q(theta, phi) = <theta,phi| rho |theta,phi> is computed two ways, as a
coherent-state quadratic form and through the tensor-operator kernel.  The
normalization convention is (2S+1)/(4 pi) * integral Q dOmega = tr(rho).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import IntegrationError, NumericalError
from .observables import DensityState, evolve_series, integrate_ehrenfest
from .spin_algebra import (clebsch_gordan, coherent_fit, coherent_state, make_spin_system, spherical_harmonic,
                           tensor_operator)

POSITIVITY_TOL = 1e-12
POLE_MARGIN = 1e-3
PDE_STEP = math.pi / 2048
PDE_THETA_MIN = 0.1


def _matrix(rho):
    return rho.matrix if isinstance(rho, DensityState) else np.asarray(rho, dtype=complex)


def _spin_of(rho, spin=None):
    if isinstance(rho, DensityState):
        return rho.spin
    if spin is None:
        return (np.shape(rho)[-1] - 1) / 2
    return spin


def _clamp(q, scale):
    if np.any(q < -POSITIVITY_TOL * scale):
        raise NumericalError(f"Husimi value {q.min():.3e} is negative; is rho positive semidefinite?")
    return np.maximum(q, 0.0)


def husimi_direct(rho, theta, phi):
    """Q = <theta,phi|rho|theta,phi>, vectorized over broadcast angles."""
    mat = _matrix(rho)
    sys = make_spin_system(_spin_of(rho))
    c = coherent_state(sys, theta, phi)
    q = np.einsum("...i,ij,...j->...", c.conj(), mat, c).real
    return _clamp(q, max(1.0, abs(np.trace(mat).real)))


@functools.lru_cache(maxsize=16)
def _kernel_terms(two_s):
    """(L, M, T_LM, C^{SS}_{SS;L0}) for all L <= 2S, built once per spin."""
    sys = make_spin_system(two_s / 2)
    S = sys.spin
    terms = []
    for L in range(two_s + 1):
        c = clebsch_gordan(S, S, L, 0, S, S)
        for M in range(-L, L + 1):
            T = tensor_operator(sys, L, M)
            T.setflags(write=False)
            terms.append((L, M, T, c))
    return tuple(terms)


def husimi_kernel(rho, theta, phi):
    """Q through the kernel operator expansion.

        Q = 2 sqrt(pi) / sqrt(2S+1) sum_{L,M} C^{SS}_{SS;L0} conj(Y_LM) tr(rho T_LM)

    Independent of :func:`husimi_direct`: shares no code with the
    coherent-state construction.
    """
    mat = _matrix(rho)
    S = _spin_of(rho)
    two_s = int(round(2 * S))
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    total = np.zeros(np.broadcast(theta, phi).shape, dtype=complex)
    for L, M, T, c in _kernel_terms(two_s):
        a = np.sum(mat * T.T)
        if a == 0:
            continue
        total += c * a * np.conj(spherical_harmonic(L, M, theta, phi))
    q = (2 * math.sqrt(math.pi) / math.sqrt(two_s + 1)) * total.real
    return _clamp(q, max(1.0, abs(np.trace(mat).real)))


def dicke_husimi_closed_form(S, m, theta, density=False):
    """Husimi function of |S, m> as a Clebsch-Gordan sum over L.

        (1 / sqrt(4 pi)) sum_L sqrt(2L+1) Y_L0(theta) C^{SS}_{SS;L0} C^{Sm}_{Sm;L0}

    This sum is the phase-space density, normalized to integrate to 1 over
    the sphere; it equals (2S+1)/(4 pi) <theta,phi|rho|theta,phi>.  The
    default returns the latter so it is comparable with :func:`husimi_direct`;
    ``density=True`` returns the sum itself.
    """
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for L in range(int(round(2 * S)) + 1):
        w = clebsch_gordan(S, S, L, 0, S, S) * clebsch_gordan(S, m, L, 0, S, m)
        out += math.sqrt(2 * L + 1) * w * spherical_harmonic(L, 0, theta, 0.0).real
    out /= math.sqrt(4 * math.pi)
    return out if density else out * 4 * math.pi / (2 * S + 1)


def fejer_weights(n):
    """Fejer first-rule weights for int_0^pi f(theta) sin(theta) d theta on midpoints.

    Exact for f a polynomial of degree < n in cos(theta); the plain
    sin(theta) * dtheta midpoint weights are only second order.
    """
    theta = (np.arange(n) + 0.5) * np.pi / n
    j = np.arange(1, n // 2 + 1)
    series = np.cos(2 * np.outer(theta, j)) / (4 * j * j - 1)
    return (2.0 / n) * (1.0 - 2.0 * series.sum(axis=1))


@dataclass(frozen=True)
class HusimiGrid:
    """Q sampled on midpoint theta nodes and uniform phi nodes in [-pi, pi).

    ``weights[i, j]`` approximates sin(theta) dtheta dphi at node (i, j).
    """

    spin: float
    theta_nodes: np.ndarray
    phi_nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    @property
    def n_theta(self):
        return len(self.theta_nodes)

    @property
    def n_phi(self):
        return len(self.phi_nodes)

    @property
    def integral(self):
        """(2S+1)/(4 pi) sum Q w, which reproduces tr(rho)."""
        return float((2 * self.spin + 1) / (4 * math.pi) * np.sum(self.values * self.weights))

    def argmax(self):
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.theta_nodes[i]), float(self.phi_nodes[j])


def grid_nodes(n_theta, n_phi):
    if n_theta < 8 or n_phi < 8:
        raise ValueError("need n_theta, n_phi >= 8")
    theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    phi = -np.pi + 2 * np.pi * np.arange(n_phi) / n_phi
    return theta, phi


def husimi_grid(rho, n_theta=128, n_phi=256):
    """Evaluate Q on the (theta, phi) lattice with Fejer-times-uniform weights."""
    theta, phi = grid_nodes(n_theta, n_phi)
    values = husimi_direct(rho, theta[:, None], phi[None, :])
    weights = np.outer(fejer_weights(n_theta), np.full(n_phi, 2 * np.pi / n_phi))
    return HusimiGrid(_spin_of(rho), theta, phi, values, weights)


@dataclass
class Characteristic:
    """A characteristic curve and the Husimi value carried along it.

    ``stop_time`` is None when the curve reached t_max, otherwise the time
    at which it came within the pole margin.
    """

    times: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    q: np.ndarray
    stop_time: float | None = None


def _sz_function(sz_series):
    if callable(sz_series):
        return sz_series
    t, values = sz_series
    return CubicSpline(np.asarray(t, dtype=float), np.asarray(values, dtype=float))


def characteristic_rhs(theta, phi, p):
    """(theta', phi') = (-2v sin(phi) + 2 gamma sin(theta), -2v cot(theta) cos(phi))."""
    v, g = p.v, p.gamma
    return (-2 * v * np.sin(phi) + 2 * g * np.sin(theta),
            -2 * v * np.cos(phi) / np.tan(theta))


def integrate_characteristic(theta0, phi0, q0, p, t_max, dt_out, normalized=False, sz_series=None,
                             rtol=1e-12, atol=1e-13):
    """Carry a Husimi value along the curve followed by a coherent peak.

    The curve obeys :func:`characteristic_rhs`, which is the Ehrenfest flow
    written in angles.  The carried value obeys

        raw:         q' = -4 gamma S cos(theta) q
        normalized:  q' = -4 gamma (S cos(theta) - <Sz>(t)) q

    so the raw peak tracks the trace (d tr / dt = -4 gamma <Sz> tr) and the
    normalized one is constant for coherent data.

    Parameters
    ----------
    sz_series : (times, values) or callable, optional
        <Sz>(t) of the quantum state, required when ``normalized``.
    """
    if not 0 < theta0 < math.pi:
        raise ValueError("theta0 must lie strictly between the poles")
    if normalized and sz_series is None:
        raise ValueError("the normalized characteristic needs the <Sz>(t) series")
    if not (t_max > 0 and dt_out > 0):
        raise ValueError("t_max and dt_out must be positive")
    S, g = p.spin, p.gamma
    sz = _sz_function(sz_series) if normalized else None

    def rhs(t, y):
        th, ph, q = y
        dth, dph = characteristic_rhs(th, ph, p)
        rate = S * math.cos(th) - (sz(t) if normalized else 0.0)
        return [dth, dph, -4 * g * rate * q]

    def near_pole(t, y):
        return min(y[0], math.pi - y[0]) - POLE_MARGIN

    near_pole.terminal = True
    n = int(round(t_max / dt_out))
    times = dt_out * np.arange(n + 1)
    sol = solve_ivp(rhs, (0.0, times[-1]), [theta0, phi0, q0], method="RK45", t_eval=times,
                    events=near_pole, rtol=rtol, atol=atol)
    if sol.status == -1:
        raise IntegrationError(sol.message, float(sol.t[-1]) if len(sol.t) else 0.0)
    stop = float(sol.t_events[0][0]) if sol.status == 1 else None
    return Characteristic(sol.t, sol.y[0], sol.y[1], sol.y[2], stop)


def _d1(f, x, h):
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def pde_rhs(rho, theta, phi, p, h=PDE_STEP, rotation_sign=1.0):
    """Right-hand side of the Husimi evolution equation at one point.

        dQ/dt = 2v (sin(phi) dQ/dtheta + cot(theta) cos(phi) dQ/dphi)
                + 2 gamma sin(theta) dQ/dtheta - 4 gamma S cos(theta) Q

    Derivatives are fourth-order central differences with step ``h``.
    ``rotation_sign=-1`` flips the v-term, for comparison only.
    """
    S = _spin_of(rho)
    qt = _d1(lambda x: husimi_direct(rho, x, phi), theta, h)
    qp = _d1(lambda x: husimi_direct(rho, theta, x), phi, h)
    q = husimi_direct(rho, theta, phi)
    rot = 2 * p.v * (math.sin(phi) * qt + math.cos(phi) / math.tan(theta) * qp)
    return rotation_sign * rot + 2 * p.gamma * math.sin(theta) * qt - 4 * p.gamma * S * math.cos(theta) * q


def pde_residual(rho_series, theta, phi, t_index, p, dt, h=PDE_STEP, rotation_sign=1.0):
    """|dQ/dt - RHS| at (theta, phi) and sample ``t_index`` of a uniform series.

    The time derivative is the central difference of neighbouring samples,
    which must be spaced ``dt`` apart.
    """
    if not PDE_THETA_MIN <= theta <= math.pi - PDE_THETA_MIN:
        raise ValueError(f"theta={theta} too close to a pole for the stencil")
    series = [_matrix(r) for r in rho_series]
    if not 0 < t_index < len(series) - 1:
        raise ValueError("t_index needs a neighbour on both sides")
    S = p.spin
    rho = DensityState(S, series[t_index])
    dq = (husimi_direct(DensityState(S, series[t_index + 1]), theta, phi)
          - husimi_direct(DensityState(S, series[t_index - 1]), theta, phi)) / (2 * dt)
    return float(abs(dq - pde_rhs(rho, theta, phi, p, h, rotation_sign)))


def coherent_husimi(S, n, theta, phi):
    """Normalized Husimi function ((1 + n.m) / 2)^{2S} of the coherent state along unit n."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    dot = (np.sin(theta) * np.cos(phi) * n[0] + np.sin(theta) * np.sin(phi) * n[1] + np.cos(theta) * n[2])
    return ((1 + dot) / 2) ** int(round(2 * S))


def transported_vs_quantum(theta0, phi0, p, t, n_theta=64, n_phi=128):
    """Sup distance between normalized quantum Q and the coherent Q at the Ehrenfest point.

    Accepts a scalar time or an ascending array of times.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    S = p.spin
    sys = p.system
    rho0 = DensityState.from_pure(S, coherent_state(sys, theta0, phi0))
    series = evolve_series(rho0, p, times)
    s0 = S * np.array([math.sin(theta0) * math.cos(phi0), math.sin(theta0) * math.sin(phi0), math.cos(theta0)])
    th, ph = grid_nodes(n_theta, n_phi)
    th, ph = th[:, None], ph[None, :]
    out = np.empty(len(times))
    for k, tk in enumerate(times):
        if tk == 0:
            s = s0
        else:
            s = integrate_ehrenfest(s0, p, tk, tk).points[-1]
        rho = series[k] / np.trace(series[k]).real
        out[k] = np.max(np.abs(husimi_direct(DensityState(S, rho), th, ph) - coherent_husimi(S, s, th, ph)))
    return out if np.ndim(t) else float(out[0])


def best_coherent_distance(rho, n_theta=64, n_phi=128):
    """Sup distance between normalized Q of `rho` and its best-fitting coherent Q.

    Returns
    -------
    distance, overlap : float
    """
    mat = _matrix(rho)
    S = _spin_of(rho)
    sys = make_spin_system(S)
    overlap, th0, ph0 = coherent_fit(sys, mat)
    n = [math.sin(th0) * math.cos(ph0), math.sin(th0) * math.sin(ph0), math.cos(th0)]
    th, ph = grid_nodes(n_theta, n_phi)
    th, ph = th[:, None], ph[None, :]
    q = husimi_direct(DensityState(S, mat / np.trace(mat).real), th, ph)
    return float(np.max(np.abs(q - coherent_husimi(S, n, th, ph)))), overlap
