"""SU(2) machinery for a single spin S.

Basis ordering is the Dicke basis |S, m> with m = S, S-1, ..., -S, so index
``k`` holds ``m = S - k``.  Phases follow the Condon-Shortley convention
everywhere (ladder elements, Clebsch-Gordan coefficients, spherical
harmonics).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .linalg import matrix_exponential


def _twice(value, name):
    """Return 2*value as an int, rejecting anything that is not a half-integer."""
    two = 2 * Fraction(value).limit_denominator(1000)
    if two.denominator != 1 or abs(float(two) - 2 * float(value)) > 1e-12:
        raise ValueError(f"{name}={value!r} is not an integer or half-integer")
    return int(two)


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """Angular-momentum matrices of a spin-S representation.

    Attributes
    ----------
    spin : float
        Spin quantum number S (integer or half-integer).
    dim : int
        Hilbert-space dimension 2S+1.
    sx, sy, sz : numpy.ndarray
        Read-only complex (dim, dim) matrices in the Dicke basis.
    """

    spin: float
    dim: int
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def m(self):
        """Magnetic quantum numbers in basis order (S down to -S)."""
        return self.spin - np.arange(self.dim)

    def index(self, m):
        """Basis index of the Dicke state with quantum number `m`."""
        k = _twice(self.spin, "S") - _twice(m, "m")
        if k % 2 or not 0 <= k // 2 < self.dim:
            raise ValueError(f"m={m} is not a valid projection for S={self.spin}")
        return k // 2

    @functools.cached_property
    def parity(self):
        """Exchange matrix implementing P|S,m> = |S,-m>."""
        return np.eye(self.dim)[::-1]


@functools.lru_cache(maxsize=64)
def _spin_system(two_s):
    S = two_s / 2
    dim = two_s + 1
    m = S - np.arange(dim)
    # <m+1|S+|m> sits at row k-1, column k
    splus = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        splus[k - 1, k] = math.sqrt(S * (S + 1) - m[k] * (m[k] + 1))
    sminus = splus.T.copy()
    sx = (splus + sminus) / 2
    sy = (splus - sminus) / 2j
    sz = np.diag(m).astype(complex)
    for a in (sx, sy, sz):
        a.setflags(write=False)
    return SpinSystem(spin=S, dim=dim, sx=sx, sy=sy, sz=sz)


def make_spin_system(S):
    """Build the spin matrices for spin `S`.

    Parameters
    ----------
    S : float or Fraction
        Positive integer or half-integer.

    Returns
    -------
    SpinSystem
        Cached, immutable; repeated calls with the same S share arrays.
    """
    two_s = _twice(S, "S")
    if two_s <= 0:
        raise ValueError(f"spin must be positive, got S={S}")
    return _spin_system(two_s)


def dicke_state(sys, m):
    """Unit vector |S, m>."""
    psi = np.zeros(sys.dim, dtype=complex)
    psi[sys.index(m)] = 1.0
    return psi


def _coherent_amplitudes(S, theta, phi):
    # <S,m|theta,phi> = sqrt(C(2S, S-m)) cos^{S+m}(theta/2) sin^{S-m}(theta/2) e^{-i m phi}
    two_s = int(round(2 * S))
    m = S - np.arange(two_s + 1)
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    logbinom = np.array([math.lgamma(two_s + 1) - math.lgamma(k + 1) - math.lgamma(two_s - k + 1)
                         for k in range(two_s + 1)])
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        powers = np.power(c, S + m) * np.power(s, S - m)
    return np.exp(0.5 * logbinom) * powers * np.exp(-1j * m * phi)


def coherent_state(sys, theta, phi):
    """Spin coherent state exp(-i phi Sz) exp(-i theta Sy) |S, S>.

    Evaluated from the closed-form Wigner-d column, so it also accepts
    arrays of angles: the result then has shape ``broadcast(theta, phi).shape
    + (dim,)``.
    """
    return _coherent_amplitudes(sys.spin, theta, phi)


def coherent_state_by_rotation(sys, theta, phi):
    """Same state as :func:`coherent_state`, built from the two exponentials."""
    top = dicke_state(sys, sys.spin)
    return matrix_exponential(-1j * phi * sys.sz) @ (matrix_exponential(-1j * theta * sys.sy) @ top)


def clebsch_gordan(j1, m1, j2, m2, J, M):
    """Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M> (Condon-Shortley).

    Racah's closed-form sum, accumulated in log-factorials.  Violated
    selection rules give exactly 0.0; malformed quantum numbers raise.
    """
    tj1, tm1, tj2, tm2, tJ, tM = (_twice(x, n) for x, n in
                                  ((j1, "j1"), (m1, "m1"), (j2, "j2"), (m2, "m2"), (J, "J"), (M, "M")))
    if min(tj1, tj2, tJ) < 0:
        raise ValueError("angular momenta must be non-negative")
    for tj, tm in ((tj1, tm1), (tj2, tm2), (tJ, tM)):
        if (tj - tm) % 2:
            raise ValueError("projection and angular momentum differ by a non-integer")
    if (tj1 + tj2 + tJ) % 2:
        raise ValueError("j1 + j2 + J must be an integer")
    if tM != tm1 + tm2:
        return 0.0
    if not abs(tj1 - tj2) <= tJ <= tj1 + tj2:
        return 0.0
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tM) > tJ:
        return 0.0

    # integer arguments for the factorials, all halved
    a = (tj1 + tj2 - tJ) // 2
    b = (tj1 - tm1) // 2
    c = (tj2 + tm2) // 2
    d = (tJ - tj2 + tm1) // 2
    e = (tJ - tj1 - tm2) // 2
    lf = lambda n: math.lgamma(n + 1)  # noqa: E731

    log_pref = 0.5 * (
        math.log(tJ + 1)
        + lf((tJ + tj1 - tj2) // 2) + lf((tJ - tj1 + tj2) // 2) + lf(a)
        - lf((tj1 + tj2 + tJ) // 2 + 1)
        + lf((tJ + tM) // 2) + lf((tJ - tM) // 2)
        + lf((tj1 - tm1) // 2) + lf((tj1 + tm1) // 2)
        + lf((tj2 - tm2) // 2) + lf((tj2 + tm2) // 2)
    )
    kmin = max(0, -d, -e)
    kmax = min(a, b, c)
    terms = []
    for k in range(kmin, kmax + 1):
        log_t = lf(k) + lf(a - k) + lf(b - k) + lf(c - k) + lf(d + k) + lf(e + k)
        terms.append((-1) ** k * math.exp(log_pref - log_t))
    return math.fsum(terms)


def _normalized_legendre(L, M, x):
    """Orthonormal associated Legendre function for M >= 0, without (-1)^M.

    Returns N_LM P_L^M(x) where the product squared integrates to 1/(2 pi)
    over the sphere; built by the standard stable upward recurrence in L.
    """
    x = np.asarray(x, dtype=float)
    sin_t = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    # P_M^M
    pmm = np.full_like(x, math.sqrt(1.0 / (4 * math.pi)))
    for k in range(1, M + 1):
        pmm = pmm * math.sqrt((2 * k + 1) / (2 * k)) * sin_t
    if L == M:
        return pmm
    pm1 = math.sqrt(2 * M + 3) * x * pmm
    if L == M + 1:
        return pm1
    p_prev, p_cur = pmm, pm1
    for ell in range(M + 2, L + 1):
        a = math.sqrt((4 * ell * ell - 1) / (ell * ell - M * M))
        b = math.sqrt(((ell - 1) ** 2 - M * M) / (4 * (ell - 1) ** 2 - 1))
        p_prev, p_cur = p_cur, a * (x * p_cur - b * p_prev)
    return p_cur


def spherical_harmonic(L, M, theta, phi):
    """Orthonormal Y_LM(theta, phi) with the Condon-Shortley phase.

    Satisfies Y_{L,M} = (-1)^M conj(Y_{L,-M}).  Vectorized over angles.
    """
    if L < 0 or abs(M) > L:
        raise ValueError(f"need |M| <= L, got L={L}, M={M}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(M)
    plm = _normalized_legendre(L, am, np.cos(theta))
    y = (-1) ** am * plm * np.exp(1j * am * phi)
    if M < 0:
        y = (-1) ** am * np.conj(y)
    return y


def tensor_operator(sys, L, M):
    """Irreducible tensor operator T^{(S)}_{L,M}.

    Element (m', m) is sqrt((2L+1)/(2S+1)) <S m; L M | S m'>.
    """
    if not 0 <= L <= 2 * sys.spin or abs(M) > L:
        raise ValueError(f"(L, M) = ({L}, {M}) out of range for S={sys.spin}")
    S = sys.spin
    pref = math.sqrt((2 * L + 1) / (2 * S + 1))
    T = np.zeros((sys.dim, sys.dim), dtype=float)
    for col, m in enumerate(sys.m):
        mp = m + M
        if abs(mp) <= S:
            T[sys.index(mp), col] = pref * clebsch_gordan(S, m, L, M, S, mp)
    return T


def pt_symmetry_check(sys, H):
    """Return ||P conj(H) P - H||_inf.

    Zero exactly when H commutes with PT, where P reverses m and T is complex
    conjugation in the Dicke basis.
    """
    H = np.asarray(H)
    if H.shape != (sys.dim, sys.dim):
        raise ValueError(f"H has shape {H.shape}, expected {(sys.dim, sys.dim)}")
    P = sys.parity
    return float(np.max(np.abs(P @ H.conj() @ P - H)))


def coherent_fit(sys, state, n_theta=48, n_phi=96):
    """Best-fitting coherent state of a pure or mixed state.

    Maximizes <theta,phi|rho|theta,phi> / tr(rho) over the sphere: a grid
    scan followed by Nelder-Mead refinement of the best node.

    Parameters
    ----------
    sys : SpinSystem
    state : array_like
        State vector (dim,) or density matrix (dim, dim).

    Returns
    -------
    overlap, theta, phi : float
    """
    from scipy.optimize import minimize

    state = np.asarray(state, dtype=complex)
    rho = np.outer(state, state.conj()) if state.ndim == 1 else state
    rho = rho / np.trace(rho).real

    def q(theta, phi):
        c = coherent_state(sys, theta, phi)
        return np.einsum("...i,ij,...j->...", c.conj(), rho, c).real

    th = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    ph = -np.pi + 2 * np.pi * np.arange(n_phi) / n_phi
    grid = q(th[:, None], ph[None, :])
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    res = minimize(lambda x: -q(x[0], x[1]), x0=[th[i], ph[j]], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    theta, phi = res.x
    if theta < 0:
        theta, phi = -theta, phi + np.pi
    theta = theta % (2 * np.pi)
    if theta > np.pi:
        theta, phi = 2 * np.pi - theta, phi + np.pi
    phi = (phi + np.pi) % (2 * np.pi) - np.pi
    return float(min(-res.fun, 1.0)), float(theta), float(phi)
