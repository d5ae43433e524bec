"""Propagators for H = 2v Sx - 2i gamma Sz.

Three routes to U(t) = exp(-iHt):

* ``propagator_direct`` -- the exponential itself, by default in certified
  extended precision.  This is the reference.
* ``propagator_diag`` -- similarity transform by exp(r Sy) (or exp(alpha Sy)
  in the broken phase) around a rotation; loses accuracy like exp(2 r S) as
  gamma -> v.
* ``propagator_disentangled`` -- U = exp(-f Sz) exp(-g Sy) exp(-i h Sx) with
  real f, g, h obtained from a three-dimensional ODE.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _arb
from .errors import IntegrationError
from .linalg import matrix_exponential
from .spin_algebra import coherent_fit, make_spin_system

# relative distance below which gamma is treated as sitting on the EP
EP_TOLERANCE = 1e-14
CONDITION_WARN = 1e8


class ConditioningWarning(UserWarning):
    """The similarity transform is badly conditioned; expect lost digits."""


class Method(str, enum.Enum):
    DIRECT = "direct"
    DIAG = "diagonalization"
    DISENTANGLE = "disentangling"


@dataclass(frozen=True)
class ModelParams:
    """Coupling `v`, gain/loss rate `gamma` and spin quantum number."""

    v: float
    gamma: float
    spin: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and self.v > 0):
            raise ValueError(f"v must be positive and finite, got {self.v}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be non-negative and finite, got {self.gamma}")
        make_spin_system(self.spin)

    @property
    def system(self):
        return make_spin_system(self.spin)

    @property
    def regime(self):
        """'unbroken' (gamma < v), 'exceptional' (gamma = v) or 'broken'."""
        if abs(self.gamma - self.v) <= EP_TOLERANCE * self.v:
            return "exceptional"
        return "unbroken" if self.gamma < self.v else "broken"

    @property
    def r(self):
        """Deformation strength atanh(gamma/v); only defined for gamma < v."""
        if self.regime != "unbroken":
            raise ValueError("r = atanh(gamma/v) needs gamma < v")
        return math.atanh(self.gamma / self.v)

    @property
    def alpha(self):
        """atanh(v/gamma), the similarity parameter for gamma > v."""
        if self.regime != "broken":
            raise ValueError("alpha = atanh(v/gamma) needs gamma > v")
        return math.atanh(self.v / self.gamma)

    @property
    def frequency(self):
        """Rotation frequency sqrt(v^2 - gamma^2) of the unbroken phase."""
        return math.sqrt(max(self.v**2 - self.gamma**2, 0.0))

    @property
    def period(self):
        """Period pi / sqrt(v^2 - gamma^2) of f, g and of the dynamics."""
        if self.regime != "unbroken":
            raise ValueError("dynamics is periodic only for gamma < v")
        return math.pi / self.frequency

    @property
    def condition_estimate(self):
        """cond(exp(r Sy)) = exp(2 r S); infinite at the EP."""
        if self.regime == "exceptional":
            return math.inf
        a = self.r if self.regime == "unbroken" else self.alpha
        return math.exp(min(2 * a * self.spin, 700.0))


@dataclass(frozen=True)
class Propagator:
    matrix: np.ndarray
    t: float
    method: Method


def build_hamiltonian(p):
    """H = 2v Sx - 2i gamma Sz as a dense complex matrix."""
    sys = p.system
    return 2 * p.v * sys.sx - 2j * p.gamma * sys.sz


def analytic_spectrum(p):
    """Eigenvalues -2m sqrt(v^2 - gamma^2), ordered m = S ... -S.

    Real for gamma < v, all zero at the EP, purely imaginary
    -2im sqrt(gamma^2 - v^2) for gamma > v.
    """
    m = p.system.m
    root = np.sqrt(complex(p.v**2 - p.gamma**2))
    if p.regime == "exceptional":
        root = 0.0
    return -2 * m * root


def numerical_spectrum(p, precision="extended"):
    """Eigenvalues of the dense H, paired with :func:`analytic_spectrum` order.

    'extended' uses a certified dense eigensolver in ball arithmetic on H
    built from correctly rounded entries.  'double' calls LAPACK on the
    complex128 matrix; eigenvalue condition numbers grow like exp(2rS), so
    near the EP rounding the entries of H alone moves the spectrum (by
    ~2e-3 at S=10, gamma=0.9).

    Returns
    -------
    values : numpy.ndarray
    error_bound : float
        Certified bound for 'extended' (inf when H is too close to defective
        to isolate eigenvalues); nan for 'double'.
    """
    from scipy.optimize import linear_sum_assignment

    if precision == "double":
        vals, bound = np.linalg.eigvals(build_hamiltonian(p)), math.nan
    elif precision == "extended":
        vals, bound = _arb.eigenvalues(p)
    else:
        raise ValueError(f"unknown precision {precision!r}")
    ana = analytic_spectrum(p)
    _, cols = linear_sum_assignment(np.abs(ana[:, None] - vals[None, :]))
    return vals[cols], bound


def propagator_direct(p, t, precision="extended", bits=None):
    """U(t) = exp(-iHt) computed directly.

    Parameters
    ----------
    p : ModelParams
    t : float
    precision : {'extended', 'double'}
        'extended' builds H from correctly rounded square roots and
        exponentiates in Arb ball arithmetic, raising the precision until the
        result is certified, then rounds to complex128.  'double' calls
        :func:`matrix_exponential` on the double-precision H; close to the EP
        this is ill-conditioned (one-ulp changes in the entries of H move U
        by ~1e-5 relative at S=10, gamma=0.9, t=5) and is only trustworthy
        for short times or small gamma.
    bits : int, optional
        Starting working precision for 'extended'; by default chosen from
        the conditioning of the problem.

    Raises
    ------
    ExpmOverflowError
        If entries of U(t) leave the double range (gamma > v, long times).
    """
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if precision == "double":
        U = matrix_exponential(-1j * t * build_hamiltonian(p))
        return Propagator(U, t, Method.DIRECT)
    if precision != "extended":
        raise ValueError(f"unknown precision {precision!r}")
    U, _ = _arb.propagator(p, t, bits=bits)
    return Propagator(_arb.to_numpy(U, what=f"U({t})"), t, Method.DIRECT)


def propagator_diag(p, t):
    """U(t) through the similarity transform that diagonalizes H.

    gamma < v:  exp(r Sy) exp(-2i sqrt(v^2-gamma^2) Sx t) exp(-r Sy)
    gamma > v:  exp(a Sy) exp(-2 sqrt(gamma^2-v^2) Sz t) exp(-a Sy)
    with r = atanh(gamma/v), a = atanh(v/gamma).  Refuses the EP.
    """
    sys = p.system
    if p.regime == "exceptional":
        raise ValueError("H is defective at gamma = v; no diagonalizing similarity exists")
    cond = p.condition_estimate
    if cond > CONDITION_WARN:
        warnings.warn(
            f"similarity transform condition ~{cond:.2e}; diagonalization loses digits",
            ConditioningWarning,
            stacklevel=2,
        )
    if p.regime == "unbroken":
        a = p.r
        middle = matrix_exponential(-2j * p.frequency * t * sys.sx)
    else:
        a = p.alpha
        kappa = math.sqrt(p.gamma**2 - p.v**2)
        middle = np.diag(np.exp(-2 * kappa * t * sys.m)).astype(complex)
    left = matrix_exponential(a * sys.sy)
    right = matrix_exponential(-a * sys.sy)
    return Propagator(left @ middle @ right, t, Method.DIAG)


@dataclass
class DisentanglingFactors:
    """f, g, h sampled on a uniform grid, with the solver's dense output.

    U(t) = exp(-f Sz) exp(-g Sy) exp(-i h Sx).
    """

    times: np.ndarray
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    params: ModelParams
    _dense: object = field(default=None, repr=False)

    @property
    def t_max(self):
        return float(self.times[-1])

    def at(self, t):
        """(f, g, h) at arbitrary t inside the integrated range."""
        t = np.asarray(t, dtype=float)
        tol = 1e-12 * max(1.0, self.t_max)
        if np.any(t < -tol) or np.any(t > self.t_max + tol):
            raise ValueError(f"t outside the integrated range [0, {self.t_max}]")
        if self._dense is None:
            raise ValueError("these factors carry no dense output")
        return self._dense(np.clip(t, 0.0, self.t_max))

    def check(self):
        """Raise AssertionError if a structural invariant is broken."""
        assert self.f[0] == 0 and self.g[0] == 0 and self.h[0] == 0
        assert np.all(np.isfinite(self.f)) and np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.h))
        assert np.all(np.diff(self.h) >= 0)


def _disentangle_rhs(p):
    v2 = 2 * p.v
    g2 = 2 * p.gamma

    def rhs(t, y):
        f, g, _ = y
        return [math.tanh(g) * math.cosh(f) * v2 + g2,
                -v2 * math.sinh(f),
                v2 * math.cosh(f) / math.cosh(g)]

    return rhs


def disentangle(p, t_max, dt_out, rtol=1e-11, atol=1e-12):
    """Integrate the real ODE system for the disentangling angles.

        f' = 2v tanh(g) cosh(f) + 2 gamma
        g' = -2v sinh(f)
        h' = 2v cosh(f) / cosh(g),        f(0) = g(0) = h(0) = 0

    with Dormand-Prince 5(4) (scipy ``RK45``) and its dense output.

    Parameters
    ----------
    p : ModelParams
    t_max, dt_out : float
        Integration horizon and output spacing; output times are
        ``dt_out * k`` for k = 0 .. round(t_max / dt_out).

    Raises
    ------
    IntegrationError
        If the step size collapses (e.g. f, g blowing up for gamma > v).
    """
    if not (t_max > 0 and dt_out > 0):
        raise ValueError("t_max and dt_out must be positive")
    n = int(round(t_max / dt_out))
    times = dt_out * np.arange(n + 1)
    t_end = max(t_max, times[-1])
    base = _disentangle_rhs(p)
    reached = [0.0]

    def rhs(t, y):
        out = base(t, y)
        reached[0] = max(reached[0], t)
        return out

    with np.errstate(over="raise"), warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        try:
            sol = solve_ivp(rhs, (0.0, t_end), [0.0, 0.0, 0.0], method="RK45",
                            rtol=rtol, atol=atol, dense_output=True)
        except (OverflowError, FloatingPointError, RuntimeWarning) as exc:
            raise IntegrationError(f"disentangling ODE overflowed: {exc}", reached[0]) from exc
    if sol.status != 0:
        raise IntegrationError(sol.message, float(sol.t[-1]))
    f, g, h = sol.sol(times)
    f[0] = g[0] = h[0] = 0.0
    return DisentanglingFactors(times, f, g, h, p, sol.sol)


def disentangled_matrix(sys, f, g, h):
    """exp(-f Sz) exp(-g Sy) exp(-i h Sx) for scalar angles."""
    left = np.exp(-f * sys.m)[:, None]
    return left * (matrix_exponential(-g * sys.sy) @ matrix_exponential(-1j * h * sys.sx))


def propagator_disentangled(p, factors, t):
    """U(t) assembled from the disentangling angles at time t."""
    f, g, h = factors.at(t)
    return Propagator(disentangled_matrix(p.system, f, g, h), float(t), Method.DISENTANGLE)


def deformation_coherence(p, psi):
    """Overlap of exp(-r Sy)|psi> (normalized) with its best coherent state.

    Returns
    -------
    overlap : float
        max over (theta, phi) of |<theta,phi|psi'>|^2, in [0, 1].
    theta, phi : float
        Location of the best-fit coherent state.
    """
    sys = p.system
    out = matrix_exponential(-p.r * sys.sy) @ np.asarray(psi, dtype=complex)
    out = out / np.linalg.norm(out)
    return coherent_fit(sys, out)
