"""Extended-precision kernels on top of Arb ball arithmetic (python-flint).

Near the exceptional point the map t -> exp(-iHt) is violently non-normal:
one-ulp perturbations of the state at the half period are amplified by the
condition number exp(2rS) relative to the state itself.  Everything that
has to be accurate there runs through these helpers.
"""

from __future__ import annotations

import math

import flint
import numpy as np

from .errors import ExpmOverflowError, NumericalError

# Largest working precision we are willing to try before giving up.
MAX_PREC = 1 << 14
_DOUBLE_MAX_LOG2 = 1020


def working_bits(p, horizon):
    """Bits needed so that amplified rounding stays far below double epsilon.

    The amplification is bounded both by the similarity-transform condition
    number exp(2aS) and by the polynomial growth (2 + 4(v+gamma)t)^(2S) of U
    near the EP; twice the smaller of the two is added to a 100-bit base.
    """
    S = p.spin
    poly = 2 * S * math.log2(2 + 4 * (p.v + p.gamma) * abs(horizon))
    if p.regime == "exceptional":
        lost = poly
    else:
        a = p.r if p.regime == "unbroken" else p.alpha
        lost = min(2 * a * S / math.log(2), poly)
    if p.regime == "broken":
        # genuine exponential growth of U itself
        lost += 2 * math.sqrt(p.gamma**2 - p.v**2) * S * abs(horizon) / math.log(2)
    return int(min(MAX_PREC, 100 + math.ceil(2 * lost)))


class _Precision:
    """Context manager setting flint's global working precision."""

    def __init__(self, bits):
        self.bits = bits

    def __enter__(self):
        self._saved = flint.ctx.prec
        flint.ctx.prec = self.bits
        return self

    def __exit__(self, *exc):
        flint.ctx.prec = self._saved
        return False


def hamiltonian(p):
    """H = 2v Sx - 2i gamma Sz with exactly rounded square roots."""
    S = flint.arb(p.spin)
    d = p.system.dim
    v = flint.arb(p.v)
    g = flint.arb(p.gamma)
    H = flint.acb_mat(d, d)
    for k in range(d):
        m = S - k
        H[k, k] = flint.acb(0, -2 * g * m)
        if k > 0:
            x = v * (S * (S + 1) - m * (m + 1)).sqrt()
            H[k - 1, k] = x
            H[k, k - 1] = x
    return H


def from_numpy(a):
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        a = a[:, None]
    return flint.acb_mat([[flint.acb(z.real, z.imag) for z in row] for row in a.tolist()])


def to_numpy(M, what="matrix"):
    """Round an acb_mat to complex128, refusing values outside double range."""
    out = np.empty((M.nrows(), M.ncols()), dtype=complex)
    for i, row in enumerate(M.tolist()):
        for j, z in enumerate(row):
            re, im = z.real.mid(), z.imag.mid()
            if max(abs(re), abs(im)) > flint.arb(2) ** _DOUBLE_MAX_LOG2:
                raise ExpmOverflowError(f"{what} entry exceeds double range")
            out[i, j] = complex(float(re), float(im))
    return out


def _max_rel_radius(M):
    mags = [max(abs(float(z.real.mid())), abs(float(z.imag.mid()))) for row in M.tolist() for z in row]
    scale = max(mags) if mags else 0.0
    rad = max(float(z.rad()) for row in M.tolist() for z in row)
    if not math.isfinite(rad):
        return math.inf
    return rad / scale if scale > 0 else (0.0 if rad == 0 else math.inf)


def propagator(p, t, bits=None, rel_tol=1e-20):
    """exp(-iHt) in ball arithmetic, returned as an acb_mat of midpoints.

    The precision starts at ``bits`` (default from :func:`working_bits`) and
    is doubled until every entry's error radius is below ``rel_tol`` times
    the largest entry, so the result is certified to that accuracy.
    """
    bits = bits or working_bits(p, t)
    while True:
        with _Precision(bits):
            U = (hamiltonian(p) * flint.acb(0, -flint.arb(t))).exp()
            if _max_rel_radius(U) < rel_tol:
                return U.mid(), bits
        if bits >= MAX_PREC:
            raise NumericalError(f"could not certify exp(-iHt) at t={t} with {bits} bits")
        bits *= 2


def evolve_columns(p, W0, times, bits=None):
    """Apply U(t) to the columns of W0 for each t in ascending ``times``.

    Steps between consecutive times with exactly exponentiated step
    propagators (one per distinct gap) and keeps the running columns in
    extended precision; only the outputs are rounded to double.

    Returns
    -------
    numpy.ndarray
        Shape (len(times), dim, ncols).
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1-d array")
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and ascending")
    bits = bits or working_bits(p, times[-1])
    cache = {}
    out = np.empty((len(times),) + np.shape(W0 if np.ndim(W0) == 2 else np.asarray(W0)[:, None]), dtype=complex)
    with _Precision(bits):
        W = from_numpy(W0)
        prev = 0.0
        for k, t in enumerate(times.tolist()):
            gap = t - prev
            if gap > 0:
                if gap not in cache:
                    cache[gap] = propagator(p, gap, bits=bits)[0]
                W = (cache[gap] * W).mid()
            prev = t
            out[k] = to_numpy(W, what=f"state at t={t}")
    return out


def eigenvalues(p, bits=128, max_bits=1024):
    """Eigenvalues of H in ball arithmetic.

    Returns
    -------
    values : numpy.ndarray
        Ball midpoints rounded to complex128.
    radius : float
        Largest certified error radius, or inf when the eigenvalues could not
        be isolated (at or extremely close to the EP, where H is defective);
        the values are then LAPACK's double-precision eigenvalues.
    """
    while True:
        with _Precision(bits):
            H = hamiltonian(p)
            try:
                E = H.eig()
            except ValueError:
                E = None
            if E is not None:
                vals = np.array([complex(float(z.real.mid()), float(z.imag.mid())) for z in E])
                return vals, max(float(z.rad()) for z in E)
            if bits >= max_bits:
                from .evolution import build_hamiltonian

                return np.linalg.eigvals(build_hamiltonian(p)), math.inf
        bits *= 2
