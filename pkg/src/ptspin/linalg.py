"""Dense matrix exponential by scaling and squaring with Pade approximants.

Follows Higham, "The scaling and squaring method for the matrix exponential
revisited" (SIAM J. Matrix Anal. Appl. 26, 2005): pick the lowest Pade degree
m in {3, 5, 7, 9, 13} whose backward-error bound theta_m covers ||A||_1,
otherwise scale A by 2^-s so that degree 13 suffices and square s times.
"""

import math

import numpy as np
import scipy.linalg

from .errors import ExpmOverflowError

_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}

# log(max double) with headroom; ||exp(A)|| <= exp(||A||)
_OVERFLOW_NORM = 700.0


def _pade_uv(A, m):
    b = _PADE[m]
    n = A.shape[0]
    ident = np.eye(n, dtype=A.dtype)
    A2 = A @ A
    if m == 13:
        A4 = A2 @ A2
        A6 = A4 @ A2
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
        V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
             + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
        return U, V
    powers = [ident, A2]
    for _ in range(2, (m + 1) // 2):
        powers.append(powers[-1] @ A2)
    U = sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
    V = sum(b[2 * k] * powers[k] for k in range(len(powers)))
    return A @ U, V


def matrix_exponential(A):
    """Return exp(A) for a dense square matrix.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Real or complex matrix.

    Returns
    -------
    numpy.ndarray
        exp(A), same shape, complex if `A` is complex.

    Raises
    ------
    ValueError
        If `A` is not square or not finite.
    ExpmOverflowError
        If ||A||_1 is so large that exp(A) may overflow.

    Notes
    -----
    Relative error is at the level of a few ulp times the condition number of
    the exponential; for normal matrices with ||A|| <= 50 this is ~1e-13.
    Highly non-normal inputs (the PT Hamiltonian near its exceptional point)
    can lose many digits, which is intrinsic to the problem rather than the
    algorithm.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix_exponential needs a square matrix, got shape {A.shape}")
    if not np.issubdtype(A.dtype, np.inexact):
        A = A.astype(float)
    n = A.shape[0]
    if n == 0:
        return A.copy()
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix_exponential input contains non-finite entries")
    norm1 = np.linalg.norm(A, 1)
    if norm1 > _OVERFLOW_NORM and np.max(np.real(np.linalg.eigvals(A))) > _OVERFLOW_NORM:
        raise ExpmOverflowError(
            f"||A||_1 = {norm1:.3g} and spectral abscissa exceed {_OVERFLOW_NORM}; exp(A) overflows"
        )

    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            U, V = _pade_uv(A, m)
            return scipy.linalg.solve(V - U, V + U)

    s = max(0, math.ceil(math.log2(norm1 / _THETA[13]))) if norm1 > 0 else 0
    U, V = _pade_uv(A / 2.0**s, 13)
    X = scipy.linalg.solve(V - U, V + U)
    for _ in range(s):
        X = X @ X
    if not np.all(np.isfinite(X)):
        raise ExpmOverflowError("matrix exponential overflowed during squaring")
    return X
