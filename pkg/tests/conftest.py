import math

import mpmath
import numpy as np
import pytest

from ptspin.evolution import ModelParams
from ptspin.observables import DensityState
from ptspin.spin_algebra import coherent_state, make_spin_system

THETA0, PHI0 = math.pi / 2, math.pi / 4


@pytest.fixture(scope="session")
def spin10():
    return make_spin_system(10)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def params(gamma, v=1.0, spin=10):
    return ModelParams(v, gamma, spin)


def coherent_rho(spin, theta=THETA0, phi=PHI0):
    return DensityState.from_pure(spin, coherent_state(make_spin_system(spin), theta, phi))


def random_density(rng, spin, rank=3):
    d = make_spin_system(spin).dim
    A = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    return DensityState(spin, A @ A.conj().T)


def rel_frobenius(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


def _mp_expm(p, t):
    S = mpmath.mpf(p.spin)
    dim = p.system.dim
    H = mpmath.zeros(dim, dim)
    for k in range(dim):
        m = S - k
        H[k, k] = -2j * mpmath.mpf(p.gamma) * m
        if k:
            x = mpmath.mpf(p.v) * mpmath.sqrt(S * (S + 1) - m * (m + 1))
            H[k - 1, k] = H[k, k - 1] = x
    return mpmath.expm(-1j * mpmath.mpf(t) * H)


def mp_state(p, t, psi0, dps=60):
    """U(t) psi0 computed entirely in mpmath, rounded only at the end."""
    with mpmath.workdps(dps):
        psi = _mp_expm(p, t) * mpmath.matrix([mpmath.mpc(complex(z)) for z in psi0])
        return np.array([complex(psi[i]) for i in range(len(psi0))])


def mp_propagator(p, t, dps=60):
    """exp(-iHt) with mpmath from an exactly assembled H (independent of Arb)."""
    with mpmath.workdps(dps):
        S = mpmath.mpf(p.spin)
        dim = p.system.dim
        H = mpmath.zeros(dim, dim)
        for k in range(dim):
            m = S - k
            H[k, k] = -2j * mpmath.mpf(p.gamma) * m
            if k:
                x = mpmath.mpf(p.v) * mpmath.sqrt(S * (S + 1) - m * (m + 1))
                H[k - 1, k] = H[k, k - 1] = x
        E = mpmath.expm(-1j * mpmath.mpf(t) * H)
        return np.array([[complex(E[i, j]) for j in range(dim)] for i in range(dim)])


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
    passed = sum(line.startswith("PASS") for line in ACCEPTANCE.values())
    terminalreporter.write_line(f"{passed}/{len(ACCEPTANCE)} criteria pass")
