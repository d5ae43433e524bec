import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ptspin.errors import ExpmOverflowError, IntegrationError
from ptspin.evolution import (CONDITION_WARN, ConditioningWarning, Method, ModelParams, analytic_spectrum,
                              build_hamiltonian, deformation_coherence, disentangle, numerical_spectrum,
                              propagator_diag, propagator_direct, propagator_disentangled)
from ptspin.spin_algebra import coherent_state, dicke_state, pt_symmetry_check

from conftest import THETA0, PHI0, mp_propagator, params, rel_frobenius

T_09 = math.pi / math.sqrt(0.19)


@pytest.fixture(scope="module")
def factors_09():
    return disentangle(params(0.9), 31.0, 0.01)


def _diag(p, t):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditioningWarning)
        return propagator_diag(p, t).matrix


class TestModelParams:
    @pytest.mark.parametrize("v,gamma,spin", [(0, 0.1, 10), (-1, 0.1, 10), (1, -0.1, 10), (1, math.inf, 10),
                                              (1, 0.1, 0.3), (math.nan, 0.1, 10)])
    def test_validation(self, v, gamma, spin):
        with pytest.raises(ValueError):
            ModelParams(v, gamma, spin)

    @pytest.mark.parametrize("gamma,regime", [(0.0, "unbroken"), (0.999, "unbroken"), (1.0, "exceptional"),
                                              (1.2, "broken")])
    def test_regime(self, gamma, regime):
        assert params(gamma).regime == regime

    def test_derived_quantities(self):
        p = params(0.9)
        assert p.r == pytest.approx(0.5 * math.log(1.9 / 0.1), abs=1e-15)
        assert p.r == pytest.approx(1.47222, abs=1e-5)
        assert p.period == pytest.approx(7.2073078, abs=1e-7)
        assert params(1.25).alpha == pytest.approx(math.atanh(0.8))
        with pytest.raises(ValueError):
            params(1.0).r
        with pytest.raises(ValueError):
            params(1.2).period


class TestHamiltonianAndSpectrum:
    def test_hermitian_at_zero_gamma(self):
        H = build_hamiltonian(params(0.0))
        assert np.max(np.abs(H - H.conj().T)) < 1e-12

    def test_spin_half(self):
        H = build_hamiltonian(params(0.0, spin=0.5))
        assert_allclose(H, [[0, 1], [1, 0]])
        assert_allclose(np.sort(np.linalg.eigvals(H).real), [-1, 1])

    @pytest.mark.parametrize("gamma", [0.0, 0.3, 0.9, 1.0, 2.0])
    def test_pt_symmetric(self, gamma):
        p = params(gamma)
        assert pt_symmetry_check(p.system, build_hamiltonian(p)) < 1e-12

    def test_dense_solver_example(self):
        p = params(0.5)
        num = np.sort_complex(np.linalg.eigvals(build_hamiltonian(p)))
        assert np.max(np.abs(num - np.sort_complex(analytic_spectrum(p)))) < 1e-9

    def test_hermitian_endpoints(self):
        assert_allclose(analytic_spectrum(params(0.0)).real, np.arange(-20, 21, 2))

    def test_ep_coalescence(self):
        assert np.all(analytic_spectrum(params(1.0)) == 0)

    def test_top_level(self):
        assert analytic_spectrum(params(0.5))[0].real == pytest.approx(-17.3205, abs=1e-4)

    def test_broken_phase_imaginary(self):
        E = analytic_spectrum(params(1.2))
        assert np.all(E.real == 0)
        assert_allclose(E.imag, -2 * params(1.2).system.m * math.sqrt(1.44 - 1))

    @pytest.mark.parametrize("gamma", [0.0, 0.5, 0.9, 0.99, 0.9999, 1.2, 3.0])
    def test_certified_numerical_spectrum(self, gamma):
        p = params(gamma)
        num, bound = numerical_spectrum(p)
        assert bound < 1e-9
        assert np.max(np.abs(num - analytic_spectrum(p))) < 1e-8

    def test_double_precision_spectrum_degrades(self):
        num, _ = numerical_spectrum(params(0.9), precision="double")
        assert np.max(np.abs(num - analytic_spectrum(params(0.9)))) > 1e-6


class TestDirectPropagator:
    def test_identity_at_zero(self):
        assert np.max(np.abs(propagator_direct(params(0.7), 0.0).matrix - np.eye(21))) < 1e-12

    def test_hermitian_limit_period(self, spin10):
        p = params(0.0)
        psi = coherent_state(spin10, 0.7, 0.4)
        T = math.pi / p.v
        for n in (1, 2, 3):
            out = propagator_direct(p, n * T).matrix @ psi
            assert abs(abs(np.vdot(psi, out)) - 1) < 1e-12
        U = propagator_direct(p, 2.3).matrix
        assert np.max(np.abs(U.conj().T @ U - np.eye(21))) < 1e-10

    @pytest.mark.parametrize("gamma,t", [(0.9, 5.0), (0.999, 5.0), (0.5, 30.0), (1.2, 2.0)])
    def test_extended_matches_mpmath_oracle(self, gamma, t):
        p = params(gamma)
        assert rel_frobenius(propagator_direct(p, t).matrix, mp_propagator(p, t, dps=80)) < 1e-14

    def test_double_route_is_ill_conditioned_near_ep(self):
        p = params(0.9)
        ref = propagator_direct(p, 30.0).matrix
        assert rel_frobenius(propagator_direct(p, 30.0, precision="double").matrix, ref) > 1e-8

    def test_overflow_is_flagged(self):
        with pytest.raises(ExpmOverflowError):
            propagator_direct(params(3.0), 60.0)

    def test_rejects_non_finite_time(self):
        with pytest.raises(ValueError):
            propagator_direct(params(0.2), math.inf)


class TestDiagonalizationPropagator:
    def test_hermitian_limit(self):
        p = params(0.0)
        assert rel_frobenius(propagator_diag(p, 2.0).matrix, propagator_direct(p, 2.0).matrix) < 1e-12

    def test_example_near_ep(self):
        p = params(0.9)
        assert rel_frobenius(_diag(p, 3.0), propagator_direct(p, 3.0).matrix) < 1e-7

    def test_broken_branch(self):
        p = params(1.2)
        with pytest.warns(ConditioningWarning):
            U = propagator_diag(p, 1.5).matrix
        assert rel_frobenius(U, propagator_direct(p, 1.5).matrix) < 1e-10

    def test_refuses_ep(self):
        with pytest.raises(ValueError):
            propagator_diag(params(1.0), 1.0)

    def test_warns_when_ill_conditioned(self):
        p = params(0.9)
        assert p.condition_estimate > CONDITION_WARN
        with pytest.warns(ConditioningWarning):
            propagator_diag(p, 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            propagator_diag(params(0.5), 1.0)

    def test_ep_instability_demonstration(self):
        p = params(0.9999)
        ref = propagator_direct(p, 3.0).matrix
        fac = disentangle(p, 3.0, 0.01)
        dis = rel_frobenius(propagator_disentangled(p, fac, 3.0).matrix, ref)
        diag = rel_frobenius(_diag(p, 3.0), ref)
        assert diag >= 1e2 * dis

    @pytest.mark.xfail(strict=True, reason="at gamma=0.99, t=5 the similarity transform still agrees with the "
                                           "reference to ~1e-13; the degradation only appears closer to the EP")
    def test_diag_deviation_example_at_099(self):
        p = params(0.99)
        assert rel_frobenius(_diag(p, 5.0), propagator_direct(p, 5.0).matrix) > 1e-3


class TestDisentangle:
    def test_hermitian_limit(self):
        fac = disentangle(params(0.0, v=1.3), 10.0, 0.1)
        assert np.max(np.abs(fac.f)) < 1e-12 and np.max(np.abs(fac.g)) < 1e-12
        assert_allclose(fac.h, 2 * 1.3 * fac.times, atol=1e-9)

    def test_invariants(self, factors_09):
        factors_09.check()
        assert factors_09.f[0] == factors_09.g[0] == factors_09.h[0] == 0.0

    def test_h_at_multiples_of_period(self, factors_09):
        for n in range(1, 5):
            _, _, h = factors_09.at(n * T_09)
            assert abs(h - 2 * math.pi * n) < 1e-6

    def test_f_g_periodic(self, factors_09):
        t = np.linspace(0, 31.0 - T_09, 400)
        a, b = factors_09.at(t), factors_09.at(t + T_09)
        assert np.max(np.abs(a[:2] - b[:2])) < 1e-6

    def test_stroboscopic_slope(self, factors_09):
        n = np.arange(0, 5)
        h = factors_09.at(n * T_09)[2]
        slope = np.polyfit(n * T_09, h, 1)[0]
        assert abs(slope - 2 * math.sqrt(1 - 0.81)) < 1e-8

    def test_near_ep_regression(self):
        fac = disentangle(params(1 - 1e-6), 30.0, 0.01)
        fac.check()

    def test_out_of_range_request(self, factors_09):
        with pytest.raises(ValueError):
            factors_09.at(40.0)

    @pytest.mark.parametrize("t_max,dt", [(0, 0.1), (1, 0), (-1, 0.1)])
    def test_rejects_bad_grid(self, t_max, dt):
        with pytest.raises(ValueError):
            disentangle(params(0.3), t_max, dt)

    def test_blow_up_reports_time(self):
        with pytest.raises(IntegrationError) as err:
            disentangle(params(6.0, spin=10), 2000.0, 1.0)
        assert math.isfinite(err.value.last_time) or math.isnan(err.value.last_time)


class TestDisentangledPropagator:
    def test_identity_at_zero(self, factors_09):
        U = propagator_disentangled(params(0.9), factors_09, 0.0)
        assert U.method is Method.DISENTANGLE
        assert np.max(np.abs(U.matrix - np.eye(21))) < 1e-12

    @pytest.mark.parametrize("t", [1.0, 5.0, 10.0])
    def test_matches_direct(self, factors_09, t):
        p = params(0.9)
        assert rel_frobenius(propagator_disentangled(p, factors_09, t).matrix, propagator_direct(p, t).matrix) < 1e-8

    @pytest.mark.parametrize("gamma", [0.99, 0.999])
    def test_stable_near_ep(self, gamma):
        p = params(gamma)
        fac = disentangle(p, 5.0, 0.01)
        U = propagator_disentangled(p, fac, 5.0).matrix
        assert np.all(np.isfinite(U))
        assert rel_frobenius(U, propagator_direct(p, 5.0).matrix) < 1e-6

    def test_unitary_in_hermitian_limit(self):
        p = params(0.0)
        fac = disentangle(p, 4.0, 0.1)
        for U in (propagator_disentangled(p, fac, 3.3).matrix, propagator_diag(p, 3.3).matrix,
                  propagator_direct(p, 3.3).matrix):
            assert np.max(np.abs(U.conj().T @ U - np.eye(21))) < 1e-10


TRIANGLE_TIMES = (0.0, 0.37, 2.5, 7.3, 15.0, 22.2, 30.0)


@pytest.mark.parametrize("gamma", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_method_triangle_disentangled(gamma):
    p = params(gamma)
    fac = disentangle(p, 30.0, 0.01)
    for t in TRIANGLE_TIMES:
        ref = propagator_direct(p, t).matrix
        assert rel_frobenius(propagator_disentangled(p, fac, t).matrix, ref) < 1e-8


@pytest.mark.parametrize("gamma", [0.1, 0.3, 0.5, 0.7])
def test_method_triangle_diag(gamma):
    p = params(gamma)
    for t in TRIANGLE_TIMES:
        assert rel_frobenius(_diag(p, t), propagator_direct(p, t).matrix) < 1e-6


@pytest.mark.parametrize("t", [1.0, 5.0, 10.0, 30.0])
def test_method_triangle_diag_near_ep(t):
    p = params(0.9)
    assert rel_frobenius(_diag(p, t), propagator_direct(p, t).matrix) < 1e-6


@pytest.mark.xfail(strict=True, reason="exp(rSy) M exp(-rSy) in double carries ~eps*exp(2rS) = 6e-4 relative "
                                       "error wherever U(t) is O(1), e.g. t=0 and t=nT, at gamma=0.9")
@pytest.mark.parametrize("t", [0.0, T_09])
def test_method_triangle_diag_where_u_is_small(t):
    p = params(0.9)
    assert rel_frobenius(_diag(p, t), propagator_direct(p, t).matrix) < 1e-6


def test_broken_phase_attractor():
    from ptspin.linalg import matrix_exponential

    p = params(1.2)
    sys = p.system
    target = matrix_exponential(p.alpha * sys.sy) @ dicke_state(sys, -10)
    target /= np.linalg.norm(target)
    overlaps = []
    for t in (1.0, 4.0, 15.0):
        for psi0 in (coherent_state(sys, THETA0, PHI0), dicke_state(sys, 3)):
            out = propagator_direct(p, t).matrix @ psi0
            overlaps.append(abs(np.vdot(target, out / np.linalg.norm(out))) ** 2)
    assert overlaps[-1] > 1 - 1e-10 and overlaps[-2] > 1 - 1e-10
    assert overlaps[0] < overlaps[-2]


class TestDeformationCoherence:
    def test_coherent_input_small_gamma(self, spin10):
        overlap, th, ph = deformation_coherence(params(1e-6), coherent_state(spin10, 1.0, 2.0))
        assert overlap > 1 - 1e-9

    def test_dicke_becomes_coherent_on_y_axis(self, spin10):
        overlap, th, ph = deformation_coherence(params(0.99), dicke_state(spin10, 4))
        assert overlap > 0.99
        assert abs(th - math.pi / 2) < 0.1 and abs(ph + math.pi / 2) < 0.1

    def test_monotone_in_gamma(self, spin10):
        vals = [deformation_coherence(params(g), dicke_state(spin10, 4))[0] for g in (0.2, 0.5, 0.9, 0.99)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
