import csv

import mpmath
import numpy as np
import pytest
import scipy.integrate

from predictorlab import DomainError, PredictorGains, Plant, SimConfig, discrete_map, expm, lyapunov_certificate_discrete
from predictorlab.errors import ConfigurationError
from predictorlab.stability import (
    chi_decay_slope,
    find_min_stable_T,
    lemma1_integral,
    lemma1_residual,
    lyapunov_sequence_check,
    write_sweep_csv,
    xi_recursion_check,
    z_envelope_check,
)

from conftest import A, B, K, L, X0, paper_setup, run

pytestmark = pytest.mark.filterwarnings("ignore:t_end < D")

H = A - L


def charpoly_radius(M):
    """Spectral radius from Faddeev-LeVerrier coefficients and mpmath root finding."""
    n = M.shape[0]
    mpmath.mp.dps = 50
    Mm = mpmath.matrix(M.tolist())
    coeffs = [mpmath.mpf(1)]
    Mk = mpmath.zeros(n, n)
    eye = mpmath.eye(n)
    for k in range(1, n + 1):
        Mk = Mm * (Mk + coeffs[-1] * eye)
        coeffs.append(-sum(Mk[i, i] for i in range(n)) / k)
    roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=200)
    return float(max(abs(r) for r in roots))


class TestDiscreteMap:
    def test_paper_values(self):
        plant, gains, _ = paper_setup(1.0, 5.0)
        dmap = discrete_map(plant, gains)
        assert dmap.M.shape == (4, 4)
        assert dmap.rho == pytest.approx(charpoly_radius(dmap.M), rel=1e-6)
        assert dmap.rho == pytest.approx(np.abs(np.linalg.eigvals(dmap.M)).max(), rel=1e-6)
        assert dmap.rho < 1.0

    def test_paper_values_scenario2(self):
        plant, gains, _ = paper_setup(3.0, 30.0)
        dmap = discrete_map(plant, gains)
        assert dmap.rho == pytest.approx(charpoly_radius(dmap.M), rel=1e-6)
        assert dmap.rho < 1.0

    def test_alternative_form_of_G2(self):
        # G2 = exp(H (T - D)) exp(A (D + T)) - exp(H T) exp(A T)
        plant, gains, _ = paper_setup(1.0, 5.0)
        dmap = discrete_map(plant, gains)
        other = expm(H, 4.0) @ expm(A, 6.0) - expm(H, 5.0) @ expm(A, 5.0)
        np.testing.assert_allclose(dmap.G2, other, rtol=1e-12, atol=1e-12 * np.abs(other).max())

    def test_zero_L_collapses(self):
        plant, _, _ = paper_setup(1.0, 5.0)
        dmap = discrete_map(plant, PredictorGains(K, np.zeros((2, 2)), 5.0))
        np.testing.assert_allclose(dmap.G2, 0.0, atol=1e-13)
        np.testing.assert_allclose(dmap.G1, -expm(A, 5.0), rtol=1e-14)

    def test_commuting_gain_collapses(self):
        # L = c I commutes with A: exp(-H D) exp(A D) = exp(c D) I
        plant, _, _ = paper_setup(1.0, 5.0)
        c = 0.7
        dmap = discrete_map(plant, PredictorGains(K, c * np.eye(2), 5.0))
        np.testing.assert_allclose(dmap.G1, -np.exp(-c * 4.0) * expm(A, 5.0), rtol=1e-12)
        np.testing.assert_allclose(dmap.G2, (np.exp(-c * 4.0) - np.exp(-c * 5.0)) * expm(A, 10.0), rtol=1e-12)

    def test_exponential_order_matters(self):
        # swapping factors in G1 gives a different matrix: H and A do not commute
        plant, gains, _ = paper_setup(1.0, 5.0)
        dmap = discrete_map(plant, gains)
        swapped = -expm(A, 1.0) @ expm(H, 4.0)
        assert np.abs(dmap.G1 - swapped).max() > 1e-3

    @pytest.mark.parametrize("T", [1.0, 0.5])
    def test_T_not_above_D(self, T):
        plant, gains, _ = paper_setup(1.0, 5.0)
        with pytest.raises(DomainError):
            discrete_map(plant, gains, T)


class TestIntegralIdentity:
    def test_zero_gain(self):
        assert lemma1_residual(A, np.zeros((2, 2)), 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_scalar(self):
        # int_0^1 e^{-(a-l)s} l e^{as} ds = e^{l} - 1
        a, l = 0.3, 1.2
        val = lemma1_integral([[a]], [[l]], 1.0, 2000)
        assert val[0, 0] == pytest.approx(np.expm1(l), rel=1e-12)
        assert lemma1_residual([[a]], [[l]], 1.0, 2000) <= 1e-10

    @pytest.mark.parametrize("D", [1.0, 3.0])
    def test_paper_gains(self, D):
        closed = expm(H, -D) @ expm(A, D) - np.eye(2)
        assert lemma1_residual(A, L, D) <= 1e-8 * (1 + np.linalg.norm(closed, 2))

    def test_against_adaptive_quadrature(self):
        def entry(s, i, j):
            return (expm(H, -s) @ L @ expm(A, s))[i, j]
        ref = np.array([[scipy.integrate.quad(entry, 0, 1, args=(i, j), epsabs=1e-13)[0]
                         for j in range(2)] for i in range(2)])
        np.testing.assert_allclose(lemma1_integral(A, L, 1.0, 2000), ref, rtol=1e-10, atol=1e-12)

    def test_opposite_sign_is_wrong(self):
        integral = lemma1_integral(A, L, 1.0, 2000)
        flipped = np.eye(2) - expm(H, -1.0) @ expm(A, 1.0)
        assert np.linalg.norm(integral - flipped, 2) > 1.0

    def test_simpson_fourth_order(self):
        coarse = lemma1_residual(A, L, 20.0, 1000)
        fine = lemma1_residual(A, L, 20.0, 2000)
        assert 12.0 <= coarse / fine <= 20.0

    def test_panel_validation(self):
        with pytest.raises(ValueError):
            lemma1_residual(A, L, 1.0, 500)
        with pytest.raises(ValueError):
            lemma1_integral(A, L, 1.0, 1001)


class TestLyapunovCertificate:
    def test_zero_coefficients(self):
        plant, gains, _ = paper_setup(1.0, 5.0)
        dmap = discrete_map(plant, gains)
        zero = type(dmap)(np.zeros((2, 2)), np.zeros((2, 2)), dmap.M, dmap.rho, dmap.T, dmap.D)
        cert = lyapunov_certificate_discrete(zero)
        assert cert.alpha == 0.0 and cert.beta == 0.5 and cert.valid

    def test_structure(self):
        plant, gains, _ = paper_setup(1.0, 20.0)
        cert = lyapunov_certificate_discrete(discrete_map(plant, gains))
        np.testing.assert_allclose(cert.N, cert.N.T, atol=1e-15 * np.abs(cert.N).max())
        assert cert.alpha == pytest.approx(np.linalg.norm(cert.N, 2), rel=1e-8)
        assert cert.valid and cert.beta == pytest.approx((1 + cert.alpha) / 2)

    def test_valid_certificate_implies_decrease(self):
        # alpha < 1 makes P - M^T P M positive definite, hence rho < 1
        plant, gains, _ = paper_setup(1.0, 20.0)
        dmap = discrete_map(plant, gains)
        cert = lyapunov_certificate_discrete(dmap)
        gap = cert.P - dmap.M.T @ cert.P @ dmap.M
        assert np.linalg.eigvalsh((gap + gap.T) / 2).min() > 0
        assert dmap.rho < 1

    def test_short_period_recorded(self):
        plant, gains, _ = paper_setup(1.0, 1.1)
        cert = lyapunov_certificate_discrete(discrete_map(plant, gains))
        assert np.isfinite(cert.alpha) and not cert.valid


@pytest.fixture(scope="module")
def plant_gains():
    plant, gains, _ = paper_setup(1.0, 5.0)
    return plant, gains


class TestSweep:
    def test_spectral_T0(self, plant_gains):
        result = find_min_stable_T(*plant_gains, 1.5, 40.0, 0.5, "spectral")
        assert result.T0 == pytest.approx(4.5)
        assert len(result.table) == 78

    def test_lyapunov_T0_is_not_below_spectral(self, plant_gains):
        spec = find_min_stable_T(*plant_gains, 1.5, 40.0, 0.5, "spectral")
        lyap = find_min_stable_T(*plant_gains, 1.5, 40.0, 0.5, "lyapunov")
        assert lyap.T0 == pytest.approx(5.0)
        assert lyap.T0 >= spec.T0
        for row in lyap.table:
            if row.alpha < 1:
                assert row.rho < 1

    def test_rho_matches_charpoly_on_grid(self, plant_gains):
        result = find_min_stable_T(*plant_gains, 1.5, 12.0, 1.5, "spectral")
        for row in result.table:
            M = discrete_map(*plant_gains, row.T).M
            assert row.rho == pytest.approx(charpoly_radius(M), rel=1e-6)

    def test_not_found(self, plant_gains):
        result = find_min_stable_T(*plant_gains, 2.0, 4.0, 0.5, "spectral")
        assert result.T0 is None
        assert all(r.rho >= 1 for r in result.table)

    def test_bad_grid(self, plant_gains):
        with pytest.raises(DomainError):
            find_min_stable_T(*plant_gains, 1.0, 4.0, 0.5)
        with pytest.raises(DomainError):
            find_min_stable_T(*plant_gains, 2.0, 4.0, 0.0)

    def test_csv(self, plant_gains, tmp_path):
        result = find_min_stable_T(*plant_gains, 1.5, 6.0, 0.5)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(result, path)
        rows = list(csv.reader(open(path, newline="")))
        assert rows[0] == ["T", "rho", "alpha", "beta", "spectral_stable", "lyapunov_valid"]
        assert len(rows) == len(result.table) + 1
        assert {r[4] for r in rows[1:]} == {"true", "false"}

    @pytest.mark.parametrize("T, grows", [(3.0, True), (8.0, False)])
    def test_simulation_agrees_with_spectral_verdict(self, T, grows):
        plant, gains, config = paper_setup(1.0, T, 1e-3, 1.0 + 10 * T)
        trace = run(plant, gains, config)
        slope = chi_decay_slope(xi_recursion_check(trace, discrete_map(plant, gains)))
        assert (slope > 0) == grows


class TestSampledSequence:
    def test_samples_equal_pulled_back_z(self, scenario1):
        # eps(m T) = 0 after the reset, so xi = exp(-A D) z at t = m T + D
        plant, gains, trace = scenario1
        xi = xi_recursion_check(trace, discrete_map(plant, gains))
        idx = np.arange(trace.delay_steps, len(trace), trace.reset_steps)
        np.testing.assert_allclose(xi.samples, trace.z[idx] @ expm(A, -1.0).T, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(xi.times, [1, 6, 11, 16, 21, 26, 31, 36])

    def test_recursion_scenario1(self, scenario1):
        plant, gains, trace = scenario1
        xi = xi_recursion_check(trace, discrete_map(plant, gains))
        assert xi.max_residual <= 5e-2
        assert chi_decay_slope(xi) < 0

    def test_recursion_scenario2(self, scenario2):
        plant, gains, trace = scenario2
        xi = xi_recursion_check(trace, discrete_map(plant, gains))
        assert xi.max_residual <= 5e-2

    def test_too_short(self):
        plant, gains, config = paper_setup(1.0, 5.0, 1e-3, 8.0)
        with pytest.raises(ConfigurationError) as info:
            xi_recursion_check(run(plant, gains, config), discrete_map(plant, gains))
        assert info.value.field == "sim.t_end"

    def test_mismatched_map(self, scenario1):
        plant, gains, trace = scenario1
        with pytest.raises(ValueError):
            xi_recursion_check(trace, discrete_map(plant, gains, 6.0))

    def test_lyapunov_sequence_scenario1(self, scenario1):
        plant, gains, trace = scenario1
        dmap = discrete_map(plant, gains)
        report = lyapunov_sequence_check(xi_recursion_check(trace, dmap), lyapunov_certificate_discrete(dmap))
        assert report.applicable and report.passed
        assert report.ratios.max() < report.beta

    def test_lyapunov_sequence_not_applicable(self):
        plant, gains, config = paper_setup(1.0, 4.5, 1e-3, 30.0)
        dmap = discrete_map(plant, gains)
        cert = lyapunov_certificate_discrete(dmap)
        assert dmap.rho < 1 and not cert.valid
        report = lyapunov_sequence_check(xi_recursion_check(run(plant, gains, config), dmap), cert)
        assert not report.applicable and report.passed is None
        assert report.message == "condition not applicable"


class TestEnvelope:
    def test_scenario1(self, scenario1):
        plant, _, trace = scenario1
        report = z_envelope_check(trace, plant)
        # ||exp(A s)|| grows monotonically on [0, 5], so E = ||exp(5 A)||
        assert report.envelope == pytest.approx(np.linalg.norm(expm(A, 5.0), 2), rel=1e-10)
        assert report.passed and report.worst_ratio <= 1.0
        assert report.intervals == 8

    def test_stable_plant_envelope_is_one(self):
        plant, gains, config = paper_setup(1.0, 5.0, 1e-3, 16.0, L_gain=np.eye(2), A_mat=-np.eye(2))
        trace = run(plant, gains, config)
        report = z_envelope_check(trace, plant)
        assert report.envelope == pytest.approx(1.0, abs=1e-14)
        assert report.passed

    def test_zero_trace(self):
        plant, gains, _ = paper_setup(1.0, 5.0)
        trace = run(plant, gains, SimConfig(1e-3, 16.0, [0.0, 0.0]))
        report = z_envelope_check(trace, plant)
        assert report.passed and report.worst_ratio == 0.0

    def test_detects_violation(self, scenario1):
        plant, _, trace = scenario1
        assert not z_envelope_check(trace, plant, T=0.1).passed
