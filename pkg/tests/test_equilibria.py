"""Stationary-set search: Newton, deflation, spectra, regularity."""

import numpy as np
import pytest

from attractorlab.equilibria import (MultiStartStrategy, NewtonError,
                                     SolverFailure, check_regularity, find_all,
                                     linearize, newton_solve)
from attractorlab.nonlinearity import builtin
from attractorlab.spectral import SpectralField, make_basis
from conftest import ZERO_TERM
from oracles import shooting_coefficients, shooting_equilibria

CUBIC = builtin("cubic")
CHAFEE5 = builtin("chafee_infante", lam=5.0)


@pytest.fixture(scope="module")
def chafee5_set(basis32):
    return find_all(CHAFEE5, None, basis32)


class TestNewton:
    def test_cubic_trivial_root(self, basis8):
        eq = newton_solve(CUBIC, None, basis8, np.zeros(8))
        assert eq.field.norm_l2() == 0.0
        assert eq.residual_h < 1e-10

    def test_linear_problem_solves_exactly(self, basis8):
        # -u'' = w1 has the solution w1 (first eigenvalue is 1)
        h = np.zeros(8)
        h[0] = 1.0
        eq = newton_solve(ZERO_TERM, h, basis8, np.zeros(8))
        np.testing.assert_allclose(eq.field.coeffs, h, atol=1e-12)

    def test_chafee_positive_state_vs_shooting(self, basis32):
        seed = np.zeros(32)
        seed[0] = 0.5
        eq = newton_solve(CHAFEE5, None, basis32, seed)
        assert eq.field.norm_sup() <= np.sqrt(5.0)
        slopes = shooting_equilibria(CHAFEE5.f, s_max=6.0)
        positive = [sol for s, sol in slopes if s > 3.0]
        oracle = shooting_coefficients(positive[0], 32, basis32.nodes, basis32.proj)
        assert np.linalg.norm(eq.field.coeffs - oracle) < 1e-6

    def test_divergence_reports_history(self, basis8):
        seed = np.zeros(8)
        seed[0] = 1.0
        with pytest.raises(NewtonError) as err:
            newton_solve(CHAFEE5, None, basis8, seed, max_iter=1)
        assert len(err.value.residual_history) == 1

    def test_residual_reproducible(self, basis16):
        seed = np.zeros(16)
        seed[0] = 3.0
        eq = newton_solve(CHAFEE5, None, basis16, seed)
        again = newton_solve(CHAFEE5, None, basis16, eq.field.coeffs)
        assert abs(again.residual_h - eq.residual_h) < 1e-12


class TestFindAll:
    def test_chafee5_count(self, chafee5_set):
        assert len(chafee5_set) == 5

    def test_chafee5_norm_pattern(self, chafee5_set):
        # zero, a symmetric pair, and a larger symmetric pair
        nrm = sorted(round(eq.field.norm_l2(), 6) for eq in chafee5_set)
        assert nrm[0] == 0.0
        assert nrm[1] == nrm[2] and nrm[3] == nrm[4] and nrm[2] < nrm[3]

    def test_subcritical_has_only_zero(self, basis16):
        eqset = find_all(builtin("chafee_infante", lam=0.5), None, basis16)
        assert len(eqset) == 1
        assert eqset[0].field.norm_l2() == 0.0

    def test_cubic_has_only_zero(self, basis8):
        eqset = find_all(CUBIC, None, basis8)
        assert len(eqset) == 1

    @pytest.mark.parametrize("lam,expected", [(0.5, 1), (2.0, 3), (5.0, 5), (9.5, 7)])
    def test_count_matches_shooting_ladder(self, basis16, lam, expected):
        term = builtin("chafee_infante", lam=lam)
        assert len(shooting_equilibria(term.f, s_max=2.5 * lam + 2)) == expected
        eqset = find_all(term, None, basis16)
        assert len(eqset) == expected

    def test_members_match_shooting_states(self, chafee5_set, basis32):
        oracle = shooting_equilibria(CHAFEE5.f, s_max=6.0)
        assert len(oracle) == 5
        coeffs = [shooting_coefficients(sol, 32, basis32.nodes, basis32.proj)
                  for _, sol in oracle]
        for eq in chafee5_set:
            dist = min(np.linalg.norm(eq.field.coeffs - c) for c in coeffs)
            assert dist < 1e-6

    def test_odd_symmetry(self, chafee5_set):
        states = [eq.field.coeffs for eq in chafee5_set]
        for s in states:
            assert any(np.linalg.norm(s + t) < 1e-8 for t in states)

    def test_pairwise_separation(self, chafee5_set):
        states = chafee5_set.states()
        for i in range(len(states)):
            for j in range(i + 1, len(states)):
                assert np.linalg.norm(states[i] - states[j]) > chafee5_set.dedup_tol

    def test_empty_search_is_a_failure(self, basis8):
        bare = MultiStartStrategy(amplitudes=(), pair_amplitudes=(),
                                  include_zero=False, include_forcing=False,
                                  deflation_rounds=0)
        with pytest.raises(SolverFailure):
            find_all(CUBIC, None, basis8, strategy=bare)

    def test_search_log_populated(self, chafee5_set):
        assert any("accepted root" in line for line in chafee5_set.search_log)


class TestLinearize:
    def test_remark3_spectrum_is_shifted_squares(self, basis16):
        k = 2401.0
        term = builtin("remark3", k=k)
        eq = newton_solve(term, None, basis16, np.zeros(16))
        expected = np.sort(np.arange(1, 17) ** 2 - 49.0)
        np.testing.assert_allclose(eq.spectrum, expected, atol=1e-10)
        assert eq.unstable_dim == 6

    def test_chafee_at_zero(self, basis16):
        eq = newton_solve(CHAFEE5, None, basis16, np.zeros(16))
        assert eq.unstable_dim == 2
        np.testing.assert_allclose(eq.spectrum[:3], [-4.0, -1.0, 4.0], atol=1e-10)

    def test_cubic_at_zero_is_stable(self, basis8):
        eq = newton_solve(CUBIC, None, basis8, np.zeros(8))
        assert eq.unstable_dim == 0
        np.testing.assert_allclose(eq.spectrum, np.arange(1, 9) ** 2, atol=1e-10)

    def test_resonant_mode_flagged_not_counted(self, basis16):
        # k = 16: sqrt(k) = 4 equals the second eigenvalue; that mode is
        # non-hyperbolic and must not enter the unstable count
        eq = newton_solve(builtin("remark3", k=16.0), None, basis16, np.zeros(16))
        assert eq.unstable_dim == 1
        assert len(eq.near_zero_modes) == 1

    def test_linearize_matches_stored_spectrum(self, chafee5_set):
        for eq in chafee5_set:
            np.testing.assert_allclose(linearize(eq, CHAFEE5), eq.spectrum,
                                       atol=1e-12)

    def test_spectrum_sorted(self, chafee5_set):
        for eq in chafee5_set:
            assert np.all(np.diff(eq.spectrum) >= 0)


class TestRegularity:
    def test_zero_set_has_zero_norms(self, basis8):
        eqset = find_all(CUBIC, None, basis8)
        report = check_regularity(eqset, CUBIC, refine=False)
        assert report.max_h1 == 0.0 and report.max_h2 == 0.0

    def test_chafee_sup_below_phase_plane_bound(self, chafee5_set):
        report = check_regularity(chafee5_set, CHAFEE5, refine=False)
        assert report.max_sup <= np.sqrt(5.0)

    def test_stable_under_mode_doubling(self, basis16):
        eqset = find_all(CHAFEE5, None, basis16)
        report = check_regularity(eqset, CHAFEE5)
        assert report.stable_under_refinement
        assert report.relative_change_h2 < 0.01


class TestFixedPointConsistency:
    def test_every_member_is_a_flow_fixed_point(self, basis16):
        from attractorlab.msflow import is_fixed_point
        from attractorlab.spectral import make_bundle
        eqset = find_all(CHAFEE5, None, basis16)
        bundle = make_bundle(basis16, CHAFEE5, dt=1e-3, output_stride=10)
        for eq in eqset:
            assert is_fixed_point(bundle, eq.field.coeffs, horizon=1.0, tol=1e-6)
