"""Reaction terms: builtin constants, certification, branch ensembles."""

import numpy as np
import pytest

from attractorlab.nonlinearity import (BranchPolicy, CertificateViolation,
                                       NonlinearTerm, NumericAntiderivative,
                                       builtin, certify, make_ensemble, mollify)

ALL_BUILTINS = [
    builtin("cubic"),
    builtin("chafee_infante", lam=5.0),
    builtin("remark3", k=2401.0),
    builtin("root_branch", c=1.0),
]


class TestBuiltins:
    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown nonlinearity"):
            builtin("quintic")

    def test_cubic_constants_are_exact(self):
        t = builtin("cubic")
        assert (t.C1, t.C2, t.alpha) == (1.0, 0.0, 1.0)
        u = np.linspace(-5, 5, 101)
        np.testing.assert_allclose(t.f(u) * u, u**4, rtol=1e-15)

    def test_chafee_constants(self):
        # f(u)u = u^4 - 5u^2 >= u^4/2 - 12.5 with equality at u^2 = 5
        t = builtin("chafee_infante", lam=5.0)
        assert t.alpha == 0.5 and t.C2 == 12.5
        u = np.sqrt(5.0)
        assert t.f(u) * u - (t.alpha * u**4 - t.C2) == pytest.approx(0.0, abs=1e-12)

    def test_remark3_amplitude(self):
        # perturbation amplitude is k^{-1/2}: for k = 2401 that is 1/49
        k = 2401.0
        t = builtin("remark3", k=k)
        u = np.linspace(-2, 2, 41)
        np.testing.assert_allclose(t.f(u), u**3 - np.sin(k * u) / 49.0,
                                   atol=1e-15)

    def test_remark3_slope_at_origin(self):
        t = builtin("remark3", k=2401.0)
        assert t.fprime(np.array([0.0]))[0] == -49.0

    def test_lipschitz_flags(self):
        assert builtin("cubic").lipschitz_flag == "globally-one-sided-Lipschitz"
        assert builtin("chafee_infante", lam=2.0).lipschitz_flag == "globally-one-sided-Lipschitz"
        assert builtin("root_branch").lipschitz_flag == "non-Lipschitz"

    def test_all_builtins_are_odd(self):
        for t in ALL_BUILTINS:
            assert t.is_odd()

    def test_antiderivative_vanishes_at_zero(self):
        for t in ALL_BUILTINS:
            assert t.F(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)


class TestCertify:
    def test_cubic_passes(self):
        cert = certify(builtin("cubic"), (-10.0, 10.0))
        assert cert.passed
        assert all(s >= 0 for s, _ in cert.slacks.values())

    def test_sign_violation_detected(self):
        # f(u) = -u cannot satisfy f(u)u >= u^4 - 1 at large |u|
        bad = NonlinearTerm("antidissipative", f=lambda u: -u,
                            F=lambda u: -u * u / 2.0,
                            C1=1.0, C2=1.0, alpha=1.0, D1=1.0, D2=1.0, delta=1e-6)
        with pytest.raises(CertificateViolation) as err:
            certify(bad, (-100.0, 100.0))
        assert err.value.inequality == "dissipation_f"
        assert abs(err.value.u) > 1.0

    def test_minimum_sample_count(self):
        with pytest.raises(ValueError, match="10\\^3"):
            certify(builtin("cubic"), samples=100)

    @pytest.mark.parametrize("R", [1.0, 10.0, 100.0, 1000.0])
    def test_constants_survive_range_extension(self, R):
        for t in ALL_BUILTINS:
            assert certify(t, (-R, R)).passed

    def test_remark3_uniform_in_k(self):
        # one constant tuple passes for every tested k
        ref = builtin("remark3", k=1.0)
        consts = (ref.C1, ref.C2, ref.alpha, ref.D1, ref.D2, ref.delta)
        for k in (1.0, 10.0, 100.0, 1000.0, 10000.0):
            t = builtin("remark3", k=k)
            assert (t.C1, t.C2, t.alpha, t.D1, t.D2, t.delta) == consts
            assert certify(t, (-50.0, 50.0)).passed

    def test_antiderivative_matches_f(self):
        # numeric derivative of F agrees with f to 1e-6 relative
        u = np.linspace(-8.0, 8.0, 2001)
        eps = 1e-6 * (1.0 + np.abs(u))
        for t in ALL_BUILTINS:
            dF = (t.F(u + eps) - t.F(u - eps)) / (2 * eps)
            scale = 1.0 + np.abs(t.f(u))
            assert np.max(np.abs(dF - t.f(u)) / scale) < 1e-6

    def test_certificate_report_shape(self):
        cert = certify(builtin("chafee_infante", lam=5.0))
        doc = cert.to_dict()
        assert doc["passed"] and set(doc["slacks"]) == {
            "growth_f", "dissipation_f", "growth_F", "dissipation_F"}
        assert doc["constants"]["alpha"] == 0.5


class TestNumericAntiderivative:
    def test_matches_closed_form(self):
        F = NumericAntiderivative(lambda u: u**3)
        u = np.array([-2.3, -0.7, 0.0, 0.4, 1.9, 3.2])
        np.testing.assert_allclose(F(u), u**4 / 4.0, atol=1e-9)

    def test_table_reuse_is_consistent(self):
        F = NumericAntiderivative(np.cos)
        first = F(np.array([1.0]))[0]
        second = F(np.array([1.0]))[0]
        assert first == second == pytest.approx(np.sin(1.0), abs=1e-10)


class TestMollify:
    def test_outside_radius_unchanged(self):
        t = builtin("root_branch")
        m = mollify(t, 0.01)
        u = np.array([-2.0, -0.5, 0.5, 2.0])
        np.testing.assert_array_equal(m.f(u), t.f(u))

    def test_linear_through_kink(self):
        t = builtin("root_branch")
        m = mollify(t, 0.01)
        u = np.linspace(-0.01, 0.01, 21)
        slopes = np.diff(m.f(u)) / np.diff(u)
        assert np.allclose(slopes, slopes[0])
        assert m.f(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)

    def test_antiderivative_consistent(self):
        m = mollify(builtin("root_branch"), 0.05)
        u = np.linspace(-1.0, 1.0, 801)
        eps = 1e-7
        dF = (m.F(u + eps) - m.F(u - eps)) / (2 * eps)
        np.testing.assert_allclose(dF, m.f(u), atol=1e-5)
        assert m.F(np.array([0.0]))[0] == 0.0

    def test_flagged_lipschitz(self):
        assert mollify(builtin("root_branch"), 0.01).lipschitz_flag == \
            "globally-one-sided-Lipschitz"


class TestBranchPolicy:
    def test_mode_none_forces_size_one(self):
        with pytest.raises(ValueError, match="size 1"):
            BranchPolicy("none", size=3)

    def test_stochastic_needs_seed(self):
        with pytest.raises(ValueError, match="seed"):
            BranchPolicy("perturbation-ensemble", size=4, amplitude=1e-9)

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ValueError, match="amplitude"):
            BranchPolicy("perturbation-ensemble", size=2, amplitude=-1.0, seed=1)


class TestMakeEnsemble:
    def test_mode_none_returns_exactly_u0(self, rng):
        u0 = rng.standard_normal(8)
        members = make_ensemble(u0, BranchPolicy())
        assert len(members) == 1
        np.testing.assert_array_equal(members[0].state, u0)

    def test_perturbation_amplitudes(self, rng):
        u0 = rng.standard_normal(8)
        policy = BranchPolicy("perturbation-ensemble", size=8, amplitude=1e-9, seed=3)
        members = make_ensemble(u0, policy)
        assert len(members) == 8
        np.testing.assert_array_equal(members[0].state, u0)
        for mem in members[1:]:
            assert np.linalg.norm(mem.state - u0) == pytest.approx(1e-9, rel=1e-12)

    def test_seed_reproducibility_bit_exact(self, rng):
        u0 = rng.standard_normal(8)
        policy = BranchPolicy("perturbation-ensemble", size=5, amplitude=1e-6, seed=11)
        a = make_ensemble(u0, policy)
        b = make_ensemble(u0, policy)
        for x, y in zip(a, b):
            assert x.state.tobytes() == y.state.tobytes()

    def test_distinct_seeds_differ(self, rng):
        u0 = rng.standard_normal(8)
        a = make_ensemble(u0, BranchPolicy("perturbation-ensemble", 3, 1e-6, seed=1))
        b = make_ensemble(u0, BranchPolicy("perturbation-ensemble", 3, 1e-6, seed=2))
        assert not np.array_equal(a[1].state, b[1].state)

    def test_mollified_selection_radii(self):
        t = builtin("root_branch")
        policy = BranchPolicy("mollified-selection", size=4, amplitude=1e-6)
        members = make_ensemble(np.zeros(4), t and policy, base_term=t)
        assert members[0].term is None
        radii = [m.term.params["mollification_radius"] for m in members[1:]]
        assert radii == sorted(radii) and len(set(radii)) == 3
