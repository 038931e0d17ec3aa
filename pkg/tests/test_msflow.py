"""Trajectory calculus: distances, gluing, translation, inclusion, fixed
points, backward completion."""

import numpy as np
import pytest

from attractorlab.msflow import (GluingError, PartialCompletionError,
                                 PreconditionError, SetOfStates,
                                 TimeRangeError, TrajectorySample,
                                 backward_complete, check_semiflow_inclusion,
                                 concatenate, hausdorff_semidist,
                                 is_fixed_point, translate)
from attractorlab.nonlinearity import BranchPolicy, builtin
from attractorlab.spectral import SpectralField, integrate, make_bundle
from oracles import pairwise_semidist

CUBIC = builtin("cubic")
CHAFEE5 = builtin("chafee_infante", lam=5.0)


def const_traj(z, t0=0.0, t1=1.0, n=11):
    times = np.linspace(t0, t1, n)
    return TrajectorySample(times, np.tile(z, (n, 1)),
                            "two-sided" if t0 < 0 else "forward")


class TestTrajectorySample:
    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            TrajectorySample([0.0, 0.0, 1.0], np.zeros((3, 2)))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            TrajectorySample([0.0, 1.0], np.zeros((3, 2)))

    def test_two_sided_must_span_zero(self):
        with pytest.raises(ValueError, match="span t = 0"):
            TrajectorySample([1.0, 2.0], np.zeros((2, 2)), "two-sided")

    def test_interpolation(self):
        traj = TrajectorySample([0.0, 1.0], np.array([[0.0], [2.0]]))
        assert traj.state_at(0.5)[0] == 1.0
        with pytest.raises(TimeRangeError):
            traj.state_at(2.0)

    def test_states_immutable(self):
        traj = const_traj(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            traj.states[0, 0] = 7.0


class TestHausdorffSemidist:
    def test_identity(self, rng):
        z = rng.standard_normal(4)
        s = SetOfStates((z,))
        assert hausdorff_semidist(s, s) == 0.0

    def test_one_sided(self, rng):
        z = rng.standard_normal(4)
        far = z + 100.0
        assert hausdorff_semidist(SetOfStates((z,)), SetOfStates((z, far))) == 0.0
        assert hausdorff_semidist(SetOfStates((z, far)), SetOfStates((z,))) == \
            pytest.approx(np.linalg.norm(far - z))

    def test_against_pairwise_oracle(self, rng):
        a = [rng.standard_normal(6) for _ in range(10)]
        b = a[2:5]
        got = hausdorff_semidist(SetOfStates(tuple(a)), SetOfStates(tuple(b)))
        assert got == pytest.approx(pairwise_semidist(a, b), abs=1e-14)

    def test_h1_weights(self, rng):
        wts = np.array([1.0, 4.0, 9.0])
        a = [rng.standard_normal(3) for _ in range(5)]
        b = [rng.standard_normal(3) for _ in range(3)]
        got = hausdorff_semidist(SetOfStates(tuple(a), "h1", wts),
                                 SetOfStates(tuple(b), "h1", wts))
        assert got == pytest.approx(pairwise_semidist(a, b, wts), abs=1e-14)

    def test_empty_set_rejected(self):
        with pytest.raises(PreconditionError, match="non-empty"):
            hausdorff_semidist(SetOfStates(()), SetOfStates((np.zeros(2),)))

    def test_metric_tag_mismatch(self):
        a = SetOfStates((np.zeros(2),), "l2")
        b = SetOfStates((np.zeros(2),), "h1", np.ones(2))
        with pytest.raises(PreconditionError, match="metric tags differ"):
            hausdorff_semidist(a, b)


class TestConcatenate:
    def test_constant_glue(self):
        z = np.array([0.5, -1.0])
        glued = concatenate(const_traj(z), const_traj(z), 1.0)
        assert glued.t1 == pytest.approx(2.0)
        np.testing.assert_array_equal(glued.states[-1], z)

    def test_endpoint_mismatch_raises(self):
        z = np.array([0.0, 0.0])
        bad = const_traj(z + 1.0)
        with pytest.raises(GluingError) as err:
            concatenate(const_traj(z), bad, 1.0)
        assert err.value.gap == pytest.approx(np.sqrt(2.0))

    def test_split_run_matches_single_run(self, basis8, rng):
        u0 = SpectralField(0.5 * rng.standard_normal(8), basis8)
        full = integrate(u0, 2.0, 1e-3, CUBIC, output_stride=10)[0]
        first = integrate(u0, 1.0, 1e-3, CUBIC, output_stride=10)[0]
        mid = SpectralField(first.state_at(1.0), basis8)
        second = integrate(mid, 1.0, 1e-3, CUBIC, output_stride=10)[0]
        glued = concatenate(first, second, 1.0)
        np.testing.assert_allclose(glued.times, full.times, atol=1e-12)
        np.testing.assert_allclose(glued.states, full.states, atol=1e-12)

    def test_associativity(self, basis8, rng):
        u0 = SpectralField(0.4 * rng.standard_normal(8), basis8)
        t1 = integrate(u0, 0.5, 1e-3, CUBIC, output_stride=5)[0]
        m1 = SpectralField(t1.state_at(0.5), basis8)
        t2 = integrate(m1, 0.5, 1e-3, CUBIC, output_stride=5)[0]
        m2 = SpectralField(t2.state_at(0.5), basis8)
        t3 = integrate(m2, 0.5, 1e-3, CUBIC, output_stride=5)[0]
        left = concatenate(concatenate(t1, t2, 0.5), t3, 1.0)
        right = concatenate(t1, concatenate(t2, t3, 0.5), 0.5)
        np.testing.assert_allclose(left.times, right.times, atol=1e-12)
        np.testing.assert_allclose(left.states, right.states, atol=1e-12)


class TestTranslate:
    def test_zero_shift_is_identity(self):
        traj = const_traj(np.array([1.0]))
        out = translate(traj, 0.0)
        np.testing.assert_array_equal(out.times, traj.times)

    def test_constant_stays_constant(self):
        z = np.array([2.0, 3.0])
        out = translate(const_traj(z), 0.5)
        assert np.all(out.states == z)

    def test_pointwise_shift(self, basis8, rng):
        u0 = SpectralField(0.5 * rng.standard_normal(8), basis8)
        traj = integrate(u0, 1.0, 1e-3, CUBIC, output_stride=10)[0]
        out = translate(traj, 0.3)
        for t in out.times[:5]:
            np.testing.assert_allclose(out.state_at(t), traj.state_at(t + 0.3),
                                       atol=1e-12)

    def test_composition(self, basis8, rng):
        u0 = SpectralField(0.5 * rng.standard_normal(8), basis8)
        traj = integrate(u0, 1.0, 1e-3, CUBIC, output_stride=10)[0]
        once = translate(translate(traj, 0.2), 0.3)
        both = translate(traj, 0.5)
        np.testing.assert_allclose(once.times, both.times, atol=1e-12)
        np.testing.assert_allclose(once.states, both.states, atol=1e-12)

    def test_out_of_span(self):
        with pytest.raises(TimeRangeError):
            translate(const_traj(np.zeros(2)), 2.0)

    def test_translate_then_glue_reproduces_tail(self, basis8, rng):
        u0 = SpectralField(0.5 * rng.standard_normal(8), basis8)
        traj = integrate(u0, 1.0, 1e-3, CUBIC, output_stride=10)[0]
        tail = translate(traj, 0.5)
        head = traj.restricted(0.0, 0.5)
        glued = concatenate(head, tail, 0.5)
        np.testing.assert_allclose(glued.states, traj.states, atol=1e-12)


class TestSemiflowInclusion:
    def test_t_zero_trivial(self, basis8, rng):
        bundle = make_bundle(basis8, CUBIC, dt=1e-3, output_stride=10)
        x0 = 0.5 * rng.standard_normal(8)
        rep = check_semiflow_inclusion(bundle, x0, 0.0, 0.3, tol=1e-12)
        assert rep.passed and rep.semidist == 0.0

    def test_single_valued_flow(self, basis8, rng):
        bundle = make_bundle(basis8, CUBIC, dt=1e-3, output_stride=10)
        x0 = 0.5 * rng.standard_normal(8)
        rep = check_semiflow_inclusion(bundle, x0, 0.2, 0.3, tol=1e-6)
        assert rep.passed
        assert rep.semidist < 1e-10

    def test_branching_inclusion_with_spread(self, basis8):
        policy = BranchPolicy("perturbation-ensemble", size=6, amplitude=1e-9, seed=5)
        bundle = make_bundle(basis8, builtin("root_branch"), dt=1e-3,
                             branch_policy=policy, output_stride=10)
        rep = check_semiflow_inclusion(bundle, np.zeros(8), 2.0, 1.0, tol=1e-3)
        assert rep.passed
        # the direct sample set at t+s has macroscopic diameter
        direct = [traj.state_at(3.0) for traj in bundle.run(np.zeros(8), 3.0)]
        diam = max(np.linalg.norm(a - b) for a in direct for b in direct)
        assert diam > 1e-3

    def test_negative_times_rejected(self, basis8):
        bundle = make_bundle(basis8, CUBIC, dt=1e-3)
        with pytest.raises(PreconditionError):
            check_semiflow_inclusion(bundle, np.zeros(8), -1.0, 0.0)


class TestFixedPoint:
    def test_origin_of_unforced_flow(self, basis8):
        bundle = make_bundle(basis8, CUBIC, dt=1e-3, output_stride=10)
        assert is_fixed_point(bundle, np.zeros(8), horizon=1.0, tol=1e-10)

    def test_computed_equilibrium(self, basis16):
        from attractorlab.equilibria import newton_solve
        seed = np.zeros(16)
        seed[0] = 3.0
        phi1 = newton_solve(CHAFEE5, None, basis16, seed)
        bundle = make_bundle(basis16, CHAFEE5, dt=1e-3, output_stride=10)
        assert is_fixed_point(bundle, phi1.field.coeffs, horizon=2.0, tol=1e-6)

    def test_perturbed_equilibrium_departs(self, basis16):
        # a large push along the unstable direction of the origin escapes
        z = np.zeros(16)
        z[0] = 0.5
        bundle = make_bundle(basis16, CHAFEE5, dt=1e-3, output_stride=10)
        assert not is_fixed_point(bundle, z, horizon=4.0, tol=1e-3)

    def test_monotone_in_tol(self, basis16):
        z = np.zeros(16)
        z[0] = 1e-5
        bundle = make_bundle(basis16, CHAFEE5, dt=1e-3, output_stride=10)
        results = [is_fixed_point(bundle, z, horizon=1.0, tol=tol)
                   for tol in (1e-8, 1e-4, 1e-1)]
        for weaker, stronger in zip(results, results[1:]):
            assert (not weaker) or stronger

    def test_horizon_must_be_positive(self, basis8):
        bundle = make_bundle(basis8, CUBIC, dt=1e-3)
        with pytest.raises(PreconditionError):
            is_fixed_point(bundle, np.zeros(8), horizon=0.0)


class TestBackwardComplete:
    def test_equilibrium_gives_constant_two_sided(self, basis8):
        bundle = make_bundle(basis8, CUBIC, dt=1e-3, output_stride=10)
        attractor = SetOfStates((np.zeros(8),))
        comp = backward_complete(bundle, attractor, np.zeros(8), depth=2, tol=1e-8)
        traj = comp.trajectory
        assert traj.kind == "two-sided"
        assert traj.t0 == pytest.approx(-2.0) and traj.t1 == pytest.approx(1.0)
        assert np.all(traj.states == 0.0)

    def test_heteroclinic_backward_endpoint_approaches_source(self, basis16):
        # states along the connecting orbit from the origin: completing one of
        # them backwards must walk towards the origin
        u0 = np.zeros(16)
        u0[0] = 1e-5
        bundle = make_bundle(basis16, CHAFEE5, dt=1e-3, output_stride=100)
        orbit = bundle.run(u0, 6.0)[0]
        members = tuple(orbit.states[i] for i in range(0, len(orbit.times), 2))
        attractor = SetOfStates(members)
        z = orbit.state_at(3.0)
        comp = backward_complete(bundle, attractor, z, depth=2, tol=1e-6, chunk=1.0)
        start_dist = np.linalg.norm(z)
        end_dist = np.linalg.norm(comp.trajectory.states[0])
        assert end_dist < 0.2 * start_dist

    def test_far_state_rejected(self, basis8):
        bundle = make_bundle(basis8, CUBIC, dt=1e-3, output_stride=10)
        attractor = SetOfStates((np.zeros(8),))
        far = np.ones(8)
        with pytest.raises(PreconditionError):
            backward_complete(bundle, attractor, far, tol=1e-3)

    def test_partial_completion_reported(self, basis16):
        # attractor sample too sparse to find a preimage of a transient state
        u0 = np.zeros(16)
        u0[0] = 1e-5
        bundle = make_bundle(basis16, CHAFEE5, dt=1e-3, output_stride=100)
        orbit = bundle.run(u0, 6.0)[0]
        z = orbit.state_at(4.0)
        attractor = SetOfStates((z,))   # only the state itself
        with pytest.raises(PartialCompletionError) as err:
            backward_complete(bundle, attractor, z, depth=2, tol=1e-6, chunk=1.0)
        assert err.value.depth_reached == 0

    def test_junctions_satisfy_inclusion(self, basis16):
        u0 = np.zeros(16)
        u0[0] = 1e-5
        bundle = make_bundle(basis16, CHAFEE5, dt=1e-3, output_stride=100)
        orbit = bundle.run(u0, 6.0)[0]
        members = tuple(orbit.states[i] for i in range(0, len(orbit.times)))
        attractor = SetOfStates(members)
        z = orbit.state_at(3.0)
        comp = backward_complete(bundle, attractor, z, depth=2, tol=1e-6, chunk=1.0)
        traj = comp.trajectory
        for tj in comp.junction_times:
            y = traj.state_at(tj)
            fwd = bundle.run(y, 0.5)[0].state_at(0.5)
            np.testing.assert_allclose(fwd, traj.state_at(tj + 0.5), atol=1e-6)
