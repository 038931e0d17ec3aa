"""Set-valued trajectory machinery.

A dynamical system is represented here by a bundle: a rule that produces one
or more forward trajectories from any initial state.  Everything in this
module is generic over the state space -- states are 1-D float arrays and
distances are weighted Euclidean norms, so the same operations serve
coefficient vectors of any discretization.

The operations mirror the standard calculus of solution sets: translation
and concatenation of trajectories, sampled inclusion checks for the
two-parameter composition law of the induced set-valued evolution map,
a finite fixed-point test on a dyadic time grid, and backward completion of
a state lying on an attractor sample into a two-sided trajectory.

All containers are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "TrajectorySample",
    "TrajectoryBundle",
    "SetOfStates",
    "GluingError",
    "TimeRangeError",
    "PreconditionError",
    "PartialCompletionError",
    "InclusionReport",
    "BackwardCompletion",
    "hausdorff_semidist",
    "concatenate",
    "translate",
    "check_semiflow_inclusion",
    "is_fixed_point",
    "backward_complete",
    "GLUING_TOL",
]

# Absolute L2 gluing tolerance; far below integrator truncation error at
# desk scales.
GLUING_TOL = 1e-8

_TIME_ATOL = 1e-12


class GluingError(ValueError):
    """Concatenation endpoints do not match within tolerance."""

    def __init__(self, gap, tol):
        super().__init__(f"endpoint gap {gap:.3e} exceeds gluing tolerance {tol:.3e}")
        self.gap = gap
        self.tol = tol


class TimeRangeError(ValueError):
    """Requested time lies outside the stored span of a trajectory."""


class PreconditionError(ValueError):
    """An operation was invoked outside its domain of validity."""


def _as_readonly(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TrajectorySample:
    """A time-stamped sequence of states, forward-only or two-sided.

    times are strictly increasing model-time stamps (seconds); states is the
    matching (n_times, dim) array.  A two-sided sample must bracket t = 0.
    """

    times: np.ndarray
    states: np.ndarray
    kind: str = "forward"

    def __post_init__(self):
        times = _as_readonly(self.times)
        states = _as_readonly(np.atleast_2d(self.states))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        if times.ndim != 1 or len(times) == 0:
            raise ValueError("times must be a non-empty 1-D sequence")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        if states.shape[0] != len(times):
            raise ValueError("states length must equal times length")
        if self.kind not in ("forward", "two-sided"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.kind == "two-sided" and not (times[0] <= _TIME_ATOL and times[-1] >= -_TIME_ATOL):
            raise ValueError("a two-sided trajectory must span t = 0")

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t1(self):
        return float(self.times[-1])

    @property
    def dim(self):
        return self.states.shape[1]

    def state_at(self, t):
        """State at time t: exact stamp if stored, else linear interpolation."""
        times = self.times
        if t < times[0] - _TIME_ATOL or t > times[-1] + _TIME_ATOL:
            raise TimeRangeError(f"t={t} outside stored span [{times[0]}, {times[-1]}]")
        i = np.searchsorted(times, t)
        for j in (i - 1, i):
            if 0 <= j < len(times) and abs(times[j] - t) <= _TIME_ATOL:
                return self.states[j]
        lo = i - 1
        w = (t - times[lo]) / (times[lo + 1] - times[lo])
        return (1 - w) * self.states[lo] + w * self.states[lo + 1]

    def restricted(self, t_lo, t_hi):
        mask = (self.times >= t_lo - _TIME_ATOL) & (self.times <= t_hi + _TIME_ATOL)
        if not mask.any():
            raise TimeRangeError(f"no stored stamps inside [{t_lo}, {t_hi}]")
        return TrajectorySample(self.times[mask], self.states[mask], "forward")


@dataclass(frozen=True)
class TrajectoryBundle:
    """Rule producing >= 1 forward trajectories from any initial state.

    generator(x0, horizon) must return samples that all start at x0; the set
    of generated samples is closed under time translation up to resampling
    tolerance.  dt is the generator's native step; operations snap requested
    times to this grid so split runs reproduce single runs exactly.
    """

    generator: Callable[[np.ndarray, float], Sequence[TrajectorySample]]
    dt: float
    branch_policy: object = None
    description: str = ""

    def run(self, x0, horizon):
        samples = list(self.generator(np.asarray(x0, dtype=float), float(horizon)))
        if not samples:
            raise RuntimeError("bundle generator returned no trajectories")
        return samples

    def snap(self, t):
        """Nearest non-negative point of the output-time grid."""
        return max(round(t / self.dt), 0) * self.dt


@dataclass(frozen=True)
class SetOfStates:
    """Finite sample of states with a tagged metric.

    metric_tag is "l2" or "h1"; for "h1" the coefficient weights (for the
    squared distance) must be supplied by the caller, e.g. the operator
    eigenvalues of a spectral discretization.
    """

    members: tuple
    metric_tag: str = "l2"
    weights: np.ndarray | None = None

    def __post_init__(self):
        members = tuple(_as_readonly(m) for m in self.members)
        object.__setattr__(self, "members", members)
        if self.metric_tag not in ("l2", "h1"):
            raise ValueError(f"unknown metric tag {self.metric_tag!r}")
        if self.metric_tag == "h1":
            if self.weights is None:
                raise ValueError("h1 metric needs coefficient weights")
            object.__setattr__(self, "weights", _as_readonly(self.weights))

    def __len__(self):
        return len(self.members)

    def distance(self, a, b):
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.metric_tag == "h1":
            return float(np.sqrt(np.sum(self.weights * d * d)))
        return float(np.linalg.norm(d))

    def distance_to(self, x):
        """inf over members of the tagged-metric distance to x."""
        if not self.members:
            raise PreconditionError("empty state set")
        return min(self.distance(x, m) for m in self.members)


def hausdorff_semidist(a: SetOfStates, b: SetOfStates) -> float:
    """sup over a of inf over b of the tagged-metric distance (one-sided)."""
    if len(a) == 0 or len(b) == 0:
        raise PreconditionError("hausdorff_semidist requires non-empty sets")
    if a.metric_tag != b.metric_tag:
        raise PreconditionError(
            f"metric tags differ: {a.metric_tag!r} vs {b.metric_tag!r}"
        )
    return max(b.distance_to(x) for x in a.members)


def concatenate(first: TrajectorySample, second: TrajectorySample, s: float,
                tol: float = GLUING_TOL, weights=None) -> TrajectorySample:
    """Glue second onto first at time s.

    first must cover [0, s] and second must start where first ends:
    the distance between first(s) and second(0) is required to be <= tol.
    The result equals first on [0, s] and the shifted second on [s, end].
    """
    if first.t0 > _TIME_ATOL or first.t1 < s - _TIME_ATOL:
        raise TimeRangeError(f"first trajectory does not cover [0, {s}]")
    if abs(second.t0) > _TIME_ATOL:
        raise TimeRangeError("second trajectory must start at t = 0")
    end_state = first.state_at(s)
    start_state = second.states[0]
    d = end_state - start_state
    gap = float(np.sqrt(np.sum(weights * d * d))) if weights is not None \
        else float(np.linalg.norm(d))
    if gap > tol:
        raise GluingError(gap, tol)

    head_mask = first.times <= s - _TIME_ATOL
    times = np.concatenate([first.times[head_mask], [s], s + second.times[1:]])
    states = np.vstack([first.states[head_mask], [end_state], second.states[1:]])
    return TrajectorySample(times, states, "forward")


def translate(traj: TrajectorySample, tau: float) -> TrajectorySample:
    """Time-shifted trajectory t -> traj(t + tau) on the stored stamps."""
    if tau < traj.t0 - _TIME_ATOL or tau > traj.t1 + _TIME_ATOL:
        raise TimeRangeError(
            f"tau={tau} outside stored span [{traj.t0}, {traj.t1}]"
        )
    mask = traj.times >= tau - _TIME_ATOL
    times = traj.times[mask] - tau
    kind = "two-sided" if times[0] <= _TIME_ATOL <= times[-1] + _TIME_ATOL and traj.kind == "two-sided" else "forward"
    if times[0] < -_TIME_ATOL:
        kind = "two-sided"
    return TrajectorySample(times, traj.states[mask], kind)


@dataclass(frozen=True)
class InclusionReport:
    """Result of a sampled two-parameter composition check.

    semidist is the one-sided distance from the direct samples at t+s into
    the two-stage samples; strictness_defect is the reverse semidistance,
    reported but never asserted (equality of the two sets is not claimed).
    """

    t: float
    s: float
    tol: float
    semidist: float
    strictness_defect: float
    per_sample: tuple

    @property
    def passed(self):
        return self.semidist <= self.tol


def check_semiflow_inclusion(bundle: TrajectoryBundle, x0, t: float, s: float,
                             samples: int = 1, tol: float = 1e-6,
                             weights=None) -> InclusionReport:
    """Sampled check that states reachable in t+s are reachable in two stages.

    Times are snapped to the bundle's step grid.  For each direct sample at
    t+s the distance to the nearest two-stage sample is reported; the check
    passes iff all distances are <= tol.
    """
    if t < 0 or s < 0:
        raise PreconditionError("t and s must be non-negative")
    if samples < 1:
        raise PreconditionError("samples must be >= 1")
    t = bundle.snap(t)
    s = bundle.snap(s)
    x0 = np.asarray(x0, dtype=float)

    direct = [traj.state_at(t + s) for traj in bundle.run(x0, t + s)][:max(samples, 1)]

    stage1 = [traj.state_at(s) for traj in bundle.run(x0, s)]
    two_stage = []
    if t == 0.0:
        two_stage = list(stage1)
    else:
        for w in stage1:
            for traj in bundle.run(w, t):
                two_stage.append(traj.state_at(t))

    tag = "l2" if weights is None else "h1"
    direct_set = SetOfStates(tuple(direct), tag, weights)
    stage_set = SetOfStates(tuple(two_stage), tag, weights)
    dists = tuple(stage_set.distance_to(y) for y in direct)
    defect = hausdorff_semidist(stage_set, direct_set)
    return InclusionReport(t, s, tol, max(dists), defect, dists)


def _dyadic_times(horizon, checkpoints, dt):
    """Dyadic grid j * horizon / 2^n with spacing not finer than dt."""
    n = max(int(np.ceil(np.log2(max(checkpoints, 1)))), 0)
    while n > 0 and horizon / 2 ** n < dt:
        n -= 1
    return horizon * np.arange(2 ** n + 1) / 2 ** n


def is_fixed_point(bundle: TrajectoryBundle, z, horizon: float,
                   checkpoints: int = 64, tol: float = 1e-6,
                   weights=None) -> bool:
    """True iff some generated trajectory from z stays within tol of z.

    Closeness is tested on a dyadic grid of checkpoint times covering
    [0, horizon]; the grid never refines below the bundle's native step.
    """
    if horizon <= 0:
        raise PreconditionError("horizon must be positive")
    z = np.asarray(z, dtype=float)
    ts = _dyadic_times(horizon, checkpoints, bundle.dt)
    ref = SetOfStates((z,), "l2" if weights is None else "h1", weights)
    for traj in bundle.run(z, horizon):
        worst = max(ref.distance(traj.state_at(tc), z) for tc in ts)
        if worst <= tol:
            return True
    return False


class PartialCompletionError(RuntimeError):
    """Backward completion stalled before the requested depth."""

    def __init__(self, partial, achieved_span, depth_reached, best_gap):
        super().__init__(
            f"no preimage within tolerance at depth {depth_reached}; "
            f"achieved backward span {achieved_span:.6g} (best gap {best_gap:.3e})"
        )
        self.partial = partial
        self.achieved_span = achieved_span
        self.depth_reached = depth_reached
        self.best_gap = best_gap


@dataclass(frozen=True)
class BackwardCompletion:
    trajectory: TrajectorySample
    junction_times: tuple
    junction_gaps: tuple


def backward_complete(bundle: TrajectoryBundle, attractor: SetOfStates, z,
                      depth: int = 3, tol: float = 1e-3,
                      chunk: float = 1.0) -> BackwardCompletion:
    """Extend a state on an attractor sample into a two-sided trajectory.

    Working backwards in chunks, each step locates a sample point whose
    forward run lands on the current left endpoint within tol (shooting from
    the sample, never integrating backwards), then prepends that run.  The
    forward side is a plain run from z.  Raises PartialCompletionError with
    the partial trajectory when no preimage is found at some depth.
    """
    z = np.asarray(z, dtype=float)
    if attractor.distance_to(z) > tol:
        raise PreconditionError(
            f"state is {attractor.distance_to(z):.3e} from the attractor sample "
            f"(tolerance {tol:.3e})"
        )
    chunk = bundle.snap(chunk)
    if chunk <= 0:
        raise PreconditionError("chunk must exceed the bundle step")

    pieces = []       # backward chunks, most recent first
    gaps = []
    left = z
    for k in range(depth):
        best = None
        best_gap = np.inf
        for w in attractor.members:
            traj = bundle.run(w, chunk)[0]
            gap = attractor.distance(traj.state_at(chunk), left)
            if gap < best_gap:
                best, best_gap = traj, gap
        if best is None or best_gap > tol:
            achieved = k * chunk
            partial = _assemble_two_sided(bundle, z, pieces, chunk)
            raise PartialCompletionError(partial, achieved, k, best_gap)
        pieces.append(best)
        gaps.append(best_gap)
        left = best.states[0]

    traj = _assemble_two_sided(bundle, z, pieces, chunk)
    junctions = tuple(-k * chunk for k in range(len(pieces), 0, -1))
    return BackwardCompletion(traj, junctions, tuple(reversed(gaps)))


def _assemble_two_sided(bundle, z, pieces, chunk):
    times = []
    states = []
    for i, piece in enumerate(reversed(pieces)):
        offset = -(len(pieces) - i) * chunk
        keep = piece.times < chunk - _TIME_ATOL
        times.append(piece.times[keep] + offset)
        states.append(piece.states[keep])
    fwd = bundle.run(z, chunk)[0]
    times.append(fwd.times)
    states.append(fwd.states)
    return TrajectorySample(np.concatenate(times), np.vstack(states), "two-sided")
