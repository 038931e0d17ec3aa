"""Stationary states of -u_xx + f(u) = h in the Galerkin space.

Roots of the mode-space residual lam_j a_j + (P f(u))_j - h_j are located by
Newton's method with an analytic (or finite-difference) Jacobian, a
multi-start sweep over low-mode amplitudes, and deflation of already-found
roots so repeated solves are repelled from them.  Each accepted root is
re-certified undeflated, its linearized spectrum is computed, and the set
is deduplicated and checked for the sign symmetry of odd terms.

Residuals are measured in the discrete dual norm (sum lam_j^{-1} r_j^2)^{1/2}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nonlinearity import NonlinearTerm
from .spectral import SpectralBasis, SpectralField, _coerce_h, make_basis, project

__all__ = [
    "Equilibrium",
    "EquilibriumSet",
    "NewtonError",
    "SolverFailure",
    "newton_solve",
    "find_all",
    "linearize",
    "check_regularity",
    "MultiStartStrategy",
    "DEDUP_TOL",
    "HYPERBOLICITY_TOL",
]

DEDUP_TOL = 1e-6
HYPERBOLICITY_TOL = 1e-8
NEWTON_TOL = 1e-10


class NewtonError(RuntimeError):
    """Newton iteration diverged or ran out of iterations."""

    def __init__(self, message, last_iterate=None, residual_history=()):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_history = tuple(residual_history)


class SolverFailure(RuntimeError):
    """The search produced no stationary state; a solver defect, since the
    stationary set is never empty for admissible terms."""


@dataclass(frozen=True)
class Equilibrium:
    """A certified stationary state with its linearized spectrum."""

    field: SpectralField
    residual_h: float
    spectrum: np.ndarray
    unstable_dim: int
    h2_norm: float
    near_zero_modes: tuple = ()

    def __post_init__(self):
        spec = np.array(self.spectrum, dtype=float)
        spec.setflags(write=False)
        object.__setattr__(self, "spectrum", spec)
        if np.any(np.diff(spec) < 0):
            raise ValueError("spectrum must be sorted ascending")

    @property
    def hyperbolic(self):
        return len(self.near_zero_modes) == 0

    def to_dict(self):
        return {
            "coefficients": [float(c) for c in self.field.coeffs],
            "residual_h": self.residual_h,
            "spectrum": [float(s) for s in self.spectrum],
            "unstable_dim": self.unstable_dim,
            "h2_norm": self.h2_norm,
            "l2_norm": self.field.norm_l2(),
            "h1_norm": self.field.norm_h1(),
            "sup_norm": self.field.norm_sup(),
            "near_zero_modes": list(self.near_zero_modes),
        }


@dataclass(frozen=True)
class EquilibriumSet:
    """Deduplicated stationary states plus the search log."""

    members: tuple
    dedup_tol: float
    search_log: tuple

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    def states(self):
        return [eq.field.coeffs for eq in self.members]

    def nearest(self, field: SpectralField, metric: str = "l2"):
        """(index, distance) of the member closest to the given field."""
        best, bd = -1, np.inf
        for i, eq in enumerate(self.members):
            diff = eq.field - field
            d = diff.norm_h1() if metric == "h1" else diff.norm_l2()
            if d < bd:
                best, bd = i, d
        return best, bd

    def to_dict(self):
        return {
            "members": [eq.to_dict() for eq in self.members],
            "dedup_tol": self.dedup_tol,
            "search_log": list(self.search_log),
        }


def _residual(a, basis, term, hc):
    vals = basis.values @ a
    return basis.eigenvalues * a + basis.proj @ term.f(vals) - hc


def _dual_norm(r, basis):
    return float(np.sqrt(np.sum(r * r / basis.eigenvalues)))


def _jacobian(a, basis, term):
    fp = term.derivative(basis.values @ a)
    return np.diag(basis.eigenvalues) + basis.proj @ (fp[:, None] * basis.values)


def _deflation_factor(a, deflated, shift=1.0, power=2):
    """Product of shifted inverse-distance factors and its gradient."""
    M = 1.0
    grad = np.zeros_like(a)
    log_terms = []
    for ak in deflated:
        d2 = float(np.sum((a - ak) ** 2))
        if d2 == 0.0:
            return np.inf, grad
        mk = d2 ** (-power / 2.0) + shift
        log_terms.append((mk, -power * (a - ak) * d2 ** (-power / 2.0 - 1.0)))
        M *= mk
    for mk, dmk in log_terms:
        grad += M / mk * dmk
    return M, grad


def newton_solve(f: NonlinearTerm, h, basis: SpectralBasis, u_init,
                 tol: float = NEWTON_TOL, max_iter: int = 80,
                 deflated=()) -> Equilibrium:
    """Newton iteration from u_init; accepts on the undeflated dual residual.

    Far from a root the step is damped pseudo-transiently, (I/delta + J) in
    place of J with delta adapted to the residual decrease, which follows
    the parabolic flow and so converges from physically meaningful starts
    (positive low-amplitude data reach the positive state, not the trivial
    one).  Near a root the damping is dropped and convergence is the plain
    quadratic Newton rate.  For merely continuous f the Jacobian falls back
    to centered finite differences (step 1e-6*(1+|u|)); convergence is then
    not guaranteed and the multi-start sweep compensates.
    """
    hc = _coerce_h(h, basis)
    a = np.array(u_init.coeffs if isinstance(u_init, SpectralField) else u_init, dtype=float)
    history = []
    eye = np.eye(basis.m)
    delta = 0.1
    switch = 1e-2

    def deflate(r, J, a):
        if not deflated:
            return r, J
        M, gradM = _deflation_factor(a, deflated)
        if not np.isfinite(M):
            raise NewtonError("iterate collided with a deflated root", a, history)
        return M * r, M * J + np.outer(r, gradM)

    r = _residual(a, basis, f, hc)
    rn = _dual_norm(r, basis)
    for _ in range(max_iter):
        history.append(rn)
        if rn < tol:
            return _certify_root(a, basis, f, hc, rn)
        rd, J = deflate(r, _jacobian(a, basis, f), a)
        pure = rn < switch * (1.0 + history[0])
        try:
            if pure:
                da = np.linalg.solve(J, -rd)
            else:
                da = np.linalg.solve(eye / delta + J, -rd)
        except np.linalg.LinAlgError as exc:
            raise NewtonError(f"singular Jacobian: {exc}", a, history) from exc
        a_new = a + da
        if not np.all(np.isfinite(a_new)) or np.linalg.norm(a_new) > 1e6:
            raise NewtonError("iteration diverged", a, history)
        r_new = _residual(a_new, basis, f, hc)
        rn_new = _dual_norm(r_new, basis)
        if pure and rn_new > rn:
            # Newton overshoot at the damping boundary: retry damped
            pure = False
            da = np.linalg.solve(eye / delta + J, -rd)
            a_new = a + da
            r_new = _residual(a_new, basis, f, hc)
            rn_new = _dual_norm(r_new, basis)
        # the residual is not monotone along the transient flow; accept
        # moderate growth and shrink the pseudo-step only on wild steps
        if pure or rn_new <= 4.0 * rn:
            a, r, rn = a_new, r_new, rn_new
            delta = min(delta * 2.0, 1e6)
        else:
            delta = max(delta / 4.0, 1e-8)
    raise NewtonError(f"no convergence in {max_iter} iterations "
                      f"(last residual {history[-1]:.3e})", a, history)


def _certify_root(a, basis, term, hc, rn):
    field = SpectralField(a, basis)
    spectrum, near_zero = _spectrum(a, basis, term)
    unstable = int(np.sum(spectrum < -HYPERBOLICITY_TOL))
    return Equilibrium(field, rn, spectrum, unstable, field.norm_h2(), near_zero)


def _spectrum(a, basis, term):
    M = _jacobian(a, basis, term)
    M = 0.5 * (M + M.T)
    mu = np.linalg.eigvalsh(M)
    near_zero = tuple(int(i) for i in np.nonzero(np.abs(mu) < HYPERBOLICITY_TOL)[0])
    return mu, near_zero


def linearize(eq: Equilibrium, f: NonlinearTerm) -> np.ndarray:
    """Ascending spectrum of the linearization at eq restricted to the span.

    Eigenvalues within HYPERBOLICITY_TOL of zero are flagged on the returned
    Equilibrium as near-zero (non-hyperbolic) modes and excluded from the
    unstable count.
    """
    mu, _ = _spectrum(eq.field.coeffs, eq.field.basis, f)
    return mu


@dataclass(frozen=True)
class MultiStartStrategy:
    """Low-mode starting points plus deflation rounds.

    Single-mode seeds c*w_j, j <= modes, stay inside the flow-invariant
    symmetry subspaces, where the damped solver settles on the mode-j
    states; the small two-mode grid covers mixed roots, and deflation
    rounds repel repeats so later sweeps can reach anything left.
    """

    amplitudes: tuple = (-2.0, -0.5, 0.5, 2.0)
    modes: int = 4
    pair_amplitudes: tuple = (-1.5, 1.5)
    deflation_rounds: int = 2
    include_zero: bool = True
    include_forcing: bool = True


def find_all(f: NonlinearTerm, h, basis: SpectralBasis,
             strategy: MultiStartStrategy | None = None,
             dedup_tol: float = DEDUP_TOL,
             newton_tol: float = NEWTON_TOL) -> EquilibriumSet:
    """All stationary states reachable by the multi-start + deflation sweep.

    Starts cover a grid over the first `modes` coefficient amplitudes;
    deflation rounds repeat every start while repelling found roots.  When
    f is odd and h = 0, the negation of every root is verified and added.
    An empty result raises SolverFailure (the stationary set is provably
    non-empty, so emptiness is always a search defect).
    """
    strategy = strategy or MultiStartStrategy()
    hc = _coerce_h(h, basis)
    log = []
    found: list[Equilibrium] = []

    def try_add(eq, origin):
        for other in found:
            if (eq.field - other.field).norm_l2() <= dedup_tol:
                return False
        found.append(eq)
        log.append(f"accepted root |u|={eq.field.norm_l2():.6g} from {origin}")
        return True

    starts = []
    if strategy.include_zero:
        starts.append(("zero", np.zeros(basis.m)))
    if strategy.include_forcing and np.any(hc != 0):
        starts.append(("forcing", hc / basis.eigenvalues))
    for j in range(min(strategy.modes, basis.m)):
        for amp in strategy.amplitudes:
            a0 = np.zeros(basis.m)
            a0[j] = amp
            starts.append((f"mode{j + 1}({amp:+g})", a0))
    if basis.m >= 2:
        for c1 in strategy.pair_amplitudes:
            for c2 in strategy.pair_amplitudes:
                a0 = np.zeros(basis.m)
                a0[0], a0[1] = c1, c2
                starts.append((f"pair({c1:+g},{c2:+g})", a0))

    for rnd in range(strategy.deflation_rounds + 1):
        deflated = [eq.field.coeffs for eq in found] if rnd > 0 else []
        for origin, a0 in starts:
            try:
                eq = newton_solve(f, hc, basis, a0, tol=newton_tol, deflated=deflated)
            except NewtonError as exc:
                log.append(f"round {rnd} start {origin}: {exc}")
                continue
            try_add(eq, f"round {rnd} start {origin}")

    if f.is_odd() and not np.any(hc != 0):
        for eq in list(found):
            mirror = -eq.field.coeffs
            if all((np.linalg.norm(mirror - o.field.coeffs)) > dedup_tol for o in found):
                try:
                    meq = newton_solve(f, hc, basis, mirror, tol=newton_tol)
                    try_add(meq, "odd-symmetry mirror")
                except NewtonError as exc:
                    log.append(f"mirror start failed: {exc}")

    if not found:
        raise SolverFailure(
            "no stationary state found; the stationary set is non-empty for "
            "admissible terms, so this is a solver failure (refine the start "
            "grid or tolerances)"
        )
    found.sort(key=lambda eq: (round(eq.field.norm_l2(), 9),
                               tuple(np.round(eq.field.coeffs[:4], 9))))
    return EquilibriumSet(tuple(found), dedup_tol, tuple(log))


@dataclass(frozen=True)
class RegularityReport:
    """Boundedness of the stationary set and its stability under refinement."""

    max_h1: float
    max_h2: float
    max_sup: float
    refined_max_h1: float | None
    refined_max_h2: float | None
    relative_change_h2: float | None

    @property
    def stable_under_refinement(self):
        return self.relative_change_h2 is not None and self.relative_change_h2 < 0.01


def check_regularity(eqset: EquilibriumSet, f: NonlinearTerm, h=None,
                     refine: bool = True) -> RegularityReport:
    """Max H1 / H2 norms over the set, re-solved at doubled mode count.

    The refinement pass prolongs each member into the doubled basis,
    re-converges Newton, and reports the relative change of the largest
    H2 norm; below 1% counts as stable.
    """
    if len(eqset) == 0:
        raise ValueError("empty equilibrium set")
    max_h1 = max(eq.field.norm_h1() for eq in eqset)
    max_h2 = max(eq.h2_norm for eq in eqset)
    max_sup = max(eq.field.norm_sup() for eq in eqset)
    if not refine:
        return RegularityReport(max_h1, max_h2, max_sup, None, None, None)

    basis = eqset[0].field.basis
    fine = make_basis(2 * basis.m)
    hc = _coerce_h(h, basis)
    h_fine = np.zeros(fine.m)
    h_fine[: basis.m] = hc
    r_h1 = 0.0
    r_h2 = 0.0
    for eq in eqset:
        a0 = np.zeros(fine.m)
        a0[: basis.m] = eq.field.coeffs
        ref = newton_solve(f, h_fine, fine, a0)
        r_h1 = max(r_h1, ref.field.norm_h1())
        r_h2 = max(r_h2, ref.h2_norm)
    denom = max(max_h2, 1e-30)
    rel = abs(r_h2 - max_h2) / denom if max_h2 > 0 else (0.0 if r_h2 == 0 else np.inf)
    return RegularityReport(max_h1, max_h2, max_sup, r_h1, r_h2, rel)
