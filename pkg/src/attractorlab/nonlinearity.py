"""Nonlinear reaction terms with certified growth and dissipation constants.

Every term carries the pair (f, F) together with constants witnessing

    |f(u)| <= C1*(1 + |u|^3),       f(u)*u >= alpha*u^4 - C2,
    |F(u)| <= D1*(1 + u^4),         F(u)   >= delta*u^4 - D2,

with F the antiderivative of f and F(0) = 0.  The constants are derived
analytically for the builtins and re-checked on demand by `certify`, which
samples the four inequalities on a dense grid and reports worst-case slack.

The branch policy lives here too: integrating a merely continuous f can be
genuinely set-valued, and the computable surrogate is an ensemble -- either
seeded small perturbations of the initial state or a ladder of mollified
selections of f near its non-Lipschitz points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

__all__ = [
    "NonlinearTerm",
    "BranchPolicy",
    "EnsembleMember",
    "CertificateViolation",
    "Certificate",
    "builtin",
    "certify",
    "make_ensemble",
    "mollify",
    "BUILTIN_NAMES",
]

ONE_SIDED_LIPSCHITZ = "globally-one-sided-Lipschitz"
NON_LIPSCHITZ = "non-Lipschitz"


@dataclass(frozen=True)
class NonlinearTerm:
    """A reaction term f with antiderivative F and certified constants."""

    name: str
    f: callable
    F: callable
    C1: float
    C2: float
    alpha: float
    D1: float
    D2: float
    delta: float
    lipschitz_flag: str = ONE_SIDED_LIPSCHITZ
    params: dict = field(default_factory=dict)
    fprime: callable = None

    def __post_init__(self):
        if self.alpha <= 0 or self.C1 <= 0 or self.delta <= 0 or self.D1 <= 0:
            raise ValueError("growth/dissipation constants C1, alpha, D1, delta must be positive")
        if self.C2 < 0 or self.D2 < 0:
            raise ValueError("offsets C2, D2 must be non-negative")
        f0 = float(np.asarray(self.F(np.array([0.0])))[0])
        if abs(f0) > 1e-12:
            raise ValueError(f"antiderivative must vanish at 0, got F(0)={f0}")

    def derivative(self, u):
        """f'(u); analytic when available, else centered finite differences."""
        u = np.asarray(u, dtype=float)
        if self.fprime is not None:
            return self.fprime(u)
        eps = 1e-6 * (1.0 + np.abs(u))
        return (self.f(u + eps) - self.f(u - eps)) / (2.0 * eps)

    def is_odd(self, probe=(0.37, 1.42, 3.9, 17.0)):
        u = np.array(probe)
        return bool(np.allclose(self.f(-u), -self.f(u), rtol=1e-12, atol=1e-12))


def _stationary_offset(scale_high, coeff_low, power_low):
    """max(0, -min_{s>=0} [scale_high*s^4 - coeff_low*s^power_low]).

    Smallest admissible offset making scale_high*u^4 - offset a lower bound
    for the quartic-minus-lower-power profile; stationary point in closed
    form.
    """
    if coeff_low <= 0:
        return 0.0
    s = (coeff_low * power_low / (4.0 * scale_high)) ** (1.0 / (4.0 - power_low))
    return max(0.0, coeff_low * s**power_low - scale_high * s**4)


def _cubic():
    return NonlinearTerm(
        name="cubic",
        f=lambda u: u**3,
        F=lambda u: u**4 / 4.0,
        fprime=lambda u: 3.0 * u**2,
        C1=1.0, C2=0.0, alpha=1.0,
        D1=0.25, D2=0.0, delta=0.25,
        lipschitz_flag=ONE_SIDED_LIPSCHITZ,
    )


def _chafee_infante(lam=5.0):
    lam = float(lam)
    if lam <= 0:
        raise ValueError("chafee_infante needs lam > 0")
    return NonlinearTerm(
        name="chafee_infante",
        f=lambda u: u**3 - lam * u,
        F=lambda u: u**4 / 4.0 - lam * u**2 / 2.0,
        fprime=lambda u: 3.0 * u**2 - lam,
        # f(u)u = u^4 - lam u^2 >= u^4/2 - lam^2/2 (minimum at u^2 = lam)
        C1=1.0 + lam, C2=lam * lam / 2.0, alpha=0.5,
        D1=(1.0 + lam) / 4.0, D2=lam * lam / 2.0, delta=0.125,
        lipschitz_flag=ONE_SIDED_LIPSCHITZ,
        params={"lam": lam},
    )


def _remark3(k=1.0):
    k = float(k)
    if k < 1:
        raise ValueError("remark3 needs k >= 1")
    rk = np.sqrt(k)
    return NonlinearTerm(
        name="remark3",
        f=lambda u: u**3 - np.sin(k * u) / rk,
        F=lambda u: u**4 / 4.0 + (np.cos(k * u) - 1.0) / (k * rk),
        fprime=lambda u: 3.0 * u**2 - rk * np.cos(k * u),
        # constants valid uniformly in k >= 1:
        #   |f| <= |u|^3 + 1, f(u)u >= u^4 - |u| >= u^4/2 - 3/(4*2^{1/3})
        C1=1.0, C2=0.6, alpha=0.5,
        D1=2.0, D2=2.0, delta=0.25,
        lipschitz_flag=ONE_SIDED_LIPSCHITZ,
        params={"k": k},
    )


def _root_branch(c=1.0):
    c = float(c)
    if c <= 0:
        raise ValueError("root_branch needs c > 0")

    def f(u):
        return u**3 - c * np.sign(u) * np.sqrt(np.abs(u))

    def F(u):
        return u**4 / 4.0 - (2.0 * c / 3.0) * np.abs(u) ** 1.5

    def fprime(u):
        # unbounded at 0; clamp so Newton stays defined (diagnostics only,
        # no completeness claim near the kink)
        au = np.maximum(np.abs(u), 1e-8)
        return 3.0 * u**2 - c / (2.0 * np.sqrt(au))

    return NonlinearTerm(
        name="root_branch",
        f=f, F=F, fprime=fprime,
        C1=1.0 + c,
        C2=_stationary_offset(0.5, c, 1.5), alpha=0.5,
        D1=0.25 + 2.0 * c / 3.0,
        D2=_stationary_offset(0.125, 2.0 * c / 3.0, 1.5), delta=0.125,
        lipschitz_flag=NON_LIPSCHITZ,
        params={"c": c},
    )


_BUILTINS = {
    "cubic": _cubic,
    "chafee_infante": _chafee_infante,
    "remark3": _remark3,
    "root_branch": _root_branch,
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def builtin(name: str, **params) -> NonlinearTerm:
    """Builtin term by name: cubic, chafee_infante, remark3, root_branch."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {name!r}; known: {', '.join(BUILTIN_NAMES)}") from None
    return factory(**params)


class NumericAntiderivative:
    """Adaptive antiderivative of f with a cached lookup table.

    Values on a uniform grid are accumulated by adaptive quadrature
    (tolerance 1e-10) and point evaluations finish the remaining
    subinterval with the same quadrature, so accuracy does not depend on
    interpolation.  The table grows on demand when a wider range is seen.
    """

    def __init__(self, f, step=0.25, tol=1e-10):
        self.f = f
        self.step = step
        self.tol = tol
        self._lo = [0.0]   # cumulative integrals at -step, -2*step, ...
        self._hi = [0.0]   # cumulative integrals at +step, +2*step, ...

    def _extend(self, side, upto):
        table = self._hi if side > 0 else self._lo
        while (len(table) - 1) * self.step < upto:
            n = len(table) - 1
            a = side * n * self.step
            b = side * (n + 1) * self.step
            val, _ = quad(self.f, a, b, epsabs=self.tol, epsrel=self.tol, limit=200)
            table.append(table[-1] + val)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        flat = u.ravel()
        res = out.ravel()
        amax = float(np.abs(flat).max()) if flat.size else 0.0
        self._extend(+1, amax)
        self._extend(-1, amax)
        for i, x in enumerate(flat):
            side = 1.0 if x >= 0 else -1.0
            n = int(abs(x) // self.step)
            base = (self._hi if x >= 0 else self._lo)[n]
            a = side * n * self.step
            tail, _ = quad(self.f, a, x, epsabs=self.tol, epsrel=self.tol)
            res[i] = base + tail
        return out


def with_numeric_antiderivative(name, f, C1, C2, alpha, D1, D2, delta,
                                lipschitz_flag=ONE_SIDED_LIPSCHITZ, params=None):
    """Custom term whose F falls back to cached adaptive quadrature."""
    return NonlinearTerm(name=name, f=f, F=NumericAntiderivative(f),
                         C1=C1, C2=C2, alpha=alpha, D1=D1, D2=D2, delta=delta,
                         lipschitz_flag=lipschitz_flag, params=params or {})


class CertificateViolation(ValueError):
    """A growth/dissipation inequality failed on the certification grid."""

    def __init__(self, inequality, u, slack):
        super().__init__(f"inequality {inequality!r} violated at u={u:.6g} (slack {slack:.3e})")
        self.inequality = inequality
        self.u = u
        self.slack = slack


@dataclass(frozen=True)
class Certificate:
    """Worst-case slack of the four inequalities over a sampled range."""

    term_name: str
    u_range: tuple
    samples: int
    slacks: dict          # inequality -> (worst slack, location)
    constants: dict

    @property
    def passed(self):
        return all(s >= 0 for s, _ in self.slacks.values())

    def to_dict(self):
        return {
            "term": self.term_name,
            "u_range": list(self.u_range),
            "samples": self.samples,
            "constants": dict(self.constants),
            "slacks": {k: {"worst": v[0], "at": v[1]} for k, v in self.slacks.items()},
            "passed": self.passed,
        }


def certify(term: NonlinearTerm, u_range=(-10.0, 10.0), samples: int = 4001) -> Certificate:
    """Check the four inequalities of the term on a dense grid.

    Raises CertificateViolation naming the failing inequality and its
    location; otherwise returns the worst-case slack per inequality.
    """
    if samples < 1000:
        raise ValueError("certification needs at least 10^3 samples")
    lo, hi = float(u_range[0]), float(u_range[1])
    u = np.linspace(lo, hi, samples)
    fu = term.f(u)
    Fu = term.F(u)
    checks = {
        "growth_f": (term.C1 * (1.0 + np.abs(u) ** 3) - np.abs(fu),
                     term.C1 * (1.0 + np.abs(u) ** 3) + np.abs(fu)),
        "dissipation_f": (fu * u - (term.alpha * u**4 - term.C2),
                          np.abs(fu * u) + term.alpha * u**4 + term.C2),
        "growth_F": (term.D1 * (1.0 + u**4) - np.abs(Fu),
                     term.D1 * (1.0 + u**4) + np.abs(Fu)),
        "dissipation_F": (Fu - (term.delta * u**4 - term.D2),
                          np.abs(Fu) + term.delta * u**4 + term.D2),
    }
    slacks = {}
    for name, (slack, scale) in checks.items():
        # equality cases leave only rounding noise; snap it to exact zero
        floor = 1e-12 * (1.0 + scale)
        slack = np.where((slack < 0) & (slack >= -floor), 0.0, slack)
        i = int(np.argmin(slack))
        slacks[name] = (float(slack[i]), float(u[i]))
        if slack[i] < 0:
            raise CertificateViolation(name, float(u[i]), float(slack[i]))
    constants = {"C1": term.C1, "C2": term.C2, "alpha": term.alpha,
                 "D1": term.D1, "D2": term.D2, "delta": term.delta}
    return Certificate(term.name, (lo, hi), samples, slacks, constants)


def mollify(term: NonlinearTerm, radius: float) -> NonlinearTerm:
    """Lipschitz selection of f: linear through the kink on [-radius, radius].

    Outside the radius the term is unchanged; F is patched so it stays the
    exact antiderivative of the mollified f with F(0) = 0.
    """
    r = float(radius)
    if r <= 0:
        raise ValueError("mollification radius must be positive")
    f, F = term.f, term.F
    f_lo = float(np.asarray(f(np.array([-r])))[0])
    f_hi = float(np.asarray(f(np.array([r])))[0])
    slope = (f_hi - f_lo) / (2.0 * r)
    mid = 0.5 * (f_hi + f_lo)
    F_r = float(np.asarray(F(np.array([r])))[0])
    # antiderivative of the linear piece at +-r, anchored at 0
    lin_at_r = mid * r + slope * r * r / 2.0
    lin_at_mr = -mid * r + slope * r * r / 2.0
    F_mr = float(np.asarray(F(np.array([-r])))[0])

    def f_moll(u):
        u = np.asarray(u, dtype=float)
        inner = mid + slope * u
        return np.where(np.abs(u) <= r, inner, f(u))

    def F_moll(u):
        u = np.asarray(u, dtype=float)
        inner = mid * u + slope * u * u / 2.0
        outer_hi = F(u) - F_r + lin_at_r
        outer_lo = F(u) - F_mr + lin_at_mr
        return np.where(np.abs(u) <= r, inner, np.where(u > 0, outer_hi, outer_lo))

    return NonlinearTerm(
        name=f"{term.name}~moll({r:g})",
        f=f_moll, F=F_moll,
        C1=term.C1 + abs(mid) + abs(slope) * r,
        C2=term.C2 + (abs(mid) + abs(slope) * r) * r, alpha=term.alpha,
        D1=term.D1 + abs(mid) * r + abs(slope) * r * r,
        D2=term.D2 + abs(mid) * r + abs(slope) * r * r, delta=term.delta,
        lipschitz_flag=ONE_SIDED_LIPSCHITZ,
        params={**term.params, "mollification_radius": r},
    )


@dataclass(frozen=True)
class BranchPolicy:
    """How the integrator samples the solution set of a non-unique problem.

    mode "none": the bare initial state.  "perturbation-ensemble": the state
    plus size-1 seeded random fields of L2 amplitude delta0.
    "mollified-selection": the state repeated, each member integrating a
    distinct Lipschitz mollification of f near its kinks.
    """

    mode: str = "none"
    size: int = 1
    amplitude: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("none", "perturbation-ensemble", "mollified-selection"):
            raise ValueError(f"unknown branch mode {self.mode!r}")
        if self.size < 1:
            raise ValueError("ensemble size must be >= 1")
        if self.amplitude < 0:
            raise ValueError("perturbation amplitude must be >= 0")
        if self.mode == "none" and self.size != 1:
            raise ValueError("mode 'none' implies ensemble size 1")
        if self.mode == "perturbation-ensemble" and self.size > 1 and self.seed is None:
            raise ValueError("a stochastic branch policy requires a seed")

    @property
    def stochastic(self):
        return self.mode == "perturbation-ensemble" and self.size > 1


@dataclass(frozen=True)
class EnsembleMember:
    state: np.ndarray
    term: NonlinearTerm | None    # None means: use the run's base term
    label: str


def make_ensemble(state, policy: BranchPolicy | None, base_term: NonlinearTerm | None = None):
    """Initial fields (and per-member term overrides) for one policy.

    Member 0 is always the unperturbed state with the base term, so the
    two-stage composition of runs always contains the plain continuation.
    """
    state = np.asarray(state, dtype=float)
    if policy is None or policy.mode == "none" or policy.size == 1:
        return [EnsembleMember(state.copy(), None, "base")]
    members = [EnsembleMember(state.copy(), None, "base")]
    if policy.mode == "perturbation-ensemble":
        rng = np.random.default_rng(policy.seed)
        for i in range(policy.size - 1):
            g = rng.standard_normal(state.shape)
            nrm = np.linalg.norm(g)
            if nrm == 0.0:
                g = np.ones_like(state)
                nrm = np.linalg.norm(g)
            members.append(EnsembleMember(state + policy.amplitude * g / nrm,
                                          None, f"perturbed[{i + 1}]"))
    else:  # mollified-selection
        if base_term is None:
            raise ValueError("mollified-selection needs the base term")
        r0 = policy.amplitude if policy.amplitude > 0 else 1e-6
        for i in range(policy.size - 1):
            r = r0 * 4.0**i
            members.append(EnsembleMember(state.copy(), mollify(base_term, r),
                                          f"mollified[r={r:g}]"))
    return members
