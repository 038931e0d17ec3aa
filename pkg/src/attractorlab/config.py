"""Run configuration: flat key-value text with optional section headers.

Example:

    [run]
    kind = attractor
    m = 32
    dt = 0.001
    T = 25.0
    seed = 42

    [model]
    nonlinearity = chafee_infante(lam=5)
    h = zero
    u0 = 0.1

    [branch]
    policy = none

Sections are cosmetic (keys live in one flat namespace, duplicates are
rejected), `#` starts a comment, and parse errors carry line numbers.
Nonlinearity and branch-policy values use call syntax: name(key=value, ...).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .nonlinearity import BranchPolicy, NonlinearTerm, builtin

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_config", "EXPERIMENT_KINDS"]

EXPERIMENT_KINDS = ("simulate", "equilibria", "attractor", "certify",
                    "dimension-scan", "audit")


class ConfigError(ValueError):
    """Malformed configuration; message carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


_CALL_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def _parse_scalar(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_call(text, line=None):
    """'name(key=value, ...)' -> (name, params dict)."""
    m = _CALL_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse call syntax in {text!r}", line)
    name, arglist = m.group(1), m.group(2)
    params = {}
    if arglist:
        for piece in arglist.split(","):
            piece = piece.strip()
            if not piece:
                continue
            if "=" not in piece:
                raise ConfigError(f"expected key=value in {piece!r}", line)
            key, _, val = piece.partition("=")
            params[key.strip()] = _parse_scalar(val)
    return name, params


def parse_config_text(text):
    """Flat dict of raw string values, with line numbers retained per key."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first at line {lines[key]})", lineno)
        values[key] = val.strip()
        lines[key] = lineno
    return values, lines


def _float_list(text):
    return [float(p) for p in text.split(",") if p.strip()]


@dataclass
class RunConfig:
    """Validated experiment description for the command-line front end."""

    kind: str
    m: int = 32
    n_nodes: int | None = None
    dt: float = 1e-3
    T: float = 10.0
    output_stride: int = 10
    order: int = 2
    seed: int | None = None
    out_dir: str = "artifacts"
    nonlinearity_name: str = "cubic"
    nonlinearity_params: dict = field(default_factory=dict)
    h_coeffs: list = field(default_factory=list)
    u0_coeffs: list = field(default_factory=list)
    branch: BranchPolicy = field(default_factory=BranchPolicy)
    newton_tol: float = 1e-10
    dedup_tol: float = 1e-6
    omega_tol: float = 1e-4
    trace_eps: float | None = None
    trace_T: float = 40.0
    trace_directions: int = 16
    gluing_tol: float = 1e-8
    trial_count: int = 20
    max_norm: float = 100.0
    k_list: list = field(default_factory=lambda: [16.0, 2401.0, 38416.0])
    threads: int = 1
    artifact_dir: str | None = None   # input dir for audit/report

    def validate(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; "
                              f"known: {', '.join(EXPERIMENT_KINDS)}")
        for name in ("dt", "T", "newton_tol", "dedup_tol", "omega_tol", "gluing_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.dt > 0.1:
            raise ConfigError("dt must be <= 0.1")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.branch.stochastic and self.seed is None:
            raise ConfigError("a stochastic branch policy requires a seed")
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        return self

    def term(self) -> NonlinearTerm:
        return builtin(self.nonlinearity_name, **self.nonlinearity_params)

    def field_coeffs(self, which, m):
        coeffs = {"h": self.h_coeffs, "u0": self.u0_coeffs}[which]
        out = np.zeros(m)
        if coeffs:
            if len(coeffs) > m:
                raise ConfigError(f"{which} has {len(coeffs)} coefficients but m={m}")
            out[: len(coeffs)] = coeffs
        return out


_KEY_PARSERS = {
    "kind": str,
    "m": int,
    "N": ("n_nodes", int),
    "dt": float,
    "T": float,
    "output_stride": int,
    "order": int,
    "seed": int,
    "out": ("out_dir", str),
    "newton_tol": float,
    "dedup_tol": float,
    "omega_tol": float,
    "trace_eps": float,
    "trace_T": float,
    "trace_directions": int,
    "gluing_tol": float,
    "trial_count": int,
    "max_norm": float,
    "threads": int,
    "artifact_dir": str,
}


def load_config(path, overrides=None) -> RunConfig:
    """Parse, typecheck and validate a configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    values, lines = parse_config_text(text)
    if not values:
        raise ConfigError("empty configuration: no keys found")
    values.update(overrides or {})
    if "kind" not in values:
        raise ConfigError("missing required key 'kind'")

    cfg = RunConfig(kind=values.pop("kind").strip())
    pending_policy = None
    for key, raw in values.items():
        line = lines.get(key)
        if key in _KEY_PARSERS:
            spec = _KEY_PARSERS[key]
            attr, conv = spec if isinstance(spec, tuple) else (key, spec)
            try:
                setattr(cfg, attr, conv(raw))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}", line) from exc
        elif key == "nonlinearity":
            cfg.nonlinearity_name, cfg.nonlinearity_params = parse_call(raw, line)
        elif key in ("h", "u0"):
            target = "h_coeffs" if key == "h" else "u0_coeffs"
            if raw.strip().lower() == "zero":
                setattr(cfg, target, [])
            else:
                try:
                    setattr(cfg, target, _float_list(raw))
                except ValueError as exc:
                    raise ConfigError(f"bad coefficient list for {key}: {exc}", line) from exc
        elif key == "policy":
            name, params = parse_call(raw, line)
            mode = {"none": "none",
                    "perturbation": "perturbation-ensemble",
                    "mollified": "mollified-selection"}.get(name)
            if mode is None:
                raise ConfigError(f"unknown branch policy {name!r}", line)
            pending_policy = (mode, params, line)
        elif key == "k_list":
            try:
                cfg.k_list = _float_list(raw)
            except ValueError as exc:
                raise ConfigError(f"bad k_list: {exc}", line) from exc
        else:
            raise ConfigError(f"unknown key {key!r}", line)
    if pending_policy is not None:
        mode, params, line = pending_policy
        seed = params.get("seed", cfg.seed)   # inherit the run seed
        try:
            cfg.branch = BranchPolicy(mode=mode, size=int(params.get("size", 1)),
                                      amplitude=float(params.get("amplitude", 0.0)),
                                      seed=seed)
        except ValueError as exc:
            raise ConfigError(str(exc), line) from exc
    return cfg.validate()


def config_echo(cfg: RunConfig):
    """Deterministic flat echo of the effective configuration."""
    doc = {
        "kind": cfg.kind, "m": cfg.m, "N": cfg.n_nodes or 4 * cfg.m,
        "dt": cfg.dt, "T": cfg.T, "output_stride": cfg.output_stride,
        "order": cfg.order, "seed": cfg.seed,
        "nonlinearity": cfg.nonlinearity_name,
        "nonlinearity_params": dict(cfg.nonlinearity_params),
        "h": list(cfg.h_coeffs), "u0": list(cfg.u0_coeffs),
        "branch": {"mode": cfg.branch.mode, "size": cfg.branch.size,
                   "amplitude": cfg.branch.amplitude, "seed": cfg.branch.seed},
        "newton_tol": cfg.newton_tol, "dedup_tol": cfg.dedup_tol,
        "omega_tol": cfg.omega_tol, "trace_T": cfg.trace_T,
        "trace_directions": cfg.trace_directions,
        "trial_count": cfg.trial_count, "max_norm": cfg.max_norm,
        "k_list": list(cfg.k_list), "threads": cfg.threads,
    }
    return doc
