"""Batch command-line front end and artifact store.

Experiments are described by a config file and write a self-contained
artifact directory: a manifest (config echo, versions, wall time) plus
deterministic JSON/CSV/trajectory outputs.  For fixed config and seed the
JSON and CSV artifacts are byte-identical across runs; the exit status is
zero exactly when every certification in the run passed and every traced
limit resolved.

Commands: simulate, equilibria, attractor, certify, dimension-scan, audit,
report.  Flags: --config PATH, --out DIR, --seed N, --threads N, --quiet.
The environment variable ATTRACTORLAB_OUT overrides --out.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .attractor import (absorbing_ball, build_attractor, certify_dissipation,
                        certify_gronwall, certify_smoothing, dimension_scan,
                        energy_descent_audit, linf_bound)
from .config import ConfigError, RunConfig, config_echo, load_config
from .equilibria import SolverFailure, find_all
from .msflow import TrajectorySample
from .nonlinearity import certify
from .serialization import (dumps_json, fmt_float, read_trajectory, write_csv,
                            write_energy_csv, write_json, write_trajectory)
from .spectral import SpectralField, energy, energy_series, integrate, make_basis

__all__ = ["main", "run"]


class _Reporter:
    def __init__(self, quiet):
        self.quiet = quiet

    def say(self, msg):
        if not self.quiet:
            print(msg)


def _prepare(cfg: RunConfig):
    basis = make_basis(cfg.m, n_nodes=cfg.n_nodes)
    term = cfg.term()
    h = cfg.field_coeffs("h", basis.m)
    return basis, term, h


def _write_manifest(out, cfg, wall, extra=None):
    lines = ["attractorlab manifest", f"version={__version__}",
             f"numpy={np.__version__}"]
    try:
        import scipy
        lines.append(f"scipy={scipy.__version__}")
    except ImportError:
        pass
    lines.append(f"wall_time_s={wall:.3f}")
    lines.append("config:")
    lines.append(dumps_json(config_echo(cfg)).rstrip())
    for key, val in (extra or {}).items():
        lines.append(f"{key}={val}")
    with open(os.path.join(out, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _ensemble_diameter(states):
    worst = 0.0
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            worst = max(worst, float(np.linalg.norm(states[i] - states[j])))
    return worst


def _run_simulate(cfg, basis, term, h, out, rep):
    u0 = SpectralField(cfg.field_coeffs("u0", basis.m), basis)
    samples, diags = integrate(u0, cfg.T, cfg.dt, term, h,
                               branch_policy=cfg.branch,
                               output_stride=cfg.output_stride,
                               order=cfg.order, with_diagnostics=True)
    for i, (traj, diag) in enumerate(zip(samples, diags)):
        write_trajectory(os.path.join(out, f"trajectory_{i:03d}.traj"), traj,
                         {"member": i, "nonlinearity": term.name})
        recs = energy_series(traj, basis, term, h, diag)
        write_energy_csv(os.path.join(out, f"energy_{i:03d}.csv"), recs)
    doc = {
        "members": len(samples),
        "T": cfg.T,
        "initial_diameter": _ensemble_diameter([s.states[0] for s in samples]),
        "final_diameter": _ensemble_diameter([s.states[-1] for s in samples]),
        "final_l2_norms": [float(np.linalg.norm(s.states[-1])) for s in samples],
    }
    write_json(os.path.join(out, "ensemble.json"), doc)
    rep.say(f"simulated {len(samples)} member(s) to T={cfg.T}; "
            f"final ensemble diameter {doc['final_diameter']:.3e}")
    return True


def _run_equilibria(cfg, basis, term, h, out, rep):
    eqset = find_all(term, h, basis, dedup_tol=cfg.dedup_tol,
                     newton_tol=cfg.newton_tol)
    write_json(os.path.join(out, "equilibria.json"), eqset.to_dict())
    rep.say(f"found {len(eqset)} stationary state(s)")
    for eq in eqset:
        rep.say(f"  |u|_L2={eq.field.norm_l2():.6f}  unstable_dim={eq.unstable_dim}  "
                f"residual={eq.residual_h:.2e}")
    return True


def _run_attractor(cfg, basis, term, h, out, rep):
    eqset = find_all(term, h, basis, dedup_tol=cfg.dedup_tol,
                     newton_tol=cfg.newton_tol)
    graph = build_attractor(term, h, basis, eqset=eqset, eps=cfg.trace_eps,
                            directions=cfg.trace_directions, T=cfg.trace_T,
                            dt=cfg.dt, stride=cfg.output_stride,
                            omega_tol=cfg.omega_tol, seed=cfg.seed or 0)
    audit = energy_descent_audit(graph, term, h)
    linf = linf_bound(term, h, basis, attractor_states=graph.attractor_sample)
    energies = graph.node_energies(term, h)

    edges_doc = []
    os.makedirs(os.path.join(out, "edges"), exist_ok=True)
    for k, edge in enumerate(graph.edges):
        fname = f"edges/edge_{k:03d}.traj"
        write_trajectory(os.path.join(out, fname), edge.orbit.sample,
                         {"source": edge.source, "sink": edge.sink})
        edges_doc.append({
            "source": edge.source, "sink": edge.sink, "file": fname,
            "forward_h1_dist": edge.forward_h1_dist,
            "seed_eigenvalue": edge.orbit.seed_eigenvalue,
            "departure_rate": edge.orbit.departure_rate,
            "backward_rate_ok": edge.orbit.rate_within_factor_two,
            "homoclinic": edge.homoclinic,
        })
    doc = {
        "nodes": [dict(eq.to_dict(), energy=energies[i])
                  for i, eq in enumerate(graph.nodes)],
        "edges": edges_doc,
        "minus_check": graph.minus_check,
        "unresolved": [list(u) for u in graph.unresolved],
        "audit": {"passed": audit.passed,
                  "monotone_violation": audit.monotone_violation,
                  "failing_edges": [list(map(str, fe)) for fe in audit.failing_edges]},
        "linf": linf.to_dict(),
    }
    write_json(os.path.join(out, "graph.json"), doc)
    order = np.argsort(energies)[::-1]
    write_csv(os.path.join(out, "energy_diagram.csv"),
              ["node", "energy", "unstable_dim"],
              [(str(int(i)), energies[i], str(graph.nodes[i].unstable_dim))
               for i in order])
    rows = []
    for k, edge in enumerate(graph.edges):
        s = edge.orbit.sample
        for t, a in zip(s.times, s.states):
            rows.append((str(k), t, a[0], a[1] if len(a) > 1 else 0.0,
                         energy(SpectralField(a, basis), term, h)))
    write_csv(os.path.join(out, "manifold_curves.csv"),
              ["edge", "t", "a_1", "a_2", "E"], rows)

    ok = (audit.passed and linf.passed and not graph.unresolved
          and graph.minus_check["fraction"] == 1.0
          and all(e["backward_rate_ok"] for e in edges_doc))
    rep.say(f"graph: {len(graph.nodes)} node(s), {len(graph.edges)} edge(s); "
            f"audit {'passed' if audit.passed else 'FAILED'}; "
            f"sup-norm bound M={linf.constants['M']:.6f} "
            f"{'holds' if linf.passed else 'VIOLATED'}")
    return ok


def _run_certify(cfg, basis, term, h, out, rep):
    certs = []
    certs.append(certify_dissipation(term, h, basis, T=max(cfg.T, 12.0), dt=cfg.dt,
                                     stride=cfg.output_stride, seed=cfg.seed or 0,
                                     trial_count=cfg.trial_count,
                                     max_norm=cfg.max_norm, threads=cfg.threads))
    smooth = certify_smoothing(term, h, basis, dt=cfg.dt, seed=(cfg.seed or 0) + 1,
                               threads=cfg.threads)
    certs.extend(smooth)
    certs.append(certify_gronwall(term, h, basis, dt=cfg.dt, seed=(cfg.seed or 0) + 2,
                                  threads=cfg.threads))
    certs.append(absorbing_ball(smooth[0], term, h, basis, dt=cfg.dt,
                                stride=cfg.output_stride, seed=(cfg.seed or 0) + 3,
                                threads=cfg.threads))
    eqset = find_all(term, h, basis, dedup_tol=cfg.dedup_tol,
                     newton_tol=cfg.newton_tol)
    certs.append(linf_bound(term, h, basis,
                            attractor_states=[eq.field.coeffs for eq in eqset]))
    ineq = certify(term, u_range=(-cfg.max_norm, cfg.max_norm))

    write_json(os.path.join(out, "certificates.json"),
               {"bounds": [c.to_dict() for c in certs],
                "growth_inequalities": ineq.to_dict()})
    ok = all(c.passed for c in certs) and ineq.passed
    for c in certs:
        rep.say(f"  {c.name}: constants={ {k: round(v, 6) for k, v in c.constants.items()} } "
                f"slack={c.worst_slack:.3e} {'pass' if c.passed else 'FAIL'}")
    rep.say(f"certification {'passed' if ok else 'FAILED'}")
    return ok


def _run_dimension_scan(cfg, basis, term, h, out, rep):
    rows = dimension_scan(cfg.k_list, basis, threads=cfg.threads)
    doc = [{"k": r.k, "sqrt_k": r.sqrt_k, "n_k": r.n_k,
            "traced_unstable_dim": r.traced_unstable_dim,
            "resonant_modes": list(r.resonant_modes),
            "nearest_safe_k": r.nearest_safe_k} for r in rows]
    write_json(os.path.join(out, "scan.json"), doc)
    write_csv(os.path.join(out, "scan.csv"),
              ["k", "n_k", "traced_unstable_dim", "resonant"],
              [(r.k, str(r.n_k), str(r.traced_unstable_dim),
                str(int(r.resonant))) for r in rows])
    ok = all(r.n_k == r.traced_unstable_dim for r in rows)
    counts = [r.n_k for r in rows]
    growth = all(a < b for a, b in zip(counts, counts[1:]))
    for r in rows:
        rep.say(f"  k={r.k:g}: n_k={r.n_k} traced={r.traced_unstable_dim}"
                + ("  [resonant]" if r.resonant else ""))
    rep.say(f"counts {'strictly increase' if growth else 'DO NOT increase'} along the ladder")
    return ok and growth


def _run_audit(cfg, basis, term, h, out, rep):
    src = cfg.artifact_dir or out
    graph_path = os.path.join(src, "graph.json")
    if not os.path.exists(graph_path):
        raise ConfigError(f"no graph.json in {src!r}; run the attractor experiment first")
    import json
    with open(graph_path) as fh:
        doc = json.load(fh)
    energies = [n["energy"] for n in doc["nodes"]]
    failing = []
    worst_inc = 0.0
    for e in doc["edges"]:
        if not energies[e["source"]] > energies[e["sink"]]:
            failing.append(f"edge {e['file']}: no strict energy drop")
        traj, _ = read_trajectory(os.path.join(src, e["file"]))
        fwd = TrajectorySample(traj.times[traj.times >= 0],
                               traj.states[traj.times >= 0], "forward")
        recs = energy_series(fwd, basis, term, h)
        evals = np.array([r.E for r in recs])
        inc = float(np.diff(evals).max()) if len(evals) > 1 else 0.0
        worst_inc = max(worst_inc, inc)
        if inc > 1e-6 * (1.0 + abs(evals[0])):
            failing.append(f"edge {e['file']}: energy increased by {inc:.3e}")
    result = {"edges_checked": len(doc["edges"]),
              "worst_energy_increase": worst_inc,
              "failures": failing,
              "passed": not failing}
    write_json(os.path.join(out, "audit.json"), result)
    rep.say(f"audit over {len(doc['edges'])} edge(s): "
            f"{'passed' if not failing else 'FAILED'}")
    return not failing


_EXPERIMENTS = {
    "simulate": _run_simulate,
    "equilibria": _run_equilibria,
    "attractor": _run_attractor,
    "certify": _run_certify,
    "dimension-scan": _run_dimension_scan,
    "audit": _run_audit,
}


def run(cfg: RunConfig, quiet: bool = False) -> int:
    """Execute one experiment; returns the process exit status."""
    rep = _Reporter(quiet)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    basis, term, h = _prepare(cfg)
    t0 = time.perf_counter()
    try:
        ok = _EXPERIMENTS[cfg.kind](cfg, basis, term, h, out, rep)
    except (SolverFailure, ConfigError) as exc:
        with open(os.path.join(out, "diagnostics.txt"), "w") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        rep.say(f"error: {exc}")
        return 1
    _write_manifest(out, cfg, time.perf_counter() - t0)
    rep.say(f"artifacts in {out}")
    return 0 if ok else 1


def _report(artifact_dir, quiet=False) -> int:
    rep = _Reporter(quiet)
    manifest = os.path.join(artifact_dir, "manifest.txt")
    if not os.path.exists(manifest):
        print(f"error: missing manifest in {artifact_dir!r}", file=sys.stderr)
        return 1
    import json
    lines = [f"report for {artifact_dir}"]
    cpath = os.path.join(artifact_dir, "certificates.json")
    if os.path.exists(cpath):
        with open(cpath) as fh:
            doc = json.load(fh)
        lines.append("certificates:")
        lines.append(f"  {'name':>16} {'constant':>24} {'slack':>12} pass")
        for c in doc["bounds"]:
            main_const = next(iter(sorted(c["constants"].items())))
            lines.append(f"  {c['name']:>16} {main_const[0]}={fmt_float(main_const[1]):>18}"
                         f" {c['worst_slack']:12.3e} {c['passed']}")
    gpath = os.path.join(artifact_dir, "graph.json")
    if os.path.exists(gpath):
        with open(gpath) as fh:
            doc = json.load(fh)
        order = sorted(range(len(doc["nodes"])),
                       key=lambda i: -doc["nodes"][i]["energy"])
        lines.append(f"graph: {len(doc['nodes'])} nodes, {len(doc['edges'])} edges")
        for i in order:
            n = doc["nodes"][i]
            outgoing = sorted(e["sink"] for e in doc["edges"] if e["source"] == i)
            lines.append(f"  node {i}: E={n['energy']:+.6f} unstable_dim={n['unstable_dim']}"
                         f" -> {outgoing if outgoing else 'terminal'}")
        lines.append(f"  sup-norm bound M={doc['linf']['constants']['M']:.6f} "
                     f"(passed={doc['linf']['passed']})")
    spath = os.path.join(artifact_dir, "scan.json")
    if os.path.exists(spath):
        with open(spath) as fh:
            doc = json.load(fh)
        lines.append("dimension scan (k, n_k):")
        for r in doc:
            lines.append(f"  {r['k']:g}  {r['n_k']}")
    epath = os.path.join(artifact_dir, "ensemble.json")
    if os.path.exists(epath):
        with open(epath) as fh:
            doc = json.load(fh)
        lines.append(f"ensemble: {doc['members']} member(s), "
                     f"diameter {doc['initial_diameter']:.3e} -> {doc['final_diameter']:.3e}")
    text = "\n".join(lines)
    with open(os.path.join(artifact_dir, "report.txt"), "w") as fh:
        fh.write(text + "\n")
    rep.say(text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="attractor-lab",
        description="Batch laboratory for reaction-diffusion long-time dynamics.")
    parser.add_argument("command", choices=list(_EXPERIMENTS) + ["report"])
    parser.add_argument("--config", help="experiment configuration file")
    parser.add_argument("--out", help="artifact directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="parallel trial jobs")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    out_env = os.environ.get("ATTRACTORLAB_OUT")
    if args.command == "report":
        target = out_env or args.out
        if not target:
            parser.error("report needs --out (or ATTRACTORLAB_OUT)")
        return _report(target, args.quiet)

    if not args.config:
        parser.error("--config is required for experiment commands")
    overrides = {"kind": args.command}
    try:
        cfg = load_config(args.config, overrides)
        if args.seed is not None:
            cfg.seed = args.seed
            if cfg.branch.stochastic:
                from .nonlinearity import BranchPolicy
                cfg.branch = BranchPolicy(cfg.branch.mode, cfg.branch.size,
                                          cfg.branch.amplitude, args.seed)
        if args.threads is not None:
            cfg.threads = max(1, args.threads)
        if args.out:
            cfg.out_dir = args.out
        if out_env:
            cfg.out_dir = out_env
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
