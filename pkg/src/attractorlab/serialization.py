"""Deterministic text artifacts: trajectories, CSV tables, JSON documents.

Every floating-point value is written as decimal text with 17 significant
digits, keys are emitted in sorted order, and nothing in the output depends
on wall time or thread scheduling, so identical inputs produce
byte-identical files.

Trajectory files are columnar: `key=value` header lines (sorted), a literal
`data` sentinel, then rows `t, a_1, ..., a_m`.
"""

from __future__ import annotations

import numpy as np

from .msflow import TrajectorySample

__all__ = [
    "fmt_float",
    "dumps_json",
    "write_json",
    "write_trajectory",
    "read_trajectory",
    "write_csv",
    "write_energy_csv",
]


def fmt_float(x) -> str:
    return f"{float(x):.17g}"


def _json_value(v, indent, level):
    pad = " " * (indent * (level + 1))
    end_pad = " " * (indent * level)
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            return f'"{float(v)}"'
        return fmt_float(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        items = [_json_value(x, indent, level + 1) for x in v]
        return "[\n" + ",\n".join(pad + it for it in items) + "\n" + end_pad + "]"
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = []
        for k in sorted(v, key=str):
            items.append(pad + _json_value(str(k), indent, level + 1) + ": "
                         + _json_value(v[k], indent, level + 1))
        return "{\n" + ",\n".join(items) + "\n" + end_pad + "}"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps_json(doc, indent: int = 2) -> str:
    """JSON text with sorted keys and 17-significant-digit floats."""
    return _json_value(doc, indent, 0) + "\n"


def write_json(path, doc):
    with open(path, "w") as fh:
        fh.write(dumps_json(doc))


def write_trajectory(path, traj: TrajectorySample, metadata: dict | None = None):
    meta = {"format": "attractorlab.trajectory.v1",
            "kind": traj.kind,
            "modes": traj.dim,
            "rows": len(traj.times)}
    meta.update(metadata or {})
    with open(path, "w") as fh:
        for key in sorted(meta):
            fh.write(f"{key}={meta[key]}\n")
        fh.write("data\n")
        for t, row in zip(traj.times, traj.states):
            fh.write(", ".join([fmt_float(t)] + [fmt_float(a) for a in row]) + "\n")


def read_trajectory(path):
    """(TrajectorySample, metadata) back from the columnar format."""
    meta = {}
    times = []
    states = []
    with open(path) as fh:
        in_data = False
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if not in_data:
                if line == "data":
                    in_data = True
                    continue
                key, _, val = line.partition("=")
                meta[key] = val
                continue
            parts = [float(p) for p in line.split(",")]
            times.append(parts[0])
            states.append(parts[1:])
    kind = meta.get("kind", "forward")
    return TrajectorySample(np.array(times), np.array(states), kind), meta


def write_csv(path, header, rows):
    """Rows of floats (or strings) under a comma-separated header line."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(x if isinstance(x, str) else fmt_float(x) for x in row) + "\n")


def write_energy_csv(path, records):
    write_csv(path, ["t", "E", "h1_sq", "potential", "forcing", "dissipation"],
              [(r.t, r.E, r.h1_sq, r.potential, r.forcing, r.dissipation)
               for r in records])
