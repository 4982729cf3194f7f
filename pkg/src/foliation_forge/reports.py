"""Report assembly and serialization: JSON records, CSV leaf dumps.

Payloads contain only plain Python scalars, lists and dicts, so the
JSON text is a deterministic function of the inputs (keys sorted, float
repr is shortest round trip).  Wall clock timings live next to the
payload and are excluded from that guarantee.
"""

import csv
import importlib.metadata
import json
import os

import numpy as np

from .surfaces import lapse, mean_curvature, p_trace, residual

try:
    VERSION = importlib.metadata.version("foliation-forge")
except importlib.metadata.PackageNotFoundError:
    VERSION = "unknown"


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def build_report(command, config, payload, timings=None):
    """Assemble the standard report envelope around a command payload."""
    return {
        "command": command,
        "version": VERSION,
        "config": _plain(config),
        "payload": _plain(payload),
        "timings": _plain(timings or {}),
    }


def dumps_report(report):
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(report, out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name + ".json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_report(report))
    return path


def leaf_table(state, dtau_dr=None):
    """Node table of one converged leaf: (header, rows).

    Columns are the node angles, ambient positions, mean curvature, the
    momentum trace, the residual of the leaf's own variant and the lapse
    for the given center velocity (alpha is identically 1 when dtau_dr
    is omitted).
    """
    emb = state.embedding
    if emb is None:
        raise ValueError("leaf state carries no embedding")
    grid = emb.grid
    d = grid.n + 1
    header = (["theta", "lambda"] + ["x%d" % i for i in range(d)]
              + ["H_g", "P_g", "residual", "alpha"])
    lam = grid.lam if grid.lam is not None else np.zeros(grid.n_nodes)
    if dtau_dr is None:
        alpha = np.ones(grid.n_nodes)
    else:
        alpha = lapse(dtau_dr, emb)[0].values
    cols = [grid.theta, lam]
    cols += [emb.node_positions[:, i] for i in range(d)]
    cols += [mean_curvature(emb).values, p_trace(emb).values,
             residual(emb, state.variant).values, alpha]
    rows = np.column_stack(cols)
    return header, rows


def write_leaf_csv(path, state, dtau_dr=None):
    header, rows = leaf_table(state, dtau_dr=dtau_dr)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    return path


def write_run_csvs(out_dir, run):
    """One CSV per leaf of a continuation run, lapse from the fitted
    center slopes like the run diagnostics use."""
    os.makedirs(out_dir, exist_ok=True)
    leaves = run.leaves
    if not leaves:
        return []
    rs = np.array([st.r for st in leaves])
    ts = np.array([st.tau for st in leaves])
    if len(leaves) == 1:
        slopes = np.zeros_like(ts)
    else:
        slopes = np.gradient(ts, rs, axis=0)
    paths = []
    for i, (st, dt) in enumerate(zip(leaves, slopes)):
        path = os.path.join(out_dir, "leaf_%03d.csv" % i)
        paths.append(write_leaf_csv(path, st, dtau_dr=dt))
    return paths
