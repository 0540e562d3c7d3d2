"""Scenario orchestration and the on-disk run layout.

A run directory holds::

    run.json                   seed, trial indices, methods, broadcast bytes
    bandwidth.json             link ledgers per trial for exchanging methods
    metrics.json               the MetricsReport
    trial_000/dcl_robot1.csv   one log per trial, method and robot
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..network import BandwidthLedger, continuous_broadcast_cost
from .metrics import MetricsReport, build_report
from .runners import MethodResult, run_method
from .scenario import Scenario
from .streams import Streams, generate_streams

LOG_HEADER = (
    "stamp",
    "true_x",
    "true_y",
    "true_theta",
    "est_x",
    "est_y",
    "est_theta",
    "p_xx",
    "p_yy",
    "p_tt",
    "nees",
)


def run_trial(s: Scenario, trial: int, methods: Optional[Sequence[str]] = None) -> dict:
    """All requested methods on one trial's shared streams."""
    st: Streams = generate_streams(s, trial)
    return {m: run_method(m, s, st) for m in (methods or s.methods)}


def _series(res: MethodResult):
    return tuple((r.truth, r.mean, r.nees) for r in res.robots)


def run_scenario(
    s: Scenario, methods: Optional[Sequence[str]] = None, trials: Optional[int] = None
) -> tuple[dict, MetricsReport]:
    """Run ``trials`` seeded trials; returns ``(logs, report)``.

    ``logs[(trial, method)]`` is a :class:`MethodResult`.
    """
    methods = list(methods or s.methods)
    idx = list(range(s.trials if trials is None else trials))
    logs = {}
    for k in idx:
        for m, res in run_trial(s, k, methods).items():
            logs[(k, m)] = res
    series = {key: _series(res) for key, res in logs.items()}
    ledgers = {key: res.ledgers for key, res in logs.items() if res.ledgers}
    report = build_report(s.rng_seed, idx, methods, series, ledgers, continuous_broadcast_cost(s))
    return logs, report


def _fmt(x: float) -> str:
    return repr(float(x))


def write_run(out_dir, s: Scenario, logs: dict, report: MetricsReport) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials = sorted({k for k, _ in logs})
    meta = {
        "seed": s.rng_seed,
        "trials": trials,
        "methods": report.methods,
        "broadcast_bytes": continuous_broadcast_cost(s),
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    bw = {
        f"{k}/{m}": {name: led.as_dict() for name, led in res.ledgers.items()}
        for (k, m), res in sorted(logs.items())
        if res.ledgers
    }
    (out / "bandwidth.json").write_text(json.dumps(bw, indent=2, sort_keys=True) + "\n")
    for (k, m), res in sorted(logs.items()):
        d = out / f"trial_{k:03d}"
        d.mkdir(exist_ok=True)
        for i, r in enumerate(res.robots):
            nees = r.nees
            with open(d / f"{m}_robot{i + 1}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(LOG_HEADER)
                for n in range(len(r.stamps)):
                    c = r.cov[n]
                    w.writerow(
                        [_fmt(r.stamps[n]), *map(_fmt, r.truth[n]), *map(_fmt, r.mean[n])]
                        + [_fmt(c[0, 0]), _fmt(c[1, 1]), _fmt(c[2, 2]), _fmt(nees[n])]
                    )
    (out / "metrics.json").write_text(report.to_json() + "\n")
    return out


def read_log(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != LOG_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]!r}")
    data = np.array([[float(x) for x in row] for row in rows[1:]]).reshape(-1, len(LOG_HEADER))
    return {h: data[:, i] for i, h in enumerate(LOG_HEADER)}


def report_from_dir(in_dir) -> MetricsReport:
    """Re-derive the report from the CSV logs and ledgers of a run directory."""
    d = Path(in_dir)
    meta = json.loads((d / "run.json").read_text())
    bw = json.loads((d / "bandwidth.json").read_text())
    series, ledgers = {}, {}
    for k in meta["trials"]:
        for m in meta["methods"]:
            pair = []
            for i in (1, 2):
                c = read_log(d / f"trial_{k:03d}" / f"{m}_robot{i}.csv")
                truth = np.column_stack([c["true_x"], c["true_y"], c["true_theta"]])
                est = np.column_stack([c["est_x"], c["est_y"], c["est_theta"]])
                pair.append((truth, est, c["nees"]))
            series[(k, m)] = tuple(pair)
            if f"{k}/{m}" in bw:
                ledgers[(k, m)] = {
                    name: BandwidthLedger(**v) for name, v in bw[f"{k}/{m}"].items()
                }
    return build_report(
        meta["seed"], meta["trials"], meta["methods"], series, ledgers, meta["broadcast_bytes"]
    )
