"""Error metrics and the aggregated report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..core import InvalidParameterError
from ..network import BandwidthLedger, bandwidth_summary


@dataclass(frozen=True)
class MetricsEntry:
    rmse_x: float
    rmse_y: float
    var_x: float
    var_y: float
    max_err_x: float
    max_err_y: float

    @classmethod
    def mean_of(cls, entries: Sequence[MetricsEntry]) -> MetricsEntry:
        keys = cls.__dataclass_fields__
        return cls(**{k: float(np.mean([getattr(e, k) for e in entries])) for k in keys})


def align_truth(truth_stamps, truth, est_stamps, tol: float) -> np.ndarray:
    """Truth rows at the nearest stamp to each estimate stamp, within ``tol``."""
    truth_stamps = np.asarray(truth_stamps, dtype=float)
    est_stamps = np.asarray(est_stamps, dtype=float)
    idx = np.clip(np.searchsorted(truth_stamps, est_stamps), 1, len(truth_stamps) - 1)
    left = truth_stamps[idx - 1]
    right = truth_stamps[idx]
    idx = np.where(np.abs(est_stamps - left) <= np.abs(right - est_stamps), idx - 1, idx)
    if np.any(np.abs(truth_stamps[idx] - est_stamps) > tol):
        raise InvalidParameterError("no truth sample within tolerance of an estimate stamp")
    return np.asarray(truth)[idx]


def compute_metrics(truth, estimate) -> MetricsEntry:
    """Componentwise RMSE, error variance and max absolute error over x and y.

    Variance is the population variance of the signed error, so
    ``rmse**2 = var + mean**2``.
    """
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape[0] != estimate.shape[0]:
        raise InvalidParameterError(
            f"length mismatch: {truth.shape[0]} truth rows vs {estimate.shape[0]} estimates"
        )
    if truth.shape[0] == 0:
        raise InvalidParameterError("empty series")
    e = estimate[:, :2] - truth[:, :2]
    rmse = np.sqrt(np.mean(e**2, axis=0))
    var = np.var(e, axis=0)
    mx = np.max(np.abs(e), axis=0)
    return MetricsEntry(
        float(rmse[0]), float(rmse[1]), float(var[0]), float(var[1]), float(mx[0]), float(mx[1])
    )


@dataclass
class MetricsReport:
    """Seed-ensemble metrics per method and robot.

    ``metrics[method]["robot1"]`` is the ensemble mean entry;
    ``per_trial`` keeps each trial's entry; ``nees[method][robot]`` holds the
    ensemble-average NEES series and its time average; ``bandwidth`` exists
    for methods that exchange messages.
    """

    seed: int
    trials: int
    methods: list
    metrics: dict = field(default_factory=dict)
    per_trial: dict = field(default_factory=dict)
    nees: dict = field(default_factory=dict)
    bandwidth: dict = field(default_factory=dict)

    def rmse(self, method: str, robot: int, axis: str) -> float:
        return self.metrics[method][f"robot{robot}"][f"rmse_{axis}"]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


def build_report(
    seed: int,
    trials: Sequence[int],
    methods: Sequence[str],
    series: Mapping,
    ledgers: Mapping,
    broadcast_bytes: int,
) -> MetricsReport:
    """Aggregate per-trial series into a report.

    ``series[(trial, method)]`` is a pair (one per robot) of
    ``(truth, estimate, nees)`` arrays; ``ledgers[(trial, method)]`` maps
    link names to :class:`BandwidthLedger` for methods that use the link.
    """
    rep = MetricsReport(seed=int(seed), trials=len(trials), methods=list(methods))
    for m in methods:
        rep.metrics[m], rep.per_trial[m], rep.nees[m] = {}, {}, {}
        for r in range(2):
            key = f"robot{r + 1}"
            entries = [compute_metrics(*series[(k, m)][r][:2]) for k in trials]
            rep.per_trial[m][key] = [asdict(e) for e in entries]
            rep.metrics[m][key] = asdict(MetricsEntry.mean_of(entries))
            avg = np.mean([np.asarray(series[(k, m)][r][2]) for k in trials], axis=0)
            rep.nees[m][key] = {"mean": float(np.mean(avg)), "series": [float(x) for x in avg]}
        if all((k, m) in ledgers for k in trials):
            per = []
            links: dict[str, dict] = {}
            for k in trials:
                lk = ledgers[(k, m)]
                per.append(bandwidth_summary(list(lk.values()), broadcast_bytes))
                for name, led in lk.items():
                    acc = links.setdefault(name, {f: 0 for f in BandwidthLedger.__dataclass_fields__})
                    for f, v in led.as_dict().items():
                        acc[f] = v if f == "packet_size" else acc[f] + v
            rep.bandwidth[m] = {
                "broadcast_bytes": int(broadcast_bytes),
                "event_bytes": float(np.mean([p["event_bytes"] for p in per])),
                "reduction": float(np.mean([p["reduction"] for p in per])),
                "per_trial": per,
                "links_total": links,
            }
    return rep


def nees_bounds(dof_per_sample: int, runs: int, confidence: float = 0.95) -> tuple[float, float]:
    """Two-sided interval for the ensemble-average NEES of ``runs`` runs."""
    from scipy.stats import chi2

    n = dof_per_sample * runs
    a = (1.0 - confidence) / 2.0
    return float(chi2.ppf(a, n) / runs), float(chi2.ppf(1.0 - a, n) / runs)
