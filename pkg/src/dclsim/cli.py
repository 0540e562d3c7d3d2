"""Command-line entry point: ``simulate``, ``metrics`` and ``validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .harness import METHODS, ConfigError, MetricsReport, load_scenario, report_from_dir, run_scenario, write_run


def _methods(text: str) -> tuple[str, ...]:
    names = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {', '.join(bad) or '(none)'}; choose from {','.join(METHODS)}"
        )
    return names


def _summary(rep: MetricsReport) -> str:
    lines = [f"seed {rep.seed}, {rep.trials} trial(s)"]
    lines.append(f"{'method':<8} {'robot':<6} {'rmse_x':>8} {'rmse_y':>8} {'max_x':>8} {'max_y':>8} {'nees':>7}")
    for m in rep.methods:
        for r in (1, 2):
            e = rep.metrics[m][f"robot{r}"]
            nees = rep.nees[m][f"robot{r}"]["mean"]
            lines.append(
                f"{m:<8} {r:<6} {e['rmse_x']:8.4f} {e['rmse_y']:8.4f} "
                f"{e['max_err_x']:8.4f} {e['max_err_y']:8.4f} {nees:7.2f}"
            )
    for m, bw in rep.bandwidth.items():
        lines.append(
            f"{m}: {bw['event_bytes']:.0f} bytes per trial vs {bw['broadcast_bytes']} broadcast "
            f"(reduction {bw['reduction']:.1%})"
        )
    return "\n".join(lines)


def _simulate(args) -> int:
    s = load_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    if args.methods is not None:
        changes["methods"] = args.methods
    if args.trials is not None:
        changes["trials"] = args.trials
    s = s.with_(**changes)
    logs, rep = run_scenario(s)
    out = write_run(args.out, s, logs, rep)
    print(_summary(rep))
    print(f"wrote {out}")
    return 0


def _metrics(args) -> int:
    rep = report_from_dir(args.in_dir)
    print(rep.to_json() if args.json else _summary(rep))
    return 0


def _validate(args) -> int:
    s = load_scenario(args.scenario)
    print(f"ok: {s.steps} steps of {s.dt} s, methods {','.join(s.methods)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dclsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log estimator warnings")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write logs and metrics")
    sim.add_argument("--scenario", required=True, help="scenario TOML file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument("--methods", type=_methods, help="comma-separated subset of " + ",".join(METHODS))
    sim.add_argument("--trials", type=int, help="override the trial count")
    sim.set_defaults(func=_simulate)

    met = sub.add_parser("metrics", help="re-derive the report from a run directory")
    met.add_argument("--in", dest="in_dir", required=True, help="directory written by simulate")
    met.add_argument("--json", action="store_true", help="print the full JSON report")
    met.set_defaults(func=_metrics)

    val = sub.add_parser("validate", help="check a scenario file without running it")
    val.add_argument("--scenario", required=True, help="scenario TOML file")
    val.set_defaults(func=_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    if getattr(args, "trials", None) is not None and args.trials < 1:
        print("error: --trials must be positive", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
