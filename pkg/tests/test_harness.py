import filecmp
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from dclsim.cli import main
from dclsim.core import FrameTransform, NoiseConfig, Pose2
from dclsim.harness import (
    LOG_HEADER,
    ConfigError,
    ControlProgram,
    align_truth,
    compute_metrics,
    default_scenario,
    generate_streams,
    load_scenario,
    mutual_visibility,
    read_log,
    report_from_dir,
    run_method,
    run_scenario,
    scenario_from_dict,
    write_run,
)
from dclsim.sensors import WorldModel

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_TOML = ROOT / "scenarios" / "default.toml"
GOLDEN = Path(__file__).parent / "golden"


# --------------------------------------------------------------------------
# configuration


@pytest.mark.parametrize(
    "data, path",
    [
        ({"bogus": 1}, "bogus"),
        ({"timing": {"nope": 1}}, "timing.nope"),
        ({"timing": {"dt": -0.1}}, "timing.dt"),
        ({"timing": {"dt": "fast"}}, "timing.dt"),
        ({"timing": {"steps": 1.5}}, "timing.steps"),
        ({"trials": 0}, "trials"),
        ({"methods": ["dr", "magic"]}, "methods[1]"),
        ({"methods": []}, "methods"),
        ({"link": {"drop_prob": 1.0}}, "link.drop_prob"),
        ({"link": {"availability": [[2.0, 1.0]]}}, "link.availability"),
        ({"sensor": {"detector": "radar"}}, "sensor.detector"),
        ({"sensor": {"lambda_deg": 0.5}}, "sensor.lambda_deg"),
        ({"robot1": {"x": 50.0}}, "robot1"),
        ({"robot2": {"controls": [[1.0, 0.1, 0.0], [0.5, 0.1, 0.0]]}}, "robot2.controls"),
        ({"world": {"landmarks": [[1.0]]}}, "world.landmarks[0]"),
        ({"estimator": {"private_update_touches_cross": 1}}, "estimator.private_update_touches_cross"),
    ],
)
def test_config_errors_name_the_field(data, path):
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(data)
    assert exc.value.path == path


def test_bad_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("seed = = 3\n")
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_toml_overrides(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('seed = 3\nmethods = ["dr"]\n[link]\nlatency = 0.2\n[robot1]\nframe_offset = [1.0, 2.0, 90.0]\n')
    s = load_scenario(p)
    assert s.rng_seed == 3 and s.methods == ("dr",)
    assert s.link.latency == 0.2
    assert s.frames[0].dtheta == pytest.approx(math.pi / 2)
    assert s.programs == default_scenario().programs


def test_default_toml_is_the_default_scenario():
    a = load_scenario(DEFAULT_TOML)
    b = default_scenario()
    for f in ("dt", "steps", "lidar_rate", "sync_slop", "programs", "initial_poses", "methods", "trials", "rng_seed"):
        assert getattr(a, f) == getattr(b, f), f
    assert a.world == b.world
    assert a.link == b.link
    assert a.noise.Q == pytest.approx(b.noise.Q) and a.noise.R == pytest.approx(b.noise.R)
    _, ra = run_scenario(a, trials=1)
    _, rb = run_scenario(b, trials=1)
    assert ra.to_json() == rb.to_json()


# --------------------------------------------------------------------------
# metrics


def test_compute_metrics_example():
    truth = np.zeros((3, 3))
    est = np.array([[0.0, 0.0, 0.0], [0.3, -0.3, 0.0], [0.4, 0.4, 1.0]])
    e = compute_metrics(truth, est)
    assert e.rmse_x == pytest.approx(math.sqrt(0.25 / 3))
    assert e.rmse_x == pytest.approx(0.2887, abs=1e-4)
    assert e.max_err_x == 0.4 and e.max_err_y == 0.4
    assert e.var_x == pytest.approx(np.var([0.0, 0.3, 0.4]))
    assert e.rmse_x**2 == pytest.approx(e.var_x + np.mean([0.0, 0.3, 0.4]) ** 2)


def test_compute_metrics_errors():
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((0, 3)), np.zeros((0, 3)))


def test_align_truth():
    ts = np.array([0.0, 0.1, 0.2])
    truth = np.array([[0.0], [1.0], [2.0]])
    assert align_truth(ts, truth, [0.09, 0.2], tol=0.02).ravel().tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        align_truth(ts, truth, [0.15], tol=0.01)


# --------------------------------------------------------------------------
# streams


def test_mutual_visibility():
    w = WorldModel.room(6.0, 6.0, extra_walls=[((3.0, 1.0), (3.0, 5.0))])
    assert mutual_visibility((1.0, 0.5, 0.0), (5.0, 0.5, 2.0), w)
    assert not mutual_visibility((1.0, 3.0, 0.0), (5.0, 3.0, 0.0), w)
    assert not mutual_visibility((0.1, 0.5, 0.0), (5.9, 0.5, 0.0), w, max_range=5.0)


def test_streams_shapes_and_seeding():
    s = default_scenario()
    st = generate_streams(s, 0)
    n = len(st.lidar_stamps)
    assert n == int(s.duration * s.lidar_rate)
    assert len(st.coop) == len(st.landmarks) == len(st.exchange) == n
    assert len(st.odometry[0]) == s.steps + 2
    assert st.odometry[0][0].stamp == pytest.approx(-s.dt)
    assert np.all(st.visible[st.exchange])
    # exchanges respect the period and the link schedule
    tx = st.lidar_stamps[st.exchange]
    assert np.all(np.diff(tx) >= s.estimator.exchange_period - 1e-9)
    assert all(s.link.available(t) for t in tx)
    again = generate_streams(s, 0)
    assert np.array_equal(st.truth_lidar[0], again.truth_lidar[0])
    other = generate_streams(s, 1)
    assert not np.array_equal(st.truth_lidar[0], other.truth_lidar[0])


def _quiet_scenario():
    """Straight constant-speed paths with every noise source near zero."""
    s = default_scenario()
    tiny = 1e-9
    return s.with_(
        noise=NoiseConfig.from_sigmas(tiny, tiny, tiny, math.degrees(tiny)),
        sensor=replace(s.sensor, landmark_R=np.diag([tiny**2, tiny**2])),
        estimator=replace(s.estimator, initial_sigma=(tiny, tiny, tiny), ccl_latency_steps=0),
        programs=(ControlProgram(((0.0, 0.1, 0.0),)), ControlProgram(((0.0, 0.1, 0.0),))),
        initial_poses=(Pose2(1.0, 2.0, 0.0), Pose2(5.0, 2.5, math.pi)),
        perturb_position=0.0,
        perturb_heading=0.0,
        trials=2,
    )


def test_noise_free_scenario_is_tracked_exactly():
    _, rep = run_scenario(_quiet_scenario())
    for m in rep.methods:
        for r in (1, 2):
            for ax in ("x", "y"):
                assert rep.rmse(m, r, ax) < 1e-6, (m, r, ax)


# --------------------------------------------------------------------------
# runs


def test_dcl_is_invariant_to_local_frames():
    s = default_scenario().with_(methods=("dcl", "dcl-lm"), trials=2)
    moved = s.with_(frames=(FrameTransform(2.0, -1.0, 0.8), FrameTransform(-4.0, 3.0, -2.5)))
    _, a = run_scenario(s)
    _, b = run_scenario(moved)
    for m in s.methods:
        for r in (1, 2):
            for ax in ("x", "y"):
                assert b.rmse(m, r, ax) == pytest.approx(a.rmse(m, r, ax), rel=1e-6)


def test_uncertainty_breathes():
    s = default_scenario()
    st = generate_streams(s, 0)
    res = run_method("dcl", s, st)
    dr = run_method("dr", s, st)
    assert len(res.coop_updates) > 10
    for k in (0, 1):
        tr = np.trace(res.robots[k].cov[:, :2, :2], axis1=1, axis2=2)
        tr_dr = np.trace(dr.robots[k].cov[:, :2, :2], axis1=1, axis2=2)
        stamps = res.robots[k].stamps
        # an update can land after 0.1 s of growth, so most but not all slots dip
        slots = [int(np.argmin(np.abs(stamps - t))) for t in res.coop_updates]
        drops = sum(tr[j] < tr[j - 1] for j in slots)
        assert drops >= 0.75 * len(slots)
        assert np.all(tr <= tr_dr + 1e-12)
        assert tr[-1] < 0.8 * tr_dr[-1]
        # radio outage from 6.5 s to 8 s: only private updates, so net growth,
        # then the first exchange afterwards pulls it back down
        gap = tr[(stamps > 6.45) & (stamps < 7.95)]
        assert gap[-1] > 1.1 * gap[0]
        j = int(np.argmin(np.abs(stamps - 8.0)))
        assert tr[j] < tr[j - 1]


def test_bandwidth_is_ledgered():
    s = default_scenario().with_(methods=("dcl",), trials=1)
    logs, rep = run_scenario(s)
    led = logs[(0, "dcl")].ledgers
    assert led["2->1"].packet_size == 176 and led["1->2"].packet_size == 264
    n = len(logs[(0, "dcl")].coop_updates)
    assert led["1->2"].packets_delivered == n
    bw = rep.bandwidth["dcl"]
    assert bw["broadcast_bytes"] == 27_040
    assert bw["event_bytes"] == led["2->1"].bytes_delivered + led["1->2"].bytes_delivered
    assert bw["event_bytes"] <= bw["broadcast_bytes"]


def test_write_and_reload_run(tmp_path):
    s = default_scenario().with_(methods=("dr", "dcl"), trials=2)
    logs, rep = run_scenario(s)
    out = write_run(tmp_path / "run", s, logs, rep)
    c = read_log(out / "trial_001" / "dcl_robot2.csv")
    assert tuple(c) == LOG_HEADER
    assert len(c["stamp"]) == int(s.duration * s.lidar_rate)
    again = report_from_dir(out)
    assert again.to_json() == rep.to_json()


def test_runs_are_byte_identical(tmp_path):
    s = default_scenario().with_(trials=2, link=replace(default_scenario().link, drop_prob=0.2, jitter=0.05))
    for name in ("a", "b"):
        logs, rep = run_scenario(s)
        write_run(tmp_path / name, s, logs, rep)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    files = [p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()]
    assert len(files) == 3 + 2 * len(s.methods) * 2
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    assert not cmp.diff_files


def test_dead_reckoning_golden(tmp_path):
    s = default_scenario().with_(methods=("dr",), trials=1)
    logs, rep = run_scenario(s)
    out = write_run(tmp_path, s, logs, rep)
    for r in (1, 2):
        got = (out / "trial_000" / f"dr_robot{r}.csv").read_text()
        assert got == (GOLDEN / f"dr_robot{r}.csv").read_text()


# --------------------------------------------------------------------------
# command line


def test_cli_validate(capsys):
    assert main(["validate", "--scenario", str(DEFAULT_TOML)]) == 0
    assert capsys.readouterr().out.startswith("ok: 130 steps")


def test_cli_simulate_and_metrics(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["simulate", "--scenario", str(DEFAULT_TOML), "--out", str(out), "--trials", "1", "--methods", "dr,dcl"])
    assert code == 0
    text = capsys.readouterr().out
    assert "dcl" in text and "bytes per trial" in text
    assert (out / "metrics.json").exists()
    assert main(["metrics", "--in", str(out), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["methods"] == ["dr", "dcl"] and rep["trials"] == 1


def test_cli_errors(tmp_path, capsys):
    assert main(["validate", "--scenario", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[timing]\ndt = -1\n")
    assert main(["validate", "--scenario", str(bad)]) == 2
    assert "timing.dt" in capsys.readouterr().err
    assert main(["simulate", "--scenario", str(DEFAULT_TOML), "--out", str(tmp_path), "--trials", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--scenario", str(DEFAULT_TOML), "--out", str(tmp_path), "--methods", "nope"])
    assert exc.value.code == 2
