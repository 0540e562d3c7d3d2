"""Scenario definition and the TOML scenario file format.

A scenario file is TOML with these sections (every key optional; missing
keys take the values of :func:`default_scenario`)::

    seed = 7                     # base seed; trial k uses (seed, k)
    trials = 10
    methods = ["dr", "sl", "ccl", "dcl", "ccl-lm", "dcl-lm"]

    [timing]    dt, steps, lidar_rate, sync_slop
    [world]     width, height, walls = [[x1, y1, x2, y2], ...],
                landmarks = [[x, y], ...], cylinder_radius
    [noise]     sigma_v, sigma_omega, sigma_range, sigma_bearing_deg
    [sensor]    max_range, detector = "ideal" | "lidar", n_beams, sigma_r,
                lambda_deg, abd_variant, landmark_sigma_range,
                landmark_sigma_bearing_deg
    [link]      availability = [[t0, t1], ...], latency, jitter, drop_prob, seed
    [estimator] exchange_period, ccl_latency_steps, gate_threshold,
                initial_sigma = [sx, sy, stheta_deg],
                private_update_touches_cross
    [trial_variation] position, heading_deg
    [robot1] / [robot2]
                x, y, theta_deg, frame_offset = [dx, dy, dtheta_deg],
                controls = [[t, v, omega], ...]   # piecewise linear

Angles are degrees in the file and radians everywhere else.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..core import DCLError, FrameTransform, NoiseConfig, Pose2
from ..network import LinkModel
from ..sensors import CHI2_2DOF_99, WorldModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

METHODS = ("dr", "sl", "ccl", "dcl", "ccl-lm", "dcl-lm")


class ConfigError(DCLError, ValueError):
    """Invalid scenario configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class ControlProgram:
    """Piecewise-linear ``(v, omega)`` commands through ``(t, v, omega)`` knots.

    Values are held constant before the first and after the last knot.
    """

    knots: tuple

    def __post_init__(self):
        knots = tuple((float(t), float(v), float(w)) for t, v, w in self.knots)
        if not knots:
            raise ValueError("a control program needs at least one knot")
        ts = [k[0] for k in knots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("knot times must be strictly increasing")
        object.__setattr__(self, "knots", knots)

    def __call__(self, t: float) -> tuple[float, float]:
        k = np.array(self.knots)
        return float(np.interp(t, k[:, 0], k[:, 1])), float(np.interp(t, k[:, 0], k[:, 2]))


@dataclass(frozen=True)
class SensorConfig:
    max_range: float = 6.0
    detector: str = "ideal"
    n_beams: int = 360
    sigma_r: float = 0.02
    lam: float = math.radians(10.0)
    abd_variant: str = "printed"
    # static landmarks are observed with the experimental LiDAR accuracy
    landmark_R: np.ndarray = field(
        default_factory=lambda: NoiseConfig.from_sigmas(0.1, 0.1, 0.02, 2.0).R
    )


@dataclass(frozen=True)
class EstimatorConfig:
    exchange_period: float = 0.7
    ccl_latency_steps: int = 1
    gate_threshold: float = CHI2_2DOF_99
    initial_sigma: tuple = (0.05, 0.05, math.radians(2.0))
    private_update_touches_cross: bool = True

    @property
    def P0(self) -> np.ndarray:
        return np.diag(np.square(self.initial_sigma))


@dataclass(frozen=True)
class Scenario:
    world: WorldModel
    programs: tuple  # (ControlProgram, ControlProgram)
    initial_poses: tuple  # (Pose2, Pose2)
    frames: tuple = (FrameTransform(), FrameTransform())
    dt: float = 0.166
    steps: int = 130
    lidar_rate: float = 10.0
    sync_slop: float = 0.0
    noise: NoiseConfig = NoiseConfig()
    sensor: SensorConfig = SensorConfig()
    link: LinkModel = LinkModel()
    estimator: EstimatorConfig = EstimatorConfig()
    methods: tuple = METHODS
    trials: int = 10
    rng_seed: int = 7
    perturb_position: float = 0.5
    perturb_heading: float = math.radians(30.0)

    @property
    def duration(self) -> float:
        return self.steps * self.dt

    @property
    def odometry_rate(self) -> float:
        return 1.0 / self.dt

    def with_(self, **changes) -> Scenario:
        return replace(self, **changes)


def default_scenario() -> Scenario:
    """Two counter-rotating loops in a 6 x 7 m room with a short partition.

    Robot 1 carries the LiDAR; four corner posts act as static landmarks.
    The link drops out twice and the partition hides the robots from each
    other late in the run, so exchanges are intermittent. Controls are
    piecewise linear with long segments, where extrapolation is exact.
    Walls only occlude sensing; the motion model has no collisions.
    """
    world = WorldModel.room(
        6.0,
        7.0,
        extra_walls=[((3.2, 3.5), (3.2, 4.9))],
        landmarks=[(0.5, 0.5), (5.5, 0.5), (5.5, 6.5), (0.5, 6.5)],
    )
    robot1 = ControlProgram(
        [
            (0.0, 0.30, 0.25),
            (4.0, 0.30, 0.45),
            (8.0, 0.30, 0.15),
            (10.5, 0.30, 0.25),
            (11.5, 0.25, 1.0),
            (13.5, 0.25, 1.0),
            (14.5, 0.30, 0.3),
            (18.0, 0.30, 0.5),
            (21.6, 0.30, 0.2),
        ]
    )
    robot2 = ControlProgram(
        [
            (0.0, 0.30, -0.35),
            (3.0, 0.30, -0.2),
            (5.0, 0.30, -0.3),
            (6.0, 0.25, -1.0),
            (8.0, 0.25, -1.0),
            (9.0, 0.30, -0.3),
            (13.0, 0.30, -0.5),
            (17.0, 0.30, -0.15),
            (21.6, 0.30, -0.35),
        ]
    )
    return Scenario(
        world=world,
        programs=(robot1, robot2),
        initial_poses=(Pose2(1.9, 2.1, 0.0), Pose2(4.5, 2.1, math.pi)),
        link=LinkModel(availability=((0.0, 6.5), (8.0, 15.0), (16.5, 30.0)), rng_seed=11),
    )


# --------------------------------------------------------------------------
# parsing


_SECTIONS = {
    "timing": {"dt", "steps", "lidar_rate", "sync_slop"},
    "world": {"width", "height", "walls", "landmarks", "cylinder_radius"},
    "noise": {"sigma_v", "sigma_omega", "sigma_range", "sigma_bearing_deg"},
    "sensor": {
        "max_range",
        "detector",
        "n_beams",
        "sigma_r",
        "lambda_deg",
        "abd_variant",
        "landmark_sigma_range",
        "landmark_sigma_bearing_deg",
    },
    "link": {"availability", "latency", "jitter", "drop_prob", "seed"},
    "estimator": {
        "exchange_period",
        "ccl_latency_steps",
        "gate_threshold",
        "initial_sigma",
        "private_update_touches_cross",
    },
    "trial_variation": {"position", "heading_deg"},
    "robot1": {"x", "y", "theta_deg", "frame_offset", "controls"},
    "robot2": {"x", "y", "theta_deg", "frame_offset", "controls"},
}
_TOP = {"seed", "trials", "methods"}


def _num(d: dict, key: str, path: str, default, *, positive=False, nonneg=False, integer=False):
    if key not in d:
        return default
    v = d[key]
    p = f"{path}.{key}" if path else key
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(p, f"expected a number, got {type(v).__name__}")
    if integer and not isinstance(v, int):
        raise ConfigError(p, "expected an integer")
    if not math.isfinite(v):
        raise ConfigError(p, "must be finite")
    if positive and not v > 0:
        raise ConfigError(p, "must be > 0")
    if nonneg and not v >= 0:
        raise ConfigError(p, "must be >= 0")
    return v


def _rows(d: dict, key: str, path: str, width: int, default):
    if key not in d:
        return default
    p = f"{path}.{key}"
    v = d[key]
    if not isinstance(v, list):
        raise ConfigError(p, "expected a list")
    out = []
    for i, row in enumerate(v):
        if not (isinstance(row, list) and len(row) == width):
            raise ConfigError(f"{p}[{i}]", f"expected a list of {width} numbers")
        for j, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise ConfigError(f"{p}[{i}][{j}]", "expected a finite number")
        out.append(tuple(float(x) for x in row))
    return out


def scenario_from_dict(data: dict[str, Any], base: Optional[Scenario] = None) -> Scenario:
    """Build a scenario from parsed TOML, overriding ``base`` (default scenario)."""
    s = default_scenario() if base is None else base
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(key, "expected a section")
            unknown = set(value) - _SECTIONS[key]
            if unknown:
                raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown key")
        elif key not in _TOP:
            raise ConfigError(key, "unknown key")

    seed = _num(data, "seed", "", s.rng_seed, integer=True, nonneg=True)
    trials = _num(data, "trials", "", s.trials, integer=True, positive=True)
    methods = s.methods
    if "methods" in data:
        m = data["methods"]
        if not isinstance(m, list) or not m:
            raise ConfigError("methods", "expected a non-empty list")
        for i, name in enumerate(m):
            if name not in METHODS:
                raise ConfigError(f"methods[{i}]", f"unknown method {name!r}")
        methods = tuple(m)

    t = data.get("timing", {})
    dt = _num(t, "dt", "timing", s.dt, positive=True)
    steps = _num(t, "steps", "timing", s.steps, integer=True, positive=True)
    lidar_rate = _num(t, "lidar_rate", "timing", s.lidar_rate, positive=True)
    slop = _num(t, "sync_slop", "timing", s.sync_slop, nonneg=True)

    w = data.get("world", {})
    world = s.world
    if w:
        x0, y0, x1, y1 = world.bounds()
        width = _num(w, "width", "world", x1 - x0, positive=True)
        height = _num(w, "height", "world", y1 - y0, positive=True)
        extra = _rows(w, "walls", "world", 4, None)
        if extra is None:
            extra_walls = world.walls[4:]
        else:
            extra_walls = [((a, b), (c, d)) for a, b, c, d in extra]
        lms = _rows(w, "landmarks", "world", 2, list(world.landmarks))
        radius = _num(w, "cylinder_radius", "world", world.cylinder_radius, positive=True)
        try:
            world = WorldModel.room(width, height, extra_walls, lms, cylinder_radius=radius)
        except ValueError as exc:
            raise ConfigError("world", str(exc)) from exc

    n = data.get("noise", {})
    nz = s.noise
    noise = NoiseConfig.from_sigmas(
        _num(n, "sigma_v", "noise", math.sqrt(nz.q_v), positive=True),
        _num(n, "sigma_omega", "noise", math.sqrt(nz.q_omega), positive=True),
        _num(n, "sigma_range", "noise", math.sqrt(nz.r_range), positive=True),
        _num(n, "sigma_bearing_deg", "noise", math.degrees(math.sqrt(nz.r_bearing)), positive=True),
    )

    se = data.get("sensor", {})
    sc = s.sensor
    detector = se.get("detector", sc.detector)
    if detector not in ("ideal", "lidar"):
        raise ConfigError("sensor.detector", "expected 'ideal' or 'lidar'")
    variant = se.get("abd_variant", sc.abd_variant)
    if variant not in ("printed", "borges"):
        raise ConfigError("sensor.abd_variant", "expected 'printed' or 'borges'")
    lm_R = sc.landmark_R
    if "landmark_sigma_range" in se or "landmark_sigma_bearing_deg" in se:
        lm_R = NoiseConfig.from_sigmas(
            0.1,
            0.1,
            _num(se, "landmark_sigma_range", "sensor", math.sqrt(lm_R[0, 0]), positive=True),
            _num(
                se,
                "landmark_sigma_bearing_deg",
                "sensor",
                math.degrees(math.sqrt(lm_R[1, 1])),
                positive=True,
            ),
        ).R
    n_beams = _num(se, "n_beams", "sensor", sc.n_beams, integer=True, positive=True)
    lam = math.radians(_num(se, "lambda_deg", "sensor", math.degrees(sc.lam), positive=True))
    if lam <= 2 * math.pi / n_beams:
        raise ConfigError("sensor.lambda_deg", "must exceed the angular resolution")
    sensor = SensorConfig(
        max_range=_num(se, "max_range", "sensor", sc.max_range, positive=True),
        detector=detector,
        n_beams=n_beams,
        sigma_r=_num(se, "sigma_r", "sensor", sc.sigma_r, nonneg=True),
        lam=lam,
        abd_variant=variant,
        landmark_R=lm_R,
    )

    lk = data.get("link", {})
    lm = s.link
    avail = lm.availability
    if "availability" in lk:
        avail = tuple(_rows(lk, "availability", "link", 2, None))
    drop = _num(lk, "drop_prob", "link", lm.drop_prob, nonneg=True)
    if drop >= 1:
        raise ConfigError("link.drop_prob", "must be < 1")
    try:
        link = LinkModel(
            availability=avail,
            latency=_num(lk, "latency", "link", lm.latency, nonneg=True),
            jitter=_num(lk, "jitter", "link", lm.jitter, nonneg=True),
            drop_prob=drop,
            rng_seed=_num(lk, "seed", "link", lm.rng_seed, integer=True, nonneg=True),
        )
    except ValueError as exc:
        raise ConfigError("link.availability", str(exc)) from exc

    es = data.get("estimator", {})
    ec = s.estimator
    init_sigma = ec.initial_sigma
    if "initial_sigma" in es:
        v = es["initial_sigma"]
        if not (isinstance(v, list) and len(v) == 3):
            raise ConfigError("estimator.initial_sigma", "expected [sx, sy, stheta_deg]")
        vals = [_num({"v": x}, "v", f"estimator.initial_sigma[{i}]", None, positive=True) for i, x in enumerate(v)]
        init_sigma = (vals[0], vals[1], math.radians(vals[2]))
    touches = es.get("private_update_touches_cross", ec.private_update_touches_cross)
    if not isinstance(touches, bool):
        raise ConfigError("estimator.private_update_touches_cross", "expected true or false")
    estimator = EstimatorConfig(
        exchange_period=_num(es, "exchange_period", "estimator", ec.exchange_period, nonneg=True),
        ccl_latency_steps=_num(
            es, "ccl_latency_steps", "estimator", ec.ccl_latency_steps, integer=True, nonneg=True
        ),
        gate_threshold=_num(es, "gate_threshold", "estimator", ec.gate_threshold, positive=True),
        initial_sigma=init_sigma,
        private_update_touches_cross=touches,
    )

    tv = data.get("trial_variation", {})
    perturb_position = _num(tv, "position", "trial_variation", s.perturb_position, nonneg=True)
    perturb_heading = math.radians(
        _num(tv, "heading_deg", "trial_variation", math.degrees(s.perturb_heading), nonneg=True)
    )

    poses, frames, programs = list(s.initial_poses), list(s.frames), list(s.programs)
    for i, name in enumerate(("robot1", "robot2")):
        r = data.get(name, {})
        if not r:
            continue
        p0 = poses[i]
        poses[i] = Pose2(
            _num(r, "x", name, p0.x),
            _num(r, "y", name, p0.y),
            math.radians(_num(r, "theta_deg", name, math.degrees(p0.theta))),
        )
        if "frame_offset" in r:
            fo = _rows({"f": [r["frame_offset"]]}, "f", f"{name}.frame_offset", 3, None)[0]
            frames[i] = FrameTransform(fo[0], fo[1], math.radians(fo[2]))
        if "controls" in r:
            knots = _rows(r, "controls", name, 3, None)
            try:
                programs[i] = ControlProgram(knots)
            except ValueError as exc:
                raise ConfigError(f"{name}.controls", str(exc)) from exc

    out = Scenario(
        world=world,
        programs=tuple(programs),
        initial_poses=tuple(poses),
        frames=tuple(frames),
        dt=dt,
        steps=steps,
        lidar_rate=lidar_rate,
        sync_slop=slop,
        noise=noise,
        sensor=sensor,
        link=link,
        estimator=estimator,
        methods=methods,
        trials=trials,
        rng_seed=seed,
        perturb_position=perturb_position,
        perturb_heading=perturb_heading,
    )
    validate(out)
    return out


def validate(s: Scenario) -> None:
    """Cross-field checks that single-key parsing cannot catch."""
    if abs(s.steps * s.dt - s.duration) > 1e-9:
        raise ConfigError("timing", "steps * dt must equal the duration")
    for i, p in enumerate(s.initial_poses):
        if not s.world.contains(p.x, p.y):
            raise ConfigError(f"robot{i + 1}", "initial pose lies outside the world")
    if len(s.programs) != 2 or len(s.initial_poses) != 2 or len(s.frames) != 2:
        raise ConfigError("robots", "exactly two robots are supported")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"not valid TOML: {exc}") from exc
    return scenario_from_dict(data)
