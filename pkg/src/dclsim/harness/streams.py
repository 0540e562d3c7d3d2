"""Ground truth and synthesized sensor streams for one trial.

Truth is one chain integrated over the merged grid of odometry and LiDAR
stamps, each step driven by the commanded control at its end stamp. That is
the same rule the filters follow, so with noiseless odometry a filter that
stops at every LiDAR stamp reproduces the truth exactly; one that skips
some of them differs only by the model's step-splitting error.

Every method in a trial consumes the same :class:`Streams` object.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import ControlInput, Pose2, wrap_angle
from ..motion import step
from ..sensors import (
    OutOfWorldError,
    RangeBearing,
    WorldModel,
    abd_segment,
    extract_cylinder,
    line_of_sight,
    observe_static_landmark,
    relative_polar,
    render_scan,
)
from .scenario import Scenario

log = logging.getLogger(__name__)

ASSOCIATION_RADIUS = 0.3


def mutual_visibility(x1, x2, world: WorldModel, max_range: float = 6.0) -> bool:
    """True iff the robots are within ``max_range`` with no wall between them."""
    a = np.asarray(x1, dtype=float)[:2]
    b = np.asarray(x2, dtype=float)[:2]
    if float(np.hypot(*(b - a))) > max_range:
        return False
    return line_of_sight(world, a, b)


@dataclass(frozen=True, eq=False)
class Streams:
    """Everything a trial's filters see, plus the truth they are scored on.

    ``odometry[i]`` starts one step before zero so the first extrapolation
    has two samples. Per LiDAR slot ``j``: ``coop[j]`` is robot 1's reading
    of robot 2 (or ``None``), ``landmarks[j]`` its ``(index, reading)``
    pairs, and ``exchange[j]`` marks the slots where a cooperative exchange
    is attempted.
    """

    odom_stamps: np.ndarray
    lidar_stamps: np.ndarray
    truth_odom: tuple  # 2 x (n_odom, 3)
    truth_lidar: tuple  # 2 x (n_lidar, 3)
    odometry: tuple  # 2 x list[ControlInput]
    coop: list
    landmarks: list
    exchange: np.ndarray
    visible: np.ndarray
    initial_estimates: tuple  # 2 x (3,) in the common frame
    P0: np.ndarray


def _truth_chain(x0: np.ndarray, program, stamps: np.ndarray) -> np.ndarray:
    out = np.empty((len(stamps), 3))
    out[0] = x0
    for k in range(1, len(stamps)):
        v, w = program(stamps[k])
        out[k] = step(out[k - 1], v, w, stamps[k] - stamps[k - 1])
    return out


def _merged_grid(a: np.ndarray, b: np.ndarray, tol: float = 1e-9):
    """Sorted union of two stamp arrays plus the index of each input in it."""
    grid = np.unique(np.concatenate([a, b]))
    keep = np.concatenate([[True], np.diff(grid) > tol])
    grid = grid[keep]
    ia = np.clip(np.searchsorted(grid, a - tol), 0, len(grid) - 1)
    ib = np.clip(np.searchsorted(grid, b - tol), 0, len(grid) - 1)
    return grid, ia, ib


def lidar_stamps(s: Scenario) -> np.ndarray:
    period = 1.0 / s.lidar_rate
    n = int(math.floor(s.duration / period + 1e-9))
    return period * np.arange(1, n + 1)


def trial_rng(s: Scenario, trial: int) -> list[np.random.Generator]:
    """Independent generators per purpose, derived from ``(seed, trial)``."""
    ss = np.random.SeedSequence([s.rng_seed, trial])
    return [np.random.default_rng(c) for c in ss.spawn(6)]


def _detect_companion(
    s: Scenario, observer: Pose2, companion: Pose2, t: float, rng: np.random.Generator
) -> Optional[RangeBearing]:
    sc = s.sensor
    if sc.detector == "ideal":
        if not mutual_visibility(observer.as_array(), companion.as_array(), s.world, sc.max_range):
            return None
        return observe_static_landmark(
            observer,
            (companion.x, companion.y),
            s.noise.R,
            rng,
            max_range=sc.max_range,
            stamp=t,
        )
    try:
        scan = render_scan(
            s.world,
            observer,
            companion,
            rng,
            n_beams=sc.n_beams,
            max_range=sc.max_range,
            sigma_r=sc.sigma_r,
            stamp=t,
        )
    except OutOfWorldError:
        return None
    segs = abd_segment(scan, sc.lam, sc.sigma_r, variant=sc.abd_variant)
    # association uses the true position, so a detection is the companion or nothing
    rho, phi = relative_polar(observer, (companion.x, companion.y))
    z = extract_cylinder(scan, segs, s.world.cylinder_radius, hint=(rho, phi))
    if z is None:
        return None
    miss = z.cartesian() - rho * np.array([math.cos(phi), math.sin(phi)])
    if float(np.hypot(*miss)) > ASSOCIATION_RADIUS:
        return None
    return z


def generate_streams(s: Scenario, trial: int = 0) -> Streams:
    """Truth, odometry and measurements for trial ``trial`` of ``s``."""
    g_pose, g_init, g_odo, g_coop, g_lm, _ = trial_rng(s, trial)
    dt = s.dt
    odom_stamps = dt * np.arange(-1, s.steps + 1)
    tl = lidar_stamps(s)

    starts = []
    for p in s.initial_poses:
        d = g_pose.uniform(-1.0, 1.0, size=3) * np.array(
            [s.perturb_position, s.perturb_position, s.perturb_heading]
        )
        x = p.as_array() + d
        x0, y0, x1, y1 = s.world.bounds()
        margin = 0.2
        x[0] = min(max(x[0], x0 + margin), x1 - margin)
        x[1] = min(max(x[1], y0 + margin), y1 - margin)
        x[2] = wrap_angle(x[2])
        starts.append(x)

    grid, io, il = _merged_grid(odom_stamps[1:], tl)
    truth_odom, truth_lidar, odometry = [], [], []
    Lq = np.linalg.cholesky(s.noise.Q)
    for i in range(2):
        prog = s.programs[i]
        # stamps from 0 on; the pre-zero sample only feeds extrapolation
        chain = _truth_chain(starts[i], prog, grid)
        truth_odom.append(chain[io])
        truth_lidar.append(chain[il])
        samples = []
        for t in odom_stamps:
            v, w = prog(t)
            n = Lq @ g_odo.standard_normal(2)
            samples.append(ControlInput(v + n[0], w + n[1], float(t)))
        odometry.append(samples)

    P0 = s.estimator.P0
    L0 = np.linalg.cholesky(P0)
    init = []
    for i in range(2):
        e = starts[i] + L0 @ g_init.standard_normal(3)
        e[2] = wrap_angle(e[2])
        init.append(e)

    coop, lms = [], []
    visible = np.zeros(len(tl), dtype=bool)
    exchange = np.zeros(len(tl), dtype=bool)
    last_exchange = -math.inf
    lm_arr = s.world.landmark_array()
    for j, t in enumerate(tl):
        p1 = Pose2.from_array(truth_lidar[0][j])
        p2 = Pose2.from_array(truth_lidar[1][j])
        z = _detect_companion(s, p1, p2, float(t), g_coop)
        coop.append(z)
        visible[j] = z is not None
        if (
            z is not None
            and s.link.available(float(t))
            and t - last_exchange >= s.estimator.exchange_period - 1e-9
        ):
            exchange[j] = True
            last_exchange = t
        readings = []
        for k, L in enumerate(lm_arr):
            if not line_of_sight(s.world, p1.as_array(), L):
                continue
            zl = observe_static_landmark(
                p1, L, s.sensor.landmark_R, g_lm, max_range=s.sensor.max_range, stamp=float(t)
            )
            if zl is not None:
                readings.append((k, zl))
        lms.append(readings)

    return Streams(
        odom_stamps=odom_stamps,
        lidar_stamps=tl,
        truth_odom=tuple(truth_odom),
        truth_lidar=tuple(truth_lidar),
        odometry=tuple(odometry),
        coop=coop,
        landmarks=lms,
        exchange=exchange,
        visible=visible,
        initial_estimates=tuple(init),
        P0=P0,
    )
