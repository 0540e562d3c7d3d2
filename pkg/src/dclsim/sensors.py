"""Synthetic 2D LiDAR, scan segmentation and landmark measurements.

The pipeline that turns a raw scan into a companion observation is

1. :func:`render_scan` ray-casts the walls and the companion's cylinder;
2. :func:`abd_segment` splits the scan with the adaptive breakpoint rule;
3. :func:`extract_cylinder` picks the short arc-like segment whose chord
   matches the cylinder diameter and reports its centre as range/bearing;
4. :func:`gate` screens the detection against the filter's prediction.

Static landmarks (and the companion, in the idealized detector used by the
harness) are observed directly by :func:`observe_static_landmark`.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    DCLError,
    InvalidParameterError,
    NoiseConfig,
    Pose2,
    wrap_angle,
)

log = logging.getLogger(__name__)

#: chi-square 99% quantile for 2 degrees of freedom
CHI2_2DOF_99 = 9.21

DEFAULT_LAMBDA = math.radians(10.0)
DEFAULT_CYLINDER_RADIUS = 0.06
ARC_MAX_SPAN = 10
CHORD_TOLERANCE = 0.5


class OutOfWorldError(DCLError, ValueError):
    pass


class GatingError(DCLError, ValueError):
    pass


def _default_R() -> np.ndarray:
    return NoiseConfig().R


@dataclass(frozen=True, eq=False)
class RangeBearing:
    """Relative observation in the observer's body frame."""

    rho: float
    phi: float
    stamp: float = 0.0
    R: np.ndarray = field(default_factory=_default_R)

    def __post_init__(self):
        if not (math.isfinite(self.rho) and self.rho > 0):
            raise InvalidParameterError(f"range must be > 0, got {self.rho!r}")
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))
        R = np.asarray(self.R, dtype=float)
        if R.shape != (2, 2) or not np.all(np.isfinite(R)):
            raise InvalidParameterError("R must be a finite 2x2 matrix")
        if np.linalg.eigvalsh((R + R.T) / 2.0)[0] <= 0:
            raise InvalidParameterError("R must be positive definite")
        object.__setattr__(self, "R", R)

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.phi])

    def cartesian(self) -> np.ndarray:
        return np.array([self.rho * math.cos(self.phi), self.rho * math.sin(self.phi)])


@dataclass(frozen=True)
class WorldModel:
    """Walls as 2D segments plus known static landmark positions."""

    walls: tuple = ()
    landmarks: tuple = ()
    cylinder_radius: float = DEFAULT_CYLINDER_RADIUS

    def __post_init__(self):
        walls = tuple(
            ((float(a[0]), float(a[1])), (float(b[0]), float(b[1]))) for a, b in self.walls
        )
        landmarks = tuple((float(p[0]), float(p[1])) for p in self.landmarks)
        if len(set(landmarks)) != len(landmarks):
            raise InvalidParameterError("landmark positions must be distinct")
        if not self.cylinder_radius > 0:
            raise InvalidParameterError("cylinder radius must be > 0")
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "landmarks", landmarks)

    @classmethod
    def room(cls, width: float, height: float, extra_walls=(), landmarks=(), **kw) -> WorldModel:
        """Rectangular room with its lower-left corner at the origin."""
        corners = [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)]
        walls = [(corners[i], corners[(i + 1) % 4]) for i in range(4)]
        return cls(walls=tuple(walls) + tuple(extra_walls), landmarks=landmarks, **kw)

    def wall_array(self) -> np.ndarray:
        """Walls as an ``(n, 4)`` array of ``x1, y1, x2, y2``."""
        if not self.walls:
            return np.zeros((0, 4))
        return np.array([[a[0], a[1], b[0], b[1]] for a, b in self.walls])

    def bounds(self) -> tuple[float, float, float, float]:
        w = self.wall_array()
        if len(w) == 0:
            return (-math.inf, -math.inf, math.inf, math.inf)
        xs = np.concatenate([w[:, 0], w[:, 2]])
        ys = np.concatenate([w[:, 1], w[:, 3]])
        return (xs.min(), ys.min(), xs.max(), ys.max())

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.bounds()
        return x0 <= x <= x1 and y0 <= y <= y1

    def landmark_array(self) -> np.ndarray:
        return np.array(self.landmarks, dtype=float).reshape(-1, 2)


def line_of_sight(world: WorldModel, a, b) -> bool:
    """True iff the open segment from ``a`` to ``b`` crosses no wall."""
    walls = world.wall_array()
    if len(walls) == 0:
        return True
    a = np.asarray(a, dtype=float)[:2]
    b = np.asarray(b, dtype=float)[:2]
    d = b - a
    p = walls[:, :2]
    e = walls[:, 2:] - p
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    ap = p - a
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ap[:, 0] * e[:, 1] - ap[:, 1] * e[:, 0]) / denom
        s = (ap[:, 0] * d[1] - ap[:, 1] * d[0]) / denom
    hit = (np.abs(denom) > 1e-15) & (t > 1e-9) & (t < 1 - 1e-9) & (s >= 0) & (s <= 1)
    return not bool(np.any(hit))


# --------------------------------------------------------------------------
# scans


@dataclass(frozen=True, eq=False)
class LidarScan:
    """Ordered polar range samples; ``inf`` marks a beam with no return."""

    ranges: np.ndarray
    angle_min: float
    angle_step: float
    stamp: float = 0.0
    sigma_r: float = 0.02

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float).copy()
        if r.ndim != 1 or len(r) == 0:
            raise InvalidParameterError("a scan needs at least one beam")
        if not self.angle_step > 0:
            raise InvalidParameterError("angle_step must be > 0")
        r[np.isnan(r)] = math.inf
        if np.any(r[np.isfinite(r)] < 0):
            raise InvalidParameterError("ranges must be >= 0")
        r.setflags(write=False)
        object.__setattr__(self, "ranges", r)

    def __len__(self) -> int:
        return len(self.ranges)

    @property
    def angles(self) -> np.ndarray:
        return self.angle_min + self.angle_step * np.arange(len(self.ranges))

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.ranges)

    def points(self) -> np.ndarray:
        """Beam endpoints in the sensor frame; no-return beams give ``inf``."""
        a = self.angles
        with np.errstate(invalid="ignore"):
            return np.column_stack([self.ranges * np.cos(a), self.ranges * np.sin(a)])

    def max_valid_range(self) -> float:
        v = self.ranges[self.valid]
        return float(v.max()) if len(v) else 0.0


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def render_scan(
    world: WorldModel,
    observer: Pose2,
    companion: Optional[Pose2] = None,
    rng_seed=None,
    *,
    n_beams: int = 360,
    angle_min: float = -math.pi,
    max_range: float = 12.0,
    sigma_r: float = 0.02,
    stamp: float = 0.0,
    radius: Optional[float] = None,
) -> LidarScan:
    """Ray-cast one scan from ``observer`` against walls and the companion.

    Beam ``i`` points at ``angle_min + i * 2 pi / n_beams`` in the sensor
    frame. Hits get additive range noise ``N(0, sigma_r^2)``; beams with no
    hit within ``max_range`` are returned as ``inf``.
    """
    if n_beams <= 0:
        raise InvalidParameterError("n_beams must be positive")
    if not world.contains(observer.x, observer.y):
        raise OutOfWorldError(f"observer ({observer.x:.3f}, {observer.y:.3f}) outside world")
    radius = world.cylinder_radius if radius is None else radius
    step = 2.0 * math.pi / n_beams
    rel = angle_min + step * np.arange(n_beams)
    ang = observer.theta + rel
    d = np.column_stack([np.cos(ang), np.sin(ang)])
    o = np.array([observer.x, observer.y])

    best = np.full(n_beams, math.inf)
    walls = world.wall_array()
    if len(walls):
        p = walls[:, :2]
        e = walls[:, 2:] - p
        ap = p - o  # (W, 2)
        denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ap[None, :, 0] * e[None, :, 1] - ap[None, :, 1] * e[None, :, 0]) / denom
            s = (ap[None, :, 0] * d[:, None, 1] - ap[None, :, 1] * d[:, None, 0]) / denom
        ok = (np.abs(denom) > 1e-15) & (t > 1e-12) & (s >= 0) & (s <= 1)
        t = np.where(ok, t, math.inf)
        best = np.minimum(best, t.min(axis=1))
    if companion is not None:
        c = np.array([companion.x, companion.y]) - o
        proj = d @ c
        perp2 = c @ c - proj**2
        disc = radius**2 - perp2
        with np.errstate(invalid="ignore"):
            t = proj - np.sqrt(disc)
        ok = (disc >= 0) & (t > 1e-12)
        best = np.where(ok & (t < best), t, best)

    best[best > max_range] = math.inf
    hit = np.isfinite(best)
    rng = _rng(rng_seed)
    noise = rng.normal(0.0, sigma_r, size=n_beams) if sigma_r > 0 else np.zeros(n_beams)
    ranges = np.where(hit, np.maximum(best + noise, 0.0), math.inf)
    return LidarScan(ranges, angle_min, step, stamp, sigma_r)


# --------------------------------------------------------------------------
# segmentation


class SegmentKind(str, enum.Enum):
    LINE = "line-like"
    ARC = "arc-like"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Segment:
    start_index: int
    end_index: int  # inclusive
    kind: SegmentKind

    @property
    def n(self) -> int:
        return self.end_index - self.start_index + 1


def abd_threshold(
    r_prev: float, angle_step: float, lam: float, sigma_r: float, variant: str = "printed"
) -> float:
    """Adaptive breakpoint distance for a point at range ``r_prev``.

    ``variant="printed"`` uses ``sin(lam)`` in the numerator; ``"borges"``
    uses ``sin(angle_step)``, the form from the original detector, which is
    far tighter (about ``0.11 r`` instead of ``1.1 r`` at 1 deg / 10 deg).
    """
    if lam <= angle_step:
        raise InvalidParameterError(
            f"lambda ({lam:.4g} rad) must exceed the angular step ({angle_step:.4g} rad)"
        )
    if variant == "printed":
        num = math.sin(lam)
    elif variant == "borges":
        num = math.sin(angle_step)
    else:
        raise InvalidParameterError(f"unknown ABD variant {variant!r}")
    return r_prev * num / math.sin(lam - angle_step) + 3.0 * sigma_r


def breakpoints(
    scan: LidarScan, lam: float = DEFAULT_LAMBDA, sigma_r=None, variant: str = "printed"
) -> np.ndarray:
    """Boolean mask ``b`` where ``b[i]`` means beams ``i`` and ``i+1`` split."""
    sigma_r = scan.sigma_r if sigma_r is None else sigma_r
    dphi = scan.angle_step
    r = scan.ranges
    r0, r1 = r[:-1], r[1:]
    thd = abd_threshold(r0, dphi, lam, sigma_r, variant)
    both = np.isfinite(r0) & np.isfinite(r1)
    with np.errstate(invalid="ignore"):
        D = np.sqrt(np.maximum(r0**2 + r1**2 - 2.0 * r0 * r1 * math.cos(dphi), 0.0))
        return ~both | (D > thd)


def _kind(n: int, arc_max_span: int) -> SegmentKind:
    if n == 1:
        return SegmentKind.UNKNOWN
    if n < arc_max_span:
        return SegmentKind.ARC
    return SegmentKind.LINE


def abd_segment(
    scan: LidarScan,
    lam: float = DEFAULT_LAMBDA,
    sigma_r: Optional[float] = None,
    *,
    variant: str = "printed",
    arc_max_span: int = ARC_MAX_SPAN,
) -> list[Segment]:
    """Split a scan into runs of consecutive valid beams.

    Beams ``i`` and ``i+1`` fall in different segments when either has no
    return or when their Euclidean gap exceeds
    ``D_thd = r_i sin(lam) / sin(lam - dphi) + 3 sigma_r``. Segments are
    returned in scan order and partition the valid beams; singletons are kept
    and tagged ``unknown``, runs shorter than ``arc_max_span`` are ``arc-like``.
    """
    split = breakpoints(scan, lam, sigma_r, variant)
    valid = scan.valid
    segments = []
    start = None
    n = len(scan)
    for i in range(n):
        if not valid[i]:
            continue
        if start is None:
            start = i
        if i == n - 1 or split[i]:
            segments.append(Segment(start, i, _kind(i - start + 1, arc_max_span)))
            start = None
    return segments


# --------------------------------------------------------------------------
# cylinder extraction


class CylinderFit(str, enum.Enum):
    MEAN_OFFSET = "mean_offset"
    LEAST_SQUARES = "least_squares"


def _fit_center(pts: np.ndarray, radius: float, strategy: CylinderFit) -> np.ndarray:
    m = pts.mean(axis=0)
    c = m + radius * m / np.linalg.norm(m)
    if strategy is CylinderFit.MEAN_OFFSET:
        return c
    # Gauss-Newton on sum (|p - c| - radius)^2 with the radius held fixed
    for _ in range(10):
        diff = pts - c
        dist = np.linalg.norm(diff, axis=1)
        res = dist - radius
        J = -diff / dist[:, None]
        delta, *_ = np.linalg.lstsq(J, -res, rcond=None)
        c = c + delta
        if np.linalg.norm(delta) < 1e-9:
            break
    return c


def _seam_joined(scan: LidarScan, segments: Sequence[Segment], lam: float = DEFAULT_LAMBDA) -> bool:
    """True when a full-circle scan has no break between its last and first beam."""
    n = len(scan)
    if abs(n * scan.angle_step - 2.0 * math.pi) > 1e-9 or not segments:
        return False
    if segments[0].start_index != 0 or segments[-1].end_index != n - 1:
        return False
    r0, r1 = scan.ranges[-1], scan.ranges[0]
    D = math.sqrt(max(r0 * r0 + r1 * r1 - 2.0 * r0 * r1 * math.cos(scan.angle_step), 0.0))
    return D <= abd_threshold(r0, scan.angle_step, lam, scan.sigma_r)


def extract_cylinder(
    scan: LidarScan,
    segments: Sequence[Segment],
    radius: float = DEFAULT_CYLINDER_RADIUS,
    *,
    max_span: int = ARC_MAX_SPAN,
    chord_tol: float = CHORD_TOLERANCE,
    strategy: CylinderFit = CylinderFit.MEAN_OFFSET,
    R: Optional[np.ndarray] = None,
    hint: Optional[tuple[float, float]] = None,
) -> Optional[RangeBearing]:
    """Locate the companion's cylinder among the scan segments.

    Candidates are arc-like segments of fewer than ``max_span`` beams whose
    end-to-end chord lies within ``chord_tol`` (relative) of ``2 * radius``.
    The centre is the mean hit point pushed back by ``radius`` along the line
    of sight. With several candidates the nearest one is returned, or the
    one closest to ``hint = (rho, phi)`` when given. ``None`` when nothing
    qualifies. A centre lies one radius behind its hits, so the reported
    range never exceeds the farthest valid return plus ``radius``. On a
    full-circle scan the first and last segments count as one when nothing
    separates the last beam from the first.
    """
    strategy = CylinderFit(strategy)
    pts_all = scan.points()
    rmax = scan.max_valid_range()
    groups = [np.arange(s.start_index, s.end_index + 1) for s in segments]
    kinds = [s.kind for s in segments]
    if len(groups) > 1 and _seam_joined(scan, segments):
        # first and last segments are one surface seen across the scan seam
        groups[0] = np.concatenate([groups.pop(), groups[0]])
        kinds.pop()
        kinds[0] = _kind(len(groups[0]), max_span)
    candidates = []
    for idx, kind in zip(groups, kinds):
        if kind is not SegmentKind.ARC or len(idx) >= max_span or len(idx) < 2:
            continue
        pts = pts_all[idx]
        chord = float(np.linalg.norm(pts[-1] - pts[0]))
        if abs(chord - 2.0 * radius) > chord_tol * 2.0 * radius:
            continue
        c = _fit_center(pts, radius, strategy)
        rho = float(np.hypot(c[0], c[1]))
        if rho > rmax + radius or rho <= 0:
            continue
        candidates.append((rho, math.atan2(c[1], c[0])))
    if not candidates:
        return None
    if hint is None:
        rho, phi = min(candidates)
    else:
        hx = hint[0] * math.cos(hint[1])
        hy = hint[0] * math.sin(hint[1])
        rho, phi = min(
            candidates,
            key=lambda rp: (rp[0] * math.cos(rp[1]) - hx) ** 2 + (rp[0] * math.sin(rp[1]) - hy) ** 2,
        )
    if R is None:
        R = NoiseConfig.from_sigmas(0.1, 0.1, 0.02, 2.0).R
    return RangeBearing(rho, phi, scan.stamp, R)


# --------------------------------------------------------------------------
# gating and direct observations


def mahalanobis2(r: np.ndarray, S: np.ndarray) -> float:
    """Squared Mahalanobis norm ``r^T S^-1 r``.

    Raises
    ------
    GatingError
        If ``S`` is not positive definite.
    """
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise GatingError("innovation covariance is not positive definite") from exc
    w = np.linalg.solve(L, r)
    return float(w @ w)


def gate(
    z: RangeBearing, predicted: RangeBearing, S: np.ndarray, threshold: float = CHI2_2DOF_99
) -> bool:
    """Accept ``z`` iff its polar innovation passes the chi-square gate."""
    r = np.array([z.rho - predicted.rho, wrap_angle(z.phi - predicted.phi)])
    try:
        return mahalanobis2(r, S) <= threshold
    except GatingError:
        log.warning("gating rejected measurement at t=%.3f: singular S", z.stamp)
        return False


def relative_polar(observer: Pose2, point) -> tuple[float, float]:
    """True range and bearing of ``point`` seen from ``observer``."""
    dx = point[0] - observer.x
    dy = point[1] - observer.y
    return math.hypot(dx, dy), wrap_angle(math.atan2(dy, dx) - observer.theta)


def observe_static_landmark(
    observer: Pose2,
    landmark,
    R: Optional[np.ndarray] = None,
    rng_seed=None,
    *,
    max_range: float = 6.0,
    fov: float = 2.0 * math.pi,
    stamp: float = 0.0,
) -> Optional[RangeBearing]:
    """Noisy range/bearing to a known point, or ``None`` when out of view.

    The same routine serves for the companion robot when the harness runs
    the idealized detector.
    """
    R = _default_R() if R is None else np.asarray(R, dtype=float)
    rho, phi = relative_polar(observer, landmark)
    if rho > max_range or rho < 1e-6 or abs(phi) > fov / 2.0:
        return None
    rng = _rng(rng_seed)
    n = np.linalg.cholesky(R) @ rng.standard_normal(2)
    rho_n = rho + n[0]
    if rho_n <= 0:
        return None
    return RangeBearing(rho_n, phi + n[1], stamp, R)


# --------------------------------------------------------------------------
# scan fixtures


SCAN_CSV_HEADER = ("angle_rad", "range_m")


def write_scan_csv(path, scan: LidarScan) -> None:
    """Write one scan as ``angle_rad,range_m`` rows; no-return is ``inf``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_CSV_HEADER)
        for a, r in zip(scan.angles, scan.ranges):
            w.writerow([repr(float(a)), repr(float(r))])


def read_scan_csv(path, *, stamp: float = 0.0, sigma_r: float = 0.02) -> LidarScan:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SCAN_CSV_HEADER:
        raise InvalidParameterError(f"{path}: expected header {','.join(SCAN_CSV_HEADER)}")
    data = np.array([[float(a), float(r)] for a, r in rows[1:]])
    if len(data) == 0:
        raise InvalidParameterError(f"{path}: scan has no beams")
    step = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 2.0 * math.pi
    return LidarScan(data[:, 1], float(data[0, 0]), step, stamp, sigma_r)
