"""Shared geometric and probabilistic value types.

Everything here is a plain value: poses, controls and noise settings are frozen
dataclasses, covariances are ``(n, n)`` float arrays checked by
:func:`symmetrize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

SYMMETRY_TOL = 1e-12
PSD_TOL = -1e-10


class DCLError(Exception):
    """Base class for all errors raised by this package."""


class CorruptStateError(DCLError, ValueError):
    """A non-finite value reached a place that needs a finite one."""


class CovarianceCollapseError(DCLError, ValueError):
    """A covariance lost positive semi-definiteness."""


class InvalidTimestepError(DCLError, ValueError):
    pass


class InvalidParameterError(DCLError, ValueError):
    pass


class InvalidStreamError(DCLError, ValueError):
    """A timestamped stream violates its ordering contract."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi].

    >>> wrap_angle(3 * math.pi)
    3.141592653589793
    >>> wrap_angle(-math.pi)
    3.141592653589793
    """
    if not math.isfinite(a):
        raise CorruptStateError(f"cannot wrap non-finite angle {a!r}")
    w = math.fmod(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    elif w > math.pi:
        w -= TWO_PI
    return w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise CorruptStateError("cannot wrap non-finite angles")
    w = np.fmod(a, TWO_PI)
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    w = np.where(w > math.pi, w - TWO_PI, w)
    return w


def symmetrize(M: np.ndarray, check_psd: bool = True) -> np.ndarray:
    """Return ``(M + M.T) / 2``, verifying it is still a covariance.

    The result is symmetric bit-for-bit since float addition commutes.

    Raises
    ------
    CorruptStateError
        If ``M`` contains non-finite entries.
    CovarianceCollapseError
        If the smallest eigenvalue is below ``-1e-10``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidParameterError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise CorruptStateError("covariance contains non-finite entries")
    S = (M + M.T) / 2.0
    if check_psd:
        lam = np.linalg.eigvalsh(S)[0]
        if lam < PSD_TOL:
            raise CovarianceCollapseError(f"covariance not PSD: min eigenvalue {lam:.3e}")
    return S


def rot2(theta: float) -> np.ndarray:
    """Counter-clockwise rotation matrix for ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    """Planar pose; ``theta`` is wrapped to (-pi, pi] on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise CorruptStateError(f"non-finite position ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, a) -> Pose2:
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def __add__(self, other: Pose2) -> Pose2:
        return Pose2(self.x + other.x, self.y + other.y, self.theta + other.theta)

    def __sub__(self, other: Pose2) -> Pose2:
        return Pose2(self.x - other.x, self.y - other.y, self.theta - other.theta)


@dataclass(frozen=True)
class ControlInput:
    """Odometry sample: linear velocity ``v`` (m/s), turn rate ``omega`` (rad/s)."""

    v: float
    omega: float
    stamp: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])


@dataclass(frozen=True)
class NoiseConfig:
    """Odometry and relative-measurement noise variances.

    Defaults are ``Q = diag[(0.1 m/s)^2, (0.1 rad/s)^2]`` and
    ``R = diag[(0.01 m)^2, (1 deg)^2]``.
    """

    q_v: float = 0.1**2
    q_omega: float = 0.1**2
    r_range: float = 0.01**2
    r_bearing: float = math.radians(1.0) ** 2

    def __post_init__(self):
        for name in ("q_v", "q_omega", "r_range", "r_bearing"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be > 0, got {value!r}")

    @property
    def Q(self) -> np.ndarray:
        return np.diag([self.q_v, self.q_omega])

    @property
    def R(self) -> np.ndarray:
        return np.diag([self.r_range, self.r_bearing])

    @classmethod
    def from_sigmas(cls, sigma_v, sigma_omega, sigma_range, sigma_bearing_deg) -> NoiseConfig:
        """Build from standard deviations; bearing given in degrees."""
        return cls(
            sigma_v**2, sigma_omega**2, sigma_range**2, math.radians(sigma_bearing_deg) ** 2
        )


@dataclass(frozen=True)
class FrameTransform:
    """Rigid transform from a robot's local odometry frame to the common frame.

    A pose ``p_local`` maps to ``R(dtheta) p_local + (dx, dy)`` with heading
    ``theta_local + dtheta``. State covariances and cross factors map through
    the block rotation ``J = diag(R(dtheta), 1)``.
    """

    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    @property
    def J(self) -> np.ndarray:
        J = np.eye(3)
        J[:2, :2] = rot2(self.dtheta)
        return J

    def pose_to_common(self, x: np.ndarray) -> np.ndarray:
        p = rot2(self.dtheta) @ x[:2] + (self.dx, self.dy)
        return np.array([p[0], p[1], wrap_angle(x[2] + self.dtheta)])

    def pose_to_local(self, x: np.ndarray) -> np.ndarray:
        p = rot2(self.dtheta).T @ (x[:2] - (self.dx, self.dy))
        return np.array([p[0], p[1], wrap_angle(x[2] - self.dtheta)])

    def inverse(self) -> FrameTransform:
        t = -(rot2(self.dtheta).T @ np.array([self.dx, self.dy]))
        return FrameTransform(float(t[0]), float(t[1]), -self.dtheta)

    @property
    def is_identity(self) -> bool:
        return self.dx == 0.0 and self.dy == 0.0 and self.dtheta == 0.0
