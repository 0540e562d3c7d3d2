"""Discrete unicycle kinematics and the Jacobians used by the EKF prediction.

One step of the model advances a pose ``[x, y, theta]`` under control
``[v, omega]`` held for ``dt`` seconds::

    x'     = x + v dt cos(theta + dtheta)
    y'     = y + v dt sin(theta + dtheta)
    theta' = theta + omega dt

with ``dtheta = omega dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ControlInput,
    CorruptStateError,
    InvalidTimestepError,
    Pose2,
    wrap_angle,
)


@dataclass(frozen=True)
class MotionJacobians:
    F: np.ndarray  # (3, 3) d f / d state
    G: np.ndarray  # (3, 2) d f / d control


def _check(v: float, omega: float, dt: float) -> None:
    if not dt > 0:
        raise InvalidTimestepError(f"dt must be > 0, got {dt!r}")
    if not (math.isfinite(v) and math.isfinite(omega)):
        raise CorruptStateError(f"non-finite control ({v}, {omega})")


def step(x: np.ndarray, v: float, omega: float, dt: float) -> np.ndarray:
    """Array form of :func:`propagate`; ``x`` is ``[x, y, theta]``."""
    _check(v, omega, dt)
    heading = x[2] + omega * dt
    return np.array(
        [
            x[0] + v * dt * math.cos(heading),
            x[1] + v * dt * math.sin(heading),
            wrap_angle(x[2] + omega * dt),
        ]
    )


def step_jacobians(x: np.ndarray, v: float, omega: float, dt: float) -> MotionJacobians:
    _check(v, omega, dt)
    heading = x[2] + omega * dt
    c, s = math.cos(heading), math.sin(heading)
    F = np.eye(3)
    F[0, 2] = -v * dt * s
    F[1, 2] = v * dt * c
    G = np.array(
        [
            [dt * c, -v * dt * dt * s],
            [dt * s, v * dt * dt * c],
            [0.0, dt],
        ]
    )
    return MotionJacobians(F, G)


def propagate(pose: Pose2, u: ControlInput, dt: float) -> Pose2:
    """Advance ``pose`` by one step of the unicycle model.

    Raises
    ------
    InvalidTimestepError
        If ``dt <= 0``.
    """
    return Pose2.from_array(step(pose.as_array(), u.v, u.omega, dt))


def jacobians(pose: Pose2, u: ControlInput, dt: float) -> MotionJacobians:
    """Analytic partial derivatives of :func:`propagate` at ``(pose, u)``."""
    return step_jacobians(pose.as_array(), u.v, u.omega, dt)
