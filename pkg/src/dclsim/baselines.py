"""Comparison estimators: dead reckoning, single-robot landmark localization,
and the centralized joint EKF over the stacked 6-dof state.

DR and SL reuse the decentralized module's prediction and private update so
the math cannot drift apart; the centralized filter is written out in full
because it doubles as the exactness oracle for the decentralized one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import ControlInput, symmetrize, wrap_angle
from .dcl import (
    DEFAULT_JITTER,
    RobotBelief,
    _nis,
    _solve_gain,
    coop_measurement_model,
    landmark_measurement_model,
    polar_to_body,
    predict,
    private_update,
)
from .motion import step, step_jacobians
from .sensors import RangeBearing

log = logging.getLogger(__name__)

I6 = np.eye(6)


def dr_step(
    belief: RobotBelief, u: ControlInput, dt: float, Q: np.ndarray, stamp: Optional[float] = None
) -> RobotBelief:
    """Odometry-only step; identical to the decentralized prediction."""
    return predict(belief, u, dt, Q, stamp=stamp)


def sl_update(
    belief: RobotBelief,
    z: RangeBearing,
    landmark,
    R: Optional[np.ndarray] = None,
    gate_threshold: Optional[float] = None,
) -> RobotBelief:
    """Single-robot landmark update; the cross factor is left alone."""
    return private_update(belief, z, landmark, R, touches_cross=False, gate_threshold=gate_threshold)


@dataclass(frozen=True, eq=False)
class JointBelief:
    """Centralized estimate of both robots: ``mean = [X1, X2]``, ``P`` is 6x6."""

    mean: np.ndarray
    P: np.ndarray
    last_stamp: float = 0.0

    @classmethod
    def from_beliefs(cls, b1: RobotBelief, b2: RobotBelief) -> JointBelief:
        P = np.zeros((6, 6))
        P[:3, :3] = b1.P
        P[3:, 3:] = b2.P
        P12 = b1.sigma @ b2.sigma.T
        P[:3, 3:] = P12
        P[3:, :3] = P12.T
        return cls(np.concatenate([b1.mean, b2.mean]), symmetrize(P), b1.last_stamp)

    def block(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of robot ``i`` (1 or 2)."""
        s = slice(0, 3) if i == 1 else slice(3, 6)
        return self.mean[s].copy(), self.P[s, s].copy()

    @property
    def P12(self) -> np.ndarray:
        return self.P[:3, 3:].copy()


def ccl_predict(
    joint: JointBelief,
    u1: ControlInput,
    u2: ControlInput,
    dt: float,
    Q1: np.ndarray,
    Q2: np.ndarray,
    jitter: float = DEFAULT_JITTER,
    stamp: Optional[float] = None,
) -> JointBelief:
    """Propagate both robots with a block-diagonal Jacobian."""
    x1, x2 = joint.mean[:3], joint.mean[3:]
    j1 = step_jacobians(x1, u1.v, u1.omega, dt)
    j2 = step_jacobians(x2, u2.v, u2.omega, dt)
    F = np.zeros((6, 6))
    F[:3, :3] = j1.F
    F[3:, 3:] = j2.F
    W = np.zeros((6, 6))
    W[:3, :3] = j1.G @ Q1 @ j1.G.T
    W[3:, 3:] = j2.G @ Q2 @ j2.G.T
    P = symmetrize(F @ joint.P @ F.T + W + jitter * I6)
    mean = np.concatenate([step(x1, u1.v, u1.omega, dt), step(x2, u2.v, u2.omega, dt)])
    return replace(joint, mean=mean, P=P, last_stamp=joint.last_stamp + dt if stamp is None else stamp)


def _joint_update(
    joint: JointBelief, r: np.ndarray, H: np.ndarray, Rc: np.ndarray, stamp: float, gate_threshold
) -> JointBelief:
    S = H @ joint.P @ H.T + Rc
    K = _solve_gain(joint.P @ H.T, S)
    if K is None:
        log.warning("joint update at t=%.3f skipped: singular S", stamp)
        return joint
    if gate_threshold is not None and _nis(r, S) > gate_threshold:
        log.debug("joint measurement at t=%.3f gated out", stamp)
        return joint
    mean = joint.mean + K @ r
    mean[2] = wrap_angle(mean[2])
    mean[5] = wrap_angle(mean[5])
    return replace(joint, mean=mean, P=symmetrize((I6 - K @ H) @ joint.P))


def ccl_update(
    joint: JointBelief,
    z: RangeBearing,
    R: Optional[np.ndarray] = None,
    gate_threshold: Optional[float] = None,
) -> JointBelief:
    """Joint EKF update for robot 1's observation of robot 2, ``H = [H1 H2]``."""
    zc, Rc = polar_to_body(z, R)
    h, jac = coop_measurement_model(joint.mean[:3], joint.mean[3:])
    H = np.hstack([jac.H1, jac.H2])
    return _joint_update(joint, zc - h, H, Rc, z.stamp, gate_threshold)


def ccl_lm_update(
    joint: JointBelief,
    z: RangeBearing,
    landmark,
    R: Optional[np.ndarray] = None,
    gate_threshold: Optional[float] = None,
) -> JointBelief:
    """Joint EKF update for robot 1's observation of a static landmark, ``H = [H1 0]``."""
    zc, Rc = polar_to_body(z, R)
    h, H1 = landmark_measurement_model(joint.mean[:3], landmark)
    H = np.hstack([H1, np.zeros((2, 3))])
    return _joint_update(joint, zc - h, H, Rc, z.stamp, gate_threshold)
