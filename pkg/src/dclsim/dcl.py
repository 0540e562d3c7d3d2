"""Per-robot decentralized EKF for two-robot cooperative localization.

Each robot owns a :class:`RobotBelief`: its pose mean, its own 3x3
covariance and a 3x3 *cross factor* ``sigma``. The inter-robot
cross-covariance is never stored whole; it is ``P12 = sigma1 @ sigma2.T``.
Prediction multiplies the local factor by the local motion Jacobian, so the
product follows ``P12 <- F1 P12 F2^T`` with no communication.

A cooperative update runs in two messages:

* robot 2 -> robot 1: :class:`CompanionState` (mean, covariance, factor);
* robot 1 -> robot 2: :class:`UpdatePacket` carrying ``P12``, ``P22``, both
  linearization means, the innovation and robot 2's gain.

Robot 1 measures the companion as range/bearing. The measurement is mapped
to a body-frame displacement ``(rho cos phi, rho sin phi)`` with covariance
``J R J^T`` and compared against ``h = R(theta1)^T (p2 - p1)``.

After an update robot 1 stores ``sigma1 = P12+ sigma2^-T`` and robot 2 keeps
its factor. The product then equals the posterior cross-covariance whether
or not robot 2 ever receives the packet, since a robot that misses it keeps
exactly the error the cross term was computed against.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    ControlInput,
    FrameTransform,
    symmetrize,
    wrap_angle,
)
from .motion import step, step_jacobians
from .sensors import RangeBearing

log = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-12
I3 = np.eye(3)


# --------------------------------------------------------------------------
# measurement models


@dataclass(frozen=True)
class CoopJacobians:
    H1: np.ndarray  # (2, 3) d h / d X1
    H2: np.ndarray  # (2, 3) d h / d X2, heading column is zero


def body_displacement(x1: np.ndarray, p) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``h = R(theta1)^T (p - p1)`` with its Jacobians in ``x1`` and ``p``.

    Returns ``(h, H1, Hp)`` with ``H1`` of shape (2, 3) and ``Hp`` (2, 2).
    """
    c, s = math.cos(x1[2]), math.sin(x1[2])
    dx = p[0] - x1[0]
    dy = p[1] - x1[1]
    h = np.array([c * dx + s * dy, -s * dx + c * dy])
    Hp = np.array([[c, s], [-s, c]])
    H1 = np.array(
        [
            [-c, -s, -s * dx + c * dy],
            [s, -c, -c * dx - s * dy],
        ]
    )
    return h, H1, Hp


def coop_measurement_model(x1, x2) -> tuple[np.ndarray, CoopJacobians]:
    """Predicted body-frame position of robot 2 as seen by robot 1."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    h, H1, Hp = body_displacement(x1, x2)
    H2 = np.zeros((2, 3))
    H2[:, :2] = Hp
    return h, CoopJacobians(H1, H2)


def landmark_measurement_model(x1, landmark) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame position of a fixed landmark and its Jacobian in ``x1``."""
    h, H1, _ = body_displacement(np.asarray(x1, dtype=float), landmark)
    return h, H1


def polar_to_body(z: RangeBearing, R: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian form of a range/bearing reading and its first-order covariance."""
    R = z.R if R is None else np.asarray(R, dtype=float)
    c, s = math.cos(z.phi), math.sin(z.phi)
    J = np.array([[c, -z.rho * s], [s, z.rho * c]])
    return np.array([z.rho * c, z.rho * s]), J @ R @ J.T


def _solve_gain(PHt: np.ndarray, S: np.ndarray) -> Optional[np.ndarray]:
    """``PHt @ inv(S)`` via Cholesky, or ``None`` when ``S`` is not PD."""
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None
    # K S = PHt  <=>  S K^T = PHt^T
    Kt = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T))
    return Kt.T


def _nis(r: np.ndarray, S: np.ndarray) -> float:
    return float(r @ np.linalg.solve(S, r))


# --------------------------------------------------------------------------
# beliefs and messages


@dataclass(frozen=True, eq=False)
class RobotBelief:
    """One robot's local share of the joint estimate."""

    mean: np.ndarray
    P: np.ndarray
    sigma: np.ndarray
    last_stamp: float = 0.0
    last_packet_stamp: float = -math.inf

    @classmethod
    def initial(cls, mean, P, stamp: float = 0.0, robot: int = 1) -> RobotBelief:
        """Uncorrelated start: ``sigma1 = 0``, ``sigma2 = I`` so ``P12 = 0``."""
        mean = np.array(mean, dtype=float)
        mean[2] = wrap_angle(mean[2])
        sigma = np.zeros((3, 3)) if robot == 1 else np.eye(3)
        return cls(mean, symmetrize(P), sigma, stamp)

    def to_common(self, T: FrameTransform) -> RobotBelief:
        """Express a belief held in a local frame in the common frame."""
        if T.is_identity:
            return self
        J = T.J
        return replace(
            self, mean=T.pose_to_common(self.mean), P=symmetrize(J @ self.P @ J.T), sigma=J @ self.sigma
        )

    def to_local(self, T: FrameTransform) -> RobotBelief:
        if T.is_identity:
            return self
        Jt = T.J.T
        return replace(
            self, mean=T.pose_to_local(self.mean), P=symmetrize(Jt @ self.P @ Jt.T), sigma=Jt @ self.sigma
        )


def cross_covariance(b1: RobotBelief, b2: RobotBelief) -> np.ndarray:
    """Reconstruct ``P12`` from the two factors."""
    return b1.sigma @ b2.sigma.T


@dataclass(frozen=True, eq=False)
class CompanionState:
    """Robot 2's state as sent to robot 1 ahead of a cooperative update."""

    stamp: float
    mean: np.ndarray
    P: np.ndarray
    sigma: np.ndarray

    WIRE_FORMAT = "<22d"
    WIRE_SIZE = struct.calcsize(WIRE_FORMAT)  # 176

    def to_bytes(self) -> bytes:
        return struct.pack(
            self.WIRE_FORMAT, self.stamp, *self.mean, *self.P.ravel(), *self.sigma.ravel()
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> CompanionState:
        v = struct.unpack(cls.WIRE_FORMAT, buf)
        return cls(v[0], np.array(v[1:4]), np.array(v[4:13]).reshape(3, 3), np.array(v[13:22]).reshape(3, 3))


def share_state(belief: RobotBelief) -> CompanionState:
    return CompanionState(belief.last_stamp, belief.mean.copy(), belief.P.copy(), belief.sigma.copy())


@dataclass(frozen=True, eq=False)
class UpdatePacket:
    """Robot 1 -> robot 2 message that lets robot 2 apply its half of the update.

    Wire layout (little-endian f64): stamp, x1_mean[3], x2_mean[3],
    P22[9], P12[9], r[2], K2[6] -- 33 values, 264 bytes.
    """

    stamp: float
    x1_mean: np.ndarray
    x2_mean: np.ndarray
    P22: np.ndarray
    P12: np.ndarray
    r: np.ndarray
    K2: np.ndarray

    WIRE_FORMAT = "<33d"
    WIRE_SIZE = struct.calcsize(WIRE_FORMAT)  # 264

    def to_bytes(self) -> bytes:
        return struct.pack(
            self.WIRE_FORMAT,
            self.stamp,
            *self.x1_mean,
            *self.x2_mean,
            *self.P22.ravel(),
            *self.P12.ravel(),
            *self.r,
            *self.K2.ravel(),
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> UpdatePacket:
        v = np.array(struct.unpack(cls.WIRE_FORMAT, buf))
        return cls(
            float(v[0]),
            v[1:4],
            v[4:7],
            v[7:16].reshape(3, 3),
            v[16:25].reshape(3, 3),
            v[25:27],
            v[27:33].reshape(3, 2),
        )


# --------------------------------------------------------------------------
# filter steps


def predict(
    belief: RobotBelief,
    u: ControlInput,
    dt: float,
    Q: np.ndarray,
    jitter: float = DEFAULT_JITTER,
    stamp: Optional[float] = None,
) -> RobotBelief:
    """Local EKF prediction; also advances the cross factor by ``F``.

    ``stamp`` pins the new ``last_stamp`` exactly; by default it is the old
    one plus ``dt``.
    """
    jac = step_jacobians(belief.mean, u.v, u.omega, dt)
    F, G = jac.F, jac.G
    P = symmetrize(F @ belief.P @ F.T + G @ Q @ G.T + jitter * I3)
    return replace(
        belief,
        mean=step(belief.mean, u.v, u.omega, dt),
        P=P,
        sigma=F @ belief.sigma,
        last_stamp=belief.last_stamp + dt if stamp is None else stamp,
    )


@dataclass(frozen=True)
class CoopInnovation:
    r: np.ndarray
    S: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    P12: np.ndarray

    @property
    def nis(self) -> float:
        return _nis(self.r, self.S)


def coop_innovation(
    belief1: RobotBelief, companion: CompanionState, z: RangeBearing, R: Optional[np.ndarray] = None
) -> CoopInnovation:
    """Innovation and its covariance for a cooperative measurement."""
    zc, Rc = polar_to_body(z, R)
    h, jac = coop_measurement_model(belief1.mean, companion.mean)
    H1, H2 = jac.H1, jac.H2
    P12 = belief1.sigma @ companion.sigma.T
    S = (
        H1 @ belief1.P @ H1.T
        + H1 @ P12 @ H2.T
        + H2 @ P12.T @ H1.T
        + H2 @ companion.P @ H2.T
        + Rc
    )
    return CoopInnovation(zc - h, S, H1, H2, P12)


def coop_update_initiator(
    belief1: RobotBelief,
    companion: CompanionState,
    z: RangeBearing,
    R: Optional[np.ndarray] = None,
    gate_threshold: Optional[float] = None,
) -> tuple[RobotBelief, Optional[UpdatePacket]]:
    """Robot 1's half of a cooperative update.

    Returns the updated belief and the packet for robot 2. When the
    innovation fails the gate or ``S`` is singular the belief comes back
    unchanged (the same object) with ``None`` for the packet.
    """
    inn = coop_innovation(belief1, companion, z, R)
    r, S, H1, H2, P12 = inn.r, inn.S, inn.H1, inn.H2, inn.P12
    P11, P22 = belief1.P, companion.P
    K1 = _solve_gain(P11 @ H1.T + P12 @ H2.T, S)
    K2 = _solve_gain(P22 @ H2.T + P12.T @ H1.T, S)
    if K1 is None or K2 is None:
        log.warning("cooperative update at t=%.3f skipped: singular S", z.stamp)
        return belief1, None
    if gate_threshold is not None and _nis(r, S) > gate_threshold:
        log.debug("cooperative measurement at t=%.3f gated out", z.stamp)
        return belief1, None

    A1 = I3 - K1 @ H1
    P11_new = symmetrize(A1 @ P11 - K1 @ H2 @ P12.T)
    P12_new = A1 @ P12 - K1 @ H2 @ P22
    # sigma1 sigma2^T = P12_new with sigma2 left untouched
    sigma1 = np.linalg.solve(companion.sigma, P12_new.T).T
    mean = belief1.mean + K1 @ r
    mean[2] = wrap_angle(mean[2])
    packet = UpdatePacket(
        stamp=z.stamp,
        x1_mean=belief1.mean.copy(),
        x2_mean=companion.mean.copy(),
        P22=P22.copy(),
        P12=P12.copy(),
        r=r.copy(),
        K2=K2,
    )
    return replace(belief1, mean=mean, P=P11_new, sigma=sigma1), packet


def coop_update_responder(belief2: RobotBelief, packet: UpdatePacket) -> RobotBelief:
    """Robot 2's half of a cooperative update, from the packet alone.

    Packets must arrive with strictly increasing stamps; a replayed or
    out-of-order packet is rejected and the belief returned unchanged.
    """
    if packet.stamp <= belief2.last_packet_stamp:
        log.info(
            "stale packet t=%.3f rejected (last applied t=%.3f)", packet.stamp, belief2.last_packet_stamp
        )
        return belief2
    _, jac = coop_measurement_model(packet.x1_mean, packet.x2_mean)
    K2 = packet.K2
    P22 = symmetrize((I3 - K2 @ jac.H2) @ belief2.P - K2 @ jac.H1 @ packet.P12)
    mean = belief2.mean + K2 @ packet.r
    mean[2] = wrap_angle(mean[2])
    return replace(belief2, mean=mean, P=P22, last_packet_stamp=packet.stamp)


def landmark_innovation(
    belief: RobotBelief, z: RangeBearing, landmark, R: Optional[np.ndarray] = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(r, S, H)`` for a static-landmark reading."""
    zc, Rc = polar_to_body(z, R)
    h, H = landmark_measurement_model(belief.mean, landmark)
    return zc - h, H @ belief.P @ H.T + Rc, H


def private_update(
    belief: RobotBelief,
    z: RangeBearing,
    landmark,
    R: Optional[np.ndarray] = None,
    *,
    touches_cross: bool = True,
    gate_threshold: Optional[float] = None,
) -> RobotBelief:
    """EKF update against a known static landmark, no communication.

    With ``touches_cross`` the cross factor is also multiplied by
    ``(I - K H)``, which keeps ``P12`` equal to the true correlation between
    the corrected robot and its untouched companion.
    """
    r, S, H = landmark_innovation(belief, z, landmark, R)
    K = _solve_gain(belief.P @ H.T, S)
    if K is None:
        log.warning("landmark update at t=%.3f skipped: singular S", z.stamp)
        return belief
    if gate_threshold is not None and _nis(r, S) > gate_threshold:
        log.debug("landmark measurement at t=%.3f gated out", z.stamp)
        return belief
    A = I3 - K @ H
    mean = belief.mean + K @ r
    mean[2] = wrap_angle(mean[2])
    sigma = A @ belief.sigma if touches_cross else belief.sigma
    return replace(belief, mean=mean, P=symmetrize(A @ belief.P), sigma=sigma)
