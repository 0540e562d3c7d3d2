"""Run each localization method over a trial's streams.

All filters are driven by :class:`StampedQueue` schedules. Predictions are
committed at odometry stamps and at the stamps of the measurements a method
actually processes; the logged estimate at every LiDAR stamp is a
non-committing extrapolation of the current state. DCL and CCL therefore
commit identical prediction legs whenever they process the same exchanges,
which is what makes them comparable step for step.

DCL beliefs live in each robot's own frame and are moved into the common
frame only for an exchange; CCL is a single joint filter in the common frame
whose measurements reach it ``ccl_latency_steps`` odometry steps late.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..baselines import JointBelief, ccl_lm_update, ccl_predict, ccl_update, sl_update
from ..core import FrameTransform, InvalidParameterError, wrap_angles
from ..dcl import (
    CompanionState,
    RobotBelief,
    UpdatePacket,
    coop_update_initiator,
    coop_update_responder,
    predict,
    private_update,
    share_state,
)
from ..network import BandwidthLedger, EventQueue, Link
from ..sync import Predict, StampedQueue
from .scenario import METHODS, Scenario
from .streams import Streams

_Event = namedtuple("_Event", "stamp")
_EPS = 1e-9


@dataclass
class RobotLog:
    """Per-LiDAR-stamp truth and estimate of one robot, common frame."""

    stamps: np.ndarray
    truth: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    @property
    def error(self) -> np.ndarray:
        e = self.mean - self.truth
        e[:, 2] = wrap_angles(e[:, 2])
        return e

    @property
    def nees(self) -> np.ndarray:
        e = self.error
        return np.einsum("ni,ni->n", e, np.linalg.solve(self.cov, e[..., None])[..., 0])


@dataclass
class MethodResult:
    method: str
    robots: tuple  # (RobotLog, RobotLog)
    cross: Optional[np.ndarray] = None  # (n, 3, 3) P12 in the common frame
    ledgers: dict = field(default_factory=dict)
    coop_updates: list = field(default_factory=list)  # stamps of accepted cooperative updates


class _Track:
    """One robot's belief behind its own odometry queue."""

    def __init__(self, belief: RobotBelief, odometry, Q: np.ndarray, slop: float):
        self.belief = belief
        self.Q = Q
        self.queue = StampedQueue(slop, start=belief.last_stamp)
        self._odo = odometry
        self._i = 0

    def _feed(self, t: float) -> None:
        while self._i < len(self._odo) and self._odo[self._i].stamp <= t + _EPS:
            self.queue.push(self._odo[self._i])
            self._i += 1

    def _apply(self, actions) -> bool:
        updated = False
        for a in actions:
            if isinstance(a, Predict):
                self.belief = predict(self.belief, a.u, a.dt, a.noise_scale * self.Q, stamp=a.stamp)
            else:
                updated = True
        return updated

    def advance(self, t: float) -> None:
        self._feed(t)
        self._apply(self.queue.drain(t))

    def align(self, t: float) -> bool:
        """Bring the committed state to ``t``; False if that is impossible."""
        self._feed(t)
        return self._apply(self.queue.schedule(_Event(t)))

    def peek(self, t: float) -> RobotBelief:
        leg = self.queue.extrapolation(t)
        if leg is None:
            return self.belief
        return predict(self.belief, leg.u, leg.dt, leg.noise_scale * self.Q, stamp=t)


class _JointTrack:
    """The centralized filter behind both robots' odometry queues."""

    def __init__(self, joint: JointBelief, odometry, Qs, slop: float):
        self.joint = joint
        self.Qs = Qs
        self.queues = [StampedQueue(slop, start=joint.last_stamp) for _ in range(2)]
        self._odo = odometry
        self._i = [0, 0]

    def _feed(self, t: float) -> None:
        for r in range(2):
            odo, q = self._odo[r], self.queues[r]
            while self._i[r] < len(odo) and odo[self._i[r]].stamp <= t + _EPS:
                q.push(odo[self._i[r]])
                self._i[r] += 1

    def _apply(self, a1, a2) -> bool:
        p1 = [a for a in a1 if isinstance(a, Predict)]
        p2 = [a for a in a2 if isinstance(a, Predict)]
        if len(p1) != len(p2):
            raise InvalidParameterError("odometry streams of the two robots are not aligned")
        for x, y in zip(p1, p2):
            self.joint = self._step(self.joint, x, y)
        return len(p1) < len(a1) and len(p2) < len(a2)

    def _step(self, joint, x: Predict, y: Predict) -> JointBelief:
        if abs(x.stamp - y.stamp) > _EPS:
            raise InvalidParameterError("odometry streams of the two robots are not aligned")
        Q1, Q2 = self.Qs
        return ccl_predict(
            joint, x.u, y.u, x.dt, x.noise_scale * Q1, y.noise_scale * Q2, stamp=x.stamp
        )

    def advance(self, t: float) -> None:
        self._feed(t)
        self._apply(self.queues[0].drain(t), self.queues[1].drain(t))

    def align(self, t: float) -> bool:
        self._feed(t)
        return self._apply(self.queues[0].schedule(_Event(t)), self.queues[1].schedule(_Event(t)))

    def peek(self, t: float) -> JointBelief:
        x, y = self.queues[0].extrapolation(t), self.queues[1].extrapolation(t)
        if x is None or y is None:
            return self.joint
        return self._step(self.joint, x, y)


def _initial_beliefs(s: Scenario, st: Streams) -> list[RobotBelief]:
    return [
        RobotBelief.initial(st.initial_estimates[i], st.P0, 0.0, robot=i + 1) for i in range(2)
    ]


class _Logger:
    def __init__(self, st: Streams, with_cross: bool):
        n = len(st.lidar_stamps)
        self.st = st
        self.mean = [np.empty((n, 3)) for _ in range(2)]
        self.cov = [np.empty((n, 3, 3)) for _ in range(2)]
        self.cross = np.empty((n, 3, 3)) if with_cross else None

    def record(self, j: int, means, covs, cross=None) -> None:
        for i in range(2):
            self.mean[i][j] = means[i]
            self.cov[i][j] = covs[i]
        if self.cross is not None:
            self.cross[j] = cross

    def robots(self) -> tuple:
        st = self.st
        return tuple(
            RobotLog(st.lidar_stamps.copy(), st.truth_lidar[i].copy(), self.mean[i], self.cov[i])
            for i in range(2)
        )


def _run_independent(s: Scenario, st: Streams, landmarks: bool, name: str) -> MethodResult:
    """DR for both robots, or SL for robot 1 next to DR for robot 2."""
    Q = s.noise.Q
    tracks = [_Track(b, st.odometry[i], Q, s.sync_slop) for i, b in enumerate(_initial_beliefs(s, st))]
    lm = s.world.landmark_array()
    log = _Logger(st, with_cross=False)
    for j, t in enumerate(st.lidar_stamps):
        for tr in tracks:
            tr.advance(t)
        if landmarks and st.landmarks[j] and tracks[0].align(t):
            for k, z in st.landmarks[j]:
                tracks[0].belief = sl_update(
                    tracks[0].belief, z, lm[k], gate_threshold=s.estimator.gate_threshold
                )
        peeks = [tr.peek(t) for tr in tracks]
        log.record(j, [b.mean for b in peeks], [b.P for b in peeks])
    return MethodResult(name, log.robots())


def _landmarks_local(s: Scenario, T: FrameTransform) -> np.ndarray:
    lm = s.world.landmark_array()
    if T.is_identity or len(lm) == 0:
        return lm
    return np.array([T.pose_to_local(np.array([x, y, 0.0]))[:2] for x, y in lm])


def run_dcl(s: Scenario, st: Streams, landmarks: bool = False) -> MethodResult:
    """Decentralized filter with two-message exchanges over simulated links."""
    name = "dcl-lm" if landmarks else "dcl"
    T = s.frames
    Q = s.noise.Q
    gate = s.estimator.gate_threshold
    beliefs = [b.to_local(T[i]) for i, b in enumerate(_initial_beliefs(s, st))]
    tracks = [_Track(b, st.odometry[i], Q, s.sync_slop) for i, b in enumerate(beliefs)]
    lm_local = _landmarks_local(s, T[0])
    link21 = Link("2->1", s.link, CompanionState.WIRE_SIZE)
    link12 = Link("1->2", s.link, UpdatePacket.WIRE_SIZE)
    net = EventQueue()
    log = _Logger(st, with_cross=True)
    accepted: list[float] = []

    def deliver(now: float) -> None:
        # replies sent while handling a delivery may themselves be due now
        while True:
            due = net.pop_due(now)
            if not due:
                return
            for d in due:
                handle(d, now)

    def handle(d, now: float) -> None:
        if d.link == "2->1":
            companion, z = d.payload
            tr = tracks[0]
            if not tr.align(now):
                return
            b1 = tr.belief.to_common(T[0])
            new, packet = coop_update_initiator(b1, companion, z, gate_threshold=gate)
            if packet is None:
                return
            tr.belief = new.to_local(T[0])
            accepted.append(z.stamp)
            back = link12.try_send(packet, now)
            if back is not None:
                net.push(back)
        else:
            tr = tracks[1]
            if not tr.align(now):
                return
            b2 = tr.belief.to_common(T[1])
            tr.belief = coop_update_responder(b2, d.payload).to_local(T[1])

    for j, t in enumerate(st.lidar_stamps):
        t = float(t)
        for tr in tracks:
            tr.advance(t)
        deliver(t)
        if landmarks and st.landmarks[j] and tracks[0].align(t):
            for k, z in st.landmarks[j]:
                tracks[0].belief = private_update(
                    tracks[0].belief,
                    z,
                    lm_local[k],
                    touches_cross=s.estimator.private_update_touches_cross,
                    gate_threshold=gate,
                )
        if st.exchange[j] and tracks[1].align(t):
            companion = share_state(tracks[1].belief.to_common(T[1]))
            sent = link21.try_send((companion, st.coop[j]), t)
            if sent is not None:
                net.push(sent)
            deliver(t)
        peeks = [tr.peek(t).to_common(T[i]) for i, tr in enumerate(tracks)]
        log.record(
            j,
            [b.mean for b in peeks],
            [b.P for b in peeks],
            peeks[0].sigma @ peeks[1].sigma.T,
        )
    return MethodResult(
        name,
        log.robots(),
        cross=log.cross,
        ledgers={link21.name: link21.ledger, link12.name: link12.ledger},
        coop_updates=accepted,
    )


def run_ccl(s: Scenario, st: Streams, landmarks: bool = False) -> MethodResult:
    """Centralized joint EKF; measurements are applied ``ccl_latency_steps`` late.

    A measurement stamped ``t`` is fused at the first odometry stamp at or
    after ``t + d dt`` against the state at that stamp, the way a central
    node that receives relayed readings late and does not re-time them would.
    """
    name = "ccl-lm" if landmarks else "ccl"
    Q = s.noise.Q
    gate = s.estimator.gate_threshold
    b1, b2 = _initial_beliefs(s, st)
    track = _JointTrack(JointBelief.from_beliefs(b1, b2), st.odometry, (Q, Q), s.sync_slop)
    lm = s.world.landmark_array()
    d = s.estimator.ccl_latency_steps
    odom = st.odom_stamps
    pending: list[tuple[float, int, str, object]] = []
    log = _Logger(st, with_cross=True)
    accepted: list[float] = []
    seq = 0

    def fuse(kind: str, payload) -> None:
        if kind == "coop":
            new = ccl_update(track.joint, payload, gate_threshold=gate)
            if new is not track.joint:
                accepted.append(payload.stamp)
        else:
            k, z = payload
            new = ccl_lm_update(track.joint, z, lm[k], gate_threshold=gate)
        track.joint = new

    for j, t in enumerate(st.lidar_stamps):
        t = float(t)
        pending.sort()
        while pending and pending[0][0] <= t + _EPS:
            ta, _, kind, payload = pending.pop(0)
            track.advance(ta)
            if track.align(ta):
                fuse(kind, payload)
        track.advance(t)
        new = []
        if st.exchange[j]:
            new.append(("coop", st.coop[j]))
        if landmarks:
            new.extend(("lm", kz) for kz in st.landmarks[j])
        if new:
            if d == 0:
                if track.align(t):
                    for kind, payload in new:
                        fuse(kind, payload)
            else:
                k = int(np.searchsorted(odom, t + d * s.dt - _EPS, side="left"))
                if k < len(odom):
                    for kind, payload in new:
                        pending.append((float(odom[k]), seq, kind, payload))
                        seq += 1
        p = track.peek(t)
        log.record(j, [p.mean[:3], p.mean[3:]], [p.P[:3, :3], p.P[3:, 3:]], p.P[:3, 3:])
    return MethodResult(name, log.robots(), cross=log.cross, coop_updates=accepted)


def run_method(name: str, s: Scenario, st: Streams) -> MethodResult:
    if name == "dr":
        return _run_independent(s, st, False, name)
    if name == "sl":
        return _run_independent(s, st, True, name)
    if name in ("dcl", "dcl-lm"):
        return run_dcl(s, st, landmarks=name == "dcl-lm")
    if name in ("ccl", "ccl-lm"):
        return run_ccl(s, st, landmarks=name == "ccl-lm")
    raise InvalidParameterError(f"unknown method {name!r}; expected one of {METHODS}")
