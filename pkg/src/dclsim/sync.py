"""Timestamp alignment between slow odometry and faster LiDAR events.

A :class:`StampedQueue` buffers odometry samples for one robot. When a LiDAR
measurement arrives at ``t_L`` the queue emits, in order,

* one prediction per buffered sample stamped at or before ``t_L``,
* a prediction from the last sample stamp ``t_E`` to ``t_L`` driven by the
  control extrapolated from the two most recent samples,
* the update itself at ``t_L``.

A prediction *to* stamp ``t`` is always driven by the control value at
``t``; for the final leg that value comes from :func:`extrapolate_control`.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Any, Optional, Union

from .core import ControlInput, InvalidStreamError

log = logging.getLogger(__name__)

STAMP_EPS = 1e-9


def extrapolate_control(u_prev: ControlInput, u_curr: ControlInput, t_target: float) -> ControlInput:
    """Linear extrapolation of ``(v, omega)`` to ``t_target``.

    ``u(t) = u_curr + (u_curr - u_prev) / (t_curr - t_prev) * (t - t_curr)``,
    applied to each component independently, with the actual gap between the
    two samples as the slope denominator.

    Raises
    ------
    InvalidStreamError
        If the two stamps are equal or the samples are out of order, or if
        ``t_target`` precedes ``u_curr``.
    """
    gap = u_curr.stamp - u_prev.stamp
    if not gap > 0:
        raise InvalidStreamError(
            f"cannot extrapolate from stamps {u_prev.stamp!r} and {u_curr.stamp!r}"
        )
    lead = t_target - u_curr.stamp
    if lead < -STAMP_EPS:
        raise InvalidStreamError(f"target {t_target!r} precedes latest sample {u_curr.stamp!r}")
    if lead <= 0:
        return ControlInput(u_curr.v, u_curr.omega, t_target)
    k = lead / gap
    return ControlInput(
        u_curr.v + (u_curr.v - u_prev.v) * k,
        u_curr.omega + (u_curr.omega - u_prev.omega) * k,
        t_target,
    )


def _leg_variance(gap: float, leads) -> float:
    """Variance, in units of one sample's ``Q``, of the displacement error of
    consecutive extrapolated legs ending ``leads`` seconds after the latest
    sample, including the part shared with the two steps that already
    consumed those samples."""
    A = B = 0.0
    prev = 0.0
    for lead in leads:
        a = lead / gap
        A += (lead - prev) * (1.0 + a)
        B += (lead - prev) * a
        prev = lead
    return A * A + B * B + 2.0 * gap * prev


def extrapolation_noise_scale(
    u_prev: ControlInput, u_curr: ControlInput, t_target: float, prior=()
) -> float:
    """Multiplier on ``Q`` for an extrapolated leg ending at ``t_target``.

    With ``a = (t - t_curr) / (t_curr - t_prev)`` the extrapolated control is
    ``(1 + a) u_curr - a u_prev``, so its own noise variance scales by
    ``(1 + a)^2 + a^2``. The same two samples already drove the last two
    prediction steps; their errors are in the state, and the leg's error is
    positively correlated with them. That correlation is folded in as extra
    variance: ``2 / a`` for a single leg, assuming both earlier steps spanned
    the same gap. ``prior`` lists the end stamps of legs already committed
    from the same samples; the returned scale covers only the increment.
    """
    gap = u_curr.stamp - u_prev.stamp
    leads = [t - u_curr.stamp for t in prior]
    start = leads[-1] if leads else 0.0
    lead = max(t_target - u_curr.stamp, 0.0)
    d = lead - start
    if d <= 0:
        return 1.0
    inc = _leg_variance(gap, leads + [lead]) - _leg_variance(gap, leads)
    return inc / (d * d)


@dataclass(frozen=True)
class Predict:
    """Propagate the state to ``stamp`` with control ``u`` over ``dt``."""

    stamp: float
    dt: float
    u: ControlInput
    noise_scale: float = 1.0
    extrapolated: bool = False


@dataclass(frozen=True)
class Update:
    """Apply ``event`` at ``stamp``; the state is time-aligned to it."""

    stamp: float
    event: Any


Action = Union[Predict, Update]


class StampedQueue:
    """Buffer for one robot's odometry stream, drained by one scheduler.

    Parameters
    ----------
    slop
        A LiDAR event within ``slop`` seconds after the latest odometry
        sample is treated as simultaneous with it: no extrapolation leg is
        emitted and the update is applied on the sample's state.
    start
        Stamp of the initial state. Samples at or before it only seed the
        extrapolation history.
    """

    def __init__(self, slop: float = 0.02, start: float = 0.0):
        if slop < 0:
            raise ValueError("slop must be >= 0")
        self.slop = slop
        self._queue: deque[ControlInput] = deque()
        self._history: deque[ControlInput] = deque(maxlen=2)
        self._pending: deque[Any] = deque()
        self._state_stamp = start
        self._last_pushed = -float("inf")
        self._legs: list[float] = []  # extrapolated leg ends since the latest sample

    @property
    def state_stamp(self) -> float:
        """Stamp of the state after all emitted actions."""
        return self._state_stamp

    def __len__(self) -> int:
        return len(self._queue)

    def push(self, u: ControlInput) -> None:
        if u.stamp < self._last_pushed:
            raise InvalidStreamError(
                f"control stamp {u.stamp!r} earlier than previous {self._last_pushed!r}"
            )
        if u.stamp == self._last_pushed and self._history:
            raise InvalidStreamError(f"duplicate control stamp {u.stamp!r}")
        self._last_pushed = u.stamp
        if u.stamp <= self._state_stamp + STAMP_EPS:
            self._history.append(u)
        else:
            self._queue.append(u)

    def drain(self, until: float) -> list[Predict]:
        """Predictions for every buffered sample stamped at or before ``until``."""
        out = []
        while self._queue and self._queue[0].stamp <= until + STAMP_EPS:
            u = self._queue.popleft()
            out.append(Predict(u.stamp, u.stamp - self._state_stamp, u))
            self._history.append(u)
            self._state_stamp = u.stamp
            self._legs.clear()
        return out

    def extrapolation(self, t: float) -> Optional[Predict]:
        """The extrapolated leg from the current state stamp to ``t``.

        ``None`` when no leg is needed (``t`` within ``slop`` of the state)
        or fewer than two samples have been seen.
        """
        lead = t - self._state_stamp
        if lead <= max(self.slop, STAMP_EPS):
            return None
        if len(self._history) < 2:
            return None
        u_prev, u_curr = self._history[0], self._history[1]
        return Predict(
            t,
            lead,
            extrapolate_control(u_prev, u_curr, t),
            extrapolation_noise_scale(u_prev, u_curr, t, self._legs),
            extrapolated=True,
        )

    def _schedule_one(self, event) -> Optional[list[Action]]:
        t_L = event.stamp
        if t_L < self._state_stamp - STAMP_EPS:
            log.warning("dropping out-of-order event t=%.4f (state at %.4f)", t_L, self._state_stamp)
            return []
        # the extrapolation needs two samples at or before t_L
        n_before = len(self._history) + sum(1 for u in self._queue if u.stamp <= t_L + STAMP_EPS)
        last_before = max(
            [u.stamp for u in self._queue if u.stamp <= t_L + STAMP_EPS] + [self._state_stamp]
        )
        needs_leg = t_L - last_before > max(self.slop, STAMP_EPS)
        if needs_leg and n_before < 2:
            if self._last_pushed > t_L + STAMP_EPS:
                log.warning("dropping event t=%.4f: no odometry history to extrapolate from", t_L)
                return []
            return None
        actions: list[Action] = list(self.drain(t_L))
        leg = self.extrapolation(t_L)
        if leg is not None:
            actions.append(leg)
            self._state_stamp = t_L
            self._legs.append(t_L)
        actions.append(Update(t_L, event))
        return actions

    def schedule(self, event) -> list[Action]:
        """Ordered actions that bring the state to ``event.stamp`` and apply it.

        Events that cannot be extrapolated yet (fewer than two odometry
        samples) are held and retried on the next call; events older than
        the current state are dropped.
        """
        self._pending.append(event)
        out: list[Action] = []
        while self._pending:
            actions = self._schedule_one(self._pending[0])
            if actions is None:
                break
            self._pending.popleft()
            out.extend(actions)
        return out

    @property
    def pending(self) -> int:
        return len(self._pending)
