"""Discrete-event model of the intermittent inter-robot radio link.

Messages are counted against a per-link :class:`BandwidthLedger` the moment
they are offered. A message is lost when the link is outside its
availability windows or by a seeded coin flip; otherwise it is queued for
delivery ``latency`` (plus optional uniform jitter) seconds later.
"""

from __future__ import annotations

import heapq
import itertools
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .core import InvalidParameterError

#: stamp, mean[3], P[9] as little-endian f64
BROADCAST_RECORD_FORMAT = "<13d"
BROADCAST_RECORD_SIZE = struct.calcsize(BROADCAST_RECORD_FORMAT)  # 104


@dataclass(frozen=True)
class LinkModel:
    """Availability, delay and loss of one directed link.

    ``availability=None`` means the link is always up.
    """

    availability: Optional[tuple] = None
    latency: float = 0.0
    jitter: float = 0.0
    drop_prob: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.availability is not None:
            windows = tuple((float(a), float(b)) for a, b in self.availability)
            for a, b in windows:
                if not b >= a:
                    raise InvalidParameterError(f"availability window [{a}, {b}] is reversed")
            for (_, b0), (a1, _) in zip(windows, windows[1:]):
                if a1 <= b0:
                    raise InvalidParameterError("availability windows must be disjoint and ordered")
            object.__setattr__(self, "availability", windows)
        if not (self.latency >= 0 and self.jitter >= 0):
            raise InvalidParameterError("latency and jitter must be >= 0")
        if not 0.0 <= self.drop_prob < 1.0:
            raise InvalidParameterError("drop_prob must lie in [0, 1)")

    def available(self, t: float) -> bool:
        if self.availability is None:
            return True
        return any(a <= t <= b for a, b in self.availability)


@dataclass
class BandwidthLedger:
    packet_size: int
    packets_sent: int = 0
    packets_delivered: int = 0
    bytes_delivered: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, order=True)
class Delivery:
    time: float
    seq: int
    link: str = field(compare=False)
    payload: Any = field(compare=False)


class Link:
    """One directed link carrying messages of a fixed wire size."""

    def __init__(self, name: str, model: LinkModel, packet_size: int):
        self.name = name
        self.model = model
        self.ledger = BandwidthLedger(packet_size)
        self._rng = np.random.default_rng(model.rng_seed)
        self._seq = itertools.count()

    def try_send(self, payload, now: float) -> Optional[Delivery]:
        """Offer ``payload`` at ``now``; returns the delivery or ``None`` if lost."""
        self.ledger.packets_sent += 1
        m = self.model
        if not m.available(now):
            return None
        # draw both numbers every time so the stream does not depend on outcomes
        coin = self._rng.random()
        extra = self._rng.uniform(0.0, m.jitter) if m.jitter > 0 else 0.0
        if coin < m.drop_prob:
            return None
        self.ledger.packets_delivered += 1
        self.ledger.bytes_delivered += self.ledger.packet_size
        return Delivery(now + m.latency + extra, next(self._seq), self.name, payload)


def try_send(link: Link, packet, now: float) -> Optional[Delivery]:
    return link.try_send(packet, now)


class EventQueue:
    """Deliveries ordered by ``(time, sequence)``."""

    def __init__(self):
        self._heap: list[tuple[float, int, Delivery]] = []
        self._counter = itertools.count()

    def push(self, d: Delivery) -> None:
        heapq.heappush(self._heap, (d.time, next(self._counter), d))

    def pop_due(self, now: float, eps: float = 1e-9) -> list[Delivery]:
        out = []
        while self._heap and self._heap[0][0] <= now + eps:
            out.append(heapq.heappop(self._heap)[2])
        return out

    def __len__(self) -> int:
        return len(self._heap)


def continuous_broadcast_cost(scenario, robots: int = 2) -> int:
    """Bytes a periodic full-state broadcast would use.

    One 104-byte record (stamp, mean, covariance) per robot per prediction
    step. ``scenario`` is anything with a ``steps`` attribute, or the step
    count itself.
    """
    steps = int(getattr(scenario, "steps", scenario))
    if steps < 0:
        raise InvalidParameterError("steps must be >= 0")
    return steps * robots * BROADCAST_RECORD_SIZE


def bandwidth_summary(ledgers: Sequence[BandwidthLedger], broadcast_bytes: int) -> dict:
    delivered = sum(l.bytes_delivered for l in ledgers)
    reduction = 1.0 - delivered / broadcast_bytes if broadcast_bytes > 0 else math.nan
    return {
        "event_bytes": delivered,
        "broadcast_bytes": broadcast_bytes,
        "reduction": reduction,
    }
