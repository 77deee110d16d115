"""Finite per-vehicle packet queues and arrival processes.

Queues are measured in whole packets. The per-slot update is
``min(capacity, max(0, q - departed) + arrived)``: departures are taken from
the backlog first, then arrivals join, and anything beyond the capacity is
dropped.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

LOG2 = float(np.log(2.0))


@dataclass
class QueueState:
    lengths: np.ndarray        # packets per vehicle
    capacity: int
    arrival_means: np.ndarray  # packets/s per vehicle

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        self.arrival_means = np.asarray(self.arrival_means, dtype=float)
        if (self.lengths < 0).any() or (self.lengths > self.capacity).any():
            raise ValueError("queue lengths must start inside [0, capacity]")


@dataclass
class ArrivalProcess:
    """i.i.d. per-slot packet arrivals, independent across vehicles."""

    mean_per_slot: np.ndarray  # packets per slot per vehicle
    distribution: str = "poisson"

    def sample(self, rng: np.random.Generator, n_slots: int = 1) -> np.ndarray:
        """(n_slots, n_vehicles) packet counts."""
        size = (n_slots, len(self.mean_per_slot))
        if self.distribution == "poisson":
            return rng.poisson(self.mean_per_slot, size=size)
        if self.distribution == "bernoulli":
            return (rng.random(size) < self.mean_per_slot).astype(np.int64)
        raise ValueError(f"unknown arrival distribution {self.distribution!r}")


def step_queue(q: int, departed: int, arrived: int, capacity: int) -> int:
    """One slot of queue dynamics for a single vehicle."""
    return min(capacity, max(0, q - departed) + arrived)


def step_queues(q: np.ndarray, departed: np.ndarray, arrived: np.ndarray,
                capacity: int) -> np.ndarray:
    """Vectorized queue update across vehicles."""
    return np.minimum(capacity, np.maximum(0, q - departed) + arrived)


def departures_from_rate(rate: float, slot: float, packet_size: int) -> int:
    """Whole packets a PHY rate can carry in one slot (floor semantics)."""
    if rate <= 0:
        return 0
    return int(rate * slot / (8.0 * packet_size))


def ds_departures(rate: float, sinr: float, sinr_threshold: float,
                  slot: float, packet_size: int) -> int:
    """Delay-sensitive departures: gated on the reliability threshold.

    A broadcast packet leaves the queue only when the link SINR meets the
    reception threshold in that slot.
    """
    if sinr < sinr_threshold:
        return 0
    return departures_from_rate(rate, slot, packet_size)


def sample_arrivals(proc: ArrivalProcess, rng: np.random.Generator,
                    n_slots: int) -> np.ndarray:
    return proc.sample(rng, n_slots)


class PacketTracker:
    """FIFO per-packet timestamp ledger for sojourn-time measurements.

    Mirrors one vehicle's queue: arrivals enqueue their slot index, each
    departure pops the oldest. Used as an independent oracle against the
    Little's-law readout; not part of the simulation hot path.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._fifo: deque[int] = deque()
        self.sojourns: list[int] = []
        self.dropped = 0
        self.admitted = 0

    def step(self, slot: int, departed: int, arrived: int) -> int:
        """Apply one slot; returns the new queue length."""
        for _ in range(min(departed, len(self._fifo))):
            arrival_slot = self._fifo.popleft()
            self.sojourns.append(slot - arrival_slot)
        for _ in range(arrived):
            if len(self._fifo) < self.capacity:
                self._fifo.append(slot)
                self.admitted += 1
            else:
                self.dropped += 1
        return len(self._fifo)

    @property
    def mean_sojourn_slots(self) -> float:
        if not self.sojourns:
            return 0.0
        return float(np.mean(self.sojourns))
