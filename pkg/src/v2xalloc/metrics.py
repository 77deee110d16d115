"""Per-slot and time-averaged performance quantities.

The scalar functions here are the readable reference implementations; the
simulator's vectorized fast paths are cross-checked against them in tests.
Link indices follow the package convention (NDS links first).
"""

from __future__ import annotations

import logging

import numpy as np

from .channel import ChannelRealization
from .model import AllocationMatrix, ScenarioConfig

logger = logging.getLogger(__name__)


def _log_rate(x: float, base: float) -> float:
    return float(np.log1p(x) / np.log(base))


def sinr_ds(
    link: int,
    neighbor: int,
    alloc: AllocationMatrix,
    channels: ChannelRealization,
    config: ScenarioConfig,
) -> float:
    """Received SINR at one neighbor of a delay-sensitive broadcast link.

    ``link`` is the local link index (must be >= n_nds); ``neighbor`` indexes
    the link's neighbor list. Interference comes from NDS links sharing the
    RB, measured through their gains toward the BS. Returns 0 when the link
    holds no RB.
    """
    ls = channels.link_set
    if link < ls.n_nds:
        raise ValueError("sinr_ds expects a delay-sensitive link index")
    rb = alloc.rb_of_link(link)
    if rb < 0:
        return 0.0
    ds_local = link - ls.n_nds
    p_ds = config.tx_power * config.ds_power_factor
    signal = p_ds * channels.nbr_gain[ds_local][neighbor, rb]
    interference = 0.0
    for m in range(ls.n_nds):
        if alloc.entries[rb, m]:
            interference += config.tx_power * channels.bs_gain[m, rb]
    return float(signal / (config.noise_power + interference))


def prr(
    link: int,
    alloc: AllocationMatrix,
    channels: ChannelRealization,
    config: ScenarioConfig,
) -> float:
    """Fraction of the link's neighbors whose SINR meets the threshold.

    A link with no neighbors has nothing to fail; its PRR is defined as 1.
    """
    ls = channels.link_set
    ds_local = link - ls.n_nds
    n_nbrs = len(ls.nbr_ids[ds_local])
    if n_nbrs == 0:
        logger.debug("PRR requested for link %d with no neighbors; returning 1",
                     link)
        return 1.0
    hits = sum(
        sinr_ds(link, j, alloc, channels, config) >= config.sinr_threshold
        for j in range(n_nbrs)
    )
    return hits / n_nbrs


def ds_link_sinr(
    link: int,
    alloc: AllocationMatrix,
    channels: ChannelRealization,
    config: ScenarioConfig,
) -> float:
    """Scalar SINR used to gate DS departures: the worst neighbor's SINR.

    A broadcast counts as delivered only when every intended receiver can
    decode it. With no neighbors the BS-path SINR is used instead so the
    link can still drain.
    """
    ls = channels.link_set
    rb = alloc.rb_of_link(link)
    if rb < 0:
        return 0.0
    ds_local = link - ls.n_nds
    n_nbrs = len(ls.nbr_ids[ds_local])
    if n_nbrs == 0:
        interference = sum(
            config.tx_power * channels.bs_gain[m, rb]
            for m in range(ls.n_nds) if alloc.entries[rb, m]
        )
        p_ds = config.tx_power * config.ds_power_factor
        return float(p_ds * channels.bs_gain[link, rb]
                     / (config.noise_power + interference))
    return min(
        sinr_ds(link, j, alloc, channels, config) for j in range(n_nbrs)
    )


def rate_nds(
    link: int,
    alloc: AllocationMatrix,
    channels: ChannelRealization,
    config: ScenarioConfig,
) -> float:
    """Shannon rate of a non-delay-sensitive uplink in bit/s.

    The interference of a co-channel DS link is proxied by its strongest
    gain toward any of its own neighbors; with no neighbors the DS link's
    gain toward the BS is used instead.
    """
    ls = channels.link_set
    if link >= ls.n_nds:
        raise ValueError("rate_nds expects a non-delay-sensitive link index")
    rb = alloc.rb_of_link(link)
    if rb < 0:
        return 0.0
    signal = config.tx_power * channels.bs_gain[link, rb]
    p_ds = config.tx_power * config.ds_power_factor
    interference = 0.0
    for d in range(ls.n_ds):
        if alloc.entries[rb, ls.n_nds + d]:
            gains = channels.nbr_gain[d][:, rb]
            proxy = gains.max() if gains.size else channels.bs_gain[ls.n_nds + d, rb]
            interference += p_ds * proxy
    rho = signal / (config.noise_power + interference)
    return config.bandwidth_per_rb * _log_rate(rho, config.rate_log_base)


class MetricsAccumulator:
    """Running (windowless) per-vehicle averages over simulated slots.

    Slots before ``start_slot`` are discarded (warm-up); merging two
    accumulators adds their sums, which makes parallel sweeps associative.
    """

    def __init__(self, n_vehicles: int, queue_capacity: int,
                 start_slot: int = 0):
        self.n_vehicles = n_vehicles
        self.queue_capacity = queue_capacity
        self.start_slot = start_slot
        self.slots = 0
        self.sum_queue = np.zeros(n_vehicles)
        self.sum_prr = np.zeros(n_vehicles)
        self.sum_rate = np.zeros(n_vehicles)
        self.overflow_slots = np.zeros(n_vehicles)

    def record_slot(self, slot: int, queues: np.ndarray, prr_slot: np.ndarray,
                    rate_slot: np.ndarray) -> None:
        if slot < self.start_slot:
            return
        self.slots += 1
        self.sum_queue += queues
        self.sum_prr += prr_slot
        self.sum_rate += rate_slot
        self.overflow_slots += queues >= self.queue_capacity

    def merge(self, other: "MetricsAccumulator") -> None:
        self.slots += other.slots
        self.sum_queue += other.sum_queue
        self.sum_prr += other.sum_prr
        self.sum_rate += other.sum_rate
        self.overflow_slots += other.overflow_slots

    def mean_queue(self) -> np.ndarray:
        if self.slots < 1:
            raise ValueError("averages undefined before any recorded slot")
        return self.sum_queue / self.slots

    def mean_prr(self) -> np.ndarray:
        if self.slots < 1:
            raise ValueError("averages undefined before any recorded slot")
        return self.sum_prr / self.slots

    def mean_rate(self) -> np.ndarray:
        if self.slots < 1:
            raise ValueError("averages undefined before any recorded slot")
        return self.sum_rate / self.slots

    def overflow_fraction(self) -> np.ndarray:
        if self.slots < 1:
            raise ValueError("averages undefined before any recorded slot")
        return self.overflow_slots / self.slots


def average_delay(acc: MetricsAccumulator, vehicle: int,
                  arrival_mean: float) -> float | None:
    """Little's-law delay readout ``mean queue / arrival rate`` in seconds.

    Returns ``None`` (absent, never 0) when the vehicle has no arrivals.
    """
    if arrival_mean <= 0:
        return None
    return float(acc.mean_queue()[vehicle] / arrival_mean)
