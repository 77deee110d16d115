"""Per-slot channel realizations: log-distance path loss, log-normal
shadowing held constant within a TDI epoch, and i.i.d. complex Gaussian
small-scale fading per slot and per RB.

Only gain powers ``|H|^2`` are ever consumed downstream, so the hot path
samples the sum of squared magnitudes directly as Gamma(N_T, 1) draws, which
is the exact distribution of ``sum_m |h_m|^2`` for CN(0,1) entries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mobility import VehicleLayout
from .model import ScenarioConfig, Subregion

logger = logging.getLogger(__name__)

REFERENCE_DISTANCE_M = 1.0


def large_scale_gain(distance: float, config: ScenarioConfig,
                     shadow_db: float = 0.0) -> float:
    """Linear large-scale gain at ``distance`` meters.

    Log-distance path loss anchored at the 1 m reference, multiplied by a
    log-normal shadowing term expressed in dB. Nonpositive distances clamp to
    the reference distance.
    """
    if distance <= 0:
        logger.warning("nonpositive distance %.3f clamped to reference 1 m",
                       distance)
        distance = REFERENCE_DISTANCE_M
    gain_db = (config.pathloss_ref_db
               - 10.0 * config.pathloss_exponent
               * np.log10(distance / REFERENCE_DISTANCE_M)
               + shadow_db)
    return float(10.0 ** (gain_db / 10.0))


def sample_shadowing_db(config: ScenarioConfig, rng: np.random.Generator,
                        size) -> np.ndarray:
    if not config.shadowing_enabled:
        return np.zeros(size)
    return rng.normal(0.0, config.shadowing_sigma_db, size=size)


def sample_small_scale(n_tx: int, rng: np.random.Generator,
                       size=()) -> np.ndarray:
    """i.i.d. CN(0,1) draws with shape ``(*size, n_tx)``."""
    if n_tx < 1:
        raise ValueError("n_tx must be >= 1")
    shape = tuple(size) + (n_tx,)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / np.sqrt(2.0)


def fading_power(n_tx: int, rng: np.random.Generator, size=()) -> np.ndarray:
    """``sum_m |h_m|^2`` for CN(0,1) entries, sampled as Gamma(n_tx, 1)."""
    return rng.gamma(shape=n_tx, scale=1.0, size=size)


@dataclass
class LinkSet:
    """Epoch-constant link structure for one subregion.

    Holds the cast of transmitting vehicles in link order (NDS first, then
    DS), their large-scale gains to the BS, and per DS link the neighbor
    vehicles with the large-scale gains toward them. Shadowing is baked into
    the large-scale values and stays fixed for the epoch.
    """

    subregion_id: int
    nds_vehicles: np.ndarray
    ds_vehicles: np.ndarray
    bs_ls: np.ndarray              # (n_links,)
    nbr_ids: list[np.ndarray]      # per DS link
    nbr_ls: list[np.ndarray]       # per DS link, aligned with nbr_ids

    @property
    def n_nds(self) -> int:
        return len(self.nds_vehicles)

    @property
    def n_ds(self) -> int:
        return len(self.ds_vehicles)

    @property
    def n_links(self) -> int:
        return self.n_nds + self.n_ds


@dataclass
class ChannelRealization:
    """Gain powers for one slot on one subregion's RBs.

    ``bs_gain[l, k]`` is ``|H_{l0}^k|^2`` for link ``l`` toward the BS;
    ``nbr_gain[i][j, k]`` is the gain from DS link ``i`` toward its ``j``-th
    neighbor.
    """

    bs_gain: np.ndarray
    nbr_gain: list[np.ndarray]
    link_set: LinkSet


def build_link_set(
    layout: VehicleLayout,
    subregion_id: int,
    config: ScenarioConfig,
    rng: np.random.Generator,
    nds_vehicles: np.ndarray | None = None,
    ds_vehicles: np.ndarray | None = None,
) -> LinkSet:
    """Resolve geometry into epoch-constant large-scale gains.

    When explicit casts are not given, every vehicle of the subregion becomes
    a link. Neighbors of a DS vehicle are all other vehicles (any subregion)
    within ``neighbor_radius_m``.
    """
    in_sub = layout.vehicles_in(subregion_id)
    if nds_vehicles is None:
        nds_vehicles = in_sub[~layout.is_ds[in_sub]]
    if ds_vehicles is None:
        ds_vehicles = in_sub[layout.is_ds[in_sub]]
    cast = np.concatenate([nds_vehicles, ds_vehicles]).astype(int)

    bs_dist = np.linalg.norm(layout.positions[cast], axis=1)
    shadow = sample_shadowing_db(config, rng, len(cast))
    bs_ls = np.array([
        large_scale_gain(d, config, s) for d, s in zip(bs_dist, shadow)
    ])

    nbr_ids, nbr_ls = [], []
    for v in ds_vehicles:
        delta = layout.positions - layout.positions[int(v)]
        dist = np.linalg.norm(delta, axis=1)
        ids = np.flatnonzero((dist <= config.neighbor_radius_m)
                             & (np.arange(layout.n_vehicles) != int(v)))
        shadow_n = sample_shadowing_db(config, rng, len(ids))
        ls = np.array([
            large_scale_gain(d, config, s)
            for d, s in zip(dist[ids], shadow_n)
        ])
        nbr_ids.append(ids)
        nbr_ls.append(ls)
    return LinkSet(subregion_id=subregion_id,
                   nds_vehicles=np.asarray(nds_vehicles, dtype=int),
                   ds_vehicles=np.asarray(ds_vehicles, dtype=int),
                   bs_ls=bs_ls, nbr_ids=nbr_ids, nbr_ls=nbr_ls)


def realize(link_set: LinkSet, n_rbs: int, config: ScenarioConfig,
            rng: np.random.Generator) -> ChannelRealization:
    """Sample one slot of gain powers, independent across RBs and pairs."""
    n_tx = config.n_tx_antennas
    bs_gain = link_set.bs_ls[:, None] * fading_power(
        n_tx, rng, (link_set.n_links, n_rbs))
    nbr_gain = [
        ls[:, None] * fading_power(n_tx, rng, (len(ls), n_rbs))
        for ls in link_set.nbr_ls
    ]
    return ChannelRealization(bs_gain=bs_gain, nbr_gain=nbr_gain,
                              link_set=link_set)


def realize_channels(
    layout: VehicleLayout,
    subregion: Subregion,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> ChannelRealization:
    """One-call convenience: epoch structure plus a single slot realization."""
    link_set = build_link_set(layout, subregion.id, config, rng)
    return realize(link_set, subregion.n_rbs, config, rng)
