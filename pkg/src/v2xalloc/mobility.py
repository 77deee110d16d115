"""Macroscopic traffic state: densities, Greenshield flow/speed, placement.

Densities are normalized (jam density is a unitless constant, 2 by default);
the segment length and lane count turn a density into a vehicle count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import ScenarioConfig, SegmentGeometry, default_geometry

logger = logging.getLogger(__name__)

TDI_REGIMES = {
    "low": (0.0, 0.5),
    "high": (0.8, 1.2),
}


@dataclass(frozen=True)
class TdiVector:
    """Per-subregion traffic densities, index 0 = subregion 1."""

    kappa: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.kappa, dtype=float)
        if arr.shape != (4,):
            raise ValueError("TDI vector must hold exactly four densities")
        if (arr < 0).any():
            raise ValueError("densities must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "kappa", arr)


@dataclass
class VehicleLayout:
    """Positions, service classes and speeds of every placed vehicle.

    Arrays are global across subregions: ``subregion_of[v]`` holds the 1-based
    subregion id of vehicle ``v``. ``is_ds[v]`` is True for delay-sensitive
    vehicles.
    """

    positions: np.ndarray      # (n, 2) meters
    is_ds: np.ndarray          # (n,) bool
    speeds: np.ndarray         # (n,) m/s
    subregion_of: np.ndarray   # (n,) int, 1..4

    @property
    def n_vehicles(self) -> int:
        return len(self.subregion_of)

    def vehicles_in(self, subregion_id: int) -> np.ndarray:
        return np.flatnonzero(self.subregion_of == subregion_id)

    def to_csv_rows(self) -> list[str]:
        rows = ["subregion,x,y,class,speed"]
        for v in range(self.n_vehicles):
            cls = "ds" if self.is_ds[v] else "nds"
            rows.append(
                f"{self.subregion_of[v]},{self.positions[v, 0]!r},"
                f"{self.positions[v, 1]!r},{cls},{self.speeds[v]!r}"
            )
        return rows


def greenshield_flow(kappa: float, v_free: float, kappa_jam: float) -> float:
    """Parabolic flow-density law; negative beyond jam density is returned as is."""
    return kappa * v_free - kappa**2 * v_free / kappa_jam


def greenshield_speed(kappa: float, v_free: float, kappa_jam: float) -> float:
    """Linear speed-density law, clamped to 0 above jam density."""
    if kappa > kappa_jam:
        logger.warning("density %.3f above jam density %.3f; speed clamped to 0",
                       kappa, kappa_jam)
        return 0.0
    return v_free * (1.0 - kappa / kappa_jam)


def sample_tdi(regime: str, rng: np.random.Generator) -> TdiVector:
    """Draw four i.i.d. densities from the named regime's uniform range."""
    try:
        lo, hi = TDI_REGIMES[regime]
    except KeyError:
        raise ValueError(f"unknown TDI regime {regime!r}; expected low or high")
    return TdiVector(rng.uniform(lo, hi, size=4))


def vehicle_count(kappa: float, config: ScenarioConfig) -> int:
    return int(round(kappa * config.segment_length_m * config.lanes))


def place_vehicles(
    tdi: TdiVector, config: ScenarioConfig, rng: np.random.Generator
) -> VehicleLayout:
    """Place vehicles uniformly along each arm, matching density counts.

    Every vehicle's speed is the Greenshield speed of its subregion; classes
    are i.i.d. delay-sensitive with probability ``ds_fraction``.
    """
    positions, is_ds, speeds, sub_of = [], [], [], []
    for sid in range(1, 5):
        kappa = float(tdi.kappa[sid - 1])
        n = vehicle_count(kappa, config)
        if n == 0:
            continue
        geom: SegmentGeometry = default_geometry(config, sid)
        along = rng.uniform(0.0, geom.length, size=n)
        xy = (np.asarray(geom.origin)[None, :]
              + along[:, None] * np.asarray(geom.axis)[None, :])
        speed = greenshield_speed(min(kappa, config.kappa_jam),
                                  config.v_free, config.kappa_jam)
        positions.append(xy)
        is_ds.append(rng.random(n) < config.ds_fraction)
        speeds.append(np.full(n, speed))
        sub_of.append(np.full(n, sid, dtype=int))
    if positions:
        return VehicleLayout(
            positions=np.concatenate(positions),
            is_ds=np.concatenate(is_ds),
            speeds=np.concatenate(speeds),
            subregion_of=np.concatenate(sub_of),
        )
    return VehicleLayout(
        positions=np.zeros((0, 2)),
        is_ds=np.zeros(0, dtype=bool),
        speeds=np.zeros(0),
        subregion_of=np.zeros(0, dtype=int),
    )
