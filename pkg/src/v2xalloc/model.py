"""Scenario configuration and resource-block / link bookkeeping.

Link indexing convention used everywhere in this package: in a subregion with
N1 non-delay-sensitive (NDS) links and N2 delay-sensitive (DS) links, local
link indices 0..N1-1 are NDS and N1..N1+N2-1 are DS.

An allocation is a binary matrix with resource blocks (RBs) on the first axis
and links on the second. Feasibility means:
  * each RB carries at most one NDS link,
  * each RB carries at most one DS link,
  * each link holds at most one RB,
  * a shared RB pairs exactly one NDS with one DS link (never two of a class).
"""

from __future__ import annotations

import configparser
import hashlib
import itertools
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ActionSpaceError, ConfigurationError

DEFAULT_ACTION_CAP = 200_000


@dataclass(frozen=True)
class ScenarioConfig:
    """Static scenario parameters with their shipped defaults.

    Every field maps to a ``section.key`` in the plain-text config file; see
    :data:`CONFIG_SCHEMA` for the mapping. Unknown keys in a file are hard
    errors.
    """

    # radio
    total_rbs: int = 25                 # 5 MHz carrier worth of resource blocks
    bandwidth_per_rb: float = 180e3     # Hz
    n_tx_antennas: int = 2
    sinr_threshold: float = 2.0         # linear reception threshold for DS broadcasts
    noise_power: float = 1e-16          # W per RB
    tx_power: float = 0.2               # W per transmitter
    ds_power_factor: float = 1.0        # DS broadcast power relative to tx_power
    pathloss_exponent: float = 3.68
    pathloss_ref_db: float = -46.0      # gain at the 1 m reference distance
    shadowing_sigma_db: float = 8.0
    shadowing_enabled: bool = True
    rate_log_base: float = 2.0          # 2 => rates in bit/s, e for nat-based checks

    # time structure
    slot_duration: float = 1e-3         # s
    tdi_update_interval: float = 0.5    # s, must be an integer multiple of the slot

    # traffic queues
    queue_capacity: int = 10            # packets
    packet_size_ds: int = 20            # bytes
    packet_size_nds: int = 300          # bytes
    arrival_rate: float = 5.0           # packets/s per vehicle
    arrival_distribution: str = "poisson"   # or "bernoulli"

    # macroscopic mobility
    kappa_jam: float = 2.0
    v_free: float = 13.9                # m/s
    segment_length_m: float = 10.0
    lanes: int = 1
    ds_fraction: float = 0.5
    neighbor_radius_m: float = 150.0

    # stage-one utility
    c1: float = 0.5
    c2: float = 10.0
    leftover_mode: str = "largest_remainder"  # or "strict_floor"
    tdi_fixed: str = ""                 # comma-separated pinned densities

    # stage-two constraints and solver knobs
    prr_floor: float = 0.3              # per DS vehicle
    rate_floor: float = 1e4             # bit/s per NDS vehicle
    alpha_weight: float = 1.0           # delay weight per DS vehicle
    max_sched_nds: int = 2              # per-slot scheduled-link cap per subregion
    max_sched_ds: int = 2
    action_cap: int = DEFAULT_ACTION_CAP
    full_state_cap: int = 2_000_000     # max (states x actions) for the full solver
    channel_levels: int = 2
    n_mc: int = 200                     # channel draws behind the conditional estimates
    n_mc_full: int = 400                # draws for the full-state solver's per-atom buckets
    vi_tol: float = 1e-6                # span-seminorm stopping rule
    vi_max_iters: int = 100_000
    dual_step: float = 0.05

    # measurement
    warmup_frac: float = 0.1

    # reproducibility
    rng_seed: int = 1

    def __post_init__(self):
        if self.slot_duration <= 0:
            raise ConfigurationError("slot_duration must be positive")
        ratio = self.tdi_update_interval / self.slot_duration
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigurationError(
                "tdi_update_interval must be an integer multiple of slot_duration"
            )
        if self.queue_capacity < 1:
            raise ConfigurationError("queue_capacity must be a finite count >= 1")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ConfigurationError("c1 and c2 must be positive")
        if self.kappa_jam <= 0:
            raise ConfigurationError("kappa_jam must be positive")
        if self.tx_power < 0 or self.noise_power < 0:
            raise ConfigurationError("powers must be nonnegative")
        if self.arrival_distribution not in ("poisson", "bernoulli"):
            raise ConfigurationError(
                f"unknown arrival_distribution {self.arrival_distribution!r}"
            )
        if self.leftover_mode not in ("largest_remainder", "strict_floor"):
            raise ConfigurationError(
                f"unknown leftover_mode {self.leftover_mode!r}"
            )
        if not 0.0 <= self.ds_fraction <= 1.0:
            raise ConfigurationError("ds_fraction must lie in [0, 1]")
        if self.total_rbs < 1:
            raise ConfigurationError("total_rbs must be >= 1")

    @property
    def slots_per_tdi(self) -> int:
        return int(round(self.tdi_update_interval / self.slot_duration))


# section -> {key: field name}; the file surface is flat key=value inside
# nested sections.
CONFIG_SCHEMA: dict[str, dict[str, str]] = {
    "radio": {
        "total_rbs": "total_rbs",
        "bandwidth_per_rb_hz": "bandwidth_per_rb",
        "n_tx_antennas": "n_tx_antennas",
        "sinr_threshold": "sinr_threshold",
        "noise_power_w": "noise_power",
        "tx_power_w": "tx_power",
        "ds_power_factor": "ds_power_factor",
        "pathloss_exponent": "pathloss_exponent",
        "pathloss_ref_db": "pathloss_ref_db",
        "shadowing_sigma_db": "shadowing_sigma_db",
        "shadowing_enabled": "shadowing_enabled",
        "rate_log_base": "rate_log_base",
    },
    "time": {
        "slot_duration_s": "slot_duration",
        "tdi_update_interval_s": "tdi_update_interval",
    },
    "queue": {
        "capacity_pkts": "queue_capacity",
        "packet_size_ds_bytes": "packet_size_ds",
        "packet_size_nds_bytes": "packet_size_nds",
        "arrival_rate_pkt_s": "arrival_rate",
        "arrival_distribution": "arrival_distribution",
    },
    "mobility": {
        "kappa_jam": "kappa_jam",
        "v_free_m_s": "v_free",
        "segment_length_m": "segment_length_m",
        "lanes": "lanes",
        "ds_fraction": "ds_fraction",
        "neighbor_radius_m": "neighbor_radius_m",
    },
    "stage1": {
        "c1": "c1",
        "c2": "c2",
        "leftover_mode": "leftover_mode",
        "tdi_fixed": "tdi_fixed",
    },
    "stage2": {
        "prr_floor": "prr_floor",
        "rate_floor_bps": "rate_floor",
        "alpha_weight": "alpha_weight",
        "max_sched_nds": "max_sched_nds",
        "max_sched_ds": "max_sched_ds",
        "action_cap": "action_cap",
        "full_state_cap": "full_state_cap",
        "channel_levels": "channel_levels",
        "n_mc": "n_mc",
        "n_mc_full": "n_mc_full",
        "vi_tol": "vi_tol",
        "vi_max_iters": "vi_max_iters",
        "dual_step": "dual_step",
    },
    "measurement": {
        "warmup_frac": "warmup_frac",
    },
    "rng": {
        "seed": "rng_seed",
    },
}

_BOOL_STRINGS = {"true": True, "false": False, "1": True, "0": False,
                 "yes": True, "no": False}


def _coerce(raw: str, target_type: type, where: str):
    raw = raw.strip()
    try:
        if target_type is bool:
            return _BOOL_STRINGS[raw.lower()]
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"bad value {raw!r} for {where}") from exc


def load_config(path: str | Path) -> ScenarioConfig:
    """Load a ScenarioConfig from a nested key-value file.

    Missing keys take the documented defaults; unknown sections or keys raise
    :class:`ConfigurationError` naming the offender.
    """
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise ConfigurationError(f"config file not found: {path}")

    type_by_field = {f.name: f.type for f in fields(ScenarioConfig)}
    defaults = ScenarioConfig()
    overrides = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigurationError(f"unknown config key {section}.{key}")
            fname = CONFIG_SCHEMA[section][key]
            ftype = type(getattr(defaults, fname))
            overrides[fname] = _coerce(raw, ftype, f"{section}.{key}")
    return replace(defaults, **overrides)


def config_items(config: ScenarioConfig) -> list[tuple[str, str, object]]:
    """Resolved (section.key, field, value) triples in schema order."""
    out = []
    for section, keys in CONFIG_SCHEMA.items():
        for key, fname in keys.items():
            out.append((f"{section}.{key}", fname, getattr(config, fname)))
    return out


def config_digest(config: ScenarioConfig) -> str:
    """Stable hash of the resolved parameter set, for provenance sidecars."""
    blob = ";".join(f"{k}={v!r}" for k, _, v in config_items(config))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SegmentGeometry:
    """One road segment: origin point, unit axis, and length in meters."""

    origin: tuple[float, float]
    axis: tuple[float, float]
    length: float


@dataclass(frozen=True)
class Subregion:
    """One of the four intersection arms with its link counts and RB budget."""

    id: int
    n_nds_links: int
    n_ds_links: int
    n_rbs: int
    geometry: SegmentGeometry

    def __post_init__(self):
        if not 1 <= self.id <= 4:
            raise ConfigurationError("subregion id must be in 1..4")
        if min(self.n_nds_links, self.n_ds_links, self.n_rbs) < 0:
            raise ConfigurationError("link and RB counts must be nonnegative")

    @property
    def n_links(self) -> int:
        return self.n_nds_links + self.n_ds_links


def default_geometry(config: ScenarioConfig, subregion_id: int) -> SegmentGeometry:
    """Arms pointing +x, -x, +y, -y from the intersection center (the BS)."""
    axes = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
    return SegmentGeometry(origin=(0.0, 0.0), axis=axes[subregion_id - 1],
                           length=config.segment_length_m)


class AllocationMatrix:
    """Binary RB-to-link assignment for one subregion.

    Rows are RBs, columns are links (NDS first, then DS). Instances are
    immutable after construction.
    """

    __slots__ = ("entries", "n_rbs", "n_links")

    def __init__(self, entries: np.ndarray):
        arr = np.asarray(entries, dtype=np.uint8)
        if arr.ndim != 2:
            raise ConfigurationError("allocation entries must be a 2-D matrix")
        if not np.isin(arr, (0, 1)).all():
            raise ConfigurationError("allocation entries must be binary")
        arr.setflags(write=False)
        self.entries = arr
        self.n_rbs, self.n_links = arr.shape

    @classmethod
    def idle(cls, n_rbs: int, n_links: int) -> "AllocationMatrix":
        return cls(np.zeros((n_rbs, n_links), dtype=np.uint8))

    def rb_of_link(self, link: int) -> int:
        """Index of the RB held by ``link``, or -1 when it holds none."""
        rbs = np.flatnonzero(self.entries[:, link])
        return int(rbs[0]) if rbs.size else -1

    def __eq__(self, other):
        return (isinstance(other, AllocationMatrix)
                and np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"AllocationMatrix({self.entries.tolist()})"


def validate_allocation(alloc: AllocationMatrix, subregion: Subregion) -> bool:
    """Check the three per-class/per-link constraints plus the reuse rule."""
    if alloc.n_rbs != subregion.n_rbs or alloc.n_links != subregion.n_links:
        raise ConfigurationError(
            f"allocation shape {alloc.n_rbs}x{alloc.n_links} does not match "
            f"subregion {subregion.n_rbs}x{subregion.n_links}"
        )
    n1 = subregion.n_nds_links
    entries = alloc.entries
    nds = entries[:, :n1]
    ds = entries[:, n1:]
    if nds.sum(axis=1).max(initial=0) > 1:
        return False
    if ds.sum(axis=1).max(initial=0) > 1:
        return False
    if entries.sum(axis=0).max(initial=0) > 1:
        return False
    # Reuse rule: a shared RB carries one NDS plus at most one DS link. Given
    # the two per-class constraints, any RB carries at most one of each, so
    # the rule reduces to re-asserting those bounds on shared RBs.
    shared = entries.sum(axis=1) > 1
    if shared.any():
        if nds[shared].sum(axis=1).max(initial=0) > 1:
            return False
        if ds[shared].sum(axis=1).max(initial=0) > 1:
            return False
    return True


def _class_assignments(n_links: int, n_rbs: int):
    """All ways to give distinct RBs to a subset of same-class links.

    Yields tuples ``assignment`` with ``assignment[link] = rb or -1``.
    Denser assignments come first (then link subset, then RB tuple), so a
    scheduler breaking value ties toward the lowest action index is
    work-conserving instead of idling.
    """
    link_ids = range(n_links)
    for k in range(min(n_links, n_rbs), -1, -1):
        for subset in itertools.combinations(link_ids, k):
            for rbs in itertools.permutations(range(n_rbs), k):
                assignment = [-1] * n_links
                for link, rb in zip(subset, rbs):
                    assignment[link] = rb
                yield tuple(assignment)


def count_feasible_actions(subregion: Subregion) -> int:
    """Closed-form size of the feasible action set (no enumeration)."""

    def per_class(n_links: int, n_rbs: int) -> int:
        total = 0
        for k in range(min(n_links, n_rbs) + 1):
            total += math.comb(n_links, k) * math.perm(n_rbs, k)
        return total

    return (per_class(subregion.n_nds_links, subregion.n_rbs)
            * per_class(subregion.n_ds_links, subregion.n_rbs))


def enumerate_feasible_actions(
    subregion: Subregion, cap: int = DEFAULT_ACTION_CAP
) -> list[AllocationMatrix]:
    """Materialize every feasible allocation matrix in deterministic order.

    Raises :class:`ActionSpaceError` when the exact count exceeds ``cap``;
    callers should fall back to the per-slot greedy scheduler in ``stage2``.
    """
    n_actions = count_feasible_actions(subregion)
    if n_actions > cap:
        raise ActionSpaceError(
            f"action space too large: {n_actions} > cap {cap}; "
            "use the per-slot greedy path in stage2.greedy_schedule"
        )
    n1, n2 = subregion.n_nds_links, subregion.n_ds_links
    n_rbs = subregion.n_rbs
    actions = []
    for nds_assign in _class_assignments(n1, n_rbs):
        for ds_assign in _class_assignments(n2, n_rbs):
            entries = np.zeros((n_rbs, subregion.n_links), dtype=np.uint8)
            for link, rb in enumerate(nds_assign):
                if rb >= 0:
                    entries[rb, link] = 1
            for link, rb in enumerate(ds_assign):
                if rb >= 0:
                    entries[rb, n1 + link] = 1
            actions.append(AllocationMatrix(entries))
    return actions
