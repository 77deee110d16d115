"""End-to-end slotted-time simulation of the two-stage allocator.

Every TDI epoch: ingest densities, split the RB budget across subregions
with the closed-form stage-one allocator, re-place vehicles, and re-solve
the stage-two scheduler per subregion (warm-started). Every slot: realize
channels, schedule, apply departures and arrivals, accumulate metrics.

Vehicles are re-drawn each epoch; queues and per-vehicle multipliers carry
over by (subregion, class, rank) so backlog pressure survives re-placement.
When a subregion holds more vehicles than the configured per-slot scheduling
caps, the scheduler serves the most backlogged ones each slot and the MDP is
solved for that cap-sized cast, marginalizing over which vehicles fill it.

Policies:
  ``two_stage``     stage-one shares + reduced-state (queue-only) scheduler
  ``full_optimal``  stage-one shares + quantized full-state scheduler
  ``equal_split``   equal shares + reduced-state scheduler
  ``random``        stage-one shares + uniformly random feasible action
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel, mobility, stage1, stage2
from .errors import ConfigurationError
from .model import ScenarioConfig, Subregion, default_geometry
from .stage1 import UtilityParams

POLICY_KINDS = ("two_stage", "full_optimal", "random", "equal_split")

CSV_HEADER = ("policy,tdi_regime,arrival_rate_pkt_s,seed,mean_delay_s,"
              "se_delay_s,mean_prr,mean_rate_bps,mean_queue_pkts,overflow_frac")


@dataclass
class EpochRecord:
    tdi: np.ndarray
    epsilon: np.ndarray
    budgets: np.ndarray
    rb_offsets: np.ndarray
    n_vehicles: int


@dataclass
class RunTimings:
    """Wall-clock accounting of the scheduling machinery.

    ``per_decision`` is the mean latency of mapping the current state to an
    allocation each slot; per-epoch solver work is reported separately via
    ``solve_seconds`` since it amortizes at the TDI time scale.
    """

    solve_seconds: float = 0.0
    online_seconds: float = 0.0
    n_decisions: int = 0

    @property
    def per_decision(self) -> float:
        if self.n_decisions == 0:
            return 0.0
        return self.online_seconds / self.n_decisions

    @property
    def solve_per_decision(self) -> float:
        if self.n_decisions == 0:
            return 0.0
        return self.solve_seconds / self.n_decisions


@dataclass
class MetricsReport:
    """Pooled vehicle-epoch averages plus per-run bookkeeping."""

    policy: str
    regime: str
    arrival_rate: float
    seed: int
    mean_delay_s: float
    mean_prr: float
    mean_rate_bps: float
    mean_queue_pkts: float
    overflow_frac: float
    n_stage1_solves: int
    epochs: list[EpochRecord]
    timings: RunTimings
    unit_is_ds: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    unit_delay: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def csv_row(self, se_delay: float = 0.0) -> str:
        return (f"{self.policy},{self.regime},{self.arrival_rate!r},"
                f"{self.seed},{self.mean_delay_s!r},{se_delay!r},"
                f"{self.mean_prr!r},{self.mean_rate_bps!r},"
                f"{self.mean_queue_pkts!r},{self.overflow_frac!r}")


class _CastDraw:
    """Gain bundle for one cast of links, in link order (NDS first)."""

    __slots__ = ("bs_gain", "nbr_gain")

    def __init__(self, bs_gain, nbr_gain):
        self.bs_gain = bs_gain
        self.nbr_gain = nbr_gain


def _carry_over(prev: np.ndarray | None, n_new: int, fill=0) -> np.ndarray:
    out = np.full(n_new, fill, dtype=float if not isinstance(fill, int) else int)
    if prev is not None and len(prev) and n_new:
        k = min(len(prev), n_new)
        out[:k] = prev[:k]
    return out


class _SubregionEpoch:
    """Everything one subregion needs for one epoch of scheduling."""

    def __init__(self, sid, budget, rb_offset, link_set, config, arrival_rate):
        self.sid = sid
        self.budget = budget
        self.rb_offset = rb_offset
        self.link_set = link_set
        self.n_nds_pop = link_set.n_nds
        self.n_ds_pop = link_set.n_ds
        self.n1 = min(self.n_nds_pop, config.max_sched_nds)
        self.n2 = min(self.n_ds_pop, config.max_sched_ds)
        self.arrival_rate = arrival_rate
        self.action_set = None
        self.solved = None
        self.quantizer = None
        self.mult = None
        self.fast_path = True
        self.radix = None
        self.truncated = (self.n1 < self.n_nds_pop) or (self.n2 < self.n_ds_pop)
        # flattened neighbor-pair bookkeeping for one-shot fading draws
        counts = [len(ids) for ids in link_set.nbr_ids]
        self.nbr_split = np.cumsum(counts)[:-1] if counts else np.array([], int)
        self.total_nbr = int(sum(counts))
        self.nbr_ls_flat = (np.concatenate(link_set.nbr_ls)
                            if self.total_nbr else np.zeros(0))
        # padded per-population-DS neighbor large-scale gains for batch draws
        max_n = max(counts, default=0)
        self.pop_nbr_pad = np.zeros((self.n_ds_pop, max_n))
        self.pop_nbr_mask = np.zeros((self.n_ds_pop, max_n), dtype=bool)
        for d, ls in enumerate(link_set.nbr_ls):
            self.pop_nbr_pad[d, :len(ls)] = ls
            self.pop_nbr_mask[d, :len(ls)] = True

    @property
    def active(self) -> bool:
        return self.budget > 0 and (self.n1 + self.n2) > 0

    def sample_mc_batch(self, config, rng, n_draws) -> stage2.DrawBatch:
        """Cast-marginalized channel draws for the conditional estimates.

        Each draw samples which vehicles fill the scheduling cast (uniformly,
        mirroring the per-slot rotation) and fresh small-scale fading.
        """
        n_tx = config.n_tx_antennas
        k = self.budget
        if self.n_nds_pop > self.n1:
            nds_sel = np.argsort(rng.random((n_draws, self.n_nds_pop)),
                                 axis=1)[:, :self.n1]
        else:
            nds_sel = np.tile(np.arange(self.n1), (n_draws, 1))
        if self.n_ds_pop > self.n2:
            ds_sel = np.argsort(rng.random((n_draws, self.n_ds_pop)),
                                axis=1)[:, :self.n2]
        else:
            ds_sel = np.tile(np.arange(self.n2), (n_draws, 1))
        rows = np.concatenate([nds_sel, self.n_nds_pop + ds_sel], axis=1)
        bs_ls = self.link_set.bs_ls[rows]
        bs = bs_ls[:, :, None] * channel.fading_power(
            n_tx, rng, (n_draws, self.n1 + self.n2, k))
        nbr_ls = self.pop_nbr_pad[ds_sel]        # (D, n2, maxN)
        nbr_mask = self.pop_nbr_mask[ds_sel]
        nbr = nbr_ls[:, :, :, None] * channel.fading_power(
            n_tx, rng, nbr_ls.shape + (k,))
        return stage2.DrawBatch(bs_gain=bs, nbr_gain=nbr, nbr_mask=nbr_mask)

    def realize_population(self, config, rng):
        """Per-slot fading for every population pair on this budget's RBs."""
        n_tx = config.n_tx_antennas
        n_pop = self.link_set.n_links
        bs = self.link_set.bs_ls[:, None] * channel.fading_power(
            n_tx, rng, (n_pop, self.budget))
        if self.total_nbr:
            flat = self.nbr_ls_flat[:, None] * channel.fading_power(
                n_tx, rng, (self.total_nbr, self.budget))
            nbr = np.split(flat, self.nbr_split)
        else:
            nbr = [np.zeros((0, self.budget)) for _ in range(self.n_ds_pop)]
        return bs, nbr


def _single_action_outcome(actions, a, draw, config, queue_cap):
    """Departures, PRR and rate of one action on one draw (plain floats)."""
    n1, n2 = actions.n_nds, actions.n_ds
    p = config.tx_power
    p_ds = config.tx_power * config.ds_power_factor
    sigma2 = config.noise_power
    logb = np.log(config.rate_log_base)
    mu = np.zeros(n1 + n2, dtype=np.int64)
    prr = np.zeros(n2)
    rate = np.zeros(n1)
    for i in range(n2):
        rb = actions.ds_rb[a, i]
        if rb < 0:
            continue
        sharer = actions.ds_sharer[a, i]
        interference = p * draw.bs_gain[sharer, rb] if sharer >= 0 else 0.0
        denom = sigma2 + interference
        gains = draw.nbr_gain[i]
        if gains.shape[0]:
            sinr = p_ds * gains[:, rb] / denom
            prr[i] = float((sinr >= config.sinr_threshold).mean())
            gate_sinr = float(sinr.min())
        else:
            gate_sinr = p_ds * draw.bs_gain[n1 + i, rb] / denom
            prr[i] = 1.0
        if gate_sinr >= config.sinr_threshold:
            r = config.bandwidth_per_rb * np.log1p(gate_sinr) / logb
            mu[n1 + i] = min(
                int(r * config.slot_duration / (8 * config.packet_size_ds)),
                queue_cap)
    for j in range(n1):
        rb = actions.nds_rb[a, j]
        if rb < 0:
            continue
        sharer = actions.nds_sharer[a, j]
        if sharer >= 0:
            g = draw.nbr_gain[sharer]
            proxy = (p_ds * g[:, rb].max() if g.shape[0]
                     else p_ds * draw.bs_gain[n1 + sharer, rb])
        else:
            proxy = 0.0
        rho = p * draw.bs_gain[j, rb] / (sigma2 + proxy)
        rate[j] = config.bandwidth_per_rb * np.log1p(rho) / logb
        mu[j] = min(int(rate[j] * config.slot_duration
                        / (8 * config.packet_size_nds)), queue_cap)
    return mu, prr, rate


def _class_mean_multipliers(beta_pop, gamma_pop, eta_pop, lam, n1, n2):
    """Cast-level multipliers: class means of the per-vehicle duals."""
    beta = np.full(n2, float(beta_pop.mean()) if len(beta_pop) else 0.0)
    gamma = np.full(n1, float(gamma_pop.mean()) if len(gamma_pop) else 0.0)
    eta_nds, eta_ds = eta_pop
    eta = np.concatenate([
        np.full(n1, float(eta_nds.mean()) if len(eta_nds) else 0.0),
        np.full(n2, float(eta_ds.mean()) if len(eta_ds) else 0.0),
    ])
    return stage2.LagrangeMultipliers(beta=beta, gamma=gamma, eta=eta, lam=lam)


def run(
    config: ScenarioConfig,
    horizon: int,
    policy_kind: str,
    regime: str = "low",
    seed: int | np.random.SeedSequence | None = None,
    warm_start_values: np.ndarray | None = None,
) -> MetricsReport:
    """Simulate ``horizon`` slots under one policy and return pooled metrics."""
    if policy_kind not in POLICY_KINDS:
        raise ConfigurationError(f"unknown policy kind {policy_kind!r}")
    slots_per_epoch = config.slots_per_tdi
    if horizon < slots_per_epoch:
        raise ConfigurationError(
            f"horizon {horizon} is shorter than one TDI interval "
            f"({slots_per_epoch} slots)")
    if config.total_rbs < 1:
        raise ConfigurationError("need at least one RB in total")

    if seed is None:
        seed = config.rng_seed
    root = (seed if isinstance(seed, np.random.SeedSequence)
            else np.random.SeedSequence(seed))
    seed_label = (root.entropy if isinstance(root.entropy, int)
                  else int(np.asarray(root.entropy).ravel()[0]))
    streams = root.spawn(7)
    rng_tdi, rng_place, rng_shadow, rng_fade, rng_arr, rng_pol, rng_mc = (
        np.random.default_rng(s) for s in streams)

    params = UtilityParams(c1=config.c1, c2=config.c2,
                           kappa_jam=config.kappa_jam)
    tdi_fixed = None
    if config.tdi_fixed.strip():
        vals = [float(x) for x in config.tdi_fixed.split(",")]
        tdi_fixed = mobility.TdiVector(np.array(vals))

    warmup_slot = int(config.warmup_frac * horizon)
    rate_per_slot = config.arrival_rate * config.slot_duration
    nq = config.queue_capacity
    needs_solver = policy_kind in ("two_stage", "full_optimal", "equal_split")

    timings = RunTimings()
    epochs: list[EpochRecord] = []
    unit_is_ds, unit_delay, unit_prr, unit_rate = [], [], [], []
    unit_queue, unit_overflow = [], []

    # state carried across epochs, keyed by (sid, class)
    prev_queues: dict[tuple[int, str], np.ndarray] = {}
    prev_beta: dict[int, np.ndarray] = {}
    prev_gamma: dict[int, np.ndarray] = {}
    prev_eta: dict[tuple[int, str], np.ndarray] = {}
    prev_lam: dict[int, float] = {}
    prev_values: dict[int, np.ndarray] = {}

    n_epochs = (horizon + slots_per_epoch - 1) // slots_per_epoch
    n_stage1 = 0
    global_slot = 0

    for epoch in range(n_epochs):
        tdi = tdi_fixed if tdi_fixed is not None else mobility.sample_tdi(
            regime, rng_tdi)
        if policy_kind == "equal_split":
            shares = stage1.ShareVector(epsilon=np.full(4, 0.25),
                                        active_count=4, multiplier=0.0)
        else:
            shares = stage1.allocate_shares(tdi, params)
        n_stage1 += 1
        budgets = stage1.rb_budgets(shares, config.total_rbs,
                                    config.leftover_mode)
        offsets = np.concatenate([[0], np.cumsum(budgets)[:-1]])
        layout = mobility.place_vehicles(tdi, config, rng_place)
        n_veh = layout.n_vehicles
        epochs.append(EpochRecord(tdi=tdi.kappa.copy(),
                                  epsilon=shares.epsilon.copy(),
                                  budgets=budgets.copy(),
                                  rb_offsets=offsets.copy(),
                                  n_vehicles=n_veh))

        queues = np.zeros(n_veh, dtype=np.int64)
        subs: list[_SubregionEpoch] = []
        # per-subregion vehicle bookkeeping in population link order
        pop_rows: dict[int, np.ndarray] = {}
        beta_pop, gamma_pop, eta_pop, lam_pop = {}, {}, {}, {}

        t_solve = time.perf_counter()
        for sid in range(1, 5):
            in_sub = layout.vehicles_in(sid)
            nds_pop = in_sub[~layout.is_ds[in_sub]]
            ds_pop = in_sub[layout.is_ds[in_sub]]
            queues[nds_pop] = _carry_over(
                prev_queues.get((sid, "nds")), len(nds_pop), 0)
            queues[ds_pop] = _carry_over(
                prev_queues.get((sid, "ds")), len(ds_pop), 0)
            link_set = channel.build_link_set(
                layout, sid, config, rng_shadow,
                nds_vehicles=nds_pop, ds_vehicles=ds_pop)
            sub = _SubregionEpoch(sid, int(budgets[sid - 1]),
                                  int(offsets[sid - 1]), link_set, config,
                                  config.arrival_rate)
            pop_rows[sid] = np.concatenate([nds_pop, ds_pop]).astype(int)
            beta_pop[sid] = _carry_over(prev_beta.get(sid), len(ds_pop), 0.0)
            gamma_pop[sid] = _carry_over(prev_gamma.get(sid), len(nds_pop), 0.0)
            eta_pop[sid] = (
                _carry_over(prev_eta.get((sid, "nds")), len(nds_pop), 0.0),
                _carry_over(prev_eta.get((sid, "ds")), len(ds_pop), 0.0),
            )
            lam_pop[sid] = prev_lam.get(sid, 0.0)

            if sub.active:
                spec_sub = Subregion(
                    id=sid, n_nds_links=sub.n1, n_ds_links=sub.n2,
                    n_rbs=sub.budget, geometry=default_geometry(config, sid))
                sub.action_set = stage2.build_action_set(
                    spec_sub, config.action_cap)
                if needs_solver:
                    mult = _class_mean_multipliers(
                        beta_pop[sid], gamma_pop[sid], eta_pop[sid],
                        lam_pop[sid], sub.n1, sub.n2)
                    arr_means = np.full(sub.n1 + sub.n2, config.arrival_rate)
                    v0 = prev_values.get(sid)
                    if epoch == 0 and warm_start_values is not None:
                        v0 = warm_start_values
                    if policy_kind == "full_optimal":
                        draws = sub.sample_mc_batch(config, rng_mc,
                                                    config.n_mc_full)
                        quant = stage2.build_quantizer(
                            draws, sub.n1, sub.n2, config.channel_levels)
                        if v0 is not None and v0.shape != (
                                quant.n_atoms,
                                (nq + 1) ** (sub.n1 + sub.n2)):
                            v0 = None
                        sub.solved = stage2.solve_full_bellman(
                            sub.action_set, draws, quant.assign(draws),
                            quant.n_atoms, mult, config, arr_means, nq,
                            v0=v0, quantizer=quant)
                        sub.quantizer = quant
                    else:
                        draws = sub.sample_mc_batch(config, rng_mc,
                                                    config.n_mc)
                        if v0 is not None and v0.shape != (
                                1, (nq + 1) ** (sub.n1 + sub.n2)):
                            v0 = None
                        sub.solved = stage2.solve_reduced_bellman(
                            sub.action_set, draws, mult, config, arr_means,
                            nq, v0=v0)
                    prev_values[sid] = sub.solved.values
                    sub.mult = mult
                else:
                    sub.mult = stage2.LagrangeMultipliers.zeros(sub.n1, sub.n2)
                sub.fast_path = sub.mult.channel_terms_zero()
                sub.radix = ((nq + 1) ** np.arange(sub.n1 + sub.n2)[::-1]
                             ).astype(np.int64)
            subs.append(sub)
        timings.solve_seconds += time.perf_counter() - t_solve

        # two sum sets: dual updates use the whole epoch, pooled metrics
        # honor the run-level warm-up discard
        epoch_slots = min(slots_per_epoch, horizon - global_slot)
        ep_prr = np.zeros(n_veh)
        ep_rate = np.zeros(n_veh)
        ep_queue = np.zeros(n_veh)
        ep_overflow = np.zeros(n_veh)
        ms_prr = np.zeros(n_veh)
        ms_rate = np.zeros(n_veh)
        ms_queue = np.zeros(n_veh)
        ms_overflow = np.zeros(n_veh)
        ms_slots = 0

        for _ in range(epoch_slots):
            arrivals = (rng_arr.poisson(rate_per_slot, n_veh)
                        if config.arrival_distribution == "poisson"
                        else (rng_arr.random(n_veh) < rate_per_slot)
                        .astype(np.int64))
            mu_global = np.zeros(n_veh, dtype=np.int64)
            prr_slot = np.zeros(n_veh)
            rate_slot = np.zeros(n_veh)

            for sub in subs:
                if not sub.link_set.n_links:
                    continue
                bs_pop, nbr_pop = sub.realize_population(config, rng_fade)
                if not sub.active:
                    continue
                rows = pop_rows[sub.sid]
                # cast: most backlogged per class, ties to lower rank
                qn = queues[rows[:sub.n_nds_pop]]
                qd = queues[rows[sub.n_nds_pop:]]
                nds_sel = np.lexsort((np.arange(len(qn)), -qn))[:sub.n1]
                ds_sel = np.lexsort((np.arange(len(qd)), -qd))[:sub.n2]
                nds_sel.sort()
                ds_sel.sort()
                cast_rows = np.concatenate(
                    [nds_sel, sub.n_nds_pop + ds_sel]).astype(int)
                draw = _CastDraw(bs_pop[cast_rows],
                                 [nbr_pop[d] for d in ds_sel])
                cast_q = np.minimum(queues[rows[cast_rows]], nq)

                t0 = time.perf_counter()
                if policy_kind == "random":
                    a = int(rng_pol.integers(sub.action_set.n_actions))
                else:
                    solved = sub.solved
                    atom = 0
                    if sub.quantizer is not None:
                        atom = sub.quantizer.atom_index(draw.bs_gain,
                                                        draw.nbr_gain)
                    s_idx = int(cast_q @ sub.radix)
                    if sub.fast_path:
                        a = int(solved.policy[atom, s_idx])
                    else:
                        ev = stage2.evaluate_actions(
                            sub.action_set, draw.bs_gain, draw.nbr_gain,
                            sub.mult, config, nq)
                        scores = ev.hterm + solved.kernel_term[atom, :, s_idx]
                        a = int(np.argmin(scores))
                timings.online_seconds += time.perf_counter() - t0
                timings.n_decisions += 1

                mu, prr_cast, rate_cast = _single_action_outcome(
                    sub.action_set, a, draw, config, nq)
                cast_global = rows[cast_rows]
                mu_global[cast_global] = mu
                prr_slot[cast_global[sub.n1:]] = prr_cast
                rate_slot[cast_global[:sub.n1]] = rate_cast

            overflow_now = queues >= nq
            ep_queue += queues
            ep_prr += prr_slot
            ep_rate += rate_slot
            ep_overflow += overflow_now
            if global_slot >= warmup_slot:
                ms_queue += queues
                ms_prr += prr_slot
                ms_rate += rate_slot
                ms_overflow += overflow_now
                ms_slots += 1
            queues = np.minimum(
                nq, np.maximum(0, queues - mu_global) + arrivals)
            global_slot += 1

        # pooled vehicle-epoch metrics from the post-warm-up portion
        if ms_slots > 0 and n_veh:
            unit_is_ds.extend(layout.is_ds.tolist())
            unit_delay.extend(
                (ms_queue / ms_slots / config.arrival_rate).tolist())
            unit_queue.extend((ms_queue / ms_slots).tolist())
            unit_overflow.extend((ms_overflow / ms_slots).tolist())
            unit_prr.extend((ms_prr / ms_slots).tolist())
            unit_rate.extend((ms_rate / ms_slots).tolist())

        # dual updates (per vehicle), carried to the next epoch by rank.
        # The rate multiplier gets a unit-corrected step: its subgradient is
        # in bit/s while the cost it controls competes with delay terms.
        if needs_solver and n_veh:
            step = config.dual_step / np.sqrt(epoch + 1)
            delay_scale = (config.alpha_weight * config.queue_capacity
                           / config.arrival_rate)
            rate_ref = 10.0 * config.bandwidth_per_rb
            step_gamma = (step * delay_scale
                          / (rate_ref * max(config.rate_floor, 1.0)))
            for sub in subs:
                sid = sub.sid
                rows = pop_rows[sid]
                if not len(rows):
                    continue
                n1p = sub.n_nds_pop
                delay_pop = ep_queue[rows] / epoch_slots / config.arrival_rate
                measured = stage2.MeasuredAverages(
                    prr=ep_prr[rows[n1p:]] / epoch_slots,
                    rate=ep_rate[rows[:n1p]] / epoch_slots,
                    delay=delay_pop,
                    overflow=ep_overflow[rows] / epoch_slots,
                )
                mult_pop = stage2.LagrangeMultipliers(
                    beta=beta_pop[sid], gamma=gamma_pop[sid],
                    eta=np.concatenate(eta_pop[sid]), lam=lam_pop[sid])
                new = stage2.update_multipliers(
                    mult_pop, measured, step, config.prr_floor,
                    config.rate_floor, n1p, step_gamma=step_gamma)
                prev_beta[sid] = new.beta
                prev_gamma[sid] = new.gamma
                prev_eta[(sid, "nds")] = new.eta[:n1p]
                prev_eta[(sid, "ds")] = new.eta[n1p:]
                prev_lam[sid] = new.lam

        for sub in subs:
            sid = sub.sid
            rows = pop_rows[sid]
            n1p = sub.n_nds_pop
            prev_queues[(sid, "nds")] = queues[rows[:n1p]].copy()
            prev_queues[(sid, "ds")] = queues[rows[n1p:]].copy()

    unit_is_ds = np.array(unit_is_ds, dtype=bool)
    unit_delay = np.array(unit_delay)
    unit_prr = np.array(unit_prr)
    unit_rate = np.array(unit_rate)
    unit_queue = np.array(unit_queue)
    unit_overflow = np.array(unit_overflow)

    def _mean(arr, mask=None):
        vals = arr if mask is None else arr[mask]
        return float(vals.mean()) if len(vals) else float("nan")

    return MetricsReport(
        policy=policy_kind,
        regime="fixed" if tdi_fixed is not None else regime,
        arrival_rate=config.arrival_rate,
        seed=seed_label,
        mean_delay_s=_mean(unit_delay, unit_is_ds),
        mean_prr=_mean(unit_prr, unit_is_ds),
        mean_rate_bps=_mean(unit_rate, ~unit_is_ds),
        mean_queue_pkts=_mean(unit_queue),
        overflow_frac=_mean(unit_overflow),
        n_stage1_solves=n_stage1,
        epochs=epochs,
        timings=timings,
        unit_is_ds=unit_is_ds,
        unit_delay=unit_delay,
    )


def _sweep_cell(args):
    (config, horizon, policy, regime, rate, root_seed, rep) = args
    cfg = replace(config, arrival_rate=rate)
    ss = np.random.SeedSequence([root_seed, rep])
    report = run(cfg, horizon, policy, regime=regime, seed=ss)
    return report


def sweep(
    config: ScenarioConfig,
    arrival_rates: list[float],
    tdi_regimes: list[str],
    repetitions: int,
    policies: list[str] | None = None,
    horizon: int | None = None,
    workers: int = 1,
) -> tuple[list[str], dict]:
    """Cartesian sweep; returns CSV lines and the raw per-rep reports.

    One CSV row per (policy, regime, rate) cell with the mean and standard
    error over repetitions. Repetition ``r`` uses the same derived seed in
    every cell, so comparisons across policies, regimes and rates are paired.
    """
    if not arrival_rates or not tdi_regimes:
        raise ConfigurationError("sweep grids must be nonempty")
    policies = list(policies) if policies else ["two_stage"]
    horizon = horizon or 2 * config.slots_per_tdi
    root_seed = config.rng_seed

    tasks = []
    for policy in policies:
        for regime in tdi_regimes:
            for rate in arrival_rates:
                for rep in range(repetitions):
                    tasks.append((config, horizon, policy, regime, rate,
                                  root_seed, rep))
    if workers > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_sweep_cell, tasks, chunksize=1))
    else:
        reports = [_sweep_cell(t) for t in tasks]

    lines = [CSV_HEADER]
    raw: dict[tuple, list[MetricsReport]] = {}
    idx = 0
    for policy in policies:
        for regime in tdi_regimes:
            for rate in arrival_rates:
                cell = reports[idx:idx + repetitions]
                idx += repetitions
                raw[(policy, regime, rate)] = cell
                delays = np.array([r.mean_delay_s for r in cell])
                se = (float(delays.std(ddof=1) / np.sqrt(len(delays)))
                      if len(delays) > 1 else 0.0)
                mean_rep = MetricsReport(
                    policy=policy, regime=regime, arrival_rate=rate,
                    seed=root_seed,
                    mean_delay_s=float(delays.mean()),
                    mean_prr=float(np.mean([r.mean_prr for r in cell])),
                    mean_rate_bps=float(np.mean([r.mean_rate_bps
                                                 for r in cell])),
                    mean_queue_pkts=float(np.mean([r.mean_queue_pkts
                                                   for r in cell])),
                    overflow_frac=float(np.mean([r.overflow_frac
                                                 for r in cell])),
                    n_stage1_solves=0, epochs=[], timings=RunTimings(),
                )
                lines.append(mean_rep.csv_row(se_delay=se))
    return lines, raw
