"""Intra-subregion delay-optimal scheduling via an average-cost MDP.

The constrained problem (delay objective, reliability / rate / ordering
constraints) is relaxed with Lagrange multipliers into an unconstrained
average-cost MDP over queue states, solved by relative value iteration.

Two solvers share one iteration core:

* the full-state solver keeps a quantized channel component in the state
  (finitely many channel "atoms", i.i.d. across slots);
* the reduced-state solver keeps queue states only and absorbs the channel
  into conditional expectations estimated from Monte Carlo draws.

Transition kernels factor per link: given an action and a channel draw the
departure vector is fixed, so the next-queue law is a product of per-link
matrices. The iteration exploits this with per-axis tensor contractions
instead of materializing the joint kernel.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .channel import ChannelRealization
from .errors import ConfigurationError, ConvergenceError
from .metrics import prr as prr_op
from .metrics import rate_nds as rate_op
from .model import (AllocationMatrix, ScenarioConfig, Subregion,
                    enumerate_feasible_actions)

__all__ = [
    "LagrangeMultipliers", "MeasuredAverages", "ActionSet", "ActionEvaluation",
    "SolvedPolicy", "build_action_set", "evaluate_actions", "per_stage_cost",
    "queue_cost_grid", "arrival_pmf", "service_transitions",
    "relative_value_iteration", "solve_reduced_bellman", "solve_full_bellman",
    "online_schedule", "greedy_schedule", "update_multipliers",
    "ChannelQuantizer", "build_quantizer", "save_value_table",
    "load_value_table",
]


@dataclass
class LagrangeMultipliers:
    """Nonnegative multipliers of the relaxed per-stage cost.

    ``beta`` weighs the PRR floor per DS link, ``gamma`` the rate floor per
    NDS link, ``eta`` the queue-overflow indicator per link (NDS first), and
    ``lam`` the delay-ordering term between the two classes.
    """

    beta: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        if ((self.beta < 0).any() or (self.gamma < 0).any()
                or (self.eta < 0).any() or self.lam < 0):
            raise ValueError("Lagrange multipliers must be nonnegative")

    @classmethod
    def zeros(cls, n_nds: int, n_ds: int) -> "LagrangeMultipliers":
        return cls(beta=np.zeros(n_ds), gamma=np.zeros(n_nds),
                   eta=np.zeros(n_nds + n_ds), lam=0.0)

    def all_zero(self) -> bool:
        return (not self.beta.any() and not self.gamma.any()
                and not self.eta.any() and self.lam == 0.0)

    def channel_terms_zero(self) -> bool:
        """True when the per-slot channel-dependent cost vanishes.

        Only the PRR and rate multipliers touch the current channel draw;
        the overflow and ordering multipliers enter through queue states
        alone, so the online rule stays a table lookup while they are the
        only active duals.
        """
        return not self.beta.any() and not self.gamma.any()


@dataclass
class MeasuredAverages:
    """Time-averaged constraint readouts feeding the dual update."""

    prr: np.ndarray       # per DS link
    rate: np.ndarray      # per NDS link, bit/s
    delay: np.ndarray     # per link, mean queue / arrival rate, seconds
    overflow: np.ndarray  # per link, fraction of slots at capacity


def update_multipliers(
    mult: LagrangeMultipliers,
    measured: MeasuredAverages,
    step: float,
    prr_floor: float,
    rate_floor: float,
    n_nds: int,
    step_gamma: float | None = None,
) -> LagrangeMultipliers:
    """Projected subgradient ascent on the dual variables.

    ``step_gamma`` lets callers use a separate step for the rate multiplier,
    whose subgradient is measured in bit/s and therefore lives on a very
    different scale than the other constraint readouts; it defaults to
    ``step``.
    """
    if step <= 0:
        raise ValueError("dual step must be positive")
    if step_gamma is None:
        step_gamma = step
    beta = np.maximum(0.0, mult.beta + step * (prr_floor - measured.prr))
    gamma = np.maximum(0.0, mult.gamma
                       + step_gamma * (rate_floor - measured.rate))
    eta = np.maximum(0.0, mult.eta + step * measured.overflow)
    if n_nds > 0 and len(measured.delay) > n_nds:
        ordering_gap = measured.delay[n_nds:].max() - measured.delay[:n_nds].min()
    else:
        ordering_gap = 0.0
    lam = max(0.0, mult.lam + step * ordering_gap)
    return LagrangeMultipliers(beta=beta, gamma=gamma, eta=eta, lam=lam)


@dataclass
class ActionSet:
    """Enumerated feasible allocations with index arrays for fast evaluation.

    ``nds_rb[a, j]`` / ``ds_rb[a, i]`` give the RB of each link under action
    ``a`` (-1 when idle); ``ds_sharer[a, i]`` is the local NDS index sharing
    the RB of DS link ``i`` (-1 when alone), and symmetrically for
    ``nds_sharer``.
    """

    matrices: list[AllocationMatrix]
    n_nds: int
    n_ds: int
    n_rbs: int
    nds_rb: np.ndarray
    ds_rb: np.ndarray
    nds_sharer: np.ndarray
    ds_sharer: np.ndarray

    @property
    def n_actions(self) -> int:
        return len(self.matrices)

    @property
    def n_links(self) -> int:
        return self.n_nds + self.n_ds


def build_action_set(subregion: Subregion, cap: int) -> ActionSet:
    matrices = enumerate_feasible_actions(subregion, cap)
    n1, n2 = subregion.n_nds_links, subregion.n_ds_links
    n_act = len(matrices)
    nds_rb = np.full((n_act, n1), -1, dtype=np.int64)
    ds_rb = np.full((n_act, n2), -1, dtype=np.int64)
    nds_sharer = np.full((n_act, n1), -1, dtype=np.int64)
    ds_sharer = np.full((n_act, n2), -1, dtype=np.int64)
    for a, mat in enumerate(matrices):
        for j in range(n1):
            rb = mat.rb_of_link(j)
            nds_rb[a, j] = rb
            if rb >= 0:
                ds_on_rb = np.flatnonzero(mat.entries[rb, n1:])
                if ds_on_rb.size:
                    nds_sharer[a, j] = ds_on_rb[0]
        for i in range(n2):
            rb = mat.rb_of_link(n1 + i)
            ds_rb[a, i] = rb
            if rb >= 0:
                nds_on_rb = np.flatnonzero(mat.entries[rb, :n1])
                if nds_on_rb.size:
                    ds_sharer[a, i] = nds_on_rb[0]
    return ActionSet(matrices=matrices, n_nds=n1, n_ds=n2,
                     n_rbs=subregion.n_rbs, nds_rb=nds_rb, ds_rb=ds_rb,
                     nds_sharer=nds_sharer, ds_sharer=ds_sharer)


@dataclass
class ActionEvaluation:
    """Per-action slot quantities for one channel draw."""

    mu: np.ndarray        # (A, L) departures in packets, NDS links first
    prr: np.ndarray       # (A, n_ds)
    rate: np.ndarray      # (A, n_nds) bit/s
    hterm: np.ndarray     # (A,) multiplier-weighted channel-dependent cost


@dataclass
class DrawBatch:
    """Dense stack of channel draws for vectorized conditional estimation.

    Neighbor axes are padded to the widest neighborhood; ``nbr_mask`` marks
    the real entries.
    """

    bs_gain: np.ndarray    # (D, L, K)
    nbr_gain: np.ndarray   # (D, n_ds, maxN, K)
    nbr_mask: np.ndarray   # (D, n_ds, maxN) bool

    @property
    def n_draws(self) -> int:
        return self.bs_gain.shape[0]

    @classmethod
    def from_draws(cls, draws: list, n_nds: int, n_ds: int) -> "DrawBatch":
        n_rbs = draws[0].bs_gain.shape[1]
        max_n = max((d.nbr_gain[i].shape[0] for d in draws
                     for i in range(n_ds)), default=0)
        d_count = len(draws)
        bs = np.zeros((d_count, n_nds + n_ds, n_rbs))
        nbr = np.zeros((d_count, n_ds, max_n, n_rbs))
        mask = np.zeros((d_count, n_ds, max_n), dtype=bool)
        for di, d in enumerate(draws):
            bs[di] = d.bs_gain
            for i in range(n_ds):
                g = d.nbr_gain[i]
                nbr[di, i, :g.shape[0]] = g
                mask[di, i, :g.shape[0]] = True
        return cls(bs_gain=bs, nbr_gain=nbr, nbr_mask=mask)

    def draw_view(self, di: int) -> "GainDraw":
        """Single-draw object compatible with :func:`evaluate_actions`."""
        n_ds = self.nbr_gain.shape[1]
        nbr = [self.nbr_gain[di, i][self.nbr_mask[di, i]]
               for i in range(n_ds)]
        return GainDraw(bs_gain=self.bs_gain[di], nbr_gain=nbr)


@dataclass
class GainDraw:
    """Minimal gain bundle in link order (NDS first)."""

    bs_gain: np.ndarray
    nbr_gain: list[np.ndarray]


def _packets(rates: np.ndarray, config: ScenarioConfig, size_bytes: int,
             cap: int) -> np.ndarray:
    pkts = np.floor(rates * config.slot_duration / (8.0 * size_bytes))
    return np.minimum(pkts, cap).astype(np.int64)


def evaluate_actions(
    actions: ActionSet,
    bs_gain: np.ndarray,
    nbr_gain: list[np.ndarray],
    mult: LagrangeMultipliers,
    config: ScenarioConfig,
    queue_cap: int,
) -> ActionEvaluation:
    """Vectorized SINR / PRR / rate / departure evaluation over all actions.

    ``bs_gain`` has shape (n_links, n_rbs); ``nbr_gain[i]`` has shape
    (n_neighbors_i, n_rbs) for DS link ``i``. DS departures are gated on the
    worst-neighbor SINR; a DS link with no neighbors gates on its BS path.
    """
    n1, n2, n_act = actions.n_nds, actions.n_ds, actions.n_actions
    p = config.tx_power
    p_ds = config.tx_power * config.ds_power_factor
    sigma2 = config.noise_power
    log_base = np.log(config.rate_log_base)
    band = config.bandwidth_per_rb

    mu = np.zeros((n_act, n1 + n2), dtype=np.int64)
    prr = np.zeros((n_act, n2))
    rate = np.zeros((n_act, n1))

    ibs = p * bs_gain[:n1] if n1 else np.zeros((0, actions.n_rbs))

    for i in range(n2):
        rb = actions.ds_rb[:, i]
        sharer = actions.ds_sharer[:, i]
        scheduled = rb >= 0
        rb_safe = np.where(scheduled, rb, 0)
        if n1 > 0:
            sharer_safe = np.where(sharer >= 0, sharer, 0)
            interference = np.where(sharer >= 0,
                                    ibs[sharer_safe, rb_safe], 0.0)
        else:
            interference = np.zeros(n_act)
        denom = sigma2 + interference
        gains = nbr_gain[i]
        if gains.shape[0] > 0:
            sig = p_ds * gains[:, rb_safe]       # (n_nbrs, A)
            sinr = sig / denom[None, :]
            ok = sinr >= config.sinr_threshold
            prr[:, i] = np.where(scheduled, ok.mean(axis=0), 0.0)
            gate_sinr = sinr.min(axis=0)
        else:
            own = p_ds * bs_gain[n1 + i, rb_safe]
            gate_sinr = own / denom
            prr[:, i] = 1.0  # nothing to fail with an empty neighborhood
        gate = scheduled & (gate_sinr >= config.sinr_threshold)
        rates_i = band * np.log1p(gate_sinr) / log_base
        mu[:, n1 + i] = np.where(
            gate, _packets(rates_i, config, config.packet_size_ds, queue_cap), 0)

    maxnbr = [
        (p_ds * g.max(axis=0) if g.shape[0] > 0 else p_ds * bs_gain[n1 + i])
        for i, g in enumerate(nbr_gain)
    ]
    for j in range(n1):
        rb = actions.nds_rb[:, j]
        sharer = actions.nds_sharer[:, j]
        scheduled = rb >= 0
        rb_safe = np.where(scheduled, rb, 0)
        interference = np.zeros(n_act)
        has_sharer = sharer >= 0
        if has_sharer.any():
            sharer_safe = np.where(has_sharer, sharer, 0)
            proxies = np.stack(maxnbr, axis=0) if n2 else None
            interference = np.where(
                has_sharer, proxies[sharer_safe, rb_safe], 0.0)
        rho = p * bs_gain[j, rb_safe] / (sigma2 + interference)
        rate[:, j] = np.where(scheduled,
                              band * np.log1p(rho) / log_base, 0.0)
        mu[:, j] = _packets(rate[:, j], config, config.packet_size_nds,
                            queue_cap)

    hterm = (-(mult.beta[None, :] * (prr - config.prr_floor)).sum(axis=1)
             - (mult.gamma[None, :] * (rate - config.rate_floor)).sum(axis=1))
    return ActionEvaluation(mu=mu, prr=prr, rate=rate, hterm=hterm)


def evaluate_actions_batch(
    actions: ActionSet,
    batch: DrawBatch,
    mult: LagrangeMultipliers,
    config: ScenarioConfig,
    queue_cap: int,
) -> ActionEvaluation:
    """Draw-batched version of :func:`evaluate_actions`.

    Returns arrays with a leading draw axis: ``mu`` is (D, A, L), ``prr``
    (D, A, n_ds), ``rate`` (D, A, n_nds), ``hterm`` (D, A).
    """
    n1, n2, n_act = actions.n_nds, actions.n_ds, actions.n_actions
    d_count = batch.n_draws
    p = config.tx_power
    p_ds = config.tx_power * config.ds_power_factor
    sigma2 = config.noise_power
    log_base = np.log(config.rate_log_base)
    band = config.bandwidth_per_rb
    th = config.sinr_threshold

    mu = np.zeros((d_count, n_act, n1 + n2), dtype=np.int64)
    prr = np.zeros((d_count, n_act, n2))
    rate = np.zeros((d_count, n_act, n1))

    ibs = p * batch.bs_gain[:, :n1, :]

    def pkts(rates: np.ndarray, size_bytes: int) -> np.ndarray:
        out = np.floor(rates * config.slot_duration / (8.0 * size_bytes))
        return np.minimum(out, queue_cap).astype(np.int64)

    for i in range(n2):
        rb = actions.ds_rb[:, i]
        sharer = actions.ds_sharer[:, i]
        scheduled = rb >= 0
        rb_safe = np.where(scheduled, rb, 0)
        sharer_safe = np.where(sharer >= 0, sharer, 0)
        if n1:
            interference = np.where(sharer >= 0,
                                    ibs[:, sharer_safe, rb_safe], 0.0)
        else:
            interference = np.zeros((d_count, n_act))
        denom = sigma2 + interference                     # (D, A)
        gains = batch.nbr_gain[:, i, :, :]                # (D, maxN, K)
        mask = batch.nbr_mask[:, i, :]                    # (D, maxN)
        counts = mask.sum(axis=1)                         # (D,)
        has_nbrs = counts > 0
        if batch.nbr_gain.shape[2]:
            sig = p_ds * gains[:, :, rb_safe]             # (D, maxN, A)
            sinr = sig / denom[:, None, :]
            ok = (sinr >= th) & mask[:, :, None]
            prr_nbr = ok.sum(axis=1) / np.maximum(counts, 1)[:, None]
            gate_nbr = np.where(mask[:, :, None], sinr, np.inf).min(axis=1)
        else:
            prr_nbr = np.zeros((d_count, n_act))
            gate_nbr = np.full((d_count, n_act), np.inf)
        own = p_ds * batch.bs_gain[:, n1 + i, rb_safe] / denom
        gate_sinr = np.where(has_nbrs[:, None], gate_nbr, own)
        prr[:, :, i] = np.where(
            has_nbrs[:, None],
            np.where(scheduled[None, :], prr_nbr, 0.0), 1.0)
        gate = scheduled[None, :] & (gate_sinr >= th)
        rates_i = band * np.log1p(gate_sinr) / log_base
        mu[:, :, n1 + i] = np.where(gate, pkts(rates_i, config.packet_size_ds),
                                    0)

    if n2 and batch.nbr_gain.shape[2]:
        masked = np.where(batch.nbr_mask[:, :, :, None], batch.nbr_gain, 0.0)
        proxy_nbr = p_ds * masked.max(axis=2)             # (D, n_ds, K)
        counts_all = batch.nbr_mask.sum(axis=2)           # (D, n_ds)
        proxies = np.where(counts_all[:, :, None] > 0, proxy_nbr,
                           p_ds * batch.bs_gain[:, n1:, :])
    elif n2:
        proxies = p_ds * batch.bs_gain[:, n1:, :]
    for j in range(n1):
        rb = actions.nds_rb[:, j]
        sharer = actions.nds_sharer[:, j]
        scheduled = rb >= 0
        rb_safe = np.where(scheduled, rb, 0)
        sharer_safe = np.where(sharer >= 0, sharer, 0)
        if n2:
            interference = np.where(sharer >= 0,
                                    proxies[:, sharer_safe, rb_safe], 0.0)
        else:
            interference = np.zeros((d_count, n_act))
        rho = p * batch.bs_gain[:, j, rb_safe] / (sigma2 + interference)
        rate[:, :, j] = np.where(scheduled[None, :],
                                 band * np.log1p(rho) / log_base, 0.0)
        mu[:, :, j] = pkts(rate[:, :, j], config.packet_size_nds)

    hterm = (-(mult.beta[None, None, :]
               * (prr - config.prr_floor)).sum(axis=2)
             - (mult.gamma[None, None, :]
                * (rate - config.rate_floor)).sum(axis=2))
    return ActionEvaluation(mu=mu, prr=prr, rate=rate, hterm=hterm)


def per_stage_cost(
    queues: np.ndarray,
    action: AllocationMatrix,
    channels: ChannelRealization,
    mult: LagrangeMultipliers,
    config: ScenarioConfig,
    arrival_means: np.ndarray,
    alpha: np.ndarray | None = None,
) -> float:
    """Readable scalar form of the relaxed per-stage cost.

    ``queues`` and ``arrival_means`` (packets/s) follow link order; ``alpha``
    defaults to the configured uniform delay weight.
    """
    ls = channels.link_set
    n1, n2 = ls.n_nds, ls.n_ds
    queues = np.asarray(queues, dtype=float)
    if alpha is None:
        alpha = np.full(n2, config.alpha_weight)
    delay = queues / np.asarray(arrival_means, dtype=float)
    cost = float((alpha * delay[n1:]).sum())
    for i in range(n2):
        cost -= mult.beta[i] * (prr_op(n1 + i, action, channels, config)
                                - config.prr_floor)
    for j in range(n1):
        cost -= mult.gamma[j] * (rate_op(j, action, channels, config)
                                 - config.rate_floor)
    if n1 > 0 and n2 > 0:
        cost += mult.lam * (delay[n1:].max() - delay[:n1].min())
    cost += float((mult.eta * (queues >= config.queue_capacity)).sum())
    return cost


def queue_cost_grid(
    nq: int,
    n_nds: int,
    n_ds: int,
    alpha: np.ndarray,
    arrival_means: np.ndarray,
    eta: np.ndarray,
    lam: float,
) -> np.ndarray:
    """Channel-independent part of the per-stage cost on the queue grid.

    Returns a flat array over the row-major queue state space
    ``{0..nq}^(n_nds+n_ds)``.
    """
    n_links = n_nds + n_ds
    grids = np.indices((nq + 1,) * n_links).reshape(n_links, -1).astype(float)
    abar = np.asarray(arrival_means, dtype=float)[:, None]
    # a link with no arrivals has no defined delay; it contributes nothing
    delay = np.divide(grids, abar, out=np.zeros_like(grids),
                      where=abar > 0)
    cost = (np.asarray(alpha)[:, None] * delay[n_nds:]).sum(axis=0)
    if n_nds > 0 and n_ds > 0 and lam > 0:
        cost = cost + lam * (delay[n_nds:].max(axis=0) - delay[:n_nds].min(axis=0))
    cost = cost + (np.asarray(eta)[:, None] * (grids >= nq)).sum(axis=0)
    return cost


def arrival_pmf(mean_per_slot: float, nq: int, kind: str = "poisson") -> np.ndarray:
    """Per-slot arrival pmf on 0..nq; the tail is lumped in the kernel build."""
    ks = np.arange(nq + 1)
    if kind == "poisson":
        return stats.poisson.pmf(ks, mean_per_slot)
    if kind == "bernoulli":
        pmf = np.zeros(nq + 1)
        pmf[0] = 1.0 - min(mean_per_slot, 1.0)
        pmf[min(1, nq)] += min(mean_per_slot, 1.0)
        return pmf
    raise ValueError(f"unknown arrival kind {kind!r}")


def service_transitions(nq: int, pmf: np.ndarray) -> np.ndarray:
    """Per-link transition matrices ``T[mu][q, q']`` for each service level.

    Rows are exact probability distributions: arrival mass beyond capacity is
    lumped into the full-queue column.
    """
    mats = np.zeros((nq + 1, nq + 1, nq + 1))
    for mu in range(nq + 1):
        for q in range(nq + 1):
            base = max(0, q - mu)
            room = nq - base
            mats[mu, q, base:base + room] = pmf[:room]
            mats[mu, q, nq] = 1.0 - pmf[:room].sum()
    return mats


def _apply_kernel(w: np.ndarray, mu_vec: np.ndarray,
                  t_mats: list[np.ndarray]) -> np.ndarray:
    """Expected value of ``w`` one transition ahead under fixed departures.

    Contracts each queue axis with that link's transition matrix; the
    moveaxis/matmul form avoids tensordot's setup overhead on these small
    tensors.
    """
    out = w
    for axis, mu in enumerate(mu_vec):
        t = t_mats[axis][mu]
        out = np.moveaxis(np.moveaxis(out, axis, -1) @ t.T, -1, axis)
    return out


@dataclass
class SolvedPolicy:
    """Output of relative value iteration.

    ``values`` is the relative value function over (atom, queue state);
    ``policy`` the minimizing action index; ``kernel_term[h, a, s]`` the
    precomputed expected-next-value term used by the online rule.
    """

    theta: float
    values: np.ndarray        # (H, S)
    policy: np.ndarray        # (H, S) int
    kernel_term: np.ndarray   # (H, A, S)
    hterm: np.ndarray         # (H, A)
    residuals: list[float]
    nq: int
    n_links: int
    atom_probs: np.ndarray
    quantizer: "ChannelQuantizer | None" = None
    kernel_row_deviation: float = 0.0
    solve_seconds: float = 0.0

    def state_index(self, queues: np.ndarray) -> int:
        idx = 0
        for q in queues:
            idx = idx * (self.nq + 1) + int(q)
        return idx


def relative_value_iteration(
    atom_probs: np.ndarray,
    qcost: np.ndarray,
    hterm: np.ndarray,
    mixtures: list[list[tuple[np.ndarray, np.ndarray]]],
    t_mats: list[np.ndarray],
    nq: int,
    n_links: int,
    tol: float = 1e-6,
    max_iters: int = 100_000,
    v0: np.ndarray | None = None,
    damping: float = 0.9,
) -> SolvedPolicy:
    """Span-seminorm relative value iteration with a factored kernel.

    ``mixtures[h][a]`` is ``(weights, mu_matrix)``: the next-queue law under
    atom ``h`` and action ``a`` is the weighted mixture of the product
    kernels induced by each departure vector (rows of ``mu_matrix``). The
    value function is anchored at (atom 0, all-empty queues).

    ``damping`` applies the aperiodicity transform (a lazy chain mixing the
    identity with the true kernel), which leaves the average cost, the
    minimizing actions and the reported kernel term untouched while letting
    the span criterion converge on (near-)periodic dynamics.
    """
    t0 = time.perf_counter()
    atom_probs = np.asarray(atom_probs, dtype=float)
    n_atoms = len(atom_probs)
    n_actions = hterm.shape[1]
    qshape = (nq + 1,) * n_links
    n_states = int(np.prod(qshape))

    # Every distinct departure vector appearing anywhere; contraction results
    # are shared across atoms and actions within a sweep, and each atom's
    # mixture weights live in one dense (actions x vectors) matrix so the
    # per-sweep mixing is a single matmul.
    unique_vecs: dict[tuple, int] = {}
    weight_rows: list[list[tuple[int, np.ndarray, np.ndarray]]] = []
    row_dev = 0.0
    for h in range(n_atoms):
        row = []
        for a in range(n_actions):
            weights, mu_mat = mixtures[h][a]
            weights = np.asarray(weights, dtype=float)
            total = weights.sum()
            row_dev = max(row_dev, abs(total - 1.0))
            weights = weights / total
            ids = np.array([
                unique_vecs.setdefault(tuple(int(m) for m in vec),
                                       len(unique_vecs))
                for vec in np.atleast_2d(mu_mat)
            ])
            row.append((a, ids, weights))
        weight_rows.append(row)
    vec_list = [np.array(v) for v, _ in
                sorted(unique_vecs.items(), key=lambda kv: kv[1])]
    n_vecs = len(vec_list)
    mix = np.zeros((n_atoms, n_actions, n_vecs))
    for h, row in enumerate(weight_rows):
        for a, ids, weights in row:
            np.add.at(mix[h, a], ids, weights)

    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    v = np.zeros((n_atoms, n_states)) if v0 is None else v0.copy()
    residuals: list[float] = []
    ev = np.empty((n_vecs, n_states))
    for _ in range(max_iters):
        w = (atom_probs @ v.reshape(n_atoms, n_states)).reshape(qshape)
        for u, vec in enumerate(vec_list):
            ev[u] = _apply_kernel(w, vec, t_mats).reshape(-1)
        q_sa = damping * (mix @ ev)
        np.add(q_sa, hterm[:, :, None], out=q_sa)
        tv = q_sa.min(axis=1) + qcost[None, :] + (1.0 - damping) * v
        delta = tv - v
        span = float(delta.max() - delta.min())
        residuals.append(span)
        if span < tol:
            theta = float((delta.max() + delta.min()) / 2.0)
            policy = q_sa.argmin(axis=1)
            kernel = q_sa - hterm[:, :, None]
            return SolvedPolicy(
                theta=theta, values=v, policy=policy, kernel_term=kernel,
                hterm=hterm, residuals=residuals, nq=nq, n_links=n_links,
                atom_probs=atom_probs, kernel_row_deviation=row_dev,
                solve_seconds=time.perf_counter() - t0,
            )
        v = tv - tv[0, 0]
    raise ConvergenceError("relative value iteration did not converge",
                           residuals[-1])


def _mixtures_from_mu(mu: np.ndarray):
    """Per-action mixtures of departure vectors from a (D, A, L) array."""
    mixtures = []
    for a in range(mu.shape[1]):
        vecs, counts = np.unique(mu[:, a, :], axis=0, return_counts=True)
        mixtures.append((counts / counts.sum(), vecs))
    return mixtures


def _as_batch(draws, actions: ActionSet) -> DrawBatch:
    if isinstance(draws, DrawBatch):
        return draws
    if not draws:
        raise ValueError("at least one channel draw is required")
    return DrawBatch.from_draws(draws, actions.n_nds, actions.n_ds)


def solve_reduced_bellman(
    actions: ActionSet,
    draws,
    mult: LagrangeMultipliers,
    config: ScenarioConfig,
    arrival_means: np.ndarray,
    nq: int,
    alpha: np.ndarray | None = None,
    tol: float | None = None,
    max_iters: int | None = None,
    v0: np.ndarray | None = None,
) -> SolvedPolicy:
    """Queue-only Bellman solution with channel conditionals from Monte Carlo.

    ``draws`` is a :class:`DrawBatch` (or list of draw objects with
    ``bs_gain`` / ``nbr_gain``) used to estimate the conditional per-stage
    cost and the conditional transition kernel. Determinism is the caller's:
    pass draws from a seeded stream.
    """
    batch = _as_batch(draws, actions)
    ev = evaluate_actions_batch(actions, batch, mult, config, nq)
    hterm = ev.hterm.mean(axis=0)[None, :]
    mixtures = [_mixtures_from_mu(ev.mu)]
    return _solve_common(actions, hterm, mixtures, np.array([1.0]), mult,
                         config, arrival_means, nq, alpha, tol, max_iters, v0)


def solve_full_bellman(
    actions: ActionSet,
    draws: list,
    draw_atoms: np.ndarray,
    n_atoms: int,
    mult: LagrangeMultipliers,
    config: ScenarioConfig,
    arrival_means: np.ndarray,
    nq: int,
    atom_probs: np.ndarray | None = None,
    alpha: np.ndarray | None = None,
    tol: float | None = None,
    max_iters: int | None = None,
    v0: np.ndarray | None = None,
    quantizer: "ChannelQuantizer | None" = None,
) -> SolvedPolicy:
    """Bellman solution over the product of channel atoms and queue states.

    The channel state is a quantized atom index, i.i.d. across slots.
    ``draw_atoms[i]`` assigns channel draw ``i`` to its atom; per-atom costs
    and kernels are the bucketed conditional estimates over those draws, so a
    deterministic channel (every draw in one atom) reproduces the reduced
    solver exactly. ``atom_probs`` defaults to the empirical bucket
    frequencies. An atom with no draws falls back to the unconditional
    bucket and gets probability zero.
    """
    n_states = (nq + 1) ** actions.n_links
    problem_size = n_atoms * n_states * actions.n_actions
    if problem_size > config.full_state_cap:
        raise ConfigurationError(
            f"full-state problem size {problem_size} exceeds full_state_cap "
            f"{config.full_state_cap}"
        )
    batch = _as_batch(draws, actions)
    draw_atoms = np.asarray(draw_atoms, dtype=int)
    if len(draw_atoms) != batch.n_draws:
        raise ValueError("draw_atoms must assign every draw to an atom")
    ev = evaluate_actions_batch(actions, batch, mult, config, nq)
    hterm = np.zeros((n_atoms, actions.n_actions))
    mixtures = []
    counts = np.zeros(n_atoms)
    for h in range(n_atoms):
        sel = np.flatnonzero(draw_atoms == h)
        counts[h] = len(sel)
        if not len(sel):
            sel = np.arange(batch.n_draws)
        hterm[h] = ev.hterm[sel].mean(axis=0)
        mixtures.append(_mixtures_from_mu(ev.mu[sel]))
    if atom_probs is None:
        atom_probs = counts / counts.sum()
    solved = _solve_common(actions, hterm, mixtures,
                           np.asarray(atom_probs, dtype=float), mult, config,
                           arrival_means, nq, alpha, tol, max_iters, v0)
    solved.quantizer = quantizer
    return solved


def _solve_common(actions, hterm, mixtures, atom_probs, mult, config,
                  arrival_means, nq, alpha, tol, max_iters, v0):
    if alpha is None:
        alpha = np.full(actions.n_ds, config.alpha_weight)
    qcost = queue_cost_grid(nq, actions.n_nds, actions.n_ds, alpha,
                            arrival_means, mult.eta, mult.lam)
    mean_slot = np.asarray(arrival_means) * config.slot_duration
    t_mats = [
        service_transitions(nq, arrival_pmf(mean_slot[l], nq,
                                            config.arrival_distribution))
        for l in range(actions.n_links)
    ]
    return relative_value_iteration(
        atom_probs, qcost, hterm, mixtures, t_mats, nq, actions.n_links,
        tol=config.vi_tol if tol is None else tol,
        max_iters=config.vi_max_iters if max_iters is None else max_iters,
        v0=v0,
    )


def online_schedule(
    queues: np.ndarray,
    channels,
    solved: SolvedPolicy,
    mult: LagrangeMultipliers,
    actions: ActionSet,
    config: ScenarioConfig,
    atom_index: int = 0,
) -> AllocationMatrix:
    """Per-slot minimizer: current-channel cost plus expected next value.

    Ties break toward the lowest action index. With all multipliers at zero
    the channel-dependent cost vanishes and the choice reduces to the
    precomputed policy table.
    """
    s = solved.state_index(np.minimum(queues, solved.nq))
    if mult.all_zero():
        return actions.matrices[int(solved.policy[atom_index, s])]
    ev = evaluate_actions(actions, channels.bs_gain, channels.nbr_gain, mult,
                          config, solved.nq)
    scores = ev.hterm + solved.kernel_term[atom_index, :, s]
    return actions.matrices[int(np.argmin(scores))]


def greedy_schedule(
    queues: np.ndarray,
    channels,
    mult: LagrangeMultipliers,
    config: ScenarioConfig,
    n_nds: int,
    n_ds: int,
    n_rbs: int,
) -> AllocationMatrix:
    """Myopic fallback when exact action enumeration is out of budget.

    Links are visited by decreasing backlog; each backlogged link takes the
    free same-class slot on the RB where its own gain is strongest.
    """
    entries = np.zeros((n_rbs, n_nds + n_ds), dtype=np.uint8)
    order = np.lexsort((np.arange(n_nds + n_ds), -np.asarray(queues)))
    nds_used = np.zeros(n_rbs, dtype=bool)
    ds_used = np.zeros(n_rbs, dtype=bool)
    for link in order:
        if queues[link] <= 0:
            continue
        is_ds = link >= n_nds
        used = ds_used if is_ds else nds_used
        free = np.flatnonzero(~used)
        if free.size == 0:
            continue
        if is_ds:
            g = channels.nbr_gain[link - n_nds]
            own = (g.min(axis=0) if g.shape[0] else channels.bs_gain[link])
        else:
            own = channels.bs_gain[link]
        rb = int(free[np.argmax(own[free])])
        entries[rb, link] = 1
        used[rb] = True
    return AllocationMatrix(entries)


@dataclass
class ChannelQuantizer:
    """Per-link scalar channel quality quantized into equiprobable levels.

    The slot statistic of a link is the mean over the subregion's RBs of its
    own gain: the BS-path gain for an NDS link, the worst-neighbor gain for a
    DS link. The channel atom of a slot is the mixed-radix combination of
    the per-link levels.
    """

    thresholds: list[np.ndarray]   # per link, level boundaries
    levels: int
    n_nds: int
    n_ds: int

    @property
    def n_atoms(self) -> int:
        return self.levels ** (self.n_nds + self.n_ds)

    def link_statistic(self, link: int, bs_gain: np.ndarray,
                       nbr_gain: list[np.ndarray]) -> float:
        if link < self.n_nds:
            return float(bs_gain[link].mean())
        g = nbr_gain[link - self.n_nds]
        if g.shape[0]:
            return float(g.min(axis=0).mean())
        return float(bs_gain[link].mean())

    def atom_index(self, bs_gain: np.ndarray, nbr_gain: list[np.ndarray]) -> int:
        idx = 0
        for l in range(self.n_nds + self.n_ds):
            x = self.link_statistic(l, bs_gain, nbr_gain)
            level = int(np.searchsorted(self.thresholds[l], x))
            idx = idx * self.levels + level
        return idx

    def batch_statistics(self, batch: DrawBatch) -> np.ndarray:
        """(D, L) per-draw link statistics."""
        nds_stat = batch.bs_gain[:, :self.n_nds, :].mean(axis=2)
        if self.n_ds and batch.nbr_gain.shape[2]:
            masked = np.where(batch.nbr_mask[:, :, :, None],
                              batch.nbr_gain, np.inf)
            ds_min = masked.min(axis=2).mean(axis=2)       # (D, n_ds)
            has = batch.nbr_mask.any(axis=2)
            ds_stat = np.where(has, ds_min,
                               batch.bs_gain[:, self.n_nds:, :].mean(axis=2))
        elif self.n_ds:
            ds_stat = batch.bs_gain[:, self.n_nds:, :].mean(axis=2)
        else:
            ds_stat = np.zeros((batch.n_draws, 0))
        return np.concatenate([nds_stat, ds_stat], axis=1)

    def assign(self, draws) -> np.ndarray:
        if isinstance(draws, DrawBatch):
            stats = self.batch_statistics(draws)
            levels = np.stack([
                np.searchsorted(self.thresholds[l], stats[:, l])
                for l in range(self.n_nds + self.n_ds)
            ], axis=1)
            radix = self.levels ** np.arange(
                self.n_nds + self.n_ds - 1, -1, -1)
            return levels @ radix
        return np.array([
            self.atom_index(d.bs_gain, d.nbr_gain) for d in draws
        ])


def build_quantizer(draws, n_nds: int, n_ds: int,
                    levels: int = 2) -> ChannelQuantizer:
    """Fit per-link level boundaries at the empirical quantiles of draws."""
    if levels < 2:
        raise ValueError("need at least two channel levels")
    n_links = n_nds + n_ds
    quant = ChannelQuantizer(thresholds=[np.zeros(levels - 1)] * n_links,
                             levels=levels, n_nds=n_nds, n_ds=n_ds)
    if isinstance(draws, DrawBatch):
        stats = quant.batch_statistics(draws)
    else:
        stats = np.array([
            [quant.link_statistic(l, d.bs_gain, d.nbr_gain)
             for l in range(n_links)]
            for d in draws
        ])
    qs = np.arange(1, levels) / levels
    quant.thresholds = [np.quantile(stats[:, l], qs) for l in range(n_links)]
    return quant


def save_value_table(path, solved: SolvedPolicy) -> None:
    """Write the value table in the line-oriented text format.

    Header lines carry the average cost and the shape; each following row is
    ``atom q_1 ... q_L value``.
    """
    qshape = (solved.nq + 1,) * solved.n_links
    lines = [
        "# v2xalloc value table v1",
        f"# theta {float(solved.theta)!r}",
        f"# atoms {len(solved.atom_probs)} links {solved.n_links} "
        f"nq {solved.nq}",
    ]
    for h in range(len(solved.atom_probs)):
        for s in range(solved.values.shape[1]):
            qs = np.unravel_index(s, qshape)
            qstr = " ".join(str(int(q)) for q in qs)
            lines.append(f"{h} {qstr} {float(solved.values[h, s])!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_value_table(path) -> tuple[float, np.ndarray, int, int]:
    """Read back (theta, values, n_links, nq) from the text format."""
    theta = 0.0
    n_atoms = n_links = nq = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line.split()
                if parts[1] == "theta":
                    theta = float(parts[2])
                elif parts[1] == "atoms":
                    n_atoms, n_links, nq = int(parts[2]), int(parts[4]), int(parts[6])
                continue
            rows.append([float(x) for x in line.split()])
    if n_atoms is None:
        raise ValueError(f"missing shape header in value table {path}")
    values = np.zeros((n_atoms, (nq + 1) ** n_links))
    qshape = (nq + 1,) * n_links
    for row in rows:
        h = int(row[0])
        qs = tuple(int(x) for x in row[1:1 + n_links])
        s = int(np.ravel_multi_index(qs, qshape))
        values[h, s] = row[-1]
    return theta, values, n_links, nq
