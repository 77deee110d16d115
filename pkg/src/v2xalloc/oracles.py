"""Independent cross-check solvers.

Nothing here shares code with the production paths it certifies: the
stage-one oracle climbs the utility surface numerically, and the stage-two
oracle scores every stationary deterministic policy of a small fixture by
solving its chain's stationary distribution directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import stage2
from .model import ScenarioConfig, Subregion, default_geometry
from .stage1 import UtilityParams


def project_rows_to_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    y = np.atleast_2d(y)
    n = y.shape[1]
    u = np.sort(y, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    ks = np.arange(1, n + 1)
    cond = u - css / ks > 0
    rho = n - np.argmax(cond[:, ::-1], axis=1) - 1
    tau = css[np.arange(len(y)), rho] / (rho + 1)
    return np.maximum(y - tau[:, None], 0.0)


def pgd_share_solver(
    kappa: np.ndarray,
    params: UtilityParams,
    iters: int = 40_000,
    check_every: int = 500,
    move_tol: float = 1e-13,
) -> np.ndarray:
    """Projected gradient ascent on the summed delay utility over the simplex.

    ``kappa`` may be a batch (rows of density vectors); all instances iterate
    together. The step size is the inverse curvature bound ``c2^2 * max
    weight``; iteration stops once the largest per-step movement falls below
    ``move_tol``.
    """
    kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
    weights = np.exp(-((kappa - params.kappa_jam / 2.0) ** 2) / params.c1)
    lipschitz = params.c2**2 * max(weights.max(), 1e-12)
    step = 1.0 / lipschitz
    eps = np.full_like(weights, 1.0 / weights.shape[1])
    for it in range(iters):
        grad = weights * params.c2 / (1.0 + params.c2 * eps)
        new = project_rows_to_simplex(eps + step * grad)
        if it % check_every == 0:
            moved = np.abs(new - eps).max()
            if moved < move_tol:
                return new
        eps = new
    return eps


@dataclass(frozen=True)
class ToyMdp:
    """Hand-sized scheduling fixture: one NDS and one DS link on one RB.

    The channel has two equiprobable states that scale the DS link's gain
    toward its single neighbor; every other gain is constant. Multipliers
    are fixed so the cost and the DS queue's dynamics never involve the NDS
    queue (its rate, ordering and overflow multipliers are zero), which makes
    the optimum achievable by a policy measurable in the channel state and
    the DS queue alone.
    """

    nq: int = 2
    atom_probs: tuple[float, float] = (0.5, 0.5)
    ds_nbr_gain: tuple[float, float] = (1.5, 60.0)
    nds_bs_gain: float = 40.0
    ds_bs_gain: float = 30.0
    noise: float = 1.0
    power: float = 1.0
    sinr_threshold: float = 2.0
    bandwidth: float = 180e3
    slot: float = 1e-3
    packet_ds: int = 20
    packet_nds: int = 100
    arrival_ds_slot: float = 0.25
    arrival_nds_slot: float = 0.2
    alpha: float = 20.0
    beta: float = 0.6
    prr_floor: float = 0.8
    eta_ds: float = 0.15

    # action ids: 0 idle, 1 NDS alone, 2 DS alone, 3 both on the shared RB
    N_ACTIONS = 4

    def ds_departures(self, atom: int, action: int) -> int:
        """First-principles departure count of the DS link."""
        if action not in (2, 3):
            return 0
        interference = self.power * self.nds_bs_gain if action == 3 else 0.0
        sinr = self.power * self.ds_nbr_gain[atom] / (self.noise + interference)
        if sinr < self.sinr_threshold:
            return 0
        rate = self.bandwidth * np.log2(1.0 + sinr)
        return min(int(rate * self.slot / (8 * self.packet_ds)), self.nq)

    def nds_departures(self, atom: int, action: int) -> int:
        if action not in (1, 3):
            return 0
        interference = (self.power * self.ds_nbr_gain[atom]
                        if action == 3 else 0.0)
        sinr = self.power * self.nds_bs_gain / (self.noise + interference)
        rate = self.bandwidth * np.log2(1.0 + sinr)
        return min(int(rate * self.slot / (8 * self.packet_nds)), self.nq)

    def ds_prr(self, atom: int, action: int) -> float:
        if action not in (2, 3):
            return 0.0
        interference = self.power * self.nds_bs_gain if action == 3 else 0.0
        sinr = self.power * self.ds_nbr_gain[atom] / (self.noise + interference)
        return 1.0 if sinr >= self.sinr_threshold else 0.0

    def stage_cost(self, atom: int, q_ds: int, action: int) -> float:
        arrival_per_s = self.arrival_ds_slot / self.slot
        cost = self.alpha * q_ds / arrival_per_s
        cost -= self.beta * (self.ds_prr(atom, action) - self.prr_floor)
        cost += self.eta_ds * (q_ds >= self.nq)
        return cost


def _queue_row(nq: int, q: int, mu: int, pmf: np.ndarray) -> np.ndarray:
    row = np.zeros(nq + 1)
    base = max(0, q - mu)
    room = nq - base
    row[base:base + room] = pmf[:room]
    row[nq] = 1.0 - pmf[:room].sum()
    return row


def enumerate_toy_policies(toy: ToyMdp) -> tuple[float, np.ndarray]:
    """Average cost of the best stationary deterministic policy, by brute force.

    States are (channel atom, DS queue); the NDS queue is dropped because the
    fixed multipliers make it irrelevant to both cost and DS dynamics, so the
    restriction loses nothing. Every one of the ``4^(2*(nq+1))`` policies is
    scored exactly through its chain's stationary distribution.
    """
    nq = toy.nq
    n_states = 2 * (nq + 1)
    pmf = stats.poisson.pmf(np.arange(nq + 1), toy.arrival_ds_slot)

    # per (state, action): next-state law and cost
    p_sa = np.zeros((n_states, toy.N_ACTIONS, n_states))
    g_sa = np.zeros((n_states, toy.N_ACTIONS))
    for atom in range(2):
        for q in range(nq + 1):
            s = atom * (nq + 1) + q
            for a in range(toy.N_ACTIONS):
                mu = toy.ds_departures(atom, a)
                qrow = _queue_row(nq, q, mu, pmf)
                for atom2 in range(2):
                    p_sa[s, a, atom2 * (nq + 1):(atom2 + 1) * (nq + 1)] = (
                        toy.atom_probs[atom2] * qrow)
                g_sa[s, a] = toy.stage_cost(atom, q, a)

    n_policies = toy.N_ACTIONS ** n_states
    digits = (np.arange(n_policies)[:, None]
              // toy.N_ACTIONS ** np.arange(n_states)[None, :]) % toy.N_ACTIONS

    state_ids = np.arange(n_states)
    p_pol = p_sa[state_ids[None, :], digits, :]        # (P, S, S)
    g_pol = g_sa[state_ids[None, :], digits]           # (P, S)

    # stationary distribution: pi (I - P) = 0 with the normalization row
    a_mat = np.transpose(np.eye(n_states)[None, :, :] - p_pol, (0, 2, 1))
    a_mat[:, -1, :] = 1.0
    b = np.zeros((n_policies, n_states, 1))
    b[:, -1, 0] = 1.0
    pi = np.linalg.solve(a_mat, b)[:, :, 0]
    costs = (pi * g_pol).sum(axis=1)
    best = int(np.argmin(costs))
    return float(costs[best]), digits[best]


def toy_config(toy: ToyMdp) -> ScenarioConfig:
    """Scenario parameters matching the toy fixture."""
    return ScenarioConfig(
        sinr_threshold=toy.sinr_threshold, noise_power=toy.noise,
        tx_power=toy.power, ds_power_factor=1.0,
        bandwidth_per_rb=toy.bandwidth, slot_duration=toy.slot,
        packet_size_ds=toy.packet_ds, packet_size_nds=toy.packet_nds,
        prr_floor=toy.prr_floor, rate_floor=0.0, alpha_weight=toy.alpha,
        queue_capacity=toy.nq, tdi_update_interval=toy.slot,
    )


def toy_action_set(toy: ToyMdp) -> stage2.ActionSet:
    config = toy_config(toy)
    sub = Subregion(id=1, n_nds_links=1, n_ds_links=1, n_rbs=1,
                    geometry=default_geometry(config, 1))
    return stage2.build_action_set(sub, cap=100)


def toy_multipliers(toy: ToyMdp) -> stage2.LagrangeMultipliers:
    return stage2.LagrangeMultipliers(
        beta=np.array([toy.beta]), gamma=np.array([0.0]),
        eta=np.array([0.0, toy.eta_ds]), lam=0.0)


def toy_atom_draw(toy: ToyMdp, atom: int) -> stage2.GainDraw:
    """The deterministic gain bundle of one channel atom."""
    return stage2.GainDraw(
        bs_gain=np.array([[toy.nds_bs_gain], [toy.ds_bs_gain]]),
        nbr_gain=[np.array([[toy.ds_nbr_gain[atom]]])],
    )


def toy_arrival_means(toy: ToyMdp) -> np.ndarray:
    return np.array([toy.arrival_nds_slot / toy.slot,
                     toy.arrival_ds_slot / toy.slot])


def solve_toy_full(toy: ToyMdp, tol: float | None = None,
                   atoms: tuple[int, ...] = (0, 1)) -> stage2.SolvedPolicy:
    """Run the production full-state solver on the toy fixture."""
    draws = [toy_atom_draw(toy, a) for a in atoms]
    probs = (np.array(toy.atom_probs) if len(atoms) == 2
             else np.array([1.0]))
    return stage2.solve_full_bellman(
        toy_action_set(toy), draws, np.arange(len(atoms)), len(atoms),
        toy_multipliers(toy), toy_config(toy), toy_arrival_means(toy),
        toy.nq, atom_probs=probs, tol=tol, max_iters=200_000,
    )


def solve_toy_reduced(toy: ToyMdp, n_mc: int = 4000, seed: int = 7,
                      tol: float | None = None,
                      atoms: tuple[int, ...] = (0, 1)) -> stage2.SolvedPolicy:
    """Run the production reduced-state solver on sampled toy channels."""
    rng = np.random.default_rng(seed)
    draws = [toy_atom_draw(toy, atoms[rng.integers(0, len(atoms))])
             for _ in range(n_mc)]
    return stage2.solve_reduced_bellman(
        toy_action_set(toy), draws, toy_multipliers(toy), toy_config(toy),
        toy_arrival_means(toy), toy.nq, tol=tol, max_iters=200_000,
    )
