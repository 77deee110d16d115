import numpy as np
import pytest

from v2xalloc import oracles, stage2
from v2xalloc.metrics import prr as prr_op
from v2xalloc.metrics import rate_nds as rate_op
from v2xalloc.model import ScenarioConfig, Subregion, default_geometry
from v2xalloc.oracles import (ToyMdp, enumerate_toy_policies, solve_toy_full,
                              solve_toy_reduced, toy_action_set, toy_config,
                              toy_arrival_means, toy_atom_draw,
                              toy_multipliers)

TOY = ToyMdp()


# ---------------------------------------------------------------- costs

def _cost_fixture():
    from conftest import fixture_channels
    chan = fixture_channels([[4.0], [6.0]], [np.array([[10.0], [2.5]])],
                            n_nds=1)
    cfg = ScenarioConfig(tx_power=1.0, ds_power_factor=1.0, noise_power=1.0,
                         sinr_threshold=2.0, queue_capacity=10,
                         shadowing_enabled=False)
    return chan, cfg


def test_per_stage_cost_vanishes_at_zero():
    chan, cfg = _cost_fixture()
    mult = stage2.LagrangeMultipliers.zeros(1, 1)
    from v2xalloc.model import AllocationMatrix
    cost = stage2.per_stage_cost(
        np.zeros(2), AllocationMatrix.idle(1, 2), chan, mult, cfg,
        arrival_means=np.array([5.0, 5.0]), alpha=np.zeros(1))
    assert cost == 0.0


def test_per_stage_cost_single_beta_term():
    chan, cfg = _cost_fixture()
    from v2xalloc.model import AllocationMatrix
    # DS alone on the RB: both neighbors above threshold -> PRR 1
    alloc = AllocationMatrix(np.array([[0, 1]], dtype=np.uint8))
    mult = stage2.LagrangeMultipliers(beta=np.array([1.0]),
                                      gamma=np.array([0.0]),
                                      eta=np.zeros(2), lam=0.0)
    cfg9 = ScenarioConfig(tx_power=1.0, ds_power_factor=1.0, noise_power=1.0,
                          sinr_threshold=2.0, queue_capacity=10,
                          prr_floor=0.9, shadowing_enabled=False)
    cost = stage2.per_stage_cost(np.zeros(2), alloc, chan, mult, cfg9,
                                 arrival_means=np.array([5.0, 5.0]),
                                 alpha=np.zeros(1))
    assert cost == pytest.approx(-0.1)


def test_per_stage_cost_matches_independent_expansion():
    chan, cfg = _cost_fixture()
    from v2xalloc.model import AllocationMatrix
    alloc = AllocationMatrix(np.array([[1, 1]], dtype=np.uint8))
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = rng.integers(0, 11, size=2).astype(float)
        beta = rng.uniform(0, 2, size=1)
        gamma = rng.uniform(0, 1e-6, size=1)
        eta = rng.uniform(0, 1, size=2)
        lam = rng.uniform(0, 2)
        alpha = rng.uniform(0, 3, size=1)
        mult = stage2.LagrangeMultipliers(beta=beta, gamma=gamma, eta=eta,
                                          lam=lam)
        abar = np.array([5.0, 4.0])
        got = stage2.per_stage_cost(q, alloc, chan, mult, cfg, abar, alpha)
        # independent scalar expansion of the same bracket
        p = prr_op(1, alloc, chan, cfg)
        r = rate_op(0, alloc, chan, cfg)
        want = (alpha[0] * q[1] / abar[1]
                - beta[0] * (p - cfg.prr_floor)
                - gamma[0] * (r - cfg.rate_floor)
                + lam * (q[1] / abar[1] - q[0] / abar[0])
                + eta[0] * (q[0] >= 10) + eta[1] * (q[1] >= 10))
        assert got == pytest.approx(want)


# ------------------------------------------------------- kernel pieces

def test_arrival_pmf_and_transition_rows():
    pmf = stage2.arrival_pmf(0.25, nq=3)
    mats = stage2.service_transitions(3, pmf)
    assert mats.shape == (4, 4, 4)
    assert np.allclose(mats.sum(axis=2), 1.0, atol=1e-12)
    # no service, queue 3 stays saturated
    assert mats[0, 3, 3] == pytest.approx(1.0)
    # full service from 2: lands on arrivals
    assert mats[2, 2, 0] == pytest.approx(pmf[0])


def test_queue_cost_grid_matches_scalar():
    alpha = np.array([2.0])
    abar = np.array([4.0, 5.0])
    eta = np.array([0.3, 0.7])
    grid = stage2.queue_cost_grid(2, 1, 1, alpha, abar, eta, lam=1.5)
    for q0 in range(3):
        for q1 in range(3):
            s = q0 * 3 + q1
            want = (2.0 * q1 / 5.0 + 1.5 * (q1 / 5.0 - q0 / 4.0)
                    + 0.3 * (q0 == 2) + 0.7 * (q1 == 2))
            assert grid[s] == pytest.approx(want)


# ------------------------------------------------------------- solvers

def test_single_state_mdp():
    """With capacity-0 queues the chain has one state and theta = min cost."""
    toy = TOY
    actions = toy_action_set(toy)
    draw = toy_atom_draw(toy, 1)
    solved = stage2.solve_full_bellman(
        actions, [draw], np.array([0]), 1, toy_multipliers(toy),
        toy_config(toy), toy_arrival_means(toy), nq=0, tol=1e-10)
    ev = stage2.evaluate_actions(actions, draw.bs_gain, draw.nbr_gain,
                                 toy_multipliers(toy), toy_config(toy), 0)
    # capacity-zero queues sit at the (degenerate) overflow boundary, so the
    # single state carries the DS overflow multiplier on top of min hterm
    assert solved.theta == pytest.approx(ev.hterm.min() + toy.eta_ds,
                                         abs=1e-9)
    assert np.allclose(solved.values, 0.0, atol=1e-9)


def test_zero_arrivals_zero_multipliers_theta_zero():
    toy = TOY
    cfg = toy_config(toy)
    actions = toy_action_set(toy)
    mult = stage2.LagrangeMultipliers.zeros(1, 1)
    solved = stage2.solve_reduced_bellman(
        actions, [toy_atom_draw(toy, 1)], mult, cfg,
        np.array([0.0, 0.0]), toy.nq, tol=1e-10)
    assert abs(solved.theta) < 1e-9


def test_small_arrivals_drain_to_near_zero_cost():
    toy = TOY
    cfg = toy_config(toy)
    actions = toy_action_set(toy)
    mult = stage2.LagrangeMultipliers.zeros(1, 1)
    solved = stage2.solve_reduced_bellman(
        actions, [toy_atom_draw(toy, 1)], mult, cfg,
        np.array([10.0, 10.0]), toy.nq, tol=1e-8)
    # queues drain whenever occupied; average cost stays near the arrival
    # trickle's contribution, far below one saturated-state cost
    assert 0.0 <= solved.theta < toy.alpha * toy.nq / 10.0 * 0.1


def test_full_theta_matches_policy_enumeration():
    theta_enum, _ = enumerate_toy_policies(TOY)
    solved = solve_toy_full(TOY)
    assert abs(solved.theta - theta_enum) <= 1e-6


def test_reduced_theta_close_to_full():
    full = solve_toy_full(TOY)
    red = solve_toy_reduced(TOY, n_mc=4000, seed=7)
    assert abs(red.theta - full.theta) <= 0.1 * abs(full.theta)


def test_deterministic_channel_reduced_equals_full():
    full = solve_toy_full(TOY, atoms=(1,))
    red = solve_toy_reduced(TOY, n_mc=64, atoms=(1,))
    assert abs(full.theta - red.theta) <= 1e-9
    assert np.abs(full.values - red.values).max() <= 1e-9


def test_residual_monotone_nonincreasing():
    for solved in (solve_toy_full(TOY), solve_toy_reduced(TOY, n_mc=500)):
        res = np.array(solved.residuals)
        assert (np.diff(res) <= 1e-12).all()


def test_kernel_rows_sum_to_one():
    solved = solve_toy_reduced(TOY, n_mc=300)
    assert solved.kernel_row_deviation <= 1e-9


def test_nonconvergence_raises_with_residual():
    from v2xalloc.errors import ConvergenceError
    with pytest.raises(ConvergenceError):
        solve_toy_full(TOY, tol=1e-300)


def test_policy_beats_random_on_toy_chain():
    """Simulate the toy dynamics: solved policy vs uniform-random actions."""
    toy = TOY
    solved = solve_toy_full(toy)
    rng = np.random.default_rng(11)
    horizon = 60_000

    def simulate(policy_fn):
        q_ds = 0
        total_q = 0
        for _ in range(horizon):
            atom = rng.integers(0, 2)
            a = policy_fn(atom, q_ds)
            total_q += q_ds
            mu = toy.ds_departures(atom, _oracle_action(a))
            arr = rng.poisson(toy.arrival_ds_slot)
            q_ds = min(toy.nq, max(0, q_ds - mu) + arr)
        return total_q / horizon

    actions = toy_action_set(toy)

    def _oracle_action(a):
        # map the action-set index to the oracle's (idle, nds, ds, both) ids
        ds_on = actions.ds_rb[a, 0] >= 0
        nds_on = actions.nds_rb[a, 0] >= 0
        return {(False, False): 0, (True, False): 1,
                (False, True): 2, (True, True): 3}[(nds_on, ds_on)]

    def solved_policy(atom, q_ds):
        # NDS queue does not matter for the DS chain; fix it at 0
        s = solved.state_index(np.array([0, q_ds]))
        return int(solved.policy[atom, s])

    rng_pol = np.random.default_rng(13)
    qbar_solved = simulate(solved_policy)
    qbar_random = simulate(lambda a, q: int(rng_pol.integers(0, 4)))
    assert qbar_solved < qbar_random


# ---------------------------------------------------------- online rule

def test_online_idle_among_minimizers_on_empty_queues():
    toy = TOY
    solved = solve_toy_full(toy)
    actions = toy_action_set(toy)
    draw = toy_atom_draw(toy, 0)
    mult = stage2.LagrangeMultipliers.zeros(1, 1)
    ev = stage2.evaluate_actions(actions, draw.bs_gain, draw.nbr_gain, mult,
                                 toy_config(toy), toy.nq)
    s = solved.state_index(np.zeros(2, dtype=int))
    scores = ev.hterm + solved.kernel_term[0, :, s]
    idle = next(a for a in range(actions.n_actions)
                if (actions.nds_rb[a] < 0).all() and (actions.ds_rb[a] < 0).all())
    assert scores[idle] <= scores.min() + 1e-9


def test_online_serves_saturated_ds_queue():
    toy = TOY
    solved = solve_toy_full(toy)
    actions = toy_action_set(toy)
    mult = toy_multipliers(toy)
    chan = toy_atom_draw(toy, 1)  # good channel atom
    action = stage2.online_schedule(
        np.array([0, toy.nq]), chan, solved, mult, actions, toy_config(toy),
        atom_index=1)
    ds_rb = action.rb_of_link(1)
    assert ds_rb >= 0
    assert action.entries[ds_rb, 0] == 0  # served alone, not shared


def test_online_deterministic():
    toy = TOY
    solved = solve_toy_full(toy)
    actions = toy_action_set(toy)
    mult = toy_multipliers(toy)
    chan = toy_atom_draw(toy, 1)
    q = np.array([1, 2])
    a1 = stage2.online_schedule(q, chan, solved, mult, actions,
                                toy_config(toy), atom_index=1)
    a2 = stage2.online_schedule(q, chan, solved, mult, actions,
                                toy_config(toy), atom_index=1)
    assert a1 == a2


def test_greedy_schedule_respects_constraints():
    from v2xalloc.model import validate_allocation
    cfg = ScenarioConfig(tx_power=1.0, noise_power=1.0,
                         shadowing_enabled=False)
    rng = np.random.default_rng(3)
    draw = stage2.GainDraw(
        bs_gain=rng.exponential(1.0, size=(4, 2)),
        nbr_gain=[rng.exponential(1.0, size=(2, 2)),
                  rng.exponential(1.0, size=(2, 2))])
    mult = stage2.LagrangeMultipliers.zeros(2, 2)
    action = stage2.greedy_schedule(np.array([3, 0, 2, 1]), draw, mult, cfg,
                                    n_nds=2, n_ds=2, n_rbs=2)
    sub = Subregion(id=1, n_nds_links=2, n_ds_links=2, n_rbs=2,
                    geometry=default_geometry(cfg, 1))
    assert validate_allocation(action, sub)
    # most backlogged links got RBs first
    assert action.rb_of_link(0) >= 0
    assert action.rb_of_link(2) >= 0
    assert action.rb_of_link(1) < 0  # empty queue stays idle


# ----------------------------------------------------- dual updates

def test_update_multipliers_projection_and_arithmetic():
    mult = stage2.LagrangeMultipliers.zeros(1, 1)
    sat = stage2.MeasuredAverages(prr=np.array([0.95]),
                                  rate=np.array([1e6]),
                                  delay=np.array([0.5, 0.1]),
                                  overflow=np.zeros(2))
    out = stage2.update_multipliers(mult, sat, step=1.0, prr_floor=0.9,
                                    rate_floor=1e4, n_nds=1)
    assert out.all_zero()

    violated = stage2.MeasuredAverages(prr=np.array([0.8]),
                                       rate=np.array([1e6]),
                                       delay=np.array([0.5, 0.1]),
                                       overflow=np.zeros(2))
    out = stage2.update_multipliers(mult, violated, step=1.0, prr_floor=0.9,
                                    rate_floor=1e4, n_nds=1, step_gamma=1e-9)
    assert out.beta[0] == pytest.approx(0.1)
    assert out.gamma[0] == 0.0


def test_update_multipliers_ordering_term():
    mult = stage2.LagrangeMultipliers.zeros(1, 1)
    measured = stage2.MeasuredAverages(
        prr=np.array([1.0]), rate=np.array([1e6]),
        delay=np.array([0.1, 0.7]),  # NDS first: DS delay above NDS delay
        overflow=np.array([0.0, 0.25]))
    out = stage2.update_multipliers(mult, measured, 1.0, 0.0, 0.0, 1)
    assert out.lam == pytest.approx(0.6)
    assert out.eta[1] == pytest.approx(0.25)


def test_dual_updates_shrink_violation_on_fixture():
    """Repeated play against a responsive PRR: violations trend to zero."""
    mult = stage2.LagrangeMultipliers.zeros(0, 1)
    gaps = []
    for it in range(50):
        achieved = min(0.95, 0.4 + 0.6 * np.tanh(mult.beta[0]))
        gaps.append(max(0.0, 0.9 - achieved))
        measured = stage2.MeasuredAverages(
            prr=np.array([achieved]), rate=np.zeros(0),
            delay=np.array([0.0]), overflow=np.zeros(1))
        mult = stage2.update_multipliers(mult, measured,
                                         step=1.0 / np.sqrt(it + 1),
                                         prr_floor=0.9, rate_floor=0.0,
                                         n_nds=0)
    assert np.mean(gaps[-10:]) < np.mean(gaps[:10])
    assert gaps[-1] < 0.02


# ------------------------------------------------- value table files

def test_value_table_round_trip(tmp_path):
    solved = solve_toy_full(TOY)
    path = tmp_path / "table.txt"
    stage2.save_value_table(path, solved)
    theta, values, n_links, nq = stage2.load_value_table(path)
    assert theta == pytest.approx(solved.theta)
    assert n_links == 2 and nq == TOY.nq
    assert np.allclose(values, solved.values)
