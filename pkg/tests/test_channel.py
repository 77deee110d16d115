import numpy as np
import pytest

from v2xalloc.channel import (build_link_set, fading_power, large_scale_gain,
                              realize, realize_channels, sample_small_scale)
from v2xalloc.mobility import TdiVector, place_vehicles
from v2xalloc.model import ScenarioConfig, Subregion, default_geometry


def test_reference_distance_anchors_gain():
    cfg = ScenarioConfig(shadowing_enabled=False)
    expected = 10.0 ** (cfg.pathloss_ref_db / 10.0)
    assert large_scale_gain(1.0, cfg) == pytest.approx(expected)


def test_doubling_distance_scales_by_exponent():
    cfg = ScenarioConfig(shadowing_enabled=False)
    ratio = large_scale_gain(20.0, cfg) / large_scale_gain(10.0, cfg)
    assert ratio == pytest.approx(2.0 ** (-cfg.pathloss_exponent))


def test_nonpositive_distance_clamps_to_reference():
    cfg = ScenarioConfig(shadowing_enabled=False)
    assert large_scale_gain(-3.0, cfg) == large_scale_gain(1.0, cfg)


def test_shadowing_moments():
    cfg = ScenarioConfig(shadowing_sigma_db=8.0)
    rng = np.random.default_rng(0)
    gains = np.array([
        large_scale_gain(10.0, cfg, s)
        for s in rng.normal(0, cfg.shadowing_sigma_db, size=10_000)
    ])
    residual_db = 10 * np.log10(gains) - 10 * np.log10(
        large_scale_gain(10.0, cfg, 0.0))
    assert abs(residual_db.mean()) < 0.3
    assert residual_db.std() == pytest.approx(8.0, rel=0.05)
    # central quantiles consistent with a normal law
    q = np.quantile(residual_db, [0.159, 0.841])
    assert q[0] == pytest.approx(-8.0, rel=0.1)
    assert q[1] == pytest.approx(8.0, rel=0.1)


def test_small_scale_unit_power():
    rng = np.random.default_rng(1)
    h = sample_small_scale(1, rng, size=(100_000,))
    power = np.abs(h[:, 0]) ** 2
    assert power.mean() == pytest.approx(1.0, abs=0.02)


def test_small_scale_sum_over_antennas():
    rng = np.random.default_rng(2)
    h = sample_small_scale(2, rng, size=(100_000,))
    total = (np.abs(h) ** 2).sum(axis=1)
    assert total.mean() == pytest.approx(2.0, abs=0.04)


def test_small_scale_seeded_reproducibility():
    a = sample_small_scale(2, np.random.default_rng(3), size=(5,))
    b = sample_small_scale(2, np.random.default_rng(3), size=(5,))
    assert np.array_equal(a, b)


def test_fading_power_matches_small_scale_distribution():
    rng = np.random.default_rng(4)
    g = fading_power(2, rng, size=200_000)
    assert g.mean() == pytest.approx(2.0, abs=0.02)
    assert g.var() == pytest.approx(2.0, rel=0.05)


def _tiny_layout(cfg, kappa=0.4):
    return place_vehicles(TdiVector(np.array([kappa, kappa, 0, 0])), cfg,
                          np.random.default_rng(5))


def test_realize_channels_shapes():
    cfg = ScenarioConfig(segment_length_m=20.0, shadowing_enabled=False)
    layout = _tiny_layout(cfg)
    sub = Subregion(id=1, n_nds_links=0, n_ds_links=0, n_rbs=3,
                    geometry=default_geometry(cfg, 1))
    chan = realize_channels(layout, sub, cfg, np.random.default_rng(6))
    n_links = len(layout.vehicles_in(1))
    assert chan.bs_gain.shape == (n_links, 3)
    assert (chan.bs_gain > 0).all()
    assert len(chan.nbr_gain) == chan.link_set.n_ds
    for g in chan.nbr_gain:
        assert (g > 0).all()


def test_single_vehicle_no_neighbors():
    cfg = ScenarioConfig(segment_length_m=10.0, neighbor_radius_m=1e-6)
    layout = _tiny_layout(cfg, kappa=0.1)
    ls = build_link_set(layout, 1, cfg, np.random.default_rng(7))
    for ids in ls.nbr_ids:
        assert len(ids) == 0


def test_mean_gain_matches_large_scale_times_antennas():
    cfg = ScenarioConfig(shadowing_enabled=False, segment_length_m=20.0)
    layout = _tiny_layout(cfg)
    ls = build_link_set(layout, 1, cfg, np.random.default_rng(8))
    rng = np.random.default_rng(9)
    n = 100_000
    gains = ls.bs_ls[0] * fading_power(cfg.n_tx_antennas, rng, n)
    target = ls.bs_ls[0] * cfg.n_tx_antennas
    se = gains.std() / np.sqrt(n)
    assert abs(gains.mean() - target) < 3 * se


def test_per_slot_fading_uncorrelated():
    cfg = ScenarioConfig(shadowing_enabled=False, segment_length_m=20.0)
    layout = _tiny_layout(cfg)
    ls = build_link_set(layout, 1, cfg, np.random.default_rng(10))
    rng = np.random.default_rng(11)
    series = np.array([
        realize(ls, 1, cfg, rng).bs_gain[0, 0] for _ in range(10_000)
    ])
    lag1 = np.corrcoef(series[:-1], series[1:])[0, 1]
    assert abs(lag1) < 0.05


def test_per_rb_gains_independent():
    cfg = ScenarioConfig(shadowing_enabled=False, segment_length_m=20.0)
    layout = _tiny_layout(cfg)
    ls = build_link_set(layout, 1, cfg, np.random.default_rng(12))
    rng = np.random.default_rng(13)
    pair = np.array([realize(ls, 2, cfg, rng).bs_gain[0] for _ in range(10_000)])
    rho = np.corrcoef(pair[:, 0], pair[:, 1])[0, 1]
    assert abs(rho) < 0.05
