"""Coupling learning, fusion-coefficient search, and the blind bootstrap.

The neighbourhood optimizer is validated against an exhaustive fine grid
over the same objective on low-dimensional instances, so the oracle is
independent of the ascent logic.
"""

import math
import warnings

import numpy as np
import pytest

from mpfusion import rng
from mpfusion.graph import chain, star, uniform_params
from mpfusion.optimizer import (
    BlindResult,
    ComponentMoments,
    ContractionWarning,
    blind_adapt,
    egc_weights,
    learn_couplings,
    moments_from_scenario,
    optimize_p1,
    optimize_p2,
    stability_box,
)
from mpfusion.performance import gfun, solve_threshold
from mpfusion.scenario import ScenarioConfig, scenario_stats, stats_for_weights


def _two_node_moments(sep=2.0, noise=1.0, corr_quality=1.0):
    """Node 1 with one neighbour (node 2); neighbour mean shift scales with
    `corr_quality` so its usefulness is tunable."""
    weights = {v: np.array([1.0]) for v in (-1, 1)}
    means = {
        -1: np.array([[0.0, 0.0]]),
        1: np.array([[sep, sep * corr_quality]]),
    }
    variances = {v: np.array([[noise, noise]]) for v in (-1, 1)}
    return ComponentMoments(1, weights, means, variances)


# ---------------------------------------------------------------- couplings


def test_learn_couplings_hand_agreement():
    top = chain(3)
    labels = np.array([
        [1, 1, -1, -1],
        [1, -1, -1, 1],
        [1, 1, 1, 1],
    ])
    params = learn_couplings(labels, top, zeta=0.5)
    # edge (1,2): agreements +1,-1,+1,-1 -> mean 0; edge (2,3): 0.0
    assert params.coupling(1, 2) == pytest.approx(0.0)
    assert params.coupling(2, 3) == pytest.approx(0.5 * 0.0)
    assert params.convention == "merged"


def test_learn_couplings_bounded_by_zeta():
    gen = rng.stream(41, rng.GENERIC, 0)
    top = star(5)
    labels = np.where(gen.random((5, 200)) > 0.4, 1, -1)
    for zeta in (0.1, 0.3, 1.0):
        params = learn_couplings(labels, top, zeta)
        for e in top.edges:
            assert abs(params.coupling(*e)) <= zeta + 1e-15


def test_learn_couplings_perfect_agreement_hits_zeta():
    top = chain(2)
    labels = np.ones((2, 50), dtype=int)
    assert learn_couplings(labels, top, 0.7).coupling(1, 2) == pytest.approx(0.7)


def test_learn_couplings_validation():
    top = chain(2)
    with pytest.raises(ValueError):
        learn_couplings(np.array([[1, 0], [1, 1]]), top, 0.1)
    with pytest.raises(ValueError):
        learn_couplings(np.ones((3, 4)), top, 0.1)
    with pytest.raises(ValueError):
        learn_couplings(np.ones((2, 4)), top, -0.2)


# ----------------------------------------------------------- mixture moments


def test_stats_for_row_single_component():
    cm = _two_node_moments(sep=2.0, noise=4.0)
    stats = cm.stats_for_row(np.array([1, 2]), np.array([1.0, 0.5]), offset=0.3)
    assert stats.means[1][0] == pytest.approx(2.0 + 0.5 * 2.0 + 0.3)
    assert stats.means[-1][0] == pytest.approx(0.3)
    assert stats.stds[1][0] == pytest.approx(math.sqrt(4.0 + 0.25 * 4.0))


def test_stats_for_row_nan_raises():
    weights = {v: np.array([1.0]) for v in (-1, 1)}
    means = {v: np.array([[0.0, np.nan]]) for v in (-1, 1)}
    variances = {v: np.array([[1.0, 1.0]]) for v in (-1, 1)}
    cm = ComponentMoments(1, weights, means, variances)
    cm.stats_for_row(np.array([1]), np.array([1.0]))  # covered part is fine
    with pytest.raises(ValueError):
        cm.stats_for_row(np.array([1, 2]), np.array([1.0, 0.1]))


def test_moments_from_scenario_agree_with_weight_route():
    # same mixture, built two ways: ComponentMoments + a row, vs the
    # scenario-level helper for a full weight matrix
    cfg = ScenarioConfig(rho_db=-5.0, delta_rho_db=1.0)
    stats = scenario_stats(cfg)
    moments = moments_from_scenario(stats)
    w = np.eye(5)
    w[2, 1] = 0.4
    w[2, 3] = -0.2
    by_weights = stats_for_weights(stats, w, np.zeros(5))
    row_stats = moments[3].stats_for_row(
        np.array([3, 2, 4]), np.array([1.0, 0.4, -0.2]))
    for v in (-1, 1):
        for tau in (-0.3, 0.0, 0.4):
            assert gfun(tau, v, row_stats) == pytest.approx(
                gfun(tau, v, by_weights[3]), abs=1e-12)


# ------------------------------------------------------- neighbourhood tune


def test_stability_box_values():
    assert stability_box(chain(5)) == 1.0
    assert stability_box(star(5)) == pytest.approx(1.0 / 3.0)
    assert stability_box(chain(2)) == 10.0  # documented stand-in for 'unbounded'


def test_optimize_p2_beats_fine_grid_oracle():
    cm = _two_node_moments(sep=1.0, noise=1.0, corr_quality=1.0)
    top = chain(2)
    sol = optimize_p2(cm, top, 1, alpha=0.1)
    box = stability_box(top) * (1 - 1e-9)
    lo, hi = (-2.0, 2.0) if math.isinf(box) else (-box, box)
    best = -np.inf
    for c in np.linspace(lo, hi, 4001):
        stats = cm.stats_for_row(np.array([1, 2]), np.array([1.0, c]))
        tau = solve_threshold(stats, -1, 0.1)
        best = max(best, gfun(tau, 1, stats))
    assert sol.pd >= best - 1e-6


def test_optimize_p2_useful_neighbour_gets_positive_weight():
    cm = _two_node_moments(sep=1.5, noise=1.0, corr_quality=1.0)
    sol = optimize_p2(cm, chain(2), 1, alpha=0.1)
    assert sol.coefficients[2] > 0.2
    # equally informative independent score: equal-gain is optimal
    assert sol.coefficients[2] == pytest.approx(1.0, abs=0.05)


def test_optimize_p2_useless_neighbour_stays_near_zero():
    cm = _two_node_moments(sep=1.5, noise=1.0, corr_quality=0.0)
    sol = optimize_p2(cm, chain(2), 1, alpha=0.1)
    assert abs(sol.coefficients[2]) < 0.05


def test_optimize_p2_never_below_local_detector():
    gen = rng.stream(42, rng.GENERIC, 0)
    top = star(4)
    for trial in range(5):
        sep = gen.uniform(0.2, 2.0)
        weights = {v: np.array([1.0]) for v in (-1, 1)}
        means = {
            -1: np.array([[0.0] * 4]),
            1: np.array([[sep] + list(gen.uniform(-1, 1, 3))]),
        }
        variances = {v: np.array([[1.0] * 4]) for v in (-1, 1)}
        cm = ComponentMoments(1, weights, means, variances)
        sol = optimize_p2(cm, top, 1, alpha=0.1, seed=trial)
        local = cm.stats_for_row(np.array([1]), np.array([1.0]))
        tau = solve_threshold(local, -1, 0.1)
        assert sol.pd >= gfun(tau, 1, local) - 1e-12


def test_optimize_p2_threshold_pins_alpha():
    cm = _two_node_moments()
    sol = optimize_p2(cm, chain(2), 1, alpha=0.07)
    stats = cm.stats_for_row(np.array([1, 2]), np.array([1.0, sol.coefficients[2]]))
    assert gfun(sol.threshold, -1, stats) == pytest.approx(0.07, abs=1e-8)


def test_optimize_p2_respects_stability_box():
    cfg = ScenarioConfig()
    moments = moments_from_scenario(scenario_stats(cfg))
    top = cfg.topology()
    box = stability_box(top)
    for node in (1, 3, 5):
        sol = optimize_p2(moments[node], top, node, alpha=0.1, seed=0)
        for c in sol.coefficients.values():
            assert abs(c) < box


def test_optimize_p2_rejects_bad_alpha():
    with pytest.raises(ValueError):
        optimize_p2(_two_node_moments(), chain(2), 1, alpha=0.0)


# ------------------------------------------------------------ network tune


def test_optimize_p1_not_worse_than_zero_extended_neighbourhood():
    cfg = ScenarioConfig(rho_db=-8.0)
    stats = scenario_stats(cfg)
    moments = moments_from_scenario(stats)
    top = cfg.topology()
    p1 = optimize_p1(moments, top, alphas=0.1, seed=3)
    for node in top.nodes:
        hood = optimize_p2(moments[node], top, node, alpha=0.1, seed=3)
        assert p1.pd[node - 1] >= hood.pd - 1e-9
    assert p1.feasible
    np.testing.assert_allclose(np.diag(p1.weights), 1.0)
    np.testing.assert_allclose(p1.pf, 0.1, atol=1e-6)


def test_optimize_p1_budget_scaling_note():
    cfg = ScenarioConfig(rho_db=-8.0)
    moments = moments_from_scenario(scenario_stats(cfg))
    top = cfg.topology()
    p1 = optimize_p1(moments, top, alphas=0.1, budget=0.25, seed=3)
    assert any("budget" in note for note in p1.notes)
    assert float(np.sum(p1.pf)) <= 0.25 * (1 + 1e-6)


def test_optimize_p1_detection_floor_flag():
    cfg = ScenarioConfig(rho_db=-12.0)
    moments = moments_from_scenario(scenario_stats(cfg))
    top = cfg.topology()
    p1 = optimize_p1(moments, top, alphas=0.1, betas=0.999, seed=3)
    assert not p1.feasible
    assert any("floors" in note for note in p1.notes)


# -------------------------------------------------------------- equal gain


def test_egc_weights_inside_box_silent():
    top = chain(4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        w = egc_weights(top, 0.3)
    assert set(w) == set(top.directed_edges())
    assert all(v == 0.3 for v in w.values())


def test_egc_weights_outside_box_warns():
    with pytest.warns(ContractionWarning):
        egc_weights(star(5), 0.5)


# ------------------------------------------------------------------- blind


def _blind_fixture(sep=3.0, noise=0.5, slots=4000, seed=7):
    cfg_top = chain(3)
    gen = rng.stream(seed, rng.GENERIC, 9)
    x = np.where(gen.random(slots) > 0.5, 1, -1)
    truth = np.tile(x, (3, 1)).astype(np.int8)  # common state, easy case
    # scores are signed LLR-like: centred below zero when idle
    gamma = (sep / 2.0) * truth + math.sqrt(noise) * gen.standard_normal((3, slots))
    return cfg_top, gamma, truth


def test_blind_adapt_recovers_labels_on_easy_data():
    top, gamma, truth = _blind_fixture()
    res = blind_adapt(gamma, top, alpha=0.1, truth=truth, seed=0)
    assert isinstance(res, BlindResult)
    assert res.final_accuracy > 0.95
    assert res.final_accuracy >= res.initial_accuracy - 0.01
    assert set(res.solutions) == {1, 2, 3}


def test_blind_adapt_majority_rounds_idempotent():
    top, gamma, truth = _blind_fixture()
    one = blind_adapt(gamma, top, alpha=0.1, rounds=1, seed=0)
    three = blind_adapt(gamma, top, alpha=0.1, rounds=3, seed=0)
    np.testing.assert_array_equal(one.labels, three.labels)


def test_blind_adapt_deterministic():
    top, gamma, _ = _blind_fixture()
    a = blind_adapt(gamma, top, alpha=0.1, seed=5)
    b = blind_adapt(gamma, top, alpha=0.1, seed=5)
    np.testing.assert_array_equal(a.labels, b.labels)
    for j in (1, 2, 3):
        assert a.solutions[j].coefficients == b.solutions[j].coefficients


def test_blind_adapt_single_class_raises():
    top = chain(2)
    gamma = np.abs(rng.stream(8, rng.GENERIC, 0).standard_normal((2, 500))) + 1.0
    with pytest.raises(ValueError):
        blind_adapt(gamma, top, alpha=0.1)
