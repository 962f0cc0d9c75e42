import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scodkit.exceptions import DegenerateScoreError, InvalidArgumentError
from scodkit.metrics import ScoredSamples, ausrt
from scodkit.recipes import sirc_scores
from scodkit.selectors import linear_beta, linear_score
from scodkit.synthetic import bayes_classify, likelihood_ratio, random_world, sample_id, sample_ood
from scodkit.tuning import (SircParams, linear_angle_grid, linear_angle_score, sirc_grid,
                            sirc_plugin_params, tune_on_eval)


def test_sirc_plugin_examples():
    # mean 0 and unit sample std
    v = np.array([-1.0, 1.0]) / np.sqrt(2.0)
    p = sirc_plugin_params(v)
    assert p.a == pytest.approx(-3.0) and p.b == pytest.approx(1.0)
    v = 1.0 + np.array([-2.0, 2.0]) / np.sqrt(2.0)
    p = sirc_plugin_params(v)
    assert p.a == pytest.approx(-5.0) and p.b == pytest.approx(0.5)
    with pytest.raises(DegenerateScoreError):
        sirc_plugin_params([2.0, 2.0, 2.0])
    with pytest.raises(DegenerateScoreError):
        sirc_plugin_params([2.0])


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
@settings(max_examples=50)
def test_sirc_grid_shape(values):
    if np.std(values) < 1e-6:
        return
    grid = sirc_grid(values)
    plug = sirc_plugin_params(values)
    assert len(grid) == 1681
    assert plug in grid
    a = np.array([p.a for p in grid])
    sigma = np.std(values, ddof=1)
    assert a.min() == pytest.approx(plug.a - 3 * sigma, abs=1e-12 * max(1.0, abs(plug.a)))
    assert a.max() == pytest.approx(plug.a + 3 * sigma, abs=1e-12 * max(1.0, abs(plug.a)))
    b = np.array([p.b for p in grid])
    assert b.min() == pytest.approx(plug.b / 10) and b.max() == pytest.approx(plug.b * 10)
    assert sirc_grid(values) == grid


def test_angle_grid():
    g = linear_angle_grid()
    assert g.size == 1603
    for special in (np.pi / 2, np.pi, 3 * np.pi / 2):
        assert special in g
    s1, s2 = np.array([3.0, 1.0, 2.0]), np.array([10.0, 30.0, 20.0])
    np.testing.assert_array_equal(linear_angle_score(s1, s2, 0.0), s1)
    np.testing.assert_array_equal(linear_angle_score(s1, s2, np.pi / 2), s2)
    np.testing.assert_array_equal(linear_angle_score(s1, s2, np.pi), -s1)


def _toy(seed=0, n=400):
    rng = np.random.default_rng(seed)
    return rng.normal(size=n), (rng.random(n) < 0.2).astype(float), rng.normal(1.0, 1.0, n)


def test_tune_single_candidate_and_ties():
    ids, losses, ood = _toy()
    build = lambda c: ScoredSamples(ids * c, losses, ood * c)
    res = tune_on_eval([2.0], build, 0.5)
    assert res.best == 2.0 and res.best_index == 0
    res = tune_on_eval(["x", "y", "z"], lambda c: build(1.0), 0.5,
                       objective=lambda s, a: 0.25)
    assert res.best == "x"
    with pytest.raises(InvalidArgumentError):
        tune_on_eval([], build, 0.5)


def test_tuning_result_serializes():
    ids, losses, ood = _toy()
    res = tune_on_eval(sirc_grid(-ids)[:5], lambda p: ScoredSamples(ids, losses, ood), 0.5)
    out = json.loads(json.dumps(res.to_dict(lambda p: {"a": p.a, "b": p.b})))
    assert len(out["table"]) == 5 and out["best_index"] == res.best_index


def test_tuned_never_worse_than_plugin_when_plugin_in_grid():
    ids, losses, ood = _toy(3)
    # two noisy views of the same latent score
    rng = np.random.default_rng(0)
    u1 = np.concatenate([ids, ood]) + rng.normal(0, 0.5, 800)
    u2 = np.concatenate([ids, ood]) + rng.normal(0, 0.5, 800)
    floor = u1.min()

    def build(p):
        s = sirc_scores(u1, u2, p, floor)
        return ScoredSamples(s[:400], losses, s[400:])
    plug = sirc_plugin_params(-u2[:400])
    res = tune_on_eval(sirc_grid(-u2[:400]), build, 0.5)
    assert res.best_value <= ausrt(build(plug), 0.5)


def test_angle_search_picks_oracle_slope_within_noise():
    w = random_world(6, dim=2, n_classes=3)
    X, y = sample_id(w, 20_000, 1)
    Xo = sample_ood(w, 20_000, 2)
    pred, r = bayes_classify(w, X)
    _, ro = bayes_classify(w, Xo)
    g, go = likelihood_ratio(w, X), likelihood_ratio(w, Xo)
    losses = (pred != y).astype(float)
    objective = lambda s, a: ausrt(s, a, np.linspace(0.9, 0.9, 1))
    build = lambda t: ScoredSamples(linear_angle_score(r, g, t), losses,
                                    linear_angle_score(ro, go, t))
    oracle_angle = np.arctan(linear_beta(0.5, 0.9))
    res = tune_on_eval(np.append(linear_angle_grid(), oracle_angle), build, 0.5, objective)
    oracle_value = objective(build(oracle_angle), 0.5)
    # the search may overfit the finite sample, but never by much
    assert oracle_value - res.best_value < 0.01
    assert res.best_value <= oracle_value


def test_sirc_params_validation():
    with pytest.raises(InvalidArgumentError):
        SircParams(np.nan, 1.0)
