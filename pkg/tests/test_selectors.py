import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scodkit.exceptions import InvalidArgumentError
from scodkit.metrics import ScoredSamples, scod_risk_at_tpr
from scodkit.selectors import (Selector, accept, calibrate_threshold, linear_beta,
                               linear_score, plugin_conditional_risk, sirc_score,
                               sirc_selector_score)
from scodkit.synthetic import bayes_classify, likelihood_ratio, random_world, sample_id, sample_ood


# -- linear ----------------------------------------------------------------
def test_linear_score_examples():
    assert linear_score(0.2, 1.0, 0.5, 0.9) == pytest.approx(1.1)
    assert linear_score(0.3, 5.0, 0.0, 0.9) == 0.3
    assert linear_score(0.3, 5.0, 1.0, 0.9) == 5.0


def test_linear_beta():
    assert linear_beta(0.5, 0.9) == pytest.approx(0.9)
    assert linear_beta(0.25, 0.8) == pytest.approx(0.25 * 0.8 / 0.75)
    assert linear_beta(1.0, 0.9) == np.inf
    with pytest.raises(InvalidArgumentError):
        linear_beta(1.5, 0.9)
    with pytest.raises(InvalidArgumentError):
        linear_beta(0.5, 0.0)


@given(st.floats(0, 1), st.floats(0, 100), st.floats(0.01, 0.99, exclude_max=True),
       st.floats(0.01, 0.99), st.floats(1e-3, 1.0))
def test_linear_score_strictly_increasing(r, g, alpha, tpr_min, delta):
    base = linear_score(r, g, alpha, tpr_min)
    assert linear_score(r + delta, g, alpha, tpr_min) > base
    assert linear_score(r, g + delta, alpha, tpr_min) > base


@given(arrays(float, 30, elements=st.floats(0, 1)), arrays(float, 30, elements=st.floats(0, 50)))
def test_alpha_extremes_rank_by_single_score(r, g):
    np.testing.assert_array_equal(np.argsort(linear_score(r, g, 0.0, 0.9), kind="stable"),
                                  np.argsort(r, kind="stable"))
    np.testing.assert_array_equal(np.argsort(linear_score(r, g, 1.0, 0.9), kind="stable"),
                                  np.argsort(g, kind="stable"))


# -- SIRC ------------------------------------------------------------------
def test_sirc_examples():
    assert sirc_score(1.0, 123.0, 1.0, 0.3, 2.0) == 0.0
    assert sirc_score(0.2, 5.0, 1.0, 0.3, 0.0) == pytest.approx(-2 * 0.8)
    assert sirc_score(0.5, 0.0, 1.0, 0.0, 1.0) == pytest.approx(-1.0)
    assert sirc_selector_score(0.5, 0.0, 1.0, 0.0, 1.0) == pytest.approx(1.0)


def test_sirc_no_overflow():
    s = sirc_score(np.array([0.0, 0.0]), np.array([-1e6, 1e6]), 1.0, 0.0, 1.0)
    assert np.all(np.isfinite(s))


@given(st.floats(-5, 0.99), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 5))
def test_sirc_monotone_in_both_scores(s1, s2, a, b):
    # higher s1 (more confident) or higher s2 (more ID-like) is more acceptable
    base = sirc_score(s1, s2, 1.0, a, b)
    assert sirc_score(min(s1 + 0.01, 1.0), s2, 1.0, a, b) >= base
    assert sirc_score(s1, s2 + 0.5, 1.0, a, b) >= base


# -- conditional risk ------------------------------------------------------
def test_plugin_conditional_risk_examples():
    zero_one = 1 - np.eye(2)
    label, risk = plugin_conditional_risk([0.7, 0.3], zero_one)
    assert label == 0 and risk == pytest.approx(0.3)
    K = 5
    _, risk = plugin_conditional_risk(np.full(K, 1 / K), 1 - np.eye(K))
    assert risk == pytest.approx(1 - 1 / K)
    label, risk = plugin_conditional_risk([0.6, 0.4], [[0, 1], [10, 0]])
    assert label == 1 and risk == pytest.approx(0.6)


def test_plugin_conditional_risk_batch_and_validation():
    post = np.array([[0.5, 0.5], [0.1, 0.9]])
    label, risk = plugin_conditional_risk(post, 1 - np.eye(2))
    np.testing.assert_array_equal(label, [0, 1])
    np.testing.assert_allclose(risk, [0.5, 0.1])
    with pytest.raises(InvalidArgumentError):
        plugin_conditional_risk([0.5, 0.6], 1 - np.eye(2))
    with pytest.raises(InvalidArgumentError):
        plugin_conditional_risk([0.5, 0.5], 1 - np.eye(3))


# -- calibration -----------------------------------------------------------
def test_calibrate_threshold_examples():
    # 2/3 of the ID mass sits at or below 2
    assert calibrate_threshold([1, 2, 3], 2 / 3).threshold == 2
    # 0.67 > 2/3 is only met by accepting everything
    assert calibrate_threshold([1, 2, 3], 0.67).threshold == 3
    assert calibrate_threshold([4, 1, 9, 2], 1.0).threshold == 9
    assert calibrate_threshold([5, 5, 5], 0.5).threshold == 5
    sel = calibrate_threshold([5, 5, 5], 0.5)
    assert sel.tau == 1.0 and np.all(sel.accept([5, 5, 5], [0.99, 0.5, 0.0]))


def test_calibrate_threshold_errors():
    with pytest.raises(InvalidArgumentError):
        calibrate_threshold([], 0.5)
    with pytest.raises(InvalidArgumentError):
        calibrate_threshold([1.0], 0.0)


@given(arrays(float, st.integers(1, 40), elements=st.integers(-5, 5).map(float)),
       st.floats(0.01, 1.0))
@settings(max_examples=200)
def test_calibration_is_smallest_feasible_score(scores, tpr_min):
    lam = calibrate_threshold(scores, tpr_min).threshold
    tpr = lambda t: np.mean(scores <= t)
    assert tpr(lam) >= tpr_min
    sel = calibrate_threshold(scores, tpr_min)
    assert np.mean(sel.accept(scores, np.full(scores.size, 0.999))) >= tpr_min
    feasible = [s for s in np.unique(scores) if tpr(s) >= tpr_min]
    assert lam == min(feasible)


# -- accept ----------------------------------------------------------------
def test_accept_examples():
    assert accept(Selector(1.0, 0.0), 0.5, 0.99)
    assert accept(Selector(1.0, 0.3), 1.0, 0.2)
    assert not accept(Selector(1.0, 0.3), 1.0, 0.9)
    assert not accept(Selector(1.0, 1.0), 1.5, 0.0)
    np.testing.assert_array_equal(Selector(1.0, 0.5).accept([0.0, 1.0, 1.0, 2.0], [0, 0.4, 0.6, 0]),
                                  [True, True, False, False])
    with pytest.raises(InvalidArgumentError):
        Selector(1.0, 1.5)


# -- dominance of the optimal linear selector ------------------------------
def test_linear_selector_dominates_single_scores_per_target():
    w = random_world(8, dim=2, n_classes=4)
    X, y = sample_id(w, 30_000, 1)
    Xo = sample_ood(w, 30_000, 2)
    pred, r_id = bayes_classify(w, X)
    _, r_ood = bayes_classify(w, Xo)
    g_id, g_ood = likelihood_ratio(w, X), likelihood_ratio(w, Xo)
    losses = (pred != y).astype(float)
    for alpha in (0.25, 0.5, 0.75):
        for tpr in (0.3, 0.6, 0.9):
            lin = ScoredSamples(linear_score(r_id, g_id, alpha, tpr), losses,
                                linear_score(r_ood, g_ood, alpha, tpr))
            best = scod_risk_at_tpr(lin, alpha, tpr)
            for s_id, s_ood in ((r_id, r_ood), (g_id, g_ood)):
                other = scod_risk_at_tpr(ScoredSamples(s_id, losses, s_ood), alpha, tpr)
                assert best <= other + 0.01
