import numpy as np
import pytest
from scipy.stats import spearmanr

from scodkit.exceptions import InvalidArgumentError
from scodkit.metrics import ScoredSamples, ausrt
from scodkit.poscod import (CsmParams, FitConfig, MixtureDataset, add_bias, bce_and_gradient,
                            csm_posterior, estimate_g, fit_csm, recover_prior, run_poscod)
from scodkit.selectors import linear_score
from scodkit.synthetic import (GaussianComponent, SyntheticWorld, analytic_csm_params,
                               bayes_classify, likelihood_ratio, mixture_posterior_id, posterior,
                               sample_id, sample_mixture, sample_ood)


def shared_world(d, n_classes=1, shift=2.0):
    L = np.linalg.cholesky(np.eye(d) + 0.3 * np.ones((d, d)) / d)
    mu_o = np.r_[shift, np.zeros(d - 1)]
    classes = [GaussianComponent(np.zeros(d), L) for _ in range(n_classes)]
    return SyntheticWorld(classes, np.full(n_classes, 1.0 / n_classes),
                          GaussianComponent(mu_o, L), shared_covariance=True)


def mixture_data(world, m, n, pi_o, seed):
    X_id, _ = sample_id(world, m, seed)
    X_u = sample_mixture(world, n, pi_o, seed + 1)
    return MixtureDataset.from_parts(X_id, X_u, seed=seed + 2)


def numeric_gradient(params, data, h=1e-6):
    def loss(theta, a):
        return bce_and_gradient(CsmParams(theta, a), data)[0]
    g = np.empty(params.theta.size)
    for i in range(g.size):
        e = np.zeros_like(g)
        e[i] = h
        g[i] = (loss(params.theta + e, params.a) - loss(params.theta - e, params.a)) / (2 * h)
    ga = (loss(params.theta, params.a + h) - loss(params.theta, params.a - h)) / (2 * h)
    return g, ga


# -- model -----------------------------------------------------------------
def test_csm_posterior_examples():
    x = add_bias([[1.5, -2.0]])
    assert csm_posterior(CsmParams(np.zeros(3), 0.0), x) == pytest.approx(0.5)
    assert csm_posterior(CsmParams(np.zeros(3), 1.0), x) == pytest.approx(1 / 3)
    assert csm_posterior(CsmParams(np.zeros(3), -1.0), x) == pytest.approx(1 / 3)
    assert csm_posterior(CsmParams([0.0, 0.0, 800.0], 0.5), x) == 0.0


def test_bce_at_zero_is_log_two():
    X = np.random.default_rng(0).normal(size=(200, 3))
    data = MixtureDataset(X, np.arange(200) % 2 == 0)
    loss, g_theta, g_a = bce_and_gradient(CsmParams(np.zeros(4), 0.0), data)
    assert loss == pytest.approx(np.log(2))
    assert np.isfinite(g_a)


def test_gradient_matches_finite_differences_20_cases():
    rng = np.random.default_rng(123)
    for case in range(20):
        d = int(rng.integers(1, 9))
        n = int(rng.integers(20, 200))
        data = MixtureDataset(rng.normal(size=(n, d)), rng.random(n) < rng.uniform(0.2, 0.8))
        a = rng.uniform(0.05, 2.0) * rng.choice([-1, 1])
        params = CsmParams(rng.normal(scale=0.7, size=d + 1), a)
        _, g_theta, g_a = bce_and_gradient(params, data)
        n_theta, n_a = numeric_gradient(params, data)
        scale = max(np.abs(n_theta).max(), abs(n_a), 1e-3)
        assert np.abs(g_theta - n_theta).max() / scale < 1e-5, case
        assert abs(g_a - n_a) / scale < 1e-5, case


def test_standard_sigmoid_fit_pins_a():
    world = shared_world(2)
    data = mixture_data(world, 2000, 2000, 0.5, 1)
    params = fit_csm(data, FitConfig(fix_a_at_zero=True))
    assert params.a == 0.0
    # the gradient in a is still reported at a = 0
    assert np.isfinite(bce_and_gradient(params, data)[2])


# -- fitting ---------------------------------------------------------------
def test_fit_decreases_loss_and_converges():
    data = mixture_data(shared_world(3), 3000, 3000, 0.4, 7)
    params, info = fit_csm(data, return_info=True)
    assert info.converged
    hist = np.array(info.loss_history)
    assert np.all(np.diff(hist) <= 1e-15)
    assert hist[-1] <= hist[0]
    assert bce_and_gradient(params, data)[0] == pytest.approx(hist[-1], rel=1e-10)


@pytest.mark.parametrize("pi_o", [0.3, 0.7])
def test_fit_close_to_analytic_params(pi_o):
    world = shared_world(2)
    data = mixture_data(world, 20_000, 20_000, pi_o, 3)
    fitted = fit_csm(data)
    truth = analytic_csm_params(world, 0.5, pi_o)
    assert np.abs(fitted.theta - truth.theta).max() < 0.3
    assert abs(fitted.a - truth.a) < 0.1
    X = sample_mixture(world, 2000, 0.5, 99)
    mae = np.abs(csm_posterior(fitted, add_bias(X)) - mixture_posterior_id(world, X, 0.5, pi_o)).mean()
    assert mae < 0.02


def test_fit_clean_ood_gives_small_a():
    data = mixture_data(shared_world(2), 20_000, 20_000, 1.0, 5)
    assert abs(fit_csm(data).a) < 0.05


def test_fit_requires_both_partitions():
    X = np.zeros((10, 2))
    with pytest.raises(InvalidArgumentError):
        fit_csm(MixtureDataset(X, np.ones(10, bool)))
    with pytest.raises(InvalidArgumentError):
        fit_csm(MixtureDataset.from_parts(X, np.empty((0, 2))))


def test_fit_is_deterministic():
    data = mixture_data(shared_world(2), 1000, 1000, 0.5, 2)
    a, b = fit_csm(data), fit_csm(data)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert a.a == b.a


def test_mixture_dataset_records_pi_u():
    data = MixtureDataset.from_parts(np.zeros((30, 2)), np.ones((10, 2)), seed=1)
    assert data.pi_u == 10 / 40
    assert data.n_id == 30 and data.n_unlabeled == 10


# -- prior recovery and g estimate -----------------------------------------
def test_recover_prior_examples():
    assert recover_prior(0.5, 0.5).value == pytest.approx(0.5)
    assert recover_prior(0.0, 0.3) == (1.0, False)
    a = 0.5 * (1 - 0.2) / (1 - 0.5)
    assert recover_prior(a, 0.5).value == pytest.approx(0.2)
    assert recover_prior(-a, 0.5).value == pytest.approx(0.2)
    est = recover_prior(5.0, 0.5)
    assert est.clamped and est.value == 1e-3
    with pytest.raises(InvalidArgumentError):
        recover_prior(0.1, 1.0)


def test_estimate_g_examples():
    x = add_bias([[0.3, 0.1]])
    # p(I|x) = p(U|x) = 1/2 with theta = 0, a = 0
    assert estimate_g(CsmParams(np.zeros(3), 0.0), 0.5, 0.5, x[0]) == pytest.approx(2.0)
    # as p(I|x) -> 1 the ratio bottoms out at |a| times the scale
    p = CsmParams([0.0, 0.0, -800.0], 0.4)
    assert estimate_g(p, 0.5, 0.5, x[0]) == pytest.approx(0.4 * 0.5 / 0.25)
    assert 1 - csm_posterior(p, x)[0] >= 0.4 * csm_posterior(p, x)[0] - 1e-12


def test_estimate_g_with_analytic_params_equals_true_ratio():
    world = shared_world(4)
    params = analytic_csm_params(world, 0.5, 0.3)
    X = sample_mixture(world, 10_000, 0.5, 11)
    g_hat = estimate_g(params, 0.5, 0.3, add_bias(X))
    g = likelihood_ratio(world, X)
    # the plugin ratio keeps the constant (1 - pi) / pi that the threshold absorbs
    np.testing.assert_allclose(g_hat - 0.7 / 0.3, g, rtol=1e-8, atol=1e-12)
    assert spearmanr(g_hat, g).statistic >= 0.999


# -- end to end ------------------------------------------------------------
def _oracle_posterior(world):
    return lambda X: posterior(world, X)


def test_run_poscod_deterministic_and_alpha_one_ranks_by_g_hat():
    world = shared_world(2, n_classes=2)
    X_id, _ = sample_id(world, 3000, 1)
    X_u = sample_mixture(world, 3000, 0.5, 2)
    kw = dict(tpr_min=0.9, loss=world.loss, posterior_source=_oracle_posterior(world))
    m1 = run_poscod(X_id, X_u, alpha=0.5, **kw)
    m2 = run_poscod(X_id, X_u, alpha=0.5, **kw)
    probe = sample_ood(world, 50, 3)
    assert m1.selector == m2.selector
    np.testing.assert_array_equal(m1.score(probe), m2.score(probe))
    m3 = run_poscod(X_id, X_u, alpha=1.0, **kw)
    np.testing.assert_array_equal(np.argsort(m3.score(probe)), np.argsort(m3.g_hat(probe)))
    assert np.mean(m1.accept(X_id)) >= 0.9
    assert m1.to_dict()["pi_u"] == 0.5


def test_run_poscod_close_to_oracle_selector():
    world = SyntheticWorld(
        [GaussianComponent([0.0, 0.0], np.eye(2)), GaussianComponent([2.0, 0.0], np.eye(2)),
         GaussianComponent([1.0, 1.5], np.eye(2))],
        [0.4, 0.3, 0.3], GaussianComponent([1.0, 4.0], np.eye(2)), shared_covariance=True)
    n = 100_000
    X_id, _ = sample_id(world, n, 1)
    X_u = sample_mixture(world, n, 0.5, 2)
    model = run_poscod(X_id, X_u, alpha=0.5, tpr_min=0.9, loss=world.loss,
                       posterior_source=_oracle_posterior(world))
    X_ev, y_ev = sample_id(world, n, 3)
    X_o = sample_ood(world, n, 4)
    pred, r = bayes_classify(world, X_ev)
    _, r_o = bayes_classify(world, X_o)
    losses = (pred != y_ev).astype(float)
    oracle = ScoredSamples(linear_score(r, likelihood_ratio(world, X_ev), 0.5, 0.9), losses,
                           linear_score(r_o, likelihood_ratio(world, X_o), 0.5, 0.9))
    plugin = ScoredSamples(model.score(X_ev), losses, model.score(X_o))
    assert ausrt(plugin, 0.5) - ausrt(oracle, 0.5) < 0.01
