"""Plugin estimate of the optimal SCOD strategy (POSCOD).

The likelihood ratio ``g = p_O / p_I`` is learned from an ID sample and an
unlabelled ID/OOD mixture by fitting the corrected sigmoid

    p(z=I | x) = 1 / (1 + |a| + exp(theta^T [x; 1]))

with maximum likelihood. ``|a|`` absorbs the ID contamination of the
unlabelled sample; fixing ``a = 0`` gives ordinary logistic regression.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import FitDivergedError, InvalidArgumentError
from .selectors import Selector, calibrate_threshold, linear_score, plugin_conditional_risk

__all__ = [
    "CsmParams",
    "MixtureDataset",
    "FitConfig",
    "FitInfo",
    "PriorEstimate",
    "PoscodModel",
    "PRIOR_FLOOR",
    "add_bias",
    "csm_posterior",
    "bce_and_gradient",
    "fit_csm",
    "recover_prior",
    "estimate_g",
    "run_poscod",
]

logger = logging.getLogger(__name__)

PRIOR_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class CsmParams:
    """Corrected-sigmoid parameters; ``theta`` holds the weights then the bias."""

    theta: np.ndarray
    a: float

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        if theta.ndim != 1 or not np.all(np.isfinite(theta)) or not np.isfinite(self.a):
            raise InvalidArgumentError("CsmParams entries must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "a", float(self.a))

    @property
    def dim(self) -> int:
        return self.theta.size - 1

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "a": self.a}


def add_bias(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((X.shape[0], 1))])


@dataclass(frozen=True, eq=False)
class MixtureDataset:
    """Rows of the shuffled ID-vs-unlabelled sequence.

    ``is_id[i]`` is True for rows taken from the ID sample (``z = I``) and
    False for rows from the unlabelled mixture (``z = U``).
    """

    features: np.ndarray
    is_id: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        z = np.asarray(self.is_id, dtype=bool).ravel()
        if X.shape[0] != z.size:
            raise InvalidArgumentError("features and is_id differ in length")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "is_id", z)

    @classmethod
    def from_parts(cls, id_features, unlabeled_features, seed: int = 0) -> "MixtureDataset":
        """Concatenate both samples and shuffle the rows with ``seed``."""
        X_i = np.atleast_2d(np.asarray(id_features, dtype=float))
        X_u = np.atleast_2d(np.asarray(unlabeled_features, dtype=float))
        if X_i.size == 0:
            X_i = X_i.reshape(0, X_u.shape[1])
        if X_u.size == 0:
            X_u = X_u.reshape(0, X_i.shape[1])
        if X_i.shape[1] != X_u.shape[1]:
            raise InvalidArgumentError("ID and unlabelled features differ in dimension")
        X = np.vstack([X_i, X_u])
        z = np.concatenate([np.ones(len(X_i), bool), np.zeros(len(X_u), bool)])
        perm = np.random.default_rng(seed).permutation(len(z))
        return cls(X[perm], z[perm])

    @property
    def n_id(self) -> int:
        return int(self.is_id.sum())

    @property
    def n_unlabeled(self) -> int:
        return int(self.is_id.size - self.is_id.sum())

    @property
    def pi_u(self) -> float:
        """Known fraction of unlabelled rows, ``n / (m + n)``."""
        return self.n_unlabeled / self.is_id.size

    def validate(self):
        if self.n_id == 0 or self.n_unlabeled == 0:
            raise InvalidArgumentError(
                f"need at least one ID and one unlabelled row "
                f"(got {self.n_id} ID, {self.n_unlabeled} unlabelled)")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgumentError("features contain non-finite values")


@dataclass(frozen=True)
class FitConfig:
    step_size: float = 1.0
    max_epochs: int = 200
    grad_tolerance: float = 1e-9
    seed: int = 0
    fix_a_at_zero: bool = False

    def __post_init__(self):
        if self.step_size <= 0 or self.grad_tolerance <= 0:
            raise InvalidArgumentError("step_size and grad_tolerance must be positive")
        if self.max_epochs < 0:
            raise InvalidArgumentError("max_epochs must be nonnegative")


@dataclass
class FitInfo:
    n_epochs: int
    converged: bool
    grad_norm: float
    loss_history: list = field(default_factory=list)


def _log_terms(t, A):
    """Return ``log D`` and ``log(A + e^t)`` where ``D = 1 + A + e^t``."""
    log_d = np.logaddexp(np.log1p(A), t)
    if A > 0.0:
        log_n = np.logaddexp(np.log(A), t)
    else:
        log_n = t
    return log_d, log_n


def csm_posterior(params: CsmParams, features_with_bias):
    """``p(z=I | x)`` under the corrected sigmoid; last input column must be 1."""
    Xb = np.asarray(features_with_bias, dtype=float)
    single = Xb.ndim == 1
    Xb = np.atleast_2d(Xb)
    if Xb.shape[1] != params.theta.size:
        raise InvalidArgumentError(
            f"input has {Xb.shape[1]} columns, theta has {params.theta.size}")
    log_d, _ = _log_terms(Xb @ params.theta, abs(params.a))
    p = np.exp(-log_d)
    return float(p[0]) if single else p


def _bce_core(theta, A, Xb, z):
    """Mean BCE and its derivatives w.r.t. the linear term and ``A = |a|``."""
    t = Xb @ theta
    log_d, log_n = _log_terms(t, A)
    zu = ~z
    # -log p(I) = log D ;  -log p(U) = log D - log(A + e^t)
    loss = np.mean(log_d) - np.sum(log_n[zu]) / z.size
    dl_dt = np.exp(t - log_d)
    dl_dt[zu] -= np.exp(t[zu] - log_n[zu])
    dl_dA = np.exp(-log_d)
    dl_dA[zu] -= np.exp(-log_n[zu])
    return loss, dl_dt, dl_dA


def bce_and_gradient(params: CsmParams, data: MixtureDataset):
    """Mean binary cross-entropy of the corrected sigmoid and its gradient.

    Returns ``(loss, grad_theta, grad_a)``. The derivative of ``|a|`` is taken
    as ``sign(a)``, which is 0 at ``a = 0``.
    """
    Xb = add_bias(data.features)
    loss, dl_dt, dl_dA = _bce_core(params.theta, abs(params.a), Xb, data.is_id)
    n = data.is_id.size
    grad_theta = Xb.T @ dl_dt / n
    grad_a = float(np.sign(params.a) * dl_dA.sum() / n)
    return float(loss), grad_theta, grad_a


def _hessian_terms(t, A, z, with_a=True):
    """Per-row second derivatives ``(l_tt, l_tA, l_AA)`` of the BCE."""
    log_d, log_n = _log_terms(t, A)
    zu = ~z
    q_d = np.exp(t - log_d)
    q_n = np.exp(t[zu] - log_n[zu])
    l_tt = q_d * (1.0 - q_d)
    l_tt[zu] -= q_n * (1.0 - q_n)
    if not with_a:
        return l_tt, None, None
    inv_d = np.exp(-log_d)
    inv_n = np.exp(-log_n[zu])
    l_tA = -q_d * inv_d
    l_AA = -inv_d * inv_d
    l_tA[zu] += q_n * inv_n
    l_AA[zu] += inv_n * inv_n
    return l_tt, l_tA, l_AA


def _newton_direction(H, grad):
    """Newton step, Levenberg-damped until the system is positive definite."""
    k = grad.size
    if not np.all(np.isfinite(H)):
        return -grad
    scale = max(abs(np.trace(H)) / k, 1e-12)
    damping = 0.0
    for _ in range(60):
        try:
            c = np.linalg.cholesky(H + damping * np.eye(k))
        except np.linalg.LinAlgError:
            damping = max(4.0 * damping, 1e-8 * scale)
            continue
        return -np.linalg.solve(c.T, np.linalg.solve(c, grad))
    return -grad


def fit_csm(data: MixtureDataset, config: FitConfig = FitConfig(), *,
            return_info: bool = False):
    """Maximum-likelihood fit of the corrected sigmoid.

    The model depends on ``a`` only through ``A = |a|``, so the fit runs over
    ``(theta, A)`` with ``A >= 0``: projected Newton iterations with Armijo
    backtracking, where ``A`` is frozen at 0 whenever the bound is active and
    the gradient pushes against it. Features are standardized internally and
    the result is mapped back to the input scale. ``theta`` starts at zero and
    ``A`` at ``pi_u``; ``config.fix_a_at_zero`` pins ``A = 0`` (standard
    sigmoid). The returned ``a`` is nonnegative.
    """
    data.validate()
    X = data.features
    z = data.is_id
    n, d = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0.0] = 1.0
    Ub = add_bias((X - mu) / sd)

    fix_a = config.fix_a_at_zero
    theta = np.zeros(d + 1)
    A = 0.0 if fix_a else data.pi_u

    def loss_grad(theta, A):
        loss, dl_dt, dl_dA = _bce_core(theta, A, Ub, z)
        return float(loss), Ub.T @ dl_dt / n, float(dl_dA.sum() / n)

    def hessian(theta, A, with_a):
        l_tt, l_tA, l_AA = _hessian_terms(Ub @ theta, A, z, with_a)
        H_tt = (Ub * l_tt[:, None]).T @ Ub / n
        if not with_a:
            return H_tt
        H = np.empty((d + 2, d + 2))
        H[:d + 1, :d + 1] = H_tt
        H[:d + 1, -1] = H[-1, :d + 1] = Ub.T @ l_tA / n
        H[-1, -1] = l_AA.sum() / n
        return H

    loss, g_theta, g_A = loss_grad(theta, A)
    if not np.isfinite(loss):
        raise FitDivergedError("initial loss is non-finite")
    history = [loss]
    converged = False
    epoch = 0
    while True:
        a_free = not fix_a and (A > 0.0 or g_A < 0.0)
        grad = np.append(g_theta, g_A) if a_free else g_theta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= config.grad_tolerance:
            converged = True
            break
        if epoch >= config.max_epochs:
            break
        epoch += 1
        direction = _newton_direction(hessian(theta, A, a_free), grad)
        step = config.step_size
        while True:
            t_new = theta + step * direction[:d + 1]
            A_new = max(A + step * direction[-1], 0.0) if a_free else A
            moved = np.append(t_new - theta, A_new - A) if a_free else t_new - theta
            loss_new, gt_new, gA_new = loss_grad(t_new, A_new)
            if np.isfinite(loss_new) and loss_new <= loss + 1e-4 * float(grad @ moved):
                break
            step *= 0.5
            if step < 1e-12:
                break
        if step < 1e-12:
            # no descent representable along this direction
            break
        theta, A, loss, g_theta, g_A = t_new, A_new, loss_new, gt_new, gA_new
        history.append(loss)
    if not np.all(np.isfinite(theta)) or not np.isfinite(A):
        raise FitDivergedError("parameters became non-finite")
    if not converged:
        logger.warning("fit_csm stopped after %d iterations with |grad|=%.3g",
                       epoch, grad_norm)

    w = theta[:d] / sd
    bias = theta[d] - w @ mu
    out = CsmParams(theta=np.append(w, bias), a=A)
    if return_info:
        return out, FitInfo(epoch, converged, grad_norm, history)
    return out


class PriorEstimate(NamedTuple):
    value: float
    clamped: bool


def recover_prior(a_hat: float, pi_u: float) -> PriorEstimate:
    """OOD fraction of the unlabelled sample, ``1 + |a| - |a| / pi_u``.

    The estimate is clamped into ``[PRIOR_FLOOR, 1]``; ``clamped`` reports
    whether that happened.
    """
    if not 0.0 < pi_u < 1.0:
        raise InvalidArgumentError(f"pi_u must lie in (0, 1), got {pi_u}")
    A = abs(a_hat)
    raw = 1.0 + A - A / pi_u
    value = min(max(raw, PRIOR_FLOOR), 1.0)
    return PriorEstimate(value, value != raw)


def estimate_g(params: CsmParams, pi_u: float, pi_o_tr_hat: float, features_with_bias):
    """Plugin likelihood ratio without the additive correction term.

    Equals ``p(U|x) / p(I|x) * (1 - pi_u) / (pi_u * pi_o_tr_hat)``; under the
    corrected sigmoid the posterior ratio is simply ``|a| + exp(theta^T x)``.
    """
    if pi_o_tr_hat <= 0.0:
        raise InvalidArgumentError("pi_o_tr_hat must be positive")
    if not 0.0 < pi_u < 1.0:
        raise InvalidArgumentError("pi_u must lie in (0, 1)")
    Xb = np.asarray(features_with_bias, dtype=float)
    single = Xb.ndim == 1
    Xb = np.atleast_2d(Xb)
    if Xb.shape[1] != params.theta.size:
        raise InvalidArgumentError(
            f"input has {Xb.shape[1]} columns, theta has {params.theta.size}")
    _, log_n = _log_terms(Xb @ params.theta, abs(params.a))
    g = np.exp(log_n + np.log((1.0 - pi_u) / (pi_u * pi_o_tr_hat)))
    return float(g[0]) if single else g


@dataclass(frozen=True, eq=False)
class PoscodModel:
    """Selective classifier produced by :func:`run_poscod`."""

    params: CsmParams
    pi_u: float
    prior: PriorEstimate
    alpha: float
    tpr_min: float
    loss: np.ndarray
    posterior_source: Callable
    selector: Selector

    def classify(self, X):
        return plugin_conditional_risk(self._posterior(X), self.loss)[0]

    def conditional_risk(self, X):
        return plugin_conditional_risk(self._posterior(X), self.loss)[1]

    def g_hat(self, X):
        return estimate_g(self.params, self.pi_u, self.prior.value, add_bias(X))

    def score(self, X):
        r = self.conditional_risk(X)
        if self.alpha == 1.0:
            return self.g_hat(X)
        return linear_score(r, self.g_hat(X), self.alpha, self.tpr_min)

    def accept(self, X):
        return self.selector.accept(self.score(X))

    def _posterior(self, X):
        p = np.atleast_2d(self.posterior_source(np.atleast_2d(X)))
        return p / p.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return dict(self.params.to_dict(), pi_u=self.pi_u, pi_o_tr_hat=self.prior.value,
                    clamped=self.prior.clamped)


def run_poscod(id_features, unlabeled_features, *, alpha: float, tpr_min: float,
               loss, posterior_source: Callable,
               config: FitConfig = FitConfig()) -> PoscodModel:
    """Learn a plugin SCOD selective classifier from ID and unlabelled data.

    Parameters
    ----------
    id_features : array_like, shape (m, d)
        ID training inputs (their labels are only needed by whatever produced
        ``posterior_source``).
    unlabeled_features : array_like, shape (n, d)
        Unlabelled ID/OOD mixture.
    alpha, tpr_min : float
        Problem parameters.
    loss : array_like, shape (K, K)
        Target loss ``loss[y, y_pred]``.
    posterior_source : callable
        Maps an (n, d) feature array to (n, K) class posteriors.
    config : FitConfig
        Optimizer settings; ``config.seed`` drives the row shuffle.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError("alpha must lie in [0, 1]")
    X_i = np.atleast_2d(np.asarray(id_features, dtype=float))
    data = MixtureDataset.from_parts(X_i, unlabeled_features, seed=config.seed)
    data.validate()
    params = fit_csm(data, config)
    prior = recover_prior(params.a, data.pi_u)
    if prior.clamped:
        logger.warning("recovered OOD prior clamped to %.3g", prior.value)
    model = PoscodModel(params, data.pi_u, prior, alpha, tpr_min,
                        np.asarray(loss, dtype=float), posterior_source,
                        Selector(threshold=np.inf))
    selector = calibrate_threshold(model.score(X_i), tpr_min)
    return PoscodModel(params, data.pi_u, prior, alpha, tpr_min, model.loss,
                       posterior_source, selector)
