"""Gaussian synthetic worlds with exact posteriors and likelihood ratios.

A world is a mixture of Gaussian ID classes plus one Gaussian OOD component.
All densities are evaluated in log-space through Cholesky factors, so every
quantity here is exact up to floating point and can serve as a test oracle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .exceptions import ConfigError, InvalidArgumentError, UnsupportedOracleError
from .selectors import plugin_conditional_risk

__all__ = [
    "OOD_LABEL",
    "GaussianComponent",
    "SyntheticWorld",
    "sample_id",
    "sample_ood",
    "sample_mixture",
    "posterior",
    "bayes_classify",
    "log_id_density",
    "log_likelihood_ratio",
    "likelihood_ratio",
    "mixture_posterior_id",
    "analytic_csm_params",
    "random_world",
]

OOD_LABEL = -1
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """Multivariate normal given by its mean and lower Cholesky factor."""

    mean: np.ndarray
    cov_factor: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        L = np.atleast_2d(np.asarray(self.cov_factor, dtype=float))
        if mean.ndim != 1:
            raise InvalidArgumentError("mean must be a vector")
        if L.shape != (mean.size, mean.size):
            raise InvalidArgumentError(
                f"cov_factor shape {L.shape} does not match mean dimension {mean.size}")
        if np.any(np.triu(L, 1) != 0.0):
            raise InvalidArgumentError("cov_factor must be lower triangular")
        if np.any(np.diag(L) <= 0.0):
            raise InvalidArgumentError("cov_factor needs a strictly positive diagonal")
        mean.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_factor", L)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def covariance(self) -> np.ndarray:
        return self.cov_factor @ self.cov_factor.T

    def log_pdf(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        # L^{-1} (x - mu) for all rows at once
        w = solve_triangular(self.cov_factor, (X - self.mean).T, lower=True)
        log_det = 2.0 * np.sum(np.log(np.diag(self.cov_factor)))
        return -0.5 * (np.sum(w * w, axis=0) + log_det + self.dim * _LOG_2PI)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self.cov_factor.T

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov_factor": self.cov_factor.tolist()}


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    """ID classes with priors, an OOD component and a loss matrix.

    ``loss[y, y_pred]`` must vanish exactly on the diagonal and be positive
    elsewhere. With ``shared_covariance`` set, every component (OOD included)
    must carry the same covariance factor.
    """

    classes: tuple
    priors: np.ndarray
    ood: GaussianComponent
    loss: np.ndarray = None
    shared_covariance: bool = False

    def __post_init__(self):
        classes = tuple(self.classes)
        priors = np.asarray(self.priors, dtype=float)
        if len(classes) == 0 or priors.shape != (len(classes),):
            raise InvalidArgumentError("need one prior per ID class")
        if np.any(priors <= 0.0) or (len(classes) > 1 and np.any(priors >= 1.0)):
            raise InvalidArgumentError("class priors must lie in (0, 1)")
        if abs(priors.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"class priors sum to {priors.sum()!r}, not 1")
        d = self.ood.dim
        if any(c.dim != d for c in classes):
            raise InvalidArgumentError("all components must share one dimension")
        K = len(classes)
        loss = (1.0 - np.eye(K)) if self.loss is None else np.asarray(self.loss, dtype=float)
        if loss.shape != (K, K):
            raise InvalidArgumentError(f"loss must be {K}x{K}")
        off = ~np.eye(K, dtype=bool)
        if np.any(np.diag(loss) != 0.0) or np.any(loss[off] <= 0.0):
            raise InvalidArgumentError("loss must be zero on the diagonal and positive elsewhere")
        if self.shared_covariance:
            L = self.ood.cov_factor
            if any(not np.array_equal(c.cov_factor, L) for c in classes):
                raise InvalidArgumentError(
                    "shared_covariance requires identical cov_factor on every component")
        priors.setflags(write=False)
        loss.setflags(write=False)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "loss", loss)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def dim(self) -> int:
        return self.ood.dim

    # -- serialization -------------------------------------------------
    @classmethod
    def from_dict(cls, spec: dict) -> "SyntheticWorld":
        try:
            classes = [GaussianComponent(c["mean"], c["cov_factor"]) for c in spec["id_classes"]]
            priors = [c["prior"] for c in spec["id_classes"]]
            ood = GaussianComponent(spec["ood"]["mean"], spec["ood"]["cov_factor"])
        except KeyError as exc:
            raise ConfigError(f"world spec is missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed world spec: {exc}") from exc
        return cls(classes, priors, ood, spec.get("loss"),
                   bool(spec.get("shared_covariance", False)))

    @classmethod
    def from_json(cls, path) -> "SyntheticWorld":
        text = Path(path).read_text(encoding="utf-8")
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
        try:
            return cls.from_dict(spec)
        except (ConfigError, InvalidArgumentError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "id_classes": [dict(c.to_dict(), prior=float(p))
                           for c, p in zip(self.classes, self.priors)],
            "ood": self.ood.to_dict(),
            "loss": self.loss.tolist(),
            "shared_covariance": self.shared_covariance,
        }


def _check_features(world: SyntheticWorld, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != world.dim:
        raise InvalidArgumentError(
            f"features have dimension {X.shape[-1]}, world has {world.dim}")
    return X, single


def _class_log_joint(world: SyntheticWorld, X) -> np.ndarray:
    """``log p_I(x | y) + log p(y)`` as an (n, K) array."""
    return np.column_stack([c.log_pdf(X) + np.log(p)
                            for c, p in zip(world.classes, world.priors)])


def sample_id(world: SyntheticWorld, n: int, seed: int):
    """Draw ``n`` labelled ID samples.

    Returns
    -------
    X : ndarray, shape (n, d)
    y : ndarray of int, shape (n,)
    """
    if n < 0:
        raise InvalidArgumentError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    y = rng.choice(world.n_classes, size=n, p=world.priors)
    X = np.empty((n, world.dim))
    for k, comp in enumerate(world.classes):
        idx = np.flatnonzero(y == k)
        X[idx] = comp.sample(rng, idx.size)
    return X, y


def sample_ood(world: SyntheticWorld, n: int, seed: int) -> np.ndarray:
    if n < 0:
        raise InvalidArgumentError("n must be nonnegative")
    return world.ood.sample(np.random.default_rng(seed), n)


def sample_mixture(world: SyntheticWorld, n: int, pi_o_tr: float, seed: int,
                   return_origin: bool = False):
    """Unlabelled draw from ``pi_o_tr * p_O + (1 - pi_o_tr) * p_I``.

    With ``return_origin`` the boolean OOD mask is returned as well; it is
    hidden from any learner and exists for testing.
    """
    if not 0.0 <= pi_o_tr <= 1.0:
        raise InvalidArgumentError(f"pi_o_tr must lie in [0, 1], got {pi_o_tr}")
    if n < 0:
        raise InvalidArgumentError("n must be nonnegative")
    ss = np.random.SeedSequence(seed)
    s_mask, s_id, s_ood = (int(s) for s in ss.generate_state(3))
    is_ood = np.random.default_rng(s_mask).random(n) < pi_o_tr
    X = np.empty((n, world.dim))
    X[~is_ood] = sample_id(world, int((~is_ood).sum()), s_id)[0]
    X[is_ood] = sample_ood(world, int(is_ood.sum()), s_ood)
    if return_origin:
        return X, is_ood
    return X


def posterior(world: SyntheticWorld, x) -> np.ndarray:
    """Exact class posterior ``p_I(y | x)``; one row per input."""
    X, single = _check_features(world, x)
    lj = _class_log_joint(world, X)
    post = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    return post[0] if single else post


def bayes_classify(world: SyntheticWorld, x):
    """Bayes ID classifier and its conditional risk under ``world.loss``."""
    post = posterior(world, x)
    # renormalize away the last-ulp drift so the strict posterior check holds
    post = post / np.sum(post, axis=-1, keepdims=True)
    return plugin_conditional_risk(post, world.loss)


def log_id_density(world: SyntheticWorld, x) -> np.ndarray:
    X, single = _check_features(world, x)
    out = logsumexp(_class_log_joint(world, X), axis=1)
    return out[0] if single else out


def log_likelihood_ratio(world: SyntheticWorld, x):
    """``log p_O(x) - log p_I(x)``."""
    X, single = _check_features(world, x)
    out = world.ood.log_pdf(X) - logsumexp(_class_log_joint(world, X), axis=1)
    return float(out[0]) if single else out


def likelihood_ratio(world: SyntheticWorld, x):
    """OOD/ID likelihood ratio ``g(x) = p_O(x) / p_I(x)``."""
    return np.exp(log_likelihood_ratio(world, x))


def mixture_posterior_id(world: SyntheticWorld, x, pi_u: float, pi_o_tr: float):
    """True ``p(z = I | x)`` for the ID-vs-unlabelled training mixture."""
    if not 0.0 < pi_u < 1.0:
        raise InvalidArgumentError("pi_u must lie in (0, 1)")
    log_g = log_likelihood_ratio(world, x)
    # 1 / (1 + pi_u (1 - pi_o) / (1 - pi_u) + pi_u pi_o / (1 - pi_u) * g)
    a = pi_u * (1.0 - pi_o_tr) / (1.0 - pi_u)
    with np.errstate(divide="ignore"):
        log_c = np.log(pi_u * pi_o_tr / (1.0 - pi_u))
    return np.exp(-np.logaddexp(np.log1p(a), log_c + log_g))


def analytic_csm_params(world: SyntheticWorld, pi_u: float, pi_o_tr: float):
    """Closed-form corrected-sigmoid parameters for a two-Gaussian world.

    Requires a shared covariance and a single ID Gaussian (several classes
    with one common mean count as one). Derived directly from the two
    quadratic forms::

        log g(x) = x^T C^{-1} (mu_O - mu_I) + (mu_I^T C^{-1} mu_I - mu_O^T C^{-1} mu_O) / 2

    so that ``p(z=I|x) = 1 / (1 + a + exp(theta^T [x; 1]))`` with
    ``theta = [C^{-1}(mu_O - mu_I); log(pi_u pi_o / (1 - pi_u)) + const]`` and
    ``a = pi_u (1 - pi_o) / (1 - pi_u)``.
    """
    from .poscod import CsmParams

    if not world.shared_covariance:
        raise UnsupportedOracleError("closed form needs shared_covariance")
    means = np.array([c.mean for c in world.classes])
    if not np.allclose(means, means[0], rtol=0.0, atol=1e-12):
        raise UnsupportedOracleError("closed form needs a single ID Gaussian")
    if not 0.0 < pi_u < 1.0:
        raise InvalidArgumentError("pi_u must lie in (0, 1)")
    if not 0.0 < pi_o_tr <= 1.0:
        raise UnsupportedOracleError("pi_o_tr = 0 has no finite corrected-sigmoid bias")
    L = world.ood.cov_factor
    mu_i, mu_o = means[0], world.ood.mean

    def cinv(v):
        return solve_triangular(L.T, solve_triangular(L, v, lower=True), lower=False)

    w = cinv(mu_o - mu_i)
    quad = 0.5 * (mu_i @ cinv(mu_i) - mu_o @ cinv(mu_o))
    bias = np.log(pi_u * pi_o_tr / (1.0 - pi_u)) + quad
    a = pi_u * (1.0 - pi_o_tr) / (1.0 - pi_u)
    return CsmParams(theta=np.append(w, bias), a=a)


def random_world(seed: int, dim: int, n_classes: int, *, class_spread: float = 2.0,
                 ood_shift: float = 2.5, shared_covariance: bool = False) -> SyntheticWorld:
    """Seeded random world used by tests, demos and the acceptance suite.

    Class means are drawn with scale ``class_spread``; the OOD mean sits
    ``ood_shift`` away from the ID centroid along a random direction. Without
    ``shared_covariance`` each component gets a mildly anisotropic covariance.
    """
    rng = np.random.default_rng(seed)
    means = rng.normal(scale=class_spread, size=(n_classes, dim))
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    ood_mean = means.mean(axis=0) + ood_shift * direction

    def factor():
        A = rng.normal(scale=0.25, size=(dim, dim))
        return np.linalg.cholesky(np.eye(dim) + A @ A.T / dim)

    if shared_covariance:
        L = factor()
        classes = [GaussianComponent(m, L) for m in means]
        ood = GaussianComponent(ood_mean, L)
    else:
        classes = [GaussianComponent(m, factor()) for m in means]
        ood = GaussianComponent(ood_mean, 1.5 * factor())
    priors = rng.dirichlet(np.full(n_classes, 5.0))
    priors[-1] = 1.0 - priors[:-1].sum()
    return SyntheticWorld(classes, priors, ood, None, shared_covariance)
