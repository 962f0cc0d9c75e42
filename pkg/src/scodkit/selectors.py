"""Selector scores and threshold calibration.

Every score in this package follows one convention: lower is more
acceptable, and a selector accepts a sample when ``score <= threshold``.
Scores coming from tools that use the opposite convention (SIRC, MSP, ...)
are negated before they get here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError

__all__ = [
    "Selector",
    "linear_beta",
    "linear_score",
    "sirc_score",
    "sirc_selector_score",
    "plugin_conditional_risk",
    "calibrate_threshold",
    "accept",
]


@dataclass(frozen=True)
class Selector:
    """Threshold selector with boundary randomization.

    Accepts with probability 1 below ``threshold``, ``tau`` at the threshold
    and 0 above it.
    """

    threshold: float
    tau: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidArgumentError(f"tau must lie in [0, 1], got {self.tau}")

    def accept(self, score, u=0.0):
        return accept(self, score, u)

    def acceptance_probability(self, score):
        score = np.asarray(score, dtype=float)
        return np.where(score < self.threshold, 1.0,
                        np.where(score == self.threshold, self.tau, 0.0))


def linear_beta(alpha: float, tpr_min: float) -> float:
    """Slope of the optimal linear selector, ``alpha * tpr_min / (1 - alpha)``.

    Returns ``inf`` for ``alpha == 1``; callers treat that as "rank by g only".
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1], got {alpha}")
    if not 0.0 < tpr_min <= 1.0:
        raise InvalidArgumentError(f"tpr_min must lie in (0, 1], got {tpr_min}")
    if alpha == 1.0:
        return float("inf")
    return alpha * tpr_min / (1.0 - alpha)


def linear_score(r, g, alpha: float, tpr_min: float):
    """Optimal SCOD score ``r + beta * g``; for ``alpha == 1`` the score is ``g``.

    Parameters
    ----------
    r : float or array_like
        Conditional risk of the classifier's decision, ``>= 0``.
    g : float or array_like
        OOD/ID likelihood ratio, ``>= 0``.
    alpha : float
        Relative cost of accepting an OOD sample, in ``[0, 1]``.
    tpr_min : float
        Target true positive rate, in ``(0, 1)``.
    """
    beta = linear_beta(alpha, tpr_min)
    r = np.asarray(r, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.isinf(beta):
        out = g + 0.0 * r
    elif beta == 0.0:
        out = r + 0.0 * g
    else:
        out = r + beta * g
    return out[()] if out.ndim == 0 else out


def sirc_score(s1, s2, s1_max: float, a: float, b: float):
    """Raw SIRC combination ``-(s1_max - s1) * (1 + exp(-b * (s2 - a)))``.

    Higher is more acceptable here, as in the original definition. Use
    :func:`sirc_selector_score` for the package-wide lower-is-better form.
    """
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    # exp argument is clipped so a zero first factor never meets an inf
    out = -(s1_max - s1) * (1.0 + np.exp(np.minimum(-b * (s2 - a), 700.0)))
    return out[()] if out.ndim == 0 else out


def sirc_selector_score(s1, s2, s1_max: float, a: float, b: float):
    """SIRC negated into the accept-if-``<=``-threshold convention."""
    return -sirc_score(s1, s2, s1_max, a, b)


def plugin_conditional_risk(posterior, loss):
    """Plugin Bayes decision and its conditional risk.

    Parameters
    ----------
    posterior : array_like, shape (K,) or (n, K)
        Class posterior(s); each row must sum to one within 1e-9.
    loss : array_like, shape (K, K)
        ``loss[y, y_pred]``, the cost of predicting ``y_pred`` when the truth
        is ``y``.

    Returns
    -------
    label : int or ndarray of int
        Argmin of the expected loss, ties broken toward the lowest index.
    risk : float or ndarray
        The minimal expected loss. Under 0/1 loss this is ``1 - max posterior``.
    """
    p = np.asarray(posterior, dtype=float)
    loss = np.asarray(loss, dtype=float)
    single = p.ndim == 1
    p2 = np.atleast_2d(p)
    if p2.ndim != 2 or loss.shape != (p2.shape[1], p2.shape[1]):
        raise InvalidArgumentError(
            f"posterior with {p2.shape[-1]} classes does not match loss {loss.shape}")
    if not np.all(np.isfinite(p2)) or np.any(p2 < 0.0):
        raise InvalidArgumentError("posterior entries must be finite and nonnegative")
    if np.any(np.abs(p2.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidArgumentError("posterior rows must sum to 1 within 1e-9")
    expected = p2 @ loss
    label = np.argmin(expected, axis=1)
    risk = expected[np.arange(len(label)), label]
    if single:
        return int(label[0]), float(risk[0])
    return label, risk


def calibrate_threshold(id_scores, tpr_min: float) -> Selector:
    """Smallest observed ID score whose empirical TPR reaches ``tpr_min``.

    The returned selector is deterministic and includes the boundary: with
    ``tau = 1`` it accepts every sample with ``score <= threshold``, the same
    rule the metrics use.
    """
    s = np.asarray(id_scores, dtype=float).ravel()
    if s.size == 0:
        raise InvalidArgumentError("id_scores must be nonempty")
    if not 0.0 < tpr_min <= 1.0:
        raise InvalidArgumentError(f"tpr_min must lie in (0, 1], got {tpr_min}")
    if np.any(np.isnan(s)):
        raise InvalidArgumentError("id_scores contain NaN")
    values, counts = np.unique(s, return_counts=True)
    tpr = np.cumsum(counts) / s.size
    idx = int(np.searchsorted(tpr, tpr_min, side="left"))
    # tpr[-1] == 1.0 so idx is always in range for tpr_min <= 1
    return Selector(threshold=float(values[idx]), tau=1.0)


def accept(selector: Selector, score, u=0.0):
    """Acceptance decision with an externally supplied uniform variate ``u``."""
    score = np.asarray(score, dtype=float)
    u = np.asarray(u, dtype=float)
    out = (score < selector.threshold) | ((score == selector.threshold) & (u < selector.tau))
    return bool(out) if out.ndim == 0 else out
