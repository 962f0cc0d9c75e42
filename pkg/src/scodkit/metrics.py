"""Empirical SCOD metrics: rates, SCOD risk at a TPR target, AuSRT, AuRC, AuROC.

Selectors accept ``score <= threshold``. ID samples carry the loss the
classifier incurs on them; OOD samples carry none.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .exceptions import InvalidArgumentError

__all__ = [
    "ScoredSample",
    "ScoredSamples",
    "Rates",
    "empirical_rates",
    "scod_risk_at_tpr",
    "scod_curve",
    "uniform_grid",
    "ausrt",
    "aurc",
    "auroc",
    "fold_standard_error",
]


class ScoredSample(NamedTuple):
    score: float
    is_id: bool
    loss: float = 0.0


@dataclass(frozen=True, eq=False)
class ScoredSamples:
    """Evaluation sample split into ID scores/losses and OOD scores."""

    id_scores: np.ndarray
    id_losses: np.ndarray
    ood_scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.id_scores, dtype=float).ravel()
        l = np.asarray(self.id_losses, dtype=float).ravel()
        o = np.asarray(self.ood_scores, dtype=float).ravel()
        if s.shape != l.shape:
            raise InvalidArgumentError("id_scores and id_losses differ in length")
        if np.isnan(s).any() or np.isnan(o).any():
            raise InvalidArgumentError("scores contain NaN")
        if not np.all(np.isfinite(l)) or np.any(l < 0.0):
            raise InvalidArgumentError("ID losses must be finite and nonnegative")
        for name, arr in (("id_scores", s), ("id_losses", l), ("ood_scores", o)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_records(cls, records: Sequence[ScoredSample]) -> "ScoredSamples":
        ids = [r for r in records if r.is_id]
        return cls([r.score for r in ids], [r.loss for r in ids],
                   [r.score for r in records if not r.is_id])

    @property
    def n_id(self) -> int:
        return self.id_scores.size

    @property
    def n_ood(self) -> int:
        return self.ood_scores.size

    def with_scores(self, id_scores, ood_scores) -> "ScoredSamples":
        return ScoredSamples(id_scores, self.id_losses, ood_scores)

    def subset(self, id_index, ood_index) -> "ScoredSamples":
        return ScoredSamples(self.id_scores[id_index], self.id_losses[id_index],
                             self.ood_scores[ood_index])


class Rates(NamedTuple):
    tpr: float
    fpr: float
    selective_risk: float
    risk_defined: bool
    fpr_defined: bool


def _require_id(samples: ScoredSamples):
    if samples.n_id == 0:
        raise InvalidArgumentError("at least one ID sample is required")


def empirical_rates(samples: ScoredSamples, threshold: float) -> Rates:
    """TPR, FPR and selective risk of the selector ``score <= threshold``.

    Selective risk is NaN (``risk_defined=False``) when no ID sample is
    accepted; FPR is 0 with ``fpr_defined=False`` when there are no OOD samples.
    """
    _require_id(samples)
    acc = samples.id_scores <= threshold
    n_acc = int(acc.sum())
    tpr = n_acc / samples.n_id
    if samples.n_ood:
        fpr = int((samples.ood_scores <= threshold).sum()) / samples.n_ood
    else:
        fpr = 0.0
    risk = float(samples.id_losses[acc].sum() / n_acc) if n_acc else float("nan")
    return Rates(tpr, fpr, risk, n_acc > 0, samples.n_ood > 0)


def _threshold_table(samples: ScoredSamples):
    """Per distinct ID score: TPR, selective risk and FPR at that threshold."""
    # order within a tie group is irrelevant: only group-final sums are used
    order = np.argsort(samples.id_scores)
    s = samples.id_scores[order]
    cum_loss = np.cumsum(samples.id_losses[order])
    # last position of each run of equal scores
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    thresholds = s[last]
    count = last + 1
    tpr = count / samples.n_id
    risk = cum_loss[last] / count
    if samples.n_ood:
        ood = np.sort(samples.ood_scores)
        fpr = np.searchsorted(ood, thresholds, side="right") / samples.n_ood
    else:
        fpr = np.zeros_like(tpr)
    return thresholds, tpr, risk, fpr


def scod_curve(samples: ScoredSamples, alpha: float, grid=None):
    """SCOD risk at each TPR target of ``grid``.

    ``grid`` defaults to every achievable empirical TPR level ``k / m``. The
    minimum over thresholds only needs the distinct ID scores as candidates:
    between two of them TPR and selective risk are constant while FPR can
    only grow.

    Returns
    -------
    grid : ndarray
    risk : ndarray
    """
    _require_id(samples)
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1], got {alpha}")
    _, tpr, risk, fpr = _threshold_table(samples)
    objective = (1.0 - alpha) * risk + alpha * fpr
    best_from = np.minimum.accumulate(objective[::-1])[::-1]
    if grid is None:
        grid = np.arange(1, samples.n_id + 1) / samples.n_id
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < 0.0 or grid.max() > 1.0):
        raise InvalidArgumentError("TPR targets must lie in [0, 1]")
    idx = np.searchsorted(tpr, grid, side="left")
    return grid, best_from[idx]


def scod_risk_at_tpr(samples: ScoredSamples, alpha: float, tpr_min: float) -> float:
    """``min (1 - alpha) R_S + alpha FPR`` over thresholds with ``TPR >= tpr_min``."""
    if not 0.0 < tpr_min <= 1.0:
        raise InvalidArgumentError(f"tpr_min must lie in (0, 1], got {tpr_min}")
    return float(scod_curve(samples, alpha, [tpr_min])[1][0])


def uniform_grid(n_points: int = 101) -> np.ndarray:
    """Evenly spaced TPR targets over ``[0, 1]``.

    A target of 0 imposes no constraint beyond accepting at least one ID
    sample.
    """
    return np.linspace(0.0, 1.0, n_points)


def _trapezoid_mean(x, y) -> float:
    if x.size == 1:
        return float(y[0])
    span = x[-1] - x[0]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])) / (2.0 * span))


def ausrt(samples: ScoredSamples, alpha: float, grid=None) -> float:
    """Area under the SCOD-risk vs TPR-target curve, normalized by grid span.

    Trapezoidal rule over ``grid`` (default: all empirical TPR levels). A
    one-point grid returns the risk at that point.
    """
    if grid is not None:
        g = np.asarray(grid, dtype=float)
        if g.size == 0 or np.any(np.diff(g) <= 0.0):
            raise InvalidArgumentError("grid must be nonempty and strictly increasing")
    x, y = scod_curve(samples, alpha, grid)
    return _trapezoid_mean(x, y)


def aurc(samples: ScoredSamples) -> float:
    """Mean selective risk over coverages ``k / m``, thresholds at sorted ID scores.

    Tied scores are accepted together, so a tie group contributes the risk of
    the whole group at each of its coverage levels.
    """
    _require_id(samples)
    order = np.argsort(samples.id_scores)
    s = samples.id_scores[order]
    cum_loss = np.cumsum(samples.id_losses[order])
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    group_risk = cum_loss[last] / (last + 1)
    sizes = np.diff(np.concatenate([[-1], last]))
    return float(np.sum(group_risk * sizes) / samples.n_id)


def auroc(samples: ScoredSamples) -> float:
    """``P(s_ID < s_OOD) + P(s_ID = s_OOD) / 2`` over all ID x OOD pairs."""
    m, n = samples.n_id, samples.n_ood
    if m == 0 or n == 0:
        raise InvalidArgumentError("AuROC needs at least one ID and one OOD sample")
    ranks = rankdata(np.concatenate([samples.id_scores, samples.ood_scores]))
    # Mann-Whitney U of the OOD scores counts pairs with the OOD score larger
    u = ranks[m:].sum() - n * (n + 1) / 2.0
    return float(u / (m * n))


def fold_standard_error(statistic, samples: ScoredSamples, n_folds: int = 10) -> float:
    """Standard error of ``statistic(samples)`` from disjoint interleaved folds.

    Fold ``k`` holds every ``n_folds``-th row starting at ``k``, for ID and OOD
    rows alike, so two sample sets that differ only in their scores are split
    identically. ``statistic`` may return a scalar; the SE is
    ``std(fold values) / sqrt(n_folds)``.
    """
    values = []
    for k in range(n_folds):
        sub = samples.subset(slice(k, None, n_folds), slice(k, None, n_folds))
        values.append(statistic(sub))
    return float(np.std(values, ddof=1) / np.sqrt(n_folds))
