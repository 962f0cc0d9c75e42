"""Hyperparameter protocols for the double-score selectors.

``plugin`` settings come from closed-form rules and are deployable.
``tuned`` settings are chosen on the evaluation data itself and only give an
upper bound on achievable performance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .exceptions import DegenerateScoreError, InvalidArgumentError
from .metrics import ScoredSamples, ausrt

__all__ = [
    "SircParams",
    "TuningResult",
    "sirc_plugin_params",
    "sirc_grid",
    "linear_angle_grid",
    "linear_angle_score",
    "tune_on_eval",
]


@dataclass(frozen=True)
class SircParams:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise InvalidArgumentError("SIRC parameters must be finite")


def _mean_std(values):
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise DegenerateScoreError("need at least two ID values to estimate a spread")
    sigma = float(np.std(v, ddof=1))
    if not sigma > 0.0:
        raise DegenerateScoreError("s2 is constant on ID data; SIRC heuristics undefined")
    return float(np.mean(v)), sigma


def sirc_plugin_params(s2_id_values) -> SircParams:
    """Heuristic ``a = mean - 3 std``, ``b = 1 / std`` of ``s2`` on ID data."""
    mu, sigma = _mean_std(s2_id_values)
    return SircParams(a=mu - 3.0 * sigma, b=1.0 / sigma)


def _axis(lo, hi, extra):
    return np.append(np.linspace(lo, hi, 40), extra)


def sirc_grid(s2_id_values) -> list[SircParams]:
    """41 x 41 search grid around the plugin point.

    ``a`` spans ``a_plug +- 3 std`` and ``b`` spans ``[b_plug / 10, 10 b_plug]``,
    each with 40 inclusive evenly spaced values plus the plugin value itself.
    """
    mu, sigma = _mean_std(s2_id_values)
    plug = sirc_plugin_params(s2_id_values)
    a_axis = _axis(plug.a - 3.0 * sigma, plug.a + 3.0 * sigma, plug.a)
    b_axis = _axis(plug.b / 10.0, 10.0 * plug.b, plug.b)
    return [SircParams(float(a), float(b)) for a in a_axis for b in b_axis]


def linear_angle_grid() -> np.ndarray:
    """1600 evenly spaced angles over ``[0, 2 pi]`` plus ``pi/2, pi, 3 pi/2``."""
    return np.append(np.linspace(0.0, 2.0 * np.pi, 1600),
                     [np.pi / 2.0, np.pi, 3.0 * np.pi / 2.0])


def linear_angle_score(s1, s2, angle: float):
    """``cos(angle) * s1 + sin(angle) * s2``; ``tan(angle)`` plays the role of beta."""
    # exact axes so pi/2 etc. do not leak a 6e-17 share of the other score
    c = {0.5 * np.pi: 0.0, np.pi: -1.0, 1.5 * np.pi: 0.0}.get(angle, np.cos(angle))
    s = {0.5 * np.pi: 1.0, np.pi: 0.0, 1.5 * np.pi: -1.0}.get(angle, np.sin(angle))
    return c * np.asarray(s1, dtype=float) + s * np.asarray(s2, dtype=float)


@dataclass
class TuningResult:
    best: Any
    best_index: int
    best_value: float
    values: np.ndarray
    candidates: Sequence = field(repr=False)
    label: str = "tuned"

    def to_dict(self, encode: Callable = lambda c: c) -> dict:
        return {
            "label": self.label,
            "best_index": self.best_index,
            "best_value": self.best_value,
            "best": encode(self.best),
            "table": [{"candidate": encode(c), "objective": float(v)}
                      for c, v in zip(self.candidates, self.values)],
        }


def tune_on_eval(candidates: Sequence, build_samples: Callable[[Any], ScoredSamples],
                 alpha: float, objective: Callable = ausrt) -> TuningResult:
    """Exhaustively pick the candidate minimizing ``objective`` on evaluation data.

    ``build_samples(candidate)`` scores the evaluation set with that candidate.
    Ties go to the earliest candidate.
    """
    candidates = list(candidates)
    if not candidates:
        raise InvalidArgumentError("no candidates to tune over")
    values = np.array([objective(build_samples(c), alpha) for c in candidates])
    idx = int(np.argmin(values))
    return TuningResult(candidates[idx], idx, float(values[idx]), values, candidates)
