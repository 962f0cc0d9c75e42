"""Score recipes over sample-table columns and their evaluation.

A recipe turns table columns (already in the lower-is-better convention)
into one selector score per row:

``single``  one column as is
``linear``  ``r + beta * g``; beta from the optimal-selector formula (plugin)
            or an angle search on the evaluation data (tuned)
``sirc``    SIRC on two columns; heuristic (plugin) or grid-searched (tuned)
``poscod``  ``r + beta * g_hat`` with ``g_hat`` from fitted corrected-sigmoid
            parameters and the table's feature columns
"""
from __future__ import annotations

import json
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataError
from .metrics import ScoredSamples, aurc, auroc, ausrt, scod_curve, uniform_grid
from .poscod import CsmParams, add_bias, estimate_g
from .selectors import linear_beta, linear_score, sirc_selector_score
from .tables import SampleTable
from .tuning import (SircParams, linear_angle_grid, linear_angle_score, sirc_grid,
                     sirc_plugin_params, tune_on_eval)

__all__ = [
    "CONVENTIONS",
    "percent",
    "sirc_scores",
    "load_params",
    "EvalData",
    "evaluate_recipe",
    "recipe_columns",
]

CONVENTIONS = {
    "selector": "accept if score <= threshold",
    "ausrt": "trapezoid over TPR targets divided by the target span",
    "aurc": "mean selective risk over coverages k/m at sorted ID scores",
    "auroc": "P(s_ID < s_OOD) + 0.5 P(s_ID = s_OOD)",
    "scod_risk_at_tpr": "exact minimum over thresholds at distinct ID scores",
    "percent_rounding": "percent points, 2 decimals, round half to even",
}


def percent(x) -> str:
    if x is None:
        return None
    return str(Decimal(repr(100.0 * x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


def sirc_scores(u1, u2, params: SircParams, u1_floor: float):
    """SIRC selector score for two lower-is-better columns.

    SIRC itself wants ``s1`` higher for confident predictions and ``s2``
    higher for ID-like inputs, so ``s1 = -u1`` (bounded by ``-u1_floor``)
    and ``s2 = -u2``.
    """
    return sirc_selector_score(-np.asarray(u1), -np.asarray(u2), -u1_floor,
                               params.a, params.b)


def load_params(path):
    try:
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        return (CsmParams(spec["theta"], spec["a"]), float(spec["pi_u"]),
                float(spec["pi_o_tr_hat"]))
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read fitted parameters {path}: {exc}") from exc


class EvalData:
    """ID and OOD rows of a table, with the ID loss column resolved."""

    def __init__(self, table: SampleTable, loss_col: str = "loss"):
        self.table = table
        self.id_rows = table.mask("ID")
        self.ood_rows = table.mask("OOD")
        if not self.id_rows.any():
            raise DataError("evaluation table has no ID rows")
        self.rows = self.id_rows | self.ood_rows
        self.id_losses = table.require_finite(loss_col, self.id_rows)

    def column(self, name):
        """Column over ID and OOD rows (NaN-checked), in table order."""
        self.table.require_finite(name, self.rows)
        return self.table.column(name)

    def samples(self, values) -> ScoredSamples:
        values = np.asarray(values, dtype=float)
        if np.isnan(values[self.rows]).any():
            raise DataError("score recipe produced NaN")
        return ScoredSamples(values[self.id_rows], self.id_losses, values[self.ood_rows])


def recipe_columns(recipe: dict) -> list:
    kind = recipe.get("type")
    keys = {"single": ["col"], "linear": ["r_col", "g_col"], "sirc": ["s1_col", "s2_col"],
            "poscod": ["r_col"]}
    if kind not in keys:
        raise ConfigError(f"unknown recipe type {kind!r}; expected one of {sorted(keys)}")
    try:
        return [recipe[k] for k in keys[kind]]
    except KeyError as exc:
        raise ConfigError(f"recipe {recipe.get('name', kind)!r} is missing {exc}") from None


def _features(data: EvalData, names):
    return np.column_stack([data.column(c) for c in names])


def evaluate_recipe(data: EvalData, recipe: dict, alpha: float, tpr_min: float,
                    grid="empirical", fitted=None) -> dict:
    """Score the table with ``recipe`` and compute every summary metric.

    ``fitted`` may carry ``(CsmParams, pi_u, pi_o_tr_hat)`` for a ``poscod``
    recipe in place of a ``params`` file.
    """
    kind = recipe.get("type")
    cols = recipe_columns(recipe)
    mode = recipe.get("mode", "plugin")
    if mode not in ("plugin", "tuned"):
        raise ConfigError(f"recipe mode must be plugin or tuned, got {mode!r}")
    grid_values = None if grid == "empirical" else uniform_grid()
    info = {"type": kind, "mode": mode}

    def objective(samples, a):
        return ausrt(samples, a, grid_values)

    if kind == "single":
        values = data.column(cols[0])
    elif kind in ("linear", "poscod"):
        r = data.column(cols[0])
        if kind == "linear":
            g = data.column(cols[1])
        else:
            if fitted is None:
                if "params" not in recipe:
                    raise ConfigError("poscod recipe needs a 'params' file")
                fitted = load_params(recipe["params"])
            params, pi_u, pi_hat = fitted
            feats = recipe.get("features")
            if not feats or len(feats) != params.dim:
                raise ConfigError(f"poscod recipe needs {params.dim} 'features' columns")
            g = np.full(len(data.table), np.nan)
            g[data.rows] = estimate_g(params, pi_u, pi_hat, add_bias(_features(data, feats)[data.rows]))
            info["pi_o_tr_hat"] = pi_hat
        if mode == "tuned":
            res = tune_on_eval(list(linear_angle_grid()),
                               lambda t: data.samples(linear_angle_score(r, g, t)),
                               alpha, objective)
            info["angle"] = float(res.best)
            values = linear_angle_score(r, g, res.best)
        elif "beta" in recipe:
            info["beta"] = float(recipe["beta"])
            values = r + info["beta"] * g
        else:
            info["beta"] = linear_beta(alpha, tpr_min)
            values = linear_score(r, g, alpha, tpr_min)
    else:
        u1, u2 = data.column(cols[0]), data.column(cols[1])
        floor = float(recipe.get("s1_floor", np.min(u1[data.rows])))
        s2_id = -u2[data.id_rows]
        if mode == "tuned":
            res = tune_on_eval(sirc_grid(s2_id),
                               lambda p: data.samples(sirc_scores(u1, u2, p, floor)),
                               alpha, objective)
            params = res.best
        else:
            params = sirc_plugin_params(s2_id)
        info.update(a=params.a, b=params.b, s1_floor=floor)
        values = sirc_scores(u1, u2, params, floor)

    samples = data.samples(values)
    x, y = scod_curve(samples, alpha, grid_values)
    report = {
        "name": recipe.get("name", kind),
        "recipe": info,
        "ausrt": float(ausrt(samples, alpha, grid_values)),
        "aurc": float(aurc(samples)),
        "scod_risk_at_tpr": float(scod_curve(samples, alpha, [tpr_min])[1][0]),
    }
    if samples.n_ood:
        report["auroc"] = float(auroc(samples))
    else:
        report["auroc"] = None
        report["auroc_omitted"] = "no OOD rows in the evaluation table"
    for key in ("ausrt", "aurc", "auroc", "scod_risk_at_tpr"):
        report[key + "_pct"] = percent(report[key])
    report["curve"] = (x, y)
    return report
