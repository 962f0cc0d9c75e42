"""Command-line interface: ``scodkit synth | fit | eval | sweep``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Every output file is a pure function of the inputs and the seed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .exceptions import (ConfigError, DataError, DegenerateScoreError, FitDivergedError,
                         InvalidArgumentError, ScodError, UnsupportedOracleError)
from .poscod import FitConfig, MixtureDataset, fit_csm, recover_prior
from .recipes import CONVENTIONS, EvalData, evaluate_recipe, recipe_columns
from .synthetic import (OOD_LABEL, SyntheticWorld, bayes_classify, log_likelihood_ratio,
                        posterior, sample_id, sample_mixture, sample_ood)
from .tables import SampleTable, format_float, write_text

logger = logging.getLogger("scodkit")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "alpha": 0.5,
    "tpr_min": 0.9,
    "grid": "empirical",
    "loss_col": "loss",
    "higher_is_better": [],
    "recipes": [],
    "seed": 0,
}

METRICS = ("ausrt", "aurc", "auroc", "scod_risk_at_tpr")


# -- configuration ---------------------------------------------------------
def load_json(path, what="config") -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from exc
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return value


def build_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_json(args.config))
    for key in ("alpha", "tpr_min", "seed"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    try:
        alpha, tpr_min = float(cfg["alpha"]), float(cfg["tpr_min"])
        cfg["seed"] = int(cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from exc
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"config field 'alpha' must lie in [0, 1], got {alpha}")
    if not 0.0 < tpr_min < 1.0:
        raise ConfigError(f"config field 'tpr_min' must lie in (0, 1), got {tpr_min}")
    if cfg["grid"] not in ("empirical", "uniform"):
        raise ConfigError("config field 'grid' must be 'empirical' or 'uniform'")
    cfg["alpha"], cfg["tpr_min"] = alpha, tpr_min
    return cfg


def load_table(path, cfg=None) -> SampleTable:
    table = SampleTable.read_csv(path)
    if cfg and cfg["higher_is_better"]:
        table.negate(cfg["higher_is_better"])
    return table


def check_columns(table: SampleTable, names):
    missing = [c for c in names if c not in table.columns]
    if missing:
        raise ConfigError(f"config references missing column(s) {missing}; "
                          f"table has {list(table.columns)}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return format_float(float(x))
    return x


# -- synth -------------------------------------------------------------------
def synth_table(world: SyntheticWorld, n_id: int, n_ood: int, n_mixture: int,
                pi_o_tr: float, seed: int) -> SampleTable:
    """ID, OOD and unlabelled rows with exact oracle columns.

    Columns: features ``x0..``, ``r_true``, ``g_true``, ``log_g_true``,
    ``pred`` (Bayes prediction), ``loss`` (ID rows only) and posteriors ``p0..``.
    """
    if min(n_id, n_ood, n_mixture) < 0:
        raise ConfigError("sample counts must be nonnegative")
    s_id, s_ood, s_mix = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    X_id, y = sample_id(world, n_id, s_id)
    X_ood = sample_ood(world, n_ood, s_ood)
    try:
        X_mix = sample_mixture(world, n_mixture, pi_o_tr, s_mix)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    X = np.vstack([X_id, X_ood, X_mix]).reshape(-1, world.dim)
    n = len(X)
    split = ["ID"] * n_id + ["OOD"] * n_ood + ["UNLABELED"] * n_mixture
    prefix = {"ID": "id", "OOD": "ood", "UNLABELED": "unl"}
    counters = {}
    ids = []
    for s in split:
        counters[s] = counters.get(s, 0) + 1
        ids.append(f"{prefix[s]}-{counters[s]:06d}")
    labels = np.concatenate([y, np.full(n - n_id, OOD_LABEL)]).astype(int)

    cols = {f"x{j}": X[:, j] for j in range(world.dim)}
    K = world.n_classes
    if n:
        post = np.atleast_2d(posterior(world, X))
        post = post / post.sum(axis=1, keepdims=True)
        pred, r = bayes_classify(world, X)
        log_g = np.atleast_1d(log_likelihood_ratio(world, X))
    else:
        post, pred, r, log_g = np.empty((0, K)), np.empty(0, int), np.empty(0), np.empty(0)
    loss = np.full(n, np.nan)
    loss[:n_id] = world.loss[y, pred[:n_id]]
    with np.errstate(over="ignore"):
        g = np.exp(log_g)
    cols.update(r_true=r, g_true=g, log_g_true=log_g, pred=np.asarray(pred, float), loss=loss)
    cols.update({f"p{k}": post[:, k] for k in range(K)})
    return SampleTable(ids, split, labels, cols)


def cmd_synth(args, cfg) -> int:
    world_path = args.world or cfg.get("world")
    if not world_path:
        raise ConfigError("synth needs --world (or 'world' in the config)")
    try:
        world = SyntheticWorld.from_json(world_path)
    except OSError as exc:
        raise ConfigError(f"cannot read world {world_path}: {exc}") from exc
    table = synth_table(world, args.n_id, args.n_ood, args.n_mixture, args.pi_o_tr, cfg["seed"])
    path = Path(args.out) / "samples.csv"
    table.write_csv(path)
    logger.info("wrote %d rows to %s", len(table), path)
    return EXIT_OK


# -- fit ---------------------------------------------------------------------
def _feature_names(args, cfg, table):
    names = args.features.split(",") if args.features else cfg.get("features")
    if not names:
        names = sorted((c for c in table.columns if c[0] == "x" and c[1:].isdigit()),
                       key=lambda c: int(c[1:]))
    if not names:
        raise ConfigError("no feature columns given (--features or 'features')")
    check_columns(table, names)
    return list(names)


def fit_from_features(X_id, X_unl, sigmoid: str, seed: int):
    """Fit the posterior model and recover the OOD prior of the unlabelled rows."""
    if sigmoid not in ("corrected", "standard"):
        raise ConfigError(f"sigmoid must be 'corrected' or 'standard', got {sigmoid!r}")
    if len(X_id) == 0 or len(X_unl) == 0:
        raise DataError(f"fit needs ID and UNLABELED rows "
                        f"(got {len(X_id)} ID, {len(X_unl)} UNLABELED)")
    data = MixtureDataset.from_parts(X_id, X_unl, seed=seed)
    params, info = fit_csm(data, FitConfig(seed=seed, fix_a_at_zero=sigmoid == "standard"),
                           return_info=True)
    prior = recover_prior(params.a, data.pi_u)
    return params, data.pi_u, prior, info


def _rows_features(table, names, split):
    rows = table.mask(split)
    if not rows.any():
        return np.empty((0, len(names)))
    return np.column_stack([table.require_finite(c, rows) for c in names])


def cmd_fit(args, cfg) -> int:
    table = load_table(args.table, cfg)
    names = _feature_names(args, cfg, table)
    sigmoid = args.sigmoid or cfg.get("sigmoid", "corrected")
    params, pi_u, prior, info = fit_from_features(
        _rows_features(table, names, "ID"), _rows_features(table, names, "UNLABELED"),
        sigmoid, cfg["seed"])
    out = dict(params.to_dict(), pi_u=pi_u, pi_o_tr_hat=prior.value, clamped=prior.clamped,
               sigmoid=sigmoid, features=names, n_iterations=info.n_epochs,
               converged=info.converged, final_loss=info.loss_history[-1])
    path = Path(args.out) / "params.json"
    write_text(path, _dump(out))
    logger.info("a=%.6g pi_o_tr_hat=%.4f -> %s", params.a, prior.value, path)
    return EXIT_OK


# -- eval --------------------------------------------------------------------
def _recipes(cfg, table):
    recipes = cfg["recipes"]
    if not recipes:
        raise ConfigError("config lists no 'recipes'")
    names = [r.get("name", r.get("type")) for r in recipes]
    if len(set(names)) != len(names):
        raise ConfigError(f"recipe names must be unique, got {names}")
    for r in recipes:
        check_columns(table, recipe_columns(r) + list(r.get("features", [])))
    return recipes


def run_eval(table, cfg, alpha, fitted=None):
    data = EvalData(table, cfg["loss_col"])
    reports = []
    for recipe in _recipes(cfg, table):
        fit = fitted if recipe.get("type") == "poscod" else None
        reports.append(evaluate_recipe(data, recipe, alpha, cfg["tpr_min"], cfg["grid"], fit))
    return data, reports


def cmd_eval(args, cfg) -> int:
    table = load_table(args.table, cfg)
    data, reports = run_eval(table, cfg, cfg["alpha"])
    out = Path(args.out)
    curve = [("recipe", "tpr_min", "scod_risk")]
    for rep in reports:
        x, y = rep.pop("curve")
        curve += [(rep["name"], format_float(a), format_float(b)) for a, b in zip(x, y)]
    write_text(out / "curve.csv", _csv(curve))
    summary = {
        "alpha": cfg["alpha"],
        "tpr_min": cfg["tpr_min"],
        "grid": cfg["grid"],
        "n_id": int(data.id_rows.sum()),
        "n_ood": int(data.ood_rows.sum()),
        "conventions": CONVENTIONS,
        "recipes": reports,
    }
    if args.format == "json":
        write_text(out / "summary.json", _dump(summary))
    else:
        rows = [("recipe",) + METRICS + tuple(m + "_pct" for m in METRICS)]
        for rep in reports:
            rows.append((rep["name"],) + tuple(_cell(rep[m]) for m in METRICS)
                        + tuple(_cell(rep[m + "_pct"]) for m in METRICS))
        write_text(out / "summary.csv", _csv(rows))
    for rep in reports:
        logger.info("%-20s AuSRT %s%%", rep["name"], rep["ausrt_pct"])
    return EXIT_OK


# -- sweep -------------------------------------------------------------------
def _parse_values(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values: {exc}") from exc
    if not values:
        raise ConfigError("--values must list at least one value")
    return values


def mixture_from_pools(id_pool, ood_pool, pi_o_tr: float, size: int, seed: int):
    """Unlabelled sample with exactly ``round(pi_o_tr * size)`` OOD rows."""
    n_ood = int(round(pi_o_tr * size))
    n_id = size - n_ood
    if n_ood > len(ood_pool) or n_id > len(id_pool):
        raise DataError(f"pools too small for a mixture of {size} rows at pi_o_tr={pi_o_tr}")
    rng = np.random.default_rng(seed)
    X = np.vstack([id_pool[rng.choice(len(id_pool), n_id, replace=False)],
                   ood_pool[rng.choice(len(ood_pool), n_ood, replace=False)]])
    return X[rng.permutation(size)]


def cmd_sweep(args, cfg) -> int:
    values = _parse_values(args.values)
    table = load_table(args.table, cfg)
    rows = [("axis", "value", "recipe", "alpha", "tpr_min") + METRICS + ("pi_o_tr_hat",)]

    if args.axis == "alpha":
        for v in values:
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"alpha values must lie in [0, 1], got {v}")
        settings = [(v, v, None) for v in values]
    else:
        for v in values:
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"pi_o_tr values must lie in (0, 1], got {v}")
        if not args.train_table:
            raise ConfigError("sweep over pi_o_tr needs --train-table")
        train = load_table(args.train_table, cfg)
        names = _feature_names(args, cfg, train)
        X_id = _rows_features(train, names, "ID")
        # labelled ID rows split in two: the labelled sample and the ID pool of the mixture
        half = len(X_id) // 2
        X_lab, id_pool = X_id[:half], X_id[half:]
        ood_pool = _rows_features(train, names, "OOD")
        size = cfg.get("mixture_size")
        if size is None:
            size = min(min(len(id_pool) / (1.0 - v) if v < 1.0 else np.inf,
                           len(ood_pool) / v) for v in values)
        size = int(size)
        if size <= 0:
            raise DataError("training table has no usable ID/OOD pools for a mixture")
        settings = []
        for i, v in enumerate(values):
            X_unl = mixture_from_pools(id_pool, ood_pool, v, size, cfg["seed"] + i)
            params, pi_u, prior, _ = fit_from_features(
                X_lab, X_unl, cfg.get("sigmoid", "corrected"), cfg["seed"])
            settings.append((v, cfg["alpha"], (params, pi_u, prior.value)))
        for r in cfg["recipes"]:
            if r.get("type") == "poscod":
                r.setdefault("features", names)

    for value, alpha, fitted in settings:
        _, reports = run_eval(table, cfg, alpha, fitted)
        for rep in reports:
            hat = rep["recipe"].get("pi_o_tr_hat")
            rows.append((args.axis, format_float(value), rep["name"], format_float(alpha),
                         format_float(cfg["tpr_min"]))
                        + tuple(_cell(rep[m]) for m in METRICS) + (_cell(hat),))
    path = Path(args.out) / "sweep.csv"
    write_text(path, _csv(rows))
    logger.info("wrote %d rows to %s", len(rows) - 1, path)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="json",
                        help="format of the eval summary")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")

    p = argparse.ArgumentParser(prog="scodkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="sample a synthetic world to CSV")
    s.add_argument("--world", help="world JSON")
    s.add_argument("--n-id", type=int, default=1000)
    s.add_argument("--n-ood", type=int, default=1000)
    s.add_argument("--n-mixture", type=int, default=0)
    s.add_argument("--pi-o-tr", type=float, default=0.5)

    f = sub.add_parser("fit", parents=[common], help="fit the ID-vs-unlabelled posterior")
    f.add_argument("--table", required=True)
    f.add_argument("--features", help="comma-separated feature columns")
    f.add_argument("--sigmoid", choices=("corrected", "standard"))

    e = sub.add_parser("eval", parents=[common], help="evaluate score recipes")
    e.add_argument("--table", required=True)
    e.add_argument("--alpha", type=float)
    e.add_argument("--tpr-min", type=float)

    w = sub.add_parser("sweep", parents=[common], help="evaluate across alpha or pi_o_tr")
    w.add_argument("--table", required=True, help="evaluation table (held fixed)")
    w.add_argument("--axis", choices=("alpha", "pi_o_tr"), required=True)
    w.add_argument("--values", required=True, help="comma-separated axis values")
    w.add_argument("--train-table", help="ID and OOD pools for pi_o_tr sweeps")
    w.add_argument("--features", help="comma-separated feature columns")
    w.add_argument("--tpr-min", type=float)
    return p


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, InvalidArgumentError, UnsupportedOracleError) as exc:
        code, err = EXIT_CONFIG, exc
    except DataError as exc:
        code, err = EXIT_DATA, exc
    except (FitDivergedError, DegenerateScoreError, FloatingPointError) as exc:
        code, err = EXIT_NUMERIC, exc
    except ScodError as exc:
        code, err = EXIT_CONFIG, exc
    print(f"scodkit: error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
