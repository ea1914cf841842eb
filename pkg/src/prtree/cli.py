"""Command-line interface: fit, predict, cross-validate, and bias-variance
experiments over CSV datasets.

Config precedence: built-in defaults, then a JSON config file (--config),
then explicit command-line flags. All randomness flows from --seed through
named streams, so repeated runs produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import CsvFormatError, Dataset, RngSpec, load_csv
from .ensemble import BoostedEnsemble, Forest, fit_prgbt, fit_prrf
from .evaluate import (
    LearnerSpec,
    bias_variance,
    cross_validate,
    make_cv_plan,
    tune_sigma,
    write_biasvar_csv,
    write_cv_csv,
)
from .pbart import PBartChain, PBartHyper, fit_pbart
from .tree import PRTree, StoppingRule, fit_prtree

log = logging.getLogger("prtree")

DEFAULTS = {
    "model": "tree",
    "target": "y",
    "seed": 0,
    "folds": 10,
    "trees": None,       # model-dependent: 100 for rf, 50 for gbt/pbart
    "shrinkage": 1.0,
    "iters": 1000,
    "burn": 200,
    "alpha": 0.95,
    "beta": 2.0,
    "nu": 3.0,
    "min_leaf": 0.10,
    "max_leaves": None,
    "sigma": None,
    "trials": 20,
    "out": None,
}


class ConfigError(ValueError):
    pass


def _parse_sigma(text, p):
    parts = [v.strip() for v in str(text).split(",") if v.strip() != ""]
    try:
        values = [float(v) for v in parts]
    except ValueError:
        raise ConfigError(f"--sigma must be numeric, got {text!r}") from None
    if any(v < 0 for v in values):
        raise ConfigError("--sigma entries must be non-negative")
    if len(values) == 1:
        return np.full(p, values[0])
    if len(values) != p:
        raise ConfigError(f"--sigma needs 1 or {p} entries, got {len(values)}")
    return np.array(values)


def _parse_int_list(text):
    try:
        return [int(v.strip()) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from None


def _merge_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS) - {"data", "model_file"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in list(cfg) + ["data", "model_file"]:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _default_trees(model: str) -> int:
    return {"rf": 100, "gbt": 50, "pbart": 50}.get(model, 1)


def _load_dataset(cfg) -> Dataset:
    if not cfg.get("data"):
        raise ConfigError("--data is required")
    return load_csv(cfg["data"], cfg["target"])


def _rule(cfg) -> StoppingRule:
    return StoppingRule(
        min_leaf_fraction=float(cfg["min_leaf"]),
        max_leaves=int(cfg["max_leaves"]) if cfg["max_leaves"] is not None else None,
    )


def _spec(cfg) -> LearnerSpec:
    model = cfg["model"]
    if model not in ("tree", "rf", "gbt", "pbart"):
        raise ConfigError(f"unknown model {model!r}")
    n_trees = int(cfg["trees"]) if cfg["trees"] is not None else _default_trees(model)
    hyper = None
    if model == "pbart":
        hyper = PBartHyper(
            m=n_trees,
            alpha=float(cfg["alpha"]),
            beta=float(cfg["beta"]),
            nu=float(cfg["nu"]),
            it_burn=int(cfg["burn"]),
            it_max=int(cfg["iters"]),
        )
    return LearnerSpec(
        kind=model,
        n_trees=n_trees,
        shrinkage=float(cfg["shrinkage"]),
        rule=_rule(cfg),
        hyper=hyper,
    )


def _fit_full(cfg, d: Dataset, rng: RngSpec):
    """Fit the configured model on the whole dataset, tuning sigma on an
    internal 65/15-style split when no explicit --sigma is given."""
    spec = _spec(cfg)
    if cfg["sigma"] is not None:
        sigma = _parse_sigma(cfg["sigma"], d.p)
    else:
        gen = rng.stream(999).generator()
        perm = gen.permutation(d.n)
        cut = max(1, int(round(0.8125 * d.n)))
        if cut >= d.n:
            cut = d.n - 1
        learner = lambda tr, s: fit_prtree(tr, s, spec.rule)
        sigma = tune_sigma(d.subset(perm[:cut]), d.subset(perm[cut:]), learner)
        log.info("tuned sigma: %s", sigma.tolist())
    if spec.kind == "tree":
        return fit_prtree(d, sigma, spec.rule)
    if spec.kind == "rf":
        return fit_prrf(d, spec.n_trees, sigma, spec.rule, rng=rng)
    if spec.kind == "gbt":
        return fit_prgbt(d, spec.n_trees, sigma, spec.rule, shrinkage=spec.shrinkage)
    return fit_pbart(d, spec.hyper, sigma, rng, rule=spec.rule)


def _cmd_fit(cfg) -> int:
    d = _load_dataset(cfg)
    model = _fit_full(cfg, d, RngSpec(int(cfg["seed"])))
    out = cfg["out"] or "model.json"
    Path(out).write_text(model.to_json() + "\n")
    log.info("wrote model to %s", out)
    return 0


def _load_model(path):
    text = Path(path).read_text()
    obj = json.loads(text)
    kind = obj.get("kind", "tree")
    loader = {
        "tree": PRTree.from_json,
        "forest": Forest.from_json,
        "gbt": BoostedEnsemble.from_json,
        "pbart": PBartChain.from_json,
    }.get(kind)
    if loader is None:
        raise ConfigError(f"unrecognized model kind {kind!r} in {path}")
    return loader(text)


def _cmd_predict(cfg) -> int:
    if not cfg.get("model_file"):
        raise ConfigError("--model-file is required")
    model = _load_model(cfg["model_file"])
    # the target column is optional at prediction time; drop it if present
    try:
        d = load_csv(cfg["data"], cfg["target"])
        X = d.features
    except CsvFormatError as exc:
        if "target column not found" not in str(exc):
            raise
        rows = list(csv.reader(open(cfg["data"], newline="", encoding="utf-8")))
        X = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    preds = model.predict(X)
    out = cfg["out"] or "predictions.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "prediction"])
        for i, v in enumerate(preds):
            w.writerow([i, repr(float(v))])
    log.info("wrote %d predictions to %s", len(preds), out)
    return 0


def _cmd_cv(cfg) -> int:
    d = _load_dataset(cfg)
    spec = _spec(cfg)
    if cfg["sigma"] is not None:
        spec.sigma = _parse_sigma(cfg["sigma"], d.p)
    plan = make_cv_plan(d, n_folds=int(cfg["folds"]))
    result = cross_validate(d, spec, plan, RngSpec(int(cfg["seed"])))
    name = Path(cfg["data"]).stem
    rows = [
        (name, cfg["model"], i, rmse) for i, rmse in enumerate(result.fold_rmse)
    ]
    out = cfg["out"] or "cv_results.csv"
    write_cv_csv(out, rows)
    log.info(
        "cv rmse mean %.6g std %.6g -> %s", result.mean, result.std, out
    )
    return 0


def _cmd_biasvar(cfg) -> int:
    d = _load_dataset(cfg)
    model = cfg["model"]
    if model == "tree":
        knobs = (
            _parse_int_list(cfg["max_leaves"]) if cfg["max_leaves"] is not None else [2, 4, 8, 16]
        )
    else:
        knobs = _parse_int_list(cfg["trees"]) if cfg["trees"] is not None else [1, 10, 50]
    sigma = _parse_sigma(cfg["sigma"], d.p) if cfg["sigma"] is not None else None
    rng = RngSpec(int(cfg["seed"]))
    rows = []
    for knob in knobs:
        knob_cfg = dict(cfg)
        if model == "tree":
            knob_cfg["max_leaves"] = knob
        else:
            knob_cfg["trees"] = knob
        spec = _spec(knob_cfg)
        spec.sigma = sigma
        report = bias_variance(d, spec, int(cfg["trials"]), rng)
        log.info(
            "%s knob=%d bias_sq=%.6g variance=%.6g mse=%.6g",
            model, knob, report.bias_sq, report.variance, report.mse,
        )
        rows.append((model, knob, report.bias_sq, report.variance, report.mse))
    out = cfg["out"] or "biasvar_results.csv"
    write_biasvar_csv(out, rows)
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--data", help="input CSV path")
    p.add_argument("--target", help="target column name (default: y)")
    p.add_argument("--model", choices=["tree", "rf", "gbt", "pbart"])
    p.add_argument("--seed", type=int)
    p.add_argument("--trees", help="tree count (comma list for biasvar sweeps)")
    p.add_argument("--shrinkage", type=float)
    p.add_argument("--iters", type=int, help="sampler iterations")
    p.add_argument("--burn", type=int, help="burn-in iterations")
    p.add_argument("--alpha", type=float, help="depth prior base")
    p.add_argument("--beta", type=float, help="depth prior decay")
    p.add_argument("--nu", type=float, help="noise prior degrees of freedom")
    p.add_argument("--min-leaf", dest="min_leaf", type=float, help="min leaf fraction")
    p.add_argument("--max-leaves", dest="max_leaves", help="leaf cap (comma list for sweeps)")
    p.add_argument("--sigma", help="noise scale: one value or p comma-separated")
    p.add_argument("--folds", type=int)
    p.add_argument("--trials", type=int, help="bias-variance subsample count")
    p.add_argument("--out", help="output path")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prtree",
        description="Probabilistic regression trees: fit, predict, and benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("fit", "fit a model and write it as JSON"),
        ("predict", "predict with a fitted model JSON"),
        ("cv", "stratified cross-validation RMSE"),
        ("biasvar", "bias-variance decomposition sweep"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        if name == "predict":
            p.add_argument("--model-file", dest="model_file", help="fitted model JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s %(message)s",
    )
    try:
        cfg = _merge_config(args)
        handler = {
            "fit": _cmd_fit,
            "predict": _cmd_predict,
            "cv": _cmd_cv,
            "biasvar": _cmd_biasvar,
        }[args.command]
        return handler(cfg)
    except (ConfigError, CsvFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
