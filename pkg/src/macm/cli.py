"""Command-line entry point: ``macm <train|cv|export-shapes|expand|predict>``."""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from importlib import resources
from pathlib import Path


from . import data as data_mod
from . import interpret, models, training
from .errors import MacmError, ValidationError

log = logging.getLogger("macm")

PRESETS = list(models.MODEL_KINDS) + ["macm_nn_reduced", "mp_nn_reduced", "ap_nn_reduced"]


def _read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: invalid JSON ({exc})") from None


def _train_preset(name: str) -> dict:
    res = resources.files("macm") / "presets" / f"train_{name}.json"
    return json.loads(res.read_text(encoding="utf-8"))


def preset_defaults(preset: str, task: str) -> dict:
    """Model and training defaults for one named preset and task."""
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    reduced = preset.endswith("_reduced")
    kind = preset[: -len("_reduced")] if reduced else preset
    model = {"kind": kind}
    if kind.endswith("_nn"):
        train = _train_preset("nn_reduced" if reduced else
                              ("nn_binary" if task == "binary" else "nn_regression"))
        if reduced:
            model.update(hidden_layers=3, width=16)
    else:
        train = _train_preset("poly")
    return {"model": model, "train": train}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class UsageError(MacmError):
    """Invalid run configuration; reported with exit status 2."""


def resolve_config(args) -> dict:
    """Effective run config after presets, the config file and CLI flags."""
    try:
        return _resolve_config(args)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None


def _resolve_config(args) -> dict:
    raw = _read_json(args.config) if getattr(args, "config", None) else {}
    preset = getattr(args, "preset", None) or raw.get("preset")
    task = raw.get("task", "regression")
    cfg = {
        "task": task,
        "seed": 0,
        "test_fraction": 0.2,
        "cv": {"folds": 5},
        "model": {"kind": "macm_poly"},
        "train": {},
        "dataset": {},
        "output_dir": "macm_out",
    }
    if preset:
        cfg = _merge(cfg, preset_defaults(preset, task))
        cfg["preset"] = preset
    cfg = _merge(cfg, {k: v for k, v in raw.items() if k != "preset"})
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "folds", None) is not None:
        cfg["cv"]["folds"] = args.folds
    if getattr(args, "out", None):
        cfg["output_dir"] = args.out
    if getattr(args, "data", None):
        cfg["dataset"]["path"] = args.data
    # normalize through the typed configs so defaults are written out explicitly
    cfg["model"]["task"] = cfg["task"]
    bp = models.ModelBlueprint.from_dict(cfg["model"])
    cfg["model"] = bp.to_dict()
    train_d = dict(cfg["train"])
    train_d["loss"] = training.loss_for_task(cfg["task"])
    train_d["seed"] = cfg["seed"]
    cfg["train"] = training.TrainConfig.from_dict(train_d).to_dict()
    cfg["dataset"] = data_mod.DatasetConfig.from_dict(cfg["dataset"]).to_dict()
    return cfg


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load_data(cfg: dict):
    dcfg = data_mod.DatasetConfig.from_dict(cfg["dataset"])
    raw = dcfg.load()
    if cfg["task"] == "binary" and not raw.is_binary():
        raise ValidationError("binary task needs 0/1 targets")
    normalized, _ = data_mod.minmax_normalize(raw)
    return normalized


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    data = _load_data(cfg)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    train_idx, test_idx = data_mod.train_test_split(data.n_samples, cfg["test_fraction"], cfg["seed"])
    bp = models.ModelBlueprint.from_dict(cfg["model"])
    tcfg = training.TrainConfig.from_dict(cfg["train"])
    model = bp.build(data.n_features, cfg["seed"])
    model.feature_specs = data.specs
    train_data, test_data = data.take(train_idx), data.take(test_idx)
    _, hist = training.train(model, train_data, tcfg)
    metric = training.metric_for_task(cfg["task"])
    metrics = {
        "metric": metric,
        metric: training.evaluate(model, test_data, metric),
        "train_" + metric: training.evaluate(model, train_data, metric),
        "n_train": int(train_data.n_samples),
        "n_test": int(test_data.n_samples),
        "final_train_loss": hist.losses[-1],
    }
    models.save(model, out / "model.json")
    _write_json(out / "metrics.json", metrics)
    (out / "loss_history.csv").write_text(hist.to_csv(), encoding="utf-8")
    _write_json(out / "effective_config.json", cfg)
    print(f"{metric} (test) = {metrics[metric]:.6g}; artifacts in {out}")
    return 0


def cmd_cv(args) -> int:
    cfg = resolve_config(args)
    data = _load_data(cfg)
    folds = data_mod.kfold_split(data.n_samples, int(cfg["cv"]["folds"]), cfg["seed"])
    bp = models.ModelBlueprint.from_dict(cfg["model"])
    tcfg = training.TrainConfig.from_dict(cfg["train"])
    metrics, fold_models, hists = training.cross_validate(bp, data, folds, tcfg)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for f, (m, h) in enumerate(zip(fold_models, hists)):
        fdir = out / f"fold_{f + 1}"
        fdir.mkdir(exist_ok=True)
        models.save(m, fdir / "model.json")
        (fdir / "loss_history.csv").write_text(h.to_csv(), encoding="utf-8")
        _write_json(fdir / "metrics.json", {"metric": metrics.metric,
                                            metrics.metric: metrics.per_fold[f],
                                            "train_" + metrics.metric: metrics.train_per_fold[f]})
    _write_json(out / "metrics.json", metrics.to_dict())
    _write_json(out / "effective_config.json", cfg)
    print(f"{metrics.metric} = {metrics.formatted()} over {folds.fold_count} folds; artifacts in {out}")
    return 0


def _alpha_data(args, fold_models):
    """Normalized data matrices (one per model) for the alpha ranges."""
    if not args.config and not args.data:
        raise ValidationError("export-shapes needs the dataset (--data CSV or --config run config) "
                              "to compute the dynamic alpha ranges")
    specs = fold_models[0].feature_specs
    if specs is None:
        raise ValidationError("model file carries no feature specs; cannot read the dataset")
    if args.config:
        cfg = resolve_config(args)
        data = _load_data(cfg)
        X = data.features
        n_folds = int(cfg["cv"]["folds"])
        if len(fold_models) == n_folds and len(fold_models) > 1:
            folds = data_mod.kfold_split(data.n_samples, n_folds, cfg["seed"])
            return [X[folds.train_indices(f)] for f in range(n_folds)]
        return [X] * len(fold_models)
    X_raw, _ = data_mod.load_features(args.data, specs)
    X, n_clamped = data_mod.apply_normalization(X_raw, specs)
    if n_clamped:
        log.warning("%d row(s) outside the stored feature range were clamped", n_clamped)
    return [X] * len(fold_models)


def cmd_export_shapes(args) -> int:
    fold_models = [models.load(p) for p in args.models]
    Xs = _alpha_data(args, fold_models)
    art = interpret.build_curve_artifacts(fold_models, Xs, n_points=args.grid_points)
    out = Path(args.out or "macm_curves")
    written = interpret.export_curves(art, out, args.format)
    for w in art.summary["warnings"]:
        log.warning(w)
    print(f"wrote {len(written)} file(s) to {out}")
    return 0


def cmd_expand(args) -> int:
    model = models.load(args.model)
    terms = models.expand_terms(model)
    lines = ["exponents,coefficient"]
    for e, c in sorted(terms.items()):
        lines.append(f"{' '.join(str(p) for p in e)},{float(c)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    model = models.load(args.model)
    specs = model.feature_specs
    if specs is None:
        raise ValidationError("model file carries no feature specs; cannot map CSV columns")
    if len(specs) != model.n_features:
        raise ValidationError(f"model has {model.n_features} features but {len(specs)} feature specs")
    X_raw, rows = data_mod.load_features(args.data, specs)
    X, n_clamped = data_mod.apply_normalization(X_raw, specs)
    if n_clamped:
        log.warning("%d row(s) had values outside the training range and were clamped", n_clamped)
    out = model.forward(X)
    header = ["row", "prediction"] + (["probability"] if model.task == "binary" else [])
    lines = [",".join(header)]
    prob = model.predict(X) if model.task == "binary" else None
    for r in range(out.size):
        cells = [str(int(rows[r])), repr(float(out[r]))]
        if prob is not None:
            cells.append(repr(float(prob[r])))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    from . import checks  # noqa: PLC0415

    results = checks.run_all(seed=args.seed or 0)
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="macm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{train,cv,export-shapes,expand,predict}")
    sub.required = True

    def run_flags(sp):
        sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--preset", choices=PRESETS, help="model/training preset")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--data", help="CSV path (overrides dataset.path)")

    sp = sub.add_parser("train", help="train on an 80/20 split")
    run_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("cv", help="k-fold cross-validation")
    run_flags(sp)
    sp.add_argument("--folds", type=int)
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("export-shapes", help="export normalized and dynamic shape curves")
    sp.add_argument("models", nargs="+", help="model JSON files, one per fold")
    sp.add_argument("--config", help="run config (dataset, and fold layout for alpha ranges)")
    sp.add_argument("--data", help="CSV with the model's feature columns")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--folds", type=int)
    sp.add_argument("--preset", choices=PRESETS)
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--grid-points", type=int, default=interpret.DEFAULT_GRID_POINTS)
    sp.set_defaults(func=cmd_export_shapes)

    sp = sub.add_parser("expand", help="print the monomial expansion of a polynomial model")
    sp.add_argument("model")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_expand)

    sp = sub.add_parser("predict", help="predict on a CSV of raw features")
    sp.add_argument("model")
    sp.add_argument("data")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("verify")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MacmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
