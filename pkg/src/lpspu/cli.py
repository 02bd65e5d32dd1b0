"""Command line entry point: ``lpspu <subcommand> [--flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, dump_config, load_config, override, preset
from .datasets import gen_blobs, gen_circles, gen_two_moons, label_positives, read_pu_csv, write_csv
from .experiments import evaluate, load_task, train_and_select
from .model import atomic_write, load_model, save_model
from .runtime import tune_allocator
from .sampling import sample_batch, samples_csv
from .selection import AgreementMatrix, Selection, pu_strata, spearman, stratified_folds, tune

log = logging.getLogger("lpspu")


class UsageError(Exception):
    pass


def _write_text(path, text: str) -> None:
    atomic_write(path, text.encode())


def _resolve(args) -> RunConfig:
    cfg = preset(args.preset) if getattr(args, "preset", None) else RunConfig()
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        cfg = load_config(args.config, cfg)
    sets = list(getattr(args, "set", None) or [])
    if getattr(args, "workers", None):
        sets.append(f"run.workers={args.workers}")
    if getattr(args, "seed", None) is not None:
        sets.append(f"run.seed={args.seed}")
    return override(cfg, sets) if sets else cfg


def _check_data(path):
    if path and not os.path.exists(path):
        raise UsageError(f"data path not found: {path}")


# --- synth ----------------------------------------------------------------


def cmd_synth(args) -> int:
    gens = {"moons": lambda n, s: gen_two_moons(n, args.noise, s),
            "circles": lambda n, s: gen_circles(n, args.noise, args.factor, s),
            "blobs": lambda n, s: gen_blobs(n, std=args.noise, seed=s)}
    ds = label_positives(gens[args.kind](args.n, args.seed), args.labeled, args.seed + 1)
    write_csv(args.out, ds)
    if args.test_out:
        write_csv(args.test_out, gens[args.kind](args.test_n, args.seed + 2))
    print(f"wrote {len(ds)} samples ({ds.n_labeled} labeled) to {args.out}")
    return 0


# --- train ----------------------------------------------------------------


def _selection_json(sel: Selection) -> str:
    return json.dumps({"members": list(sel.members), "estimate": sel.estimate,
                       "agreement": sel.matrix.values.tolist()}, indent=1)


def cmd_train(args) -> int:
    cfg = _resolve(args)
    data_path = args.data or cfg.data.path
    if cfg.data.kind not in ("moons", "circles", "blobs") or args.data:
        _check_data(data_path)
    if args.data:
        cfg = override(cfg, [f"data.path={args.data}"])
    os.makedirs(args.out_dir, exist_ok=True)
    _write_text(os.path.join(args.out_dir, "config.ini"), dump_config(cfg))
    train, test = load_task(cfg, args.data if cfg.data.kind in ("moons", "circles", "blobs") else None)
    if args.fold is not None:
        folds = stratified_folds(pu_strata(train), cfg.select.folds, cfg.run.seed)
        if not 0 <= args.fold < len(folds):
            raise UsageError(f"--fold must be in [0, {len(folds) - 1}]")
        test_idx = folds[args.fold]
        train, test = train.subset(np.setdiff1d(np.arange(len(train)), test_idx)), train.subset(test_idx)
    res = train_and_select(cfg, train)
    mdir = os.path.join(args.out_dir, "models")
    ldir = os.path.join(args.out_dir, "logs")
    os.makedirs(mdir, exist_ok=True)
    os.makedirs(ldir, exist_ok=True)
    for i, (m, lg) in enumerate(zip(res.models, res.logs)):
        save_model(m, os.path.join(mdir, f"member_{i}.lps"))
        _write_text(os.path.join(ldir, f"member_{i}.jsonl"), "".join(json.dumps(r) + "\n" for r in lg))
    _write_text(os.path.join(args.out_dir, "agreement.csv"), res.selection.matrix.to_csv())
    _write_text(os.path.join(args.out_dir, "selection.json"), _selection_json(res.selection))
    if test is not None:
        write_csv(os.path.join(args.out_dir, "test.csv"), test)
    sel = res.selection
    summary = (f"members trained: {len(res.models)}\nselected: {', '.join(map(str, sel.members))}\n"
               f"estimated accuracy: {sel.estimate:.4f}\n")
    _write_text(os.path.join(args.out_dir, "selection.txt"), summary)
    print(summary, end="")
    return 0


# --- eval -----------------------------------------------------------------


def _load_run(run_dir):
    sel_path = os.path.join(run_dir, "selection.json")
    if not os.path.exists(sel_path):
        raise UsageError(f"{run_dir} is not a training run (no selection.json)")
    with open(sel_path) as f:
        sel = json.load(f)
    mdir = os.path.join(run_dir, "models")
    files = sorted(os.listdir(mdir), key=lambda s: int(s.split("_")[1].split(".")[0]))
    return [load_model(os.path.join(mdir, f)) for f in files], sel


def cmd_eval(args) -> int:
    models, sel = _load_run(args.run_dir)
    path = args.data or os.path.join(args.run_dir, "test.csv")
    _check_data(path)
    test = read_pu_csv(path)
    metric = args.metric or _run_metric(args.run_dir)
    score, per = evaluate(models, sel["members"], test, metric)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scope", "metric", "value"])
    w.writerow(["selected", metric, f"{score:.6f}"])
    w.writerow(["estimate", "agreement", f"{sel['estimate']:.6f}"])
    for i, v in enumerate(per):
        w.writerow([f"member_{i}", metric, f"{v:.6f}"])
    _write_text(os.path.join(args.run_dir, "eval.csv"), buf.getvalue())
    print(f"selected members {sel['members']}: {metric} = {score:.4f} (estimated accuracy {sel['estimate']:.4f})")
    print("per member: " + ", ".join(f"{v:.4f}" for v in per))
    return 0


def _run_metric(run_dir) -> str:
    cfg_path = os.path.join(run_dir, "config.ini")
    return load_config(cfg_path).select.metric if os.path.exists(cfg_path) else "accuracy"


# --- tune -----------------------------------------------------------------


def cmd_tune(args) -> int:
    cfg = _resolve(args)
    if args.data:
        cfg = override(cfg, [f"data.path={args.data}"])
    _check_data(cfg.data.path if cfg.data.kind not in ("moons", "circles", "blobs") else args.data)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_text(os.path.join(args.out_dir, "config.ini"), dump_config(cfg))
    ds, _ = load_task(cfg, args.data if cfg.data.kind in ("moons", "circles", "blobs") else None)
    grid = cfg.grid() or [{}]
    res = tune(ds, grid, cfg.train_config(), cfg.select.folds, cfg.select.models_per_cell, cfg.run.seed,
               cfg.model.repeat, cfg.data.margin, validate=True, store=os.path.join(args.out_dir, "cells.jsonl"))
    _write_text(os.path.join(args.out_dir, "tuning.csv"), res.to_csv())
    ids = sorted(res.estimates)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tuple_id", "estimated_accuracy", "test_f1"])
    for t in ids:
        w.writerow([t, f"{res.estimates[t]:.6f}", f"{res.f1s.get(t, float('nan')):.6f}"])
    text = f"chosen tuple {res.chosen}: {res.chosen_params} estimate {res.estimates[res.chosen]:.4f}\n"
    if len(ids) >= 3 and all(t in res.f1s for t in ids):
        rho, p = spearman([res.estimates[t] for t in ids], [res.f1s[t] for t in ids])
        text += f"spearman(estimate, test f1) rho={rho:.4f} p={p:.4g}\n"
    _write_text(os.path.join(args.out_dir, "correlation.csv"), buf.getvalue())
    _write_text(os.path.join(args.out_dir, "summary.txt"), text)
    print(text, end="")
    return 0


# --- sample ---------------------------------------------------------------


def cmd_sample(args) -> int:
    models, sel = _load_run(args.run_dir)
    if args.selected:
        models = [models[i] for i in sel["members"]]
    cfg_path = os.path.join(args.run_dir, "config.ini")
    sc = load_config(cfg_path).sample if os.path.exists(cfg_path) else RunConfig().sample
    pick = lambda flag, key: getattr(sc, key) if flag is None else flag
    batch = sample_batch(models, pick(args.target, "target"), pick(args.count, "count"), args.seed,
                         pick(args.threshold, "threshold"), pick(args.max_attempts_factor, "max_attempts_factor"),
                         pick(args.grid, "grid"))
    names = models[0].preprocessing.names or None
    _write_text(args.out, samples_csv(batch, names))
    stats = (f"target: {batch.target}\nrequested: {batch.requested}\naccepted: {batch.n_accepted}\n"
             f"attempts: {batch.attempts}\nacceptance_rate: {batch.acceptance_rate:.6f}\n"
             f"complete: {str(batch.complete).lower()}\n")
    _write_text(args.out + ".stats.txt", stats)
    print(stats, end="")
    return 0


# --- report ---------------------------------------------------------------


def cmd_report(args) -> int:
    if not args.run_dirs:
        raise UsageError("report needs at least one run directory")
    groups: dict[tuple, list[float]] = {}
    for rd in args.run_dirs:
        path = os.path.join(rd, "eval.csv")
        if not os.path.exists(path):
            raise UsageError(f"{rd}: no eval.csv (run `lpspu eval` first)")
        cfg = load_config(os.path.join(rd, "config.ini"))
        task = _task_name(cfg)
        with open(path) as f:
            for row in csv.DictReader(f):
                if row["scope"] == "selected":
                    groups.setdefault((task, row["metric"]), []).append(float(row["value"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "metric", "runs", "mean", "std"])
    lines = []
    for (task, metric), vals in sorted(groups.items()):
        mean, std = float(np.mean(vals)), float(np.std(vals))
        w.writerow([task, metric, len(vals), f"{mean:.6f}", f"{std:.6f}"])
        lines.append(f"{task:40s} {metric:8s} {mean:.2f} ± {std:.2f} (n={len(vals)})")
    text = buf.getvalue()
    if args.out:
        _write_text(args.out, text)
    print("\n".join(lines))
    return 0


def _task_name(cfg: RunConfig) -> str:
    d = cfg.data
    if d.kind == "uci":
        return f"{os.path.splitext(os.path.basename(d.path))[0]}@{d.fraction:g}"
    if d.kind.startswith("mnist"):
        return f"{d.kind}:{d.classes}@Np={d.labeled}"
    return f"{d.kind}"


# --- parser ---------------------------------------------------------------


def _config_flags(p):
    p.add_argument("--config", help="sectioned key=value configuration file")
    p.add_argument("--preset", help="named preset (moons, mnist, or a UCI dataset name)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one configuration key")
    p.add_argument("--seed", type=int, help="global seed (run.seed)")
    p.add_argument("--workers", type=int, help="parallel ensemble members")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lpspu", description="Tensor-network positive-unlabeled learning",
                                 allow_abbrev=False)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic PU dataset", allow_abbrev=False)
    p.add_argument("--kind", required=True, choices=("moons", "circles", "blobs"))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--labeled", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--factor", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", help="also write a held-out labeled test set")
    p.add_argument("--test-n", type=int, default=500)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train an ensemble and select the best-agreeing pair", allow_abbrev=False)
    _config_flags(p)
    p.add_argument("--data", help="dataset path (PU CSV, UCI CSV or MNIST directory)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--fold", type=int, help="hold out this stratified fold as test.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained run on labeled test data", allow_abbrev=False)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--data", help="PU CSV with a truth column (default: <run-dir>/test.csv)")
    p.add_argument("--metric", choices=("accuracy", "f1"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="grid search by agreement (resumable)", allow_abbrev=False)
    _config_flags(p)
    p.add_argument("--data")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("sample", help="generate class-conditional samples", allow_abbrev=False)
    p.add_argument("--run-dir", required=True)
    # unset flags fall back to the run's [sample] section
    p.add_argument("--class", dest="target", choices=("positive", "negative"))
    p.add_argument("--count", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int)
    p.add_argument("--max-attempts-factor", type=int)
    p.add_argument("--selected", action="store_true", help="use only the selected members")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("report", help="aggregate evaluated runs into mean ± std tables", allow_abbrev=False)
    p.add_argument("--run-dirs", nargs="*", default=[])
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    tune_allocator()
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"lpspu {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # reported, nonzero exit
        print(f"lpspu {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
