"""End-to-end pipelines shared by the CLI, scripts and acceptance tests."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .datasets import (PuData, PuDataset, PuTaskSpec, build_ovo_task, build_ovr_task, build_pu_task,
                       gen_blobs, gen_circles, gen_two_moons, image_augmenter, label_positives, load_csv,
                       load_mnist_idx, read_pu_csv)
from .embedding import PreprocessSpec, fit_preprocess
from .model import PulModel
from .selection import Selection, pair_metric, predictions, select_models, stratified_folds, pu_strata, METRICS
from .training import train_ensemble

log = logging.getLogger(__name__)

MNIST_FILES = ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz")


def _synthetic(cfg: RunConfig, n: int, seed: int) -> PuDataset:
    d = cfg.data
    if d.kind == "moons":
        return gen_two_moons(n, d.noise, seed)
    if d.kind == "circles":
        return gen_circles(n, d.noise, d.factor, seed)
    return gen_blobs(n, std=d.noise if d.noise > 0 else 0.5, seed=seed)


def mnist_arrays(path: str):
    imgs, labs = (os.path.join(path, f) for f in MNIST_FILES)
    if not os.path.exists(imgs):
        raise FileNotFoundError(f"MNIST files not found under {path!r}; run scripts/fetch_mnist.py")
    return load_mnist_idx(imgs, labs)


def load_task(cfg: RunConfig, data_path: str | None = None):
    """``(train, test)`` datasets for a config; ``test`` is ``None`` when absent."""
    d, seed = cfg.data, cfg.run.seed
    path = data_path or d.path
    if d.kind in ("moons", "circles", "blobs"):
        if data_path:
            return read_pu_csv(data_path), None
        train = label_positives(_synthetic(cfg, d.n, seed), d.labeled, seed + 1)
        test = _synthetic(cfg, d.test_n, seed + 2) if d.test_n > 0 else None
        return train, test
    if d.kind == "pu-csv":
        return read_pu_csv(path), None
    if d.kind == "uci":
        table, labels = load_csv(path, d.label_column, d.missing_token)
        return build_pu_task(table, labels, PuTaskSpec(d.fraction, seed=seed, drop_missing=d.drop_missing)), None
    images, labels = mnist_arrays(path)
    classes = [int(c) for c in d.classes.split(",")]
    if d.kind == "mnist-ovo":
        if len(classes) != 2:
            raise ValueError("[data] classes must name two digits for one-vs-one")
        return build_ovo_task(images, labels, classes[0], classes[1], d.labeled, d.n_train, d.n_test, seed)
    return build_ovr_task(images, labels, classes[0], d.labeled, d.n_train, d.n_test, seed)


def fit_spec(cfg: RunConfig, ds: PuDataset) -> PreprocessSpec:
    if cfg.data.kind.startswith("mnist"):
        # pixels already live on [0, 1]; constant pixels are kept so N = 400
        return PreprocessSpec.identity(ds.table.columns, cfg.model.repeat)
    return fit_preprocess(ds.table, repeat=cfg.model.repeat, margin=cfg.data.margin)


def training_data(cfg: RunConfig, ds: PuDataset, spec: PreprocessSpec) -> PuData:
    view = ds.training_view(spec)
    if cfg.data.kind.startswith("mnist") and cfg.data.augment and ds.images is not None:
        return replace(view, augment=image_augmenter(ds.images, cfg.run.seed))
    return view


@dataclass
class RunResult:
    models: list[PulModel]
    logs: list[list[dict]]
    selection: Selection
    spec: PreprocessSpec


def train_and_select(cfg: RunConfig, ds: PuDataset) -> RunResult:
    spec = fit_spec(cfg, ds)
    data = training_data(cfg, ds, spec)
    models, logs = train_ensemble(data, cfg.train_config(), spec)
    sel = select_models(models, data.x, data.mask, cfg.select.k)
    return RunResult(models, logs, sel, spec)


def evaluate(models: list[PulModel], members, test: PuDataset, metric: str):
    """``(selected-group metric, per-model metrics)`` on a labeled test set."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    spec = models[0].preprocessing
    missing = [c for c in spec.names if c not in test.table.columns]
    if missing:
        raise ValueError(f"test data lacks attribute(s) {missing}")
    x, mask = test.training_view(spec).x, test.training_view(spec).mask
    preds = predictions(models, x, mask)
    per = [float(METRICS[metric](p, test.truth)) for p in preds]
    return float(np.mean([per[i] for i in members])), per


@dataclass
class FoldResult:
    fold: int
    score: float
    estimate: float
    members: tuple[int, ...]


def cross_validate(cfg: RunConfig, ds: PuDataset, folds: int | None = None, only=None) -> list[FoldResult]:
    """Stratified k-fold evaluation of the selected pair.

    ``only`` restricts the run to a subset of fold indices.
    """
    k = folds or cfg.select.folds
    split = stratified_folds(pu_strata(ds), k, cfg.run.seed)
    out = []
    for f, test_idx in enumerate(split):
        if only is not None and f not in only:
            continue
        train_idx = np.setdiff1d(np.arange(len(ds)), test_idx)
        train, test = ds.subset(train_idx), ds.subset(test_idx)
        fold_cfg = replace(cfg, run=replace(cfg.run, seed=cfg.run.seed + 1000 * (f + 1)))
        res = train_and_select(fold_cfg, train)
        score = pair_metric(res.models, res.selection.members, *_xm(res.spec, test), test.truth, cfg.select.metric)
        log.info("fold %d: %s %.4f (estimate %.4f)", f, cfg.select.metric, score, res.selection.estimate)
        out.append(FoldResult(f, score, res.selection.estimate, res.selection.members))
    return out


def _xm(spec, ds):
    v = ds.training_view(spec)
    return v.x, v.mask
