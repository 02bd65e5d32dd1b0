"""Label-free model selection by agreement, metrics, and hyperparameter tuning.

Two independently trained models that agree on most training samples are
usually both close to the truth, so the largest pairwise agreement fraction
serves as an accuracy estimate that needs no labels.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .datasets import PuDataset
from .embedding import fit_preprocess
from .model import PulModel, atomic_write, predict_features
from .training import TrainConfig, train_ensemble

log = logging.getLogger(__name__)


def predictions(models: list[PulModel], x, mask=None) -> np.ndarray:
    """``(M, B)`` boolean label table (True = positive)."""
    return np.array([predict_features(m, x, mask)[0] for m in models])


def agreement_fraction(a: PulModel, b: PulModel, x, mask=None) -> float:
    """Fraction of samples on which ``a`` and ``b`` predict the same label."""
    x = np.atleast_2d(x)
    if len(x) == 0:
        raise ValueError("agreement needs at least one sample")
    la, lb = predictions([a, b], x, mask)
    return float(np.mean(la == lb))


@dataclass(frozen=True)
class AgreementMatrix:
    values: np.ndarray

    @classmethod
    def from_predictions(cls, preds) -> "AgreementMatrix":
        p = np.asarray(preds, dtype=bool)
        if p.ndim != 2 or p.shape[1] == 0:
            raise ValueError("predictions must be a nonempty (M, B) table")
        eq = (p[:, None, :] == p[None, :, :]).mean(axis=2)
        eq = 0.5 * (eq + eq.T)
        np.fill_diagonal(eq, 1.0)
        return cls(eq)

    @property
    def size(self) -> int:
        return len(self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["member", *range(self.size)])
        for i, row in enumerate(self.values):
            w.writerow([i, *(f"{v:.6f}" for v in row)])
        return buf.getvalue()


@dataclass(frozen=True)
class Selection:
    members: tuple[int, ...]
    estimate: float
    matrix: AgreementMatrix


def select_from_predictions(preds, k: int = 2) -> Selection:
    """Best-agreeing group of ``k`` members from a label table.

    For ``k = 2`` this is the top pair. Larger ``k`` maximizes the mean
    pairwise agreement inside the group. Ties go to the lexicographically
    smallest member indices.
    """
    mat = AgreementMatrix.from_predictions(preds)
    if mat.size < 2:
        raise ValueError("selection needs at least two models")
    if not 2 <= k <= mat.size:
        raise ValueError(f"group size must be in [2, {mat.size}]")
    best, best_val = None, -1.0
    for group in itertools.combinations(range(mat.size), k):
        v = float(np.mean([mat.values[i, j] for i, j in itertools.combinations(group, 2)]))
        if v > best_val:
            best, best_val = group, v
    return Selection(best, best_val, mat)


def select_models(models: list[PulModel], x, mask=None, k: int = 2) -> Selection:
    """Pick the members that agree most on ``x`` (labeled and unlabeled training rows)."""
    if len(models) < 2:
        raise ValueError("selection needs at least two models")
    return select_from_predictions(predictions(models, x, mask), k)


def _pair_check(preds, truth):
    p = np.asarray(preds, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("empty prediction vector")
    return p, t


def accuracy(preds, truth) -> float:
    p, t = _pair_check(preds, truth)
    return float(np.mean(p == t))


def f1(preds, truth) -> float:
    """F1 of the positive class; 0 when precision and recall are both undefined or zero."""
    p, t = _pair_check(preds, truth)
    tp = int(np.sum(p & t))
    denom = int(np.sum(p)) + int(np.sum(t))
    return 2.0 * tp / denom if denom and tp else 0.0


METRICS = {"accuracy": accuracy, "f1": f1}


def spearman(xs, ys):
    """Rank correlation with average ranks; two-sided t-approximation p-value.

    Returns ``(nan, nan)`` when either input is constant.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    n = len(x)
    if n < 3:
        raise ValueError("spearman needs at least three points")
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        return float("nan"), float("nan")
    rho = float(np.corrcoef(rx, ry)[0, 1])
    if abs(rho) >= 1.0:
        return float(np.sign(rho)), 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(t), n - 2))


# --- tuning -------------------------------------------------------------------


def stratified_folds(strata, k: int, seed: int) -> list[np.ndarray]:
    """Test-index arrays of a seeded stratified ``k``-fold split."""
    strata = np.asarray(strata)
    if k < 2:
        raise ValueError("need at least two folds")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    offset = 0
    for s in sorted(set(strata.tolist())):
        idx = rng.permutation(np.flatnonzero(strata == s))
        for j, i in enumerate(idx):
            buckets[(j + offset) % k].append(i)
        offset += len(idx)
    return [np.sort(np.array(b, dtype=int)) for b in buckets]


def pu_strata(ds: PuDataset) -> np.ndarray:
    """0 labeled, 1 unlabeled positive, 2 negative. Evaluation plumbing only."""
    return np.where(ds.labeled, 0, np.where(ds.truth, 1, 2))


@dataclass(frozen=True)
class CellResult:
    tuple_id: int
    fold: int
    estimate: float
    test_f1: float | None
    members: tuple[int, ...]


@dataclass
class TuningResult:
    grid: list[dict]
    cells: list[CellResult]
    estimates: dict[int, float]
    chosen: int
    f1s: dict[int, float] = field(default_factory=dict)

    @property
    def chosen_params(self) -> dict:
        return self.grid[self.chosen]

    def to_csv(self) -> str:
        keys = sorted({k for g in self.grid for k in g})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tuple_id", *keys, "fold", "estimated_accuracy", "test_f1"])
        for c in sorted(self.cells, key=lambda c: (c.tuple_id, c.fold)):
            g = self.grid[c.tuple_id]
            w.writerow([c.tuple_id, *(g.get(k, "") for k in keys), c.fold, f"{c.estimate:.6f}",
                        "" if c.test_f1 is None else f"{c.test_f1:.6f}"])
        g = self.grid[self.chosen]
        w.writerow(["chosen", *(g.get(k, "") for k in keys), "mean", f"{self.estimates[self.chosen]:.6f}",
                    "" if self.chosen not in self.f1s else f"{self.f1s[self.chosen]:.6f}"])
        return buf.getvalue()


def pair_metric(models, members, x, mask, truth, metric) -> float:
    """Mean metric of the selected members."""
    fn = METRICS[metric]
    return float(np.mean([fn(predict_features(models[i], x, mask)[0], truth) for i in members]))


def run_fold(ds: PuDataset, train_idx, test_idx, cfg: TrainConfig, repeat: int = 1, margin: float = 0.0,
             k: int = 2, metric: str = "f1"):
    """Train an ensemble on one fold, select, and score the selection on the test rows.

    Returns ``(models, selection, test_metric)``. The learner sees only the
    training view; ``truth`` is touched here for scoring the test rows.
    """
    train, test = ds.subset(train_idx), ds.subset(test_idx)
    spec = fit_preprocess(train.table, repeat=repeat, margin=margin)
    data = train.training_view(spec)
    models, _ = train_ensemble(data, cfg, spec)
    sel = select_models(models, data.x, data.mask, k)
    tv = test.training_view(spec)
    score = pair_metric(models, sel.members, tv.x, tv.mask, test.truth, metric)
    return models, sel, score


def _order_key(params: dict):
    return (params.get("bond", 0), params.get("d", 0))


def tune(ds: PuDataset, grid: list[dict], base: TrainConfig, folds: int = 10, models_per_cell: int = 10,
         seed: int = 0, repeat: int = 1, margin: float = 0.0, validate: bool = True,
         store: str | None = None) -> TuningResult:
    """Grid search by mean best agreement over stratified folds.

    ``grid`` entries are :class:`TrainConfig` overrides (plus optional
    ``repeat``). With ``store`` set, each finished (tuple, fold) cell is
    appended there as a JSON line and skipped when the call is repeated.
    Ties in estimated accuracy go to smaller ``bond``, then smaller ``d``.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    done = _load_cells(store)
    split = stratified_folds(pu_strata(ds), folds, seed)
    cells = []
    for t, params in enumerate(grid):
        over = {k: v for k, v in params.items() if k != "repeat"}
        cfg = replace(base, ensemble_size=models_per_cell, seed=int(np.random.SeedSequence([seed, t]).generate_state(1)[0]), **over)
        rep = params.get("repeat", repeat)
        for f, test_idx in enumerate(split):
            if (t, f) in done:
                cells.append(done[(t, f)])
                continue
            train_idx = np.setdiff1d(np.arange(len(ds)), test_idx)
            if not ds.labeled[train_idx].any():
                log.warning("tuple %d fold %d: no labeled positives, skipped", t, f)
                continue
            _, sel, score = run_fold(ds, train_idx, test_idx, replace(cfg, seed=cfg.seed + f), rep, margin)
            cell = CellResult(t, f, sel.estimate, score if validate else None, sel.members)
            cells.append(cell)
            _append_cell(store, cell)
    estimates, f1s = {}, {}
    for t in range(len(grid)):
        own = [c for c in cells if c.tuple_id == t]
        if own:
            estimates[t] = float(np.mean([c.estimate for c in own]))
            if validate and all(c.test_f1 is not None for c in own):
                f1s[t] = float(np.mean([c.test_f1 for c in own]))
    if not estimates:
        raise ValueError("no fold produced a result")
    chosen = min(estimates, key=lambda t: (-estimates[t], _order_key(grid[t]), t))
    return TuningResult(grid, cells, estimates, chosen, f1s)


def _load_cells(store) -> dict:
    if not store or not os.path.exists(store):
        return {}
    out = {}
    with open(store) as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                out[(r["tuple_id"], r["fold"])] = CellResult(r["tuple_id"], r["fold"], r["estimate"], r["test_f1"], tuple(r["members"]))
    return out


def _append_cell(store, cell: CellResult) -> None:
    if not store:
        return
    rec = {"tuple_id": cell.tuple_id, "fold": cell.fold, "estimate": cell.estimate,
           "test_f1": cell.test_f1, "members": list(cell.members)}
    prev = open(store).read() if os.path.exists(store) else ""
    atomic_write(store, (prev + json.dumps(rec) + "\n").encode())
