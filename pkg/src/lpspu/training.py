"""Adam training of projector pairs, PU batch generation and ensembles."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datasets import PuData
from .embedding import PreprocessSpec, embed
from .model import PulModel, default_basis, margins_from_logs
from .network import init_network
from .objective import BatchPartition, Lambda7Controller, LossWeights, forward_pair, grad_total

log = logging.getLogger(__name__)

PLATEAU_TOL = 1e-6


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    epochs: int = 20
    patience: int | None = None
    batch_size: int | None = None
    seed: int = 0
    ensemble_size: int = 4
    resample_labeled: bool = False
    d: int = 4
    bond: int = 2
    skip: int = 4
    basis: str = "cosine"
    weights: LossWeights = field(default_factory=LossWeights)
    controller: Lambda7Controller = field(default_factory=Lambda7Controller)
    workers: int = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.ensemble_size < 2:
            raise ValueError("ensemble size must be >= 2 for pair selection")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    scales: list[float] | None = None
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, scales=None) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], scales)


def model_params(model: PulModel) -> list[np.ndarray]:
    return model.positive.sites + model.negative.sites


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """In-place bias-corrected Adam update of ``params``.

    ``state.scales`` optionally multiplies the step of each tensor (the
    trainer passes the per-site init std, i.e. Adam on unit-variance
    parameters).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise TrainingError("parameter/gradient count mismatch")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise TrainingError(f"gradient shape {g.shape} != parameter shape {params[i].shape} at tensor {i}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient at tensor {i}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    scales = state.scales or [1.0] * len(params)
    for p, g, m, v, sc in zip(params, grads, state.m, state.v, scales):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (lr * sc) * (m / c1) / (np.sqrt(v / c2) + state.eps)


def make_batches(n: int, labeled_idx, batch_size: int | None, resample_labeled: bool, seed: int, epoch: int):
    """Index arrays for one epoch.

    With ``resample_labeled`` every batch of size ``B`` is extended by ``B``
    labeled positives drawn with replacement.
    """
    if n < 1:
        raise ValueError("empty dataset")
    labeled_idx = np.asarray(labeled_idx, dtype=int)
    if resample_labeled and len(labeled_idx) == 0:
        raise ValueError("labeled resampling requested but no labeled samples exist")
    if batch_size is None or batch_size >= n:
        if not resample_labeled:
            return [np.arange(n)]
        batch_size = n
    rng = np.random.default_rng([seed, epoch])
    perm = rng.permutation(n)
    out = []
    for lo in range(0, n, batch_size):
        b = perm[lo:lo + batch_size]
        if resample_labeled:
            b = np.concatenate([b, rng.choice(labeled_idx, size=len(b), replace=True)])
        out.append(b)
    return out


def init_std(site: np.ndarray) -> float:
    """Init std of a site tensor: ``1 / sqrt(Dr * d * o)``."""
    o = site.shape[3] if site.ndim == 4 else 1
    return 1.0 / np.sqrt(site.shape[1] * site.shape[2] * o)


def member_seed(seed: int, member_index: int) -> int:
    return int(np.random.SeedSequence([seed, member_index]).generate_state(1)[0])


def init_model(n: int, cfg: TrainConfig, preprocessing: PreprocessSpec, member_index: int = 0) -> PulModel:
    ms = member_seed(cfg.seed, member_index)
    sp, sn = np.random.SeedSequence(ms).spawn(2)
    basis = default_basis(n, cfg.d, cfg.basis, seed=cfg.seed)
    pos = init_network(n, cfg.d, cfg.bond, cfg.skip, sp)
    neg = init_network(n, cfg.d, cfg.bond, cfg.skip, sn)
    w = cfg.weights
    return PulModel(pos, neg, basis, preprocessing, ms, w.mu0, w.mu1, cfg.bond)


def train_model(data: PuData, cfg: TrainConfig, member_index: int = 0, preprocessing: PreprocessSpec | None = None,
                callback=None):
    """Train one projector pair. Returns ``(model, per-epoch log records)``.

    ``callback(model, record)`` runs after every epoch (read-only use).
    """
    n_feat = data.x.shape[1]
    if preprocessing is None:
        preprocessing = PreprocessSpec.identity([f"x{j}" for j in range(n_feat)])
    skip = min(cfg.skip, n_feat)
    if skip != cfg.skip:
        cfg = _replace_cfg(cfg, skip=skip)
    model = init_model(n_feat, cfg, preprocessing, member_index)
    params = model_params(model)
    state = AdamState.zeros_like(params, [init_std(p) for p in params])
    ctrl = cfg.controller
    lr = cfg.lr
    labeled_idx = np.flatnonzero(data.labeled)
    best, stale = np.inf, 0
    records = []
    for epoch in range(cfg.epochs):
        x, mask = data.features(epoch)
        phi, mask = embed(x, model.basis, mask)
        sums = np.zeros(6)
        n_unl = n_pos = 0
        batches = make_batches(len(x), labeled_idx, cfg.batch_size, cfg.resample_labeled, model.seed, epoch)
        for idx in batches:
            bphi, bmask, lab = phi[idx], mask[idx], data.labeled[idx]
            try:
                caches = forward_pair(model, bphi, bmask)
                part = BatchPartition.from_margins(margins_from_logs(caches[0].logs, caches[1].logs), lab)
                terms, gp, gn = grad_total(model, bphi, part, cfg.weights, ctrl.value, bmask, logs=caches)
            except ArithmeticError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from exc
            if not np.isfinite(terms.total):
                raise TrainingError(f"epoch {epoch}: non-finite loss")
            adam_step(params, gp + gn, state, lr)
            sums += terms.as_tuple()
            n_unl += len(part.pos) + len(part.neg)
            n_pos += len(part.pos)
        sums /= len(batches)
        if len(labeled_idx):
            lp, ln = model.log_norms(phi[labeled_idx], mask[labeled_idx])
            acc = float(np.mean(margins_from_logs(lp, ln) > 0))
        else:
            acc = 1.0
        rec = {
            "epoch": epoch,
            **dict(zip(("L1", "L2", "L3", "L4", "L5", "total"), map(float, sums))),
            "lambda7": ctrl.value,
            "labeled_acc": acc,
            "pos_fraction": n_pos / n_unl if n_unl else 0.0,
            "lr": lr,
        }
        records.append(rec)
        if callback is not None:
            callback(model, rec)
        log.debug("member %d epoch %d total %.4g acc %.3f", member_index, epoch, rec["total"], acc)
        ctrl = ctrl.step(acc)
        if cfg.patience is not None:
            if rec["total"] < best - PLATEAU_TOL:
                best, stale = rec["total"], 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    lr *= 0.5
                    stale = 0
    return model, records


def _replace_cfg(cfg: TrainConfig, **kw) -> TrainConfig:
    from dataclasses import replace

    return replace(cfg, **kw)


def _train_member(args):
    data, cfg, idx, spec = args
    try:
        return idx, train_model(data, cfg, idx, spec), None
    except Exception as exc:  # reported with the member index
        return idx, None, f"{type(exc).__name__}: {exc}"


class EnsembleError(RuntimeError):
    def __init__(self, failures: dict[int, str], results):
        super().__init__("; ".join(f"member {i}: {m}" for i, m in sorted(failures.items())))
        self.failures = failures
        self.results = results


def train_ensemble(data: PuData, cfg: TrainConfig, preprocessing: PreprocessSpec | None = None):
    """Train ``cfg.ensemble_size`` members; returns ``(models, logs)`` ordered by member index."""
    jobs = [(data, cfg, i, preprocessing) for i in range(cfg.ensemble_size)]
    if cfg.workers > 1 and data.augment is None:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_train_member, jobs))
    else:
        results = [_train_member(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    failures = {i: err for i, _, err in results if err is not None}
    if failures:
        raise EnsembleError(failures, results)
    return [r[1][0] for r in results], [r[1][1] for r in results]
