"""Five-term PU loss, its gradient, batch partitioning and the lambda7 schedule."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import PulModel, margins_from_logs
from .network import ForwardCache, forward, grad_log_frobenius, log_frobenius, weighted_grad_log_norms


@dataclass(frozen=True)
class LossWeights:
    lam1: float = 4.0
    lam2: float = 4.0
    lam3: float = 1.0
    lam4: float = 2.0
    lam5: float = 2.0
    lam6: float = 1.0
    lam8: float = 4.0
    mu0: float = 5.0
    mu1: float = -50.0

    def __post_init__(self):
        lams = (self.lam1, self.lam2, self.lam3, self.lam4, self.lam5, self.lam6, self.lam8)
        if any(v < 0 for v in lams):
            raise ValueError("loss weights must be non-negative")
        if not self.mu0 > self.mu1:
            raise ValueError("mu0 must exceed mu1")


@dataclass(frozen=True)
class Lambda7Controller:
    value: float = 1.0
    k_inc: float = 1.1
    k_dec: float = 0.9
    vmax: float = 10.0
    vmin: float = 0.1
    anneal: float = 0.8
    direction: str = "none"

    def step(self, labeled_accuracy: float) -> "Lambda7Controller":
        """Update after an epoch given the labeled-sample accuracy."""
        if not 0.0 <= labeled_accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")
        if labeled_accuracy >= 1.0:
            k_inc, k_dec = self.k_inc, self.k_dec
            if self.direction == "dec":
                k_inc, k_dec = k_inc ** self.anneal, k_dec ** self.anneal
            return replace(self, value=min(self.value * k_inc, self.vmax), k_inc=k_inc, k_dec=k_dec, direction="inc")
        if labeled_accuracy < 0.95:
            return replace(self, value=max(self.value * self.k_dec, self.vmin), direction="dec")
        return self


def controller_step(c: Lambda7Controller, labeled_accuracy: float) -> Lambda7Controller:
    return c.step(labeled_accuracy)


@dataclass(frozen=True)
class BatchPartition:
    labeled: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    @classmethod
    def from_margins(cls, margins, labeled_flags) -> "BatchPartition":
        labeled_flags = np.asarray(labeled_flags, bool)
        m = np.asarray(margins, float)
        idx = np.arange(len(m))
        return cls(idx[labeled_flags], idx[~labeled_flags & (m > 0)], idx[~labeled_flags & ~(m > 0)])


def partition(model: PulModel, phi, labeled_flags, mask=None) -> BatchPartition:
    labeled_flags = np.asarray(labeled_flags, bool)
    if len(labeled_flags) == 0:
        raise ValueError("empty batch")
    m = np.zeros(len(labeled_flags))
    un = ~labeled_flags
    if un.any():
        sub_mask = None if mask is None else np.asarray(mask, bool)[un]
        m[un] = margins_from_logs(*model.log_norms(np.asarray(phi)[un], sub_mask))
    return BatchPartition.from_margins(m, labeled_flags)


@dataclass(frozen=True)
class LossTerms:
    l1: float
    l2: float
    l3: float
    l4: float
    l5: float

    @property
    def total(self) -> float:
        return self.l1 + self.l2 + self.l3 + self.l4 + self.l5

    def as_tuple(self):
        return (self.l1, self.l2, self.l3, self.l4, self.l5, self.total)


def _mean_sq(lp, ln, idx, a, ta, b, tb):
    if len(idx) == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    k = len(idx)
    val = np.mean(a * (lp[idx] - ta) ** 2 + b * (ln[idx] - tb) ** 2)
    return val, 2 * a * (lp[idx] - ta) / k, 2 * b * (ln[idx] - tb) / k


def loss_and_coeffs(lp, ln, fp, fn, part: BatchPartition, w: LossWeights, lam7: float):
    """Loss terms plus d(total)/d(log-norm) per sample and per Frobenius log.

    Returns ``(terms, cp, cn, dfp, dfn)`` where ``cp[b]`` multiplies the
    gradient of ``ln||y_p(x_b)||`` and ``dfp`` that of ``ln||P_p||_F``.
    """
    lp, ln = np.asarray(lp, float), np.asarray(ln, float)
    cp = np.zeros(len(lp))
    cn = np.zeros(len(lp))
    l1, a, b = _mean_sq(lp, ln, part.labeled, w.lam1, w.mu0, w.lam2, w.mu1)
    cp[part.labeled] += a
    cn[part.labeled] += b
    l2, a, b = _mean_sq(lp, ln, part.pos, w.lam3, w.mu0, w.lam4, w.mu1)
    cp[part.pos] += a
    cn[part.pos] += b
    # negatives: the negative map goes to mu0, the positive map to mu1
    l3, b, a = _mean_sq(ln, lp, part.neg, w.lam5, w.mu0, w.lam6, w.mu1)
    cp[part.neg] += a
    cn[part.neg] += b
    l4 = lam7 * (abs(fp) + abs(fn) + abs(fp - fn))
    s = np.sign(fp - fn)
    dfp = lam7 * (np.sign(fp) + s)
    dfn = lam7 * (np.sign(fn) - s)
    unl = np.concatenate([part.pos, part.neg])
    if len(unl):
        delta = float(np.mean(lp[unl] - ln[unl]))
        l5 = w.lam8 * delta ** 2
        g = 2 * w.lam8 * delta / len(unl)
        cp[unl] += g
        cn[unl] -= g
    else:
        l5 = 0.0
    return LossTerms(float(l1), float(l2), float(l3), float(l4), float(l5)), cp, cn, float(dfp), float(dfn)


def loss_terms(model: PulModel, phi, part: BatchPartition, w: LossWeights, lam7: float, mask=None) -> LossTerms:
    lp, ln = model.log_norms(phi, mask)
    fp, fn = log_frobenius(model.positive), log_frobenius(model.negative)
    return loss_and_coeffs(lp, ln, fp, fn, part, w, lam7)[0]


def forward_pair(model: PulModel, phi, mask=None):
    """Forward caches of both networks for one batch."""
    return forward(model.positive, phi, mask), forward(model.negative, phi, mask)


def grad_total(model: PulModel, phi, part: BatchPartition, w: LossWeights, lam7: float, mask=None, logs=None):
    """Exact gradient of the total loss for both networks.

    ``logs`` may carry precomputed ``(lp, ln)`` arrays or the pair of
    :class:`ForwardCache` objects from :func:`forward_pair`. Returns
    ``(terms, grads_pos, grads_neg)``.
    """
    caches = (None, None)
    if logs is None:
        lp, ln = model.log_norms(phi, mask)
    elif isinstance(logs[0], ForwardCache):
        caches = logs
        lp, ln = logs[0].logs, logs[1].logs
    else:
        lp, ln = logs
    fp, fn = log_frobenius(model.positive), log_frobenius(model.negative)
    terms, cp, cn, dfp, dfn = loss_and_coeffs(lp, ln, fp, fn, part, w, lam7)
    out = []
    for net, c, df, cache in ((model.positive, cp, dfp, caches[0]), (model.negative, cn, dfn, caches[1])):
        g = weighted_grad_log_norms(net, phi, c, mask, cache)
        if df != 0:
            gf = grad_log_frobenius(net)
            g = [a + df * b for a, b in zip(g, gf)]
        out.append(g)
    return terms, out[0], out[1]
