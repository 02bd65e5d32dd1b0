"""Datasets for positive-unlabeled experiments.

A :class:`PuDataset` carries the raw attribute table, the labeled-positive
flags and the hidden ground truth. Training and model selection only ever
receive a :class:`PuData` (see :meth:`PuDataset.training_view`), which has no
ground-truth field.
"""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from .embedding import PreprocessSpec, transform_table

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
CROP = 20


class DataFormatError(ValueError):
    pass


@dataclass
class Table:
    """Column-oriented raw table.

    Numeric columns are float arrays with NaN for missing cells; categorical
    columns are object arrays of strings with ``None`` for missing cells.
    """

    columns: list[str]
    kinds: dict[str, str]
    data: dict[str, np.ndarray]

    @property
    def n_rows(self) -> int:
        return len(self.data[self.columns[0]]) if self.columns else 0

    def rows(self):
        for i in range(self.n_rows):
            yield {c: self.data[c][i] for c in self.columns}

    def take(self, idx) -> "Table":
        idx = np.asarray(idx)
        return Table(list(self.columns), dict(self.kinds), {c: self.data[c][idx] for c in self.columns})

    def drop(self, names) -> "Table":
        keep = [c for c in self.columns if c not in set(names)]
        return Table(keep, {c: self.kinds[c] for c in keep}, {c: self.data[c] for c in keep})

    def missing(self) -> np.ndarray:
        """Row-wise flag: any cell missing."""
        out = np.zeros(self.n_rows, dtype=bool)
        for c in self.columns:
            col = self.data[c]
            out |= np.isnan(col) if self.kinds[c] == "numeric" else np.array([v is None for v in col], bool)
        return out

    @classmethod
    def from_array(cls, x, prefix: str = "x") -> "Table":
        x = np.asarray(x, dtype=float)
        width = len(str(x.shape[1] - 1))
        names = [f"{prefix}{j:0{width}d}" for j in range(x.shape[1])]
        return cls(names, {n: "numeric" for n in names}, {n: x[:, j] for j, n in enumerate(names)})

    def to_array(self) -> np.ndarray:
        if any(self.kinds[c] != "numeric" for c in self.columns):
            raise TypeError("table has categorical columns")
        return np.stack([self.data[c] for c in self.columns], axis=1)


@dataclass(frozen=True)
class PuData:
    """What a learner may see: features, missing mask, labeled flags.

    ``augment``, when set, returns fresh ``(x, mask)`` for a given epoch.
    """

    x: np.ndarray
    mask: np.ndarray
    labeled: np.ndarray
    augment: Callable[[int], tuple[np.ndarray, np.ndarray]] | None = None

    def __len__(self):
        return len(self.x)

    def features(self, epoch: int):
        if self.augment is None:
            return self.x, self.mask
        return self.augment(epoch)


@dataclass
class PuDataset:
    table: Table
    labeled: np.ndarray
    truth: np.ndarray  # True = positive; evaluation only
    provenance: str = ""
    images: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.labeled = np.asarray(self.labeled, dtype=bool)
        self.truth = np.asarray(self.truth, dtype=bool)
        if np.any(self.labeled & ~self.truth):
            raise ValueError("labeled samples must be positive")

    def __len__(self):
        return self.table.n_rows

    @property
    def n_labeled(self) -> int:
        return int(self.labeled.sum())

    def subset(self, idx) -> "PuDataset":
        idx = np.asarray(idx)
        imgs = None if self.images is None else self.images[idx]
        return PuDataset(self.table.take(idx), self.labeled[idx], self.truth[idx], self.provenance, imgs)

    def training_view(self, spec: PreprocessSpec) -> PuData:
        x, mask = transform_table(spec, self.table)
        return PuData(x, mask, self.labeled.copy())


# --- synthetic point sets -------------------------------------------------


def _points_dataset(pts, truth, noise_std, rng, provenance) -> PuDataset:
    pts = pts + rng.normal(0.0, noise_std, size=pts.shape) if noise_std > 0 else pts
    return PuDataset(Table.from_array(pts), np.zeros(len(pts), bool), truth, provenance)


def gen_two_moons(n: int, noise_std: float = 0.1, seed: int = 0) -> PuDataset:
    """Interleaving half circles; the upper arc ``(cos t, sin t)`` is positive."""
    if n < 2 or noise_std < 0:
        raise ValueError("need n >= 2 and noise_std >= 0")
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    t = rng.uniform(0.0, np.pi, size=n)
    upper = np.stack([np.cos(t[:n_pos]), np.sin(t[:n_pos])], axis=1)
    lower = np.stack([1.0 - np.cos(t[n_pos:]), 0.5 - np.sin(t[n_pos:])], axis=1)
    truth = np.r_[np.ones(n_pos, bool), np.zeros(n - n_pos, bool)]
    return _points_dataset(np.vstack([upper, lower]), truth, noise_std, rng, f"moons(n={n},noise={noise_std},seed={seed})")


def gen_circles(n: int, noise_std: float = 0.05, factor: float = 0.5, seed: int = 0) -> PuDataset:
    """Concentric circles; the outer unit circle is positive, the inner has radius ``factor``."""
    if n < 2 or noise_std < 0 or not 0 < factor < 1:
        raise ValueError("need n >= 2, noise_std >= 0, 0 < factor < 1")
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    t = rng.uniform(0.0, 2 * np.pi, size=n)
    r = np.r_[np.ones(n_pos), np.full(n - n_pos, factor)]
    pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    truth = np.r_[np.ones(n_pos, bool), np.zeros(n - n_pos, bool)]
    return _points_dataset(pts, truth, noise_std, rng, f"circles(n={n},noise={noise_std},factor={factor},seed={seed})")


def gen_blobs(n: int, centers=((0.0, 0.0), (3.0, 3.0)), std: float = 0.5, seed: int = 0) -> PuDataset:
    """Isotropic Gaussian clusters; the first center is the positive class."""
    centers = np.asarray(centers, dtype=float)
    if n < 2 or len(centers) < 2 or std <= 0:
        raise ValueError("need n >= 2, >= 2 centers and std > 0")
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    rest = n - n_pos
    which = np.r_[np.zeros(n_pos, int), 1 + np.arange(rest) % (len(centers) - 1)]
    pts = centers[which]
    truth = which == 0
    return _points_dataset(pts, truth, std, rng, f"blobs(n={n},std={std},seed={seed})")


def label_positives(ds: PuDataset, n_labeled: int, seed: int) -> PuDataset:
    """Mark ``n_labeled`` uniformly drawn positives as labeled."""
    pos = np.flatnonzero(ds.truth)
    if not 0 <= n_labeled <= len(pos):
        raise ValueError(f"cannot label {n_labeled} of {len(pos)} positives")
    rng = np.random.default_rng(seed)
    labeled = np.zeros(len(ds), bool)
    labeled[rng.choice(pos, size=n_labeled, replace=False)] = True
    return PuDataset(ds.table, labeled, ds.truth, ds.provenance, ds.images)


# --- CSV ------------------------------------------------------------------


def _parse_float(v: str):
    try:
        return float(v)
    except ValueError:
        return None


def load_csv(path, label_column: str | None = None, missing_token: str = "?"):
    """Read a headed CSV into a :class:`Table`.

    Returns ``(table, labels)`` where ``labels`` is the string array of
    ``label_column`` (or ``None``) and the table excludes that column.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, header required") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(row)
    if label_column is not None and label_column not in header:
        raise DataFormatError(f"{path}: no column {label_column!r}")
    columns, kinds, data, labels = [], {}, {}, None
    for j, name in enumerate(header):
        raw = [r[j] for r in rows]
        if name == label_column:
            labels = np.array(raw, dtype=object)
            continue
        present = [v for v in raw if v != missing_token]
        parsed = [_parse_float(v) for v in present]
        columns.append(name)
        if present and all(p is not None for p in parsed):
            kinds[name] = "numeric"
            data[name] = np.array([np.nan if v == missing_token else float(v) for v in raw])
        else:
            kinds[name] = "categorical"
            data[name] = np.array([None if v == missing_token else v for v in raw], dtype=object)
    return Table(columns, kinds, data), labels


def write_csv(path, ds: PuDataset, include_truth: bool = True) -> None:
    """Export a dataset with a ``labeled`` column (and ``truth`` if asked)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ds.table.columns + ["labeled"] + (["truth"] if include_truth else []))
        for i, row in enumerate(ds.table.rows()):
            cells = ["?" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v)) if isinstance(v, float) else v for v in row.values()]
            cells.append(int(ds.labeled[i]))
            if include_truth:
                cells.append(int(ds.truth[i]))
            w.writerow(cells)
    tmp.replace(path)


def read_pu_csv(path) -> PuDataset:
    """Inverse of :func:`write_csv` (requires the ``truth`` column)."""
    table, _ = load_csv(path)
    labeled = table.data["labeled"].astype(float) > 0
    truth = table.data["truth"].astype(float) > 0 if "truth" in table.columns else labeled.copy()
    return PuDataset(table.drop(["labeled", "truth"]), labeled, truth, f"csv:{path}")


# --- PU tasks from labeled tables ------------------------------------------


@dataclass(frozen=True)
class PuTaskSpec:
    fraction: float | None = 0.3
    n_labeled: int | None = None
    seed: int = 0
    balance: bool = False
    drop_missing: bool = False

    def __post_init__(self):
        if self.n_labeled is None and not (self.fraction and 0 < self.fraction <= 1):
            raise ValueError("fraction must be in (0, 1]")
        if self.n_labeled is not None and self.n_labeled < 1:
            raise ValueError("n_labeled must be >= 1")


def class_ranking(labels) -> list:
    """Classes by decreasing frequency; ties keep first appearance order."""
    order = list(dict.fromkeys(labels))
    counts = {c: 0 for c in order}
    for v in labels:
        counts[v] += 1
    return sorted(order, key=lambda c: -counts[c])


def build_pu_task(table: Table, labels, spec: PuTaskSpec) -> PuDataset:
    """Most frequent class positive, second most frequent negative, rest discarded."""
    labels = np.asarray(labels, dtype=object)
    keep = np.ones(len(labels), bool)
    if spec.drop_missing:
        keep &= ~table.missing()
    ranked = class_ranking(labels[keep])
    if len(ranked) < 2:
        raise ValueError("PU task needs at least two classes")
    pos_cls, neg_cls = ranked[0], ranked[1]
    keep &= (labels == pos_cls) | (labels == neg_cls)
    idx = np.flatnonzero(keep)
    truth = labels[idx] == pos_cls
    rng = np.random.default_rng(spec.seed)
    if spec.balance:
        p, n = np.flatnonzero(truth), np.flatnonzero(~truth)
        k = min(len(p), len(n))
        sel = np.sort(np.r_[rng.choice(p, k, replace=False), rng.choice(n, k, replace=False)])
        idx, truth = idx[sel], truth[sel]
    ds = PuDataset(table.take(idx), np.zeros(len(idx), bool), truth, f"task(pos={pos_cls},neg={neg_cls})")
    n_pos = int(truth.sum())
    n_lab = spec.n_labeled if spec.n_labeled is not None else max(1, int(round(spec.fraction * n_pos)))
    return label_positives(ds, min(n_lab, n_pos), spec.seed + 1)


# --- MNIST --------------------------------------------------------------------


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 4 + 4 * ndim:
        raise DataFormatError(f"{path}: truncated IDX header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise DataFormatError(f"{path}: bad IDX magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    if body.size != int(np.prod(dims)):
        raise DataFormatError(f"{path}: payload has {body.size} bytes, header implies {int(np.prod(dims))}")
    return body.reshape(dims)


def load_mnist_idx(images_path, labels_path):
    """Images scaled to ``[0, 1]`` with shape ``(n, 28, 28)`` and integer labels."""
    images = _read_idx(images_path, IMAGE_MAGIC, 3).astype(float) / 255.0
    labels = _read_idx(labels_path, LABEL_MAGIC, 1).astype(int)
    if len(images) != len(labels):
        raise DataFormatError(f"{len(images)} images but {len(labels)} labels")
    return images, labels


def _affine_about_center(img, angle: float, zoom: float) -> np.ndarray:
    # rotate by angle, then zoom; map output coords back to input coords
    c = (np.array(img.shape) - 1) / 2.0
    cos, sin = np.cos(angle), np.sin(angle)
    rot_t = np.array([[cos, sin], [-sin, cos]])
    matrix = rot_t / zoom
    offset = c - matrix @ c
    out = ndimage.affine_transform(img, matrix, offset=offset, order=1, mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0)


def prepare_image(img, augment: bool = False, seed=None, angle: float | None = None, zoom: float | None = None) -> np.ndarray:
    """Center-crop a 28x28 image to 20x20, optionally rotate+zoom, flatten."""
    img = np.asarray(img, dtype=float)
    if img.shape != (28, 28):
        raise ValueError(f"expected a 28x28 image, got {img.shape}")
    lo = (28 - CROP) // 2
    crop = img[lo:lo + CROP, lo:lo + CROP]
    if augment or angle is not None or zoom is not None:
        rng = np.random.default_rng(seed)
        if angle is None:
            angle = rng.uniform(-0.05 * np.pi, 0.05 * np.pi)
        if zoom is None:
            zoom = rng.uniform(0.8, 1.2)
        crop = _affine_about_center(crop, angle, zoom)
    return crop.reshape(-1).copy()


def _image_dataset(images, truth, labeled, provenance) -> PuDataset:
    feats = np.stack([prepare_image(im) for im in images]) if len(images) else np.zeros((0, CROP * CROP))
    return PuDataset(Table.from_array(feats, prefix="px"), labeled, truth, provenance, images=np.asarray(images))


def _split_balanced(pos_idx, neg_idx, n_train, n_test, rng):
    need = n_train + n_test
    if len(pos_idx) < need or len(neg_idx) < need:
        raise ValueError(f"insufficient samples: need {need} per class")
    p = rng.permutation(pos_idx)[:need]
    n = rng.permutation(neg_idx)[:need]
    return (p[:n_train], n[:n_train]), (p[n_train:], n[n_train:])


def _ovx_task(images, labels, pos_idx, neg_idx, n_labeled, n_train, n_test, seed, name):
    if n_labeled < 1 or n_labeled > n_train:
        raise ValueError("n_labeled must be in [1, n_train]")
    rng = np.random.default_rng(seed)
    (ptr, ntr), (pte, nte) = _split_balanced(pos_idx, neg_idx, n_train, n_test, rng)
    tr = np.r_[ptr, ntr]
    te = np.r_[pte, nte]
    truth_tr = np.r_[np.ones(n_train, bool), np.zeros(n_train, bool)]
    labeled = np.zeros(2 * n_train, bool)
    labeled[rng.choice(n_train, n_labeled, replace=False)] = True
    truth_te = np.r_[np.ones(n_test, bool), np.zeros(n_test, bool)]
    train = _image_dataset(images[tr], truth_tr, labeled, name + ":train")
    test = _image_dataset(images[te], truth_te, np.zeros(2 * n_test, bool), name + ":test")
    return train, test


def build_ovo_task(images, labels, class_a: int, class_b: int, n_labeled: int,
                   n_train: int = 1000, n_test: int = 500, seed: int = 0):
    """Balanced one-vs-one task (``class_a`` positive): ``(train, test)``."""
    if class_a == class_b:
        raise ValueError("one-vs-one needs two different classes")
    labels = np.asarray(labels)
    return _ovx_task(images, labels, np.flatnonzero(labels == class_a), np.flatnonzero(labels == class_b),
                     n_labeled, n_train, n_test, seed, f"ovo({class_a}v{class_b},Np={n_labeled})")


def build_ovr_task(images, labels, positive_class: int, n_labeled: int,
                   n_train: int = 1000, n_test: int = 500, seed: int = 0):
    """Balanced one-vs-rest task; negatives drawn uniformly across the other classes."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed + 7919)
    others = sorted(set(labels.tolist()) - {positive_class})
    need = n_train + n_test
    per = -(-need // len(others))
    neg = np.concatenate([rng.permutation(np.flatnonzero(labels == c))[:per] for c in others])
    neg = rng.permutation(neg)[:need]
    return _ovx_task(images, labels, np.flatnonzero(labels == positive_class), neg,
                     n_labeled, n_train, n_test, seed, f"ovr({positive_class},Np={n_labeled})")


def image_augmenter(images, seed: int):
    """Per-epoch augmentation closure for :class:`PuData`."""
    images = np.asarray(images)

    def augment(epoch: int):
        ss = np.random.SeedSequence([seed, epoch])
        seeds = ss.generate_state(len(images))
        x = np.stack([prepare_image(im, augment=True, seed=int(s)) for im, s in zip(images, seeds)])
        return x, np.zeros(x.shape, bool)

    return augment
