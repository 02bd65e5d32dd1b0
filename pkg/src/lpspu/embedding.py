"""Orthonormal Fourier embeddings and table preprocessing.

Raw tables are turned into vectors on the unit interval (categorical columns
are enumerated in first-appearance order, numeric columns are min-max
scaled, constant columns are dropped), optionally repeated ``R`` times, and
then every attribute is embedded with a local basis that is orthonormal on
``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COSINE = "cosine"
SINE = "sine"
KINDS = (COSINE, SINE)
_SQRT2 = np.sqrt(2.0)


class DomainError(ValueError):
    pass


def embed_local(u, kind: str, d: int) -> np.ndarray:
    """Local basis vector(s) for values ``u`` in ``[0, 1]``.

    Cosine: ``(1, sqrt2 cos(pi u), ..., sqrt2 cos((d-1) pi u))``.
    Sine: ``(sqrt2 sin(pi u), ..., sqrt2 sin(d pi u))``.
    Works elementwise; the basis index is appended as the last axis.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)) or not np.all(np.isfinite(u)):
        raise DomainError("embedding input must lie in [0, 1]")
    if kind == COSINE:
        k = np.arange(d)
        out = _SQRT2 * np.cos(np.multiply.outer(u, k) * np.pi)
        out[..., 0] = 1.0
        return out
    if kind == SINE:
        k = np.arange(1, d + 1)
        return _SQRT2 * np.sin(np.multiply.outer(u, k) * np.pi)
    raise DomainError(f"unknown basis kind {kind!r}")


@dataclass(frozen=True)
class BasisSpec:
    kinds: tuple[str, ...]
    d: int

    @property
    def n(self) -> int:
        return len(self.kinds)

    @classmethod
    def uniform(cls, n: int, d: int, kind: str = COSINE) -> "BasisSpec":
        return cls((kind,) * n, d)

    @classmethod
    def random(cls, n: int, d: int, seed) -> "BasisSpec":
        """Sine/cosine drawn independently for every (post-repetition) position."""
        rng = np.random.default_rng(seed)
        return cls(tuple(KINDS[j] for j in rng.integers(0, 2, size=n)), d)


def embed(x, basis: BasisSpec, mask=None):
    """Embed preprocessed vectors.

    ``x`` has shape ``(N,)`` or ``(B, N)``; returns ``(phi, mask)`` with
    ``phi`` of shape ``(..., N, d)``. Masked entries get zero vectors and
    are ignored downstream.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != basis.n:
        raise DomainError(f"input length {x.shape[-1]} != basis length {basis.n}")
    if mask is None:
        mask = np.zeros(x.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool) | np.isnan(x)
    safe = np.where(mask, 0.0, x)
    phi = np.empty(x.shape + (basis.d,))
    kinds = np.array(basis.kinds)
    for kind in KINDS:
        sel = kinds == kind
        if sel.any():
            phi[..., sel, :] = embed_local(safe[..., sel], kind, basis.d)
    phi[mask] = 0.0
    return phi, mask


@dataclass
class ColumnTransform:
    """Either an enumeration table (categorical) or a min/max pair (numeric)."""

    name: str
    categories: list[str] | None = None
    lo: float = 0.0
    hi: float = 1.0

    @property
    def categorical(self) -> bool:
        return self.categories is not None


@dataclass
class PreprocessSpec:
    columns: list[ColumnTransform]
    dropped: list[str] = field(default_factory=list)
    repeat: int = 1
    margin: float = 0.0

    @classmethod
    def identity(cls, names, repeat: int = 1) -> "PreprocessSpec":
        """Pass-through for attributes already on the unit interval (pixels)."""
        return cls([ColumnTransform(n) for n in names], [], repeat)

    @property
    def n_raw(self) -> int:
        return len(self.columns) + len(self.dropped)

    @property
    def n_features(self) -> int:
        return len(self.columns) * self.repeat

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]


def _is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and np.isnan(v))


def fit_preprocess(table, repeat: int = 1, margin: float = 0.0) -> PreprocessSpec:
    """Fit column transforms on a :class:`~lpspu.datasets.Table`.

    ``margin`` shrinks the scaled range to ``[margin, 1 - margin]``; zero
    reproduces plain min-max scaling. Sine bases vanish at the interval
    ends, so a small margin keeps extreme samples off their zeros.
    """
    if table.n_rows == 0 or not table.columns:
        raise DomainError("cannot fit preprocessing on an empty table")
    if repeat < 1:
        raise DomainError("repetition factor must be >= 1")
    cols, dropped = [], []
    for name in table.columns:
        values = [v for v in table.data[name] if not _is_missing(v)]
        if table.kinds[name] == "categorical":
            cats = list(dict.fromkeys(values))
            if len(cats) < 2:
                dropped.append(name)
            else:
                cols.append(ColumnTransform(name, categories=[str(c) for c in cats]))
        else:
            arr = np.asarray(values, dtype=float)
            if arr.size == 0 or arr.min() == arr.max():
                dropped.append(name)
            else:
                cols.append(ColumnTransform(name, lo=float(arr.min()), hi=float(arr.max())))
    return PreprocessSpec(cols, dropped, repeat, margin)


def _transform(col: ColumnTransform, v, margin: float) -> float:
    if _is_missing(v):
        return np.nan
    if col.categorical:
        try:
            k = col.categories.index(str(v))
        except ValueError:
            return np.nan  # unseen level -> missing
        u = k / (len(col.categories) - 1)
    else:
        u = (float(v) - col.lo) / (col.hi - col.lo)
    u = margin + (1.0 - 2.0 * margin) * u
    return float(np.clip(u, 0.0, 1.0))


def apply_preprocess(spec: PreprocessSpec, row: dict):
    """One raw row (mapping column -> value) to ``(x, mask)`` of length N."""
    missing_cols = [c.name for c in spec.columns if c.name not in row]
    if missing_cols:
        raise DomainError(f"row lacks attributes {missing_cols}")
    base = np.array([_transform(c, row[c.name], spec.margin) for c in spec.columns])
    x = np.tile(base, spec.repeat)
    mask = np.isnan(x)
    return np.where(mask, 0.0, x), mask


def transform_table(spec: PreprocessSpec, table):
    """Column-wise :func:`apply_preprocess` over a whole table: ``(X, mask)``."""
    absent = [c.name for c in spec.columns if c.name not in table.data]
    if absent:
        raise DomainError(f"table lacks attributes {absent}")
    cols = []
    for c in spec.columns:
        v = table.data[c.name]
        if c.categorical:
            lut = {k: i for i, k in enumerate(c.categories)}
            idx = np.array([np.nan if _is_missing(e) else lut.get(str(e), np.nan) for e in v], dtype=float)
            u = idx / (len(c.categories) - 1)
        else:
            u = (np.asarray(v, dtype=float) - c.lo) / (c.hi - c.lo)
        cols.append(np.clip(spec.margin + (1.0 - 2.0 * spec.margin) * u, 0.0, 1.0))
    base = np.stack(cols, axis=1) if cols else np.zeros((table.n_rows, 0))
    x = np.tile(base, (1, spec.repeat))
    mask = np.isnan(x)
    return np.where(mask, 0.0, x), mask


def invert_preprocess(spec: PreprocessSpec, x) -> np.ndarray:
    """Map feature vectors back to raw numeric coordinates.

    Repeated copies are averaged. Categorical attributes come back as their
    continuous enumeration index.
    """
    x = np.asarray(x, dtype=float)
    k = len(spec.columns)
    u = x.reshape(x.shape[:-1] + (spec.repeat, k)).mean(axis=-2)
    u = (u - spec.margin) / (1.0 - 2.0 * spec.margin)
    out = np.empty_like(u)
    for j, c in enumerate(spec.columns):
        if c.categorical:
            out[..., j] = u[..., j] * (len(c.categories) - 1)
        else:
            out[..., j] = c.lo + u[..., j] * (c.hi - c.lo)
    return out
