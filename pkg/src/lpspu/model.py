"""Trained positive/negative projector pairs, prediction and model files."""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .embedding import COSINE, KINDS, BasisSpec, ColumnTransform, PreprocessSpec, embed
from .network import LpsNetwork, is_output_site, log_norms

MAGIC = b"LPSPUL1"
VERSION = 1
_HEADER = struct.Struct("<HIIIIddq")


class ClassificationError(ArithmeticError):
    pass


class ModelFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class PulModel:
    positive: LpsNetwork
    negative: LpsNetwork
    basis: BasisSpec
    preprocessing: PreprocessSpec
    seed: int = 0
    mu0: float = 5.0
    mu1: float = -50.0
    bond: int = field(default=0)

    def __post_init__(self):
        p, n = self.positive, self.negative
        if (p.n_sites, p.d, p.skip) != (n.n_sites, n.d, n.skip) or p.bond != n.bond:
            raise ValueError("positive and negative networks differ in layout")
        if self.basis.n != p.n_sites or self.basis.d != p.d:
            raise ValueError("basis does not match network dimensions")
        if not self.mu0 > self.mu1:
            raise ValueError("mu0 must exceed mu1")
        if self.bond == 0:
            self.bond = p.bond

    @property
    def nets(self):
        return self.positive, self.negative

    def embed(self, x, mask=None):
        return embed(x, self.basis, mask)

    def log_norms(self, phi, mask=None):
        """``(ln||y_p||, ln||y_n||)`` for a batch of embedded samples."""
        return log_norms(self.positive, phi, mask), log_norms(self.negative, phi, mask)

    def copy(self) -> "PulModel":
        return PulModel(self.positive.copy(), self.negative.copy(), self.basis,
                        self.preprocessing, self.seed, self.mu0, self.mu1, self.bond)


def margins_from_logs(lp, ln) -> np.ndarray:
    lp, ln = np.asarray(lp, float), np.asarray(ln, float)
    both = np.isneginf(lp) & np.isneginf(ln)
    if np.any(both):
        raise ClassificationError(f"both projections vanish for {int(both.sum())} sample(s)")
    return lp - ln


def predict(model: PulModel, phi, mask=None):
    """Labels (True = positive) and margins ``ln||y_p|| - ln||y_n||``.

    A zero margin is classified negative.
    """
    m = margins_from_logs(*model.log_norms(phi, mask))
    return m > 0, m


def classify(model: PulModel, phi, mask=None):
    """Single-sample form of :func:`predict`: ``("positive"|"negative", margin)``."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2:
        raise ValueError("classify expects one (N, d) embedded sample")
    lab, m = predict(model, phi[None], None if mask is None else np.asarray(mask, bool)[None])
    return ("positive" if lab[0] else "negative"), float(m[0])


def predict_features(model: PulModel, x, mask=None):
    phi, mask = model.embed(x, mask)
    return predict(model, phi, mask)


# --- serialization ------------------------------------------------------------


def _spec_to_json(spec: PreprocessSpec) -> bytes:
    cols = [
        {"name": c.name, "categories": c.categories} if c.categorical else {"name": c.name, "lo": c.lo, "hi": c.hi}
        for c in spec.columns
    ]
    blob = {"columns": cols, "dropped": spec.dropped, "repeat": spec.repeat, "margin": spec.margin}
    return json.dumps(blob).encode("utf-8")


def _spec_from_json(raw: bytes) -> PreprocessSpec:
    blob = json.loads(raw.decode("utf-8"))
    cols = [
        ColumnTransform(c["name"], categories=c["categories"]) if "categories" in c
        else ColumnTransform(c["name"], lo=c["lo"], hi=c["hi"])
        for c in blob["columns"]
    ]
    return PreprocessSpec(cols, blob["dropped"], blob["repeat"], blob["margin"])


def model_to_bytes(m: PulModel) -> bytes:
    net = m.positive
    parts = [MAGIC, _HEADER.pack(VERSION, net.n_sites, net.d, m.bond, net.skip, m.mu0, m.mu1, m.seed)]
    parts.append(bytes(KINDS.index(k) for k in m.basis.kinds))
    spec = _spec_to_json(m.preprocessing)
    parts += [struct.pack("<I", len(spec)), spec]
    for n in m.nets:
        for t in n.sites:
            parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return b"".join(parts)


def _site_shapes(n, d, bond, skip):
    for i in range(n):
        dl = 1 if i == 0 else bond
        dr = 1 if i == n - 1 else bond
        yield (dl, dr, d, d) if is_output_site(i, skip) else (dl, dr, d)


def model_from_bytes(raw: bytes) -> PulModel:
    off = 0
    if raw[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"bad magic {raw[:len(MAGIC)]!r}, expected {MAGIC!r}", 0)
    off = len(MAGIC)
    if len(raw) < off + _HEADER.size:
        raise ModelFormatError("truncated header", len(raw))
    version, n, d, bond, skip, mu0, mu1, seed = _HEADER.unpack_from(raw, off)
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}", off)
    off += _HEADER.size
    if len(raw) < off + n + 4:
        raise ModelFormatError("truncated basis table", len(raw))
    codes = raw[off:off + n]
    if any(c >= len(KINDS) for c in codes):
        raise ModelFormatError("invalid basis code", off)
    basis = BasisSpec(tuple(KINDS[c] for c in codes), d)
    off += n
    (slen,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + slen:
        raise ModelFormatError("truncated preprocessing table", len(raw))
    try:
        spec = _spec_from_json(raw[off:off + slen])
    except (ValueError, KeyError) as exc:
        raise ModelFormatError(f"corrupt preprocessing table: {exc}", off) from None
    off += slen
    nets = []
    for _ in range(2):
        sites = []
        for shape in _site_shapes(n, d, bond, skip):
            size = int(np.prod(shape)) * 8
            if len(raw) < off + size:
                raise ModelFormatError("truncated tensor data", len(raw))
            sites.append(np.frombuffer(raw, dtype="<f8", count=size // 8, offset=off).reshape(shape).astype(float))
            off += size
        nets.append(LpsNetwork(sites, skip))
    if off != len(raw):
        raise ModelFormatError(f"{len(raw) - off} trailing bytes", off)
    return PulModel(nets[0], nets[1], basis, spec, seed, mu0, mu1, bond)


def atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(m: PulModel, path) -> None:
    atomic_write(path, model_to_bytes(m))


def load_model(path) -> PulModel:
    with open(path, "rb") as f:
        return model_from_bytes(f.read())


def default_basis(n: int, d: int, kind: str = COSINE, seed: int = 0) -> BasisSpec:
    if kind == "random":
        return BasisSpec.random(n, d, seed)
    return BasisSpec.uniform(n, d, kind)
