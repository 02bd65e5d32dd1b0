"""Sequential Born-rule sampling from one LPS or an ensemble of them.

Site by site, the conditional density of the next attribute is the quadratic
form ``phi(u)^T M phi(u)``. ``M`` joins the left environment of the values
drawn so far, the current site tensor, and the right environment of the
sites still to come. Future attributes are integrated out by plain
self-contraction, which is exact because every local basis is orthonormal.
Densities are tabulated on a uniform grid and inverted through their
piecewise-linear CDF.

Everything is vectorized over a batch of independent sample paths.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .embedding import KINDS, BasisSpec, embed_local, invert_preprocess
from .model import PulModel, atomic_write, margins_from_logs
from .network import LpsNetwork, _as4, _normalize, _right_envs, _site_mats, _transfer_left

POSITIVE = "positive"
NEGATIVE = "negative"
DEFAULT_GRID = 1024
MIN_GRID = 64


class SamplingError(ArithmeticError):
    pass


@dataclass
class SamplerState:
    """Left environments of one model for a batch of partially drawn paths."""

    net: LpsNetwork
    left: np.ndarray
    right: list[np.ndarray]
    values: np.ndarray
    position: int = 0

    @classmethod
    def start(cls, net: LpsNetwork, batch: int = 1) -> "SamplerState":
        n = net.n_sites
        # right environments with every input leg traced (future sites marginalized)
        right = _right_envs(net, np.zeros((1, n, net.d)), np.ones((1, n), dtype=bool))
        return cls(net, np.ones((batch, 1, 1)), [r[0] for r in right], np.full((batch, n), np.nan))

    def local_matrix(self) -> np.ndarray:
        """``(B, d, d)`` matrices ``M`` of the current position."""
        a4 = _as4(self.net.sites[self.position])
        dl, dr, d, o = a4.shape
        x = a4.transpose(2, 3, 0, 1)  # (d, o, Dl, Dr)
        y = np.matmul(x, self.right[self.position].T)  # contracts the bra's right leg
        z = np.matmul(self.left[:, None, None], y[None])  # (B, d, o, Dl, Dr)
        m = z.reshape(len(self.left), d, -1) @ x.reshape(d, -1).T  # (B, c, a)
        m = m.transpose(0, 2, 1)
        return 0.5 * (m + m.transpose(0, 2, 1))

    def advance(self, u: np.ndarray, phi_u: np.ndarray) -> None:
        """Fix the current attribute to ``u`` (embedded as ``phi_u``) for every path."""
        a4 = _as4(self.net.sites[self.position])
        left = _transfer_left(self.left, _site_mats(a4, phi_u))
        _normalize(left, np.zeros(len(left)))
        self.left = 0.5 * (left + left.transpose(0, 2, 1))
        self.values[:, self.position] = u
        self.position += 1


def _grid(resolution: int) -> np.ndarray:
    if resolution < MIN_GRID:
        raise ValueError(f"grid resolution must be >= {MIN_GRID}")
    return np.linspace(0.0, 1.0, resolution)


def _trapz_mass(dens: np.ndarray, h: float) -> np.ndarray:
    return h * (dens.sum(axis=-1) - 0.5 * (dens[..., 0] + dens[..., -1]))


def _per_model(states, basis, h):
    """Per model: ``(M, normalized grid density, trapezoid mass)``."""
    out = []
    for st in states:
        m = st.local_matrix()
        dens = np.einsum("gc,bgc->bg", basis, np.matmul(basis[None], m))
        dens = np.clip(dens, 0.0, None)
        mass = _trapz_mass(dens, h)
        if np.any(mass <= 0):
            raise SamplingError(f"zero density at position {st.position}")
        out.append((m, dens / mass[:, None], mass))
    return out


def local_density(states: list[SamplerState], kind: str, grid_resolution: int = DEFAULT_GRID):
    """Ensemble-averaged density of the current attribute on a uniform grid.

    Returns ``(grid, density)`` with density of shape ``(B, G)``; each model's
    density is normalized to unit trapezoid mass before averaging.
    """
    grid = _grid(grid_resolution)
    basis = embed_local(grid, kind, states[0].net.d)
    parts = _per_model(states, basis, grid[1] - grid[0])
    return grid, sum(p[1] for p in parts) / len(parts)


def _inverse_cdf(grid: np.ndarray, dens: np.ndarray, r: np.ndarray) -> np.ndarray:
    h = grid[1] - grid[0]
    cells = 0.5 * h * (dens[:, 1:] + dens[:, :-1])
    cdf = np.concatenate([np.zeros((len(dens), 1)), np.cumsum(cells, axis=1)], axis=1)
    cdf /= cdf[:, -1:]
    j = np.clip((cdf < r[:, None]).sum(axis=1) - 1, 0, len(grid) - 2)
    rows = np.arange(len(dens))
    lo, hi = cdf[rows, j], cdf[rows, j + 1]
    frac = np.divide(r - lo, hi - lo, out=np.zeros_like(r), where=hi > lo)
    return np.clip(grid[j] + frac * h, 0.0, 1.0)


@dataclass
class SampleTrace:
    """Drawn feature vectors plus the log of the sampling density at each path."""

    x: np.ndarray
    log_density: np.ndarray


def sample_paths(nets: list[LpsNetwork], basis: BasisSpec, count: int, seed,
                 grid_resolution: int = DEFAULT_GRID) -> SampleTrace:
    """Draw ``count`` paths from the ensemble of ``nets``.

    ``log_density`` accumulates the log of the averaged normalized per-step
    density evaluated at the drawn value (not the grid interpolant).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not nets:
        raise ValueError("empty ensemble")
    n, d = nets[0].n_sites, nets[0].d
    if any(t.n_sites != n or t.d != d for t in nets) or basis.n != n or basis.d != d:
        raise ValueError("ensemble members must share N, d and the basis")
    rng = np.random.default_rng(seed)
    states = [SamplerState.start(t, count) for t in nets]
    logp = np.zeros(count)
    grid = _grid(grid_resolution)
    h = grid[1] - grid[0]
    tables = {k: embed_local(grid, k, d) for k in set(basis.kinds)}
    for i in range(n):
        kind = basis.kinds[i]
        parts = _per_model(states, tables[kind], h)
        dens = sum(p[1] for p in parts) / len(parts)
        u = _inverse_cdf(grid, dens, rng.random(count))
        phi_u = embed_local(u, kind, d)
        # exact density at the drawn point, same per-model normalization
        p = sum(np.clip(np.einsum("bc,bac,ba->b", phi_u, m, phi_u), 0.0, None) / mass for m, _, mass in parts)
        with np.errstate(divide="ignore"):
            logp += np.log(p / len(parts))
        for st in states:
            st.advance(u, phi_u)
    return SampleTrace(states[0].values.copy(), logp)


def sample_one(nets: list[LpsNetwork], basis: BasisSpec, seed, grid_resolution: int = DEFAULT_GRID) -> np.ndarray:
    """A single sample vector in ``[0, 1]^N``; deterministic in ``seed``."""
    return sample_paths(nets, basis, 1, seed, grid_resolution).x[0]


@dataclass
class SampleVerdict:
    x: np.ndarray
    margins: np.ndarray
    accepted: bool
    target: str


def _check_target(target: str):
    if target not in (POSITIVE, NEGATIVE):
        raise ValueError(f"target class must be {POSITIVE!r} or {NEGATIVE!r}")


def ensemble_margins(models: list[PulModel], x) -> np.ndarray:
    """``(M, B)`` margins of feature vectors ``x`` under every model."""
    x = np.atleast_2d(x)
    out = []
    for m in models:
        phi, mask = m.embed(x)
        out.append(margins_from_logs(*m.log_norms(phi, mask)))
    return np.array(out)


def _verdicts(margins: np.ndarray, target: str, threshold: float) -> np.ndarray:
    if target == POSITIVE:
        return np.all(margins > threshold, axis=0)
    return np.all(margins < -threshold, axis=0)


def accept(x, models: list[PulModel], target: str, threshold: float = 20.0) -> SampleVerdict:
    """Accept iff every model's margin clears ``threshold`` toward ``target``."""
    _check_target(target)
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    margins = ensemble_margins(models, x)[:, 0]
    return SampleVerdict(np.asarray(x, float), margins, bool(_verdicts(margins[:, None], target, threshold)[0]), target)


@dataclass
class SampleBatch:
    target: str
    x: np.ndarray
    margins: np.ndarray  # (M, attempts)
    accepted: np.ndarray
    requested: int
    complete: bool
    threshold: float = 20.0
    raw: np.ndarray | None = field(default=None)

    @property
    def attempts(self) -> int:
        return len(self.x)

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.attempts if self.attempts else 0.0

    @property
    def margin_min(self) -> np.ndarray:
        """Least favourable model margin toward the target class, per attempt."""
        return self.margins.min(axis=0) if self.target == POSITIVE else self.margins.max(axis=0)


def sample_batch(models: list[PulModel], target: str, count: int, seed, threshold: float = 20.0,
                 max_attempts_factor: int = 100, grid_resolution: int = DEFAULT_GRID,
                 round_size: int | None = None) -> SampleBatch:
    """Sample from the target-class networks until ``count`` samples pass :func:`accept`.

    Draws in rounds; stops after ``count * max_attempts_factor`` attempts,
    flagging the result incomplete.
    """
    _check_target(target)
    if count < 1:
        raise ValueError("count must be >= 1")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if not models:
        raise ValueError("empty ensemble")
    nets = [m.positive if target == POSITIVE else m.negative for m in models]
    basis = models[0].basis
    budget = count * max_attempts_factor
    round_size = round_size or max(count, 64)
    xs, ms, acc = [], [], []
    n_acc = drawn = 0
    r = 0
    while n_acc < count and drawn < budget:
        k = min(round_size, budget - drawn)
        x = sample_paths(nets, basis, k, [int(seed), r], grid_resolution).x
        mg = ensemble_margins(models, x)
        ok = _verdicts(mg, target, threshold)
        # keep attempts only up to the count-th acceptance
        if n_acc + ok.sum() > count:
            cut = int(np.flatnonzero(ok)[count - n_acc - 1]) + 1
            x, mg, ok = x[:cut], mg[:, :cut], ok[:cut]
        xs.append(x)
        ms.append(mg)
        acc.append(ok)
        n_acc += int(ok.sum())
        drawn += len(x)
        r += 1
    x = np.concatenate(xs)
    raw = invert_preprocess(models[0].preprocessing, x) if models[0].preprocessing.columns else None
    return SampleBatch(target, x, np.concatenate(ms, axis=1), np.concatenate(acc), count,
                       n_acc >= count, threshold, raw)


def samples_csv(batch: SampleBatch, names: list[str] | None = None) -> str:
    """CSV text with attribute columns, ``margin_min``, ``accepted``, ``target_class``."""
    vals = batch.raw if batch.raw is not None else batch.x
    names = names or [f"x{j}" for j in range(vals.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*names, "margin_min", "accepted", "target_class"])
    for row, mm, ok in zip(vals, batch.margin_min, batch.accepted):
        w.writerow([*(repr(float(v)) for v in row), repr(float(mm)), int(ok), batch.target])
    return buf.getvalue()


def write_samples(path, batch: SampleBatch, names: list[str] | None = None) -> None:
    atomic_write(path, samples_csv(batch, names).encode())


__all__ = [
    "KINDS", "SamplerState", "SampleTrace", "SampleVerdict", "SampleBatch", "SamplingError",
    "local_density", "sample_paths", "sample_one", "accept", "sample_batch", "ensemble_margins",
    "samples_csv", "write_samples",
]
