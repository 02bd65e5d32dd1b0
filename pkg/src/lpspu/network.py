"""Locally purified state (LPS) projectors and their contractions.

An LPS here is an open-boundary chain of ``N`` site tensors. Core sites have
shape ``(Dl, Dr, d)`` and carry one input leg; output sites have shape
``(Dl, Dr, d, d)`` and carry an input leg followed by an output leg. Output
sites sit at 0-indexed positions ``i % skip == 0``.

All norm-type quantities are returned as natural logarithms. The running
ket/bra environment is rescaled to unit max-abs entry after every site, with
the scale collected in a log accumulator, so values far below the float64
range (``mu1 = -50`` targets) stay representable.

Embedded inputs are passed as arrays ``phi`` of shape ``(B, N, d)`` (or
``(N, d)`` for a single sample) plus an optional boolean ``mask`` of the same
leading shape marking *missing* attributes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEG_INF = -np.inf
_CHUNK = 128
_DENSE_LIMIT = 4096


class ParameterError(ValueError):
    """Raised for inconsistent dimensions or invalid network parameters."""


class GradientError(ArithmeticError):
    """Raised when a log-norm gradient is undefined (zero norm)."""


@dataclass
class LpsNetwork:
    sites: list[np.ndarray]
    skip: int

    def __post_init__(self):
        if not self.sites:
            raise ParameterError("network needs at least one site")
        if self.skip < 1:
            raise ParameterError(f"skip must be >= 1, got {self.skip}")
        d = self.sites[0].shape[2]
        for i, t in enumerate(self.sites):
            want = 4 if is_output_site(i, self.skip) else 3
            if t.ndim != want:
                raise ParameterError(f"site {i} has ndim {t.ndim}, expected {want}")
            if t.shape[2] != d or (want == 4 and t.shape[3] != d):
                raise ParameterError(f"site {i} physical legs {t.shape[2:]} != {d}")
        if self.sites[0].shape[0] != 1 or self.sites[-1].shape[1] != 1:
            raise ParameterError("boundary bonds must have dimension 1")
        for i in range(len(self.sites) - 1):
            if self.sites[i].shape[1] != self.sites[i + 1].shape[0]:
                raise ParameterError(f"bond mismatch between sites {i} and {i + 1}")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def d(self) -> int:
        return self.sites[0].shape[2]

    @property
    def bond(self) -> int:
        return max(max(t.shape[0], t.shape[1]) for t in self.sites)

    @property
    def n_outputs(self) -> int:
        return sum(is_output_site(i, self.skip) for i in range(self.n_sites))

    def copy(self) -> "LpsNetwork":
        return LpsNetwork([t.copy() for t in self.sites], self.skip)

    def scaled_site(self, i: int, c: float) -> "LpsNetwork":
        """Copy with site ``i`` multiplied by ``c``."""
        out = self.copy()
        out.sites[i] = out.sites[i] * c
        return out


def is_output_site(i: int, skip: int) -> bool:
    return i % skip == 0


def _as4(t: np.ndarray) -> np.ndarray:
    # cores get a trivial output leg so every site looks like (Dl, Dr, d, o)
    return t[..., None] if t.ndim == 3 else t


def init_network(n: int, d: int, bond: int, skip: int, seed) -> LpsNetwork:
    """Random Gaussian LPS with ``E ||P||_F^2 = 1``.

    Site ``i`` gets variance ``1 / (Dr_i * d * o_i)`` where ``o_i`` is its
    output-leg size, which makes the expected squared Frobenius norm of the
    full map exactly one.
    """
    if n < 1 or d < 1 or bond < 1 or not 1 <= skip <= n:
        raise ParameterError(f"invalid dimensions N={n} d={d} D={bond} S={skip}")
    rng = np.random.default_rng(seed)
    sites = []
    for i in range(n):
        dl = 1 if i == 0 else bond
        dr = 1 if i == n - 1 else bond
        if is_output_site(i, skip):
            shape, o = (dl, dr, d, d), d
        else:
            shape, o = (dl, dr, d), 1
        std = 1.0 / np.sqrt(dr * d * o)
        sites.append(rng.normal(0.0, std, size=shape))
    return LpsNetwork(sites, skip)


def _check_phi(net: LpsNetwork, phi: np.ndarray, mask):
    phi = np.asarray(phi, dtype=float)
    single = phi.ndim == 2
    if single:
        phi = phi[None]
    if phi.ndim != 3 or phi.shape[1:] != (net.n_sites, net.d):
        raise ParameterError(
            f"embedded input shape {phi.shape[1:]} != ({net.n_sites}, {net.d})"
        )
    if mask is None:
        mask = np.zeros(phi.shape[:2], dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if single:
            mask = mask[None]
        if mask.shape != phi.shape[:2]:
            raise ParameterError(f"mask shape {mask.shape[1:]} != ({net.n_sites},)")
    return phi, mask, single


def _normalize(env: np.ndarray, logacc: np.ndarray) -> None:
    # environments are PSD, so the max-abs entry sits on the diagonal
    scale = np.diagonal(env, axis1=1, axis2=2).max(axis=1)
    ok = scale > 0
    if ok.all():
        env /= scale[:, None, None]
        logacc += np.log(scale)
        return
    env[ok] /= scale[ok, None, None]
    with np.errstate(divide="ignore"):
        logacc += np.where(ok, np.log(np.where(ok, scale, 1.0)), NEG_INF)


def _site_mats(a4: np.ndarray, phi_i: np.ndarray) -> np.ndarray:
    """Contract the input leg: (Dl, Dr, d, o), (B, d) -> (B, Dl, o, Dr)."""
    dl, dr, d, o = a4.shape
    flat = a4.transpose(2, 0, 3, 1).reshape(d, dl * o * dr)
    return (phi_i @ flat).reshape(len(phi_i), dl, o, dr)


def _stacked(a4: np.ndarray) -> np.ndarray:
    """(Dl, Dr, d, o) -> (Dl, d*o, Dr): one matrix per (input, output) pair."""
    dl, dr, d, o = a4.shape
    return a4.transpose(0, 2, 3, 1).reshape(dl, d * o, dr)


# Site matrices are laid out (B, Dl, K, Dr) so that both transfers below are
# two batched matmuls over reshaped views.


def _transfer_left(env, m):
    """sum_k m_k^T env m_k for m of shape (B, Dl, K, Dr) or (Dl, K, Dr)."""
    if m.ndim == 4:
        b, dl, k, dr = m.shape
        x = np.matmul(env, m.reshape(b, dl, k * dr)).reshape(b, dl * k, dr)
        return np.matmul(m.reshape(b, dl * k, dr).transpose(0, 2, 1), x)
    dl, k, dr = m.shape
    x = np.matmul(env, m.reshape(dl, k * dr)).reshape(len(env), dl * k, dr)
    return np.matmul(m.reshape(dl * k, dr).T, x)


def _transfer_right(env, m):
    """sum_k m_k env m_k^T for m of shape (B, Dl, K, Dr) or (Dl, K, Dr)."""
    if m.ndim == 4:
        b, dl, k, dr = m.shape
        y = np.matmul(m.reshape(b, dl * k, dr), env).reshape(b, dl, k * dr)
        return np.matmul(y, m.reshape(b, dl, k * dr).transpose(0, 2, 1))
    dl, k, dr = m.shape
    y = np.matmul(m.reshape(dl * k, dr), env).reshape(len(env), dl, k * dr)
    return np.matmul(y, m.reshape(dl, k * dr).T)


def _left_step(env, a4, phi_i, miss_i):
    """Absorb one site into a left environment (B, Dl, Dl) -> (B, Dr, Dr)."""
    new = _transfer_left(env, _site_mats(a4, phi_i))
    if miss_i.any():
        # input and output legs both traced between ket and bra
        new[miss_i] = _transfer_left(env[miss_i], _stacked(a4))
    return new


def _right_step(env, a4, phi_i, miss_i):
    """Absorb one site into a right environment (B, Dr, Dr) -> (B, Dl, Dl)."""
    new = _transfer_right(env, _site_mats(a4, phi_i))
    if miss_i.any():
        new[miss_i] = _transfer_right(env[miss_i], _stacked(a4))
    return new


def _log_sq_norms(net: LpsNetwork, phi: np.ndarray, mask: np.ndarray) -> np.ndarray:
    b = len(phi)
    env = np.ones((b, 1, 1))
    logacc = np.zeros(b)
    for i, t in enumerate(net.sites):
        env = _left_step(env, _as4(t), phi[:, i], mask[:, i])
        _normalize(env, logacc)
    with np.errstate(divide="ignore"):
        return np.log(np.clip(env[:, 0, 0], 0.0, None)) + logacc


def log_norms(net: LpsNetwork, phi, mask=None) -> np.ndarray:
    """Batch of ``ln ||P Phi(x)||_2``, marginalizing masked attributes."""
    phi, mask, single = _check_phi(net, phi, mask)
    out = 0.5 * _log_sq_norms(net, phi, mask)
    return out[0] if single else out


def log_norm(net: LpsNetwork, phi) -> float:
    """``ln ||P Phi(x)||_2`` for one fully observed sample; ``-inf`` on zero."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2:
        raise ParameterError("log_norm expects a single (N, d) sample")
    return float(log_norms(net, phi))


def marginalized_log_norm(net: LpsNetwork, phi, mask) -> float:
    """Like :func:`log_norm`, with masked sites traced out (their values ignored)."""
    phi = np.asarray(phi, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (net.n_sites,):
        raise ParameterError(f"mask length {mask.shape} != {net.n_sites}")
    phi = np.where(mask[:, None], 0.0, phi)
    return float(log_norms(net, phi, mask))


def log_frobenius(net: LpsNetwork) -> float:
    """``ln ||P||_F`` by ket/bra self-contraction."""
    phi = np.zeros((1, net.n_sites, net.d))
    mask = np.ones((1, net.n_sites), dtype=bool)
    return float(0.5 * _log_sq_norms(net, phi, mask)[0])


def _right_envs(net, phi, mask, with_logs: bool = False):
    """Normalized right environments; ``envs[i]`` covers sites ``i+1..N-1``.

    With ``with_logs`` also returns the squared-norm logs of the full chain.
    """
    b, n = phi.shape[:2]
    envs = [None] * n
    env = np.ones((b, 1, 1))
    logacc = np.zeros(b)
    for i in range(n - 1, -1, -1):
        envs[i] = env
        env = _right_step(env, _as4(net.sites[i]), phi[:, i], mask[:, i])
        _normalize(env, logacc)
    if with_logs:
        with np.errstate(divide="ignore"):
            return envs, np.log(np.clip(env[:, 0, 0], 0.0, None)) + logacc
    return envs


@dataclass
class ForwardCache:
    """Log-norms of a batch plus, when small enough, its right environments."""

    logs: np.ndarray
    envs: list | None


_CACHE_LIMIT = 1 << 23  # floats kept per cached batch


def forward(net: LpsNetwork, phi, mask=None) -> ForwardCache:
    """Batch log-norms, keeping right environments for a following gradient call."""
    phi, mask, _ = _check_phi(net, phi, mask)
    b, n = phi.shape[:2]
    if b * n * net.bond ** 2 > _CACHE_LIMIT:
        return ForwardCache(0.5 * _log_sq_norms(net, phi, mask), None)
    envs, logs = _right_envs(net, phi, mask, with_logs=True)
    return ForwardCache(0.5 * logs, envs)


def _accumulate_grads(net, phi, mask, coeffs, grads, right=None):
    if right is None:
        right = _right_envs(net, phi, mask)
    b = len(phi)
    left = np.ones((b, 1, 1))
    for i, t in enumerate(net.sites):
        a4 = _as4(t)
        dl, dr, d, o = a4.shape
        r = right[i]
        miss = mask[:, i]
        m = _site_mats(a4, phi[:, i])
        lm = np.matmul(left, m.reshape(b, dl, o * dr)).reshape(b, dl * o, dr)
        g = np.matmul(lm, r)
        new_left = np.matmul(m.reshape(b, dl * o, dr).transpose(0, 2, 1), lm)
        # local squared norm: <new_left, r>, r is symmetric
        zloc = np.einsum("bij,bij->b", new_left, r)
        if miss.any():
            st = _stacked(a4)
            k = d * o
            lmm = np.matmul(left[miss], st.reshape(dl, k * dr)).reshape(-1, dl * k, dr)
            gm = np.matmul(lmm, r[miss])
            new_left[miss] = np.matmul(st.reshape(dl * k, dr).T, lmm)
            zloc[miss] = np.einsum("bij,bij->b", new_left[miss], r[miss])
        if np.any(zloc[coeffs != 0] <= 0):
            raise GradientError(f"log-norm gradient undefined: zero norm at site {i}")
        w = np.divide(coeffs, zloc, out=np.zeros_like(coeffs), where=coeffs != 0)
        wp = np.where(miss, 0.0, w)
        contrib = ((wp[:, None] * phi[:, i]).T @ g.reshape(b, -1)).reshape(d, dl, o, dr).transpose(1, 3, 0, 2)
        if miss.any():
            cm = np.tensordot(w[miss], gm, axes=1).reshape(dl, d, o, dr).transpose(0, 3, 1, 2)
            contrib = contrib + cm
        grads[i] += contrib.reshape(t.shape)
        _normalize(new_left, np.zeros(b))
        left = new_left


def weighted_grad_log_norms(net: LpsNetwork, phi, coeffs, mask=None, cache: ForwardCache | None = None) -> list[np.ndarray]:
    """``sum_b coeffs[b] * d ln||P Phi(x_b)|| / d sites`` via environment sweeps.

    Samples are processed in chunks so memory stays ``O(chunk * N * D^2)``,
    unless ``cache`` (from :func:`forward` on the same batch) already holds
    the right environments.
    """
    phi, mask, single = _check_phi(net, phi, mask)
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    grads = [np.zeros_like(t) for t in net.sites]
    if cache is not None and cache.envs is not None:
        if np.any(coeffs != 0):
            _accumulate_grads(net, phi, mask, coeffs, grads, cache.envs)
        return grads
    for lo in range(0, len(phi), _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        if np.any(coeffs[sl] != 0):
            _accumulate_grads(net, phi[sl], mask[sl], coeffs[sl], grads)
    return grads


def grad_log_norm(net: LpsNetwork, phi, mask=None) -> list[np.ndarray]:
    """Gradient of ``ln ||P Phi(x)||_2`` for one sample."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2:
        raise ParameterError("grad_log_norm expects a single (N, d) sample")
    m = None if mask is None else np.asarray(mask, dtype=bool)[None]
    return weighted_grad_log_norms(net, phi[None], [1.0], m)


def grad_log_frobenius(net: LpsNetwork) -> list[np.ndarray]:
    """Gradient of ``ln ||P||_F``."""
    phi = np.zeros((1, net.n_sites, net.d))
    mask = np.ones((1, net.n_sites), dtype=bool)
    return weighted_grad_log_norms(net, phi, [1.0], mask)


def dense_materialize(net: LpsNetwork) -> np.ndarray:
    """The explicit ``d^n_out x d^N`` matrix, indices big-endian by site."""
    if net.d ** net.n_sites > _DENSE_LIMIT:
        raise ParameterError(f"d^N = {net.d ** net.n_sites} exceeds {_DENSE_LIMIT}")
    acc = np.ones((1, 1, 1))
    for t in net.sites:
        a4 = _as4(t)
        p, q, _ = acc.shape
        acc = np.einsum("pqa,abso->poqsb", acc, a4)
        acc = acc.reshape(p * a4.shape[3], q * a4.shape[2], a4.shape[1])
    return acc[:, :, 0]


def dense_embedding(phi) -> np.ndarray:
    """Kronecker product of per-site vectors (oracle only)."""
    out = np.ones(1)
    for v in np.asarray(phi, dtype=float):
        out = np.kron(out, v)
    return out
