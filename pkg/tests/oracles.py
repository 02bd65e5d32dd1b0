"""Independent reference computations used by the tests.

Nothing here calls into the sweep code under test: dense maps are built
with a single einsum over the whole chain, integrals use Gauss-Legendre
quadrature on the raw squared norm, and gradients use central differences.
"""

import itertools
import string

import numpy as np

from lpspu.embedding import embed_local


def gl_nodes(n, a=0.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def gram(kind, d, nodes=256):
    u, w = gl_nodes(nodes)
    phi = embed_local(u, kind, d)
    return phi.T @ (w[:, None] * phi)


def dense_map(sites):
    """``(d^n_out, d^N)`` matrix of the chain, one einsum, big-endian legs."""
    letters = iter(string.ascii_letters)
    bonds = [next(letters) for _ in range(len(sites) + 1)]
    ins, outs, terms, ops = [], [], [], []
    for i, t in enumerate(sites):
        a = next(letters)
        ins.append(a)
        sub = bonds[i] + bonds[i + 1] + a
        if t.ndim == 4:
            o = next(letters)
            outs.append(o)
            sub += o
        terms.append(sub)
        ops.append(t)
    spec = ",".join(terms) + "->" + bonds[0] + bonds[-1] + "".join(outs) + "".join(ins)
    full = np.einsum(spec, *ops, optimize=True)[0, 0]
    d = sites[0].shape[2]
    return full.reshape(d ** len(outs), d ** len(ins))


def kron_all(vecs):
    out = np.ones(1)
    for v in vecs:
        out = np.kron(out, v)
    return out


def sq_norm(dense, phi):
    y = dense @ kron_all(phi)
    return float(y @ y)


def sq_norms(dense, points, kinds, d):
    """Batched squared output norms at raw points ``(B, N)``."""
    points = np.atleast_2d(points)
    acc = np.ones((len(points), 1))
    for j, k in enumerate(kinds):
        phi = embed_local(points[:, j], k, d)
        acc = (acc[:, :, None] * phi[:, None, :]).reshape(len(points), -1)
    y = acc @ dense.T
    return np.sum(y * y, axis=1)


def embed_point(x, kinds, d):
    return np.array([embed_local(v, k, d) for v, k in zip(x, kinds)])


def marginal_sq_norm(dense, x, kinds, d, missing, nodes=40):
    """Integral of the squared norm over the ``missing`` coordinates."""
    u, w = gl_nodes(nodes)
    total = 0.0
    for combo in itertools.product(range(nodes), repeat=len(missing)):
        xx = np.array(x, dtype=float)
        weight = 1.0
        for pos, j in zip(missing, combo):
            xx[pos] = u[j]
            weight *= w[j]
        total += weight * sq_norm(dense, embed_point(xx, kinds, d))
    return total


def site_marginal_density(dense, kinds, d, site, u_eval, nodes=32):
    """Unnormalized marginal density of one coordinate at points ``u_eval``."""
    n = len(kinds)
    others = [j for j in range(n) if j != site]
    gu, gw = gl_nodes(nodes)
    out = np.zeros(len(u_eval))
    for combo in itertools.product(range(nodes), repeat=len(others)):
        wt = np.prod([gw[c] for c in combo])
        x = np.zeros(n)
        for pos, c in zip(others, combo):
            x[pos] = gu[c]
        for k, u in enumerate(u_eval):
            x[site] = u
            out[k] += wt * sq_norm(dense, embed_point(x, kinds, d))
    return out


def total_mass(dense, kinds, d, nodes=24):
    gu, gw = gl_nodes(nodes)
    tot = 0.0
    for combo in itertools.product(range(nodes), repeat=len(kinds)):
        x = gu[list(combo)]
        tot += np.prod(gw[list(combo)]) * sq_norm(dense, embed_point(x, kinds, d))
    return tot


def central_diff(f, params, h=1e-6):
    """Gradient of scalar ``f()`` w.r.t. every entry of the arrays in ``params`` (mutated in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + h
            fp = f()
            p[idx] = keep - h
            fm = f()
            p[idx] = keep
            g[idx] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def rel_err(a, b):
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def spearman_rank_formula(xs, ys):
    """1 - 6 sum d^2 / (n (n^2 - 1)); valid without ties."""
    rx = np.argsort(np.argsort(xs)) + 1
    ry = np.argsort(np.argsort(ys)) + 1
    n = len(xs)
    return 1 - 6 * np.sum((rx - ry) ** 2) / (n * (n * n - 1))


def best_pair_brute(preds):
    """Pair with the largest agreement, scanning all ordered pairs."""
    preds = np.asarray(preds, bool)
    best, val = None, -1.0
    m = len(preds)
    for i in range(m):
        for j in range(m):
            if i < j:
                a = np.mean(preds[i] == preds[j])
                if a > val:
                    best, val = (i, j), a
    return best, val
