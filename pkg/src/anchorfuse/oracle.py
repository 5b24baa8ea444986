"""Small, deliberately naive reference implementations.

Nothing here reuses the fast paths: the Poisson system is assembled as an
explicit dense matrix and factorized, and propagation is written as plain
loops over pixels with scalar ``math`` calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
import scipy.linalg

from .io import SparsitySpec, synth_sparse
from .refine import RefineParams

MAX_PIXELS = 4096


class OracleSizeError(ValueError):
    pass


def _check_budget(h: int, w: int) -> None:
    if h * w > MAX_PIXELS:
        raise OracleSizeError(f"{h}x{w} exceeds the oracle budget of {MAX_PIXELS} pixels")


def assemble_system(sparse, prior):
    """Explicit ``(A, b, unknowns, v)`` for the restricted Poisson problem."""
    sparse = np.asarray(sparse, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    h, w = sparse.shape
    _check_budget(h, w)

    def is_known(i, j):
        return i == 0 or j == 0 or i == h - 1 or j == w - 1 or sparse[i, j] > 0

    v = np.zeros((h, w))
    unknowns = []
    for i in range(h):
        for j in range(w):
            if sparse[i, j] > 0:
                v[i, j] = sparse[i, j]
            elif is_known(i, j):
                v[i, j] = prior[i, j]
            else:
                unknowns.append((i, j))
    rank = {p: r for r, p in enumerate(unknowns)}

    def lap(f, i, j):
        return 4 * f[i, j] - f[i - 1, j] - f[i + 1, j] - f[i, j - 1] - f[i, j + 1]

    n = len(unknowns)
    a = np.zeros((n, n))
    b = np.zeros(n)
    for r, (i, j) in enumerate(unknowns):
        a[r, r] = 4.0
        for q in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if q in rank:
                a[r, rank[q]] = -1.0
        b[r] = lap(prior, i, j) - lap(v, i, j)
    return a, b, unknowns, v


def dense_poisson_solve(sparse, prior) -> np.ndarray:
    a, b, unknowns, v = assemble_system(sparse, prior)
    out = v.copy()
    if unknowns:
        x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), b)
        for (i, j), val in zip(unknowns, x):
            out[i, j] = val
    return out


# Embeddings and distances are evaluated with 50 significant digits: the
# Mobius form loses most of its precision in doubles near the ball boundary.
_MP_DIGITS = 50


def _embed(f, params: RefineParams):
    wf = params.w_f
    c_in, c_out = wf.shape
    v = [mpmath.fsum(mpmath.mpf(float(f[c])) * mpmath.mpf(float(wf[c, e])) for c in range(c_in))
         for e in range(c_out)]
    norm = mpmath.sqrt(mpmath.fsum(t * t for t in v))
    sk = mpmath.sqrt(params.kappa)
    if norm == 0:
        return v
    factor = min(mpmath.tanh(sk * norm), mpmath.mpf(1.0 - 1e-7)) / (sk * norm)
    return [t * factor for t in v]


def _distance(x, y, kappa):
    # Mobius addition (-x) (+) y written out component by component
    kappa = mpmath.mpf(kappa)
    xy = mpmath.fsum(-a * b for a, b in zip(x, y))
    x2 = mpmath.fsum(a * a for a in x)
    y2 = mpmath.fsum(b * b for b in y)
    den = 1 + 2 * kappa * xy + kappa * kappa * x2 * y2
    m = [((1 + 2 * kappa * xy + kappa * y2) * -a + (1 - kappa * x2) * b) / den
         for a, b in zip(x, y)]
    sk = mpmath.sqrt(kappa)
    z = sk * mpmath.sqrt(mpmath.fsum(t * t for t in m))
    return (2 / sk) * mpmath.atanh(z)


def reference_propagate(init, sensor, mask, features, params: RefineParams) -> np.ndarray:
    init = np.asarray(init, dtype=np.float64)
    sensor = np.asarray(sensor, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    feats = np.asarray(features, dtype=np.float64)
    h, w = init.shape
    _check_budget(h, w)
    p = params.resolved(feats.shape[2])
    n_k = len(p.kernel_sizes)

    with mpmath.workdps(_MP_DIGITS):
        emb = [[_embed(feats[i, j], p) for j in range(w)] for i in range(h)]
    dist = {}

    def pair_distance(a, b):
        key = (min(a, b), max(a, b))
        if key not in dist:
            with mpmath.workdps(_MP_DIGITS):
                dist[key] = float(_distance(emb[key[0][0]][key[0][1]], emb[key[1][0]][key[1][1]], p.kappa))
        return dist[key]

    gates = np.zeros((h, w, n_k))
    alpha = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            f = feats[i, j]
            s = [sum(p.g[k, c] * f[c] for c in range(len(f))) for k in range(n_k)]
            top = max(s)
            ex = [math.exp(t - top) for t in s]
            gates[i, j] = [e / sum(ex) for e in ex]
            z = sum(p.w_alpha[c] * f[c] for c in range(len(f))) + p.alpha_bias
            alpha[i, j] = 1 / (1 + math.exp(-z)) if z >= 0 else math.exp(z) / (1 + math.exp(z))

    # weights[k][i][j] maps neighbour (qi, qj) -> normalized weight
    weights = []
    for k, tau in zip(p.kernel_sizes, p.temperatures):
        r = k // 2
        per_kernel = []
        for i in range(h):
            row = []
            for j in range(w):
                raw = {}
                for qi in range(i - r, i + r + 1):
                    for qj in range(j - r, j + r + 1):
                        if 0 <= qi < h and 0 <= qj < w:
                            raw[(qi, qj)] = math.exp(-pair_distance((i, j), (qi, qj)) / tau)
                total = sum(raw.values())
                row.append({q: val / total for q, val in raw.items()})
            per_kernel.append(row)
        weights.append(per_kernel)

    cur = init.copy()
    for _ in range(p.iterations):
        nxt = np.zeros((h, w))
        for i in range(h):
            for j in range(w):
                mixed = 0.0
                for kk in range(n_k):
                    acc = 0.0
                    for (qi, qj), a in weights[kk][i][j].items():
                        val = init[i, j] if (qi, qj) == (i, j) else cur[qi, qj]
                        acc += a * val
                    mixed += gates[i, j, kk] * acc
                if mask[i, j]:
                    nxt[i, j] = (1 - alpha[i, j]) * mixed + alpha[i, j] * sensor[i, j]
                else:
                    nxt[i, j] = mixed
        cur = nxt
    for i in range(h):
        for j in range(w):
            cur[i, j] = min(max(cur[i, j], 0.0), p.d_max)
    return cur


@dataclass(frozen=True)
class SyntheticScene:
    dense_gt: np.ndarray
    prior: np.ndarray
    sparse: np.ndarray
    mask: np.ndarray
    seed: int


def _smooth_field(rng, h, w, lo, hi):
    """Low-frequency field in ``[lo, hi]``: a random bilinear surface plus one cosine bump."""
    y, x = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    c = rng.uniform(-1, 1, size=4)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    f = (c[0] * x + c[1] * y + c[2] * x * y
         + c[3] * np.cos(np.pi * x + phase[0]) * np.cos(np.pi * y + phase[1]))
    f = (f - f.min()) / (f.max() - f.min() + 1e-12)
    return lo + (hi - lo) * f


def synth_scene(height: int, width: int, seed: int, density: float = 0.06) -> SyntheticScene:
    """Piecewise-planar ground truth and a smoothly distorted prior.

    The prior is ``gain * gt + bias`` with gain in roughly [0.6, 1.4] and bias
    in roughly [-2, 2] m, both low-frequency; anchors are a ``density``
    sample of the ground truth.
    """
    if height < 8 or width < 8:
        raise ValueError(f"synthetic scenes need at least 8x8 pixels, got {height}x{width}")
    rng = np.random.default_rng(seed)
    y, x = np.meshgrid(np.arange(height, dtype=float), np.arange(width, dtype=float), indexing="ij")
    # background: a receding ground-like plane
    gt = 20.0 + rng.uniform(-0.05, 0.05) * x * 64 / width + rng.uniform(0.1, 0.3) * y * 64 / height
    # foreground boxes, each a tilted plane sitting in front
    for _ in range(rng.integers(2, 5)):
        r0, c0 = rng.integers(0, height - 4), rng.integers(0, width - 4)
        r1 = min(height, r0 + rng.integers(4, max(5, height // 2)))
        c1 = min(width, c0 + rng.integers(4, max(5, width // 2)))
        depth = rng.uniform(5.0, 15.0)
        slope = rng.uniform(-0.05, 0.05, size=2)
        region = (slice(r0, r1), slice(c0, c1))
        gt[region] = depth + slope[0] * (y[region] - r0) + slope[1] * (x[region] - c0)
    g_center = rng.uniform(0.8, 1.2)
    gain = _smooth_field(rng, height, width, g_center - 0.2, g_center + 0.2)
    b_center = rng.uniform(-1.0, 1.0)
    bias = _smooth_field(rng, height, width, b_center - 1.0, b_center + 1.0)
    prior = np.maximum(gain * gt + bias, 0.1)
    sparse, mask = synth_sparse(gt, SparsitySpec("uniform-random", density=density, seed=seed))
    return SyntheticScene(gt, prior, sparse, mask, seed)
