"""Hyperbolic-affinity, center-tethered multi-kernel propagation.

Per-pixel features are projected by ``w_f``, mapped into a Poincare ball of
curvature ``kappa`` and compared with the hyperbolic distance. Each kernel
size gets its own row-stochastic affinity; per-pixel gates mix the kernels
and a logistic anchor map blends the result toward sensor depth where a
measurement exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, softmax

from .errors import DimensionError, DomainError, GridError
from .grid import as_depth, as_features, as_mask, check_min_size, check_same_shape

BALL_EPS = 1e-7
_MAX_HALF_RADIUS = math.atanh(1.0 - BALL_EPS)


def _default_alpha_bias() -> float:
    return math.log(0.9 / 0.1)


@dataclass
class RefineParams:
    """Propagation hyper-parameters and the linear maps acting on features.

    ``w_f`` has shape ``(C, C_e)``; ``g`` has one row of ``C`` coefficients per
    kernel; ``w_alpha`` has ``C`` coefficients and ``alpha_bias`` is added
    before the logistic. Leaving a map as ``None`` selects its default
    (identity projection, uniform gates, alpha = 0.9 at zero features)
    once the channel count is known, see :meth:`resolved`.
    """

    kappa: float = 1.0
    kernel_sizes: tuple[int, ...] = (3, 5, 7)
    temperatures: tuple[float, ...] = (0.1, 0.2, 0.4)
    iterations: int = 6
    d_max: float = 90.0
    w_f: np.ndarray | None = None
    g: np.ndarray | None = None
    w_alpha: np.ndarray | None = None
    alpha_bias: float = field(default_factory=_default_alpha_bias)

    def __post_init__(self):
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        self.temperatures = tuple(float(t) for t in self.temperatures)
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.kernel_sizes:
            raise ValueError("at least one kernel size is required")
        for k in self.kernel_sizes:
            if k < 3 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and >= 3, got {k}")
        if len(self.temperatures) != len(self.kernel_sizes):
            raise ValueError(
                f"{len(self.kernel_sizes)} kernels but {len(self.temperatures)} temperatures"
            )
        if any(not t > 0 for t in self.temperatures):
            raise ValueError(f"temperatures must be positive, got {self.temperatures}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be an integer >= 1, got {self.iterations}")
        self.iterations = int(self.iterations)
        if not self.d_max > 0:
            raise ValueError(f"d_max must be positive, got {self.d_max}")

    def resolved(self, channels: int) -> "RefineParams":
        """Copy with every linear map materialized for ``channels`` features."""
        n_k = len(self.kernel_sizes)
        w_f = np.eye(channels) if self.w_f is None else np.asarray(self.w_f, dtype=np.float64)
        g = np.zeros((n_k, channels)) if self.g is None else np.asarray(self.g, dtype=np.float64)
        w_alpha = (np.zeros(channels) if self.w_alpha is None
                   else np.asarray(self.w_alpha, dtype=np.float64).reshape(-1))
        if w_f.ndim != 2 or w_f.shape[0] != channels:
            raise DimensionError(f"w_f must be ({channels}, C_e), got {w_f.shape}")
        if g.shape != (n_k, channels):
            raise DimensionError(f"g must be ({n_k}, {channels}), got {g.shape}")
        if w_alpha.shape != (channels,):
            raise DimensionError(f"w_alpha must have {channels} entries, got {w_alpha.shape}")
        return RefineParams(self.kappa, self.kernel_sizes, self.temperatures, self.iterations,
                            self.d_max, w_f, g, w_alpha, float(self.alpha_bias))


@dataclass(frozen=True)
class AffinityStack:
    """Per-kernel neighbour weights and per-pixel kernel gates.

    ``weights[i]`` has shape ``(H, W, k*k)`` for kernel ``kernel_sizes[i]``;
    the last axis enumerates offsets row-major over the ``k x k`` window and
    out-of-grid neighbours carry weight 0. ``gates`` has shape ``(H, W, K)``.
    """

    kernel_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    gates: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.gates.shape[:2]


def _polar_embedding(v, kappa: float):
    """Hyperbolic half-radius and unit direction of ``exp_map_origin(v)``.

    A point ``h = tanh(a) u / sqrt(kappa)`` is returned as ``(a, u)``, with
    ``a`` capped where ``tanh`` is. Distances computed from this form never
    round ``h`` near the ball boundary.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    a = np.minimum(math.sqrt(kappa) * norm, _MAX_HALF_RADIUS)
    return a, v / safe[..., None]


def _polar_distance(a1, u1, a2, u2, kappa: float) -> np.ndarray:
    # hyperbolic law of cosines in half-angle form:
    #   sinh^2(sqrt(k) d / 2) = sinh^2(a1 - a2) + sinh(2 a1) sinh(2 a2) |u1 - u2|^2 / 4
    chord = np.sum((u1 - u2) ** 2, axis=-1) / 4.0
    half = np.sinh(a1 - a2) ** 2 + np.sinh(2 * a1) * np.sinh(2 * a2) * chord
    return (2.0 / math.sqrt(kappa)) * np.arcsinh(np.sqrt(half))


def exp_map_origin(v, kappa: float) -> np.ndarray:
    """Exponential map at the origin of the curvature-``kappa`` Poincare ball.

    Works on the last axis. Outputs are kept strictly inside the ball by
    capping ``tanh`` at ``1 - 1e-7``.
    """
    v = np.asarray(v, dtype=np.float64)
    sk = math.sqrt(kappa)
    norm = sk * np.linalg.norm(v, axis=-1, keepdims=True)
    t = np.minimum(np.tanh(norm), 1.0 - BALL_EPS)
    safe = np.where(norm > 0, norm, 1.0)
    return v * np.where(norm > 0, t / safe, 1.0)


def mobius_add(x, y, kappa: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xy = np.sum(x * y, axis=-1, keepdims=True)
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    y2 = np.sum(y * y, axis=-1, keepdims=True)
    num = (1 + 2 * kappa * xy + kappa * y2) * x + (1 - kappa * x2) * y
    den = 1 + 2 * kappa * xy + kappa**2 * x2 * y2
    return num / den


def _distance_from_margins(x, y, margin_x, margin_y, kappa: float) -> np.ndarray:
    # 2/sqrt(k) artanh(sqrt(k) |(-x) (+) y|) rewritten without the cancellation
    # in the Mobius denominator:  2/sqrt(k) asinh(sqrt(k) |x - y| / sqrt(mx my))
    sk = math.sqrt(kappa)
    diff = np.linalg.norm(np.asarray(y) - np.asarray(x), axis=-1)
    return (2.0 / sk) * np.arcsinh(sk * diff / np.sqrt(margin_x * margin_y))


def poincare_distance(x, y, kappa: float):
    """Hyperbolic distance between points of the curvature-``kappa`` ball.

    Equal to ``(2/sqrt(kappa)) * artanh(sqrt(kappa) * |(-x) (+) y|)``.
    Raises :class:`DomainError` if either point is not strictly inside the
    ball of radius ``1/sqrt(kappa)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    margins = []
    for name, pt in (("x", x), ("y", y)):
        m = 1.0 - kappa * np.sum(pt * pt, axis=-1)
        if np.any(m <= 0.0):
            raise DomainError(f"{name} lies on or outside the Poincare ball")
        margins.append(m)
    d = _distance_from_margins(x, y, margins[0], margins[1], kappa)
    return float(d) if d.ndim == 0 else d


def _offsets(k: int):
    r = k // 2
    return [(di, dj) for di in range(-r, r + 1) for dj in range(-r, r + 1)]


def _shift(arr: np.ndarray, di: int, dj: int, fill: float = 0.0) -> np.ndarray:
    """``out[i, j] = arr[i + di, j + dj]`` with ``fill`` outside the grid."""
    h, w = arr.shape[:2]
    out = np.full_like(arr, fill)
    src_r = slice(max(di, 0), h + min(di, 0))
    dst_r = slice(max(-di, 0), h + min(-di, 0))
    src_c = slice(max(dj, 0), w + min(dj, 0))
    dst_c = slice(max(-dj, 0), w + min(-dj, 0))
    out[dst_r, dst_c] = arr[src_r, src_c]
    return out


def _inside(shape, di: int, dj: int) -> np.ndarray:
    return _shift(np.ones(shape, dtype=bool), di, dj, False)


def embed_features(features, params: RefineParams) -> np.ndarray:
    feats = as_features(features)
    p = params.resolved(feats.shape[2])
    return exp_map_origin(feats @ p.w_f, p.kappa)


def kernel_gates(features, params: RefineParams) -> np.ndarray:
    feats = as_features(features)
    p = params.resolved(feats.shape[2])
    return softmax(feats @ p.g.T, axis=-1)


def anchor_map(features, params: RefineParams) -> np.ndarray:
    feats = as_features(features)
    p = params.resolved(feats.shape[2])
    return expit(feats @ p.w_alpha + p.alpha_bias)


def affinity_weights(features, params: RefineParams) -> AffinityStack:
    """Row-stochastic hyperbolic affinities for every kernel, plus gates.

    Neighbours outside the image are dropped and each row is normalized over
    the neighbours that remain, so kernels may exceed the grid size.
    """
    feats = as_features(features)
    h, w = feats.shape[:2]
    check_min_size((h, w))
    p = params.resolved(feats.shape[2])
    radius, direction = _polar_embedding(feats @ p.w_f, p.kappa)
    dist_cache = {}
    weights = []
    for k, tau in zip(params.kernel_sizes, params.temperatures):
        logits = np.full((h, w, k * k), -np.inf)
        for idx, (di, dj) in enumerate(_offsets(k)):
            if (di, dj) not in dist_cache:
                inside = _inside((h, w), di, dj)
                d = _polar_distance(radius, direction, _shift(radius, di, dj),
                                    _shift(direction, di, dj), params.kappa)
                dist_cache[(di, dj)] = np.where(inside, d, np.inf)
            logits[:, :, idx] = -dist_cache[(di, dj)] / tau
        # the centre has distance 0, so every row has a finite maximum
        logits -= logits.max(axis=-1, keepdims=True)
        a = np.exp(logits)
        a /= a.sum(axis=-1, keepdims=True)
        weights.append(a)
    return AffinityStack(params.kernel_sizes, tuple(weights), kernel_gates(feats, params))


def center_tethered_step(current, init, affinity: AffinityStack) -> np.ndarray:
    """One propagation step with the window centre replaced by ``init``."""
    current = as_depth(current, "current", allow_negative=True)
    init = as_depth(init, "init", allow_negative=True)
    check_same_shape(current=current, init=init)
    if affinity.shape != current.shape:
        raise DimensionError(f"affinity built for {affinity.shape}, rasters are {current.shape}")
    mixed = np.zeros_like(current)
    for i, (k, a) in enumerate(zip(affinity.kernel_sizes, affinity.weights)):
        acc = np.zeros_like(current)
        for idx, (di, dj) in enumerate(_offsets(k)):
            src = init if (di, dj) == (0, 0) else _shift(current, di, dj)
            acc += a[:, :, idx] * src
        mixed += affinity.gates[:, :, i] * acc
    return mixed


def _blend(mixed, sensor, mask, alpha):
    a = alpha * mask
    return np.where(mask, (1.0 - a) * mixed + a * sensor, mixed)


def sensor_anchor_blend(mixed, sensor, mask, features, params: RefineParams) -> np.ndarray:
    mixed = as_depth(mixed, "mixed", allow_negative=True)
    sensor = as_depth(sensor, "sensor")
    mask = as_mask(mask, mixed.shape)
    feats = as_features(features, mixed.shape)
    check_same_shape(mixed=mixed, sensor=sensor)
    return _blend(mixed, sensor, mask, anchor_map(feats, params))


def refine(init, sensor, mask, features, params: RefineParams) -> np.ndarray:
    """Run ``params.iterations`` tethered steps with sensor anchoring.

    The anchor map does not depend on the iterate and is computed once. The
    result is clamped to ``[0, d_max]``.
    """
    init = as_depth(init, "init")
    sensor = as_depth(sensor, "sensor")
    mask = as_mask(mask, init.shape)
    feats = as_features(features, init.shape)
    check_same_shape(init=init, sensor=sensor)
    affinity = affinity_weights(feats, params)
    alpha = anchor_map(feats, params)
    depth = init
    for _ in range(params.iterations):
        depth = _blend(center_tethered_step(depth, init, affinity), sensor, mask, alpha)
    return np.clip(depth, 0.0, params.d_max)


def _unit_range(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.zeros_like(x)
    return 2.0 * (x - lo) / (hi - lo) - 1.0


def _max_abs_scaled(x: np.ndarray) -> np.ndarray:
    m = float(np.abs(x).max())
    return x / m if m > 0 else x


def handcrafted_features(image, prior) -> np.ndarray:
    """Five-channel stand-in for learned features, all in ``[-1, 1]``.

    Channels: intensity, row coordinate, column coordinate, and the forward
    differences of the prior along columns and along rows. Colour images are
    averaged over their last axis.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=2)
    prior = as_depth(prior, "prior", allow_negative=True)
    if img.ndim != 2:
        raise GridError(f"image must be 2-D or (H, W, C), got shape {np.shape(image)}")
    check_same_shape(image=img, prior=prior)
    h, w = prior.shape
    rows, cols = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
    gx = np.zeros_like(prior)
    gx[:, :-1] = np.diff(prior, axis=1)
    gy = np.zeros_like(prior)
    gy[:-1, :] = np.diff(prior, axis=0)
    return np.stack(
        [_unit_range(img), rows, cols, _max_abs_scaled(gx), _max_abs_scaled(gy)], axis=-1
    )


def residual_init(pseudo, residual=None, d_max: float = 90.0) -> np.ndarray:
    pseudo = as_depth(pseudo, "pseudo", allow_negative=True)
    if residual is None:
        residual = np.zeros_like(pseudo)
    residual = as_depth(residual, "residual", allow_negative=True)
    check_same_shape(pseudo=pseudo, residual=residual)
    return np.clip(pseudo + residual, 0.0, d_max)
