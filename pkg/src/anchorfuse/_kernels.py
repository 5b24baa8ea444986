"""Fused loops for the CG iteration on raster-shaped vectors.

Vectors are full ``(H, W)`` arrays that vanish outside the unknown mask.
``A p`` is never stored: the update sweep recomputes the stencil, which is
cheaper than streaming a fourth raster through the cache.
"""

import numba


@numba.njit(cache=True)
def direction_stencil(p, r, beta, mask):
    """``p <- r + beta * p``, then returns ``<p, A p>`` over the mask.

    Row ``i + 1`` of ``p`` is updated before the stencil reads it at row ``i``.
    """
    h, w = p.shape
    for j in range(w):
        p[0, j] = r[0, j] + beta * p[0, j]
        p[1, j] = r[1, j] + beta * p[1, j]
    s = 0.0
    for i in range(1, h - 1):
        for j in range(w):
            p[i + 1, j] = r[i + 1, j] + beta * p[i + 1, j]
        for j in range(1, w - 1):
            if mask[i, j]:
                v = 4.0 * p[i, j] - p[i - 1, j] - p[i + 1, j] - p[i, j - 1] - p[i, j + 1]
                s += v * p[i, j]
    return s


@numba.njit(cache=True)
def step(x, r, p, mask, alpha):
    """``x += alpha p``, ``r -= alpha A p`` on the mask; returns ``<r, r>``.

    ``p``, and hence ``x``'s update, vanishes on the image border.
    """
    h, w = x.shape
    s = 0.0
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            if mask[i, j]:
                x[i, j] += alpha * p[i, j]
                v = 4.0 * p[i, j] - p[i - 1, j] - p[i + 1, j] - p[i, j - 1] - p[i, j + 1]
                r[i, j] -= alpha * v
                s += r[i, j] * r[i, j]
    return s
