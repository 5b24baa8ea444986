"""Depth raster codecs and sparse-sample synthesis.

* 16-bit grayscale PNG depth: ``code = round(meters * 256)``, code 0 = invalid.
* PFM (``Pf``) grayscale float rasters, rows stored bottom-up, negative
  scale = little-endian.
* Sparse masks are drawn with xorshift64* seeded through splitmix64 so the
  same seed yields the same mask everywhere.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import GridError, RasterFormatError
from .grid import as_depth

DEPTH_SCALE = 256.0
MAX_CODE = 65535
MAX_DEPTH = MAX_CODE / DEPTH_SCALE

_MASK64 = (1 << 64) - 1


def read_depth_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if len(im.getbands()) != 1:
            raise RasterFormatError(f"{path}: expected 1 channel, got {len(im.getbands())}")
        if im.mode not in ("I;16", "I;16B", "I;16L"):
            raise RasterFormatError(f"{path}: expected a 16-bit PNG, got mode {im.mode}")
        codes = np.array(im, dtype=np.uint16)
    return codes.astype(np.float64) / DEPTH_SCALE


def encode_depth(grid) -> np.ndarray:
    grid = as_depth(grid)
    if np.any(grid > MAX_DEPTH):
        raise GridError(f"depth above the representable maximum {MAX_DEPTH} m")
    return np.clip(np.rint(grid * DEPTH_SCALE), 0, MAX_CODE).astype(np.uint16)


def write_depth_png(grid, path) -> None:
    Image.fromarray(encode_depth(grid)).save(path)


def read_mask_png(path) -> np.ndarray:
    """Any single-channel PNG; nonzero pixels are observed."""
    with Image.open(path) as im:
        if len(im.getbands()) != 1:
            raise RasterFormatError(f"{path}: expected 1 channel, got {len(im.getbands())}")
        return np.array(im) != 0


def write_mask_png(mask, path) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255).save(path)


def read_float_raster(path) -> np.ndarray:
    """Read a grayscale PFM into a top-down float64 raster."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    # header: "Pf", width, height, scale separated by whitespace
    for _ in range(4):
        m = re.compile(rb"\s*(\S+)").match(data, pos)
        if m is None:
            raise RasterFormatError(f"{path}: truncated PFM header")
        tokens.append(m.group(1))
        pos = m.end()
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise RasterFormatError(f"{path}: malformed PFM header")
    pos += 1
    if tokens[0] != b"Pf":
        raise RasterFormatError(f"{path}: expected grayscale PFM 'Pf', got {tokens[0]!r}")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise RasterFormatError(f"{path}: malformed PFM header") from exc
    if width <= 0 or height <= 0 or scale == 0:
        raise RasterFormatError(f"{path}: invalid PFM dimensions or scale")
    dtype = "<f4" if scale < 0 else ">f4"
    n = width * height
    if len(data) - pos < 4 * n:
        raise RasterFormatError(f"{path}: payload holds {len(data) - pos} bytes, need {4 * n}")
    values = np.frombuffer(data, dtype=dtype, count=n, offset=pos)
    if not np.all(np.isfinite(values)):
        raise RasterFormatError(f"{path}: PFM contains non-finite values")
    return np.flipud(values.reshape(height, width)).astype(np.float64)


def write_float_raster(grid, path) -> None:
    """Write a little-endian grayscale PFM (values cast to float32)."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise GridError(f"PFM writer expects a 2-D raster, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(arr).astype("<f4").tobytes())


class XorShift64Star:
    """xorshift64* generator (shifts 12/25/27, multiplier 0x2545F4914F6CDD1D).

    The seed is expanded with one splitmix64 step so that small or zero seeds
    still give a nonzero state.
    """

    def __init__(self, seed: int):
        z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        self.state = z or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def below(self, n: int) -> int:
        """Integer in ``[0, n)`` by 64x64 multiply-high (bias < n / 2**64)."""
        return (self.next_u64() * n) >> 64


@dataclass(frozen=True)
class SparsitySpec:
    """How to pick observed pixels.

    ``uniform-random`` draws exactly ``round(density * H * W)`` pixels
    (at least one); ``fixed-count`` draws ``count`` pixels; ``every-nth-row``
    keeps whole rows spaced ``round(1 / density)`` apart with a seeded offset.
    """

    mode: str = "uniform-random"
    density: float | None = 0.06
    count: int | None = None
    seed: int = 0

    MODES = ("uniform-random", "every-nth-row", "fixed-count")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"unknown sparsity mode {self.mode!r}")
        if self.mode == "fixed-count":
            if self.count is None or self.count < 1:
                raise ValueError(f"fixed-count needs count >= 1, got {self.count}")
        elif self.density is None or not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")


def _sample_without_replacement(n: int, k: int, rng: XorShift64Star) -> np.ndarray:
    # partial Fisher-Yates over a lazily materialized permutation
    swapped: dict[int, int] = {}
    picks = np.empty(k, dtype=np.int64)
    for i in range(k):
        j = i + rng.below(n - i)
        picks[i] = swapped.get(j, j)
        swapped[j] = swapped.get(i, i)
    return picks


def synth_sparse(dense, spec: SparsitySpec) -> tuple[np.ndarray, np.ndarray]:
    """Subsample ``dense``; returns ``(dense * mask, mask)``."""
    dense = as_depth(dense, "dense")
    h, w = dense.shape
    n = h * w
    rng = XorShift64Star(spec.seed)
    mask = np.zeros((h, w), dtype=bool)
    if spec.mode == "every-nth-row":
        step = max(1, round(1.0 / spec.density))
        mask[rng.below(step)::step, :] = True
    else:
        k = spec.count if spec.mode == "fixed-count" else max(1, round(spec.density * n))
        if k > n:
            raise ValueError(f"cannot sample {k} pixels from a {h}x{w} raster")
        mask.ravel()[_sample_without_replacement(n, k, rng)] = True
    return np.where(mask, dense, 0.0), mask
