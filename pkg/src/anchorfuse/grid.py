"""Raster helpers and the known/unknown pixel partition.

Depth rasters are plain 2-D ``numpy`` arrays (meters, 0 = no value),
masks are boolean arrays of the same shape and feature rasters are
``(H, W, C)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, GridError

MIN_SIZE = 3


def as_depth(grid, name: str = "depth", *, allow_negative: bool = False) -> np.ndarray:
    """Return ``grid`` as a validated float64 depth raster."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise GridError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{name} contains non-finite values")
    if not allow_negative and np.any(arr < 0):
        raise GridError(f"{name} contains negative values")
    return arr


def as_mask(mask, shape: tuple[int, int] | None = None, name: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise GridError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr.astype(bool)


def as_features(features, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise GridError(f"features must be (H, W, C), got shape {arr.shape}")
    if shape is not None and arr.shape[:2] != tuple(shape):
        raise DimensionError(f"features have shape {arr.shape[:2]}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise GridError("features contain non-finite values")
    return arr


def check_min_size(shape: tuple[int, ...]) -> None:
    if shape[0] < MIN_SIZE or shape[1] < MIN_SIZE:
        raise DimensionError(
            f"raster must be at least {MIN_SIZE}x{MIN_SIZE}, got {shape[0]}x{shape[1]}"
        )


def check_same_shape(**grids: np.ndarray) -> None:
    shapes = {name: np.shape(g)[:2] for name, g in grids.items()}
    if len(set(shapes.values())) > 1:
        desc = ", ".join(f"{name} {h}x{w}" for name, (h, w) in shapes.items())
        raise DimensionError(f"shape mismatch: {desc}")


def border_mask(shape: tuple[int, int]) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    m[0, :] = m[-1, :] = True
    m[:, 0] = m[:, -1] = True
    return m


@dataclass(frozen=True)
class IndexPartition:
    """Known set (anchors plus image border) and its complement.

    Coordinates are stored as flat row-major indices; ``unknown`` is sorted,
    so the rank of an unknown pixel is its position in that array.
    """

    shape: tuple[int, int]
    known: np.ndarray
    unknown: np.ndarray
    unknown_mask: np.ndarray = field(repr=False)

    @property
    def known_mask(self) -> np.ndarray:
        return ~self.unknown_mask

    def known_coords(self) -> list[tuple[int, int]]:
        return [divmod(int(i), self.shape[1]) for i in self.known]

    def unknown_coords(self) -> list[tuple[int, int]]:
        return [divmod(int(i), self.shape[1]) for i in self.unknown]

    def unknown_index_of(self, row: int, col: int) -> int:
        """Rank of pixel ``(row, col)`` among the unknowns."""
        flat = row * self.shape[1] + col
        pos = int(np.searchsorted(self.unknown, flat))
        if pos >= self.unknown.size or self.unknown[pos] != flat:
            raise KeyError((row, col))
        return pos

    def scatter(self, x_u: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Place a vector over the unknowns into a full raster."""
        out = np.full(self.shape, fill, dtype=np.float64)
        out.ravel()[self.unknown] = x_u
        return out

    def gather(self, grid: np.ndarray) -> np.ndarray:
        return np.asarray(grid, dtype=np.float64).ravel()[self.unknown]


def build_partition(sparse) -> IndexPartition:
    """Split the lattice into known pixels (``sparse > 0`` or border) and unknowns."""
    sparse = as_depth(sparse, "sparse")
    check_min_size(sparse.shape)
    known = (sparse > 0) | border_mask(sparse.shape)
    unknown_mask = ~known
    unknown_mask.setflags(write=False)
    known_idx = np.flatnonzero(known)
    unknown_idx = np.flatnonzero(unknown_mask)
    known_idx.setflags(write=False)
    unknown_idx.setflags(write=False)
    return IndexPartition(sparse.shape, known_idx, unknown_idx, unknown_mask)


def assemble_dirichlet_field(sparse, prior, partition: IndexPartition) -> np.ndarray:
    """Prescribed values on the known set, zero-extended over the unknowns.

    Measurements take priority over prior values on border pixels.
    """
    sparse = as_depth(sparse, "sparse")
    prior = as_depth(prior, "prior", allow_negative=True)
    check_same_shape(sparse=sparse, prior=prior)
    if partition.shape != sparse.shape:
        raise DimensionError(
            f"partition built for {partition.shape}, rasters are {sparse.shape}"
        )
    field_ = np.zeros(sparse.shape, dtype=np.float64)
    border = border_mask(sparse.shape)
    field_[border] = prior[border]
    anchors = sparse > 0
    field_[anchors] = sparse[anchors]
    return field_
