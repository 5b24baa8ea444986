"""Masked depth metrics and loss functionals.

Validity follows the benchmark convention ``gt > 0``; averages divide by
``n = max(1, #valid)``.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .grid import as_depth, check_same_shape

KITTI_D_MAX = 90.0
NYU_D_MAX = 10.0
SILOG_EPS = 1e-6

CSV_COLUMNS = ("rmse", "mae", "l1l2", "silog", "n")


class EmptyMaskWarning(UserWarning):
    """Ground truth has no valid pixel."""


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    l1l2: float
    silog: float
    valid_pixel_count: int

    def as_row(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "l1l2": self.l1l2,
                "silog": self.silog, "n": self.valid_pixel_count}

    def to_text(self) -> str:
        return "\n".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in self.as_row().items())

    def append_csv(self, path) -> None:
        """Append one row, writing the header when the file is new or empty."""
        new = not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, "a", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            if new:
                writer.writeheader()
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in self.as_row().items()})


def _mask(gt: np.ndarray) -> tuple[np.ndarray, int]:
    m = gt > 0
    return m, max(1, int(m.sum()))


def normalize(depth, d_max: float) -> np.ndarray:
    if not d_max > 0:
        raise ValueError(f"d_max must be positive, got {d_max}")
    return np.clip(as_depth(depth, allow_negative=True) / d_max, 0.0, 1.0)


def masked_rmse_mae(pred, gt) -> tuple[float, float, int]:
    pred = as_depth(pred, "pred", allow_negative=True)
    gt = as_depth(gt, "gt")
    check_same_shape(pred=pred, gt=gt)
    m, n = _mask(gt)
    if not m.any():
        warnings.warn("ground truth has no valid pixels; metrics use n = 1", EmptyMaskWarning,
                      stacklevel=2)
    e = np.where(m, pred - gt, 0.0)
    return math.sqrt(float(np.sum(e * e)) / n), float(np.sum(np.abs(e))) / n, n


def l1l2_loss(pred, gt) -> float:
    pred = as_depth(pred, "pred", allow_negative=True)
    gt = as_depth(gt, "gt")
    check_same_shape(pred=pred, gt=gt)
    m, n = _mask(gt)
    e = np.where(m, pred - gt, 0.0)
    return float(np.sum(np.abs(e) + e * e)) / n


def silog_loss(pred_rel, gt, epsilon: float = SILOG_EPS) -> float:
    """Variance of masked log differences.

    ``pred_rel`` is clamped to ``[epsilon, 1]`` first so the logarithm is
    always defined.
    """
    pred_rel = as_depth(pred_rel, "pred_rel", allow_negative=True)
    gt = as_depth(gt, "gt")
    check_same_shape(pred_rel=pred_rel, gt=gt)
    m, n = _mask(gt)
    p = np.where(m, np.clip(pred_rel, epsilon, 1.0), 1.0)
    g = np.where(m, gt, 1.0)
    d = np.where(m, np.log(p + epsilon) - np.log(g + epsilon), 0.0)
    mean = float(np.sum(d)) / n
    return max(0.0, float(np.sum(d * d)) / n - mean * mean)


def evaluate(pred, gt, d_max: float = KITTI_D_MAX) -> EvalReport:
    """RMSE/MAE in meters plus both losses in normalized depth."""
    rmse, mae, n = masked_rmse_mae(pred, gt)
    pred_n = normalize(pred, d_max)
    gt_n = normalize(gt, d_max)
    return EvalReport(rmse, mae, l1l2_loss(pred_n, gt_n), silog_loss(pred_n, gt_n), n)
