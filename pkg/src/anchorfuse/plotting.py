"""Diagnostic figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "font.size": 8,
    "axes.titlesize": 9,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def _depth_panels(panels, path, suptitle=None, vmax=None):
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(len(panels), 1, figsize=(6, 1.9 * len(panels)), squeeze=False)
        for ax, (title, img, cmap, vm) in zip(axes[:, 0], panels):
            shown = np.ma.masked_where(img <= 0, img) if cmap == "magma_r" else img
            im = ax.imshow(shown, cmap=cmap, vmin=0, vmax=vm if vm is not None else vmax,
                           interpolation="nearest")
            ax.set_title(title)
            ax.set_xticks([])
            ax.set_yticks([])
            fig.colorbar(im, ax=ax, fraction=0.025, pad=0.01)
        if suptitle:
            fig.suptitle(suptitle)
        fig.savefig(path)
        plt.close(fig)


def plot_densify(sparse, prior, pseudo, path) -> None:
    """Anchors, prior and fused map on one shared depth scale."""
    vmax = float(max(np.max(prior), np.max(pseudo), np.max(sparse)))
    _depth_panels([
        ("anchors [m]", np.asarray(sparse), "magma_r", None),
        ("prior", np.asarray(prior), "magma_r", None),
        ("fused [m]", np.asarray(pseudo), "magma_r", None),
    ], path, vmax=vmax)


def plot_eval(pred, gt, path, report=None) -> None:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    err = np.where(gt > 0, np.abs(pred - gt), 0.0)
    vmax = float(max(pred.max(), gt.max()))
    title = None
    if report is not None:
        title = f"RMSE {report.rmse:.3f} m   MAE {report.mae:.3f} m   n={report.valid_pixel_count}"
    _depth_panels([
        ("prediction [m]", pred, "magma_r", None),
        ("ground truth [m]", gt, "magma_r", None),
        ("|error| on valid pixels [m]", err, "viridis", float(err.max()) or 1.0),
    ], path, suptitle=title, vmax=vmax)
