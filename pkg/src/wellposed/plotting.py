"""Figure output for sweep curves and reconstructed images.

Everything renders through the Agg backend into files; nothing is shown
on screen.  SVG output is made reproducible by fixing the hash salt and
dropping the date stamp.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.linewidth": 0.6,
    "axes.spines.right": False,
    "axes.spines.top": False,
    "lines.linewidth": 1.0,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "svg.hashsalt": "wellposed",
    "svg.fonttype": "none",
    "image.cmap": "gray",
}


def _save(fig, path):
    path = Path(path)
    meta = {"Date": None} if path.suffix == ".svg" else {}
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def plot_curve(curve, path, columns=None, logx=False, logy=False, title=None):
    """One polyline per requested column of a SweepCurve, against its parameter."""
    columns = list(columns or curve.columns)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        x = curve.param
        for name in columns:
            y = np.asarray(curve.columns[name], dtype=float)
            keep = np.isfinite(y)
            if logx:
                keep &= x > 0
            if logy:
                keep &= y > 0
            ax.plot(x[keep], y[keep], label=name)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(curve.param_name)
        ax.set_ylabel("distance")
        if len(columns) > 1:
            ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_images(images, titles, path, vmin=0.0, vmax=255.0):
    """Row of grayscale panels; NaN pixels (unobserved) render white."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(images), figsize=(2.2 * len(images), 2.4),
                                 constrained_layout=True)
        axes = np.atleast_1d(axes)
        for ax, img, t in zip(axes, images, titles):
            cmap = plt.get_cmap("gray").copy()
            cmap.set_bad("white")
            ax.imshow(np.ma.masked_invalid(img), cmap=cmap, vmin=vmin, vmax=vmax,
                      interpolation="nearest")
            ax.set_title(t)
            ax.set_xticks([])
            ax.set_yticks([])
        return _save(fig, path)
