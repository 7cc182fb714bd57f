"""Matplotlib figures written next to the CSV reports.

Only the Agg backend is used and PNG metadata is stripped, so a rerun with
the same inputs produces the same bytes.
"""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402

RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "font.size": 10,
    "axes.labelsize": 11,
    "axes.titlesize": 11,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
    "savefig.bbox": "tight",
    "svg.hashsalt": "tngp",
}


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def plot_paths(path, coords, paths, labels, xlabel="t", title=None):
    """Line plot of 1-D sample paths, or a panel of surfaces for 2-D grids."""
    coords = np.asarray(coords)
    with plt.rc_context(RC):
        if coords.shape[1] == 1:
            fig, ax = plt.subplots()
            for values, label in zip(paths, labels):
                ax.plot(coords[:, 0], values, label=label)
            ax.set_xlabel(xlabel)
            ax.set_ylabel("response")
            if len(paths) <= 8:
                ax.legend(fontsize=8)
        else:
            side = int(round(np.sqrt(coords.shape[0])))
            extent = (coords[:, 1].min(), coords[:, 1].max(), coords[:, 0].min(), coords[:, 0].max())
            k = len(paths)
            fig, axes = plt.subplots(1, k, figsize=(3.6 * k, 3.2), squeeze=False,
                                     layout="constrained")
            for ax, values, label in zip(axes[0], paths, labels):
                im = ax.imshow(np.reshape(values, (side, side)), origin="lower",
                               extent=extent, aspect="auto", cmap="viridis")
                ax.set_title(label, fontsize=9)
                ax.set_xlabel("t2")
                ax.set_ylabel("t1")
                fig.colorbar(im, ax=ax, shrink=0.8)
        if title:
            fig.suptitle(title)
        _save(fig, path)


def plot_ks(path, widths, ks, axis):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(widths, ks, "o-")
        ax.set_xscale("log", base=2)
        ax.set_xlabel(axis)
        ax.set_ylabel("KS distance to normal")
        ax.axhline(0.05, color="0.6", linestyle="--", linewidth=0.8)
        _save(fig, path)


def plot_prediction(path, coords, mean, std, train_t=None, train_y=None):
    coords = np.asarray(coords)[:, 0]
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.fill_between(coords, mean - 2 * std, mean + 2 * std, color="C0", alpha=0.25, lw=0)
        ax.plot(coords, mean, color="C0")
        if train_t is not None:
            ax.plot(train_t, train_y, "k.", ms=6)
        ax.set_xlabel("t")
        ax.set_ylabel("posterior mean")
        _save(fig, path)


def plot_gram(path, gram):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.0))
        im = ax.imshow(gram, cmap="magma")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("point")
        ax.set_ylabel("point")
        _save(fig, path)
