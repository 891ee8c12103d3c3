"""Matplotlib renderings of the CSV/JSON reports (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.cluster.hierarchy import dendrogram as _dendrogram  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_correlation_distributions(dists: Mapping[str, np.ndarray], path: Path, bins: int = 80) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 4))
        edges = np.linspace(-1, 1, bins + 1)
        for name, x in dists.items():
            ax.hist(np.asarray(x), bins=edges, density=True, histtype="step", lw=1.4, label=f"{name} (mean {np.mean(x):.2f})")
        ax.set_xlabel("pairwise correlation of daily log returns")
        ax.set_ylabel("density")
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_collectivity(dates, spectra: np.ndarray, path: Path, k: int = 3) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        for i in range(min(k, spectra.shape[1])):
            ax.plot(dates, spectra[:, i], lw=1.2, label=rf"$\tilde\lambda_{i + 1}$")
        ax.set_ylabel("normalized eigenvalue")
        ax.set_ylim(0, 1)
        ax.legend(loc="upper right")
        fig.autofmt_xdate()
        return _save(fig, path)


def plot_mu_table(table, greedy, path: Path, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 5))
        im = ax.imshow(table.mu, cmap="viridis_r", origin="upper")
        ax.set_xticks(range(len(table.w_range)), table.w_range)
        ax.set_yticks(range(len(table.a_range)), table.a_range)
        ax.set_xlabel("equities per sector (w)")
        ax.set_ylabel("number of sectors (a)")
        on_path = set(greedy.cells)
        for i, a in enumerate(table.a_range):
            for j, w in enumerate(table.w_range):
                ax.text(j, i, f"{table.mu[i, j]:.3f}", ha="center", va="center", fontsize=7,
                        color="red" if (w, a) in on_path else "white", weight="bold" if (w, a) in on_path else None)
        fig.colorbar(im, ax=ax, label=r"$\mu_{w,a}$")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_greedy_paths(paths: Mapping[str, object], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, g in paths.items():
            mu = [s[2] for s in g.steps]
            ax.plot(range(len(mu)), mu, marker="o", ms=3, label=name)
        ax.set_xlabel("step")
        ax.set_ylabel(r"$\mu_{w,a}$")
        ax.legend()
        return _save(fig, path)


def plot_marginals(mu_w: np.ndarray, mu_a: np.ndarray, path: Path, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(range(len(mu_w)), mu_w, marker="o", ms=3, label=r"within sector $\mu_{w,\cdot}$")
        ax.plot(range(len(mu_a)), mu_a, marker="s", ms=3, label=r"across sectors $\mu_{\cdot,a}$")
        ax.set_xlabel("step")
        ax.set_ylabel("average collectivity")
        ax.legend()
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_aligned(result, path: Path) -> Path:
    """Dendrogram beside the reordered distance matrix."""
    labels = [f"{c} | {s}" for c, s in result.labels]
    n = len(labels)
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(10, max(4, 0.2 * n + 1.5)))
        ax_d = fig.add_axes([0.02, 0.08, 0.18, 0.85])
        ax_m = fig.add_axes([0.36, 0.08, 0.52, 0.85])
        ax_c = fig.add_axes([0.9, 0.08, 0.02, 0.85])
        if n > 1:
            dn = _dendrogram(result.linkage, orientation="left", no_labels=True, ax=ax_d, color_threshold=0)
            order = dn["leaves"][::-1]
        else:
            order = [0]
        ax_d.axis("off")
        d = result.distances[np.ix_(order, order)]
        im = ax_m.imshow(d, cmap="magma", aspect="auto")
        ax_m.set_yticks(range(n), [labels[i] for i in order], fontsize=6)
        ax_m.set_xticks([])
        fig.colorbar(im, cax=ax_c, label="Wasserstein-1 distance")
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        return Path(path)


def plot_allocation_matrix(matrix, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 4.2))
        im = ax.imshow(matrix.distances, cmap="magma", vmin=0)
        n = len(matrix.labels)
        ax.set_xticks(range(n), matrix.labels, rotation=45, ha="right")
        ax.set_yticks(range(n), matrix.labels)
        for i in range(n):
            for j in range(n):
                ax.text(j, i, f"{matrix.distances[i, j]:.2f}", ha="center", va="center", fontsize=7, color="grey")
        fig.colorbar(im, ax=ax, label="allocation distance")
        return _save(fig, path)


def plot_allocations(allocations: Mapping[str, object], path: Path) -> Path:
    from .market_data import SECTORS

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 4))
        width = 0.8 / max(len(allocations), 1)
        x = np.arange(len(SECTORS))
        for k, (name, alloc) in enumerate(allocations.items()):
            ax.bar(x + k * width, 100 * np.asarray(alloc.proportions), width, label=name)
        ax.set_xticks(x + 0.4 - width / 2, SECTORS, rotation=40, ha="right")
        ax.set_ylabel("share (%)")
        ax.legend()
        return _save(fig, path)
