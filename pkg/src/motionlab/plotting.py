"""PNG figures for CLI reports, rendered off-screen with matplotlib."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def distance_matrix(D, names, path, title="Elastic motion distance"):
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(D, cmap="viridis")
    fig.colorbar(im, ax=ax)
    if len(names) <= 30:
        ax.set_xticks(range(len(names)), names, rotation=90, fontsize=6)
        ax.set_yticks(range(len(names)), names, fontsize=6)
    ax.set_title(title)
    _save(fig, path)


def warping(grid, gamma, rate, path):
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    a.plot(grid, grid, color="0.7", lw=1)
    a.plot(grid, gamma)
    a.set(xlabel="reference time", ylabel="moving time", title="warping")
    b.axhline(0, color="0.7", lw=1)
    b.plot(grid, rate)
    b.set(xlabel="reference time", ylabel="log rate", title="rate")
    _save(fig, path)


def rates(grid, values, mean, path, t_star=None, delta=None):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(grid, np.asarray(values).T, color="C0", alpha=0.3, lw=0.8)
    ax.plot(grid, mean, color="k", lw=2, label="mean")
    ax.axhline(0, color="0.5", lw=1)
    if t_star is not None:
        ax.axvspan(t_star - delta, t_star + delta, color="C3", alpha=0.2, label="bottleneck")
    ax.set(xlabel="normalized time", ylabel="log rate (> 0 slower than reference)")
    ax.legend()
    _save(fig, path)


def bottleneck(grid, scores, t_star, delta, path):
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(grid, scores)
    ax.axvline(t_star, color="C3")
    ax.axvspan(t_star - delta, t_star + delta, color="C3", alpha=0.2)
    ax.set(xlabel="window centre", ylabel="score", title=f"bottleneck at t = {t_star:.3f}")
    _save(fig, path)


def objective(values, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(len(values)), values, marker="o", ms=3)
    ax.set(xlabel="sweep", ylabel="objective", title="posterior objective")
    _save(fig, path)


def rate_band(grid, mean, lo, hi, times, values, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, values, ".", color="0.6", ms=2)
    ax.fill_between(grid, lo, hi, color="C0", alpha=0.3)
    ax.plot(grid, mean, color="C0")
    ax.set(xlabel="normalized time", ylabel="log rate", title="rate distribution")
    _save(fig, path)


def best_practice(features, rates_, target_features, target_rates, path):
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    features = np.asarray(features)
    if features.shape[1] >= 2:
        sc = ax.scatter(features[:, 0], features[:, 1], c=rates_, cmap="coolwarm")
        ax.plot(target_features[:, 0], target_features[:, 1], "k*-", ms=10)
        ax.set(xlabel="feature 1", ylabel="feature 2")
        fig.colorbar(sc, ax=ax, label="window log rate")
    elif features.shape[1] == 1:
        ax.plot(features[:, 0], rates_, ".")
        ax.plot(target_features[:, 0], target_rates, "k*-", ms=10)
        ax.set(xlabel="feature 1", ylabel="window log rate")
    ax.set_title("rate-linked features")
    _save(fig, path)


def variation(s_values, displacement, explained, path):
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    a.bar(np.arange(1, len(explained) + 1), explained)
    a.set(xlabel="eigen-direction", ylabel="share of variation")
    for j, d in enumerate(displacement):
        b.plot(s_values, d, marker="o", label=f"direction {j + 1}")
    b.set(xlabel="s", ylabel="summed geodesic distance to mean")
    b.legend()
    _save(fig, path)


def pace(grid, gbar, path):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.plot(grid, grid, color="0.7", lw=1)
    ax.plot(grid, gbar)
    ax.set(xlabel="reference time", ylabel="mean-pace time", title="mean pace warping")
    _save(fig, path)
