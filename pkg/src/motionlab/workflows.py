"""End-to-end analyses: recognition, rates and bottlenecks, best practice,
motion variation and restandardization of the reference clock.

Rate sign convention follows :mod:`motionlab.motion`: ``r > 0`` where a
performance takes more physical time than the reference for the same
progress. Bottleneck scores therefore accumulate ``min(0, -r)``, the
slowness of each performance, so the most negative window is where the
cohort lags the reference most.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BadInterval, DataError
from .motion import (
    PostureSequence,
    RateFunction,
    Warping,
    align_tsrvf,
    compose,
    compute_tsrvf,
    cumulative_rate,
    karcher_mean,
    rate_from_warping,
    resample_sequence,
    scaled_warping,
)
from .sir import reconstruct_from_features, sequence_coords, sir_directions
from .sphere import coords_to_posture
from .stats import fit_mle

DEFAULT_DELTA = 0.020
BAND_K = 1.5


# -- preparation --------------------------------------------------------------

def prepare_sequences(skeletons, L=100, h=None, kernel="gaussian"):
    """Normalize skeletons to postures and kernel-resample them onto a uniform grid of ``L``."""
    return [resample_sequence(s.to_posture_sequence(), L, h, kernel) for s in skeletons]


def common_reference(sequences, stride=1):
    """Karcher mean of all postures pooled over ``sequences`` (every ``stride``-th sample)."""
    pooled = np.concatenate([s.postures[::stride] for s in sequences])
    return karcher_mean(pooled)


def stratified_split(labels, train_fraction=0.8, seed=0):
    """Per-label random split of item indices into sorted train and test lists."""
    if not 0.0 < train_fraction <= 1.0:
        raise DataError("train_fraction must lie in (0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    labels = list(labels)
    train, test = [], []
    for lab in sorted(set(labels)):
        idx = np.array([i for i, x in enumerate(labels) if x == lab])
        perm = idx[rng.permutation(len(idx))]
        n_train = max(1, int(round(train_fraction * len(idx))))
        train.extend(perm[:n_train].tolist())
        test.extend(perm[n_train:].tolist())
    return sorted(train), sorted(test)


# -- recognition ---------------------------------------------------------------

def _distance_row(args):
    i, h_row, cols, dp_grid = args
    return i, np.array([align_tsrvf(h_row, h_col, dp_grid).distance for h_col in cols])


def distance_matrix(rows, cols, Y_R, dp_grid=None, jobs=1):
    """Elastic distances ``D[i, j] = d(rows[i] aligned to cols[j])`` under a shared reference posture."""
    h_rows = [compute_tsrvf(s, Y_R) for s in rows]
    h_cols = [compute_tsrvf(s, Y_R) for s in cols]
    tasks = [(i, h, h_cols, dp_grid) for i, h in enumerate(h_rows)]
    D = np.empty((len(rows), len(cols)))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_distance_row, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_distance_row(t) for t in tasks]
    for i, row in results:
        D[i] = row
    return D


@dataclass
class Classification:
    predicted: list
    distances: np.ndarray
    nearest: np.ndarray
    accuracy: float = None


def classify_1nn(train, train_labels, test, test_labels=None, Y_R=None, dp_grid=None, jobs=1):
    """Label each test sequence with its nearest training sequence; ties go to the lowest index."""
    if not train:
        raise DataError("training set is empty")
    Y_R = common_reference(train) if Y_R is None else Y_R
    D = distance_matrix(test, train, Y_R, dp_grid, jobs)
    nearest = np.argmin(D, axis=1)
    pred = [train_labels[j] for j in nearest]
    acc = None
    if test_labels is not None:
        acc = float(np.mean([p == t for p, t in zip(pred, test_labels)])) if pred else float("nan")
    return Classification(pred, D, nearest, acc)


def class_distance_table(D, row_labels, col_labels=None):
    """Mean distance between every pair of classes, excluding self-pairs on a square matrix."""
    col_labels = row_labels if col_labels is None else col_labels
    classes = sorted(set(row_labels) | set(col_labels))
    rl, cl = np.array(row_labels), np.array(col_labels)
    square = D.shape[0] == D.shape[1] and list(row_labels) == list(col_labels)
    T = np.full((len(classes), len(classes)), np.nan)
    for a, ca in enumerate(classes):
        for b, cb in enumerate(classes):
            block = D[np.ix_(rl == ca, cl == cb)]
            if square and ca == cb:
                block = block[~np.eye(len(block), dtype=bool)]
            if block.size:
                T[a, b] = block.mean()
    return classes, T


# -- rates ------------------------------------------------------------------------

@dataclass
class RateRecord:
    warping: Warping
    delta: np.ndarray
    rate: RateFunction
    distance: float


def rate_analysis(sequences, reference, Y_R=None, dp_grid=None):
    """Align every sequence to the reference and derive its scaled warp and rate."""
    Y_R = karcher_mean(reference.postures) if Y_R is None else Y_R
    h_ref = compute_tsrvf(reference, Y_R)
    out = []
    for seq in sequences:
        al = align_tsrvf(compute_tsrvf(seq, Y_R), h_ref, dp_grid, reference.grid)
        out.append(RateRecord(
            al.warping,
            scaled_warping(al.warping, seq.duration, reference.duration),
            rate_from_warping(al.warping, seq.duration, reference.duration),
            al.distance,
        ))
    return out


def rate_normalized(sequences, records):
    """Each sequence composed with its warp, i.e. re-timed onto the reference clock."""
    return [compose(s, r.warping) for s, r in zip(sequences, records)]


def mean_rate(rates):
    grid = rates[0].grid
    for r in rates[1:]:
        if not np.array_equal(r.grid, grid):
            raise DataError("rate functions must share a grid")
    return RateFunction(grid.copy(), np.mean([r.values for r in rates], axis=0))


@dataclass
class BottleneckReport:
    t_star: float
    delta: float
    score: float
    grid: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)


def find_bottleneck(rates, delta=DEFAULT_DELTA, strict=False, warpings=None):
    """Window of the grid where the cohort is slowest relative to the reference.

    The score at ``t`` sums ``min(0, -r_m(t_l))`` over performances ``m``
    and grid points with ``|t_l - t| < delta``; the earliest minimizer wins.
    ``strict=True`` scores ``min(0, gamma_m(t_l))`` from ``warpings`` instead,
    the literal printed form, which is identically zero for valid warps.
    """
    if not delta > 0:
        raise DataError("delta must be positive")
    grid = rates[0].grid if rates else warpings[0].grid
    if strict:
        vals = np.array([w.values for w in warpings])
    else:
        vals = -np.array([r.values for r in rates])
    per_point = np.minimum(vals, 0.0).sum(axis=0)
    inside = np.abs(grid[:, None] - grid[None, :]) < delta
    scores = inside.astype(float) @ per_point
    k = int(np.argmin(scores))
    return BottleneckReport(float(grid[k]), float(delta), float(scores[k]), grid.copy(), scores)


# -- best practice ------------------------------------------------------------------

@dataclass
class BestPractice:
    window: np.ndarray
    interval: tuple
    window_rates: np.ndarray
    features: np.ndarray
    sir: object
    coef: np.ndarray  # intercept then feature weights
    degenerate: bool
    percentiles: tuple
    target_rates: np.ndarray
    target_features: np.ndarray
    reconstructed: np.ndarray  # (len(percentiles), W, P, 3)
    means: np.ndarray


def best_practice_window(postures, window_rates, means, B=None, percentiles=(10, 50, 90), h=None):
    """Rate-linked reconstruction from windowed postures ``(M, W, P, 3)`` and their cumulative rates.

    Features are SIR projections of the concatenated window coordinates; a
    least-squares line ``rate ~ w0 + w . z`` picks, for each target rate
    percentile, the feature vector on that line closest to the mean feature.
    """
    postures = np.asarray(postures, dtype=float)
    window_rates = np.asarray(window_rates, dtype=float)
    means = np.asarray(means, dtype=float)
    C = np.stack([sequence_coords(p, means) for p in postures])
    targets = np.percentile(window_rates, percentiles)
    if np.ptp(window_rates) == 0.0:
        W = means.shape[0]
        recon = np.broadcast_to(means, (len(percentiles), W) + means.shape[1:]).copy()
        return BestPractice(None, None, window_rates, np.zeros((len(C), 0)), None, np.array([window_rates[0]]),
                            True, tuple(percentiles), targets, np.zeros((len(percentiles), 0)), recon, means)
    sir = sir_directions(C, window_rates, B=B, h=h)
    Z = sir.project(C)
    X = np.column_stack([np.ones(len(Z)), Z])
    coef = np.linalg.lstsq(X, window_rates, rcond=None)[0]
    w0, w = coef[0], coef[1:]
    zbar = Z.mean(axis=0)
    degenerate = bool(np.linalg.norm(w) < 1e-12)
    if degenerate:
        tz = np.zeros((len(percentiles), Z.shape[1]))
    else:
        tz = zbar + np.outer(targets - w0 - w @ zbar, w) / (w @ w)
    recon = np.stack([reconstruct_from_features(z, sir, means) for z in tz])
    return BestPractice(None, None, window_rates, Z, sir, coef, degenerate, tuple(percentiles), targets, tz, recon, means)


def best_practice(sequences, rates, t_star, delta=DEFAULT_DELTA, B=None, means=None, percentiles=(10, 50, 90)):
    """Best-practice analysis on rate-normalized sequences around ``t_star``.

    ``means`` are per-step mean postures on the sequences' grid (default:
    per-step maximum-likelihood means over the cohort).
    """
    grid = sequences[0].grid
    window = np.flatnonzero(np.abs(grid - t_star) < delta)
    if len(window) < 2:
        raise BadInterval(f"window |t - {t_star}| < {delta} holds {len(window)} grid step(s); need at least 2")
    s, t = float(grid[window[0]]), float(grid[window[-1]])
    data = np.stack([seq.postures[window] for seq in sequences])
    if means is None:
        means = np.stack([fit_mle(data[:, j]).mean for j in range(len(window))])
    else:
        means = np.asarray(means)[window]
    window_rates = np.array([cumulative_rate(r, s, t) for r in rates])
    report = best_practice_window(data, window_rates, means, B, percentiles)
    report.window = window
    report.interval = (s, t)
    return report


# -- motion variation and restandardization ----------------------------------------------

@dataclass
class Variation:
    postures: np.ndarray  # (n_eigs, len(s), P, 3)
    s_values: np.ndarray
    eigenvalues: np.ndarray
    explained: np.ndarray
    eigenvectors: np.ndarray


def motion_variation(model, l, s_values=None, n_eigs=2, scale="unit"):
    """Postures ``exp_{mu_l}(s v)`` along the leading eigenvectors of ``K_l``.

    ``scale="sd"`` multiplies each eigenvector by the square root of its eigenvalue.
    """
    s_values = np.linspace(-1.0, 1.0, 5) if s_values is None else np.asarray(s_values, dtype=float)
    mu, K = model.means[l], model.covs[l]
    w, V = np.linalg.eigh(0.5 * (K + K.T))
    order = np.argsort(w)[::-1]
    w, V = np.clip(w[order], 0.0, None), V[:, order]
    V = V * np.where(V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])] < 0, -1.0, 1.0)
    n = min(n_eigs, len(w))
    dirs = V[:, :n] * (np.sqrt(w[:n]) if scale == "sd" else 1.0)
    coords = s_values[None, :, None] * dirs.T[:, None, :]
    Y = coords_to_posture(np.broadcast_to(mu, coords.shape[:2] + mu.shape), coords)
    total = w.sum()
    explained = w / total if total > 0 else np.zeros_like(w)
    return Variation(Y, s_values, w[:n], explained[:n], V[:, :n])


def mean_pace_warping(mean_rate_fn, grid):
    """``gamma_bar = int_0^t exp(r_bar) / int_0^1 exp(r_bar)`` on ``grid`` and the total ``T``."""
    grid = np.asarray(grid, dtype=float)
    rho = np.exp(mean_rate_fn(grid))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(grid))])
    T = float(cum[-1])
    values = cum / T
    values[-1] = 1.0
    return Warping(grid, values), T


def restandardize(reference, mean_rate_fn):
    """Reference re-timed to the cohort's mean pace.

    The new reference traverses the old one along ``gamma_bar^-1`` and lasts
    ``T`` times as long, so that realigning the cohort centers its rates at 0.
    """
    gbar, T = mean_pace_warping(mean_rate_fn, reference.grid)
    postures = reference.at(gbar.inverse().values)
    return PostureSequence(reference.grid.copy(), postures, reference.duration * T, reference.label)
