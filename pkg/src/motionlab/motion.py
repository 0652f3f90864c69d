"""Posture sequences, TSRVF representation, elastic alignment and rate functions.

Conventions
-----------
A warping ``gamma`` maps reference time to moving time: aligning ``alpha`` to a
reference ``alpha_R`` means ``alpha(gamma(t)) ~ alpha_R(t)``. The scaled warp
``delta = (U / U_R) gamma`` measures physical time of the moving performance
per unit of reference progress, and the rate is ``r = log(d delta / dt)``; a
performance that is uniformly twice as slow as the reference has ``r = log 2``.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .errors import (
    AntipodalError,
    BadInterval,
    ConvergenceWarning,
    DataError,
    EmptyWindowError,
    GridMismatch,
    GridTooCoarse,
)
from .sphere import (
    log_unchecked,
    sphere_exp,
    sphere_geodesic,
    sphere_log,
    sphere_transport,
    tangent_to_coords,
)

RATE_FLOOR = 1e-8
SPEED_FLOOR = 1e-10
MIN_DP_GRID = 8

MAX_DP_STEP = 6


def lattice_steps(k=MAX_DP_STEP):
    """Coprime ``(reference, moving)`` lattice steps with both entries at most ``k``.

    Slopes range over ``[1/k, k]``. Steps are ordered by their largest entry,
    so ``(1, 1)`` comes first and wins ties in the dynamic program.
    """
    steps = [(i, j) for i in range(1, k + 1) for j in range(1, k + 1) if math.gcd(i, j) == 1]
    return tuple(sorted(steps, key=lambda s: (max(s), s)))


DP_STEPS = lattice_steps()


def uniform_grid(L):
    return np.linspace(0.0, 1.0, L)


@dataclass
class PostureSequence:
    """Postures sampled on a normalized clock in ``[0, 1]``."""

    grid: np.ndarray
    postures: np.ndarray
    duration: float = 1.0
    label: str = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.postures = np.asarray(self.postures, dtype=float)
        g = self.grid
        if g.ndim != 1 or len(g) < 2:
            raise DataError("a posture sequence needs at least 2 samples")
        if g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
            raise DataError("grid must increase strictly from 0 to 1")
        if self.postures.ndim != 3 or self.postures.shape[0] != len(g) or self.postures.shape[2] != 3:
            raise DataError(f"postures shape {self.postures.shape} does not match grid of {len(g)}")
        if not self.duration > 0:
            raise DataError("duration must be positive")

    @property
    def n_parts(self):
        return self.postures.shape[1]

    def __len__(self):
        return len(self.grid)

    def at(self, times):
        """Postures at arbitrary normalized times by part-wise geodesic interpolation."""
        return evaluate_postures(self.grid, self.postures, times)


@dataclass
class TSRVF:
    reference: np.ndarray
    grid: np.ndarray
    values: np.ndarray


@dataclass
class Warping:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        v = self.values
        if v.shape != self.grid.shape:
            raise DataError("warping values must match its grid")
        if v[0] != 0.0 or v[-1] != 1.0 or np.any(np.diff(v) <= 0):
            raise DataError("a warping must increase strictly from 0 to 1")

    @classmethod
    def identity(cls, grid):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, grid.copy())

    def __call__(self, t):
        return np.interp(t, self.grid, self.values)

    def inverse(self, grid=None):
        grid = self.grid if grid is None else np.asarray(grid, dtype=float)
        return Warping(grid, np.interp(grid, self.values, self.grid))


@dataclass
class RateFunction:
    grid: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.grid, self.values)


@dataclass
class Alignment:
    warping: Warping
    distance: float
    path: np.ndarray
    lattice_cost: float


# -- kernel regression ------------------------------------------------------

def kernel_weights(d, h, kernel="gaussian"):
    """Kernel weights for signed offsets ``d`` at bandwidth ``h``."""
    x = np.asarray(d, dtype=float) / h
    if kernel == "gaussian":
        return np.exp(-0.5 * x * x)
    if kernel == "epanechnikov":
        return np.clip(1.0 - x * x, 0.0, None)
    if kernel == "uniform":
        return (np.abs(x) <= 1.0).astype(float)
    raise ValueError(f"unknown kernel {kernel!r}")


def _weighted_karcher(data, weights, init, max_iter, tol):
    """Weighted Karcher means for a batch of weight vectors.

    ``data`` is ``(S, P, 3)``, ``weights`` is ``(Q, S)`` and ``init`` is
    ``(Q, P, 3)``. Returns the estimates and a per-query convergence flag.
    """
    Y = np.array(init, dtype=float)
    w = weights / weights.sum(axis=1, keepdims=True)
    active = np.ones(len(Y), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        F, bad = log_unchecked(Y[idx, None], data[None])
        if np.any(bad):
            heavy = bad & (w[idx, :, None] > 1e-12)
            if np.any(heavy):
                q, s, p = np.argwhere(heavy)[0]
                raise AntipodalError("kernel mean straddles antipodal postures", part=int(p), index=int(idx[q]))
        Fbar = np.einsum("qs,qspk->qpk", w[idx], F)
        step = np.sqrt(np.sum(Fbar * Fbar, axis=(1, 2)))
        moving = step >= tol
        upd = idx[moving]
        if len(upd):
            Y[upd] = sphere_exp(Y[upd], Fbar[moving])
        active[idx[~moving]] = False
    return Y, ~active


def local_kernel_posture(u, postures, u_star, h, kernel="gaussian", max_iter=50, tol=1e-10):
    """Local kernel estimate of the posture at covariate value ``u_star``.

    Minimizes the kernel-weighted sum of squared posture distances by
    iterated log/exp averaging, starting from the datum nearest to ``u_star``.
    """
    u = np.asarray(u, dtype=float)
    postures = np.asarray(postures, dtype=float)
    return _kernel_postures(u, postures, np.atleast_1d(float(u_star)), h, kernel, max_iter, tol)[0]


def _kernel_postures(u, postures, queries, h, kernel, max_iter, tol):
    w = kernel_weights(queries[:, None] - u[None, :], h, kernel)
    empty = np.all(w < 1e-300, axis=1)
    if np.any(empty):
        q = queries[np.argmax(empty)]
        raise EmptyWindowError(f"no data within the kernel window at {q:.6g} (bandwidth {h:.3g})")
    w = np.where(w < 1e-300, 0.0, w)
    nearest = np.argmin(np.abs(queries[:, None] - u[None, :]), axis=1)
    Y, converged = _weighted_karcher(postures, w, postures[nearest], max_iter, tol)
    if not np.all(converged):
        warnings.warn(
            f"kernel posture estimate did not converge in {max_iter} iterations "
            f"at {int(np.sum(~converged))} query point(s)",
            ConvergenceWarning,
            stacklevel=3,
        )
    return Y


def karcher_mean(postures, weights=None, max_iter=500, tol=1e-10):
    """(Weighted) Karcher mean of a stack of postures, initialized at the first one."""
    postures = np.asarray(postures, dtype=float)
    w = np.ones(len(postures)) if weights is None else np.asarray(weights, dtype=float)
    Y, converged = _weighted_karcher(postures, w[None], postures[:1], max_iter, tol)
    if not converged[0]:
        warnings.warn("Karcher mean did not converge", ConvergenceWarning, stacklevel=2)
    return Y[0]


def resample_sequence(seq, L, h=None, kernel="gaussian", max_iter=50, tol=1e-10):
    """Kernel-smoothed postures of ``seq`` on a uniform grid of ``L`` points.

    The default bandwidth is the median spacing of the input samples.
    """
    if L < 2:
        raise DataError("L must be at least 2")
    if h is None:
        h = float(np.median(np.diff(seq.grid)))
    grid = uniform_grid(L)
    Y = _kernel_postures(seq.grid, seq.postures, grid, h, kernel, max_iter, tol)
    return PostureSequence(grid, Y, seq.duration, seq.label)


# -- evaluation at warped times ----------------------------------------------

def evaluate_postures(grid, postures, times):
    grid = np.asarray(grid, dtype=float)
    times = np.clip(np.asarray(times, dtype=float), grid[0], grid[-1])
    idx = np.clip(np.searchsorted(grid, times, side="right") - 1, 0, len(grid) - 2)
    frac = (times - grid[idx]) / (grid[idx + 1] - grid[idx])
    frac = np.broadcast_to(frac[..., None], frac.shape + (postures.shape[1],))
    return sphere_geodesic(postures[idx], postures[idx + 1], frac)


def compose(seq, warping, grid=None):
    """The reparameterized sequence ``seq o warping`` sampled on ``grid``."""
    grid = warping.grid if grid is None else np.asarray(grid, dtype=float)
    Y = seq.at(warping(grid))
    return PostureSequence(grid, Y, seq.duration, seq.label)


# -- TSRVF -------------------------------------------------------------------

def sequence_velocity(seq):
    """Central-difference velocity field from part-wise log maps, one-sided at the ends."""
    Y, g = seq.postures, seq.grid
    fwd = sphere_log(Y[:-1], Y[1:])
    bwd = sphere_log(Y[1:], Y[:-1])
    V = np.empty_like(Y)
    V[0] = fwd[0] / (g[1] - g[0])
    V[-1] = -bwd[-1] / (g[-1] - g[-2])
    if len(g) > 2:
        V[1:-1] = (fwd[1:] - bwd[:-1]) / (g[2:] - g[:-2])[:, None, None]
    return V


def compute_tsrvf(seq, reference):
    """Transported square-root velocity field of ``seq`` at posture ``reference``.

    Values are ``2P``-vectors in the tangent basis at the reference; the speed
    is the Frobenius norm of the stacked part velocities.
    """
    reference = np.asarray(reference, dtype=float)
    V = sequence_velocity(seq)
    R = np.broadcast_to(reference, seq.postures.shape)
    try:
        T = sphere_transport(seq.postures, R, V)
    except AntipodalError as exc:
        raise AntipodalError("posture is antipodal to the reference", part=exc.part, index=exc.index) from None
    speed = np.sqrt(np.sum(V * V, axis=(1, 2)))
    c = tangent_to_coords(reference, T)
    scale = np.where(speed < SPEED_FLOOR, 0.0, 1.0 / np.sqrt(np.where(speed < SPEED_FLOOR, 1.0, speed)))
    return TSRVF(reference, seq.grid.copy(), c * scale[:, None])


def tsrvf_distance(h1, h2, metric="l2"):
    """Distance between two TSRVFs sharing grid and reference.

    ``"l2"`` is the root of the integrated squared difference, the metric
    under which a common warping acts isometrically; ``"l1"`` integrates the
    pointwise norm instead.
    """
    if not np.array_equal(h1.grid, h2.grid):
        raise GridMismatch("TSRVFs are sampled on different grids")
    if not np.array_equal(h1.reference, h2.reference):
        raise GridMismatch("TSRVFs are transported to different reference postures")
    d = h1.values - h2.values
    sq = np.sum(d * d, axis=1)
    if metric == "l2":
        return float(np.sqrt(np.trapezoid(sq, h1.grid)))
    if metric == "l1":
        return float(np.trapezoid(np.sqrt(sq), h1.grid))
    raise ValueError(f"unknown metric {metric!r}")


def _interp_rows(grid, values, x):
    """Row-wise linear interpolation of ``values`` (N, D) at positions ``x``."""
    idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
    frac = (x - grid[idx]) / (grid[idx + 1] - grid[idx])
    return values[idx] * (1.0 - frac)[:, None] + values[idx + 1] * frac[:, None]


def _on_lattice(h, G):
    grid = uniform_grid(G)
    if len(h.grid) == G and np.array_equal(h.grid, grid):
        return h.values
    return _interp_rows(h.grid, h.values, grid)


# -- dynamic programming -----------------------------------------------------

def segment_costs(q_ref, q_mov, steps=DP_STEPS):
    """Cost of every lattice segment for every allowed step.

    ``q_ref`` and ``q_mov`` are TSRVF values on a common uniform grid of ``G``
    points. For step ``(di, dj)`` the entry ``[i, j]`` is the trapezoid-rule
    integral over reference times ``t_i .. t_{i+di}`` of
    ``|q_ref(t) - sqrt(m) q_mov(gamma(t))|^2`` with slope ``m = dj / di``.
    The squared norm is expanded so that every term is a slice of one Gram
    matrix between the two fields; the fractional moving positions of a step
    share a single interpolation weight.
    """
    G = len(q_ref)
    dt = 1.0 / (G - 1)
    na = np.einsum("id,id->i", q_ref, q_ref)
    nb = np.einsum("id,id->i", q_mov, q_mov)
    nb_next = np.einsum("id,id->i", q_mov[:-1], q_mov[1:])
    gram = q_ref @ q_mov.T
    costs = []
    for di, dj in steps:
        m = dj / di
        rt = np.sqrt(m)
        n_i, n_j = G - di, G - dj
        total = np.zeros((n_i, n_j))
        for k in range(di + 1):
            shift, rem = divmod(k * dj, di)
            f = rem / di
            cols = slice(shift, shift + n_j)
            rows = slice(k, k + n_i)
            if rem == 0:
                bb = nb[cols]
                ab = gram[rows, cols]
            else:
                nxt = slice(shift + 1, shift + 1 + n_j)
                bb = (1 - f) ** 2 * nb[cols] + 2 * f * (1 - f) * nb_next[cols] + f * f * nb[nxt]
                ab = (1 - f) * gram[rows, cols] + f * gram[rows, nxt]
            term = na[rows, None] + m * bb[None, :] - 2 * rt * ab
            weight = 0.5 if k in (0, di) else 1.0
            total += weight * term
        costs.append(dt * np.maximum(total, 0.0))
    return costs


def dp_align(costs, G, steps=DP_STEPS):
    """Minimal-cost monotone lattice path from ``(0, 0)`` to ``(G-1, G-1)``.

    Returns the path as an array of ``(i, j)`` nodes and its total cost.
    Ties keep the earliest step in ``steps``.
    """
    D = np.full((G, G), np.inf)
    back = np.full((G, G), -1, dtype=int)
    D[0, 0] = 0.0
    for i in range(1, G):
        for s, (di, dj) in enumerate(steps):
            if i - di < 0:
                continue
            cand = D[i - di, :G - dj] + costs[s][i - di]
            cur = D[i, dj:]
            better = cand < cur
            cur[better] = cand[better]
            back[i, dj:][better] = s
    if not np.isfinite(D[G - 1, G - 1]):
        raise GridTooCoarse("no admissible lattice path; adjust the grid")
    path = [(G - 1, G - 1)]
    i = j = G - 1
    while (i, j) != (0, 0):
        di, dj = steps[back[i, j]]
        i, j = i - di, j - dj
        path.append((i, j))
    return np.array(path[::-1]), float(D[G - 1, G - 1])


def align_tsrvf(h_mov, h_ref, dp_grid=None, grid=None):
    """Elastic alignment of one TSRVF to another by dynamic programming.

    Both fields are brought onto a ``dp_grid`` uniform lattice. The returned
    warping is sampled on ``grid`` (the reference grid by default) and the
    distance is the square root of the minimal lattice cost.
    """
    if not np.array_equal(h_mov.reference, h_ref.reference):
        raise GridMismatch("TSRVFs are transported to different reference postures")
    G = len(h_ref.grid) if dp_grid is None else int(dp_grid)
    if G < MIN_DP_GRID:
        raise GridTooCoarse(f"dp_grid must be at least {MIN_DP_GRID}, got {G}")
    q_ref = _on_lattice(h_ref, G)
    q_mov = _on_lattice(h_mov, G)
    path, cost = dp_align(segment_costs(q_ref, q_mov), G)
    tau = uniform_grid(G)
    grid = h_ref.grid if grid is None else np.asarray(grid, dtype=float)
    values = np.interp(grid, tau[path[:, 0]], tau[path[:, 1]])
    values[0], values[-1] = 0.0, 1.0
    return Alignment(Warping(grid, values), float(np.sqrt(cost)), path, cost)


def default_reference(seq):
    """Karcher mean of a sequence's postures, used as the TSRVF base point."""
    return karcher_mean(seq.postures)


def align_sequences(moving, ref, reference=None, dp_grid=None):
    """Warp ``moving`` onto ``ref``; returns an :class:`Alignment`."""
    Y_R = default_reference(ref) if reference is None else np.asarray(reference, dtype=float)
    return align_tsrvf(compute_tsrvf(moving, Y_R), compute_tsrvf(ref, Y_R), dp_grid, ref.grid)


def motion_distance(a1, a2, reference=None, dp_grid=None):
    """Elastic distance between the motions of two posture sequences."""
    return align_sequences(a1, a2, reference, dp_grid).distance


# -- rates -------------------------------------------------------------------

def _derivative(grid, values):
    d = np.empty_like(values)
    d[0] = (values[1] - values[0]) / (grid[1] - grid[0])
    d[-1] = (values[-1] - values[-2]) / (grid[-1] - grid[-2])
    d[1:-1] = (values[2:] - values[:-2]) / (grid[2:] - grid[:-2])
    return d


def scaled_warping(warping, U_moving, U_ref=1.0):
    return (U_moving / U_ref) * warping.values


def rate_from_warping(warping, U_moving, U_ref=1.0):
    """Log relative instantaneous rate ``log(d/dt (U/U_R) gamma)``."""
    delta = scaled_warping(warping, U_moving, U_ref)
    ddot = np.maximum(_derivative(warping.grid, delta), RATE_FLOOR)
    return RateFunction(warping.grid.copy(), np.log(ddot))


def cumulative_rate(rate, s, t):
    """``log`` of the trapezoid integral of ``exp(r)`` over ``[s, t]``."""
    if not (0.0 <= s < t <= 1.0):
        raise BadInterval(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    g = rate.grid
    inner = g[(g > s) & (g < t)]
    x = np.concatenate([[s], inner, [t]])
    return float(np.log(np.trapezoid(np.exp(rate(x)), x)))
