"""Sliced-inverse-regression style reduction of tangent coordinates against rates.

Kernel-smoothed inverse regression curves ``E[c | r]`` are evaluated at every
observed rate; their (uncentered by default) second moment is
eigen-decomposed and the leading eigenvectors are mapped back through the
unconditional covariance to give projection directions ``beta_b``.
"""

from dataclasses import dataclass
import json

import numpy as np

from .errors import BadInterval, DataError, EmptyWindowError, RankDeficient
from .motion import kernel_weights
from .sphere import coords_to_posture, posture_coords

EXPLAINED_DEFAULT = 0.90


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    if sd == 0.0:
        return 1.0
    return 1.06 * sd * len(x) ** (-0.2)


def _weights(rates, r_star, h, kernel):
    w = kernel_weights(np.subtract.outer(np.atleast_1d(r_star), rates), h, kernel)
    w = np.where(w < 1e-300, 0.0, w)
    if np.any(np.all(w == 0.0, axis=1)):
        raise EmptyWindowError(f"no observations within bandwidth {h:.3g} of the requested rate")
    return w / w.sum(axis=1, keepdims=True)


def conditional_expectation(coords, rates, r_star, h=None, kernel="gaussian"):
    """Nadaraya-Watson estimate of ``E[c | r = r_star]``; ``r_star`` may be an array."""
    coords = np.asarray(coords, dtype=float)
    rates = np.asarray(rates, dtype=float)
    h = silverman_bandwidth(rates) if h is None else h
    out = _weights(rates, r_star, h, kernel) @ coords
    return out[0] if np.ndim(r_star) == 0 else out


@dataclass
class SIRResult:
    directions: np.ndarray  # (dim, B), columns beta_b
    eigenvalues: np.ndarray  # all eigenvalues of C-hat, descending
    mean_cov: np.ndarray
    bandwidth: float

    @property
    def B(self):
        return self.directions.shape[1]

    @property
    def explained(self):
        ev = np.clip(self.eigenvalues, 0.0, None)
        total = ev.sum()
        return ev / total if total > 0 else np.zeros_like(ev)

    def project(self, coords):
        return np.asarray(coords, dtype=float) @ self.directions

    def reconstruct_coords(self, features):
        """Least-norm coordinates ``D (D^T D)^-1 z`` reproducing the features ``z``."""
        D = self.directions
        G = D.T @ D
        if np.linalg.cond(G) > 1e12:
            raise RankDeficient("projection directions are linearly dependent")
        return np.linalg.solve(G, np.asarray(features, dtype=float).T).T @ D.T

    def to_dict(self):
        return {
            "directions": self.directions.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "mean_cov": self.mean_cov.tolist(),
            "bandwidth": self.bandwidth,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["directions"]), np.array(d["eigenvalues"]), np.array(d["mean_cov"]),
                   float(d["bandwidth"]))

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"


def choose_B(eigenvalues, explained=EXPLAINED_DEFAULT):
    """Smallest count of leading eigenvalues reaching the given share of the trace."""
    ev = np.clip(eigenvalues, 0.0, None)
    total = ev.sum()
    if total <= 0:
        return 1
    return int(np.searchsorted(np.cumsum(ev) / total, explained - 1e-12) + 1)


def sir_directions(coords, rates, B=None, h=None, ridge=None, mean_cov=None, center=False, kernel="gaussian"):
    """Projection directions linking coordinates ``(M, dim)`` to rates ``(M,)``.

    ``mean_cov`` is the unconditional covariance ``K_t`` (default: sample
    second moment of ``coords``). Directions are ``(K_t + eps I)^-1 v_b``
    scaled so that ``|K_t beta_b| = 1`` with the largest-magnitude entry
    positive.
    """
    coords = np.asarray(coords, dtype=float)
    rates = np.asarray(rates, dtype=float)
    M, dim = coords.shape
    if len(rates) != M:
        raise DataError("coords and rates must have the same length")
    h = silverman_bandwidth(rates) if h is None else float(h)
    E = conditional_expectation(coords, rates, rates, h, kernel)
    if center:
        E = E - E.mean(axis=0)
    C = E.T @ E / M
    C = 0.5 * (C + C.T)
    w, V = np.linalg.eigh(C)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    if B is None:
        B = choose_B(w)
    if B < 1 or B > dim:
        raise DataError(f"B must lie in 1..{dim}")
    if np.sum(w > 1e-12) < B:
        raise RankDeficient(f"only {int(np.sum(w > 1e-12))} informative directions, {B} requested")
    K = coords.T @ coords / M if mean_cov is None else np.asarray(mean_cov, dtype=float)
    eps = 1e-6 * np.trace(K) / dim if ridge is None else ridge
    beta = np.linalg.solve(K + eps * np.eye(dim), V[:, :B])
    beta = beta / np.linalg.norm(K @ beta, axis=0)
    lead = beta[np.argmax(np.abs(beta), axis=0), np.arange(B)]
    beta = beta * np.where(lead < 0, -1.0, 1.0)
    return SIRResult(beta, w, K, h)


def window_indices(grid, s, t):
    grid = np.asarray(grid, dtype=float)
    if not (0.0 <= s <= t <= 1.0):
        raise BadInterval(f"need 0 <= s <= t <= 1, got s={s}, t={t}")
    idx = np.flatnonzero((grid >= s - 1e-12) & (grid <= t + 1e-12))
    if len(idx) == 0:
        raise BadInterval(f"no grid points in [{s}, {t}]")
    return idx


def sequence_coords(postures, means):
    """Concatenated per-step tangent coordinates of a window ``(W, P, 3)`` at the means."""
    return posture_coords(np.asarray(means, dtype=float), np.asarray(postures, dtype=float)).ravel()


def reconstruct_from_features(features, result, mean):
    """Postures whose coordinates at ``mean`` are the least-norm preimage of ``features``.

    ``mean`` is one posture ``(P, 3)`` or a window of them ``(W, P, 3)``.
    """
    mean = np.asarray(mean, dtype=float)
    c = result.reconstruct_coords(features)
    if mean.ndim == 2:
        return coords_to_posture(mean, c)
    return coords_to_posture(mean, c.reshape(mean.shape[0], -1))
