"""Gaussian-process model of execution-rate functions.

Rates observed at (time, value) pairs, possibly pooled over many
performances, are modelled as noisy draws of one zero-mean GP with a
squared-exponential covariance.
"""

from dataclasses import dataclass
import itertools

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DataError, SingularGram

JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def squared_exponential(s, t, amplitude2, lengthscale):
    d = np.subtract.outer(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    return amplitude2 * np.exp(-0.5 * (d / lengthscale) ** 2)


def _group(times, values):
    """Collapse repeated times into their mean value and multiplicity."""
    uniq, inverse, counts = np.unique(times, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=values, minlength=len(uniq))
    return uniq, sums / counts, counts


@dataclass
class RateGP:
    """GP posterior over rate functions given training pairs.

    Observations sharing a time stamp are replaced by their average with noise
    variance divided by the count; for i.i.d. Gaussian noise this yields the
    same posterior while keeping the Gram matrix small and non-singular.
    """

    train_times: np.ndarray
    train_rates: np.ndarray
    amplitude2: float = 1.0
    lengthscale: float = 0.1
    noise_var: float = 1e-2

    def __post_init__(self):
        t = np.asarray(self.train_times, dtype=float).ravel()
        r = np.asarray(self.train_rates, dtype=float).ravel()
        if t.shape != r.shape or len(t) == 0:
            raise DataError("need matching, non-empty training times and rates")
        if not (self.amplitude2 > 0 and self.lengthscale > 0 and self.noise_var >= 0):
            raise DataError("GP hyperparameters must be positive (noise variance non-negative)")
        self.train_times, self.train_rates = t, r
        self._t, self._r, counts = _group(t, r)
        gram = squared_exponential(self._t, self._t, self.amplitude2, self.lengthscale)
        gram[np.diag_indices_from(gram)] += self.noise_var / counts
        self._factor, self.jitter = self._cholesky(gram)
        self._alpha = cho_solve(self._factor, self._r)

    @staticmethod
    def _cholesky(gram):
        scale = max(1.0, float(np.max(np.diag(gram))))
        for jitter in JITTERS:
            try:
                g = gram + jitter * scale * np.eye(len(gram)) if jitter else gram
                return cho_factor(g, lower=True), jitter
            except np.linalg.LinAlgError:
                continue
        raise SingularGram("Gram matrix is not positive definite even with jitter 1e-6")

    def prior_var(self, t):
        return np.full(np.shape(t), self.amplitude2, dtype=float)

    def posterior(self, t):
        """Posterior mean and variance (clamped at zero) at times ``t``."""
        t = np.asarray(t, dtype=float)
        q = squared_exponential(np.atleast_1d(t), self._t, self.amplitude2, self.lengthscale)
        mean = q @ self._alpha
        v = cho_solve(self._factor, q.T)
        var = np.maximum(self.amplitude2 - np.sum(q * v.T, axis=1), 0.0)
        if t.ndim == 0:
            return float(mean[0]), float(var[0])
        return mean, var

    def log_marginal_likelihood(self):
        L = np.tril(self._factor[0])
        n = len(self._r)
        return float(-0.5 * self._r @ self._alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi))

    def to_dict(self):
        return {"amplitude2": self.amplitude2, "lengthscale": self.lengthscale,
                "noise_var": self.noise_var, "jitter": self.jitter}


def gp_posterior(model, t):
    return model.posterior(t)


def rate_band(model, grid, k=1.5):
    """Posterior mean and the ``mean -/+ k sd`` curves on ``grid``."""
    mean, var = model.posterior(np.asarray(grid, dtype=float))
    sd = np.sqrt(var)
    return mean, mean - k * sd, mean + k * sd


def fit_rate_gp(times, rates, amplitudes2=None, lengthscales=None, noise_var=1e-2):
    """Grid search of the log marginal likelihood over amplitude and lengthscale.

    Ties keep the first grid combination.
    """
    rates = np.asarray(rates, dtype=float)
    if amplitudes2 is None:
        base = max(float(np.var(rates)), 1e-6)
        amplitudes2 = base * np.array([0.25, 0.5, 1.0, 2.0, 4.0])
    if lengthscales is None:
        lengthscales = np.array([0.02, 0.05, 0.1, 0.2, 0.4])
    best, best_ll = None, -np.inf
    for a2, ell in itertools.product(amplitudes2, lengthscales):
        model = RateGP(times, rates, float(a2), float(ell), noise_var)
        ll = model.log_marginal_likelihood()
        if ll > best_ll:
            best, best_ll = model, ll
    return best
