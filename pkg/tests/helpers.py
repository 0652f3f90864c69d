"""Shared constructions for tests: smooth posture curves and planted warps."""

import numpy as np

from motionlab.motion import PostureSequence, uniform_grid
from motionlab.sphere import posture_exp


def random_posture(rng, P):
    Y = rng.normal(size=(P, 3))
    return Y / np.linalg.norm(Y, axis=1, keepdims=True)


def project_tangent(M, V):
    return V - np.sum(V * M, axis=-1, keepdims=True) * M


class SmoothCurve:
    """``t -> exp_M(sum_k a_k sin(k pi t + phi_k))``, smooth and far from antipodal."""

    def __init__(self, rng, P, modes=3, amp=0.5):
        self.M = random_posture(rng, P)
        self.coef = project_tangent(self.M, rng.normal(size=(modes, P, 3))) * amp / np.arange(1, modes + 1)[:, None, None]
        self.phase = rng.uniform(0, np.pi, modes)
        self.freq = np.pi * np.arange(1, modes + 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = np.sin(np.multiply.outer(t, self.freq) + self.phase)
        F = np.einsum("...k,kpi->...pi", s, self.coef)
        return posture_exp(np.broadcast_to(self.M, F.shape), F)

    def sequence(self, L, warp=None, duration=1.0):
        g = uniform_grid(L)
        return PostureSequence(g, self(g if warp is None else warp(g)), duration)


class SmoothWarp:
    """``gamma(t) = t + sum_k b_k sin(k pi t) / (k pi)`` with slope bounded in ``[1 - s, 1 + s]``."""

    def __init__(self, rng, strength=0.5, modes=2):
        b = rng.normal(size=modes)
        self.b = strength * b / np.sum(np.abs(b))
        self.freq = np.pi * np.arange(1, modes + 1)
        dense = np.linspace(0, 1, 200001)
        self._dense = dense
        self._vals = self(dense)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = t + np.sum(self.b * np.sin(np.multiply.outer(t, self.freq)) / self.freq, axis=-1)
        return np.clip(out, 0.0, 1.0)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 + np.sum(self.b * np.cos(np.multiply.outer(t, self.freq)), axis=-1)

    def inverse(self, t):
        return np.interp(t, self._vals, self._dense)
