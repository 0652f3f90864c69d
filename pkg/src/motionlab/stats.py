"""Wrapped truncated-normal posture distributions and their estimation.

A posture ``Y`` near a mean ``mu`` is described by its tangent coordinates
``c = coords(mu, Y)``; the density is a zero-mean normal in ``c`` truncated
to the support where every part norm is at most ``pi / 2``. The truncation
mass is treated as a constant, so likelihoods below omit it.

:func:`fit_map` fits one such distribution per time step with the means tied
together by a Gaussian random-walk prior and inverse-Wishart priors on the
covariances, by coordinate descent over time steps.
"""

from dataclasses import dataclass, field
import json
import warnings

import numpy as np

from .errors import ConvergenceWarning, DataError, RejectionStall, SingularCovariance
from .sphere import coords_to_posture, part_norms, posture_coords, posture_transport, tangent_basis

SUPPORT_RADIUS = np.pi / 2
MIN_LOGDET = np.log(1e-300)


def _logdet(K):
    sign, logdet = np.linalg.slogdet(K)
    if sign <= 0 or logdet < MIN_LOGDET:
        raise SingularCovariance("covariance determinant below 1e-300")
    return logdet


def in_support(c):
    """True where every part norm of the coordinates is at most pi / 2."""
    return np.all(part_norms(c) <= SUPPORT_RADIUS, axis=-1)


def log_density(c, K):
    """Unnormalized log density ``-1/2 log|K| - 1/2 c^T K^-1 c`` on the support.

    ``c`` may be a stack of coordinate vectors; points outside the support
    get ``-inf``.
    """
    c = np.asarray(c, dtype=float)
    K = np.asarray(K, dtype=float)
    logdet = _logdet(K)
    flat = c.reshape(-1, c.shape[-1])
    quad = np.sum(flat * np.linalg.solve(K, flat.T).T, axis=-1).reshape(c.shape[:-1])
    out = -0.5 * logdet - 0.5 * quad
    return np.where(in_support(c), out, -np.inf)


@dataclass
class WrappedNormal:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        d = 2 * self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise DataError(f"covariance must be {d} x {d} for {self.mean.shape[0]} parts")
        if not np.allclose(self.cov, self.cov.T, atol=1e-9):
            raise DataError("covariance must be symmetric")

    def log_density(self, Y):
        return log_density(posture_coords(self.mean, Y), self.cov)

    def sample(self, rng=None, size=None, seed=None):
        return sample_wrapped(self.mean, self.cov, rng=rng, size=size, seed=seed)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"]), np.array(d["cov"]))


def _sqrt_factor(K):
    w, V = np.linalg.eigh(K)
    if w.min(initial=0.0) < -1e-10 * max(1.0, abs(w).max(initial=0.0)):
        raise DataError("covariance must be positive semi-definite")
    return V * np.sqrt(np.clip(w, 0.0, None))


def sample_wrapped(mean, cov, rng=None, size=None, seed=None, batch=256):
    """Draw postures from the wrapped truncated normal by rejection on the support.

    Pass either a generator ``rng`` or an integer ``seed``. Returns one
    posture when ``size`` is None, else an array of ``size`` postures.
    """
    mean = np.asarray(mean, dtype=float)
    A = _sqrt_factor(np.asarray(cov, dtype=float))
    if rng is None:
        rng = np.random.default_rng(seed)
    need = 1 if size is None else int(size)
    accepted, drawn, count = [], 0, 0
    while count < need:
        z = rng.standard_normal((max(batch, 2 * (need - count)), A.shape[1]))
        c = z @ A.T
        ok = c[in_support(c)]
        drawn += len(c)
        accepted.append(ok)
        count += len(ok)
        if drawn >= 100_000 and count / drawn < 1e-4:
            raise RejectionStall(f"acceptance rate {count / drawn:.2g} on the support; covariance too wide")
    c = np.concatenate(accepted)[:need]
    Y = coords_to_posture(np.broadcast_to(mean, (need,) + mean.shape), c)
    return Y[0] if size is None else Y


def frame_change(source, target):
    """Block-diagonal map taking tangent coordinates at ``source`` to coordinates at ``target``.

    Each part's basis at ``source`` is parallel-transported to ``target`` and
    expressed in the basis there, giving one 2x2 rotation per part.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    nu_s, om_s = tangent_basis(source)
    nu_t, om_t = tangent_basis(target)
    a, b = posture_transport(source, target, nu_s), posture_transport(source, target, om_s)
    P = source.shape[0]
    R = np.zeros((2 * P, 2 * P))
    R[0::2, 0::2] = np.diag(np.sum(nu_t * a, axis=1))
    R[0::2, 1::2] = np.diag(np.sum(nu_t * b, axis=1))
    R[1::2, 0::2] = np.diag(np.sum(om_t * a, axis=1))
    R[1::2, 1::2] = np.diag(np.sum(om_t * b, axis=1))
    return R


def transport_cov(cov, source, target):
    """Covariance of coordinates at ``source`` re-expressed in the tangent basis at ``target``."""
    R = frame_change(source, target)
    return R @ np.asarray(cov, dtype=float) @ R.T


# -- maximum likelihood -----------------------------------------------------

def fit_mle(samples, max_iter=100, tol=1e-10):
    """Maximum-likelihood wrapped normal from a stack of postures ``(M, P, 3)``.

    The mean is iterated as ``mu <- exp_mu(mean of coords)`` from the first
    sample until the mean coordinate norm drops to ``tol``; the covariance is
    the average outer product of the coordinates at that mean.
    """
    Y = np.asarray(samples, dtype=float)
    if Y.ndim != 3 or len(Y) < 1:
        raise DataError("samples must be a non-empty (M, P, 3) array")
    mu = Y[0].copy()
    for _ in range(max_iter):
        c = posture_coords(mu, Y)
        cbar = c.mean(axis=0)
        if np.linalg.norm(cbar) <= tol:
            break
        mu = coords_to_posture(mu, cbar)
    else:
        c = posture_coords(mu, Y)
        if np.linalg.norm(c.mean(axis=0)) > tol:
            warnings.warn(f"mean iteration did not converge in {max_iter} steps", ConvergenceWarning, stacklevel=2)
    K = c.T @ c / len(Y)
    return WrappedNormal(mu, 0.5 * (K + K.T))


# -- MAP with autocorrelated means --------------------------------------------

@dataclass
class Hyper:
    """Prior hyperparameters: mean-walk variance, first-step prior mean, inverse-Wishart scale and dof."""

    lambda2: float
    mu0: np.ndarray
    K0: np.ndarray
    nu0: float

    def validate(self, P):
        d = 2 * P
        if not self.lambda2 > 0:
            raise DataError("lambda2 must be positive")
        if self.nu0 <= d - 1:
            raise DataError(f"nu0 must exceed {d - 1}")
        if np.asarray(self.K0).shape != (d, d) or np.linalg.eigvalsh(self.K0).min() <= 0:
            raise DataError("K0 must be positive definite")

    def to_dict(self):
        return {"lambda2": self.lambda2, "mu0": np.asarray(self.mu0).tolist(),
                "K0": np.asarray(self.K0).tolist(), "nu0": self.nu0}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["lambda2"]), np.array(d["mu0"]), np.array(d["K0"]), float(d["nu0"]))


@dataclass
class MotionDistribution:
    """Per-time-step wrapped normals with temporally correlated means."""

    means: np.ndarray
    covs: np.ndarray
    hyper: Hyper
    objective: list = field(default_factory=list)
    converged: bool = True

    @property
    def steps(self):
        return [WrappedNormal(m, K) for m, K in zip(self.means, self.covs)]

    def to_dict(self):
        return {
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
            "hyper": self.hyper.to_dict(),
            "objective": [float(v) for v in self.objective],
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["means"]), np.array(d["covs"]), Hyper.from_dict(d["hyper"]),
                   list(d.get("objective", [])), bool(d.get("converged", True)))

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def default_hyper(data, P):
    """Weakly informative defaults: lambda2 = 1, mu0 = MLE mean at the first step, K0 = 1e-3 I, nu0 = 2P + 2."""
    d = 2 * P
    mu0 = fit_mle(data[:, 0]).mean
    return Hyper(1.0, mu0, 1e-3 * np.eye(d), float(d + 2))


def _cov_update(c, hyper, dof_extra):
    S = c.T @ c + hyper.K0
    K = S / (len(c) + hyper.nu0 + dof_extra)
    return 0.5 * (K + K.T)


def _sq_dist(a, b):
    c = posture_coords(a, b)
    return float(c @ c)


def map_objective(data, means, covs, hyper):
    """Twice the negative log posterior up to a constant.

    ``sum_l [(M + nu0 + 2n - 1) log|K_l| + sum_m c^T K_l^-1 c + tr(K0 K_l^-1)]
    + (1 / lambda2) sum_l |coords(mu_l, mu_{l-1})|^2`` with ``mu_0`` the prior mean.
    """
    M, L, P = data.shape[:3]
    dof = M + hyper.nu0 + 2 * P + 1
    total = 0.0
    prev = hyper.mu0
    for l in range(L):
        K = covs[l]
        Kinv = np.linalg.inv(K)
        c = posture_coords(means[l], data[:, l])
        total += dof * _logdet(K) + np.einsum("mi,ij,mj->", c, Kinv, c) + np.trace(hyper.K0 @ Kinv)
        total += _sq_dist(means[l], prev) / hyper.lambda2
        prev = means[l]
    return float(total)


def _local_mean_cost(data_l, mu, Kinv, neighbors, lambda2):
    c = posture_coords(mu, data_l)
    cost = np.einsum("mi,ij,mj->", c, Kinv, c)
    return float(cost + sum(_sq_dist(mu, nb) for nb in neighbors) / lambda2)


def fit_map(data, hyper=None, max_iter=200, tol=1e-8, init=None):
    """MAP fit of a :class:`MotionDistribution` to ``data`` of shape ``(M, L, P, 3)``.

    Each sweep visits ``l = 1..L`` in order: one linearized mean step solving
    ``(M K^-1 + (k / lambda2) I) x = K^-1 sum_m c_m + (1 / lambda2) sum_nb coords(mu_l, nb)``
    with ``k`` the number of neighbors (the prior mean stands in before the
    first step; the last step has no right neighbor), followed by the closed
    form covariance update. A mean step that would raise the local objective
    is halved until it does not. Iteration stops when the summed step norms
    fall to ``tol``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 4 or data.shape[-1] != 3 or data.shape[0] < 1 or data.shape[1] < 1:
        raise DataError("data must have shape (M, L, P, 3)")
    M, L, P = data.shape[:3]
    hyper = default_hyper(data, P) if hyper is None else hyper
    hyper.validate(P)
    dof_extra = 2 * P + 1
    if init is None:
        means = np.stack([fit_mle(data[:, l]).mean for l in range(L)])
    else:
        means = np.array(init, dtype=float)
    covs = np.stack([_cov_update(posture_coords(means[l], data[:, l]), hyper, dof_extra) for l in range(L)])
    history = [map_objective(data, means, covs, hyper)]
    converged = False
    for _ in range(max_iter):
        moved = 0.0
        for l in range(L):
            neighbors = [hyper.mu0 if l == 0 else means[l - 1]]
            if l + 1 < L:
                neighbors.append(means[l + 1])
            Kinv = np.linalg.inv(covs[l])
            c = posture_coords(means[l], data[:, l])
            rhs = Kinv @ c.sum(axis=0) + sum(posture_coords(means[l], nb) for nb in neighbors) / hyper.lambda2
            A = M * Kinv + (len(neighbors) / hyper.lambda2) * np.eye(2 * P)
            x = np.linalg.solve(A, rhs)
            before = _local_mean_cost(data[:, l], means[l], Kinv, neighbors, hyper.lambda2)
            for _ in range(30):
                cand = coords_to_posture(means[l], x)
                if _local_mean_cost(data[:, l], cand, Kinv, neighbors, hyper.lambda2) <= before:
                    means[l] = cand
                    break
                x = 0.5 * x
            else:
                x = np.zeros_like(x)
            moved += float(np.linalg.norm(x))
            covs[l] = _cov_update(posture_coords(means[l], data[:, l]), hyper, dof_extra)
        history.append(map_objective(data, means, covs, hyper))
        if moved <= tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"MAP coordinate descent did not converge in {max_iter} sweeps "
                      f"(last step norm {moved:.3g})", ConvergenceWarning, stacklevel=2)
    return MotionDistribution(means, covs, hyper, history, converged)
