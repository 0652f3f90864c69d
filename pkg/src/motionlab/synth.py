"""Synthetic skeleton datasets with known templates, warps and rate profiles.

Each class has a template posture path: a piecewise geodesic through
waypoints reached by a seeded random walk from a rest posture. An instance
perturbs the waypoints with wrapped-normal noise, runs through the template
on its own clock and is rebuilt as a skeleton with random bone lengths and a
drifting root.

Instance clocks are described in reference time ``t``: the instance spends
physical time ``d delta = (U_R / T) s(t) exp(w(t)) dt`` per unit reference
progress, where ``s`` is a planted slowness profile (one by default), ``w``
a random smooth log-slope and ``T`` a normalizer. A cohort-wide ``pace``
multiplies every instance duration relative to the reference.
"""

from dataclasses import asdict, dataclass, field
import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .motion import evaluate_postures
from .skeleton import (
    NEURON21_REST,
    PRESETS,
    SkeletonSequence,
    bone_lengths,
    chain,
    posture_to_skeleton,
    skeleton_to_posture,
)
from .sphere import posture_exp
from .stats import sample_wrapped

DENSE = 2001


@dataclass
class SlowSegment:
    """Raised-cosine bump of relative slowness ``factor`` over ``[center - width/2, center + width/2]``."""

    center: float
    width: float
    factor: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        x = (t - self.center) / (0.5 * self.width)
        bump = np.where(np.abs(x) < 1, 0.5 * (1 + np.cos(np.pi * x)), 0.0)
        return 1.0 + (self.factor - 1.0) * bump


@dataclass
class ClassSpec:
    label: str
    waypoints: int = 6
    step: float = 0.35
    slow_segment: SlowSegment = None


@dataclass
class DatasetSpec:
    classes: list
    per_class: int = 10
    warp_strength: float = 0.3
    noise_K_scale: float = 0.002
    frame_noise: float = 0.0
    frames: int = 80
    duration: float = 4.0
    duration_jitter: float = 0.05
    pace: float = 1.0
    hierarchy: str = "neuron21"
    seed: int = 0

    def __post_init__(self):
        self.classes = [c if isinstance(c, ClassSpec) else _class_from_dict(c) for c in self.classes]
        if not self.classes:
            raise DataError("a dataset needs at least one class")
        if self.per_class < 1 or self.frames < 2:
            raise DataError("per_class and frames must be at least 1 and 2")
        for name in ("warp_strength", "noise_K_scale", "frame_noise", "duration_jitter"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DataError(f"{name} must be finite and non-negative")
        if not (self.duration > 0 and self.pace > 0):
            raise DataError("duration and pace must be positive")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise DataError("class labels must be unique")
        resolve_hierarchy(self.hierarchy)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _class_from_dict(d):
    d = dict(d)
    if d.get("slow_segment") is not None:
        d["slow_segment"] = SlowSegment(**d["slow_segment"])
    return ClassSpec(**d)


def load_spec(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        d = tomllib.loads(text)
    else:
        d = json.loads(text)
    try:
        return DatasetSpec.from_dict(d)
    except TypeError as exc:
        raise DataError(f"{path}: {exc}") from None


def resolve_hierarchy(name):
    """Hierarchy and rest landmarks for a preset name or ``chain:N``."""
    if name in PRESETS:
        return PRESETS[name], NEURON21_REST
    if name.startswith("chain:"):
        n = int(name.split(":", 1)[1])
        h = chain(n)
        rest = np.zeros((n, 3))
        rest[:, 2] = np.arange(n) * 0.3
        return h, rest
    raise DataError(f"unknown hierarchy {name!r}")


def _rng(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *keys]))


def class_template(spec, k):
    """Waypoints ``(K, P, 3)`` of class ``k``; piecewise-geodesic knots are uniform in ``[0, 1]``."""
    h, rest = resolve_hierarchy(spec.hierarchy)
    cls = spec.classes[k]
    rng = _rng(spec.seed, 1, k)
    Y = skeleton_to_posture(rest, h)
    points = [Y]
    for _ in range(cls.waypoints - 1):
        step = rng.normal(size=Y.shape) * cls.step
        step -= np.sum(step * Y, axis=-1, keepdims=True) * Y
        Y = posture_exp(Y, step)
        points.append(Y)
    return np.stack(points)


def template_postures(waypoints, t):
    knots = np.linspace(0.0, 1.0, len(waypoints))
    return evaluate_postures(knots, waypoints, t)


def random_log_slope(rng, strength, modes=3):
    """Smooth random log-slope ``w(t) = strength * sum_k a_k sin(k pi t + phi_k) / k``."""
    a = rng.normal(size=modes)
    phi = rng.uniform(0, 2 * np.pi, size=modes)
    k = np.arange(1, modes + 1)

    def w(t):
        t = np.asarray(t, dtype=float)
        return strength * np.sum(a * np.sin(np.multiply.outer(t, k * np.pi) + phi) / k, axis=-1)

    return w


def clock_from_slowness(slowness, t=None):
    """Warping ``gamma`` (reference -> instance time) and total relative duration from a slowness curve.

    Returns ``(t, gamma, total)`` on a dense grid, with ``total`` the trapezoid
    integral of the slowness over ``[0, 1]``.
    """
    t = np.linspace(0.0, 1.0, DENSE) if t is None else t
    s = slowness(t)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * np.diff(t))])
    total = cum[-1]
    gamma = cum / total
    gamma[-1] = 1.0
    return t, gamma, total


@dataclass
class Instance:
    skeleton: SkeletonSequence
    gamma: tuple = field(repr=False)  # (dense t, gamma(t))
    log_rate: np.ndarray = field(repr=False)  # planted r(t) on the dense grid


def synthesize_instance(spec, k, i, waypoints=None):
    """Instance ``i`` of class ``k``; deterministic in ``(spec.seed, k, i)``."""
    h, rest = resolve_hierarchy(spec.hierarchy)
    cls = spec.classes[k]
    W = class_template(spec, k) if waypoints is None else waypoints
    rng = _rng(spec.seed, 2, k, i)
    P = W.shape[1]
    if spec.noise_K_scale > 0:
        W = np.stack([sample_wrapped(w, spec.noise_K_scale * np.eye(2 * P), rng=rng) for w in W])
    w = random_log_slope(rng, spec.warp_strength)
    seg = cls.slow_segment

    def slowness(t):
        s = np.exp(w(t))
        return s * seg(t) if seg is not None else s

    t_dense, gamma, total = clock_from_slowness(slowness)
    U = spec.duration * spec.pace * total * np.exp(spec.duration_jitter * rng.normal())
    u = np.linspace(0.0, 1.0, spec.frames)
    phi = np.interp(u, gamma, t_dense)  # instance time -> reference time
    Y = template_postures(W, phi)
    if spec.frame_noise > 0:
        Y = np.stack([sample_wrapped(y, spec.frame_noise * np.eye(2 * P), rng=rng) for y in Y])
    lengths = bone_lengths(rest, h) * rng.uniform(0.9, 1.1) * rng.uniform(0.95, 1.05, size=P)
    origin = rng.normal(size=3) * np.array([2.0, 2.0, 0.0])
    drift = rng.normal(size=3) * np.array([0.2, 0.2, 0.0])
    coords = posture_to_skeleton(Y, h, lengths) + origin + np.multiply.outer(u, drift)[:, None, :]
    t0 = rng.uniform(0.0, 5.0)
    times = t0 + U * u
    skel = SkeletonSequence(h, times, coords, label=cls.label, meta={"class": k, "instance": i})
    log_rate = np.log(U / spec.duration * slowness(t_dense) / total)
    return Instance(skel, (t_dense, gamma), log_rate)


def reference_sequence(spec, k, frames=None):
    """Noise-free template of class ``k`` on a uniform clock with the nominal duration."""
    h, rest = resolve_hierarchy(spec.hierarchy)
    W = class_template(spec, k)
    frames = spec.frames if frames is None else frames
    u = np.linspace(0.0, 1.0, frames)
    coords = posture_to_skeleton(template_postures(W, u), h, bone_lengths(rest, h), rest[h.root])
    return SkeletonSequence(h, spec.duration * u, coords, label=spec.classes[k].label, meta={"class": k, "reference": True})


def synthesize_dataset(spec):
    """All instances, class by class; deterministic given ``spec.seed``."""
    out = []
    for k in range(len(spec.classes)):
        W = class_template(spec, k)
        out.extend(synthesize_instance(spec, k, i, W).skeleton for i in range(spec.per_class))
    return out


def split_indices(n_per_class, n_classes, train_fraction=0.8, seed=0):
    """Per-class random split of instance indices into train and test lists (dataset order)."""
    rng = _rng(seed, 3)
    train, test = [], []
    n_train = int(round(train_fraction * n_per_class))
    for k in range(n_classes):
        perm = rng.permutation(n_per_class)
        base = k * n_per_class
        train.extend(base + j for j in sorted(perm[:n_train]))
        test.extend(base + j for j in sorted(perm[n_train:]))
    return train, test
