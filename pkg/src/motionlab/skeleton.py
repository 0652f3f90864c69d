"""Skeleton data model, normalization to postures, and the JSON file format.

A skeleton frame is an ``(n, 3)`` array of landmark positions. Landmarks
form a tree; every non-root landmark ``i`` contributes the unit direction of
its bone ``x_i - x_parent(i)``, so a posture has ``n - 1`` parts ordered by
child index. Translation, global scale and per-bone length ratios all drop
out of that normalization.
"""

from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError, ZeroBoneError

BONE_EPS = 1e-8


@dataclass(frozen=True)
class Hierarchy:
    """Tree over ``n`` landmarks given as ``(child, parent)`` edges."""

    n: int
    root: int
    edges: tuple

    def __post_init__(self):
        edges = tuple((int(c), int(p)) for c, p in self.edges)
        object.__setattr__(self, "edges", edges)
        n, root = self.n, self.root
        if n < 2:
            raise SchemaError("a skeleton needs at least 2 landmarks")
        if not 0 <= root < n:
            raise SchemaError(f"root {root} outside 0..{n - 1}")
        if len(edges) != n - 1:
            raise SchemaError(f"expected {n - 1} edges, got {len(edges)}")
        parent = {}
        for c, p in edges:
            if not (0 <= c < n and 0 <= p < n):
                raise SchemaError(f"edge ({c}, {p}) references a missing landmark")
            if c == root:
                raise SchemaError(f"root {root} cannot have a parent")
            if c in parent:
                raise SchemaError(f"landmark {c} has more than one parent edge")
            if c == p:
                raise SchemaError(f"landmark {c} is its own parent")
            parent[c] = p
        for start in parent:
            node, seen = start, set()
            while node != root:
                if node in seen:
                    raise SchemaError(f"cycle through landmark {start}")
                seen.add(node)
                node = parent[node]

    @property
    def children(self):
        """Child landmark of each posture part, in part order."""
        return np.array(sorted(c for c, _ in self.edges), dtype=int)

    @property
    def parents(self):
        lookup = dict(self.edges)
        return np.array([lookup[c] for c in self.children], dtype=int)

    @property
    def n_parts(self):
        return self.n - 1

    def build_order(self):
        """Part indices ordered so that every parent is placed before its children."""
        children, parents = self.children, self.parents
        part_of = {c: k for k, c in enumerate(children)}
        placed = {self.root}
        order = []
        pending = list(range(len(children)))
        while pending:
            rest = []
            for k in pending:
                if parents[k] in placed:
                    order.append(k)
                    placed.add(children[k])
                else:
                    rest.append(k)
            pending = rest
        assert len(order) == len(part_of)
        return order


# Landmark names of the 21-point full-body rig; the hips are the root.
NEURON21_NAMES = (
    "head", "neck", "chest", "spine", "r_shoulder", "r_elbow", "r_wrist", "r_hand",
    "l_shoulder", "l_elbow", "l_wrist", "l_hand", "r_hip", "r_knee", "r_ankle", "r_foot",
    "l_hip", "l_knee", "l_ankle", "l_foot", "hips",
)

NEURON21 = Hierarchy(
    n=21,
    root=20,
    edges=(
        (0, 1), (1, 2), (2, 3), (3, 20),
        (4, 2), (5, 4), (6, 5), (7, 6),
        (8, 2), (9, 8), (10, 9), (11, 10),
        (12, 20), (13, 12), (14, 13), (15, 14),
        (16, 20), (17, 16), (18, 17), (19, 18),
    ),
)

# Standing rest pose in metres, z up, facing +y.
NEURON21_REST = np.array([
    [0.0, 0.0, 1.65], [0.0, 0.0, 1.50], [0.0, 0.0, 1.35], [0.0, 0.0, 1.15],
    [-0.18, 0.0, 1.45], [-0.20, 0.0, 1.17], [-0.22, 0.0, 0.92], [-0.22, 0.02, 0.84],
    [0.18, 0.0, 1.45], [0.20, 0.0, 1.17], [0.22, 0.0, 0.92], [0.22, 0.02, 0.84],
    [-0.10, 0.0, 0.95], [-0.10, 0.0, 0.52], [-0.10, 0.0, 0.10], [-0.10, 0.12, 0.02],
    [0.10, 0.0, 0.95], [0.10, 0.0, 0.52], [0.10, 0.0, 0.10], [0.10, 0.12, 0.02],
    [0.0, 0.0, 1.00],
])

PRESETS = {"neuron21": NEURON21}


def chain(n):
    """Hierarchy of a simple chain ``0 <- 1 <- ... <- n-1`` rooted at landmark 0."""
    return Hierarchy(n=n, root=0, edges=tuple((i, i - 1) for i in range(1, n)))


def bone_vectors(coords, h):
    coords = np.asarray(coords, dtype=float)
    return coords[..., h.children, :] - coords[..., h.parents, :]


def bone_lengths(coords, h):
    return np.linalg.norm(bone_vectors(coords, h), axis=-1)


def skeleton_to_posture(coords, h, eps=BONE_EPS):
    """Unit bone directions of one frame ``(n, 3)`` or a stack ``(F, n, 3)``."""
    b = bone_vectors(coords, h)
    norms = np.linalg.norm(b, axis=-1)
    bad = norms <= eps
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise ZeroBoneError(int(idx[-1]), float(norms[tuple(idx)]))
    return b / norms[..., None]


def posture_to_skeleton(posture, h, lengths=None, root_pos=(0.0, 0.0, 0.0)):
    """Rebuild landmark positions from bone directions and nominal bone lengths."""
    posture = np.asarray(posture, dtype=float)
    P = h.n_parts
    lengths = np.ones(P) if lengths is None else np.asarray(lengths, dtype=float)
    if lengths.shape != (P,) or np.any(lengths <= 0):
        raise ValueError("bone lengths must be a positive vector with one entry per part")
    coords = np.zeros(posture.shape[:-2] + (h.n, 3))
    coords[..., h.root, :] = np.asarray(root_pos, dtype=float)
    children, parents = h.children, h.parents
    for k in h.build_order():
        coords[..., children[k], :] = coords[..., parents[k], :] + lengths[k] * posture[..., k, :]
    return coords


@dataclass
class SkeletonSequence:
    """Time-stamped skeleton frames of one operation performance."""

    hierarchy: Hierarchy
    times: np.ndarray
    coords: np.ndarray
    label: str = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.coords = np.asarray(self.coords, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise SchemaError("a sequence needs at least 2 frames")
        if self.coords.shape != (len(self.times), self.hierarchy.n, 3):
            raise SchemaError(
                f"coords shape {self.coords.shape} does not match "
                f"{len(self.times)} frames of {self.hierarchy.n} landmarks"
            )
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.coords))):
            raise SchemaError("non-finite time or coordinate")
        if self.times[0] < 0:
            raise SchemaError("frame times must be non-negative")
        if np.any(np.diff(self.times) <= 0):
            raise SchemaError("frame times must be strictly increasing")

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def postures(self, eps=BONE_EPS):
        return skeleton_to_posture(self.coords, self.hierarchy, eps)

    def to_posture_sequence(self, eps=BONE_EPS):
        """Postures on the normalized clock ``(t - t0) / U``, not yet resampled."""
        from .motion import PostureSequence

        grid = (self.times - self.times[0]) / self.duration
        grid[-1] = 1.0
        return PostureSequence(grid, self.postures(eps), self.duration, label=self.label)


def _num(x):
    x = float(x)
    if x == 0.0:
        return "0"
    return format(x, ".17g")


def dumps_sequence(seq):
    """Canonical JSON text: fixed key order, one frame per line, 17 significant digits."""
    h = seq.hierarchy
    label = json.dumps(seq.label)
    lines = [
        "{",
        f'  "n": {h.n},',
        f'  "root": {h.root},',
        '  "edges": [' + ", ".join(f"[{c}, {p}]" for c, p in h.edges) + "],",
        f'  "label": {label},',
        '  "frames": [',
    ]
    frames = []
    for t, X in zip(seq.times, seq.coords):
        pts = ", ".join("[" + ", ".join(_num(v) for v in row) + "]" for row in X)
        frames.append(f'    {{"t": {_num(t)}, "coords": [{pts}]}}')
    lines.append(",\n".join(frames))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_sequence(seq, path):
    Path(path).write_text(dumps_sequence(seq), encoding="utf-8")


def _field(obj, key, kind, where):
    if key not in obj:
        raise ParseError(f"{where}: missing field '{key}'")
    value = obj[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ParseError(f"{where}: field '{key}' must be an integer")
    if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ParseError(f"{where}: field '{key}' must be a number")
    if kind is list and not isinstance(value, list):
        raise ParseError(f"{where}: field '{key}' must be a list")
    return value


def loads_sequence(text, source="<string>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be an object")
    n = _field(doc, "n", int, source)
    root = _field(doc, "root", int, source)
    edges = _field(doc, "edges", list, source)
    for k, e in enumerate(edges):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e)):
            raise ParseError(f"{source}: edges[{k}] must be a [child, parent] integer pair")
    label = doc.get("label")
    if label is not None and not isinstance(label, str):
        raise ParseError(f"{source}: field 'label' must be a string or null")
    frames = _field(doc, "frames", list, source)
    times, coords = [], []
    for k, fr in enumerate(frames):
        where = f"{source}: frames[{k}]"
        if not isinstance(fr, dict):
            raise ParseError(f"{where} must be an object")
        times.append(float(_field(fr, "t", float, where)))
        X = _field(fr, "coords", list, where)
        try:
            X = np.array(X, dtype=float)
        except (TypeError, ValueError):
            raise ParseError(f"{where}: coords must be an n x 3 numeric array") from None
        if X.shape != (n, 3):
            raise SchemaError(f"{where}: coords shape {X.shape}, expected ({n}, 3)")
        coords.append(X)
    if any(not math.isfinite(t) for t in times):
        raise SchemaError(f"{source}: non-finite frame time")
    h = Hierarchy(n=n, root=root, edges=tuple(tuple(e) for e in edges))
    return SkeletonSequence(h, np.array(times), np.array(coords).reshape(len(times), n, 3), label)


def load_sequence(path):
    path = Path(path)
    return loads_sequence(path.read_text(encoding="utf-8"), source=str(path))
