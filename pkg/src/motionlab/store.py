"""Reading and writing posture sequences and numeric tables.

CSV floats are written with 17 significant digits so that files round-trip
exactly and identical runs produce identical bytes.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError, SchemaError
from .motion import PostureSequence, resample_sequence
from .skeleton import loads_sequence

POSTURES_KIND = "postures"


def fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")


def write_columns(path, columns):
    """Write a dict of equal-length columns in insertion order."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    write_csv(path, names, zip(*data))


def read_table(path, keyed=False):
    """Header and float array of a CSV written by :func:`write_csv`.

    With ``keyed=True`` the first column holds text keys and ``(header, keys,
    values)`` is returned.
    """
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ParseError(f"{path}: empty table")
    header, body = rows[0], rows[1:]
    if any(len(r) != len(header) for r in body):
        raise ParseError(f"{path}: ragged rows")
    start = 1 if keyed else 0
    try:
        vals = np.array([[float(v) for v in r[start:]] for r in body], dtype=float)
    except ValueError:
        raise ParseError(f"{path}: non-numeric entries") from None
    vals = vals.reshape(len(body), len(header) - start)
    if keyed:
        return header, [r[0] for r in body], vals
    return header, vals


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def postures_to_dict(seq):
    return {
        "kind": POSTURES_KIND,
        "label": seq.label,
        "duration": float(seq.duration),
        "grid": seq.grid.tolist(),
        "postures": seq.postures.tolist(),
    }


def postures_from_dict(d, source="<dict>"):
    try:
        return PostureSequence(np.array(d["grid"], dtype=float), np.array(d["postures"], dtype=float),
                               float(d["duration"]), d.get("label"))
    except KeyError as exc:
        raise SchemaError(f"{source}: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{source}: {exc}") from None


def save_postures(seq, path):
    dump_json(postures_to_dict(seq), path)


def load_postures(path):
    return postures_from_dict(load_json(path), str(path))


def list_inputs(path):
    """Sorted JSON files of a directory, or the single file given."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise DataError(f"{path}: no .json sequences found")
        return files
    if not path.exists():
        raise DataError(f"{path}: no such file or directory")
    return [path]


def load_motion(path, L=100, h=None):
    """Posture sequence from either a stored posture file or a skeleton file (resampled to ``L``)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(doc, dict) and doc.get("kind") == POSTURES_KIND:
        return postures_from_dict(doc, str(path))
    return resample_sequence(loads_sequence(text, str(path)).to_posture_sequence(), L, h)


def load_motions(path, L=100, h=None):
    files = list_inputs(path)
    return [f.stem for f in files], [load_motion(f, L, h) for f in files]
