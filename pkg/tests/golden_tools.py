"""Golden-file regression for the example pipeline.

Regenerate after an intended numerical change with
``MOTIONLAB_UPDATE_GOLDEN=1 pytest tests/test_cli.py -k golden``.
"""

import hashlib
import json
import os
from pathlib import Path
import shutil

from motionlab.cli import main

GOLDEN = Path(__file__).parent / "golden"
PIPELINE_ARGS = ["pipeline", "--L", "50", "--no-plots"]
# small outputs kept verbatim; everything else is checked by hash
VERBATIM = [
    "dist/class_table.csv",
    "classify/classify.json",
    "classify/predictions.csv",
    "rates/mean_rate.csv",
    "bottleneck/bottleneck.json",
    "gp/gp.json",
    "restandardize/restandardize.json",
]


def run_pipeline(out, jobs=1):
    code = main(PIPELINE_ARGS + ["--out", str(out), "--jobs", str(jobs)])
    assert code == 0
    return out


def tree_digest(root):
    root = Path(root)
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.suffix in (".csv", ".json")
    }


def update_requested():
    return os.environ.get("MOTIONLAB_UPDATE_GOLDEN") == "1"


def write_golden(out):
    GOLDEN.mkdir(exist_ok=True)
    (GOLDEN / "pipeline_sha256.json").write_text(json.dumps(tree_digest(out), indent=1) + "\n")
    for rel in VERBATIM:
        dest = GOLDEN / rel.replace("/", "__")
        shutil.copyfile(Path(out) / rel, dest)


def compare_golden(out):
    """List of human-readable mismatches between ``out`` and the stored goldens."""
    problems = []
    expected = json.loads((GOLDEN / "pipeline_sha256.json").read_text())
    actual = tree_digest(out)
    for rel in sorted(set(expected) | set(actual)):
        if expected.get(rel) != actual.get(rel):
            problems.append(rel)
    for rel in VERBATIM:
        if (GOLDEN / rel.replace("/", "__")).read_bytes() != (Path(out) / rel).read_bytes():
            problems.append(f"{rel} (verbatim)")
    return problems
