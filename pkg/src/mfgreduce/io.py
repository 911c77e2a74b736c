"""Byte-stable artifact writers: CSV data, JSON reports, run manifests.

Format contract: CSV with a header row, '.' decimal separator, '\\n' line
endings, UTF-8, shortest round-trip float formatting.  Reruns with the same
config and seed reproduce every byte; the manifest's timestamp is the single
non-deterministic field anywhere in the output tree.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checks import CheckReport, _jsonable


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8", newline="\n")


def write_reports(path, reports):
    items = [r.to_dict() if isinstance(r, CheckReport) else r for r in reports]
    ok = all(bool(r["pass"]) for r in items)
    write_json(path, {"all_pass": ok, "reports": items})
    return ok


def write_manifest(path, config, seed, wall_time_s):
    write_json(path, {
        "config": config,
        "seed": seed,
        "package_version": __version__,
        "wall_time_s": wall_time_s,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    })


def load_json_tree(outdir, drop_timestamp=True):
    """All artifacts of a run as comparable objects (manifest timestamp dropped)."""
    outdir = Path(outdir)
    tree = {}
    for p in sorted(outdir.rglob("*")):
        if p.is_dir():
            continue
        rel = str(p.relative_to(outdir))
        if p.suffix == ".json":
            obj = json.loads(p.read_text())
            if drop_timestamp and rel.endswith("manifest.json"):
                obj.pop("timestamp", None)
                obj.pop("wall_time_s", None)
            tree[rel] = json.dumps(obj, sort_keys=True)
        else:
            tree[rel] = p.read_bytes()
    return tree
