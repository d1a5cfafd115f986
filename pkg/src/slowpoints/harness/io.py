"""CSV/JSON writers and the run manifest.

CSV files start with ``#``-prefixed ``key: value`` metadata lines (tool
version, seed, config digest and any extras) followed by a header row and
the body.  Floats are written with 17 significant digits.  JSON documents
are validated against the schemas shipped in ``schemas/`` before writing.
"""

import csv
import datetime as _dt
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .. import __version__


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def write_csv(path, columns, rows, meta):
    """Write ``rows`` under a metadata block; returns the path."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\r\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    """Return ``(meta, columns, rows)``; values are left as strings."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition(": ")
                meta[k] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]


def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def load_schema(name):
    text = resources.files("slowpoints.harness").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def write_json(path, obj, schema=None):
    doc = _clean(obj)
    if schema is not None:
        jsonschema.validate(doc, load_schema(schema))
    path = Path(path)
    # repr of a float is the shortest string that round-trips
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    experiment: str
    tool_version: str
    master_seed: int
    config_digest: str
    config: dict
    started: str
    finished: str | None = None
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def filename(self):
        return f"manifest-{self.experiment}.json"

    def write(self, out_dir):
        return write_json(Path(out_dir) / self.filename, asdict(self), "manifest")


def new_manifest(cfg):
    return RunManifest(cfg.experiment, __version__, cfg.seed, cfg.digest(), cfg.resolved(),
                       now())


def csv_meta(cfg, **extra):
    meta = {"tool_version": __version__, "experiment": cfg.experiment, "seed": cfg.seed,
            "config_digest": cfg.digest()}
    meta.update(extra)
    return meta
