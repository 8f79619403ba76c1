"""CSV time series and JSON manifests.

CSV files start with one comment line naming the version, config hash and
manifest file; everything after it depends only on the config and seed, so
repeated runs produce identical bytes. Complex series become ``_re``/``_im``
column pairs.
"""

import datetime as _dt
import io
import json
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .config import canonical_json, config_hash


class Table:
    """Ordered named columns sharing one length."""

    def __init__(self):
        self.names = []
        self.cols = []

    def add(self, name, values):
        v = np.asarray(values)
        if self.cols and v.shape[0] != self.cols[0].shape[0]:
            raise ValueError(f"column {name} has {v.shape[0]} rows, expected {self.cols[0].shape[0]}")
        if np.iscomplexobj(v):
            self.names += [f"{name}_re", f"{name}_im"]
            self.cols += [v.real.astype(float), v.imag.astype(float)]
        else:
            self.names.append(name)
            self.cols.append(v.astype(float))
        return self

    def __len__(self):
        return 0 if not self.cols else self.cols[0].shape[0]


def format_csv(table, header_comment):
    buf = io.StringIO()
    buf.write(f"# {header_comment}\n")
    buf.write(",".join(table.names) + "\n")
    data = np.column_stack(table.cols) if table.cols else np.zeros((0, 0))
    for row in data:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def write_csv(path, table, cfg, manifest_name):
    path = Path(path)
    comment = f"decoctl {__version__} config_hash={config_hash(cfg)} manifest={manifest_name}"
    path.write_text(format_csv(table, comment))
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def manifest(cfg, seed, started, defaults, outputs, summary=None, extra=None):
    """RunManifest as a dict. ``config`` reproduces the input (hash-equal)."""
    eng = cfg.get("engine", {})
    out = {
        "config_hash": config_hash(cfg),
        "engine_version": __version__,
        "backend": backend_name(),
        "seed": int(seed),
        "phase_convention": eng.get("phase_convention", "printed"),
        "sign_convention": eng.get("sign_convention", "prose"),
        "started": started,
        "finished": now(),
        "defaults": defaults,
        "outputs": outputs,
        "config": json.loads(canonical_json(cfg)),
    }
    if summary is not None:
        out["summary"] = summary
    if extra:
        out.update(extra)
    return _jsonable(out)


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path
