"""CSV and JSON emission for experiment reports."""
from __future__ import annotations

import csv
import hashlib
import json
import subprocess
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .hydrodynamics import DensityField


def fmt(v):
    """17-significant-digit float formatting; other values pass through ``str``."""
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def write_csv(path, columns, rows):
    """RFC-4180 CSV with CRLF line endings."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([fmt(r[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(cfg_dict):
    """Short hash of a canonical JSON dump; keys not affecting results are dropped."""
    d = {k: v for k, v in cfg_dict.items() if k not in ("threads", "out")}
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def git_hash(cwd=None):
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=cwd, capture_output=True,
                             text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def load_schema(name):
    return json.loads(resources.files("gldiffusion.schemas").joinpath(name).read_text())


def validate(obj, schema_name):
    jsonschema.validate(obj, load_schema(schema_name))


def write_manifest(path, manifest):
    validate(manifest, "manifest.schema.json")
    path = Path(path)
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_density(path, rho: DensityField, *, beta, dt, time):
    """Density snapshot as ``theta,rho`` CSV plus a sibling ``.json`` header."""
    path = Path(path)
    rows = [{"theta": float(t), "rho": float(r)} for t, r in zip(rho.theta, rho.values)]
    write_csv(path, ["theta", "rho"], rows)
    header = {"beta": float(beta), "M": rho.grid_size,
              "dt": float(dt), "time": float(time)}
    hpath = path.with_suffix(".json")
    hpath.write_text(json.dumps(header, sort_keys=True) + "\n")
    return path, hpath


def read_density(path):
    path = Path(path)
    rows = read_csv(path)
    header = json.loads(path.with_suffix(".json").read_text())
    rho = DensityField(np.array([float(r["rho"]) for r in rows]))
    if rho.grid_size != header["M"]:
        raise ValueError(f"{path}: row count does not match header M")
    return rho, header
