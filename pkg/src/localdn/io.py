"""CSV ledgers, field dumps and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

__all__ = ["write_csv", "dump_fields", "file_checksum", "RunManifest", "to_jsonable"]


def write_csv(path, rows: list, columns: list | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in columns})
    return path


def dump_fields(path, **arrays) -> Path:
    """Uncompressed .npz so that checksums are reproducible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{k: np.asarray(v) for k, v in arrays.items()})
    return path


def file_checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"real": float(obj.real), "imag": float(obj.imag)}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _artifact_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    command: str
    config_fingerprint: str
    out_dir: Path
    status: str = "running"
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    version: str = field(default_factory=_artifact_version)

    def stage(self, name: str):
        return _Stage(self, name)

    def add_file(self, path):
        path = Path(path)
        self.files[str(path.relative_to(self.out_dir))] = file_checksum(path)

    def write(self) -> Path:
        path = self.out_dir / "manifest.json"
        body = {"command": self.command, "status": self.status,
                "config_fingerprint": self.config_fingerprint, "version": self.version,
                "timings": self.timings, "files": dict(sorted(self.files.items())),
                "report": to_jsonable(self.report)}
        path.write_text(json.dumps(body, indent=2, sort_keys=True))
        return path


class _Stage:
    def __init__(self, manifest: RunManifest, name: str):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.name] = time.perf_counter() - self.t0
        return False
