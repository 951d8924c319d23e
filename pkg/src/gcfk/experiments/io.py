"""Deterministic CSV output and run manifests."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..errors import IoFailure


@dataclass
class Table:
    columns: Sequence[str]
    rows: list[Sequence[Any]] = field(default_factory=list)
    comment: str | None = None

    def __post_init__(self):
        self.columns = tuple(self.columns)
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} fields, expected {width}")

    def append(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} fields, got {len(values)}")
        self.rows.append(values)


def format_value(x) -> str:
    """Shortest round-trip text for floats; integers and strings as-is."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0.0:
            return "0.0"  # folds -0.0
        return repr(x)
    s = str(x)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def render_csv(table: Table) -> str:
    lines = []
    if table.comment:
        lines.append("# " + table.comment.replace("\n", " "))
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def emit_csv(table: Table, path) -> str:
    """Write ``table`` as UTF-8 with LF endings; return the SHA-256 of the bytes written."""
    data = render_csv(table).encode("utf-8")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return sha256_bytes(data)


def file_digest(path) -> str:
    try:
        return sha256_bytes(Path(path).read_bytes())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


@dataclass(frozen=True)
class RunManifest:
    experiment_id: str
    config_digest: str
    seed: int
    tool_version: str
    outputs: dict[str, str]
    wall_time: float
    workers: int = 1

    def to_json(self) -> str:
        body = {
            "experiment_id": self.experiment_id,
            "config_digest": self.config_digest,
            "seed": str(self.seed),
            "tool_version": self.tool_version,
            "outputs": dict(sorted(self.outputs.items())),
            "wall_time": self.wall_time,
            "workers": self.workers,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(
            experiment_id=d["experiment_id"],
            config_digest=d["config_digest"],
            seed=int(d["seed"]),
            tool_version=d["tool_version"],
            outputs=dict(d["outputs"]),
            wall_time=float(d["wall_time"]),
            workers=int(d.get("workers", 1)),
        )


MANIFEST_NAME = "manifest.json"


def write_manifest(manifest: RunManifest, out_dir) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    try:
        path.write_text(manifest.to_json(), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def verify_manifest(path) -> dict[str, tuple[str, str | None]]:
    """Recompute output digests; returns ``{name: (expected, actual)}`` for mismatches."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    manifest = RunManifest.from_json(path.read_text(encoding="utf-8"))
    bad = {}
    for name, expected in manifest.outputs.items():
        target = path.parent / name
        actual = file_digest(target) if target.exists() else None
        if actual != expected:
            bad[name] = (expected, actual)
    return bad
