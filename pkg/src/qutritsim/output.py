"""CSV emission and run manifests."""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

from qutritsim.core import ValidationError


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".12g")


def format_table(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    width = len(header)
    for row in rows:
        row = list(row)
        if len(row) != width:
            raise ValidationError(f"row has {len(row)} fields, header has {width}")
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def emit_table(rows: Iterable[Sequence], header: Sequence[str], path: str | Path) -> str:
    """Write a CSV (12 significant digits, LF, UTF-8) and return its sha256."""
    text = format_table(rows, header)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    params: dict[str, Any]
    master_seed: int | None
    code_version: str
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: dict[str, str] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)

    def add_output(self, path: str | Path, digest: str) -> None:
        self.outputs[Path(path).name] = digest

    def write(self, path: str | Path) -> None:
        self.finished = self.finished or _now()
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def manifest_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.name + ".manifest.json")
