"""File formats: plain CSV tables, versioned model JSON, run manifests."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .densities import MixtureModel
from .errors import PkbdError

MODEL_SCHEMA = "pkbd-model/1"
MANIFEST_SCHEMA = "pkbd-run/1"

PathLike = Union[str, Path]


class InputError(PkbdError, ValueError):
    """Malformed or unusable input file."""


def fmt(x) -> str:
    """Shortest repr that round-trips a float; ints stay ints."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


@dataclass
class Table:
    header: Optional[list[str]]
    rows: list[list[str]]
    first_data_line: int

    def column_index(self, col: Union[str, int]) -> int:
        if isinstance(col, int) or (isinstance(col, str) and col.lstrip("-").isdigit()):
            idx = int(col)
            ncol = len(self.rows[0]) if self.rows else 0
            if not -ncol <= idx < ncol:
                raise InputError(f"column index {idx} out of range for {ncol} columns")
            return idx % ncol
        if self.header is None or col not in self.header:
            raise InputError(f"no column named {col!r}")
        return self.header.index(col)


def read_table(path: PathLike) -> Table:
    """Comma-separated file with an optional header row (detected when any
    field of the first row is not a number)."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    lines = [(i + 1, [c.strip() for c in row]) for i, row in enumerate(reader) if row and any(c.strip() for c in row)]
    if not lines:
        raise InputError(f"{path}: no data")
    header = None
    first = lines[0][0]
    if not all(_is_number(c) for c in lines[0][1]):
        header = lines[0][1]
        lines = lines[1:]
        if not lines:
            raise InputError(f"{path}: header but no data rows")
        first = lines[0][0]
    width = len(lines[0][1])
    for lineno, row in lines:
        if len(row) != width:
            raise InputError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
    return Table(header, [r for _, r in lines], first)


def read_points(path: PathLike, label_column: Union[str, int, None] = None) -> tuple[np.ndarray, Optional[np.ndarray], list[int]]:
    """Numeric matrix from CSV, optionally splitting off a label column.

    Returns (raw rows, labels or None, source line number of each row).
    """
    table = read_table(path)
    lab_idx = table.column_index(label_column) if label_column is not None else None
    text_lines = _data_line_numbers(path, table.header is not None)
    values = []
    labels = []
    for lineno, row in zip(text_lines, table.rows):
        feats = [c for j, c in enumerate(row) if j != lab_idx]
        try:
            values.append([float(c) for c in feats])
        except ValueError:
            raise InputError(f"{path}: line {lineno} has a non-numeric field") from None
        if lab_idx is not None:
            labels.append(row[lab_idx])
    x = np.array(values, dtype=float)
    if not np.all(np.isfinite(x)):
        bad = sorted({text_lines[i] for i in np.flatnonzero(~np.isfinite(x).all(axis=1))})
        raise InputError(f"{path}: non-finite values on lines {bad[:10]}")
    lab = None
    if lab_idx is not None:
        lab = np.array([_parse_label(v) for v in labels])
    return x, lab, text_lines


def _data_line_numbers(path: PathLike, has_header: bool) -> list[int]:
    reader = csv.reader(io.StringIO(Path(path).read_text()))
    nums = [i + 1 for i, row in enumerate(reader) if row and any(c.strip() for c in row)]
    return nums[1:] if has_header else nums


def _parse_label(v: str):
    try:
        f = float(v)
    except ValueError:
        return v
    return int(f) if f.is_integer() else f


def read_labels(spec: str) -> np.ndarray:
    """``FILE`` or ``FILE:COLUMN``; the last column is used by default."""
    path, col = spec, None
    if ":" in spec and not Path(spec).exists():
        path, col = spec.rsplit(":", 1)
    table = read_table(path)
    idx = table.column_index(col if col is not None else -1)
    return np.array([_parse_label(r[idx]) for r in table.rows])


def write_csv(path: Optional[PathLike], header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def write_dict_rows(path: Optional[PathLike], rows: list[dict]) -> str:
    header = list(rows[0].keys()) if rows else []
    return write_csv(path, header, [[r[k] for k in header] for r in rows])


def model_to_dict(model: MixtureModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "d": model.d,
        "n_components": model.n_components,
        "weights": [float(w) for w in model.weights],
        "mus": [[float(v) for v in mu] for mu in model.mus],
        "rhos": [float(r) for r in model.rhos],
        "alpha0": float(model.noise_weight),
    }


def model_from_dict(doc: dict) -> MixtureModel:
    if doc.get("schema") != MODEL_SCHEMA:
        raise InputError(f"unsupported model schema {doc.get('schema')!r}")
    return MixtureModel(np.array(doc["mus"]), np.array(doc["rhos"]), np.array(doc["weights"]), doc.get("alpha0", 0.0))


def dump_json(path: Optional[PathLike], doc) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass
class RunManifest:
    subcommand: str
    parameters: dict
    seed: Optional[int]
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    duration_s: float = 0.0
    version: str = "0"
    schema: str = MANIFEST_SCHEMA

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        doc = json.loads(text)
        if doc.get("schema") != MANIFEST_SCHEMA:
            raise InputError(f"unsupported manifest schema {doc.get('schema')!r}")
        return cls(**doc)

    def write(self, path: PathLike) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def read(cls, path: PathLike) -> "RunManifest":
        return cls.from_json(Path(path).read_text())


def svg_line_plot(xs, ys, title: str, xlabel: str, ylabel: str, width: int = 480, height: int = 320) -> str:
    """Minimal self-contained SVG polyline chart with axis labels."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(np.nanmin(ys)), float(np.nanmax(ys))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + (abs(y0) or 1.0)

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">{_esc(xlabel)}</text>',
        f'<text x="16" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 16 {top + ph / 2})">{_esc(ylabel)}</text>',
    ]
    for x in xs:
        parts.append(f'<text x="{px(x):.2f}" y="{top + ph + 16}" text-anchor="middle">{fmt_tick(x)}</text>')
    for y in (y0, 0.5 * (y0 + y1), y1):
        parts.append(f'<text x="{left - 6}" y="{py(y) + 4:.2f}" text-anchor="end">{y:.3g}</text>')
    parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for x, y in zip(xs, ys):
        if math.isfinite(y):
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def fmt_tick(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:.3g}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
