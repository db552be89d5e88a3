"""CSV and SVG writers.

CSV files are UTF-8 with a header row, CRLF line endings and numbers in
17 significant digits, so a float read back is bit-identical.  SVG
heatmaps are written by hand with a fixed layout so that identical data
give identical bytes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["GridResult", "fmt", "write_rows", "emit_csv", "emit_svg", "heatmap_svg"]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclass
class GridResult:
    """Rectangular sweep: ``outputs[name][i, j]`` belongs to ``(axis_values[0][i], axis_values[1][j])``."""

    axis_names: Sequence[str]
    axis_values: Sequence[np.ndarray]
    outputs: Dict[str, np.ndarray]
    failures: List[str] = field(default_factory=list)

    def __post_init__(self):
        shape = (len(self.axis_values[0]), len(self.axis_values[1]))
        for name, arr in self.outputs.items():
            if np.shape(arr) != shape:
                raise ValueError(f"output {name!r} has shape {np.shape(arr)}, expected {shape}")

    def rows(self) -> Iterable[list]:
        names = list(self.outputs)
        for i, x in enumerate(self.axis_values[0]):
            for j, y in enumerate(self.axis_values[1]):
                yield [x, y] + [self.outputs[n][i, j] for n in names]

    @property
    def header(self) -> List[str]:
        return list(self.axis_names) + list(self.outputs)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc
    return path


def emit_csv(grid: GridResult, path) -> Path:
    """Axis-1-major rows: ``axis1, axis2, output...``."""
    return write_rows(path, grid.header, grid.rows())


# viridis-like anchors, interpolated linearly
_PALETTE = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]


def _color(frac: float) -> str:
    if not math.isfinite(frac):
        return "#cccccc"
    frac = min(1.0, max(0.0, frac))
    pos = frac * (len(_PALETTE) - 1)
    k = min(int(pos), len(_PALETTE) - 2)
    w = pos - k
    rgb = [round(a + (b - a) * w) for a, b in zip(_PALETTE[k], _PALETTE[k + 1])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _tick(x: float) -> str:
    return format(float(x), ".3g")


def heatmap_svg(values: np.ndarray, row_labels: Sequence, col_labels: Sequence,
                title: str, row_name: str, col_name: str,
                vmin: Optional[float] = None, vmax: Optional[float] = None) -> str:
    """Heatmap with rows drawn top to bottom and a linear colour bar."""
    values = np.asarray(values, dtype=float)
    nr, nc = values.shape
    finite = values[np.isfinite(values)]
    lo = float(np.min(finite)) if vmin is None and finite.size else (vmin or 0.0)
    hi = float(np.max(finite)) if vmax is None and finite.size else (vmax if vmax is not None else 1.0)
    span = hi - lo if hi > lo else 1.0
    cell = max(4, min(24, 480 // max(nr, nc, 1)))
    left, top = 90, 40
    width = left + nc * cell + 110
    height = top + nr * cell + 70
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
           f'<text x="{left}" y="20" font-size="13">{escape(title)}</text>']
    for i in range(nr):
        for j in range(nc):
            out.append(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                       f'height="{cell}" fill="{_color((values[i, j] - lo) / span)}"/>')
    step_r = max(1, nr // 8)
    for i in range(0, nr, step_r):
        out.append(f'<text x="{left - 4}" y="{top + i * cell + cell * 0.75:.1f}" '
                   f'text-anchor="end">{escape(_tick(row_labels[i]))}</text>')
    step_c = max(1, nc // 8)
    base = top + nr * cell
    for j in range(0, nc, step_c):
        x = left + j * cell + cell / 2
        out.append(f'<text x="{x:.1f}" y="{base + 14}" text-anchor="middle">'
                   f'{escape(_tick(col_labels[j]))}</text>')
    out.append(f'<text x="{left + nc * cell / 2:.1f}" y="{base + 34}" text-anchor="middle">'
               f'{escape(col_name)}</text>')
    out.append(f'<text x="14" y="{top + nr * cell / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + nr * cell / 2:.1f})">{escape(row_name)}</text>')
    bar_x = left + nc * cell + 30
    bar_h = nr * cell
    steps = 50
    for k in range(steps):
        frac = 1.0 - k / (steps - 1)
        out.append(f'<rect x="{bar_x}" y="{top + k * bar_h / steps:.2f}" width="14" '
                   f'height="{bar_h / steps + 0.5:.2f}" fill="{_color(frac)}"/>')
    out.append(f'<text x="{bar_x + 18}" y="{top + 8}">{escape(_tick(hi))}</text>')
    out.append(f'<text x="{bar_x + 18}" y="{top + bar_h}">{escape(_tick(lo))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(grid: GridResult, output: str, path, title: Optional[str] = None,
             vmin: Optional[float] = None, vmax: Optional[float] = None) -> Path:
    path = Path(path)
    text = heatmap_svg(grid.outputs[output], grid.axis_values[0], grid.axis_values[1],
                       title or output, grid.axis_names[0], grid.axis_names[1], vmin, vmax)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc
    return path
