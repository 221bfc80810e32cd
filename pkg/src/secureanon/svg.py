"""Minimal SVG bar and line charts for evaluation reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT, PAD = 480, 300, 48
COLORS = ("#3b6ea8", "#c8553d", "#5a9367", "#8e6c8a", "#d4a236")


def _frame(title: str, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">')
    parts = [head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
             f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
             f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD / 2}" y2="{HEIGHT - PAD}" stroke="black"/>',
             f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>']
    return "\n".join(parts + body + ["</svg>"]) + "\n"


def _range(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(0.0, min(values)), max(values)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    return lo, hi


def _y(v: float, lo: float, hi: float) -> float:
    return HEIGHT - PAD - (v - lo) / (hi - lo) * (HEIGHT - 2 * PAD)


def _axis_labels(lo: float, hi: float) -> list[str]:
    out = []
    for v in (lo, (lo + hi) / 2, hi):
        out.append(f'<text x="{PAD - 4}" y="{_y(v, lo, hi) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    return out


def bar_chart(labels: Sequence[str], values: Sequence[float], title: str = "") -> str:
    if len(labels) != len(values) or not values:
        raise ValueError("bar_chart needs matching, non-empty labels and values")
    lo, hi = _range(values)
    slot = (WIDTH - 1.5 * PAD) / len(values)
    body = _axis_labels(lo, hi)
    for i, (lab, v) in enumerate(zip(labels, values)):
        x = PAD + i * slot + slot * 0.15
        top, base = _y(max(v, 0.0), lo, hi), _y(min(v, 0.0), lo, hi)
        body.append(f'<rect x="{x:.1f}" y="{top:.1f}" width="{slot * 0.7:.1f}" height="{base - top:.1f}" '
                    f'fill="{COLORS[i % len(COLORS)]}"><title>{escape(lab)}: {v:.4g}</title></rect>')
        body.append(f'<text x="{x + slot * 0.35:.1f}" y="{HEIGHT - PAD + 14}" text-anchor="middle">{escape(lab)}</text>')
    return _frame(title, body)


def line_chart(series: dict[str, Sequence[float]], title: str = "", xs: Sequence[float] | None = None) -> str:
    if not series or any(len(v) == 0 for v in series.values()):
        raise ValueError("line_chart needs non-empty series")
    flat = [v for s in series.values() for v in s]
    lo, hi = _range(flat)
    n = max(len(s) for s in series.values())
    xs = list(xs) if xs is not None else list(range(n))
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    body = _axis_labels(lo, hi)
    for i, (name, vals) in enumerate(series.items()):
        pts = " ".join(f"{PAD + (xs[j] - x0) / (x1 - x0) * (WIDTH - 1.5 * PAD):.1f},{_y(v, lo, hi):.1f}"
                       for j, v in enumerate(vals))
        color = COLORS[i % len(COLORS)]
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(f'<text x="{WIDTH - PAD}" y="{PAD + 14 * i}" fill="{color}" text-anchor="end">{escape(name)}</text>')
    return _frame(title, body)


def write(path: str | Path, svg: str) -> None:
    Path(path).write_text(svg, encoding="utf-8")
