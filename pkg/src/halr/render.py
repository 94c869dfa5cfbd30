"""SVG renderings of HALR block structure.

Dense leaves are drawn as filled blue rectangles, low-rank leaves as light
gray ones carrying their rank as a centered label when the block is large
enough to hold it.  Output is deterministic: fixed-precision coordinates,
no timestamps, leaf order fixed by the tree traversal.
"""

from __future__ import annotations

from .cluster import DENSE, LOW_RANK
from .matrix import HalrMatrix

DENSE_FILL = "#3b6db4"
LOWRANK_FILL = "#d8d8d8"
STROKE = "#ffffff"
LABEL_COLOR = "#303030"
MIN_LABEL_PX = 16.0


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def render_svg(a: HalrMatrix, size: float = 640.0) -> str:
    """Render the partition of ``a`` to an SVG string.

    ``size`` is the width in pixels; height follows the matrix aspect ratio.
    """
    m, n = a.shape
    width = float(size)
    height = width * m / n
    sx = width / n
    sy = height / m
    row0, col0 = a.box.row_lo, a.box.col_lo
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<rect x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'fill="none" stroke="{LABEL_COLOR}" stroke-width="1"/>',
    ]
    for leaf in a.leaves():
        b = leaf.box
        x = (b.col_lo - col0) * sx
        y = (b.row_lo - row0) * sy
        w = (b.col_hi - b.col_lo + 1) * sx
        h = (b.row_hi - b.row_lo + 1) * sy
        fill = DENSE_FILL if leaf.kind == DENSE else LOWRANK_FILL
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}" stroke="{STROKE}" stroke-width="0.8"/>'
        )
        if leaf.kind == LOW_RANK and min(w, h) >= MIN_LABEL_PX:
            fs = min(max(0.3 * min(w, h), 9.0), 22.0)
            parts.append(
                f'<text x="{_fmt(x + w / 2)}" y="{_fmt(y + h / 2)}" '
                f'font-family="monospace" font-size="{_fmt(fs)}" fill="{LABEL_COLOR}" '
                f'text-anchor="middle" dominant-baseline="central">{leaf.factors.rank}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
