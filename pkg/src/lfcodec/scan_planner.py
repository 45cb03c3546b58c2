"""Coding orders over a view grid.

The proposed order codes the central view first and then four independent
pseudo-sequences, one per quadrant, each a serpentine that starts next to
the centre and finishes at the quadrant's outer grid corner. The quadrants
form a pinwheel around the centre (each is the previous one rotated by 90
degrees), so for a 13x13 grid they are 6x7, 7x6, 6x7 and 7x6 blocks:

    Q0: rows [0, h-1] x cols [0, h]        (above the centre, extends left)
    Q1: rows [0, h]   x cols [h+1, n-1]    (right of the centre, extends up)
    Q2: rows [h+1, n-1] x cols [h, n-1]    (below the centre, extends right)
    Q3: rows [h, n-1] x cols [0, h-1]      (left of the centre, extends down)

with ``h = (n - 1) / 2``. Inside a quadrant the serpentine runs along
whichever axis makes its final pass end on the grid corner; for square grids
this gives two horizontally and two vertically scanned quadrants.

The conventional orders (raster, serpentine, zigzag, spiral) are single
sequences over the whole grid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import InvalidGrid


class Quadrant(str, enum.Enum):
    CENTER = "C"
    Q0 = "Q0"
    Q1 = "Q1"
    Q2 = "Q2"
    Q3 = "Q3"


QUADRANTS = (Quadrant.Q0, Quadrant.Q1, Quadrant.Q2, Quadrant.Q3)

SCAN_KINDS = ("proposed", "raster", "serpentine", "zigzag", "spiral")


@dataclass(frozen=True)
class ScanEntry:
    coding_index: int
    quadrant: Quadrant
    grid_pos: tuple


@dataclass(frozen=True)
class ScanPlan:
    kind: str
    rows: int
    cols: int
    entries: tuple

    def __len__(self):
        return len(self.entries)

    def positions(self):
        return [e.grid_pos for e in self.entries]

    def index_of(self, pos):
        for e in self.entries:
            if e.grid_pos == tuple(pos):
                return e.coding_index
        raise KeyError(pos)

    def sequences(self):
        """Groups of coding indices after the intra anchor (index 0), by quadrant.

        Returns ``[(quadrant, [coding_index, ...]), ...]`` in quadrant order;
        empty groups are dropped.
        """
        groups = {}
        for e in self.entries[1:]:
            groups.setdefault(e.quadrant, []).append(e.coding_index)
        order = [q for q in QUADRANTS if q in groups]
        return [(q, groups[q]) for q in order]


def _plan(kind, rows, cols, items):
    entries = tuple(
        ScanEntry(i, quadrant, (int(r), int(c))) for i, (quadrant, (r, c)) in enumerate(items)
    )
    return ScanPlan(kind, rows, cols, entries)


def serpentine_path(row_range, col_range, start, axis):
    """Boustrophedon path over a rectangle starting at corner ``start``.

    ``axis='h'`` walks along rows (changing column fastest), ``'v'`` along
    columns. ``start`` must be one of the rectangle's corners.
    """
    r0, r1 = row_range
    c0, c1 = col_range
    sr, sc = start
    if sr not in (r0, r1) or sc not in (c0, c1):
        raise ValueError("serpentine must start at a corner of its rectangle")
    rows = list(range(r0, r1 + 1)) if sr == r0 else list(range(r1, r0 - 1, -1))
    cols = list(range(c0, c1 + 1)) if sc == c0 else list(range(c1, c0 - 1, -1))
    path = []
    if axis == "h":
        for k, r in enumerate(rows):
            path.extend((r, c) for c in (cols if k % 2 == 0 else cols[::-1]))
    elif axis == "v":
        for k, c in enumerate(cols):
            path.extend((r, c) for r in (rows if k % 2 == 0 else rows[::-1]))
    else:
        raise ValueError(f"axis must be 'h' or 'v', got {axis!r}")
    return path


def quadrant_layout(rows, cols):
    """``[(quadrant, row_range, col_range, start, corner), ...]`` for an odd grid."""
    hr, hc = (rows - 1) // 2, (cols - 1) // 2
    return [
        (Quadrant.Q0, (0, hr - 1), (0, hc), (hr - 1, hc), (0, 0)),
        (Quadrant.Q1, (0, hr), (hc + 1, cols - 1), (hr, hc + 1), (0, cols - 1)),
        (Quadrant.Q2, (hr + 1, rows - 1), (hc, cols - 1), (hr + 1, hc), (rows - 1, cols - 1)),
        (Quadrant.Q3, (hr, rows - 1), (0, hc - 1), (hr, hc - 1), (rows - 1, 0)),
    ]


# preferred axis when both or neither serpentine ends on the corner
_DEFAULT_AXIS = {Quadrant.Q0: "v", Quadrant.Q1: "h", Quadrant.Q2: "v", Quadrant.Q3: "h"}


def plan_proposed(rows, cols):
    if rows < 3 or cols < 3 or rows % 2 == 0 or cols % 2 == 0:
        raise InvalidGrid(f"proposed scan needs odd dimensions >= 3, got {rows}x{cols}")
    center = ((rows - 1) // 2, (cols - 1) // 2)
    items = [(Quadrant.CENTER, center)]
    for quadrant, rr, cr, start, corner in quadrant_layout(rows, cols):
        paths = {ax: serpentine_path(rr, cr, start, ax) for ax in ("h", "v")}
        ending = [ax for ax in ("h", "v") if paths[ax][-1] == corner]
        axis = ending[0] if len(ending) == 1 else _DEFAULT_AXIS[quadrant]
        items.extend((quadrant, pos) for pos in paths[axis])
    return _plan("proposed", rows, cols, items)


def raster_order(rows, cols):
    return [(r, c) for r in range(rows) for c in range(cols)]


def serpentine_order(rows, cols):
    return serpentine_path((0, rows - 1), (0, cols - 1), (0, 0), "h")


def zigzag_order(rows, cols):
    """Anti-diagonal zigzag from (0, 0); diagonal 1 runs toward the upper right."""
    out = []
    for s in range(rows + cols - 1):
        diag = [(r, s - r) for r in range(rows) if 0 <= s - r < cols]
        # diag is ordered by increasing row, i.e. running down-left
        out.extend(diag[::-1] if s % 2 else diag)
    return out


def spiral_order(rows, cols):
    """Outward square spiral from the centre: right, down, left, up, growing."""
    r, c = (rows - 1) // 2, (cols - 1) // 2
    out = [(r, c)]
    total = rows * cols
    steps = 1
    moves = ((0, 1), (1, 0), (0, -1), (-1, 0))
    k = 0
    while len(out) < total:
        for _ in range(2):
            dr, dc = moves[k % 4]
            for _ in range(steps):
                r, c = r + dr, c + dc
                if 0 <= r < rows and 0 <= c < cols:
                    out.append((r, c))
            k += 1
        steps += 1
    return out


def plan_conventional(rows, cols, kind):
    kind = kind.lower()
    if rows < 1 or cols < 1:
        raise InvalidGrid(f"grid must be at least 1x1, got {rows}x{cols}")
    if kind == "raster":
        order = raster_order(rows, cols)
    elif kind == "serpentine":
        order = serpentine_order(rows, cols)
    elif kind == "zigzag":
        order = zigzag_order(rows, cols)
    elif kind == "spiral":
        if rows % 2 == 0 or cols % 2 == 0:
            raise InvalidGrid("spiral scan needs odd dimensions")
        order = spiral_order(rows, cols)
    else:
        raise InvalidGrid(f"unknown conventional scan {kind!r}")
    return _plan(kind, rows, cols, [(Quadrant.Q0, p) for p in order])


def plan_scan(kind, rows, cols):
    """Dispatch on scan kind, including the single-view degenerate grid."""
    kind = kind.lower()
    if rows == 1 and cols == 1:
        return _plan(kind, 1, 1, [(Quadrant.CENTER, (0, 0))])
    if kind == "proposed":
        return plan_proposed(rows, cols)
    return plan_conventional(rows, cols, kind)


def grid_distance(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def mean_reference_distance(plan, graph):
    """Mean over inter-coded views of the mean grid distance to their references."""
    pos = plan.positions()
    per_view = []
    for i, refs in enumerate(graph.refs):
        if refs:
            per_view.append(sum(grid_distance(pos[i], pos[j]) for j in refs) / len(refs))
    if not per_view:
        return 0.0
    return sum(per_view) / len(per_view)


def plan_to_csv_rows(plan):
    return [
        (e.coding_index, e.quadrant.value, e.grid_pos[0], e.grid_pos[1]) for e in plan.entries
    ]
