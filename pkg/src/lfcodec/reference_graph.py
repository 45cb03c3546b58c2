"""Reference selection for pseudo-sequence coding.

Two builders share one result type:

* ``build_proposed`` picks, for each view, the spatially nearest views that
  are already coded in the same quadrant, plus the central view.
* ``build_low_delay`` reproduces the POC-based low-delay pattern
  (offsets 1, 3, 7, 11 in coding order within a sequence).
"""

from __future__ import annotations

from dataclasses import dataclass

from .scan_planner import Quadrant, grid_distance

DEFAULT_MAX_REFS = 4
LOW_DELAY_OFFSETS = (1, 3, 7, 11)
REF_KINDS = ("proposed", "lowdelay")


@dataclass(frozen=True)
class ReferenceGraph:
    kind: str
    max_refs: int
    refs: tuple  # refs[i] is a tuple of earlier coding indices

    def __post_init__(self):
        object.__setattr__(self, "refs", tuple(tuple(r) for r in self.refs))
        for i, r in enumerate(self.refs):
            if len(r) > self.max_refs:
                raise ValueError(f"view {i} has {len(r)} refs > max {self.max_refs}")
            if any(j < 0 or j >= i for j in r):
                raise ValueError(f"view {i} references a view not coded before it: {r}")

    def __len__(self):
        return len(self.refs)


def _sequence_members(plan):
    """coding index -> ordered list of the indices of its sequence (anchor first)."""
    members = {0: [0]}
    for _, idxs in plan.sequences():
        seq = [0] + list(idxs)
        for i in idxs:
            members[i] = seq
    return members


def build_proposed(plan, max_refs=DEFAULT_MAX_REFS):
    pos = plan.positions()
    quad = [e.quadrant for e in plan.entries]
    refs = [()]
    for i in range(1, len(plan.entries)):
        cands = {0}
        cands.update(j for j in range(1, i) if quad[j] == quad[i] and quad[i] != Quadrant.CENTER)
        ranked = sorted(cands, key=lambda j: (grid_distance(pos[i], pos[j]), -j))
        refs.append(tuple(ranked[:max_refs]))
    return ReferenceGraph("proposed", max_refs, tuple(refs))


def build_low_delay(plan, max_refs=DEFAULT_MAX_REFS):
    """Low-delay references, counted along each view's own pseudo-sequence.

    For a single-sequence plan the local index equals the coding index, so
    view 15 references 14, 12, 8 and 4.
    """
    members = _sequence_members(plan)
    refs = [()]
    for i in range(1, len(plan.entries)):
        seq = members[i]
        local = seq.index(i)
        chosen = [seq[local - k] for k in LOW_DELAY_OFFSETS if local - k >= 0]
        refs.append(tuple(chosen[:max_refs]))
    return ReferenceGraph("lowdelay", max_refs, tuple(refs))


def build_graph(kind, plan, max_refs=DEFAULT_MAX_REFS):
    if kind == "proposed":
        return build_proposed(plan, max_refs)
    if kind == "lowdelay":
        return build_low_delay(plan, max_refs)
    raise ValueError(f"unknown reference kind {kind!r}")


def graph_to_csv_rows(plan, graph):
    pos = plan.positions()
    rows = []
    for i, r in enumerate(graph.refs):
        dists = [grid_distance(pos[i], pos[j]) for j in r]
        rows.append(
            (i, " ".join(str(j) for j in r), " ".join(f"{d:.4f}" for d in dists))
        )
    return rows
