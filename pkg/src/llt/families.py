"""Analyst-driven refinement of a cluster partition into named families.

A :class:`FamilySet` starts as one family per partition group and is reshaped
by keep / merge / split / rename decisions.  Every decision is recorded as an
:class:`Event`; replaying the event log from the initial partition reproduces
the exact same families, which makes a refinement session auditable and
restartable.  Families can be annotated with lineage edges (added / removed /
modified behavior between two families) and exported as a family-level
dendrogram in DOT, Newick, or JSON form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

from .alignment import Scoring, Template, align, as_slots
from .clustering import Dendrogram, Partition

__all__ = [
    "CHANGE_KINDS",
    "REFINEMENT_CRITERIA",
    "CannotSplit",
    "DiffChange",
    "Event",
    "Family",
    "FamilyError",
    "FamilySet",
    "Inconsistent",
    "LineageEdge",
    "NotFound",
    "UnsupportedFormat",
    "add_lineage_edge",
    "diff_templates",
    "export_lineage",
    "init_families",
    "keep_family",
    "load_families",
    "merge_families",
    "rename_family",
    "replay",
    "save_families",
    "split_family",
    "suggest_name",
]

#: Judgment checklist shown to the analyst next to the refinement controls.
#: These are displayed as-is and never applied automatically.
REFINEMENT_CRITERIA: tuple[str, ...] = (
    "Logs whose command sequences are byte-for-byte identical belong to the "
    "same family, whatever their cluster distance says.",
    "Judge a candidate family by the shape of its command sequence - stage "
    "order and syntax structure - rather than by which individual commands "
    "appear in it.",
    "Ignore variation in self-identification tokens: dropped binary names, "
    "marker strings, and session nonces vary freely inside one family.",
)

CHANGE_KINDS = ("added", "removed", "modified")

_CHANGE_SIGILS = {"added": "+", "removed": "-", "modified": "±"}


class FamilyError(ValueError):
    """Base error for family refinement operations."""


class NotFound(FamilyError):
    """Referenced family id does not exist."""


class CannotSplit(FamilyError):
    """Split requested on a family anchored at a leaf."""


class Inconsistent(FamilyError):
    """Partition, tree, and family set disagree about the leaf population."""


class UnsupportedFormat(FamilyError):
    """Unknown lineage export format."""


def _stamp(at: datetime | None) -> str:
    t = at if at is not None else datetime.now(timezone.utc)
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc).isoformat()


@dataclass(frozen=True)
class Event:
    """One recorded refinement action (the unit of the session event log)."""

    op: str
    args: dict
    actor: str = "analyst"
    at: str = ""

    def to_jsonable(self) -> dict:
        return {"op": self.op, "args": self.args, "actor": self.actor, "at": self.at}

    @classmethod
    def from_jsonable(cls, data: dict) -> "Event":
        return cls(
            op=str(data["op"]),
            args=dict(data["args"]),
            actor=str(data.get("actor", "analyst")),
            at=str(data.get("at", "")),
        )


@dataclass(frozen=True)
class Family:
    id: str
    name: str
    members: tuple[int, ...]
    anchor: int
    notes: str = ""

    @property
    def size(self) -> int:
        return len(self.members)

    def to_jsonable(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "members": list(self.members),
            "anchor": self.anchor,
            "notes": self.notes,
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "Family":
        return cls(
            id=str(data["id"]),
            name=str(data.get("name", "")),
            members=tuple(int(m) for m in data["members"]),
            anchor=int(data["anchor"]),
            notes=str(data.get("notes", "")),
        )


@dataclass(frozen=True)
class LineageEdge:
    src: str
    dst: str
    changes: tuple[tuple[str, str], ...]

    def to_jsonable(self) -> dict:
        return {"src": self.src, "dst": self.dst, "changes": [list(c) for c in self.changes]}

    @classmethod
    def from_jsonable(cls, data: dict) -> "LineageEdge":
        return cls(
            src=str(data["src"]),
            dst=str(data["dst"]),
            changes=tuple((str(k), str(v)) for k, v in data["changes"]),
        )


@dataclass(frozen=True)
class FamilySet:
    """Named families over the leaf set plus the event log that produced them."""

    n_leaves: int
    families: tuple[Family, ...]
    history: tuple[Event, ...] = ()
    lineage_edges: tuple[LineageEdge, ...] = ()
    next_id: int = 1

    def family(self, fid: str) -> Family:
        for fam in self.families:
            if fam.id == fid:
                return fam
        raise NotFound(f"no family with id {fid!r}")

    @property
    def family_ids(self) -> list[str]:
        return [f.id for f in self.families]

    def validate(self) -> None:
        seen: set[int] = set()
        total = 0
        for fam in self.families:
            total += len(fam.members)
            seen.update(fam.members)
        if total != self.n_leaves or seen != set(range(self.n_leaves)):
            raise Inconsistent("families do not partition the full leaf set")

    def to_jsonable(self) -> dict:
        return {
            "version": 1,
            "n_leaves": self.n_leaves,
            "families": [f.to_jsonable() for f in self.families],
            "lineage_edges": [e.to_jsonable() for e in self.lineage_edges],
            "next_id": self.next_id,
            "events": [e.to_jsonable() for e in self.history],
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "FamilySet":
        fs = cls(
            n_leaves=int(data["n_leaves"]),
            families=tuple(Family.from_jsonable(f) for f in data["families"]),
            history=tuple(Event.from_jsonable(e) for e in data.get("events", [])),
            lineage_edges=tuple(
                LineageEdge.from_jsonable(e) for e in data.get("lineage_edges", [])
            ),
            next_id=int(data.get("next_id", 1)),
        )
        fs.validate()
        return fs


# --------------------------------------------------------------------------
# event application (the single code path shared by live ops and replay)


def _lca_of(tree: Dendrogram, nodes: Iterable[int]) -> int:
    return reduce(tree.lca, nodes)


def _apply_init(tree: Dendrogram, ev: Event) -> FamilySet:
    groups = [tuple(int(i) for i in g) for g in ev.args["groups"]]
    anchors = [int(a) for a in ev.args["anchors"]]
    if len(groups) != len(anchors):
        raise Inconsistent("groups and anchors differ in length")
    n = tree.n_leaves
    seen: set[int] = set()
    for g, a in zip(groups, anchors):
        if not 0 <= a < tree.n_nodes:
            raise Inconsistent(f"anchor {a} is not a tree node")
        if sorted(g) != sorted(tree.node_members(a)):
            raise Inconsistent(f"group does not match the subtree at node {a}")
        seen.update(g)
    if len(seen) != n or sum(len(g) for g in groups) != n:
        raise Inconsistent("partition does not cover the leaf set exactly once")
    families = tuple(
        Family(id=f"f{k + 1}", name="", members=tuple(sorted(g)), anchor=a)
        for k, (g, a) in enumerate(zip(groups, anchors))
    )
    return FamilySet(
        n_leaves=n, families=families, history=(ev,), next_id=len(families) + 1
    )


def _apply_merge(fs: FamilySet, tree: Dendrogram, ev: Event) -> FamilySet:
    a, b = str(ev.args["a"]), str(ev.args["b"])
    if a == b:
        raise FamilyError("merge needs two distinct families")
    fam_a, fam_b = fs.family(a), fs.family(b)
    merged = Family(
        id=f"f{fs.next_id}",
        name=fam_a.name or fam_b.name,
        members=tuple(sorted(fam_a.members + fam_b.members)),
        anchor=_lca_of(tree, (fam_a.anchor, fam_b.anchor)),
        notes=fam_a.notes or fam_b.notes,
    )
    families = tuple(
        merged if f.id == a else f for f in fs.families if f.id != b
    )
    return replace(
        fs, families=families, history=fs.history + (ev,), next_id=fs.next_id + 1
    )


def _apply_split(fs: FamilySet, tree: Dendrogram, ev: Event) -> FamilySet:
    a = str(ev.args["a"])
    fam = fs.family(a)
    kids = tree.children(fam.anchor)
    if kids is None:
        raise CannotSplit(f"family {a} is anchored at a leaf and cannot be split")
    left_members = set(tree.node_members(kids[0]))
    part_left = tuple(m for m in fam.members if m in left_members)
    part_right = tuple(m for m in fam.members if m not in left_members)
    if not part_left or not part_right:
        raise CannotSplit(f"family {a} has members under only one child of its anchor")
    halves = []
    for offset, part in enumerate((part_left, part_right)):
        halves.append(
            Family(
                id=f"f{fs.next_id + offset}",
                name="",
                members=part,
                anchor=_lca_of(tree, part),
                notes=fam.notes,
            )
        )
    families: list[Family] = []
    for f in fs.families:
        if f.id == a:
            families.extend(halves)
        else:
            families.append(f)
    return replace(
        fs,
        families=tuple(families),
        history=fs.history + (ev,),
        next_id=fs.next_id + 2,
    )


def _apply_keep(fs: FamilySet, tree: Dendrogram | None, ev: Event) -> FamilySet:
    a = str(ev.args["a"])
    note = str(ev.args.get("note", ""))
    fam = fs.family(a)
    if note:
        fam = replace(fam, notes=note)
    families = tuple(fam if f.id == a else f for f in fs.families)
    return replace(fs, families=families, history=fs.history + (ev,))


def _apply_rename(fs: FamilySet, tree: Dendrogram | None, ev: Event) -> FamilySet:
    a = str(ev.args["a"])
    name = str(ev.args["name"])
    fam = replace(fs.family(a), name=name)
    families = tuple(fam if f.id == a else f for f in fs.families)
    return replace(fs, families=families, history=fs.history + (ev,))


def _apply_lineage_edge(fs: FamilySet, tree: Dendrogram | None, ev: Event) -> FamilySet:
    src, dst = str(ev.args["src"]), str(ev.args["dst"])
    fs.family(src), fs.family(dst)  # existence check
    changes = []
    for kind, label in ev.args["changes"]:
        if kind not in CHANGE_KINDS:
            raise FamilyError(f"unknown change kind {kind!r}")
        changes.append((str(kind), str(label)))
    edge = LineageEdge(src=src, dst=dst, changes=tuple(changes))
    return replace(
        fs, lineage_edges=fs.lineage_edges + (edge,), history=fs.history + (ev,)
    )


_APPLIERS = {
    "merge": _apply_merge,
    "split": _apply_split,
    "keep": _apply_keep,
    "rename": _apply_rename,
    "lineage_edge": _apply_lineage_edge,
}


def _apply(fs: FamilySet, tree: Dendrogram | None, ev: Event) -> FamilySet:
    try:
        applier = _APPLIERS[ev.op]
    except KeyError:
        raise FamilyError(f"unknown event op {ev.op!r}") from None
    out = applier(fs, tree, ev)
    out.validate()
    return out


def replay(tree: Dendrogram, events: Sequence[Event]) -> FamilySet:
    """Rebuild the family set by applying the event log from scratch."""
    if not events or events[0].op != "init":
        raise FamilyError("event log must start with an init event")
    fs = _apply_init(tree, events[0])
    for ev in events[1:]:
        fs = _apply(fs, tree, ev)
    return fs


# --------------------------------------------------------------------------
# public operations


def init_families(
    p: Partition,
    tree: Dendrogram,
    actor: str = "analyst",
    at: datetime | None = None,
) -> FamilySet:
    """One unnamed family per partition group, anchored at the group's subtree."""
    ev = Event(
        op="init",
        args={
            "groups": [list(g) for g in p.groups],
            "anchors": list(p.anchors),
            "threshold": p.threshold,
        },
        actor=actor,
        at=_stamp(at),
    )
    fs = _apply_init(tree, ev)
    fs.validate()
    return fs


def merge_families(
    fs: FamilySet,
    tree: Dendrogram,
    a: str,
    b: str,
    actor: str = "analyst",
    at: datetime | None = None,
) -> FamilySet:
    """Union of two families, re-anchored at their lowest common ancestor."""
    ev = Event(op="merge", args={"a": a, "b": b}, actor=actor, at=_stamp(at))
    return _apply(fs, tree, ev)


def split_family(
    fs: FamilySet,
    tree: Dendrogram,
    a: str,
    actor: str = "analyst",
    at: datetime | None = None,
) -> FamilySet:
    """Replace a family by its two anchor-children clusters."""
    ev = Event(op="split", args={"a": a}, actor=actor, at=_stamp(at))
    return _apply(fs, tree, ev)


def keep_family(
    fs: FamilySet,
    a: str,
    note: str = "",
    actor: str = "analyst",
    at: datetime | None = None,
) -> FamilySet:
    """Mark a family as reviewed-and-approved (optionally attaching a note)."""
    ev = Event(op="keep", args={"a": a, "note": note}, actor=actor, at=_stamp(at))
    return _apply(fs, None, ev)


def rename_family(
    fs: FamilySet,
    a: str,
    name: str,
    actor: str = "analyst",
    at: datetime | None = None,
) -> FamilySet:
    ev = Event(op="rename", args={"a": a, "name": name}, actor=actor, at=_stamp(at))
    return _apply(fs, None, ev)


def add_lineage_edge(
    fs: FamilySet,
    src: str,
    dst: str,
    changes: Iterable[tuple[str, str]],
    actor: str = "analyst",
    at: datetime | None = None,
) -> FamilySet:
    """Annotate behavioral change between two families (+ added / - removed / ± modified)."""
    ev = Event(
        op="lineage_edge",
        args={"src": src, "dst": dst, "changes": [list(c) for c in changes]},
        actor=actor,
        at=_stamp(at),
    )
    return _apply(fs, None, ev)


# --------------------------------------------------------------------------
# template diffing


@dataclass(frozen=True)
class DiffChange:
    """One changed stretch between two templates."""

    kind: str  # added | removed | modified
    removed: tuple[bytes | None, ...] = ()
    added: tuple[bytes | None, ...] = ()

    @staticmethod
    def _render(run: tuple[bytes | None, ...]) -> str:
        return "".join("«*»" if t is None else t.decode("latin-1") for t in run)

    @property
    def label(self) -> str:
        sigil = _CHANGE_SIGILS[self.kind]
        if self.kind == "added":
            return f"{sigil}{self._render(self.added)}"
        if self.kind == "removed":
            return f"{sigil}{self._render(self.removed)}"
        return f"{sigil}{self._render(self.removed)}↔{self._render(self.added)}"

    def to_jsonable(self) -> dict:
        conv = lambda run: [None if t is None else t.decode("latin-1") for t in run]
        return {"kind": self.kind, "removed": conv(self.removed), "added": conv(self.added)}


def _anchor_positions(slots: list[bytes | None], anchors: list[bytes]) -> list[int]:
    out: list[int] = []
    i = 0
    for tok in anchors:
        while i < len(slots) and slots[i] != tok:
            i += 1
        if i == len(slots):  # soundness of align() guarantees we never get here
            raise FamilyError("alignment anchors missing from input template")
        out.append(i)
        i += 1
    return out


def _template_key(slots: list[bytes | None]) -> tuple:
    return (len(slots), tuple((0, b"") if t is None else (1, t) for t in slots))


def _diff_core(
    sa: list[bytes | None], sb: list[bytes | None], s: Scoring
) -> list[DiffChange]:
    anchors = align(sa, sb, s).literals()
    pa = _anchor_positions(sa, anchors)
    pb = _anchor_positions(sb, anchors)
    changes: list[DiffChange] = []

    def classify(run_a: tuple, run_b: tuple) -> None:
        if run_a == run_b:
            return
        if run_a and run_b:
            changes.append(DiffChange("modified", removed=run_a, added=run_b))
        elif run_a:
            changes.append(DiffChange("removed", removed=run_a))
        elif run_b:
            changes.append(DiffChange("added", added=run_b))

    prev_a = prev_b = -1
    for ia, ib in zip(pa, pb):
        classify(tuple(sa[prev_a + 1 : ia]), tuple(sb[prev_b + 1 : ib]))
        prev_a, prev_b = ia, ib
    classify(tuple(sa[prev_a + 1 :]), tuple(sb[prev_b + 1 :]))
    return changes


def _flip(c: DiffChange) -> DiffChange:
    kind = {"added": "removed", "removed": "added", "modified": "modified"}[c.kind]
    return DiffChange(kind, removed=c.added, added=c.removed)


def diff_templates(a, b, s: Scoring = Scoring()) -> list[DiffChange]:
    """Changed stretches between two templates, relative to their alignment.

    Runs present only in ``b`` are additions, runs present only in ``a`` are
    removals, and opposed runs are modifications; identical runs are omitted.
    Swapping the arguments swaps added and removed exactly.
    """
    sa, sb = as_slots(a), as_slots(b)
    if _template_key(sa) <= _template_key(sb):
        return _diff_core(sa, sb, s)
    return [_flip(c) for c in _diff_core(sb, sa, s)]


def suggest_name(template: Template | None) -> str:
    """Default family name: the most distinctive literal token of its template."""
    if template is None:
        return ""
    lits = template.literals()
    if not lits:
        return ""
    best = max(
        range(len(lits)), key=lambda i: (lits[i].isalnum(), len(lits[i]), -i)
    )
    return lits[best].decode("latin-1")


# --------------------------------------------------------------------------
# lineage export


def _display_name(fam: Family, templates: dict[int, Template] | None) -> str:
    if fam.name:
        return fam.name
    if templates is not None:
        suggested = suggest_name(templates.get(fam.anchor))
        if suggested:
            return suggested
    return fam.id


def _induced_tree(fs: FamilySet, tree: Dendrogram):
    """Family-level tree: families as terminals, joined at their tree joins.

    Returns nested entries: ("family", Family) or ("join", node, height, children).
    """
    by_anchor: dict[int, list[Family]] = {}
    for fam in fs.families:
        by_anchor.setdefault(fam.anchor, []).append(fam)

    def build(node: int) -> list:
        entries: list = []
        kids = tree.children(node)
        if kids is not None:
            entries.extend(build(kids[0]))
            entries.extend(build(kids[1]))
        for fam in by_anchor.get(node, []):
            entries.append(("family", fam))
        if len(entries) >= 2:
            return [("join", node, tree.node_height(node), entries)]
        return entries

    top = build(tree.root)
    if not top:
        raise Inconsistent("family set has no families")
    return top[0]


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _export_dot(fs, tree, templates) -> bytes:
    entry = _induced_tree(fs, tree)
    lines = [
        "digraph lineage {",
        "  rankdir=LR;",
        '  node [fontname="monospace"];',
    ]

    def walk(e) -> str:
        if e[0] == "family":
            fam = e[1]
            label = f"{_dot_escape(_display_name(fam, templates))}\\nn={fam.size}"
            lines.append(f'  "{fam.id}" [shape=box, label="{label}"];')
            return f'"{fam.id}"'
        _, node, height, children = e
        name = f"join{node}"
        lines.append(f'  "{name}" [shape=ellipse, label="h={height:.6g}"];')
        for child in children:
            lines.append(f'  "{name}" -> {walk(child)};')
        return f'"{name}"'

    walk(entry)
    for edge in fs.lineage_edges:
        label = "\\n".join(
            f"{_CHANGE_SIGILS[kind]}{_dot_escape(text)}" for kind, text in edge.changes
        )
        lines.append(
            f'  "{edge.src}" -> "{edge.dst}" '
            f'[style=dashed, constraint=false, label="{label}"];'
        )
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _newick_quote(label: str) -> str:
    return "'" + label.replace("'", "''") + "'"


def _export_newick(fs, tree, templates) -> bytes:
    entry = _induced_tree(fs, tree)

    def render(e, parent_height: float) -> str:
        if e[0] == "family":
            fam = e[1]
            length = parent_height - tree.node_height(fam.anchor)
            return f"{_newick_quote(_display_name(fam, templates))}:{length:.6g}"
        _, _node, height, children = e
        inner = ",".join(render(c, height) for c in children)
        return f"({inner}):{parent_height - height:.6g}"

    top_height = entry[2] if entry[0] == "join" else tree.node_height(entry[1].anchor)
    return (render(entry, top_height) + ";\n").encode("utf-8")


def _export_json(fs, tree, templates) -> bytes:
    entry = _induced_tree(fs, tree)

    def jsonify(e) -> dict:
        if e[0] == "family":
            fam = e[1]
            out = fam.to_jsonable()
            out["kind"] = "family"
            out["display_name"] = _display_name(fam, templates)
            return out
        _, node, height, children = e
        return {
            "kind": "join",
            "node": node,
            "height": height,
            "children": [jsonify(c) for c in children],
        }

    payload = {
        "n_leaves": fs.n_leaves,
        "families": [f.to_jsonable() for f in fs.families],
        "lineage_edges": [e.to_jsonable() for e in fs.lineage_edges],
        "tree": jsonify(entry),
    }
    return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")


_EXPORTERS = {"dot": _export_dot, "newick": _export_newick, "json": _export_json}


def export_lineage(
    fs: FamilySet,
    tree: Dendrogram,
    templates: dict[int, Template] | None = None,
    fmt: str = "dot",
) -> bytes:
    """Family-level dendrogram with lineage annotations, as bytes."""
    try:
        exporter = _EXPORTERS[fmt]
    except KeyError:
        raise UnsupportedFormat(
            f"format must be one of {sorted(_EXPORTERS)}, got {fmt!r}"
        ) from None
    if fs.n_leaves != tree.n_leaves:
        raise Inconsistent("family set and tree disagree on leaf count")
    for fam in fs.families:
        if not 0 <= fam.anchor < tree.n_nodes:
            raise Inconsistent(f"family {fam.id} anchored at unknown node {fam.anchor}")
    fs.validate()
    return exporter(fs, tree, templates)


# --------------------------------------------------------------------------
# persistence


def save_families(fs: FamilySet, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(fs.to_jsonable(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_families(path: str | Path) -> FamilySet:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read family session {p}: {exc}") from exc
    try:
        return FamilySet.from_jsonable(data)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed family session {p}: {exc}") from exc
