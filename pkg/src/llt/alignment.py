"""Pairwise token alignment and per-cluster template extraction.

A template is a slot sequence: literal tokens shared by every member of a
cluster, with placeholder slots (rendered «*») covering the variable parts.
Pairwise alignment runs a local dynamic program, anchors the identical
tokens of the optimal window, then reapplies itself to the flanks between
and outside the anchors, so unmatched heads/tails/middles each collapse to a
single placeholder. Placeholders carry no content: they score like gaps and
are never promoted to literals. Templates for a whole dendrogram are built
bottom-up: a node's template is the alignment of its children's templates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .encoding import escape_bytes, unescape_bytes
from .tokenizer import Token
from .clustering import Dendrogram

PLACEHOLDER_MARK = "«*»"  # «*»


class OracleTooLarge(Exception):
    """exhaustive_align_oracle only accepts sequences up to length 6."""


@dataclass(frozen=True)
class Scoring:
    match: float = 1.0
    mismatch: float = -1.0
    gap: float = -1.0

    def __post_init__(self) -> None:
        if not self.match > 0:
            raise ValueError("match score must be positive")
        if self.mismatch > 0 or self.gap > 0:
            raise ValueError("mismatch and gap scores must be <= 0")


@dataclass
class Template:
    slots: list[bytes | None] = field(default_factory=list)  # None = placeholder
    origin: int = -1

    def literals(self) -> list[bytes]:
        return [s for s in self.slots if s is not None]

    def render(self) -> str:
        return "".join(PLACEHOLDER_MARK if s is None else escape_bytes(s) for s in self.slots)

    def to_jsonable(self) -> list[str | None]:
        return [None if s is None else escape_bytes(s) for s in self.slots]

    @classmethod
    def from_jsonable(cls, slots: list[str | None], origin: int = -1) -> "Template":
        return cls(slots=[None if s is None else unescape_bytes(s) for s in slots], origin=origin)


def as_slots(x) -> list[bytes | None]:
    """Normalize a Template / Token sequence / slot list to a slot list."""
    if isinstance(x, Template):
        return list(x.slots)
    out: list[bytes | None] = []
    for item in x:
        if item is None:
            out.append(None)
        elif isinstance(item, Token):
            out.append(item.text)
        elif isinstance(item, (bytes, bytearray)):
            out.append(bytes(item))
        else:
            raise TypeError(f"cannot treat {type(item).__name__} as a token slot")
    return out


def _slot_ids(a: list[bytes | None], b: list[bytes | None]) -> tuple[np.ndarray, np.ndarray]:
    """Map slots to ints; literals share ids across sides, placeholders never
    compare equal (distinct negative ids per side)."""
    table: dict[bytes, int] = {}

    def ids(slots, ph_id):
        out = np.empty(len(slots), dtype=np.int64)
        for i, s in enumerate(slots):
            if s is None:
                out[i] = ph_id
            else:
                out[i] = table.setdefault(s, len(table))
        return out

    return ids(a, -1), ids(b, -2)


def _dp(a_ids: np.ndarray, b_ids: np.ndarray, s: Scoring) -> tuple[np.ndarray, np.ndarray]:
    """Local-alignment score table, vectorized one row at a time.

    The in-row left-gap dependency is resolved with a prefix-max trick:
    H[i,j] = max(base[j], max_{j'<j}(base[j''] - gapcost*(j-j'))) where base
    is the row's candidate from the diagonal/up/zero moves.
    """
    n, m = len(a_ids), len(b_ids)
    sub = np.where(a_ids[:, None] == b_ids[None, :], s.match, s.mismatch)
    sub[a_ids < 0, :] = s.gap  # placeholders score as gaps against anything
    sub[:, b_ids < 0] = s.gap
    H = np.zeros((n + 1, m + 1), dtype=np.float64)
    g = -s.gap
    j_idx = np.arange(1, m + 1, dtype=np.float64)
    for i in range(1, n + 1):
        cand = np.maximum(H[i - 1, :-1] + sub[i - 1], H[i - 1, 1:] - g)
        np.maximum(cand, 0.0, out=cand)
        run = np.maximum.accumulate(cand + g * j_idx)
        H[i, 1:] = np.maximum(cand, run - g * j_idx)
    return H, sub


def align_score(a, b, s: Scoring = Scoring()) -> float:
    """Optimal local alignment score (0 when nothing positive exists)."""
    sa, sb = as_slots(a), as_slots(b)
    if not sa or not sb:
        return 0.0
    a_ids, b_ids = _slot_ids(sa, sb)
    H, _ = _dp(a_ids, b_ids, s)
    return float(H.max())


def _window_anchors(a_ids, b_ids, s: Scoring) -> list[tuple[int, int]]:
    """Matched-equal-token index pairs of the optimal local window.

    Ties: the end cell is the first maximum in row-major order; the walk back
    prefers diagonal over up over left. Equality tests are exact — every H
    value was assigned from one of the compared expressions.
    """
    H, sub = _dp(a_ids, b_ids, s)
    best = H.max()
    if best <= 0:
        return []
    i, j = np.unravel_index(int(np.argmax(H)), H.shape)
    anchors: list[tuple[int, int]] = []
    while i > 0 and j > 0 and H[i, j] > 0:
        if H[i, j] == H[i - 1, j - 1] + sub[i - 1, j - 1]:
            if a_ids[i - 1] == b_ids[j - 1] and a_ids[i - 1] >= 0:
                anchors.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif H[i, j] == H[i - 1, j] + s.gap:
            i -= 1
        else:
            j -= 1
    anchors.reverse()
    return anchors


def _collapse(slots: list[bytes | None]) -> list[bytes | None]:
    out: list[bytes | None] = []
    for slot in slots:
        if slot is None and out and out[-1] is None:
            continue
        out.append(slot)
    return out


def align(a, b, s: Scoring = Scoring()) -> Template:
    """Template of two token sequences / templates.

    Identical tokens of the optimal local windows become literal slots (found
    recursively in the flanks as well); every unmatched stretch collapses to
    one placeholder.
    """
    out: list[bytes | None] = []
    work: list[tuple] = [("seg", as_slots(a), as_slots(b))]
    while work:
        item = work.pop()
        if item[0] == "lit":
            out.append(item[1])
            continue
        _, xa, xb = item
        if not xa and not xb:
            continue
        if not xa or not xb:
            out.append(None)
            continue
        a_ids, b_ids = _slot_ids(xa, xb)
        anchors = _window_anchors(a_ids, b_ids, s)
        if not anchors:
            out.append(None)
            continue
        sub_items: list[tuple] = []
        pa = pb = 0
        for ia, ib in anchors:
            sub_items.append(("seg", xa[pa:ia], xb[pb:ib]))
            sub_items.append(("lit", xa[ia]))
            pa, pb = ia + 1, ib + 1
        sub_items.append(("seg", xa[pa:], xb[pb:]))
        work.extend(reversed(sub_items))
    return Template(slots=_collapse(out))


def annotate_tree(
    tree: Dendrogram, corpus_tokens: Sequence[Sequence], s: Scoring = Scoring()
) -> dict[int, Template]:
    """Template per tree node: leaves verbatim, internal nodes by aligning
    their children's templates bottom-up (merge order is already bottom-up)."""
    if len(corpus_tokens) != tree.n_leaves:
        raise ValueError(f"{len(corpus_tokens)} token sequences for {tree.n_leaves} leaves")
    templates: dict[int, Template] = {}
    for leaf, seq in enumerate(corpus_tokens):
        templates[leaf] = Template(slots=as_slots(seq), origin=leaf)
    for k, merge in enumerate(tree.merges):
        node = tree.n_leaves + k
        tpl = align(templates[merge.left], templates[merge.right], s)
        tpl.origin = node
        templates[node] = tpl
    return templates


def exhaustive_align_oracle(a, b, s: Scoring = Scoring()) -> float:
    """Brute-force local alignment score for sequences of length <= 6.

    Enumerates every order-preserving pairing; a pairing's score is the sum
    of its pair scores plus a gap charge for each unpaired token strictly
    inside the paired window. The empty pairing scores 0.
    """
    sa, sb = as_slots(a), as_slots(b)
    if len(sa) > 6 or len(sb) > 6:
        raise OracleTooLarge(f"lengths {len(sa)},{len(sb)} exceed the oracle bound of 6")

    def pair_score(x: bytes | None, y: bytes | None) -> float:
        if x is None or y is None:
            return s.gap
        return s.match if x == y else s.mismatch

    best = 0.0
    for k in range(1, min(len(sa), len(sb)) + 1):
        for isel in combinations(range(len(sa)), k):
            for jsel in combinations(range(len(sb)), k):
                score = sum(pair_score(sa[x], sb[y]) for x, y in zip(isel, jsel))
                interior_gaps = (isel[-1] - isel[0] + 1 - k) + (jsel[-1] - jsel[0] + 1 - k)
                score += s.gap * interior_gaps
                best = max(best, score)
    return best
