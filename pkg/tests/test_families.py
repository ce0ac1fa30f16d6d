"""Family refinement: event log, keep/merge/split, diffs, lineage export."""

import json
import random
import re
from datetime import datetime, timezone

import pytest

from llt.alignment import Template, annotate_tree
from llt.clustering import Dendrogram, Merge, Partition, agglomerate, cut, suggest_threshold
from llt.families import (
    REFINEMENT_CRITERIA,
    CannotSplit,
    DiffChange,
    FamilyError,
    FamilySet,
    Inconsistent,
    NotFound,
    UnsupportedFormat,
    add_lineage_edge,
    diff_templates,
    export_lineage,
    init_families,
    keep_family,
    load_families,
    merge_families,
    rename_family,
    replay,
    save_families,
    split_family,
    suggest_name,
)
from llt.features import build_vocab, distance_matrix
from llt.syngen import generate_corpus, load_specs
from llt.tokenizer import tokenize

AT = datetime(2024, 1, 1, tzinfo=timezone.utc)


def make_tree(nested) -> Dendrogram:
    """Dendrogram from nested (left, right) tuples over leaves 0..n-1."""
    leaves: list[int] = []

    def scan(x):
        if isinstance(x, int):
            leaves.append(x)
        else:
            scan(x[0])
            scan(x[1])

    scan(nested)
    n = len(leaves)
    assert sorted(leaves) == list(range(n))
    merges: list[Merge] = []

    def build(x) -> tuple[int, int]:
        if isinstance(x, int):
            return x, 1
        l, ls = build(x[0])
        r, rs = build(x[1])
        merges.append(Merge(l, r, float(len(merges) + 1), ls + rs))
        return n + len(merges) - 1, ls + rs

    build(nested)
    return Dendrogram(leaves=[f"L{i}" for i in range(n)], merges=merges)


def subtree_partition(tree: Dendrogram, anchors: list[int]) -> Partition:
    groups = [tree.node_members(a) for a in anchors]
    order = sorted(range(len(groups)), key=lambda i: groups[i][0])
    return Partition(
        threshold=0.0,
        groups=[groups[i] for i in order],
        anchors=[anchors[i] for i in order],
    )


def singleton_partition(tree: Dendrogram) -> Partition:
    return subtree_partition(tree, list(range(tree.n_leaves)))


@pytest.fixture(scope="module")
def pipeline():
    """Synthetic 8-family corpus run through the full clustering pipeline."""
    corpus, labels = generate_corpus(load_specs(), per_family=6, seed=3)
    seqs = [tokenize(log.raw) for log in corpus.logs]
    tree = agglomerate(distance_matrix(seqs, build_vocab(seqs)))
    part = cut(tree, suggest_threshold(tree))
    templates = annotate_tree(tree, seqs)
    return corpus, labels, seqs, tree, part, templates


# --------------------------------------------------------------------------
# init


def test_init_one_family_per_group(pipeline):
    _, labels, _, tree, part, _ = pipeline
    fs = init_families(part, tree, at=AT)
    assert len(fs.families) == len(part.groups)
    assert all(f.name == "" for f in fs.families)
    assert [e.op for e in fs.history] == ["init"]
    fs.validate()
    for fam, anchor in zip(fs.families, part.anchors):
        assert fam.anchor == anchor
        assert list(fam.members) == sorted(tree.node_members(anchor))


def test_init_all_singletons_and_one_group():
    tree = make_tree(((0, 1), (2, 3)))
    assert len(init_families(singleton_partition(tree), tree).families) == 4
    assert len(init_families(subtree_partition(tree, [tree.root]), tree).families) == 1


def test_init_nineteen_groups():
    nested = 0
    for i in range(1, 20):
        nested = (nested, i)
    tree = make_tree(nested)
    part = subtree_partition(tree, [20] + list(range(2, 20)))  # node 20 = {0,1}
    fs = init_families(part, tree)
    assert len(fs.families) == 19
    fs.validate()


def test_init_rejects_partition_not_from_tree():
    tree = make_tree(((0, 1), (2, 3)))
    bad = Partition(threshold=0.0, groups=[[0, 2], [1, 3]], anchors=[4, 5])
    with pytest.raises(Inconsistent):
        init_families(bad, tree)
    missing = Partition(threshold=0.0, groups=[[0, 1]], anchors=[4])
    with pytest.raises(Inconsistent):
        init_families(missing, tree)


# --------------------------------------------------------------------------
# merge / split


def two_group_fs():
    tree = make_tree((((0, 1), 2), ((3, 4), ((5, 6), 7))))
    part = subtree_partition(tree, [9, 13])  # sizes 3 and 5
    return tree, init_families(part, tree, at=AT)


def test_merge_union_and_count():
    tree, fs = two_group_fs()
    out = merge_families(fs, tree, "f1", "f2", at=AT)
    assert len(out.families) == len(fs.families) - 1
    merged = out.families[0]
    assert merged.size == 8
    assert merged.members == tuple(range(8))
    assert merged.anchor == tree.root
    assert [e.op for e in out.history] == ["init", "merge"]


def test_merge_errors():
    tree, fs = two_group_fs()
    with pytest.raises(NotFound):
        merge_families(fs, tree, "f1", "nope")
    with pytest.raises(FamilyError):
        merge_families(fs, tree, "f1", "f1")


def test_split_two_leaves_then_cannot_split():
    tree = make_tree((0, 1))
    fs = init_families(subtree_partition(tree, [tree.root]), tree, at=AT)
    out = split_family(fs, tree, "f1", at=AT)
    assert sorted(f.members for f in out.families) == [(0,), (1,)]
    assert all(tree.is_leaf(f.anchor) for f in out.families)
    with pytest.raises(CannotSplit):
        split_family(out, tree, out.families[0].id)


def test_split_then_merge_is_identity():
    tree, fs = two_group_fs()
    split = split_family(fs, tree, "f2", at=AT)
    halves = [f.id for f in split.families if f.id not in ("f1", "f2")]
    back = merge_families(split, tree, halves[0], halves[1], at=AT)
    orig = fs.family("f2")
    restored = next(f for f in back.families if f.id not in ("f1", "f2"))
    assert restored.members == orig.members
    assert restored.anchor == orig.anchor


def test_split_four_and_nine():
    left = (((0, 1), 2), 3)  # 4 leaves
    right = ((((4, 5), 6), (7, 8)), (((9, 10), 11), 12))  # 9 leaves
    tree = make_tree((left, right))
    fs = init_families(subtree_partition(tree, [tree.root]), tree)
    out = split_family(fs, tree, "f1")
    assert sorted(f.size for f in out.families) == [4, 9]
    out.validate()


def test_merge_yellow_like_scenario(pipeline):
    corpus, labels, _, tree, part, _ = pipeline
    fs = init_families(part, tree, at=AT)
    # locate the family holding each ground-truth label (the suggested cut
    # separates them 1:1 on this corpus)
    fam_of = {}
    for fam in fs.families:
        fam_labels = {labels[m] for m in fam.members}
        assert len(fam_labels) == 1
        fam_of[fam_labels.pop()] = fam
    trio = ["nippon-kami", "sefa", "port"]
    fs2 = merge_families(fs, tree, fam_of[trio[0]].id, fam_of[trio[1]].id, at=AT)
    first_merge_id = next(i for i in fs2.family_ids if i not in fs.family_ids)
    fs2 = merge_families(fs2, tree, first_merge_id, fam_of[trio[2]].id, at=AT)
    want = tuple(sorted(m for name in trio for m in fam_of[name].members))
    merged = next(f for f in fs2.families if f.members == want)
    assert set(merged.members) <= set(tree.node_members(merged.anchor))
    kids = tree.children(merged.anchor)
    assert kids is not None
    for child in kids:
        assert set(tree.node_members(child)) & set(merged.members)
    fs2.validate()


# --------------------------------------------------------------------------
# keep / rename / lineage / replay


def test_keep_and_rename():
    tree, fs = two_group_fs()
    fs = keep_family(fs, "f1", note="stable cluster", at=AT)
    assert fs.family("f1").notes == "stable cluster"
    fs = rename_family(fs, "f2", "deep-branch", at=AT)
    assert fs.family("f2").name == "deep-branch"
    assert [e.op for e in fs.history] == ["init", "keep", "rename"]
    with pytest.raises(NotFound):
        rename_family(fs, "zzz", "x")


def test_lineage_edge_recorded_and_validated():
    tree, fs = two_group_fs()
    fs = add_lineage_edge(
        fs, "f1", "f2", [("added", "download"), ("modified", "marker")], at=AT
    )
    assert fs.lineage_edges[0].src == "f1"
    assert fs.lineage_edges[0].changes == (("added", "download"), ("modified", "marker"))
    with pytest.raises(NotFound):
        add_lineage_edge(fs, "f1", "zzz", [("added", "x")])
    with pytest.raises(FamilyError):
        add_lineage_edge(fs, "f1", "f2", [("mutated", "x")])


def test_replay_reproduces_familyset():
    tree, fs = two_group_fs()
    fs = split_family(fs, tree, "f2", at=AT)
    fs = rename_family(fs, "f1", "alpha", at=AT)
    fs = merge_families(fs, tree, "f3", "f4", at=AT)
    fs = keep_family(fs, "f5", note="ok", at=AT)
    fs = add_lineage_edge(fs, "f1", "f5", [("removed", "probe")], at=AT)
    assert replay(tree, fs.history) == fs


def test_replay_requires_init():
    tree, fs = two_group_fs()
    with pytest.raises(FamilyError):
        replay(tree, fs.history[1:])
    with pytest.raises(FamilyError):
        replay(tree, [])


def test_random_refinements_keep_partition_total():
    tree = make_tree(
        (
            (((0, 1), (2, 3)), ((4, 5), (6, 7))),
            (((8, 9), (10, 11)), ((12, 13), (14, 15))),
        )
    )
    fs = init_families(singleton_partition(tree), tree, at=AT)
    rng = random.Random(7)
    for step in range(60):
        ids = fs.family_ids
        splittable = [f.id for f in fs.families if f.size >= 2]
        roll = rng.random()
        if len(ids) >= 2 and (roll < 0.5 or not splittable):
            a, b = rng.sample(ids, 2)
            fs = merge_families(fs, tree, a, b, at=AT)
        elif splittable:
            fs = split_family(fs, tree, rng.choice(splittable), at=AT)
        if step % 10 == 0:
            fs = rename_family(fs, rng.choice(fs.family_ids), f"n{step}", at=AT)
        fs.validate()  # partition totality after every operation
    assert replay(tree, fs.history) == fs
    for fmt in ("dot", "newick", "json"):
        assert export_lineage(fs, tree, None, fmt)


def test_save_load_roundtrip(tmp_path):
    tree, fs = two_group_fs()
    fs = rename_family(fs, "f1", "alpha", at=AT)
    fs = add_lineage_edge(fs, "f1", "f2", [("added", "x")], at=AT)
    path = tmp_path / "session.json"
    save_families(fs, path)
    assert load_families(path) == fs
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError):
        load_families(bad)


# --------------------------------------------------------------------------
# diff_templates


def toks(*xs):
    return [None if x is None else x.encode() for x in xs]


def test_diff_identical_is_empty():
    assert diff_templates(toks("A", "B"), toks("A", "B")) == []
    t = Template(slots=(b"cd", None, b"tmp"))
    assert diff_templates(t, t) == []


def test_diff_added_tail():
    out = diff_templates(toks("A", "B"), toks("A", "B", "C"))
    assert out == [DiffChange("added", added=(b"C",))]
    assert out[0].label == "+C"


def test_diff_modified_middle():
    out = diff_templates(toks("A", "X", "C"), toks("A", "Y", "C"))
    assert out == [DiffChange("modified", removed=(b"X",), added=(b"Y",))]
    assert out[0].label == "±X↔Y"


def test_diff_removed_and_placeholder_render():
    out = diff_templates(toks("A", "Z", None, "B"), toks("A", "B"))
    assert out == [DiffChange("removed", removed=(b"Z", None))]
    assert out[0].label == "-Z«*»"


def test_diff_antisymmetric_randomized():
    rng = random.Random(11)
    alphabet = [b"A", b"B", b"C", b"D", None]
    flip = {"added": "removed", "removed": "added", "modified": "modified"}
    for _ in range(300):
        a = [rng.choice(alphabet) for _ in range(rng.randrange(0, 8))]
        b = [rng.choice(alphabet) for _ in range(rng.randrange(0, 8))]
        fwd = diff_templates(a, b)
        rev = diff_templates(b, a)
        assert rev == [
            DiffChange(flip[c.kind], removed=c.added, added=c.removed) for c in fwd
        ]
        if list(a) == list(b):
            assert fwd == []


def test_diff_jsonable():
    out = diff_templates(toks("A"), toks("A", None))
    (change,) = out
    assert change.to_jsonable() == {"kind": "added", "removed": [], "added": [None]}


# --------------------------------------------------------------------------
# naming


def test_suggest_name_prefers_long_alnum_literal():
    t = Template(slots=(b"cd", b" /", b"tmp", None, b"busybox0"))
    assert suggest_name(t) == "busybox0"
    assert suggest_name(Template(slots=(None,))) == ""
    assert suggest_name(None) == ""


def test_suggest_name_on_pipeline_anchors(pipeline):
    _, _, _, tree, part, templates = pipeline
    for anchor in part.anchors:
        assert suggest_name(templates[anchor])


# --------------------------------------------------------------------------
# export_lineage


def test_export_single_family():
    tree = make_tree((0, 1))
    fs = init_families(subtree_partition(tree, [tree.root]), tree, at=AT)
    dot = export_lineage(fs, tree, None, "dot").decode()
    assert dot.count("shape=box") == 1
    assert "->" not in dot
    nwk = export_lineage(fs, tree, None, "newick").decode()
    assert nwk == "'f1':0;\n"
    data = json.loads(export_lineage(fs, tree, None, "json"))
    assert data["tree"]["kind"] == "family"


def test_export_rejects_unknown_format():
    tree, fs = two_group_fs()
    with pytest.raises(UnsupportedFormat):
        export_lineage(fs, tree, None, "svg")


def test_export_rejects_mismatched_tree():
    tree, fs = two_group_fs()
    other = make_tree((0, 1))
    with pytest.raises(Inconsistent):
        export_lineage(fs, other, None, "dot")


def build_annotated(pipeline):
    _, labels, _, tree, part, templates = pipeline
    fs = init_families(part, tree, at=AT)
    for fam in list(fs.families):
        label = labels[fam.members[0]]
        fs = rename_family(fs, fam.id, label, at=AT)
    ids = fs.family_ids
    fs = add_lineage_edge(
        fs, ids[0], ids[1], [("added", "wget"), ("removed", "probe"), ("modified", "marker")], at=AT
    )
    return fs, tree, templates


def test_export_dot_eight_terminals_stable(pipeline):
    fs, tree, templates = build_annotated(pipeline)
    dot = export_lineage(fs, tree, templates, "dot")
    again_fs, again_tree, again_templates = build_annotated(pipeline)
    assert export_lineage(again_fs, again_tree, again_templates, "dot") == dot
    text = dot.decode()
    assert text.count("shape=box") == 8
    assert text.count("style=dashed") == 1
    assert "+wget" in text and "-probe" in text and "±marker" in text
    for name in ("nippon-kami", "sefa", "port", "sofia"):
        assert f"{name}\\n" in text


def test_export_dot_escapes_labels():
    tree, fs = two_group_fs()
    fs = rename_family(fs, "f1", 'quo"te\\slash', at=AT)
    dot = export_lineage(fs, tree, None, "dot").decode()
    assert 'quo\\"te\\\\slash' in dot


def parse_newick(text: str):
    """Parse a single-quoted newick string into nested frozensets of names."""
    pos = 0

    def node():
        nonlocal pos
        if text[pos] == "(":
            pos += 1
            kids = [node()]
            while text[pos] == ",":
                pos += 1
                kids.append(node())
            assert text[pos] == ")"
            pos += 1
            skip_length()
            return frozenset().union(*[k if isinstance(k, frozenset) else frozenset([k]) for k in kids]), tuple(kids)
        assert text[pos] == "'"
        pos += 1
        name = ""
        while True:
            if text[pos] == "'":
                if pos + 1 < len(text) and text[pos + 1] == "'":
                    name += "'"
                    pos += 2
                    continue
                pos += 1
                break
            name += text[pos]
            pos += 1
        skip_length()
        return name

    def skip_length():
        nonlocal pos
        if pos < len(text) and text[pos] == ":":
            pos += 1
            while pos < len(text) and (text[pos].isdigit() or text[pos] in ".-+eE"):
                pos += 1

    root = node()
    assert text[pos] == ";"
    return root


def collect_clusters(parsed, out):
    if isinstance(parsed, str):
        return frozenset([parsed])
    names, kids = parsed
    got = frozenset()
    for k in kids:
        got |= collect_clusters(k, out)
    out.append(got)
    return got


def test_export_newick_roundtrip_matches_anchor_topology(pipeline):
    fs, tree, templates = build_annotated(pipeline)
    nwk = export_lineage(fs, tree, templates, "newick").decode()
    clusters: list[frozenset] = []
    names = collect_clusters(parse_newick(nwk), clusters)
    by_name = {f.name: f for f in fs.families}
    assert names == frozenset(by_name)
    # every parsed internal cluster must equal the set of families whose
    # anchors fall under the LCA of the cluster's anchors in the real tree
    from functools import reduce

    for cluster in clusters:
        lca = reduce(tree.lca, (by_name[n].anchor for n in cluster))
        under = set(tree.node_members(lca))
        expected = {
            f.name for f in fs.families if set(tree.node_members(f.anchor)) <= under
        }
        assert cluster == frozenset(expected)


def test_export_json_structure(pipeline):
    fs, tree, templates = build_annotated(pipeline)
    a = export_lineage(fs, tree, templates, "json")
    assert a == export_lineage(fs, tree, templates, "json")
    data = json.loads(a)
    assert len(data["families"]) == 8
    assert data["tree"]["kind"] == "join"
    assert data["lineage_edges"][0]["changes"][0] == ["added", "wget"]


def test_refinement_criteria_surface():
    assert len(REFINEMENT_CRITERIA) >= 3
    assert all(isinstance(c, str) and c for c in REFINEMENT_CRITERIA)
