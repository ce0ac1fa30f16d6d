"""HTTP service: reads, refinement mutations, revision conflicts, durability."""

import base64
import json
import shutil

import pytest
from fastapi.testclient import TestClient

from llt.corpus import load_corpus, save_corpus
from llt.pipeline import run_pipeline
from llt.service import create_app, parse_bind
from llt.session import PipelineConfig, read_templates
from llt.syngen import generate_corpus, load_specs


@pytest.fixture(scope="module")
def base_session(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    corpus, labels = generate_corpus(load_specs(), per_family=6, seed=3)
    save_corpus(corpus, root / "input.jsonl")
    config = PipelineConfig(
        input_path=str(root / "input.jsonl"), session_dir=str(root / "session")
    )
    out = run_pipeline(config)
    return out


@pytest.fixture
def session_dir(base_session, tmp_path):
    dup = tmp_path / "session"
    shutil.copytree(base_session, dup)
    return dup


@pytest.fixture
def client(session_dir):
    return TestClient(create_app(session_dir))


def test_corpus_listing_and_detail(client, session_dir):
    listing = client.get("/api/corpus").json()
    assert listing["count"] == 48 == len(listing["logs"])
    entry = listing["logs"][0]
    detail = client.get(f"/api/corpus/{entry['id']}").json()
    corpus = load_corpus(session_dir / "corpus.jsonl")
    assert base64.b64decode(detail["raw_b64"]) == corpus.logs[detail["leaf"]].raw
    assert detail["source_host"] == entry["source_host"]
    assert client.get("/api/corpus/deadbeef").status_code == 404


def test_dendrogram_rows_and_pagination(client):
    body = client.get("/api/dendrogram").json()
    assert body["n_leaves"] == 48
    assert body["total_merges"] == 47 == len(body["merges"])
    assert body["suggested_threshold"] > 0
    page = client.get("/api/dendrogram", params={"offset": 40, "limit": 10}).json()
    assert len(page["merges"]) == 7
    assert page["merges"][0] == body["merges"][40]
    assert client.get("/api/dendrogram", params={"limit": 0}).status_code == 400


def test_template_matches_artifact_dump(client, session_dir):
    templates, _ = read_templates(session_dir / "templates.json")
    for node in (0, 5, 48, 93, 94):
        body = client.get(f"/api/cluster/{node}/template").json()
        assert body["slots"] == templates[node].to_jsonable()
        assert body["rendered"] == templates[node].render()
    assert client.get("/api/cluster/95/template").status_code == 404
    assert client.get("/api/cluster/-1/template").status_code == 404


def test_members_endpoint(client):
    leaf = client.get("/api/cluster/3/members").json()
    assert leaf["members"] == [3] and leaf["size"] == 1
    root = client.get("/api/cluster/94/members").json()
    assert root["size"] == 48
    assert len(root["ids"]) == 48


def test_partition_endpoint(client):
    default = client.get("/api/partition").json()
    assert default["threshold"] == default["suggested"]
    assert len(default["groups"]) == 8
    assert len(default["labels"]) == 48
    singletons = client.get("/api/partition", params={"threshold": 0}).json()
    assert len(singletons["groups"]) == 48
    one = client.get("/api/partition", params={"threshold": 1e9}).json()
    assert len(one["groups"]) == 1
    assert client.get("/api/partition", params={"threshold": -1}).status_code == 400


def test_criteria_verbatim(client):
    from llt.families import REFINEMENT_CRITERIA

    assert client.get("/api/criteria").json() == {"criteria": list(REFINEMENT_CRITERIA)}


def test_diff_endpoint(client):
    fams = _init(client)
    a, b = fams["families"][0]["anchor"], fams["families"][1]["anchor"]
    body = client.get("/api/diff", params={"a": a, "b": b}).json()
    assert body["changes"], "different families must show template changes"
    for change in body["changes"]:
        assert change["kind"] in ("added", "removed", "modified")
        assert change["label"]
    same = client.get("/api/diff", params={"a": a, "b": a}).json()
    assert same["changes"] == []
    assert client.get("/api/diff", params={"a": a, "b": 999}).status_code == 404


def _init(client, threshold=None, revision=0):
    body = {"revision": revision}
    if threshold is not None:
        body["threshold"] = threshold
    resp = client.post("/api/families/init", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_families_lifecycle(client):
    state = client.get("/api/families").json()
    assert state == {
        "revision": 0,
        "initialized": False,
        "families": [],
        "lineage_edges": [],
        "history_len": 0,
    }
    # mutations before init conflict
    assert (
        client.post("/api/families/merge", json={"revision": 0, "a": "f1", "b": "f2"}).status_code
        == 409
    )

    fams = _init(client)
    assert fams["revision"] == 1
    assert len(fams["families"]) == 8
    ids = [f["id"] for f in fams["families"]]

    merged = client.post(
        "/api/families/merge", json={"revision": 1, "a": ids[0], "b": ids[1]}
    ).json()
    assert merged["revision"] == 2
    assert len(merged["families"]) == 7
    new_id = next(f["id"] for f in merged["families"] if f["id"] not in ids)

    split = client.post("/api/families/split", json={"revision": 2, "a": new_id}).json()
    assert split["revision"] == 3
    assert len(split["families"]) == 8

    renamed = client.post(
        f"/api/families/{split['families'][0]['id']}/rename",
        json={"revision": 3, "name": "alpha-loader"},
    ).json()
    assert renamed["families"][0]["name"] == "alpha-loader"
    assert renamed["families"][0]["display_name"] == "alpha-loader"

    kept = client.post(
        f"/api/families/{renamed['families'][0]['id']}/keep",
        json={"revision": 4, "note": "reviewed"},
    ).json()
    assert kept["families"][0]["notes"] == "reviewed"

    edge = client.post(
        "/api/lineage/edge",
        json={
            "revision": 5,
            "src": kept["families"][0]["id"],
            "dst": kept["families"][1]["id"],
            "changes": [["added", "wget"], ["modified", "marker"]],
        },
    ).json()
    assert edge["revision"] == 6
    assert edge["lineage_edges"] == [
        {
            "src": kept["families"][0]["id"],
            "dst": kept["families"][1]["id"],
            "changes": [["added", "wget"], ["modified", "marker"]],
        }
    ]


def test_stale_revision_conflicts(client):
    _init(client)
    fams = client.get("/api/families").json()
    ids = [f["id"] for f in fams["families"]]
    ok = client.post("/api/families/merge", json={"revision": 1, "a": ids[0], "b": ids[1]})
    assert ok.status_code == 200
    stale = client.post("/api/families/merge", json={"revision": 1, "a": ids[2], "b": ids[3]})
    assert stale.status_code == 409
    assert "stale revision" in stale.json()["detail"]
    after = client.get("/api/families").json()
    assert after["revision"] == 2
    assert len(after["families"]) == 7  # the stale mutation changed nothing


def test_validation_errors(client):
    _init(client, threshold=0.0)  # 48 singleton families anchored at leaves
    fams = client.get("/api/families").json()
    assert len(fams["families"]) == 48
    resp = client.post(
        "/api/families/split", json={"revision": 1, "a": fams["families"][0]["id"]}
    )
    assert resp.status_code == 400
    assert "cannot be split" in resp.json()["detail"]
    resp = client.post("/api/families/merge", json={"revision": 1, "a": "f1", "b": "zzz"})
    assert resp.status_code == 404
    resp = client.post(
        "/api/families/init", json={"revision": 1, "threshold": -3.0}
    )
    assert resp.status_code == 400


def test_reinit_allowed_with_current_revision(client):
    _init(client)
    again = _init(client, threshold=0.0, revision=1)
    assert again["revision"] == 2
    assert len(again["families"]) == 48


def test_export_formats(client):
    fams = _init(client)
    fid = fams["families"][0]["id"]
    client.post(f"/api/families/{fid}/rename", json={"revision": 1, "name": "zeta"})
    dot = client.get("/api/export", params={"format": "dot"})
    assert dot.status_code == 200
    assert dot.headers["content-type"].startswith("text/vnd.graphviz")
    assert "zeta" in dot.text and "shape=box" in dot.text
    nwk = client.get("/api/export", params={"format": "newick"})
    assert nwk.text.endswith(";\n")
    exported = client.get("/api/export", params={"format": "json"})
    assert len(json.loads(exported.content)["families"]) == 8
    assert client.get("/api/export", params={"format": "svg"}).status_code == 400


def test_export_requires_families(client):
    assert client.get("/api/export", params={"format": "dot"}).status_code == 409


def test_state_survives_restart(session_dir):
    client = TestClient(create_app(session_dir))
    fams = _init(client)
    ids = [f["id"] for f in fams["families"]]
    client.post("/api/families/merge", json={"revision": 1, "a": ids[0], "b": ids[1]})
    client.post(f"/api/families/{ids[2]}/rename", json={"revision": 2, "name": "persisted"})

    reopened = TestClient(create_app(session_dir))
    state = reopened.get("/api/families").json()
    assert state["revision"] == 3
    assert len(state["families"]) == 7
    assert any(f["name"] == "persisted" for f in state["families"])


def test_corrupt_family_state_refuses_start(session_dir):
    client = TestClient(create_app(session_dir))
    _init(client)
    (session_dir / "families.json").write_text("{broken")
    with pytest.raises(ValueError, match="corrupt family state"):
        create_app(session_dir)


def test_corrupt_session_refuses_start(session_dir):
    blob = (session_dir / "tree.json").read_bytes()
    (session_dir / "tree.json").write_bytes(blob[:-2] + b" \n")
    with pytest.raises(ValueError, match="does not match"):
        create_app(session_dir)


def test_reads_pure_at_fixed_revision(client):
    _init(client)
    assert client.get("/api/families").content == client.get("/api/families").content
    assert client.get("/api/dendrogram").content == client.get("/api/dendrogram").content


def test_create_app_needs_session_dir(monkeypatch):
    monkeypatch.delenv("LLT_SESSION_DIR", raising=False)
    with pytest.raises(ValueError, match="LLT_SESSION_DIR"):
        create_app(None)


def test_parse_bind():
    assert parse_bind("127.0.0.1:8321") == ("127.0.0.1", 8321)
    assert parse_bind("0.0.0.0:80") == ("0.0.0.0", 80)
    with pytest.raises(ValueError):
        parse_bind("8080")
    with pytest.raises(ValueError):
        parse_bind("host:port")
