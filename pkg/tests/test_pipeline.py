"""Pipeline runs: artifact round-trips, stage errors, determinism."""

import json

import numpy as np
import pytest

from llt.corpus import corpus_from_logs, load_corpus, save_corpus
from llt.features import build_vocab, distance_matrix
from llt.pipeline import PipelineError, run_pipeline
from llt.session import (
    ARTIFACT_NAMES,
    MATRIX_MAGIC,
    PipelineConfig,
    load_session,
    manifest_hash,
    read_matrix,
    read_partition,
    read_templates,
    read_tree,
    read_vocab,
)
from llt.syngen import generate_corpus, load_specs
from llt.tokenizer import tokenize


@pytest.fixture(scope="module")
def session(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    corpus, labels = generate_corpus(load_specs(), per_family=25, seed=0)
    input_path = root / "input.jsonl"
    save_corpus(corpus, input_path)
    config = PipelineConfig(
        input_path=str(input_path), session_dir=str(root / "session")
    )
    out = run_pipeline(config)
    return root, config, out, corpus, labels


def test_config_validation_and_roundtrip():
    cfg = PipelineConfig(threshold=12.5, export_format="dot", seed=3)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        PipelineConfig(ngram_orders=(1, 2)).validate()
    with pytest.raises(ValueError):
        PipelineConfig(per_host_cap=0).validate()
    with pytest.raises(ValueError):
        PipelineConfig(export_format="svg").validate()
    with pytest.raises(ValueError):
        PipelineConfig(threshold=-1.0).validate()
    with pytest.raises(ValueError):
        PipelineConfig(match=-1.0).validate()


def test_run_writes_all_artifacts(session):
    _, _, out, _, _ = session
    for name in ARTIFACT_NAMES + ("manifest.json",):
        assert (out / name).is_file(), name


def test_two_hundred_logs_make_199_internal_templates(session):
    _, _, out, corpus, _ = session
    assert len(corpus.logs) == 200
    templates, _ = read_templates(out / "templates.json")
    tree, _ = read_tree(out / "tree.json")
    n = tree.n_leaves
    internal = [node for node in templates if node >= n]
    assert len(tree.merges) == n - 1 == 199
    assert len(internal) == n - 1
    assert len(templates) == 2 * n - 1  # leaves carry their own templates


def test_artifacts_roundtrip_exactly(session):
    _, config, out, _, _ = session
    corpus = load_corpus(out / "corpus.jsonl")
    seqs = [tokenize(log.raw) for log in corpus.logs]
    vocab, cfg = read_vocab(out / "vocab.json")
    assert cfg == config
    assert vocab == build_vocab(seqs)
    matrix, _ = read_matrix(out / "matrix.bin")
    assert np.allclose(matrix, distance_matrix(seqs, vocab), atol=0)
    assert (matrix == matrix.T).all()
    part, suggested, _ = read_partition(out / "partition.json")
    assert part.threshold == suggested  # config.threshold None -> suggested
    tree, _ = read_tree(out / "tree.json")
    assert tree.leaves == [log.id for log in corpus.logs]


def test_partition_recovers_families(session):
    _, _, out, corpus, labels = session
    part, _, _ = read_partition(out / "partition.json")
    by_id = {log.id: labels[i] for i, log in enumerate(corpus.logs)}
    session_corpus = load_corpus(out / "corpus.jsonl")
    assert len(part.groups) == 8
    for group in part.groups:
        group_labels = {by_id[session_corpus.logs[m].id] for m in group}
        assert len(group_labels) == 1


def test_load_session_and_hash_verification(session):
    _, config, out, _, _ = session
    loaded = load_session(out)
    assert loaded.config == config
    assert loaded.tree.n_leaves == len(loaded.corpus.logs) == 200
    assert loaded.partition.groups
    assert set(loaded.log_index) == {log.id for log in loaded.corpus.logs}


def test_load_session_rejects_corruption(tmp_path, session):
    _, _, out, _, _ = session
    import shutil

    dup = tmp_path / "copy"
    shutil.copytree(out, dup)
    blob = (dup / "templates.json").read_bytes()
    (dup / "templates.json").write_bytes(blob[:-2] + b" \n")
    with pytest.raises(ValueError, match="does not match"):
        load_session(dup)
    (dup / "templates.json").write_bytes(blob)
    (dup / "tree.json").unlink()
    with pytest.raises(ValueError, match="missing artifact"):
        load_session(dup)
    with pytest.raises(ValueError, match="manifest"):
        load_session(tmp_path)  # no manifest.json at all


def test_rerun_is_byte_identical(session):
    root, config, out, _, _ = session
    before = manifest_hash(out)
    hashes_before = json.loads((out / "manifest.json").read_text())["artifacts"]
    out2 = run_pipeline(config)
    assert out2 == out
    assert manifest_hash(out) == before
    hashes_after = json.loads((out / "manifest.json").read_text())["artifacts"]
    assert hashes_after == hashes_before


def test_empty_corpus_fails_with_stage(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    cfg = PipelineConfig(input_path=str(empty), session_dir=str(tmp_path / "s"))
    with pytest.raises(PipelineError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "load-corpus"
    assert "empty corpus" in str(err.value)


def test_missing_input_fails_with_stage(tmp_path):
    cfg = PipelineConfig(
        input_path=str(tmp_path / "nope.jsonl"), session_dir=str(tmp_path / "s")
    )
    with pytest.raises(PipelineError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "load-corpus"


def test_single_log_fails(tmp_path):
    corpus, _ = generate_corpus(load_specs()[:1], per_family=1, seed=0)
    path = tmp_path / "one.jsonl"
    save_corpus(corpus, path)
    cfg = PipelineConfig(input_path=str(path), session_dir=str(tmp_path / "s"))
    with pytest.raises(PipelineError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "load-corpus"


def test_matrix_binary_format(session, tmp_path):
    _, _, out, _, _ = session
    blob = (out / "matrix.bin").read_bytes()
    assert blob.startswith(MATRIX_MAGIC)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTAMATRIX" + blob)
    with pytest.raises(ValueError, match="magic"):
        read_matrix(bad)


def test_explicit_threshold_respected(tmp_path):
    corpus, _ = generate_corpus(load_specs()[:2], per_family=3, seed=1)
    path = tmp_path / "c.jsonl"
    save_corpus(corpus, path)
    cfg = PipelineConfig(
        input_path=str(path), session_dir=str(tmp_path / "s"), threshold=0.0
    )
    out = run_pipeline(cfg)
    part, suggested, _ = read_partition(out / "partition.json")
    assert part.threshold == 0.0
    assert len(part.groups) == 6  # every log its own group at threshold 0
    assert suggested > 0.0
