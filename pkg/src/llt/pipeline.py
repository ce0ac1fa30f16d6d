"""End-to-end batch pipeline: corpus file in, session directory out.

Stages run sequentially — prepare, tokenize, vectorize, cluster, templates,
write — and any failure is wrapped in :class:`PipelineError` carrying the
stage name, so callers can report exactly where a run died.
"""

from __future__ import annotations

from pathlib import Path

from .alignment import annotate_tree
from .clustering import agglomerate, cut, suggest_threshold
from .corpus import dedup, load_corpus, sample_per_host, save_corpus
from .features import build_vocab, distance_matrix
from .session import (
    PipelineConfig,
    write_manifest,
    write_matrix,
    write_partition,
    write_templates,
    write_tree,
    write_vocab,
)
from .tokenizer import tokenize


class PipelineError(RuntimeError):
    """A pipeline stage failed; `.stage` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message


def run_pipeline(config: PipelineConfig) -> Path:
    """Run every stage and return the session directory path."""
    try:
        config.validate()
    except ValueError as exc:
        raise PipelineError("config", str(exc)) from exc

    try:
        corpus = load_corpus(config.input_path)
        corpus = dedup(sample_per_host(corpus, config.per_host_cap))
    except PipelineError:
        raise
    except (OSError, ValueError) as exc:
        raise PipelineError("load-corpus", str(exc)) from exc
    if not corpus.logs:
        raise PipelineError("load-corpus", "empty corpus")
    if len(corpus.logs) < 2:
        raise PipelineError("load-corpus", "need at least 2 logs to cluster")

    try:
        seqs = [tokenize(log.raw) for log in corpus.logs]
    except Exception as exc:
        raise PipelineError("tokenize", str(exc)) from exc

    try:
        vocab = build_vocab(seqs)
        matrix = distance_matrix(seqs, vocab)
    except Exception as exc:
        raise PipelineError("vectorize", str(exc)) from exc

    try:
        tree = agglomerate(matrix, leaf_ids=[log.id for log in corpus.logs])
        suggested = suggest_threshold(tree)
        threshold = suggested if config.threshold is None else config.threshold
        part = cut(tree, threshold)
    except Exception as exc:
        raise PipelineError("cluster", str(exc)) from exc

    try:
        templates = annotate_tree(tree, seqs, config.scoring())
    except Exception as exc:
        raise PipelineError("templates", str(exc)) from exc

    try:
        out = Path(config.session_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_corpus(corpus, out / "corpus.jsonl")
        write_vocab(out / "vocab.json", vocab, config)
        write_matrix(out / "matrix.bin", matrix, config)
        write_tree(out / "tree.json", tree, config)
        write_templates(out / "templates.json", templates, config)
        write_partition(out / "partition.json", part, suggested, config)
        write_manifest(out, config)
    except OSError as exc:
        raise PipelineError("write", str(exc)) from exc
    return out
