"""Analysis session directory: run configuration and artifact files.

A pipeline run materializes as a directory of restartable, diffable artifacts:

    corpus.jsonl     the analyzed request logs (interchange line format)
    vocab.json       n-gram vocabulary in first-occurrence order
    matrix.bin       condensed pairwise distance matrix (binary)
    tree.json        dendrogram merge table
    templates.json   per-node templates (leaves and internal nodes)
    partition.json   preliminary cut at the configured/suggested threshold
    manifest.json    config + sha256 of every artifact

Every JSON artifact embeds the run configuration under a "config" key;
matrix.bin carries it in its binary header.  The manifest ties the set
together, so two runs agree end-to-end exactly when their manifest bytes
agree.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alignment import Scoring, Template
from .clustering import Dendrogram, Partition
from .corpus import Corpus, load_corpus
from .features import Vocabulary

MATRIX_MAGIC = b"LLTMAT1\n"

ARTIFACT_NAMES = (
    "corpus.jsonl",
    "vocab.json",
    "matrix.bin",
    "tree.json",
    "templates.json",
    "partition.json",
)

EXPORT_FORMATS = ("dot", "newick", "json")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs; embedded into each artifact it writes."""

    input_path: str = ""
    session_dir: str = ""
    per_host_cap: int = 20
    ngram_orders: tuple[int, ...] = (1, 2, 3)
    match: float = 1.0
    mismatch: float = -1.0
    gap: float = -1.0
    threshold: float | None = None  # None: use the suggested threshold
    export_format: str = "json"
    seed: int = 0

    def validate(self) -> None:
        if tuple(self.ngram_orders) != (1, 2, 3):
            raise ValueError("ngram_orders is fixed to (1, 2, 3) in this version")
        if self.per_host_cap < 1:
            raise ValueError("per_host_cap must be >= 1")
        if self.export_format not in EXPORT_FORMATS:
            raise ValueError(f"export_format must be one of {EXPORT_FORMATS}")
        if self.threshold is not None and self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        self.scoring()  # bounds-checked by Scoring itself

    def scoring(self) -> Scoring:
        return Scoring(match=self.match, mismatch=self.mismatch, gap=self.gap)

    def to_dict(self) -> dict:
        return {
            "input_path": self.input_path,
            "session_dir": self.session_dir,
            "per_host_cap": self.per_host_cap,
            "ngram_orders": list(self.ngram_orders),
            "match": self.match,
            "mismatch": self.mismatch,
            "gap": self.gap,
            "threshold": self.threshold,
            "export_format": self.export_format,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        cfg = cls(
            input_path=str(data.get("input_path", "")),
            session_dir=str(data.get("session_dir", "")),
            per_host_cap=int(data.get("per_host_cap", 20)),
            ngram_orders=tuple(data.get("ngram_orders", (1, 2, 3))),
            match=float(data.get("match", 1.0)),
            mismatch=float(data.get("mismatch", -1.0)),
            gap=float(data.get("gap", -1.0)),
            threshold=None if data.get("threshold") is None else float(data["threshold"]),
            export_format=str(data.get("export_format", "json")),
            seed=int(data.get("seed", 0)),
        )
        cfg.validate()
        return cfg


def _dump_json(payload: dict) -> bytes:
    return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read artifact {path}: {exc}") from exc


def write_vocab(path: str | Path, vocab: Vocabulary, config: PipelineConfig) -> None:
    payload = {"config": config.to_dict(), "vocabulary": vocab.to_dict()}
    Path(path).write_bytes(_dump_json(payload))


def read_vocab(path: str | Path) -> tuple[Vocabulary, PipelineConfig]:
    data = _read_json(Path(path))
    return Vocabulary.from_dict(data["vocabulary"]), PipelineConfig.from_dict(data["config"])


def write_matrix(path: str | Path, matrix: np.ndarray, config: PipelineConfig) -> None:
    """Binary matrix artifact: magic, header length, JSON header, condensed data."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 2:
        n = m.shape[0]
        condensed = m[np.triu_indices(n, 1)]
    elif m.ndim == 1:
        k = len(m)
        n = int(round((1 + (1 + 8 * k) ** 0.5) / 2))
        if n * (n - 1) // 2 != k:
            raise ValueError(f"condensed length {k} is not n*(n-1)/2 for any n")
        condensed = m
    else:
        raise ValueError("matrix must be square or condensed 1-D")
    header = _dump_json({"config": config.to_dict(), "n": n, "dtype": "float64-le"})
    with Path(path).open("wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(condensed.astype("<f8").tobytes())


def read_matrix(path: str | Path) -> tuple[np.ndarray, PipelineConfig]:
    """Returns the full square matrix and the embedded config."""
    p = Path(path)
    blob = p.read_bytes()
    if not blob.startswith(MATRIX_MAGIC):
        raise ValueError(f"{p}: not a matrix artifact (bad magic)")
    off = len(MATRIX_MAGIC)
    (hlen,) = struct.unpack_from("<Q", blob, off)
    off += 8
    header = json.loads(blob[off : off + hlen])
    off += hlen
    n = int(header["n"])
    want = n * (n - 1) // 2
    condensed = np.frombuffer(blob, dtype="<f8", offset=off)
    if len(condensed) != want:
        raise ValueError(f"{p}: expected {want} distances, found {len(condensed)}")
    square = np.zeros((n, n), dtype=np.float64)
    iu = np.triu_indices(n, 1)
    square[iu] = condensed
    square[(iu[1], iu[0])] = condensed
    return square, PipelineConfig.from_dict(header["config"])


def write_tree(path: str | Path, tree: Dendrogram, config: PipelineConfig) -> None:
    payload = {"config": config.to_dict(), "tree": tree.to_dict()}
    Path(path).write_bytes(_dump_json(payload))


def read_tree(path: str | Path) -> tuple[Dendrogram, PipelineConfig]:
    data = _read_json(Path(path))
    return Dendrogram.from_dict(data["tree"]), PipelineConfig.from_dict(data["config"])


def write_templates(
    path: str | Path, templates: dict[int, Template], config: PipelineConfig
) -> None:
    payload = {
        "config": config.to_dict(),
        "templates": {str(node): tpl.to_jsonable() for node, tpl in sorted(templates.items())},
    }
    Path(path).write_bytes(_dump_json(payload))


def read_templates(path: str | Path) -> tuple[dict[int, Template], PipelineConfig]:
    data = _read_json(Path(path))
    templates = {
        int(node): Template.from_jsonable(slots, origin=int(node))
        for node, slots in data["templates"].items()
    }
    return templates, PipelineConfig.from_dict(data["config"])


def write_partition(
    path: str | Path, part: Partition, suggested: float, config: PipelineConfig
) -> None:
    payload = {
        "config": config.to_dict(),
        "threshold": part.threshold,
        "suggested": suggested,
        "groups": [list(g) for g in part.groups],
        "anchors": list(part.anchors),
    }
    Path(path).write_bytes(_dump_json(payload))


def read_partition(path: str | Path) -> tuple[Partition, float, PipelineConfig]:
    data = _read_json(Path(path))
    part = Partition(
        threshold=float(data["threshold"]),
        groups=[list(map(int, g)) for g in data["groups"]],
        anchors=[int(a) for a in data["anchors"]],
    )
    return part, float(data["suggested"]), PipelineConfig.from_dict(data["config"])


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(session_dir: str | Path, config: PipelineConfig) -> Path:
    session_dir = Path(session_dir)
    artifacts = {}
    for name in ARTIFACT_NAMES:
        p = session_dir / name
        if not p.is_file():
            raise ValueError(f"missing artifact {name} in {session_dir}")
        artifacts[name] = file_sha256(p)
    path = session_dir / "manifest.json"
    path.write_bytes(_dump_json({"config": config.to_dict(), "artifacts": artifacts}))
    return path


def manifest_hash(session_dir: str | Path) -> str:
    return file_sha256(Path(session_dir) / "manifest.json")


@dataclass
class AnalysisSession:
    """Loaded, hash-verified view of a session directory."""

    directory: Path
    config: PipelineConfig
    corpus: Corpus
    tree: Dendrogram
    templates: dict[int, Template]
    partition: Partition
    suggested: float
    log_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.log_index:
            self.log_index = {log.id: i for i, log in enumerate(self.corpus.logs)}


def load_session(session_dir: str | Path) -> AnalysisSession:
    """Load a session directory, verifying every artifact against the manifest."""
    directory = Path(session_dir)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise ValueError(f"{directory}: no manifest.json (not a session directory)")
    manifest = _read_json(manifest_path)
    config = PipelineConfig.from_dict(manifest["config"])
    for name, recorded in sorted(manifest["artifacts"].items()):
        p = directory / name
        if not p.is_file():
            raise ValueError(f"{directory}: manifest lists missing artifact {name}")
        actual = file_sha256(p)
        if actual != recorded:
            raise ValueError(
                f"{directory}/{name}: artifact hash {actual[:12]} does not match "
                f"manifest {recorded[:12]} (corrupt session)"
            )
    corpus = load_corpus(directory / "corpus.jsonl")
    tree, _ = read_tree(directory / "tree.json")
    templates, _ = read_templates(directory / "templates.json")
    partition, suggested, _ = read_partition(directory / "partition.json")
    if tree.n_leaves != len(corpus.logs):
        raise ValueError(f"{directory}: tree has {tree.n_leaves} leaves for {len(corpus.logs)} logs")
    return AnalysisSession(
        directory=directory,
        config=config,
        corpus=corpus,
        tree=tree,
        templates=templates,
        partition=partition,
        suggested=suggested,
    )
