"""Deterministic generator of labeled synthetic loader-session corpora.

A family profile describes one bot-loader lineage as an ordered list of
behavior stages — initialize, get-working-directory, monopolize,
test-environment, drop-and-run — each a text template whose ``{slot}``
references are filled from per-log pseudo-random draws (value pools, digit
runs, lowercase runs, escaped-byte runs). Rendering is pure: the PRNG is a
Mersenne Twister seeded from the string ``"<family>:<seed>"`` (stable across
platforms and runs), so the same profile and seed always yield the same
request bytes, and two seeds differ only in slot values while the stage
skeleton stays fixed.

Eight profiles ship with the package (see ``specs/``); they only emit shell
command text — no payload binaries, no network side effects.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, RequestLog, corpus_from_logs

STAGES = (
    "initialize",
    "get-working-directory",
    "monopolize",
    "test-environment",
    "drop-and-run",
)

_SLOT_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")
_BASE_TIME = datetime(2021, 6, 1, tzinfo=timezone.utc)
_LOWER = "abcdefghijklmnopqrstuvwxyz"
_DIGITS = "0123456789"
_MAX_RERENDER = 64  # salt attempts before accepting a duplicate render


@dataclass(frozen=True)
class SlotSpec:
    """One variable slot: how to draw its per-log value."""

    kind: str  # "pool" | "digits" | "lower" | "escaped"
    values: tuple[str, ...] = ()
    length: int = 0

    @classmethod
    def from_dict(cls, name: str, data: dict) -> "SlotSpec":
        kinds = [k for k in ("pool", "digits", "lower", "escaped") if k in data]
        if len(kinds) != 1 or len(data) != 1:
            raise ValueError(f"slot {name!r}: expected exactly one of pool/digits/lower/escaped")
        kind = kinds[0]
        if kind == "pool":
            values = tuple(data["pool"])
            if not values or not all(isinstance(v, str) and v for v in values):
                raise ValueError(f"slot {name!r}: pool must be a non-empty list of non-empty strings")
            return cls(kind="pool", values=values)
        length = data[kind]
        if not isinstance(length, int) or length < 1:
            raise ValueError(f"slot {name!r}: {kind} length must be a positive integer")
        return cls(kind=kind, length=length)

    def draw(self, rng: random.Random) -> str:
        if self.kind == "pool":
            return rng.choice(self.values)
        if self.kind == "digits":
            return "".join(rng.choice(_DIGITS) for _ in range(self.length))
        if self.kind == "lower":
            return "".join(rng.choice(_LOWER) for _ in range(self.length))
        # escaped: text like \x6b, one per unit
        return "".join("\\x%02x" % rng.randrange(256) for _ in range(self.length))


@dataclass(frozen=True)
class StageSpec:
    stage: str
    template: str
    skip_probability: float = 0.0


@dataclass
class FamilySpec:
    """A named family profile: ordered stage templates plus slot definitions."""

    name: str
    stages: list[StageSpec] = field(default_factory=list)
    slots: dict[str, SlotSpec] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("family profile needs a name")
        if not self.stages:
            raise ValueError(f"{self.name}: needs at least one stage")
        last = -1
        referenced: set[str] = set()
        always_on = False
        for st in self.stages:
            if st.stage not in STAGES:
                raise ValueError(f"{self.name}: unknown stage {st.stage!r}")
            idx = STAGES.index(st.stage)
            if idx < last:
                raise ValueError(f"{self.name}: stages out of order at {st.stage!r}")
            last = idx
            if not 0.0 <= st.skip_probability <= 1.0:
                raise ValueError(f"{self.name}: skip_probability out of [0,1] at {st.stage!r}")
            if st.template and st.skip_probability == 0.0:
                always_on = True
            referenced.update(_SLOT_RE.findall(st.template))
        if not always_on:
            raise ValueError(f"{self.name}: every stage can be skipped; renders could be empty")
        undeclared = referenced - self.slots.keys()
        if undeclared:
            raise ValueError(f"{self.name}: undeclared slots {sorted(undeclared)}")
        unused = self.slots.keys() - referenced
        if unused:
            raise ValueError(f"{self.name}: declared but unused slots {sorted(unused)}")

    @classmethod
    def from_dict(cls, data: dict) -> "FamilySpec":
        extra = data.keys() - {"name", "stages", "slots"}
        if extra:
            raise ValueError(f"unknown family profile fields {sorted(extra)}")
        stages = [
            StageSpec(
                stage=st["stage"],
                template=st["template"],
                skip_probability=float(st.get("skip_probability", 0.0)),
            )
            for st in data.get("stages", [])
        ]
        slots = {
            name: SlotSpec.from_dict(name, spec) for name, spec in data.get("slots", {}).items()
        }
        return cls(name=data.get("name", ""), stages=stages, slots=slots)


def render(spec: FamilySpec, seed: int) -> RequestLog:
    """One synthetic session for this family; pure in (spec, seed).

    All slot values are drawn once up front (in declaration order) and reused
    at every occurrence, so a filename slot stays consistent within the log.
    """
    rng = random.Random(f"{spec.name}:{seed}")
    values = {name: slot.draw(rng) for name, slot in spec.slots.items()}
    parts: list[str] = []
    for st in spec.stages:
        if st.skip_probability > 0.0 and rng.random() < st.skip_probability:
            continue
        parts.append(_SLOT_RE.sub(lambda m: values[m.group(1)], st.template))
    raw = "".join(parts).encode("latin-1")
    captured_at = _BASE_TIME + timedelta(seconds=seed % 1_000_000_000)
    return RequestLog.make(raw=raw, source_host=f"{spec.name}-{seed}", captured_at=captured_at)


def generate_corpus(
    specs: Sequence[FamilySpec], per_family: int, seed: int = 0
) -> tuple[Corpus, list[str]]:
    """Labeled corpus of len(specs)*per_family logs, deterministic under seed.

    Renders are salted until distinct so downstream content-hash dedup cannot
    change the leaf count; labels align with corpus order.
    """
    if per_family < 1:
        raise ValueError("per_family must be >= 1")
    logs: list[RequestLog] = []
    labels: list[str] = []
    seen: set[str] = set()
    for spec in specs:
        for k in range(per_family):
            log = render(spec, seed + k)
            for salt in range(1, _MAX_RERENDER):
                if log.id not in seen:
                    break
                log = render(spec, seed + k + 1_000_003 * salt)
            seen.add(log.id)
            logs.append(log)
            labels.append(spec.name)
    provenance = f"synthetic: {len(specs)} families x {per_family} logs, seed {seed}"
    return corpus_from_logs(logs, provenance=provenance), labels


def bundled_spec_dir() -> Path:
    """Directory of the family profiles shipped inside the package."""
    return Path(str(resources.files("llt").joinpath("specs")))


def load_spec(path: str | Path) -> FamilySpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    try:
        return FamilySpec.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: bad family profile: {exc}") from exc


def load_specs(spec_dir: str | Path | None = None) -> list[FamilySpec]:
    """All *.json profiles of a directory, sorted by filename for stable order."""
    directory = Path(spec_dir) if spec_dir is not None else bundled_spec_dir()
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise ValueError(f"no family profiles (*.json) in {directory}")
    specs = [load_spec(p) for p in paths]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate family names in {directory}")
    return specs
