"""Premise corpus files.

Two interchangeable on-disk forms: ``records`` (JSON lines with id,
design_id, text, verified, discarded_reason) and ``plain`` (one premise per
line, kept premises only), the latter for corpora that come from elsewhere.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .tree import ModuleKind

__all__ = ["PremiseRecord", "premise_id_for", "write_corpus", "read_corpus", "CorpusFormatError"]

_PREMISE_NS = uuid.uuid5(uuid.NAMESPACE_URL, "mops://premise")


class CorpusFormatError(Exception):
    """Corpus file could not be interpreted."""


def premise_id_for(design_id: str, masks: Iterable[ModuleKind] = ()) -> str:
    """Deterministic premise id; masked variants of a design get distinct ids."""
    suffix = "+".join(sorted(k.label for k in masks))
    return str(uuid.uuid5(_PREMISE_NS, f"{design_id}|{suffix}"))


@dataclass(frozen=True)
class PremiseRecord:
    """One synthesized premise with its verification outcome.

    ``model``/``temperature`` are in-memory provenance only; the corpus file
    carries just the id, design id, text, and verification fields.
    """

    id: str
    design_id: str
    text: str
    verified: bool
    discarded_reason: str | None = None
    model: str = ""
    temperature: float | None = None

    def to_record(self) -> dict:
        rec: dict = {
            "id": self.id,
            "design_id": self.design_id,
            "text": self.text,
            "verified": self.verified,
        }
        if self.discarded_reason is not None:
            rec["discarded_reason"] = self.discarded_reason
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "PremiseRecord":
        try:
            return cls(
                id=str(rec["id"]),
                design_id=str(rec.get("design_id", "")),
                text=str(rec["text"]),
                verified=bool(rec.get("verified", True)),
                discarded_reason=rec.get("discarded_reason"),
            )
        except KeyError as exc:
            raise CorpusFormatError(f"corpus record missing field {exc.args[0]!r}: {rec}") from None


def write_corpus(records: Sequence[PremiseRecord], path: str | Path, fmt: str = "records") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "records":
        with path.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec.to_record(), ensure_ascii=False) + "\n")
    elif fmt == "plain":
        kept = [r.text.replace("\n", " ").strip() for r in records if r.verified]
        path.write_text("".join(line + "\n" for line in kept), encoding="utf-8")
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")


def read_corpus(path: str | Path) -> list[PremiseRecord]:
    """Load a corpus file, accepting both the records and plain forms.

    Plain lines get synthetic ids (``L00001``, ...) so downstream scoring and
    curation can reference them.
    """
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        return []

    def as_record(line: str) -> dict | None:
        if not line.lstrip().startswith("{"):
            return None
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            return None
        return obj if isinstance(obj, dict) and "text" in obj else None

    first = as_record(lines[0])
    if first is None:
        return [
            PremiseRecord(id=f"L{i:05d}", design_id="", text=line.strip(), verified=True)
            for i, line in enumerate(lines, start=1)
        ]

    records = []
    for i, line in enumerate(lines, start=1):
        obj = as_record(line)
        if obj is None:
            raise CorpusFormatError(f"{path}: line {i} is not a premise record")
        records.append(PremiseRecord.from_record(obj))
    return records
