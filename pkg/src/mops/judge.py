"""LLM-as-judge quality scoring: fascination, completeness, originality.

Judging always runs at temperature 0. Replies are expected to carry
``Score: <n>``; a bare integer is accepted as a fallback. Scores are
clamped to [0, 100] and aggregated as mean with population standard
deviation, plus Welch's t-test for corpus comparisons.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .gateway import CompletionRequest, Gateway, GatewayError
from .prompts import TemplateLibrary

log = logging.getLogger(__name__)

__all__ = [
    "PREMISE_DIMENSIONS",
    "STORY_TYPES",
    "ScoreParseError",
    "parse_score",
    "judge_tag",
    "QualityRecord",
    "score_premise",
    "score_story",
    "score_many",
    "DimensionStats",
    "AggregateReport",
    "aggregate",
    "significance_test",
    "write_scores",
    "read_scores",
]

PREMISE_DIMENSIONS = ("fascination", "completeness", "originality")
STORY_TYPES = ("novel", "script")

_LABELED = re.compile(r"score\s*[:：]\s*(-?\d+)", re.IGNORECASE)
_STANDALONE = re.compile(r"(?<![\w.])(-?\d+)(?!\.?\d)(?![A-Za-z_])")


class ScoreParseError(Exception):
    """No integer score could be recovered from a judge reply."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


def parse_score(reply: str) -> int:
    """First integer after ``Score:``, else the first standalone integer."""
    m = _LABELED.search(reply) or _STANDALONE.search(reply)
    if m is None:
        raise ScoreParseError("no integer score in reply", raw=reply)
    value = int(m.group(1))
    if not 0 <= value <= 100:
        clamped = min(max(value, 0), 100)
        log.warning("score %d outside [0, 100], clamped to %d", value, clamped)
        return clamped
    return value


def judge_tag(subject: str, dimension: str, item_id: str, attempt: int = 0) -> str:
    base = f"judge:{subject}:{dimension}:{item_id}"
    return base + (f":retry{attempt}" if attempt else "")


@dataclass(frozen=True)
class QualityRecord:
    item_id: str
    dimension: str
    score: int
    raw: str
    judge_model: str

    def to_record(self) -> dict:
        return {
            "id": self.item_id,
            "dimension": self.dimension,
            "score": self.score,
            "judge_model": self.judge_model,
        }


def _score_with_retry(
    gateway: Gateway,
    prompt: str,
    model: str,
    subject: str,
    dimension: str,
    item_id: str,
    max_tokens: int,
) -> tuple[int, str]:
    reply = ""
    for attempt in (0, 1):
        result = gateway.complete(
            CompletionRequest(
                model=model,
                prompt=prompt,
                temperature=0.0,
                max_tokens=max_tokens,
                tag=judge_tag(subject, dimension, item_id, attempt),
            )
        )
        reply = result.text
        try:
            return parse_score(reply), reply
        except ScoreParseError:
            continue
    raise ScoreParseError(f"unparseable {dimension} score after one re-ask", raw=reply)


def score_premise(
    gateway: Gateway,
    text: str,
    dimension: str,
    model: str,
    item_id: str = "",
    max_tokens: int = 128,
    templates: TemplateLibrary | None = None,
) -> QualityRecord:
    if dimension not in PREMISE_DIMENSIONS:
        raise ValueError(f"unknown premise dimension {dimension!r}")
    if not text.strip():
        raise ValueError("cannot score an empty premise")
    templates = templates or TemplateLibrary()
    prompt = templates.render(f"judge_premise_{dimension}", premise=text)
    score, raw = _score_with_retry(gateway, prompt, model, "premise", dimension, item_id, max_tokens)
    return QualityRecord(item_id, dimension, score, raw, model)


def score_story(
    gateway: Gateway,
    text: str,
    story_type: str,
    dimension: str,
    model: str,
    item_id: str = "",
    max_tokens: int = 128,
    templates: TemplateLibrary | None = None,
) -> QualityRecord:
    if story_type not in STORY_TYPES:
        raise ValueError(f"story_type must be one of {STORY_TYPES}, got {story_type!r}")
    if dimension not in PREMISE_DIMENSIONS:
        raise ValueError(f"unknown story dimension {dimension!r}")
    if not text.strip():
        raise ValueError("cannot score an empty story")
    templates = templates or TemplateLibrary()
    prompt = templates.render(f"judge_story_{dimension}", story=text, story_type=story_type)
    score, raw = _score_with_retry(gateway, prompt, model, story_type, dimension, item_id, max_tokens)
    return QualityRecord(item_id, dimension, score, raw, model)


def score_many(
    gateway: Gateway,
    items: Sequence[tuple[str, str]],
    dimensions: Sequence[str],
    model: str,
    max_workers: int | None = None,
    templates: TemplateLibrary | None = None,
) -> tuple[list[QualityRecord], list[tuple[str, str, str]]]:
    """Score (item_id, text) pairs on every dimension.

    Items whose score stays unparseable after the re-ask are excluded from
    the results and returned as (item_id, dimension, reason) misses.
    """
    templates = templates or TemplateLibrary()
    jobs = [(item_id, text, dim) for item_id, text in items for dim in dimensions]
    workers = max_workers or gateway.max_in_flight
    records: list[QualityRecord] = []
    missing: list[tuple[str, str, str]] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            (item_id, dim, pool.submit(score_premise, gateway, text, dim, model, item_id, 128, templates))
            for item_id, text, dim in jobs
        ]
        for item_id, dim, fut in futures:
            try:
                records.append(fut.result())
            except (ScoreParseError, GatewayError) as exc:
                missing.append((item_id, dim, f"{type(exc).__name__}: {exc}"))
                log.warning("scoring %s/%s failed: %s", item_id, dim, exc)
    return records, missing


@dataclass(frozen=True)
class DimensionStats:
    mean: float
    std: float
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "count": self.count}


@dataclass
class AggregateReport:
    """Per-dimension mean +/- population std, plus the cross-dimension average."""

    dimensions: dict[str, DimensionStats]
    average: DimensionStats
    p_values: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "dimensions": {k: v.to_dict() for k, v in sorted(self.dimensions.items())},
            "average": self.average.to_dict(),
        }
        if self.p_values:
            out["p_values"] = {k: dict(sorted(v.items())) for k, v in sorted(self.p_values.items())}
        return out


def _stats(values: Sequence[float]) -> DimensionStats:
    arr = np.asarray(values, dtype=np.float64)
    return DimensionStats(mean=float(arr.mean()), std=float(arr.std()), count=int(arr.size))


def aggregate(records: Sequence[QualityRecord]) -> AggregateReport:
    """Mean and population std per dimension; the average row is the per-item
    mean over items scored on every reported dimension."""
    if not records:
        raise ValueError("no quality records to aggregate")
    by_dim: dict[str, dict[str, int]] = {}
    for rec in records:
        by_dim.setdefault(rec.dimension, {})[rec.item_id] = rec.score
    dimensions = {dim: _stats(list(scores.values())) for dim, scores in by_dim.items()}

    dims = sorted(by_dim)
    complete_ids = sorted(set.intersection(*(set(by_dim[d]) for d in dims)))
    if complete_ids:
        per_item = [float(np.mean([by_dim[d][i] for d in dims])) for i in complete_ids]
        average = _stats(per_item)
    else:
        average = DimensionStats(
            mean=float(np.mean([s.mean for s in dimensions.values()])), std=0.0, count=0
        )
    return AggregateReport(dimensions=dimensions, average=average)


def significance_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Two-sided Welch's t-test p-value; symmetric in its arguments."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("significance test needs at least 2 values per sample")
    if a.var() == 0.0 and b.var() == 0.0:
        return 1.0 if a.mean() == b.mean() else 0.0
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)


def write_scores(records: Sequence[QualityRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_record(), ensure_ascii=False) + "\n")


def read_scores(path: str | Path) -> list[QualityRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(
            QualityRecord(
                item_id=str(obj["id"]),
                dimension=str(obj["dimension"]),
                score=int(obj["score"]),
                raw="",
                judge_model=str(obj.get("judge_model", "")),
            )
        )
    return records
