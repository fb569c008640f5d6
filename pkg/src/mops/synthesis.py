"""Premise synthesis and self-verification.

A design's six component texts (masked ones empty) are melded into a single
premise sentence, then the model is asked whether the sentence contains
obvious inconsistencies or factual errors; flagged premises are discarded.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import PremiseRecord, premise_id_for, read_corpus
from .gateway import CompletionRequest, Gateway, GatewayError
from .prompts import TemplateLibrary
from .tree import KIND_ORDER, ModuleKind, PremiseDesign

log = logging.getLogger(__name__)

__all__ = [
    "SynthesisError",
    "Verdict",
    "parse_verdict",
    "synthesis_tag",
    "verify_tag",
    "render_synthesis_prompt",
    "synthesize",
    "verify",
    "CorpusSummary",
    "synthesize_corpus",
]

_YES = re.compile(r"\[\[\s*yes\s*\]\]", re.IGNORECASE)
_NO = re.compile(r"\[\[\s*no\s*\]\]", re.IGNORECASE)


class SynthesisError(Exception):
    """Synthesis produced no usable premise."""


@dataclass(frozen=True)
class Verdict:
    """Verification outcome. ``discard`` wins if a reply carries both markers."""

    decision: str  # "keep" | "discard" | "unparseable"
    raw: str


def parse_verdict(reply: str) -> Verdict:
    if _YES.search(reply):
        return Verdict("discard", reply)
    if _NO.search(reply):
        return Verdict("keep", reply)
    return Verdict("unparseable", reply)


def synthesis_tag(design: PremiseDesign) -> str:
    suffix = "+".join(sorted(k.label for k in design.masks))
    return f"synthesize:{design.design_id}" + (f":m={suffix}" if suffix else "")


def verify_tag(premise_id: str, attempt: int = 0) -> str:
    return f"verify:{premise_id}" + (f":retry{attempt}" if attempt else "")


def render_synthesis_prompt(design: PremiseDesign, templates: TemplateLibrary | None = None) -> str:
    templates = templates or TemplateLibrary()
    return templates.render("synthesize", **{k.label: design.text(k) for k in KIND_ORDER})


def synthesize(
    gateway: Gateway,
    design: PremiseDesign,
    model: str,
    temperature: float = 0.7,
    max_tokens: int = 256,
    templates: TemplateLibrary | None = None,
) -> str:
    prompt = render_synthesis_prompt(design, templates)
    result = gateway.complete(
        CompletionRequest(
            model=model,
            prompt=prompt,
            temperature=temperature,
            max_tokens=max_tokens,
            tag=synthesis_tag(design),
        )
    )
    text = result.text.strip()
    if not text:
        raise SynthesisError(f"empty synthesis reply for design {design.design_id}")
    return text


def verify(
    gateway: Gateway,
    premise_text: str,
    model: str,
    tag_base: str,
    max_tokens: int = 64,
    templates: TemplateLibrary | None = None,
) -> Verdict:
    """Self-verification at temperature 0, with one re-ask on an unparseable reply."""
    if not premise_text.strip():
        raise ValueError("cannot verify an empty premise")
    templates = templates or TemplateLibrary()
    prompt = templates.render("verify", premise=premise_text)
    for attempt in (0, 1):
        result = gateway.complete(
            CompletionRequest(
                model=model,
                prompt=prompt,
                temperature=0.0,
                max_tokens=max_tokens,
                tag=verify_tag(tag_base, attempt),
            )
        )
        verdict = parse_verdict(result.text)
        if verdict.decision != "unparseable":
            return verdict
    return verdict


@dataclass
class CorpusSummary:
    kept: int = 0
    discarded: int = 0
    unparseable: int = 0
    errored: int = 0
    skipped: int = 0
    all_masked: list[str] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def processed(self) -> int:
        return self.kept + self.discarded + self.unparseable + self.errored

    def to_dict(self) -> dict:
        return {
            "kept": self.kept,
            "discarded": self.discarded,
            "unparseable": self.unparseable,
            "errored": self.errored,
            "skipped": self.skipped,
            "all_masked_designs": sorted(self.all_masked),
            "errors": dict(sorted(self.errors.items())),
        }


def synthesize_corpus(
    gateway: Gateway,
    designs: Sequence[PremiseDesign],
    out_path: str | Path,
    synthesis_model: str,
    verification_model: str | None = None,
    synthesis_temperature: float = 0.7,
    max_tokens: int = 256,
    templates: TemplateLibrary | None = None,
    max_workers: int | None = None,
    resume: bool = False,
) -> CorpusSummary:
    """Synthesize and verify every design, streaming records to ``out_path``.

    Records are written in design order as soon as each one finishes, so an
    interruption loses at most the in-flight items. With ``resume`` the
    designs already present in the output file are skipped, which makes
    reruns idempotent.
    """
    if not designs:
        raise ValueError("no designs to synthesize")
    templates = templates or TemplateLibrary()
    verification_model = verification_model or synthesis_model
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    summary = CorpusSummary()
    done: set[str] = set()
    if resume and out_path.exists():
        done = {r.design_id for r in read_corpus(out_path)}

    todo = []
    for design in designs:
        if design.design_id in done:
            summary.skipped += 1
            continue
        todo.append(design)
        if all(k in design.masks for k in KIND_ORDER):
            summary.all_masked.append(design.design_id)
            log.warning("design %s is fully masked; synthesizing anyway", design.design_id)

    def run_one(design: PremiseDesign) -> PremiseRecord:
        pid = premise_id_for(design.design_id, design.masks)
        text = synthesize(
            gateway, design, synthesis_model, synthesis_temperature, max_tokens, templates
        )
        verdict = verify(gateway, text, verification_model, pid, templates=templates)
        if verdict.decision == "keep":
            return PremiseRecord(pid, design.design_id, text, True,
                                 model=synthesis_model, temperature=synthesis_temperature)
        reason = ("unparseable verdict: " if verdict.decision == "unparseable" else "") + verdict.raw.strip()
        return PremiseRecord(pid, design.design_id, text, False, discarded_reason=reason,
                             model=synthesis_model, temperature=synthesis_temperature)

    workers = max_workers or gateway.max_in_flight
    mode = "a" if (resume and out_path.exists()) else "w"
    with out_path.open(mode, encoding="utf-8") as fh, ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(d, pool.submit(run_one, d)) for d in todo]
        for design, fut in futures:
            try:
                record = fut.result()
            except (GatewayError, SynthesisError) as exc:
                summary.errored += 1
                summary.errors[design.design_id] = f"{type(exc).__name__}: {exc}"
                log.warning("design %s failed: %s", design.design_id, exc)
                continue
            if record.verified:
                summary.kept += 1
            elif record.discarded_reason and record.discarded_reason.startswith("unparseable"):
                summary.unparseable += 1
            else:
                summary.discarded += 1
            fh.write(json.dumps(record.to_record(), ensure_ascii=False) + "\n")
            fh.flush()
    return summary
