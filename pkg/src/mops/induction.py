"""Candidate induction: prompt rendering, reply parsing, tree construction.

Each component's induction prompt embeds the accepted candidates of all
preceding components on the path, so candidates stay consistent with their
ancestors. Construction is breadth-first, deduplicated per sibling pool,
checkpointed so interrupted builds resume.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .dedup import DEFAULT_EPSILON, DedupPool, EmbeddingProvider
from .gateway import CompletionRequest, Gateway, GatewayError
from .prompts import BACKGROUND_COMPONENTS, PromptError, TemplateLibrary
from .tree import Candidate, CandidateTree, ModuleKind

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_THEMES",
    "BranchingConfig",
    "StageSettings",
    "ReplyParseError",
    "parse_numbered_list",
    "parse_event_reply",
    "parse_single_reply",
    "render_induction_prompt",
    "induction_tag",
    "induce_candidates",
    "InductionOutcome",
    "ReportEntry",
    "BuildReport",
    "build_tree",
    "generate_baseline",
]

# The manually pre-defined narrative themes; induction never generates these.
DEFAULT_THEMES: tuple[str, ...] = (
    "Historical",
    "Game",
    "Time-travel",
    "Immortal Heroes",
    "Contemporary",
    "Suspense",
    "Sports",
    "Fantastic",
    "Science Fiction",
    "Martial Arts",
    "Military",
    "Urban",
    "Romance",
    "Fantasy",
)

_NUMBERED = re.compile(r"^\s*\d+\.\s+(.*\S)\s*$")


class ReplyParseError(Exception):
    """Model reply did not contain the expected structure."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


def parse_numbered_list(text: str) -> list[str]:
    """Extract ``1. item`` lines, numbering stripped, other lines ignored."""
    items = [m.group(1) for line in text.splitlines() if (m := _NUMBERED.match(line))]
    if not items:
        raise ReplyParseError("no numbered items found in reply", raw=text)
    return items


def parse_event_reply(text: str) -> list[str]:
    """Parse exactly two events: numbered lines, else non-empty lines."""
    try:
        items = parse_numbered_list(text)
    except ReplyParseError:
        items = [line.strip() for line in text.splitlines() if line.strip()]
    if len(items) != 2:
        raise ReplyParseError(f"expected exactly 2 events, parsed {len(items)}", raw=text)
    return items


def parse_single_reply(text: str) -> str:
    """Endings and twists arrive as one free-text sentence."""
    out = text.strip()
    if not out:
        raise ReplyParseError("empty reply", raw=text)
    return out


@dataclass(frozen=True)
class BranchingConfig:
    """Requested candidate counts per component (and subkind).

    A subkind omitted from a mapping is simply not induced; every listed
    count must be at least 1.
    """

    backgrounds: dict[str, int] = field(
        default_factory=lambda: {"time": 10, "place": 10, "time_and_place": 10}
    )
    personas: dict[str, int] = field(
        default_factory=lambda: {"growth": 3, "conflict": 3, "cooperation": 3}
    )
    events: int = 2
    endings: int = 1
    twists: int = 1

    def __post_init__(self) -> None:
        from .tree import SUBKINDS

        for kind, mapping in (
            (ModuleKind.BACKGROUND, self.backgrounds),
            (ModuleKind.PERSONA, self.personas),
        ):
            if not mapping:
                raise ValueError(f"{kind.label} branching needs at least one subkind")
            for sk, count in mapping.items():
                if sk not in SUBKINDS[kind]:
                    raise ValueError(f"unknown {kind.label} subkind {sk!r}")
                if count < 1:
                    raise ValueError(f"{kind.label}/{sk} count must be >= 1, got {count}")
        for label, count in (("events", self.events), ("endings", self.endings), ("twists", self.twists)):
            if count < 1:
                raise ValueError(f"{label} count must be >= 1, got {count}")

    def expected_design_count(self, n_themes: int) -> int:
        return (
            n_themes
            * sum(self.backgrounds.values())
            * sum(self.personas.values())
            * self.events
            * self.endings
            * self.twists
        )

    @classmethod
    def from_dict(cls, data: dict) -> "BranchingConfig":
        kwargs: dict = {}
        for key in ("backgrounds", "personas", "events", "endings", "twists"):
            if key in data:
                kwargs[key] = data[key]
        return cls(**kwargs)


@dataclass(frozen=True)
class StageSettings:
    """Gateway call parameters for one pipeline stage."""

    model: str
    temperature: float = 0.7
    max_tokens: int = 1024
    round_cap: int = 5
    epsilon: float = DEFAULT_EPSILON


def render_induction_prompt(
    templates: TemplateLibrary,
    kind: ModuleKind,
    subkind: str | None,
    context: dict[ModuleKind, str],
    count: int,
) -> str:
    """Render the induction prompt for ``kind`` given the path prefix texts."""
    needed = [k for k in ModuleKind if k < kind]
    missing = [k.label for k in needed if k not in context]
    if missing:
        raise PromptError(f"induction context for {kind.label} is missing {missing}")
    values = {k.label: context[k] for k in needed}

    if kind is ModuleKind.BACKGROUND:
        if subkind not in BACKGROUND_COMPONENTS:
            raise PromptError(f"background induction needs a subkind, got {subkind!r}")
        return templates.render(
            "induce_background", count=count, component=BACKGROUND_COMPONENTS[subkind], **values
        )
    if kind is ModuleKind.PERSONA:
        if subkind not in ("growth", "conflict", "cooperation"):
            raise PromptError(f"persona induction needs a category, got {subkind!r}")
        return templates.render(f"induce_persona_{subkind}", count=count, **values)
    if kind is ModuleKind.EVENT:
        return templates.render("induce_event", **values)
    if kind is ModuleKind.ENDING:
        return templates.render("induce_ending", **values)
    if kind is ModuleKind.TWIST:
        return templates.render("induce_twist", **values)
    raise PromptError("themes are pre-defined, not induced")


def path_digest(texts: Sequence[str]) -> str:
    return hashlib.sha1("\x1f".join(texts).encode("utf-8")).hexdigest()[:10]


def induction_tag(
    kind: ModuleKind, subkind: str | None, parent_texts: Sequence[str], round_index: int
) -> str:
    return f"induce:{kind.label}:{subkind or 'none'}:{path_digest(parent_texts)}:{round_index}"


def _parse_for_kind(kind: ModuleKind, reply: str) -> list[str]:
    if kind is ModuleKind.EVENT:
        return parse_event_reply(reply)
    if kind in (ModuleKind.ENDING, ModuleKind.TWIST):
        return [parse_single_reply(reply)]
    return parse_numbered_list(reply)


@dataclass
class InductionOutcome:
    accepted: list[Candidate]
    rounds: int
    shortfall: int = 0


def induce_candidates(
    gateway: Gateway,
    embedder: EmbeddingProvider,
    tree: CandidateTree,
    parent_path: Sequence[Candidate],
    kind: ModuleKind,
    subkind: str | None,
    count: int,
    settings: StageSettings,
    templates: TemplateLibrary | None = None,
) -> InductionOutcome:
    """Prompt, parse, dedup, and insert until ``count`` siblings exist.

    The target counts siblings of the same kind/subkind already in the tree,
    so resumed builds only top up what is missing. Re-prompting stops at the
    round cap; a shortfall is returned (and logged) rather than raised, but a
    run whose every reply was unparseable raises the parse error.
    """
    templates = templates or TemplateLibrary()
    parent_texts = [c.text for c in parent_path]
    context = {c.kind: c.text for c in parent_path}

    pool = DedupPool(embedder, settings.epsilon)
    existing = [
        c.text
        for c in tree.children_of(parent_path)
        if c.kind is kind and (subkind is None or c.subkind == subkind)
    ]
    pool.adopt(existing)

    accepted: list[Candidate] = []
    total = len(existing)
    rounds = 0
    last_parse_error: ReplyParseError | None = None

    while total < count and rounds < settings.round_cap:
        prompt = render_induction_prompt(templates, kind, subkind, context, count)
        request = CompletionRequest(
            model=settings.model,
            prompt=prompt,
            temperature=settings.temperature,
            max_tokens=settings.max_tokens,
            tag=induction_tag(kind, subkind, parent_texts, rounds),
        )
        rounds += 1
        reply = gateway.complete(request).text
        try:
            items = _parse_for_kind(kind, reply)
        except ReplyParseError as exc:
            last_parse_error = exc
            continue
        for item in items:
            if total >= count:
                break
            if pool.insert(item).accepted:
                cand = tree.insert_candidate(parent_path, Candidate(kind, item, subkind=subkind))
                accepted.append(cand)
                total += 1

    if total < count:
        if total == 0 and last_parse_error is not None:
            raise last_parse_error
        log.warning(
            "induction for %s/%s under %s stopped at %d/%d after %d rounds",
            kind.label,
            subkind or "-",
            " / ".join(parent_texts) or "<root>",
            total,
            count,
            rounds,
        )
    return InductionOutcome(accepted, rounds, shortfall=count - total)


@dataclass
class ReportEntry:
    path: list[str]
    kind: str
    subkind: str | None
    requested: int
    accepted: int
    rounds: int
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "path": self.path,
            "kind": self.kind,
            "subkind": self.subkind,
            "requested": self.requested,
            "accepted": self.accepted,
            "rounds": self.rounds,
            "errors": [self.error] if self.error else [],
        }


@dataclass
class BuildReport:
    entries: list[ReportEntry] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e.error is None for e in self.entries)

    def write_jsonl(self, path: str | Path, header: dict | None = None) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            if header is not None:
                fh.write(json.dumps({"record": "config", **header}, sort_keys=True) + "\n")
            for entry in self.entries:
                fh.write(json.dumps(entry.to_record(), ensure_ascii=False) + "\n")


# -- checkpointing ---------------------------------------------------------
# The public tree file format has no place for background subkinds, so the
# build checkpoint uses its own nested form that keeps them.


def _node_to_state(node) -> dict:
    out: dict = {"text": node.candidate.text}
    if node.candidate.subkind:
        out["subkind"] = node.candidate.subkind
    if node.design_id:
        out["design_id"] = node.design_id
    if node.children:
        out["children"] = [_node_to_state(c) for c in node.ordered_children()]
    return out


def save_checkpoint(tree: CandidateTree, path: str | Path) -> None:
    state = {"themes": [_node_to_state(n) for n in tree._ordered_roots()]}
    tmp = str(path) + ".tmp"
    Path(tmp).write_text(json.dumps(state, ensure_ascii=False), encoding="utf-8")
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> CandidateTree:
    state = json.loads(Path(path).read_text(encoding="utf-8"))
    tree = CandidateTree()

    def walk(entry: dict, parents: list[Candidate], kind_value: int) -> None:
        kind = ModuleKind(kind_value)
        cand = tree.insert_candidate(
            parents,
            Candidate(kind, entry["text"], subkind=entry.get("subkind")),
            design_id=entry.get("design_id"),
        )
        for child in entry.get("children", []):
            walk(child, parents + [cand], kind_value + 1)

    for theme in state.get("themes", []):
        walk(theme, [], 0)
    return tree


def _paths_ending_at(tree: CandidateTree, kind: ModuleKind) -> list[list[Candidate]]:
    return [path for path, _ in tree.iter_paths() if path[-1].kind is kind]


def build_tree(
    gateway: Gateway,
    embedder: EmbeddingProvider,
    config: BranchingConfig,
    themes: Sequence[str] | None = None,
    settings: StageSettings | None = None,
    templates: TemplateLibrary | None = None,
    checkpoint_path: str | Path | None = None,
) -> tuple[CandidateTree, BuildReport]:
    """Construct the full candidate tree level by level.

    Induction failures abort only the affected subtree and are recorded in
    the report; the rest of the build continues. If ``checkpoint_path`` is
    given, progress is persisted after every induction call and an existing
    checkpoint is resumed instead of starting over.
    """
    themes = list(themes) if themes else list(DEFAULT_THEMES)
    if not themes:
        raise ValueError("at least one theme is required")
    if settings is None:
        raise ValueError("induction settings are required")
    templates = templates or TemplateLibrary()

    if checkpoint_path is not None and Path(checkpoint_path).exists():
        tree = load_checkpoint(checkpoint_path)
    else:
        tree = CandidateTree()
    for theme in themes:
        tree.insert_candidate([], Candidate(ModuleKind.THEME, theme))

    report = BuildReport()
    # A failed induction call blocks only the subtrees rooted at its own
    # (possibly partial) children, not sibling subkinds or cousin branches.
    failures: list[tuple[tuple[str, ...], ModuleKind, str | None]] = []

    def is_blocked(parent_path: list[Candidate]) -> bool:
        texts = tuple(c.text for c in parent_path)
        for ftexts, fkind, fsub in failures:
            if len(texts) <= len(ftexts) or texts[: len(ftexts)] != ftexts:
                continue
            child = parent_path[len(ftexts)]
            if child.kind is fkind and (fsub is None or child.subkind == fsub):
                return True
        return False

    def fill(parent_path: list[Candidate], kind: ModuleKind, subkind: str | None, count: int) -> None:
        path_texts = [c.text for c in parent_path]
        if is_blocked(parent_path):
            return
        entry = ReportEntry(path_texts, kind.label, subkind, count, 0, 0)
        try:
            outcome = induce_candidates(
                gateway, embedder, tree, parent_path, kind, subkind, count, settings, templates
            )
            entry.rounds = outcome.rounds
            entry.accepted = count - outcome.shortfall
        except (GatewayError, ReplyParseError, PromptError) as exc:
            entry.error = f"{type(exc).__name__}: {exc}"
            entry.accepted = sum(
                1
                for c in tree.children_of(parent_path)
                if c.kind is kind and (subkind is None or c.subkind == subkind)
            )
            failures.append((tuple(path_texts), kind, subkind))
            log.warning("aborting %s subtree under %s: %s", kind.label, " / ".join(path_texts) or "<root>", exc)
        report.entries.append(entry)
        if checkpoint_path is not None:
            save_checkpoint(tree, checkpoint_path)

    for path in _paths_ending_at(tree, ModuleKind.THEME):
        for sk, count in config.backgrounds.items():
            fill(path, ModuleKind.BACKGROUND, sk, count)
    for path in _paths_ending_at(tree, ModuleKind.BACKGROUND):
        for sk, count in config.personas.items():
            fill(path, ModuleKind.PERSONA, sk, count)
    for path in _paths_ending_at(tree, ModuleKind.PERSONA):
        fill(path, ModuleKind.EVENT, None, config.events)
    for path in _paths_ending_at(tree, ModuleKind.EVENT):
        fill(path, ModuleKind.ENDING, None, config.endings)
    for path in _paths_ending_at(tree, ModuleKind.ENDING):
        fill(path, ModuleKind.TWIST, None, config.twists)

    if checkpoint_path is not None:
        save_checkpoint(tree, checkpoint_path)
    return tree, report


def generate_baseline(
    gateway: Gateway,
    embedder: EmbeddingProvider,
    mode: str,
    count: int,
    exemplars: Sequence[str] | None = None,
    settings: StageSettings | None = None,
    templates: TemplateLibrary | None = None,
) -> list[str]:
    """Induce whole premises directly (the vanilla/complex baselines).

    Loops prompt -> parse -> dedup until ``count`` premises are accepted,
    giving up after ``round_cap`` consecutive rounds with no new premise.
    """
    if mode not in ("vanilla", "complex"):
        raise ValueError(f"baseline mode must be vanilla or complex, is {mode!r}")
    if count < 1:
        raise ValueError("count must be >= 1")
    if settings is None:
        raise ValueError("baseline settings are required")
    templates = templates or TemplateLibrary()

    if mode == "complex":
        if exemplars is None or len(exemplars) < 3:
            raise ValueError("complex baseline requires at least 3 exemplar premises")
        prompt = templates.render("baseline_complex", exemplars="\n".join(exemplars[:3]))
    else:
        prompt = templates.render("baseline_vanilla")

    pool = DedupPool(embedder, settings.epsilon)
    accepted: list[str] = []
    stalled = 0
    round_index = 0
    last_parse_error: ReplyParseError | None = None

    while len(accepted) < count and stalled < settings.round_cap:
        request = CompletionRequest(
            model=settings.model,
            prompt=prompt,
            temperature=settings.temperature,
            max_tokens=settings.max_tokens,
            tag=f"baseline:{mode}:{round_index}",
        )
        round_index += 1
        reply = gateway.complete(request).text
        try:
            items = parse_numbered_list(reply)
        except ReplyParseError as exc:
            last_parse_error = exc
            stalled += 1
            continue
        gained = 0
        for item in items:
            if len(accepted) >= count:
                break
            if pool.insert(item).accepted:
                accepted.append(item)
                gained += 1
        stalled = 0 if gained else stalled + 1

    if len(accepted) < count:
        if not accepted and last_parse_error is not None:
            raise last_parse_error
        log.warning("baseline %s stopped at %d/%d premises", mode, len(accepted), count)
    return accepted
