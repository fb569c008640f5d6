"""Nested candidate tree for premise designs.

A premise is assembled from six ordered components (theme, background,
persona, event, ending, twist). Candidates for each component live in a
nested dictionary keyed by the candidate texts of the preceding components;
every root-to-leaf path is one premise design.
"""

from __future__ import annotations

import json
import random
import uuid
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Iterator, Sequence

__all__ = [
    "ModuleKind",
    "SUBKINDS",
    "PERSONA_CATEGORIES",
    "Candidate",
    "PremiseDesign",
    "CandidateTree",
    "TreeError",
    "KindOrderError",
    "UnknownPathError",
    "CandidateConflictError",
    "EmptyTreeError",
    "TreeFormatError",
    "TreeSchemaError",
    "apply_mask",
    "mask_following",
    "enumerate_designs",
    "sample_design",
    "shuffle_dependencies",
    "save_tree",
    "load_tree",
]


class ModuleKind(IntEnum):
    """The six premise components, in their fixed dependency order."""

    THEME = 0
    BACKGROUND = 1
    PERSONA = 2
    EVENT = 3
    ENDING = 4
    TWIST = 5

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ModuleKind":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown module kind: {label!r}") from None


KIND_ORDER: tuple[ModuleKind, ...] = tuple(ModuleKind)

SUBKINDS: dict[ModuleKind, tuple[str, ...]] = {
    ModuleKind.BACKGROUND: ("time", "place", "time_and_place"),
    ModuleKind.PERSONA: ("growth", "conflict", "cooperation"),
}

PERSONA_CATEGORIES: tuple[str, ...] = SUBKINDS[ModuleKind.PERSONA]

# Name-based UUIDs keep candidate/design identifiers stable across runs.
_CANDIDATE_NS = uuid.uuid5(uuid.NAMESPACE_URL, "mops://candidate")
_DESIGN_NS = uuid.uuid5(uuid.NAMESPACE_URL, "mops://design")
_SEP = "\x1f"


class TreeError(Exception):
    """Base class for candidate-tree failures."""


class KindOrderError(TreeError):
    """A candidate was inserted out of the fixed component order."""


class UnknownPathError(TreeError):
    """A parent path does not exist in the tree."""


class CandidateConflictError(TreeError):
    """Two distinct candidates claim the same text under one parent."""


class EmptyTreeError(TreeError):
    """Operation requires a tree with at least one complete design."""


class TreeFormatError(TreeError):
    """Tree file could not be parsed."""


class TreeSchemaError(TreeError):
    """Tree file parsed but violates the nested-dictionary schema."""


def _path_key(texts: Sequence[str]) -> str:
    return _SEP.join(texts)


def candidate_id_for(path_texts: Sequence[str]) -> str:
    """Deterministic candidate id for the node at the given text path."""
    return str(uuid.uuid5(_CANDIDATE_NS, _path_key(path_texts)))


def design_id_for(path_texts: Sequence[str]) -> str:
    """Deterministic design id for a complete six-component text path."""
    return str(uuid.uuid5(_DESIGN_NS, _path_key(path_texts)))


@dataclass(frozen=True)
class Candidate:
    """One module candidate: a sentence (or persona pair line) for a component.

    ``subkind`` is required for persona candidates (it becomes the category
    level in the serialized tree), optional for background, and disallowed
    elsewhere.
    """

    kind: ModuleKind
    text: str
    subkind: str | None = None
    id: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.kind, ModuleKind):
            raise TypeError(f"kind must be a ModuleKind, got {self.kind!r}")
        if not self.text.strip():
            raise ValueError("candidate text must be non-empty")
        allowed = SUBKINDS.get(self.kind)
        if self.subkind is not None:
            if allowed is None:
                raise ValueError(f"{self.kind.label} candidates take no subkind")
            if self.subkind not in allowed:
                raise ValueError(
                    f"invalid {self.kind.label} subkind {self.subkind!r}; expected one of {allowed}"
                )
        elif self.kind is ModuleKind.PERSONA:
            raise ValueError("persona candidates require a category subkind")


@dataclass(frozen=True)
class PremiseDesign:
    """A key path through the tree: one candidate per component, plus masks.

    Masked components keep their candidate for provenance but expose an
    empty text, which is how downstream synthesis excludes them.
    """

    design_id: str
    candidates: tuple[Candidate, ...]
    masks: frozenset[ModuleKind] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        kinds = tuple(c.kind for c in self.candidates)
        if kinds != KIND_ORDER:
            raise ValueError(f"design must hold one candidate per kind in order, got {kinds}")

    def candidate(self, kind: ModuleKind) -> Candidate:
        return self.candidates[kind]

    def text(self, kind: ModuleKind) -> str:
        """Component text as synthesis sees it: empty when masked."""
        return "" if kind in self.masks else self.candidates[kind].text

    @property
    def persona_category(self) -> str:
        return self.candidates[ModuleKind.PERSONA].subkind or ""

    def to_record(self) -> dict:
        return {
            "design_id": self.design_id,
            "theme": self.text(ModuleKind.THEME),
            "background": self.text(ModuleKind.BACKGROUND),
            "persona_category": self.persona_category,
            "persona": self.text(ModuleKind.PERSONA),
            "event": self.text(ModuleKind.EVENT),
            "ending": self.text(ModuleKind.ENDING),
            "twist": self.text(ModuleKind.TWIST),
            "masks": sorted(k.label for k in self.masks),
        }


def apply_mask(design: PremiseDesign, kinds: set[ModuleKind] | frozenset[ModuleKind]) -> PremiseDesign:
    """Return a copy of ``design`` with the given components additionally masked."""
    bad = [k for k in kinds if not isinstance(k, ModuleKind)]
    if bad:
        raise TypeError(f"masks must be ModuleKind values, got {bad!r}")
    return replace(design, masks=design.masks | frozenset(kinds))


def mask_following(design: PremiseDesign, kind: ModuleKind) -> PremiseDesign:
    """Mask ``kind`` and every component after it.

    Only persona and later components are maskable this way; removing the
    theme or background would leave nothing to condition on.
    """
    if kind < ModuleKind.PERSONA:
        raise ValueError(f"mask-following starts at persona or later, got {kind.label}")
    return apply_mask(design, {k for k in KIND_ORDER if k >= kind})


@dataclass
class _Node:
    candidate: Candidate
    children: dict[str, "_Node"] = field(default_factory=dict)
    design_id: str | None = None

    def ordered_children(self) -> list["_Node"]:
        # Persona children serialize grouped under their category label, so
        # iterate them grouped too; otherwise save/load would reorder paths.
        if self.candidate.kind is ModuleKind.BACKGROUND:
            by_cat: dict[str, list[_Node]] = {}
            for child in self.children.values():
                by_cat.setdefault(child.candidate.subkind or "", []).append(child)
            return [n for group in by_cat.values() for n in group]
        return list(self.children.values())


class CandidateTree:
    """The nested dictionary of module candidates.

    Mutation is single-writer; enumeration and sampling are read-only and
    never observe partial inserts from the same thread.
    """

    def __init__(self) -> None:
        self._roots: dict[str, _Node] = {}

    # -- construction -----------------------------------------------------

    def insert_candidate(
        self,
        parent_path: Sequence[Candidate],
        candidate: Candidate,
        design_id: str | None = None,
    ) -> Candidate:
        """Insert ``candidate`` under ``parent_path``; idempotent on re-insert.

        The parent path must end at the kind immediately preceding the
        candidate's kind (empty path for themes). Twist insertions attach a
        design id: the given one, or a deterministic id derived from the path.
        """
        if len(parent_path) >= len(KIND_ORDER):
            raise KindOrderError("parent path already ends at the twist level")
        expected = ModuleKind(len(parent_path))
        path_kinds = tuple(c.kind for c in parent_path)
        if path_kinds != KIND_ORDER[: len(parent_path)]:
            raise KindOrderError(f"parent path kinds {path_kinds} are not a valid prefix")
        if candidate.kind is not expected:
            raise KindOrderError(
                f"expected a {expected.label} under this parent, got {candidate.kind.label}"
            )

        node = None
        siblings = self._roots
        walked: list[str] = []
        for step in parent_path:
            walked.append(step.text)
            node = siblings.get(step.text)
            if node is None:
                raise UnknownPathError(f"no {step.kind.label} candidate {step.text!r} in tree")
            siblings = node.children

        path_texts = walked + [candidate.text]
        if not candidate.id:
            candidate = replace(candidate, id=candidate_id_for(path_texts))

        existing = siblings.get(candidate.text)
        if existing is not None:
            if existing.candidate.id != candidate.id:
                raise CandidateConflictError(
                    f"{candidate.kind.label} {candidate.text!r} already present with a different id"
                )
            return existing.candidate

        new = _Node(candidate)
        if candidate.kind is ModuleKind.TWIST:
            new.design_id = design_id or design_id_for(path_texts)
        siblings[candidate.text] = new
        return candidate

    # -- traversal --------------------------------------------------------

    def _ordered_roots(self) -> list[_Node]:
        return list(self._roots.values())

    def iter_paths(self) -> Iterator[tuple[list[Candidate], _Node]]:
        """Pre-order walk yielding (path including node's candidate, node)."""
        stack: list[tuple[list[Candidate], _Node]] = []
        for root in reversed(self._ordered_roots()):
            stack.append(([root.candidate], root))
        while stack:
            path, node = stack.pop()
            yield path, node
            for child in reversed(node.ordered_children()):
                stack.append((path + [child.candidate], child))

    def enumerate_designs(self) -> list[PremiseDesign]:
        """Every root-to-leaf design, in deterministic pre-order."""
        designs = []
        for path, node in self.iter_paths():
            if node.design_id is not None:
                designs.append(PremiseDesign(node.design_id, tuple(path)))
        return designs

    def sample_design(self, seed: int) -> PremiseDesign:
        """Uniform draw over all designs; a seed fixes the choice."""
        designs = self.enumerate_designs()
        if not designs:
            raise EmptyTreeError("cannot sample from a tree with no complete designs")
        return designs[random.Random(seed).randrange(len(designs))]

    def children_of(self, parent_path: Sequence[Candidate]) -> list[Candidate]:
        siblings = self._roots
        for step in parent_path:
            node = siblings.get(step.text)
            if node is None:
                raise UnknownPathError(f"no {step.kind.label} candidate {step.text!r} in tree")
            siblings = node.children
        return [n.candidate for n in siblings.values()]

    # -- serialization ----------------------------------------------------

    def to_nested(self) -> dict:
        """Plain nested-dict form: theme -> background -> category -> persona
        -> event -> ending -> twist -> design id."""

        def subtree(node: _Node) -> dict | str:
            if node.candidate.kind is ModuleKind.TWIST:
                return node.design_id or ""
            if node.candidate.kind is ModuleKind.BACKGROUND:
                out: dict = {}
                for child in node.ordered_children():
                    cat = child.candidate.subkind or ""
                    out.setdefault(cat, {})[child.candidate.text] = subtree(child)
                return out
            return {c.candidate.text: subtree(c) for c in node.ordered_children()}

        return {n.candidate.text: subtree(n) for n in self._ordered_roots()}

    @classmethod
    def from_nested(cls, data: object) -> "CandidateTree":
        if not isinstance(data, dict):
            raise TreeSchemaError("tree root must be a mapping of theme texts")
        tree = cls()
        seen_ids: set[str] = set()

        def describe(path: list[str]) -> str:
            shown = [t if len(t) <= 40 else t[:37] + "..." for t in path]
            return " / ".join(shown) or "<root>"

        def walk(mapping: dict, parents: list[Candidate], raw_path: list[str]) -> None:
            depth = len(raw_path)
            kind = ModuleKind(len(parents))
            for key, value in mapping.items():
                here = raw_path + [str(key)]
                if not isinstance(key, str) or not key.strip():
                    raise TreeSchemaError(f"empty or non-text key at {describe(here)}")
                if kind is ModuleKind.PERSONA and depth == 2:
                    # This level is the persona category label, not a candidate.
                    if key not in PERSONA_CATEGORIES:
                        raise TreeSchemaError(
                            f"unknown persona category {key!r} at {describe(here)}"
                        )
                    if not isinstance(value, dict):
                        raise TreeSchemaError(f"expected persona mapping at {describe(here)}")
                    for ptext, pvalue in value.items():
                        ppath = here + [str(ptext)]
                        if not isinstance(ptext, str) or not ptext.strip():
                            raise TreeSchemaError(f"empty persona text at {describe(ppath)}")
                        cand = tree.insert_candidate(
                            parents, Candidate(ModuleKind.PERSONA, ptext, subkind=key)
                        )
                        if not isinstance(pvalue, dict):
                            raise TreeSchemaError(
                                f"expected event mapping under persona at {describe(ppath)}"
                            )
                        walk(pvalue, parents + [cand], ppath)
                    continue

                if kind is ModuleKind.TWIST:
                    if not isinstance(value, str) or not value.strip():
                        raise TreeSchemaError(f"leaf design id missing at {describe(here)}")
                    if value in seen_ids:
                        raise TreeSchemaError(f"duplicate design id {value!r} at {describe(here)}")
                    seen_ids.add(value)
                    tree.insert_candidate(parents, Candidate(kind, key), design_id=value)
                    continue

                if not isinstance(value, dict):
                    raise TreeSchemaError(
                        f"expected nested mapping for {kind.label} at {describe(here)}"
                    )
                cand = tree.insert_candidate(parents, Candidate(kind, key))
                walk(value, parents + [cand], here)

        walk(data, [], [])
        return tree

    def structurally_equal(self, other: "CandidateTree") -> bool:
        return self.to_nested() == other.to_nested()


def enumerate_designs(tree: CandidateTree) -> list[PremiseDesign]:
    return tree.enumerate_designs()


def sample_design(tree: CandidateTree, seed: int) -> PremiseDesign:
    return tree.sample_design(seed)


def shuffle_dependencies(
    designs: Sequence[PremiseDesign],
    seed: int,
    with_replacement: bool = True,
) -> list[PremiseDesign]:
    """Break cross-component dependencies by re-drawing each slot from the
    pooled candidates of all input designs.

    With replacement (default) every slot is an independent uniform draw;
    without replacement each slot's pool is permuted once, preserving the
    per-slot multiset of texts.
    """
    if len(designs) < 2:
        raise ValueError("dependency shuffling requires at least 2 designs")
    rng = random.Random(seed)
    pools = {kind: [d.candidate(kind) for d in designs] for kind in KIND_ORDER}
    n = len(designs)

    if with_replacement:
        picks = {kind: [pool[rng.randrange(n)] for _ in range(n)] for kind, pool in pools.items()}
    else:
        picks = {}
        for kind in KIND_ORDER:
            pool = list(pools[kind])
            rng.shuffle(pool)
            picks[kind] = pool

    out = []
    for i in range(n):
        slots = tuple(picks[kind][i] for kind in KIND_ORDER)
        did = str(uuid.uuid5(_DESIGN_NS, f"shuffled:{i}:" + _path_key([c.text for c in slots])))
        out.append(PremiseDesign(did, slots))
    return out


def save_tree(tree: CandidateTree, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(tree.to_nested(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def load_tree(path: str | Path) -> CandidateTree:
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from exc
    return CandidateTree.from_nested(data)
