"""Test-support library: independent oracles and scripted fixtures.

The oracles re-derive results by brute force (exhaustive hulls, hand
counting, textbook formulas) and deliberately share no code with the
production paths they check. The fixture builder assembles a complete
by-tag script for a miniature two-theme pipeline run that exercises every
prompt template without any live calls.
"""

from __future__ import annotations

import math
import random
from typing import Sequence

from .corpus import premise_id_for
from .curation import BinnedPremise, CuratedEntry
from .induction import induction_tag
from .judge import PREMISE_DIMENSIONS, judge_tag
from .synthesis import verify_tag
from .tree import Candidate, CandidateTree, ModuleKind, design_id_for

__all__ = [
    "oracle_hull_area",
    "oracle_point_in_polygon",
    "oracle_bin_stats",
    "oracle_design_count",
    "oracle_curate",
    "oracle_welch_p",
    "random_tree",
    "uniform_tree",
    "parse_prompt_sections",
    "FIXTURE_THEMES",
    "FIXTURE_BRANCHING",
    "build_fixture",
]


# -- geometry oracles --------------------------------------------------------


def oracle_hull_area(points: Sequence) -> float:
    """Exhaustive O(N^3) convex hull area: a directed pair is a hull edge iff
    every other point lies on its left; vertices are then angle-ordered."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) < 3:
        return 0.0
    scale = max(1.0, max(abs(c) for p in pts for c in p))
    eps = 1e-12 * scale * scale

    on_hull: set[tuple[float, float]] = set()
    for p in pts:
        for q in pts:
            if p == q:
                continue
            left = True
            for r in pts:
                if r == p or r == q:
                    continue
                cross = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
                if cross < -eps:
                    left = False
                    break
            if left:
                on_hull.add(p)
                on_hull.add(q)
    if len(on_hull) < 3:
        return 0.0

    cx = sum(p[0] for p in on_hull) / len(on_hull)
    cy = sum(p[1] for p in on_hull) / len(on_hull)
    ordered = sorted(on_hull, key=lambda p: math.atan2(p[1] - cy, p[0] - cx))
    area = 0.0
    for i, (x0, y0) in enumerate(ordered):
        x1, y1 = ordered[(i + 1) % len(ordered)]
        area += x0 * y1 - x1 * y0
    return abs(area) / 2.0


def oracle_point_in_polygon(x: float, y: float, polygon: Sequence, tol: float = 1e-9) -> bool:
    """Ray casting with an explicit on-segment check for boundary points."""
    verts = [(float(p[0]), float(p[1])) for p in polygon]
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        # distance from (x, y) to segment
        dx, dy = x1 - x0, y1 - y0
        seg2 = dx * dx + dy * dy
        t = 0.0 if seg2 == 0.0 else max(0.0, min(1.0, ((x - x0) * dx + (y - y0) * dy) / seg2))
        px, py = x0 + t * dx, y0 + t * dy
        if math.hypot(x - px, y - py) <= tol * max(1.0, abs(x0), abs(y0), abs(x1), abs(y1)):
            return True
    inside = False
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            x_cross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x_cross > x:
                inside = not inside
    return inside


def oracle_bin_stats(
    points: Sequence,
    m: int,
    bounds: tuple[float, float, float, float],
    hull_polygon: Sequence,
) -> tuple[dict[tuple[int, int], int], list[tuple[int, int]], float]:
    """Hand-count histogram: per-bin counts, in-hull bins, population std."""
    xmin, xmax, ymin, ymax = bounds

    def axis_bin(value: float, lo: float, hi: float) -> int:
        if hi <= lo:
            return 0
        idx = int((value - lo) / (hi - lo) * m)
        if idx < 0:
            idx = 0
        if idx > m - 1:
            idx = m - 1
        return idx

    counts: dict[tuple[int, int], int] = {(i, j): 0 for i in range(m) for j in range(m)}
    for p in points:
        key = (axis_bin(float(p[0]), xmin, xmax), axis_bin(float(p[1]), ymin, ymax))
        counts[key] += 1

    selected: list[tuple[int, int]] = []
    for i in range(m):
        for j in range(m):
            cx = xmin + (i + 0.5) * (xmax - xmin) / m
            cy = ymin + (j + 0.5) * (ymax - ymin) / m
            if oracle_point_in_polygon(cx, cy, hull_polygon):
                selected.append((i, j))

    values = [counts[b] for b in selected]
    if not values:
        return counts, selected, float("nan")
    mean = sum(values) / len(values)
    variance = sum((v - mean) ** 2 for v in values) / len(values)
    return counts, selected, math.sqrt(variance)


# -- tree oracle -------------------------------------------------------------


def oracle_design_count(tree: CandidateTree | dict) -> int:
    """Naive recursive leaf count over the nested-dictionary form."""
    nested = tree.to_nested() if isinstance(tree, CandidateTree) else tree

    def count(value: object) -> int:
        if isinstance(value, str):
            return 1
        assert isinstance(value, dict)
        total = 0
        for child in value.values():
            total += count(child)
        return total

    return count(nested) if nested else 0


# -- curation oracle ---------------------------------------------------------


def oracle_curate(items: Sequence[BinnedPremise], k: int) -> list[CuratedEntry]:
    """Exhaustive re-derivation of the champion + top-up selection."""
    if k > len(items):
        raise ValueError("k exceeds corpus size")
    groups: dict[tuple[int, int], list[BinnedPremise]] = {}
    for it in items:
        if it.in_hull:
            groups.setdefault(it.bin_index, []).append(it)

    champions: list[BinnedPremise] = []
    for bin_index in sorted(groups):
        ranked = sorted(groups[bin_index], key=lambda it: (-it.total_score, it.premise_id))
        champions.append(ranked[0])

    if len(champions) > k:
        winners = set(
            it.premise_id
            for it in sorted(champions, key=lambda it: (-it.total_score, it.premise_id))[:k]
        )
        champions = [it for it in champions if it.premise_id in winners]

    taken = {it.premise_id for it in champions}
    remaining = [it for it in items if it.premise_id not in taken]
    fills: list[BinnedPremise] = []
    while len(champions) + len(fills) < k and remaining:
        best = remaining[0]
        for it in remaining[1:]:
            if it.total_score > best.total_score or (
                it.total_score == best.total_score and it.premise_id < best.premise_id
            ):
                best = it
        fills.append(best)
        remaining = [it for it in remaining if it.premise_id != best.premise_id]

    return [CuratedEntry(it.premise_id, it.bin_index, "champion", it.total_score) for it in champions] + [
        CuratedEntry(it.premise_id, it.bin_index, "fill", it.total_score) for it in fills
    ]


# -- statistics oracle -------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta (modified Lentz).
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 200):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def _ibeta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def oracle_welch_p(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Textbook Welch's t-test: statistic, Welch-Satterthwaite df, then the
    two-sided p-value via the regularized incomplete beta."""
    n1, n2 = len(sample_a), len(sample_b)
    if n1 < 2 or n2 < 2:
        raise ValueError("need at least 2 values per sample")
    m1 = sum(sample_a) / n1
    m2 = sum(sample_b) / n2
    v1 = sum((v - m1) ** 2 for v in sample_a) / (n1 - 1)
    v2 = sum((v - m2) ** 2 for v in sample_b) / (n2 - 1)
    se2 = v1 / n1 + v2 / n2
    if se2 == 0.0:
        return 1.0 if m1 == m2 else 0.0
    t = (m1 - m2) / math.sqrt(se2)
    df = se2 * se2 / ((v1 / n1) ** 2 / (n1 - 1) + (v2 / n2) ** 2 / (n2 - 1))
    return _ibeta(df / 2.0, 0.5, df / (df + t * t))


# -- synthetic trees ---------------------------------------------------------

_PERSONA_CYCLE = ("growth", "conflict", "cooperation")


def uniform_tree(branching: Sequence[int]) -> CandidateTree:
    """Tree with a fixed branching factor per level, e.g. (2, 3, 1, 2, 1, 1)."""
    if len(branching) != 6 or any(b < 1 for b in branching):
        raise ValueError("branching must be six factors >= 1")
    tree = CandidateTree()

    def expand(path: list[Candidate]) -> None:
        kind = ModuleKind(len(path))
        for i in range(branching[kind]):
            text = f"{kind.label} {i} of {'/'.join(c.text for c in path) or 'root'}"
            subkind = _PERSONA_CYCLE[i % 3] if kind is ModuleKind.PERSONA else None
            cand = tree.insert_candidate(path, Candidate(kind, text, subkind=subkind))
            if kind is not ModuleKind.TWIST:
                expand(path + [cand])

    expand([])
    return tree


def random_tree(seed: int, branch_range: tuple[int, int] = (1, 4)) -> CandidateTree:
    """Random per-node branching in ``branch_range`` at every level."""
    rng = random.Random(seed)
    tree = CandidateTree()

    def expand(path: list[Candidate]) -> None:
        kind = ModuleKind(len(path))
        for i in range(rng.randint(*branch_range)):
            text = f"{kind.label}-{i}-{rng.randrange(1_000_000)} under {path[-1].text if path else 'root'}"
            subkind = rng.choice(_PERSONA_CYCLE) if kind is ModuleKind.PERSONA else None
            cand = tree.insert_candidate(path, Candidate(kind, text, subkind=subkind))
            if kind is not ModuleKind.TWIST:
                expand(path + [cand])

    expand([])
    return tree


# -- prompt inspection -------------------------------------------------------


def parse_prompt_sections(prompt: str) -> dict[str, str]:
    """Extract ``### Header`` section bodies from a rendered prompt.

    A section runs until the next header or the first blank line, which is
    how the templates separate the component block from the instruction.
    """
    sections: dict[str, str] = {}
    current: str | None = None
    body: list[str] = []
    for line in prompt.splitlines():
        if line.startswith("### "):
            if current is not None:
                sections[current] = "\n".join(body)
            current = line[4:].strip()
            body = []
        elif current is not None:
            if line == "":
                sections[current] = "\n".join(body)
                current = None
                body = []
            else:
                body.append(line)
    if current is not None:
        sections[current] = "\n".join(body)
    return sections


# -- the miniature end-to-end fixture ----------------------------------------

FIXTURE_THEMES = ("Historical", "Fantasy")

FIXTURE_BRANCHING = {
    "backgrounds": {"time": 1, "place": 1},
    "personas": {"growth": 1},
    "events": 1,
    "endings": 1,
    "twists": 1,
}

_FIXTURE_BACKGROUNDS = {
    ("Historical", "time"): "Rome in the final years of the Republic.",
    ("Historical", "place"): "The marble senate halls of an ancient capital.",
    ("Fantasy", "time"): "An age when dragons still ruled the skies.",
    ("Fantasy", "place"): "A mountain kingdom carved into living glaciers.",
}

_FIXTURE_PERSONAS = {
    ("Historical", "time"): "A young scribe who rises from errand runner to trusted counselor.",
    ("Historical", "place"): "An idealistic junior senator learning how power really works.",
    ("Fantasy", "time"): "An orphaned dragon-keeper discovering an unwanted gift for command.",
    ("Fantasy", "place"): "A glacier-born cartographer who has never seen the lowlands.",
}


def _fixture_events(theme: str, index: int) -> tuple[str, str]:
    return (
        f"The protagonist uncovers a conspiracy that threatens the {theme.lower()} realm (thread {index}).",
        f"A rival faction forces the protagonist into exile across the {theme.lower()} frontier (thread {index}).",
    )


def build_fixture() -> dict:
    """Assemble the full by-tag script plus expected prompts and outcomes for
    the two-theme offline run (4 designs; the second one fails verification)."""
    from .induction import render_induction_prompt
    from .prompts import TemplateLibrary
    from .synthesis import render_synthesis_prompt, synthesis_tag
    from .tree import PremiseDesign

    templates = TemplateLibrary()
    replies: dict[str, str] = {}
    expected_prompts: dict[str, str] = {}

    def script(tag: str, prompt: str, reply: str) -> None:
        replies[tag] = reply
        expected_prompts[tag] = prompt

    design_paths: list[tuple[str, ...]] = []
    for t_index, theme in enumerate(FIXTURE_THEMES):
        for subkind in FIXTURE_BRANCHING["backgrounds"]:
            background = _FIXTURE_BACKGROUNDS[(theme, subkind)]
            script(
                induction_tag(ModuleKind.BACKGROUND, subkind, [theme], 0),
                render_induction_prompt(templates, ModuleKind.BACKGROUND, subkind, {ModuleKind.THEME: theme}, 1),
                f"1. {background}",
            )
            persona = _FIXTURE_PERSONAS[(theme, subkind)]
            ctx = {ModuleKind.THEME: theme, ModuleKind.BACKGROUND: background}
            script(
                induction_tag(ModuleKind.PERSONA, "growth", [theme, background], 0),
                render_induction_prompt(templates, ModuleKind.PERSONA, "growth", ctx, 1),
                f"1. {persona}",
            )
            event, decoy = _fixture_events(theme, t_index)
            ctx[ModuleKind.PERSONA] = persona
            script(
                induction_tag(ModuleKind.EVENT, None, [theme, background, persona], 0),
                render_induction_prompt(templates, ModuleKind.EVENT, None, ctx, 1),
                f"1. {event}\n2. {decoy}",
            )
            ending = f"Peace returns once the conspiracy collapses under its own secrets ({theme.lower()}, {subkind})."
            ctx[ModuleKind.EVENT] = event
            script(
                induction_tag(ModuleKind.ENDING, None, [theme, background, persona, event], 0),
                render_induction_prompt(templates, ModuleKind.ENDING, None, ctx, 1),
                ending,
            )
            twist = f"The conspiracy's leader turns out to be the protagonist's own mentor ({theme.lower()}, {subkind})."
            ctx[ModuleKind.ENDING] = ending
            script(
                induction_tag(ModuleKind.TWIST, None, [theme, background, persona, event, ending], 0),
                render_induction_prompt(templates, ModuleKind.TWIST, None, ctx, 1),
                twist,
            )
            design_paths.append((theme, background, persona, event, ending, twist))

    design_ids = [design_id_for(path) for path in design_paths]
    premise_ids = [premise_id_for(did) for did in design_ids]
    premise_texts = [
        f"In {path[1].rstrip('.').lower()}, {path[2].rstrip('.').lower()} must expose a conspiracy, "
        f"survive exile, and face a mentor's betrayal before peace can return (premise {i})."
        for i, path in enumerate(design_paths)
    ]
    discarded_index = 1

    subkinds = [None, None, "growth", None, None, None]
    for i, (path, did, pid, text) in enumerate(
        zip(design_paths, design_ids, premise_ids, premise_texts)
    ):
        design = PremiseDesign(
            did,
            tuple(
                Candidate(ModuleKind(k), path[k], subkind=subkinds[k]) for k in range(6)
            ),
        )
        script(synthesis_tag(design), render_synthesis_prompt(design, templates), text)
        if i == discarded_index:
            verdict = "[[Yes]] The era and the technology contradict each other."
        else:
            verdict = "[[No]]"
        script(verify_tag(pid, 0), templates.render("verify", premise=text), verdict)

    scores: dict[tuple[str, str], int] = {}
    kept = [i for i in range(len(design_paths)) if i != discarded_index]
    for rank, i in enumerate(kept):
        for d_index, dim in enumerate(PREMISE_DIMENSIONS):
            value = 60 + 10 * d_index + rank
            scores[(premise_ids[i], dim)] = value
            script(
                judge_tag("premise", dim, premise_ids[i], 0),
                templates.render(f"judge_premise_{dim}", premise=premise_texts[i]),
                f"Score: {value}\n\nDeterministic fixture rating.",
            )

    return {
        "replies": replies,
        "expected_prompts": expected_prompts,
        "themes": list(FIXTURE_THEMES),
        "branching": dict(FIXTURE_BRANCHING),
        "design_paths": design_paths,
        "design_ids": design_ids,
        "premise_ids": premise_ids,
        "premise_texts": premise_texts,
        "discarded_index": discarded_index,
        "scores": scores,
    }
