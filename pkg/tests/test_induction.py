from __future__ import annotations

import random

import pytest

from mops.dedup import StubEmbedder
from mops.gateway import Gateway, ScriptedBackend, TransientBackendError, UnknownTagError
from mops.induction import (
    DEFAULT_THEMES,
    BranchingConfig,
    ReplyParseError,
    StageSettings,
    build_tree,
    generate_baseline,
    induce_candidates,
    induction_tag,
    parse_event_reply,
    parse_numbered_list,
    parse_single_reply,
    render_induction_prompt,
    load_checkpoint,
)
from mops.prompts import PromptError, TemplateLibrary
from mops.testkit import FIXTURE_BRANCHING, FIXTURE_THEMES
from mops.tree import Candidate, CandidateTree, ModuleKind, save_tree

K = ModuleKind
TPL = TemplateLibrary()
SETTINGS = StageSettings(model="scripted-model", temperature=0.7, round_cap=5, epsilon=0.85)


# -- prompt rendering -------------------------------------------------------------


def test_background_time_prompt_for_fantasy():
    prompt = render_induction_prompt(TPL, K.BACKGROUND, "time", {K.THEME: "Fantasy"}, 10)
    assert "Tell me 10 backgrounds in Fantasy themed novels" in prompt
    assert "should only include time behind literary works" in prompt
    assert "Each line starts with a serial number and a dot." in prompt


def test_background_time_and_place_component_wording():
    prompt = render_induction_prompt(TPL, K.BACKGROUND, "time_and_place", {K.THEME: "Urban"}, 10)
    assert "only include time and place behind" in prompt


def test_persona_conflict_prompt_pair_format():
    prompt = render_induction_prompt(
        TPL, K.PERSONA, "conflict", {K.THEME: "Fantasy", K.BACKGROUND: "A kingdom."}, 3
    )
    assert "protagonist: <a brief characterization>; antagonist:" in prompt
    assert "tell me 3 possible (protagonist, antagonist)" in prompt
    assert "### Theme\nFantasy" in prompt
    assert "### Background\nA kingdom." in prompt


def test_persona_cooperation_prompt_uses_deuteragonist():
    prompt = render_induction_prompt(
        TPL, K.PERSONA, "cooperation", {K.THEME: "Sports", K.BACKGROUND: "A stadium."}, 3
    )
    assert "deuteragonist" in prompt
    assert "collaborate with the protagonist" in prompt


def test_twist_prompt_embeds_full_prefix_and_hook_wording():
    context = {
        K.THEME: "Fantasy",
        K.BACKGROUND: "A kingdom.",
        K.PERSONA: "A knight.",
        K.EVENT: "A quest.",
        K.ENDING: "Victory.",
    }
    prompt = render_induction_prompt(TPL, K.TWIST, None, context, 1)
    assert "conceive a twist as an unique hook" in prompt
    for text in context.values():
        assert text in prompt


def test_event_prompt_asks_for_two_independent_events():
    prompt = render_induction_prompt(
        TPL, K.EVENT, None, {K.THEME: "T", K.BACKGROUND: "B", K.PERSONA: "P"}, 2
    )
    assert "conceive two independent events" in prompt


def test_prompt_rejects_missing_context_slot():
    with pytest.raises(PromptError, match="background"):
        render_induction_prompt(TPL, K.PERSONA, "growth", {K.THEME: "Fantasy"}, 3)


def test_prompt_embeds_context_verbatim_property():
    rng = random.Random(0)
    for _ in range(20):
        context = {
            K.THEME: f"Theme {rng.randrange(100)}",
            K.BACKGROUND: f"Background ({rng.randrange(100)}) with, punctuation.",
            K.PERSONA: f"protagonist: p{rng.randrange(100)}; antagonist: a{rng.randrange(100)}",
            K.EVENT: f"Event #{rng.randrange(100)}",
            K.ENDING: f"Ending {rng.randrange(100)}.",
        }
        kind = rng.choice([K.BACKGROUND, K.PERSONA, K.EVENT, K.ENDING, K.TWIST])
        subkind = {K.BACKGROUND: "place", K.PERSONA: "growth"}.get(kind)
        prefix = {k: v for k, v in context.items() if k < kind}
        prompt = render_induction_prompt(TPL, kind, subkind, prefix, 3)
        for text in prefix.values():
            assert text in prompt


# -- reply parsing ------------------------------------------------------------------


def test_parse_numbered_list_basic():
    assert parse_numbered_list("1. Alpha\n2. Beta") == ["Alpha", "Beta"]


def test_parse_numbered_list_ignores_surrounding_prose():
    assert parse_numbered_list("Sure!\n1. Alpha\nnote\n2. Beta") == ["Alpha", "Beta"]


def test_parse_numbered_list_without_items_raises():
    with pytest.raises(ReplyParseError) as err:
        parse_numbered_list("no list here")
    assert err.value.raw == "no list here"


def test_parse_event_reply_requires_exactly_two():
    assert parse_event_reply("1. First event.\n2. Second event.") == ["First event.", "Second event."]
    assert parse_event_reply("First event.\nSecond event.") == ["First event.", "Second event."]
    with pytest.raises(ReplyParseError):
        parse_event_reply("1. Only one event.")
    with pytest.raises(ReplyParseError):
        parse_event_reply("1. A\n2. B\n3. C")


def test_parse_single_reply_trims():
    assert parse_single_reply("  An ending.\n") == "An ending."
    with pytest.raises(ReplyParseError):
        parse_single_reply("   \n ")


# -- branching config ------------------------------------------------------------------


def test_branching_validation():
    with pytest.raises(ValueError):
        BranchingConfig(backgrounds={"time": 0})
    with pytest.raises(ValueError):
        BranchingConfig(backgrounds={"weather": 3})
    with pytest.raises(ValueError):
        BranchingConfig(events=0)


def test_default_themes_are_fourteen():
    assert len(DEFAULT_THEMES) == 14
    assert DEFAULT_THEMES[0] == "Historical"
    assert DEFAULT_THEMES[-1] == "Fantasy"


# -- induce_candidates -------------------------------------------------------------------


def _theme_tree() -> tuple[CandidateTree, list[Candidate]]:
    tree = CandidateTree()
    theme = tree.insert_candidate([], Candidate(K.THEME, "Fantasy"))
    return tree, [theme]


def test_induction_accepts_ten_distinct_items():
    tree, path = _theme_tree()
    reply = "\n".join(f"{i}. Background {i} of a distinct realm." for i in range(1, 11))
    gateway = Gateway(
        ScriptedBackend.by_tag({induction_tag(K.BACKGROUND, "place", ["Fantasy"], 0): reply})
    )
    outcome = induce_candidates(
        gateway, StubEmbedder(16), tree, path, K.BACKGROUND, "place", 10, SETTINGS
    )
    assert len(outcome.accepted) == 10
    assert outcome.shortfall == 0
    assert len(tree.children_of(path)) == 10


def test_induction_rejects_duplicates_and_reprompts():
    tree, path = _theme_tree()
    replies = {
        induction_tag(K.BACKGROUND, "time", ["Fantasy"], 0): "1. The age of storms.\n2. The age of storms.",
        induction_tag(K.BACKGROUND, "time", ["Fantasy"], 1): "1. The era of quiet rivers.",
    }
    gateway = Gateway(ScriptedBackend.by_tag(replies))
    outcome = induce_candidates(
        gateway, StubEmbedder(16), tree, path, K.BACKGROUND, "time", 2, SETTINGS
    )
    assert [c.text for c in outcome.accepted] == ["The age of storms.", "The era of quiet rivers."]
    assert outcome.rounds == 2


def test_induction_round_cap_returns_partial_with_warning(caplog):
    tree, path = _theme_tree()
    # every round repeats the same single candidate
    replies = {
        induction_tag(K.BACKGROUND, "time", ["Fantasy"], r): "1. The same single era."
        for r in range(5)
    }
    gateway = Gateway(ScriptedBackend.by_tag(replies))
    settings = StageSettings(model="m", round_cap=3)
    with caplog.at_level("WARNING"):
        outcome = induce_candidates(
            gateway, StubEmbedder(16), tree, path, K.BACKGROUND, "time", 4, settings
        )
    assert len(outcome.accepted) == 1
    assert outcome.shortfall == 3
    assert outcome.rounds == 3
    assert any("stopped at 1/4" in rec.message for rec in caplog.records)


def test_induction_event_rule_reprompts_on_wrong_cardinality():
    tree = CandidateTree()
    theme = tree.insert_candidate([], Candidate(K.THEME, "T"))
    bg = tree.insert_candidate([theme], Candidate(K.BACKGROUND, "B", subkind="time"))
    persona = tree.insert_candidate([theme, bg], Candidate(K.PERSONA, "P", subkind="growth"))
    path = [theme, bg, persona]
    texts = ["T", "B", "P"]
    replies = {
        induction_tag(K.EVENT, None, texts, 0): "1. Only one event offered.",
        induction_tag(K.EVENT, None, texts, 1): "1. A first arc.\n2. A second arc.",
    }
    gateway = Gateway(ScriptedBackend.by_tag(replies))
    outcome = induce_candidates(gateway, StubEmbedder(16), tree, path, K.EVENT, None, 2, SETTINGS)
    assert [c.text for c in outcome.accepted] == ["A first arc.", "A second arc."]
    assert outcome.rounds == 2


def test_induction_raises_parse_error_when_nothing_parsed():
    tree, path = _theme_tree()
    replies = {
        induction_tag(K.BACKGROUND, "time", ["Fantasy"], r): "no structure at all" for r in range(5)
    }
    gateway = Gateway(ScriptedBackend.by_tag(replies))
    with pytest.raises(ReplyParseError):
        induce_candidates(gateway, StubEmbedder(16), tree, path, K.BACKGROUND, "time", 2, SETTINGS)


# -- build_tree ------------------------------------------------------------------------------


def _fixture_build(fixture_data, tmp_path, checkpoint=None, gateway=None):
    gateway = gateway or Gateway(ScriptedBackend.by_tag(fixture_data["replies"]))
    return build_tree(
        gateway,
        StubEmbedder(16),
        BranchingConfig.from_dict(FIXTURE_BRANCHING),
        themes=FIXTURE_THEMES,
        settings=SETTINGS,
        checkpoint_path=checkpoint,
    )


def test_build_tree_scripted_end_to_end(fixture_data, tmp_path):
    tree, report = _fixture_build(fixture_data, tmp_path)
    designs = tree.enumerate_designs()
    assert len(designs) == 4
    assert report.ok
    assert [d.design_id for d in designs] == fixture_data["design_ids"]
    # breadth-first honored: every theme has both subkind backgrounds
    for theme in FIXTURE_THEMES:
        theme_cand = [c for c in tree.children_of([]) if c.text == theme][0]
        assert len(tree.children_of([theme_cand])) == 2


def test_build_tree_is_deterministic_across_runs(fixture_data, tmp_path):
    tree1, _ = _fixture_build(fixture_data, tmp_path)
    tree2, _ = _fixture_build(fixture_data, tmp_path)
    save_tree(tree1, tmp_path / "a.json")
    save_tree(tree2, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class FuseBackend:
    """Delegates to an inner backend, then dies after a fixed number of sends."""

    name = "fuse"

    def __init__(self, inner, fuse: int):
        self.inner = inner
        self.fuse = fuse
        self.sent = 0

    def send(self, request):
        if self.sent >= self.fuse:
            raise KeyboardInterrupt("simulated kill")
        self.sent += 1
        return self.inner.send(request)


def test_build_resumes_from_checkpoint_to_identical_tree(fixture_data, tmp_path):
    checkpoint = tmp_path / "checkpoint.json"
    # straight-through build for reference
    ref_tree, _ = _fixture_build(fixture_data, tmp_path)

    # interrupted build: dies midway through the persona level (after 6 calls:
    # 4 backgrounds + 2 personas)
    fused = Gateway(FuseBackend(ScriptedBackend.by_tag(fixture_data["replies"]), fuse=6))
    with pytest.raises(KeyboardInterrupt):
        _fixture_build(fixture_data, tmp_path, checkpoint=checkpoint, gateway=fused)
    partial = load_checkpoint(checkpoint)
    assert partial.enumerate_designs() == []  # interrupted before any twist
    backgrounds = [
        c for theme in partial.children_of([]) for c in partial.children_of([theme])
    ]
    assert len(backgrounds) == 4  # background level completed before the kill

    # resume with a fresh scripted gateway completes to the identical tree
    resumed, report = _fixture_build(fixture_data, tmp_path, checkpoint=checkpoint)
    assert report.ok
    assert resumed.to_nested() == ref_tree.to_nested()


def test_build_records_failed_subtree_and_continues(fixture_data, tmp_path):
    # drop one persona reply: that branch dies, the rest of the build survives
    broken = dict(fixture_data["replies"])
    victim = next(t for t in broken if t.startswith("induce:persona"))
    del broken[victim]
    gateway = Gateway(ScriptedBackend.by_tag(broken))
    tree, report = build_tree(
        gateway,
        StubEmbedder(16),
        BranchingConfig.from_dict(FIXTURE_BRANCHING),
        themes=FIXTURE_THEMES,
        settings=SETTINGS,
    )
    assert not report.ok
    errors = [e for e in report.entries if e.error]
    assert len(errors) == 1
    assert errors[0].kind == "persona"
    assert len(tree.enumerate_designs()) == 3  # one branch lost


def test_build_report_counts(fixture_data, tmp_path):
    _, report = _fixture_build(fixture_data, tmp_path)
    # 4 background calls + 4 persona + 4 event + 4 ending + 4 twist
    assert len(report.entries) == 20
    assert all(e.accepted == e.requested for e in report.entries)
    path = tmp_path / "report.jsonl"
    report.write_jsonl(path, header={"config": {"note": "test"}})
    lines = path.read_text().splitlines()
    assert len(lines) == 21
    assert '"record": "config"' in lines[0]


# -- baselines ----------------------------------------------------------------------------------


def test_vanilla_baseline_collects_ten():
    reply = "\n".join(f"{i}. Premise number {i} about something new." for i in range(1, 11))
    gateway = Gateway(ScriptedBackend.by_tag({"baseline:vanilla:0": reply}))
    premises = generate_baseline(
        gateway, StubEmbedder(16), "vanilla", 10, settings=StageSettings(model="m", temperature=0.6)
    )
    assert len(premises) == 10


def test_complex_baseline_requires_three_exemplars():
    gateway = Gateway(ScriptedBackend.by_order(["1. x"]))
    with pytest.raises(ValueError, match="3 exemplar"):
        generate_baseline(
            gateway, StubEmbedder(16), "complex", 5,
            exemplars=["one", "two"], settings=StageSettings(model="m"),
        )


def test_complex_baseline_embeds_exemplars():
    backend = ScriptedBackend.by_tag({"baseline:complex:0": "1. A premise."})
    gateway = Gateway(backend)
    generate_baseline(
        gateway, StubEmbedder(16), "complex", 1,
        exemplars=["First premise.", "Second premise.", "Third premise.", "Extra."],
        settings=StageSettings(model="m", temperature=0.6),
    )
    prompt = backend.requests[0].prompt
    assert "like below" in prompt
    assert "First premise.\nSecond premise.\nThird premise." in prompt
    assert "Extra." not in prompt  # only the first three exemplars


def test_baseline_records_temperature_0_6():
    backend = ScriptedBackend.by_tag({"baseline:vanilla:0": "1. A premise."})
    gateway = Gateway(backend)
    generate_baseline(
        gateway, StubEmbedder(16), "vanilla", 1, settings=StageSettings(model="m", temperature=0.6)
    )
    assert backend.requests[0].temperature == 0.6


def test_baseline_stalls_out_with_warning(caplog):
    replies = {f"baseline:vanilla:{r}": "1. Identical premise." for r in range(10)}
    gateway = Gateway(ScriptedBackend.by_tag(replies))
    with caplog.at_level("WARNING"):
        premises = generate_baseline(
            gateway, StubEmbedder(16), "vanilla", 5,
            settings=StageSettings(model="m", round_cap=3),
        )
    assert premises == ["Identical premise."]
    assert any("stopped at 1/5" in rec.message for rec in caplog.records)


def test_unknown_baseline_mode_rejected():
    gateway = Gateway(ScriptedBackend.by_order(["x"]))
    with pytest.raises(ValueError):
        generate_baseline(gateway, StubEmbedder(16), "fancy", 1, settings=StageSettings(model="m"))
