"""Prompt templates for induction, synthesis, verification, and judging.

Templates are embedded verbatim; a directory of ``<name>.txt`` files can
override any of them. Placeholders use ``str.format`` names. The wording
(including its rough edges) is deliberate and pinned by golden tests, so
edits here should be treated as behavior changes.
"""

from __future__ import annotations

from pathlib import Path

__all__ = ["PromptError", "TemplateLibrary", "TEMPLATES", "BACKGROUND_COMPONENTS"]


class PromptError(Exception):
    """Template missing or placeholder unfilled."""


# Background subkind -> the {component} wording used in the induction prompt.
BACKGROUND_COMPONENTS = {
    "time": "time",
    "place": "place",
    "time_and_place": "time and place",
}

TEMPLATES: dict[str, str] = {
    "induce_background": (
        "Tell me {count} backgrounds in {theme} themed novels and scripts.\n"
        "\n"
        "Each background should only include {component} behind literary works and no any other extra narratives.\n"
        "\n"
        "Each line starts with a serial number and a dot."
    ),
    "induce_persona_growth": (
        "The following is the theme and background of a novel or script:\n"
        "### Theme\n"
        "{theme}\n"
        "### Background\n"
        "{background}\n"
        "\n"
        "Based on the theme and background mentioned above, tell me {count} possible protagonists.\n"
        "The protagonist is the main character portrayed in the narratives about their growth.\n"
        "Each protagonist should only include a brief characterization, without specific names.\n"
        "Each output line starts with a serial number and a dot."
    ),
    "induce_persona_conflict": (
        "The following is the theme and background of a novel or script:\n"
        "### Theme\n"
        "{theme}\n"
        "### Background\n"
        "{background}\n"
        "\n"
        "Based on the theme and background mentioned above, tell me {count} possible (protagonist, antagonist) .\n"
        "The protagonist is the main character portrayed in the narratives about their growth.\n"
        "The main role of the antagonist is to create a conflict event with the protagonist to prevent it from achieving its goal.\n"
        "Each pair should be presented in the format: protagonist: <a brief characterization>; antagonist: <a brief characterization>.\n"
        "Each output line starts with a serial number and a dot, contains a (protagonist, antagonist) pair.\n"
        "Please remember to use protagonist and antagonist without specific names appearing."
    ),
    "induce_persona_cooperation": (
        "The following is the theme and background of a novel or script:\n"
        "### Theme\n"
        "{theme}\n"
        "### Background\n"
        "{background}\n"
        "\n"
        "Based on the theme and background mentioned above, tell me {count} possible (protagonist, deuteragonist) .\n"
        "The protagonist is the main character portrayed in the narratives about their growth.\n"
        "The main role of the deuteragonist is to collaborate with the protagonist to achieve its goal.\n"
        "Each pair should be presented in the format: protagonist: <a brief characterization>; deuteragonist: <a brief characterization>.\n"
        "Each output line starts with a serial number and a dot, contains a (protagonist, deuteragonist) pair.\n"
        "Please remember to use protagonist and deuteragonist without specific names appearing."
    ),
    "induce_event": (
        "The following is the theme, background and persona of a novel or script:\n"
        "### Theme\n"
        "{theme}\n"
        "### Background\n"
        "{background}\n"
        "### Persona\n"
        "{persona}\n"
        "\n"
        "Based on the theme, background and persona mentioned above, conceive two independent events that could run through the entire narrative context.\n"
        "\n"
        "Please use a concise and coherent sentence to describe the entire event."
    ),
    "induce_ending": (
        "The following is the theme, background, persona and main event of a novel or script:\n"
        "### Theme\n"
        "{theme}\n"
        "### Background\n"
        "{background}\n"
        "### Persona\n"
        "{persona}\n"
        "### Event\n"
        "{event}\n"
        "\n"
        "Based on the theme, background, persona and event mentioned above, conceive an concretized ending.\n"
        "\n"
        "Please use a concise and coherent sentence to describe the ending."
    ),
    "induce_twist": (
        "The following is the theme, background, persona, main event and ending of a novel or script:\n"
        "### Theme\n"
        "{theme}\n"
        "### Background\n"
        "{background}\n"
        "### Persona\n"
        "{persona}\n"
        "### Event\n"
        "{event}\n"
        "### Ending\n"
        "{ending}\n"
        "\n"
        "Based on the theme, background, persona, event and ending mentioned above, conceive a twist as an unique hook to connect the main event and ending.\n"
        "\n"
        "Please use a concise and coherent sentence to describe the twist."
    ),
    "synthesize": (
        "The following is the theme, background, persona, main event, final ending and twist of a novel or script:\n"
        "### Theme\n"
        "{theme}\n"
        "### Background\n"
        "{background}\n"
        "### Persona\n"
        "{persona}\n"
        "### Event\n"
        "{event}\n"
        "### Ending\n"
        "{ending}\n"
        "### Twist\n"
        "{twist}\n"
        "\n"
        "Please combine the aforementioned elements of a novel or script into one compact, concise, and coherent sentence as a story premise."
    ),
    "verify": (
        "Here is a story premise:\n"
        "\n"
        "{premise}\n"
        "\n"
        "Please help to verify:\n"
        "\n"
        "1. Does it contain obvious inconsistencies. For example, the background, plot, and characters do not match.\n"
        "\n"
        "2. Does it contain obvious factual errors. For example, there were obvious historical errors and time span errors.\n"
        "\n"
        "If there are any errors mentioned above, please return Yes wrapped by [[]], otherwise return No wrapped by [[]] without any other extra output."
    ),
    "judge_premise_fascination": (
        "Here is a story premise:\n"
        "\n"
        "{premise}\n"
        "\n"
        "Now let you give a score from 0 to 100 to assess to its fascination.\n"
        "\n"
        "Score 0 indicates that this premise is completely confused, while score 100 indicates that you really want to see the story created based on this premise.\n"
        "\n"
        "Requirement: just provide a deterministic score and provide a concise and brief explanation, with a blank line between the two.\n"
        "\n"
        "Score:"
    ),
    "judge_premise_completeness": (
        "Here is a story premise:\n"
        "\n"
        "{premise}\n"
        "\n"
        "Now let you give a score from 0 to 100 which represents its completeness level.\n"
        "\n"
        "Score 0 indicates that it lacks all elements , while score 100 indicates that it has all elements.\n"
        "\n"
        "Requirement: just provide a deterministic score and provide a concise and brief explanation, with a blank line between the two.\n"
        "\n"
        "Score:"
    ),
    "judge_premise_originality": (
        "Here is a story premise:\n"
        "\n"
        "{premise}\n"
        "\n"
        "Now let give you a score from 0 to 100 which represents your level of familiarity with it.\n"
        "\n"
        "Score 0 indicates that you have seen the exact same premise, while score 100 indicates that you have never seen the same premise at all.\n"
        "\n"
        "Your score should be based on the assumption that the candidate is at least a complete story premise. Otherwise, you should give a score 0.\n"
        "\n"
        "Requirement: just provide a deterministic score and provide a concise and brief explanation, with a blank line between the two.\n"
        "\n"
        "Score:"
    ),
    "judge_story_fascination": (
        "Here is a {story_type}:\n"
        "\n"
        "{story}\n"
        "\n"
        "Now let you give a score from 0 to 100 to assess to its fascination.\n"
        "\n"
        "Score 0 indicates that the {story_type} is completely confused, while score 100 signifies that the {story_type} is bound to become a worldwide sensation.\n"
        "\n"
        "Requirement: just provide a deterministic score and provide a concise and brief explanation, with a blank line between the two.\n"
        "\n"
        "Score:"
    ),
    "judge_story_completeness": (
        "Here is a {story_type}:\n"
        "\n"
        "{story}\n"
        "\n"
        "Now let you give a score from 0 to 100 which represents its completeness level.\n"
        "\n"
        "Score 0 indicates that it lacks all elements a {story_type} should have, while score 100 indicates that it has all elements a {story_type} should have.\n"
        "\n"
        "Requirement: just provide a deterministic score and provide a concise and brief explanation, with a blank line between the two.\n"
        "\n"
        "Score:"
    ),
    "judge_story_originality": (
        "Here is a {story_type}:\n"
        "\n"
        "{story}\n"
        "\n"
        "Now let give you a score from 0 to 100 which represents your level of familiarity with it.\n"
        "\n"
        "Score 0 indicates that you have seen {story_type}s that are very similar to as the one provided, while score 100 means that you have never seen a {story_type} that is very similar to the one provided.\n"
        "\n"
        "Requirement: just provide a deterministic score and provide a concise and brief explanation, with a blank line between the two.\n"
        "\n"
        "Score:"
    ),
    "baseline_vanilla": "Write 10 premises for novels or scripts in one sentence.",
    "baseline_complex": (
        "Write 10 premises for novels or scripts in one sentence like below.\n"
        "\n"
        "{exemplars}"
    ),
}


class TemplateLibrary:
    """Embedded templates with optional per-name file overrides."""

    def __init__(self, overrides_dir: str | Path | None = None):
        self._templates = dict(TEMPLATES)
        if overrides_dir is not None:
            root = Path(overrides_dir)
            if not root.is_dir():
                raise PromptError(f"template overrides dir not found: {root}")
            for path in sorted(root.glob("*.txt")):
                name = path.stem
                if name not in self._templates:
                    raise PromptError(f"override {path.name} does not match any known template")
                text = path.read_text(encoding="utf-8")
                self._templates[name] = text[:-1] if text.endswith("\n") else text

    def get(self, name: str) -> str:
        try:
            return self._templates[name]
        except KeyError:
            raise PromptError(f"unknown template {name!r}") from None

    def render(self, name: str, **values: object) -> str:
        template = self.get(name)
        try:
            return template.format(**values)
        except KeyError as exc:
            raise PromptError(f"template {name!r} is missing a value for {exc.args[0]!r}") from None
