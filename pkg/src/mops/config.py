"""Run configuration: one declarative JSON document, overridable by flags.

The effective config is embedded as a provenance header in every report the
CLI writes.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dedup import CachedEmbedder, EmbeddingProvider, HttpEmbedder, StubEmbedder
from .gateway import Gateway, LiveBackend, RetryPolicy, ScriptedBackend
from .induction import DEFAULT_THEMES, BranchingConfig, StageSettings
from .prompts import TemplateLibrary

__all__ = ["ConfigError", "RunConfig"]


class ConfigError(Exception):
    """Config file missing, malformed, or inconsistent."""


def _default_models() -> dict[str, str]:
    return {
        "induction": "gpt-3.5-turbo",
        "synthesis": "gpt-3.5-turbo",
        "verification": "gpt-3.5-turbo",
        "judge": "gpt-4-turbo",
        "baseline": "gpt-3.5-turbo",
    }


def _default_temperatures() -> dict[str, float]:
    return {
        "induction": 0.7,
        "synthesis": 0.7,
        "verification": 0.0,
        "judging": 0.0,
        "baseline": 0.6,
    }


def _default_max_tokens() -> dict[str, int]:
    return {
        "induction": 1024,
        "synthesis": 256,
        "verification": 64,
        "judging": 128,
        "baseline": 1024,
    }


@dataclass
class RunConfig:
    backend: str = "scripted"
    script_path: str | None = None
    base_url: str = "https://api.openai.com/v1"
    models: dict[str, str] = field(default_factory=_default_models)
    temperatures: dict[str, float] = field(default_factory=_default_temperatures)
    max_tokens: dict[str, int] = field(default_factory=_default_max_tokens)
    branching: BranchingConfig = field(default_factory=BranchingConfig)
    themes: list[str] = field(default_factory=lambda: list(DEFAULT_THEMES))
    epsilon: float = 0.85
    grid_m: int = 10
    seeds: list[int] = field(default_factory=lambda: [0])
    perplexity: float = 30.0
    tsne_iterations: int = 1000
    round_cap: int = 5
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    requests_per_minute: float | None = None
    embedding_provider: str = "stub"
    embedding_model: str = "all-MiniLM-L6-v2"
    embedding_dim: int = 32
    embedding_base_url: str | None = None
    embedding_cache: bool = True
    templates_dir: str | None = None
    output_dir: str = "runs/out"
    figures: bool = True

    def __post_init__(self) -> None:
        # script_path may stay unset: commands that never call the model
        # (evaluate --which diversity, curate) run without a script, and
        # make_gateway() rejects the gap when a command does need one.
        if self.backend not in ("scripted", "live"):
            raise ConfigError(f"backend must be scripted or live, got {self.backend!r}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.grid_m < 2:
            raise ConfigError(f"grid_m must be >= 2, got {self.grid_m}")
        if self.perplexity <= 0:
            raise ConfigError(f"perplexity must be positive, got {self.perplexity}")
        if not self.seeds:
            raise ConfigError("seeds must list at least one projection seed")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.embedding_provider not in ("stub", "local", "http"):
            raise ConfigError(f"unknown embedding provider {self.embedding_provider!r}")
        if not self.themes:
            raise ConfigError("themes must be non-empty")
        for stage, temp in self.temperatures.items():
            if not 0.0 <= temp <= 2.0:
                raise ConfigError(f"temperature for {stage} outside [0, 2]: {temp}")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data, base_dir=path.parent)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = [k for k in data if k not in known]
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "branching" in kwargs:
            try:
                kwargs["branching"] = BranchingConfig.from_dict(kwargs["branching"])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"invalid branching config: {exc}") from exc
        for key in ("models", "temperatures", "max_tokens"):
            if key in kwargs:
                merged = dict(getattr(cls(), key))
                merged.update(kwargs[key])
                kwargs[key] = merged
        cfg = cls(**kwargs)
        if base_dir is not None:
            for attr in ("script_path", "templates_dir"):
                value = getattr(cfg, attr)
                if value is not None and not Path(value).is_absolute():
                    setattr(cfg, attr, str(base_dir / value))
        return cfg

    def to_dict(self) -> dict:
        out = asdict(self)
        out["branching"] = {
            "backgrounds": dict(self.branching.backgrounds),
            "personas": dict(self.branching.personas),
            "events": self.branching.events,
            "endings": self.branching.endings,
            "twists": self.branching.twists,
        }
        return out

    # -- component builders -------------------------------------------------

    def make_gateway(self) -> Gateway:
        if self.backend == "scripted":
            if self.script_path is None:
                raise ConfigError("scripted backend requires script_path")
            if not Path(self.script_path).exists():
                raise ConfigError(f"script file not found: {self.script_path}")
            backend = ScriptedBackend.from_file(self.script_path)
        else:
            backend = LiveBackend(self.base_url)
        return Gateway(
            backend,
            retry=RetryPolicy(max_retries=self.max_retries, backoff_base=self.backoff_base),
            requests_per_minute=self.requests_per_minute,
            max_in_flight=self.max_in_flight,
        )

    def make_embedder(self, cache_dir: str | Path | None = None) -> EmbeddingProvider:
        if self.embedding_provider == "stub":
            provider: EmbeddingProvider = StubEmbedder(dim=self.embedding_dim)
        elif self.embedding_provider == "http":
            if not self.embedding_base_url:
                raise ConfigError("http embedding provider requires embedding_base_url")
            provider = HttpEmbedder(
                self.embedding_base_url, self.embedding_model, os.environ.get("MOPS_API_KEY", "")
            )
        else:
            from .dedup import SentenceTransformerEmbedder

            provider = SentenceTransformerEmbedder(self.embedding_model)
        if self.embedding_cache and cache_dir is not None:
            return CachedEmbedder(provider, Path(cache_dir) / "embedding_cache.jsonl")
        return provider

    def make_templates(self) -> TemplateLibrary:
        return TemplateLibrary(self.templates_dir)

    def stage_settings(self, stage: str) -> StageSettings:
        temp_key = "judging" if stage == "judge" else stage
        return StageSettings(
            model=self.models[stage],
            temperature=self.temperatures[temp_key],
            max_tokens=self.max_tokens.get(temp_key, 1024),
            round_cap=self.round_cap,
            epsilon=self.epsilon,
        )
