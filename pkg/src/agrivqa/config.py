"""TOML configuration: gateway backend, model profiles, pipeline parameters.

Everything has a working default; a config file only overrides what it
names. The mock backend section makes whole deployments runnable offline.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .gateway import (
    DEFAULT_PROFILES,
    BackoffPolicy,
    CallLog,
    Gateway,
    HttpBackend,
    MockEntry,
    MockBackend,
    ModelProfile,
)
from .prompts import (
    DEFAULT_LEXICON,
    BUILTIN_VQA_EXEMPLARS,
    CAPTION_EXEMPLARS,
    BannedTermLexicon,
    ExemplarSet,
    PromptLibrary,
    load_exemplar_file,
    load_lexicon,
)
from .records import TaskKind, iter_jsonl


@dataclass(frozen=True)
class PipelineConfig:
    """Stage wiring and hyperparameters for one run."""

    caption_profile: str = "qwen-vl-chat"
    scorer_profile: str = "judge"
    vqa_profile: str = "qwen-vl-chat"
    judge_profile: str = "judge"
    threshold: float = 8.0
    n_max: int = 3
    shots: int = 3
    task: TaskKind = TaskKind.RECOGNITION
    dual_call: bool = False
    swap_judge: bool = False
    tiebreak_margin: float = 0.3
    seed: int = 0
    output_dir: str = "runs"
    workers: int = 4
    weights: dict[str, float] | None = None
    random_exemplars: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.threshold <= 10:
            raise ConfigError(f"threshold must be in (0, 10], got {self.threshold}")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")
        if not 0 <= self.shots <= 5:
            raise ConfigError(f"shots must be in 0..5, got {self.shots}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "caption_profile": self.caption_profile,
            "scorer_profile": self.scorer_profile,
            "vqa_profile": self.vqa_profile,
            "judge_profile": self.judge_profile,
            "threshold": self.threshold,
            "n_max": self.n_max,
            "shots": self.shots,
            "task": self.task.value,
            "dual_call": self.dual_call,
            "swap_judge": self.swap_judge,
            "tiebreak_margin": self.tiebreak_margin,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "weights": self.weights,
            "random_exemplars": self.random_exemplars,
        }


@dataclass
class AppConfig:
    """Everything a deployment needs: backend, profiles, prompts, dirs."""

    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    profiles: dict[str, ModelProfile] = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    backend_kind: str = "mock"  # "mock" | "http"
    endpoint: str = ""
    api_key_env: str = "AGRIVQA_API_KEY"
    mock_script_path: str | None = None
    templates_dir: str | None = None
    lexicon_path: str | None = None
    exemplar_paths: dict[str, str] = field(default_factory=dict)
    sessions_dir: str = "sessions"
    uploads_dir: str = "uploads"
    runs_dir: str = "runs"

    def profile(self, name: str) -> ModelProfile:
        try:
            return self.profiles[name]
        except KeyError:
            raise ConfigError(
                f"profile {name!r} is not configured; known: {sorted(self.profiles)}"
            ) from None

    def validate_roles(self) -> None:
        for role in ("caption_profile", "scorer_profile", "vqa_profile", "judge_profile"):
            self.profile(getattr(self.pipeline, role))

    def build_library(self) -> PromptLibrary:
        return PromptLibrary(self.templates_dir)

    def build_lexicon(self) -> BannedTermLexicon:
        if self.lexicon_path:
            return load_lexicon(self.lexicon_path)
        return DEFAULT_LEXICON

    def exemplars_for(self, task: TaskKind) -> ExemplarSet:
        path = self.exemplar_paths.get(task.value)
        if path:
            return load_exemplar_file(path, task)
        return BUILTIN_VQA_EXEMPLARS[task]

    def caption_exemplars(self) -> ExemplarSet:
        path = self.exemplar_paths.get("caption")
        if path:
            return load_exemplar_file(path, TaskKind.RECOGNITION)
        return CAPTION_EXEMPLARS

    def build_gateway(self, log: CallLog | None = None,
                      backoff: BackoffPolicy | None = None) -> Gateway:
        if self.backend_kind == "mock":
            backend = MockBackend(self._load_mock_script())
        elif self.backend_kind == "http":
            if not self.endpoint:
                raise ConfigError("http backend requires an endpoint URL")
            backend = HttpBackend(self.endpoint, self.api_key_env)
        else:
            raise ConfigError(f"unknown backend kind {self.backend_kind!r}")
        return Gateway(backend, log=log, backoff=backoff)

    def _load_mock_script(self) -> list[MockEntry]:
        if not self.mock_script_path:
            raise ConfigError("mock backend requires mock_script path in [gateway]")
        entries: list[MockEntry] = []
        for row in iter_jsonl(self.mock_script_path):
            repeat = int(row.get("times", 1))
            entry = MockEntry(
                match=row.get("match"),
                reply=row.get("reply"),
                fail=row.get("fail"),
            )
            entries.extend([entry] * repeat)
        if not entries:
            raise ConfigError(f"mock script {self.mock_script_path} is empty")
        return entries


_PROFILE_KEYS = {
    "temperature", "top_p", "max_tokens", "timeout", "max_retries",
    "reasoning_effort", "verbosity", "supports_vision",
}

_PIPELINE_KEYS = {
    "threshold", "n_max", "shots", "task", "dual_call", "swap_judge",
    "tiebreak_margin", "seed", "output_dir", "workers", "random_exemplars",
}


def load_config(path: str | Path | None = None, seed: int | None = None) -> AppConfig:
    """Build an AppConfig from an optional TOML file plus a CLI seed override."""
    config = AppConfig()
    if path is not None:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))

        gateway = raw.get("gateway", {})
        config.backend_kind = gateway.get("backend", config.backend_kind)
        config.endpoint = gateway.get("endpoint", config.endpoint)
        config.api_key_env = gateway.get("api_key_env", config.api_key_env)
        config.mock_script_path = gateway.get("mock_script", config.mock_script_path)

        for name, fields_ in raw.get("profiles", {}).items():
            unknown = set(fields_) - _PROFILE_KEYS
            if unknown:
                raise ConfigError(f"unknown profile keys for {name!r}: {sorted(unknown)}")
            base = config.profiles.get(name, ModelProfile(name=name))
            config.profiles[name] = replace(base, name=name, **fields_)

        pipeline_raw = dict(raw.get("pipeline", {}))
        weights = pipeline_raw.pop("weights", None)
        unknown = set(pipeline_raw) - _PIPELINE_KEYS
        if unknown:
            raise ConfigError(f"unknown pipeline keys: {sorted(unknown)}")
        if "task" in pipeline_raw:
            pipeline_raw["task"] = TaskKind(pipeline_raw["task"])
        roles = raw.get("roles", {})
        role_map = {
            "caption": "caption_profile",
            "scorer": "scorer_profile",
            "vqa": "vqa_profile",
            "judge": "judge_profile",
        }
        for short, long in role_map.items():
            if short in roles:
                pipeline_raw[long] = roles[short]
        if weights is not None:
            pipeline_raw["weights"] = {str(k): float(v) for k, v in weights.items()}
        config.pipeline = replace(config.pipeline, **pipeline_raw)

        prompts_raw = raw.get("prompts", {})
        config.templates_dir = prompts_raw.get("templates_dir", config.templates_dir)
        config.lexicon_path = prompts_raw.get("lexicon", config.lexicon_path)
        for key, value in prompts_raw.get("exemplars", {}).items():
            config.exemplar_paths[key] = value

        server_raw = raw.get("server", {})
        config.sessions_dir = server_raw.get("sessions_dir", config.sessions_dir)
        config.uploads_dir = server_raw.get("uploads_dir", config.uploads_dir)
        config.runs_dir = server_raw.get("runs_dir", config.runs_dir)

    if seed is not None:
        config.pipeline = replace(config.pipeline, seed=seed)
    config.validate_roles()
    return config
