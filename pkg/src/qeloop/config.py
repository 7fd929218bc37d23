"""Project configuration: a single YAML file in the project root; environment
variables supply credentials only (the config names the variable, never the
secret itself).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from qeloop.artefacts import ArtefactKind
from qeloop.rubric import Lexicons
from qeloop.similarity import Thresholds
from qeloop.textproc import load_default_lexicon, load_lexicon

DEFAULT_ENERGY_PER_OP_KWH = 0.1
DEFAULT_GRID_FACTOR = 0.0004


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"  # "mock" or "remote"
    endpoint: str = ""
    model: str = ""
    token_env: str = ""
    timeout: float = 60.0
    retries: int = 2


@dataclass(frozen=True)
class ProjectConfig:
    workspace: Path = Path("workspace")
    thresholds: dict[ArtefactKind, Thresholds] = field(
        default_factory=lambda: {kind: Thresholds() for kind in ArtefactKind}
    )
    generation: ProviderConfig = ProviderConfig()
    embedding: ProviderConfig = ProviderConfig()
    embedding_dim: int = 256
    target_kind: ArtefactKind = ArtefactKind.TEST_CASE
    batch_size: int = 10
    max_cycles: int = 3
    rubric_delta: float = 0.1
    cosine_delta: float = 0.02
    min_negative_level: float = 0.5
    energy_per_op_kwh: float = DEFAULT_ENERGY_PER_OP_KWH
    grid_factor_tons_per_kwh: float = DEFAULT_GRID_FACTOR
    service_host: str = "127.0.0.1"
    service_port: int = 8765
    service_token_env: str = ""  # names an env var; empty disables auth
    cors_origin: str = "*"
    lexicon_paths: dict[str, str] = field(default_factory=dict)
    rubric_backend: str = "heuristic"  # or "llm-judge"
    prompt_paths: dict[str, str] = field(default_factory=dict)  # forward/reverse/judge

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_cycles < 1:
            raise ConfigError("max_cycles must be >= 1")
        if self.energy_per_op_kwh < 0 or self.grid_factor_tons_per_kwh < 0:
            raise ConfigError("energy rates must be non-negative")
        if self.rubric_backend not in ("heuristic", "llm-judge"):
            raise ConfigError(f"unknown rubric_backend {self.rubric_backend!r}")

    def prompt_template(self, name: str) -> str | None:
        """Project-overridden prompt template text, or None for the default."""
        override = self.prompt_paths.get(name)
        if override:
            return Path(override).read_text(encoding="utf-8")
        return None

    def thresholds_for(self, kind: ArtefactKind) -> Thresholds:
        return self.thresholds.get(kind, Thresholds())

    def load_lexicons(self) -> Lexicons:
        def pick(name: str, default_file: str) -> frozenset[str]:
            override = self.lexicon_paths.get(name)
            if override:
                return load_lexicon(override)
            return load_default_lexicon(default_file)

        return Lexicons(
            ambiguity=pick("ambiguity", "ambiguity_lexicon.txt"),
            verbs=pick("verbs", "verb_lexicon.txt"),
            actors=pick("actors", "actors.txt"),
            outcomes=pick("outcomes", "outcomes.txt"),
            stopwords=pick("stopwords", "stopwords.txt"),
        )


_KIND_ALIASES = {
    "requirement": ArtefactKind.REQUIREMENT,
    "testcase": ArtefactKind.TEST_CASE,
    "bdd": ArtefactKind.BDD_SCENARIO,
}


def _parse_thresholds(raw: dict) -> dict[ArtefactKind, Thresholds]:
    thresholds = {kind: Thresholds() for kind in ArtefactKind}
    for key, values in (raw or {}).items():
        kind = _KIND_ALIASES.get(str(key).lower())
        if kind is None:
            raise ConfigError(f"unknown artefact kind in thresholds: {key!r}")
        thresholds[kind] = Thresholds(
            high=float(values.get("high", 0.8)),
            medium=float(values.get("medium", 0.6)),
            low=float(values.get("low", 0.3)),
        )
    return thresholds


def _parse_provider(raw: dict) -> ProviderConfig:
    raw = raw or {}
    return ProviderConfig(
        kind=str(raw.get("kind", "mock")),
        endpoint=str(raw.get("endpoint", "")),
        model=str(raw.get("model", "")),
        token_env=str(raw.get("token_env", "")),
        timeout=float(raw.get("timeout", 60.0)),
        retries=int(raw.get("retries", 2)),
    )


def load_config(path: str | Path | None) -> ProjectConfig:
    """Load a project config file; a missing path yields the defaults."""
    if path is None:
        return ProjectConfig()
    path = Path(path)
    if not path.exists():
        return ProjectConfig()
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from exc
    target = str(raw.get("target_kind", "testcase")).lower()
    if target not in _KIND_ALIASES:
        raise ConfigError(f"unknown target_kind {target!r}")
    convergence = raw.get("convergence") or {}
    energy = raw.get("energy") or {}
    service = raw.get("service") or {}
    return ProjectConfig(
        workspace=Path(raw.get("workspace", "workspace")),
        thresholds=_parse_thresholds(raw.get("thresholds")),
        generation=_parse_provider(raw.get("generation")),
        embedding=_parse_provider(raw.get("embedding")),
        embedding_dim=int(raw.get("embedding_dim", 256)),
        target_kind=_KIND_ALIASES[target],
        batch_size=int(raw.get("batch_size", 10)),
        max_cycles=int(raw.get("max_cycles", 3)),
        rubric_delta=float(convergence.get("rubric_delta", 0.1)),
        cosine_delta=float(convergence.get("cosine_delta", 0.02)),
        min_negative_level=float(raw.get("min_negative_level", 0.5)),
        energy_per_op_kwh=float(energy.get("per_op_kwh", DEFAULT_ENERGY_PER_OP_KWH)),
        grid_factor_tons_per_kwh=float(energy.get("grid_factor", DEFAULT_GRID_FACTOR)),
        service_host=str(service.get("host", "127.0.0.1")),
        service_port=int(service.get("port", 8765)),
        service_token_env=str(service.get("token_env", "")),
        cors_origin=str(service.get("cors_origin", "*")),
        lexicon_paths={str(k): str(v) for k, v in (raw.get("lexicons") or {}).items()},
        rubric_backend=str(raw.get("rubric_backend", "heuristic")),
        prompt_paths={str(k): str(v) for k, v in (raw.get("prompts") or {}).items()},
    )
