"""One config file (YAML or JSON) plus ``NEWSRAG_`` environment overrides.

Nested keys use a double underscore: ``NEWSRAG_LLM__ENDPOINT_URL=http://...``.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from .chunker import ChunkPolicy
from .core import ValidationError
from .embedder import EmbedderConfig
from .engine import EngineConfig
from .evaluation import JudgeConfig
from .index import SearchFilter
from .llm import LlmClientConfig

ENV_PREFIX = "NEWSRAG_"


@dataclass
class EngineSettings:
    k: int = 4
    use_rag: bool = True
    language: Optional[str] = None
    source: Optional[str] = None
    max_prompt_chars: int = 12_000

    def build(self) -> EngineConfig:
        return EngineConfig(
            k=self.k,
            filter=SearchFilter(language=self.language, source=self.source),
            use_rag=self.use_rag,
            max_prompt_chars=self.max_prompt_chars,
        )


@dataclass
class ChunkSettings:
    max_chars: int = 1000
    overlap_chars: int = 200

    def build(self) -> ChunkPolicy:
        policy = ChunkPolicy(self.max_chars, self.overlap_chars)
        policy.validate()
        return policy


@dataclass
class ServiceConfig:
    bind_addr: str = "127.0.0.1:8080"
    snapshot_path: str = "index.nrvi"
    log_level: str = "INFO"
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    llm: LlmClientConfig = field(default_factory=LlmClientConfig)
    engine: EngineSettings = field(default_factory=EngineSettings)
    chunking: ChunkSettings = field(default_factory=ChunkSettings)
    judge: JudgeConfig = field(default_factory=JudgeConfig)

    @property
    def host_port(self) -> tuple[str, int]:
        host, _, port = self.bind_addr.rpartition(":")
        if not host or not port.isdigit():
            raise ValidationError(f"bind_addr must be host:port, got {self.bind_addr!r}")
        return host, int(port)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(value: Any, current: Any, name: str) -> Any:
    if not isinstance(value, str):
        return value
    if isinstance(current, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"{name}: expected a boolean, got {value!r}")
    try:
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
    except ValueError as e:
        raise ValidationError(f"{name}: {e}") from e
    if current is None and value.strip().lower() in ("", "null", "none"):
        return None
    return value


def _apply(obj: Any, data: Mapping[str, Any], path: str = "") -> None:
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ValidationError(f"unknown config key {path}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, Mapping):
                raise ValidationError(f"config key {path}{key} must be a mapping")
            _apply(current, value, f"{path}{key}.")
        else:
            setattr(obj, key, _coerce(value, current, path + key))


def env_overrides(env: Mapping[str, str]) -> dict:
    out: dict = {}
    for key, value in env.items():
        if not key.startswith(ENV_PREFIX):
            continue
        parts = key[len(ENV_PREFIX) :].lower().split("__")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def load_config(path: Optional[Union[str, Path]] = None, env: Optional[Mapping[str, str]] = None) -> ServiceConfig:
    cfg = ServiceConfig()
    if path is not None:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(data, Mapping):
            raise ValidationError(f"{path}: config must be a mapping")
        _apply(cfg, data)
    _apply(cfg, env_overrides(os.environ if env is None else env))
    cfg.embedder.validate()
    cfg.judge.validate()
    return cfg
