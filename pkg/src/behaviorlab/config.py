"""Run configuration with layered precedence.

CLI flags override environment variables (``BEHAVIORLAB_<FIELD>``), which
override the JSON config file, which overrides the dataclass defaults. The
effective configuration is hashed and echoed into every report artifact so a
result can always be traced to its settings.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

ENV_PREFIX = "BEHAVIORLAB_"


@dataclass
class RunConfig:
    corpus: str = "corpus"
    history: int = 6
    horizon: int = 6
    seed: int = 0
    temperature: float = 1.0

    backend: str = "mock"  # mock | remote
    mock_mode: str = "oracle"
    verb_noise: float = 0.0
    noun_noise: float = 0.0
    base_url: str = ""
    api_key_env: str = "BEHAVIORLAB_API_KEY"
    model_id: str = "mock-oracle"
    max_output_tokens: int = 512
    max_in_flight: int = 4
    max_retries: int = 3
    resize_px: int = 0  # 0 = pass frames through unmodified

    icl_count: int = 0
    max_images: int = 50

    responses_per_input: int = 8  # J
    beta: float = 0.1

    split_ratio: float = 0.7
    stride: int = 6
    render_frames: bool = False

    host: str = "127.0.0.1"
    port: int = 8799
    ui_dir: str = "frontend/dist"

    order_sensitive: bool = True
    open_vocab: bool = False  # accept unregistered scene-graph tokens
    report_dir: str = ""  # default: <corpus>/reports


def _coerce(value: str, target_type: type) -> Any:
    if target_type is bool:
        return value.strip().lower() in ("1", "true", "yes", "on")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def load_config(
    path: str | None = None,
    env: Mapping[str, str] = os.environ,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    values: dict[str, Any] = {}
    if path:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(raw) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(raw)
    defaults = RunConfig()
    for f in fields(RunConfig):
        env_key = ENV_PREFIX + f.name.upper()
        if env_key in env:
            values[f.name] = _coerce(env[env_key], type(getattr(defaults, f.name)))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def effective_json(cfg: RunConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(effective_json(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
