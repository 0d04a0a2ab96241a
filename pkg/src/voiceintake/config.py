"""Service configuration: TOML file plus environment overrides.

Environment variables beat file values; both beat defaults. The ASR/LLM
endpoints accept the scheme "mock:" to run fully offline with the
deterministic clients.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

ENV_PREFIX = "VOICEINTAKE_"


@dataclass
class ServiceConfig:
    data_dir: str = "./data"
    host: str = "127.0.0.1"
    port: int = 8080
    admin_token: str = ""
    asr_endpoint: str = "mock:"
    llm_endpoint: str = "mock:"
    asr_bearer_env: str = "VOICEINTAKE_ASR_TOKEN"
    llm_bearer_env: str = "VOICEINTAKE_LLM_TOKEN"
    max_upload_bytes: int = 64 * 1024 * 1024
    transcribe_concurrency: int = 4
    eval_concurrency: int = 2


def load_config(path: Optional[str | Path] = None) -> ServiceConfig:
    cfg = ServiceConfig()
    if path:
        data = tomllib.loads(Path(path).read_text())
        for f in fields(ServiceConfig):
            if f.name in data:
                setattr(cfg, f.name, data[f.name])
    for f in fields(ServiceConfig):
        env_value = os.environ.get(ENV_PREFIX + f.name.upper())
        if env_value is not None:
            if f.type == "int":
                setattr(cfg, f.name, int(env_value))
            else:
                setattr(cfg, f.name, env_value)
    return cfg


def make_asr_client(cfg: ServiceConfig):
    from .transcription import HttpAsrClient, MockAsrClient

    if cfg.asr_endpoint.startswith("mock"):
        return MockAsrClient()
    return HttpAsrClient(cfg.asr_endpoint, bearer_token=os.environ.get(cfg.asr_bearer_env))


def make_llm_client(cfg: ServiceConfig):
    from .evaluation import HttpLlmClient, MockLlmClient

    if cfg.llm_endpoint.startswith("mock"):
        return MockLlmClient()
    return HttpLlmClient(cfg.llm_endpoint, bearer_token=os.environ.get(cfg.llm_bearer_env))
