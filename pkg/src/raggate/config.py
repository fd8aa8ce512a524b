"""Run configuration: JSON file, environment overrides, flag overrides.

Precedence is flag > environment variable > config file. Backends are
constructed lazily from the parsed config so a --dry-run never touches
the network.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .embedding import EmbeddingCache, HashEmbedder, HttpEmbedder, ScriptedEmbedder
from .errors import ConfigError
from .generator import GenerationCache, HttpGenerator, MockGenerator
from .pipeline import RunConfig

ENV_GENERATOR_URL = "RAGGATE_GENERATOR_URL"
ENV_EMBEDDER_URL = "RAGGATE_EMBEDDER_URL"
ENV_API_KEY = "RAGGATE_API_KEY"
ENV_U_THRESHOLD = "RAGGATE_U_THRESHOLD"


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config root must be an object")
    return cfg


def parse_threshold(value) -> float:
    """Parse a threshold; accepts the string "-inf" force-trigger sentinel."""
    try:
        threshold = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid u_threshold {value!r}") from exc
    if threshold != float("-inf") and threshold < 0:
        raise ConfigError("u_threshold must be >= 0 (or -inf to force retrieval)")
    return threshold


def run_config_from(cfg: dict, overrides: dict | None = None) -> RunConfig:
    run = dict(cfg.get("run", {}))
    env_threshold = os.environ.get(ENV_U_THRESHOLD)
    if env_threshold is not None:
        run["u_threshold"] = env_threshold
    for key, value in (overrides or {}).items():
        if value is not None:
            run[key] = value
    kwargs: dict = {}
    if "u_threshold" in run:
        kwargs["u_threshold"] = parse_threshold(run["u_threshold"])
    for key in ("n_per_path", "k_final", "concurrency"):
        if key in run:
            try:
                kwargs[key] = int(run[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {key}: {run[key]!r}") from exc
    if "temperature" in run:
        kwargs["temperature"] = float(run["temperature"])
    if "max_tokens" in run:
        if not isinstance(run["max_tokens"], dict):
            raise ConfigError("run.max_tokens must be an object")
        kwargs["max_tokens"] = {k: int(v) for k, v in run["max_tokens"].items()}
    return RunConfig(**kwargs)


def _api_key(section: dict) -> str | None:
    env_name = section.get("api_key_env")
    if env_name:
        return os.environ.get(str(env_name))
    return os.environ.get(ENV_API_KEY)


def build_embedder(cfg: dict):
    section = dict(cfg.get("embedder", {"type": "hash"}))
    kind = section.get("type", "hash")
    if kind == "hash":
        return HashEmbedder(
            dim=int(section.get("dim", 32)),
            batch_size=int(section.get("batch_size", 64)),
        )
    if kind == "scripted":
        script = section.get("script")
        if not script:
            raise ConfigError("scripted embedder requires a script path")
        return ScriptedEmbedder.from_file(script)
    if kind == "http":
        base_url = os.environ.get(ENV_EMBEDDER_URL) or section.get("base_url")
        model = section.get("model")
        if not base_url or not model:
            raise ConfigError("http embedder requires base_url and model")
        return HttpEmbedder(
            base_url=str(base_url),
            model=str(model),
            api_key=_api_key(section),
            batch_size=int(section.get("batch_size", 64)),
            retries=int(section.get("retries", 3)),
            timeout=float(section.get("timeout", 60.0)),
        )
    raise ConfigError(f"unknown embedder type {kind!r}")


def build_generator(cfg: dict):
    section = dict(cfg.get("generator", {}))
    kind = section.get("type")
    if kind == "mock":
        script = section.get("script")
        if not script:
            raise ConfigError("mock generator requires a script path")
        return MockGenerator.from_file(script)
    if kind == "http":
        base_url = os.environ.get(ENV_GENERATOR_URL) or section.get("base_url")
        model = section.get("model")
        if not base_url or not model:
            raise ConfigError("http generator requires base_url and model")
        return HttpGenerator(
            base_url=str(base_url),
            model=str(model),
            api=str(section.get("api", "completions")),
            api_key=_api_key(section),
            retries=int(section.get("retries", 3)),
            timeout=float(section.get("timeout", 120.0)),
            logprob_base=str(section.get("logprob_base", "e")),
        )
    raise ConfigError("config requires a generator section with type mock or http")


def build_caches(cfg: dict) -> tuple[EmbeddingCache | None, GenerationCache | None]:
    section = cfg.get("caches", {})
    embed_cache = gen_cache = None
    if section.get("embeddings"):
        embed_cache = EmbeddingCache(section["embeddings"])
    if section.get("generations"):
        gen_cache = GenerationCache(section["generations"])
    return embed_cache, gen_cache
