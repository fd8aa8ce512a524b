"""Generator backends: OpenAI-compatible HTTP endpoints and a scripted mock.

Token log-probabilities come straight off the wire: never rescaled,
truncated or reordered. Results can be cached on disk keyed by
(backend-id, prompt, max_tokens, temperature); temperature participates in
the key so different decoding settings never alias.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .errors import ContractError, GenerationError, ParseError, ScriptedMissError

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"

# trailing end-of-sequence markers some completion backends include in the
# token stream; excluded from the answer-token set
_EOS_TOKENS = {"<|endoftext|>", "<|end|>", "<|eot_id|>", "<|im_end|>", "</s>"}


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int = 64
    temperature: float = 0.0
    want_logprobs: bool = False

    def __post_init__(self):
        if not self.prompt:
            raise ContractError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ContractError("max_tokens must be positive")
        if self.temperature < 0:
            raise ContractError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    token_logprobs: tuple[tuple[str, float], ...] = ()
    finish_reason: str = FINISH_STOP

    def __post_init__(self):
        for token, logprob in self.token_logprobs:
            if logprob > 0:
                raise GenerationError(
                    f"backend delivered a positive logprob {logprob!r} for token {token!r}"
                )

    def logprobs(self) -> list[float]:
        return [lp for _, lp in self.token_logprobs]


class GeneratorHandle(Protocol):
    backend_id: str

    def complete(self, request: GenerationRequest) -> GenerationResult: ...


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockGenerator:
    """Deterministic scripted backend keyed by exact prompt string.

    A prompt without a script entry raises ScriptedMissError naming the
    prompt hash; nothing is ever improvised. Thread-safe.
    """

    def __init__(self, script: dict[str, GenerationResult] | None = None):
        self._by_digest: dict[str, GenerationResult] = {}
        self._lock = threading.Lock()
        self.call_count = 0
        for prompt, result in (script or {}).items():
            self.add(prompt, result)
        self.backend_id = "mock"

    def add(
        self,
        prompt: str,
        result: GenerationResult | None = None,
        *,
        text: str | None = None,
        token_logprobs: list | None = None,
        finish_reason: str = FINISH_STOP,
        by_digest: str | None = None,
    ) -> None:
        """Register a scripted response for a prompt (or a prompt hash)."""
        if result is None:
            pairs = tuple(
                (str(t), float(lp)) for t, lp in (token_logprobs or [])
            )
            result = GenerationResult(text or "", pairs, finish_reason)
        digest = by_digest if by_digest is not None else prompt_digest(prompt)
        self._by_digest[digest] = result

    @classmethod
    def from_file(cls, path: str | Path) -> "MockGenerator":
        """Load a script file: one record per line with prompt or prompt_sha256."""
        mock = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    digest = record.get("prompt_sha256")
                    if digest is None:
                        digest = prompt_digest(str(record["prompt"]))
                    mock.add(
                        "",
                        by_digest=str(digest),
                        text=str(record["text"]),
                        token_logprobs=record.get("token_logprobs", []),
                        finish_reason=record.get("finish_reason", FINISH_STOP),
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(f"{path}:{lineno}: malformed script record") from exc
        return mock

    def complete(self, request: GenerationRequest) -> GenerationResult:
        digest = prompt_digest(request.prompt)
        with self._lock:
            self.call_count += 1
            result = self._by_digest.get(digest)
        if result is None:
            raise ScriptedMissError(digest)
        return result


class HttpGenerator:
    """OpenAI-compatible completions / chat-completions client."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api: str = "completions",
        api_key: str | None = None,
        retries: int = 3,
        timeout: float = 120.0,
        backoff: float = 0.5,
        logprob_base: str = "e",
    ):
        if api not in ("completions", "chat"):
            raise ContractError(f"unknown api flavour {api!r}")
        if str(logprob_base) not in ("e", "10"):
            raise ContractError("logprob_base must be 'e' (natural log) or '10'")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api = api
        self.api_key = api_key
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff
        self.logprob_base = str(logprob_base)
        self.backend_id = f"http:{api}:{model}"
        self.call_count = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _payload(self, request: GenerationRequest) -> tuple[str, dict]:
        if self.api == "completions":
            payload: dict = {
                "model": self.model,
                "prompt": request.prompt,
                "max_tokens": request.max_tokens,
                "temperature": request.temperature,
            }
            if request.want_logprobs:
                payload["logprobs"] = 0
            return f"{self.base_url}/completions", payload
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.want_logprobs:
            payload["logprobs"] = True
        return f"{self.base_url}/chat/completions", payload

    def complete(self, request: GenerationRequest) -> GenerationResult:
        import requests

        self.call_count += 1
        url, payload = self._payload(request)
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                response = requests.post(
                    url, json=payload, headers=self._headers(), timeout=self.timeout
                )
                response.raise_for_status()
                return self.parse_response(response.json(), self.api, self.logprob_base)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * (2**attempt))
            except requests.HTTPError as exc:
                raise GenerationError(f"generation endpoint error: {exc}") from exc
        raise GenerationError(f"generation endpoint unreachable after retries: {last_error}")

    @staticmethod
    def parse_response(
        body: dict, api: str = "completions", logprob_base: str = "e"
    ) -> GenerationResult:
        """Parse a wire response, preserving logprob values exactly.

        A trailing end-of-sequence token reported by the backend is dropped
        from the answer-token set; everything else is kept verbatim. The
        only exception is an endpoint declared (in configuration) to emit
        base-10 logprobs, whose values are converted to nats here.
        """
        try:
            choice = body["choices"][0]
            finish = choice.get("finish_reason") or FINISH_STOP
            if api == "completions":
                text = choice.get("text", "")
                lp = choice.get("logprobs") or {}
                tokens = lp.get("tokens") or []
                values = lp.get("token_logprobs") or []
                pairs = [
                    (str(t), float(v)) for t, v in zip(tokens, values) if v is not None
                ]
            else:
                message = choice.get("message") or {}
                text = message.get("content", "") or ""
                lp = choice.get("logprobs") or {}
                content = lp.get("content") or []
                pairs = [
                    (str(item["token"]), float(item["logprob"])) for item in content
                ]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise GenerationError(f"malformed generation response: {exc}") from exc
        if pairs and pairs[-1][0] in _EOS_TOKENS:
            pairs = pairs[:-1]
        if str(logprob_base) == "10":
            pairs = [(t, v * math.log(10.0)) for t, v in pairs]
        if finish not in (FINISH_STOP, FINISH_LENGTH):
            finish = FINISH_STOP if finish else FINISH_ERROR
        return GenerationResult(text, tuple(pairs), finish)


class GenerationCache:
    """Persistent JSONL cache of generation results."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[str, GenerationResult] = {}
        if self.path.exists():
            self._load()

    @staticmethod
    def key(backend_id: str, request: GenerationRequest) -> str:
        blob = json.dumps(
            [backend_id, request.prompt, request.max_tokens, request.temperature],
            ensure_ascii=False,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    self._index[record["key"]] = GenerationResult(
                        record["text"],
                        tuple((str(t), float(v)) for t, v in record["token_logprobs"]),
                        record.get("finish_reason", FINISH_STOP),
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(f"{self.path}:{lineno}: malformed cache record") from exc

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: str) -> GenerationResult | None:
        return self._index.get(key)

    def put(self, key: str, result: GenerationResult) -> None:
        with self._lock:
            if key in self._index:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            record = {
                "key": key,
                "text": result.text,
                "token_logprobs": [[t, v] for t, v in result.token_logprobs],
                "finish_reason": result.finish_reason,
            }
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            self._index[key] = result


def generate(
    backend: GeneratorHandle,
    request: GenerationRequest,
    cache: GenerationCache | None = None,
) -> GenerationResult:
    """Run one generation, serving repeats from the cache when present."""
    key = None
    if cache is not None:
        key = GenerationCache.key(backend.backend_id, request)
        cached = cache.get(key)
        if cached is not None:
            return cached
    result = backend.complete(request)
    if cache is not None and key is not None:
        cache.put(key, result)
    return result
