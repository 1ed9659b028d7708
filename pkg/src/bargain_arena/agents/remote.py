"""Chat-completion client so any hosted or local model can play buyer or seller."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

from ..errors import InfrastructureError
from ..protocol import Grammar, Role
from .prompts import Persona, PersonaSpec, buyer_system_prompt, seller_system_prompt

log = logging.getLogger(__name__)

ENV_ENDPOINT = "ARENA_ENDPOINT"
ENV_API_KEY = "ARENA_API_KEY"
ENV_MODEL = "ARENA_MODEL"


class TransportError(InfrastructureError):
    pass


class RemoteStatusError(InfrastructureError):
    def __init__(self, status: int, payload: str):
        super().__init__(f"endpoint returned HTTP {status}: {payload[:500]}")
        self.status = status
        self.payload = payload


@dataclass(frozen=True)
class RemoteModelConfig:
    endpoint: str
    model_name: str
    temperature: float = 1.0
    max_tokens: int = 4000
    timeout: float = 120.0
    max_retries: int = 3
    path: str = "/chat/completions"
    api_key: str | None = field(default=None, repr=False)
    backoff: float = 0.5

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def url(self) -> str:
        return self.endpoint.rstrip("/") + "/" + self.path.lstrip("/")

    @classmethod
    def from_env(cls, model_name: str | None = None, endpoint: str | None = None, **kwargs) -> "RemoteModelConfig":
        endpoint = endpoint or os.environ.get(ENV_ENDPOINT, "").strip()
        model_name = model_name or os.environ.get(ENV_MODEL, "").strip()
        if not endpoint:
            raise ValueError(f"no endpoint configured (set {ENV_ENDPOINT} or pass --endpoint)")
        if not model_name:
            raise ValueError(f"no model configured (set {ENV_MODEL} or pass --model)")
        kwargs.setdefault("api_key", os.environ.get(ENV_API_KEY) or None)
        return cls(endpoint=endpoint, model_name=model_name, **kwargs)


def build_messages(system: str, context: str, visible_history: Sequence[str], own_role: Role) -> list[dict]:
    """Opponent turns become ``user`` messages, the agent's own become ``assistant``."""
    messages = [{"role": "system", "content": system}, {"role": "user", "content": context}]
    for i, text in enumerate(visible_history):
        author = "buyer" if i % 2 == 0 else "seller"
        role = "assistant" if author == own_role else "user"
        if messages[-1]["role"] == role:
            messages[-1] = {"role": role, "content": messages[-1]["content"] + "\n\n" + text}
        else:
            messages.append({"role": role, "content": text})
    return messages


_shared_client: httpx.Client | None = None


def _client() -> httpx.Client:
    global _shared_client
    if _shared_client is None:
        _shared_client = httpx.Client()
    return _shared_client


def remote_next_turn(
    config: RemoteModelConfig,
    system: str,
    visible_history: Sequence[str],
    *,
    context: str = "",
    own_role: Role = "buyer",
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    body = {
        "model": config.model_name,
        "messages": build_messages(system, context, visible_history, own_role),
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    headers = {"Authorization": f"Bearer {config.api_key}"} if config.api_key else {}
    client = client or _client()
    last: Exception | None = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            sleep(config.backoff * 2 ** (attempt - 1))
        try:
            resp = client.post(config.url, json=body, headers=headers, timeout=config.timeout)
        except httpx.TransportError as exc:
            last = exc
            log.warning("transport error on attempt %d/%d: %s", attempt + 1, config.max_retries + 1, exc)
            continue
        if resp.status_code >= 400:
            raise RemoteStatusError(resp.status_code, resp.text)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RemoteStatusError(resp.status_code, f"unexpected response body: {resp.text}") from exc
    raise TransportError(f"{config.url} unreachable after {config.max_retries + 1} attempts: {last}")


@dataclass
class RemoteAgent:
    config: RemoteModelConfig
    role: Role
    persona: PersonaSpec | Persona | str = Persona.DEFAULT
    grammar: Grammar = Grammar.LABELED
    client: httpx.Client | None = None

    @property
    def system(self) -> str:
        return buyer_system_prompt() if self.role == "buyer" else seller_system_prompt(self.persona)

    def next_turn(self, visible_history: Sequence[str], side_context: str, rng_seed: int) -> str:
        return remote_next_turn(
            self.config, self.system, visible_history,
            context=side_context, own_role=self.role, client=self.client,
        )
