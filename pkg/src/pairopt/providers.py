"""Generation-provider backends: live HTTP, replay transcripts, scripted.

Transcripts are ordered JSONL records of (prompt hash, prompt, response,
token counts).  Replay keeps a FIFO queue per prompt hash so repeated
identical prompts (the N generation samples) replay their distinct
responses in call order.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol

from .errors import ProviderUnavailable

API_KEY_ENV_VAR = "PAIROPT_API_KEY"


@dataclass
class ProviderReply:
    text: str
    prompt_tokens: int
    completion_tokens: int


@dataclass
class ProviderCall:
    provider_id: str
    seed: int
    prompt: str
    response: str
    prompt_tokens: int
    completion_tokens: int

    def to_record(self) -> dict:
        return {
            "prompt_hash": prompt_hash(self.prompt),
            "prompt": self.prompt,
            "response": self.response,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


class GenerationProvider(Protocol):
    provider_id: str

    def complete(self, prompt: str, seed: int) -> ProviderReply: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def estimate_tokens(text: str) -> int:
    # 4 chars/token is the usual rough budget figure
    return max(1, (len(text) + 3) // 4)


class ScriptedProvider:
    """Deterministic provider driven by a (prompt, seed) -> text callable."""

    def __init__(self, script: Callable[[str, int], str], provider_id: str = "scripted"):
        self.script = script
        self.provider_id = provider_id

    def complete(self, prompt: str, seed: int) -> ProviderReply:
        text = self.script(prompt, seed)
        return ProviderReply(
            text=text,
            prompt_tokens=estimate_tokens(prompt),
            completion_tokens=estimate_tokens(text),
        )


class ReplayProvider:
    """Replays a recorded transcript, matching prompts by content hash."""

    def __init__(self, transcript_path: str | Path):
        self.transcript_path = Path(transcript_path)
        self.provider_id = f"replay:{self.transcript_path.name}"
        self._queues: dict[str, deque] = defaultdict(deque)
        self._lock = threading.Lock()
        if not self.transcript_path.exists():
            raise ProviderUnavailable(f"transcript {self.transcript_path} does not exist")
        with self.transcript_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                self._queues[record["prompt_hash"]].append(record)

    def complete(self, prompt: str, seed: int) -> ProviderReply:
        key = prompt_hash(prompt)
        with self._lock:
            queue = self._queues.get(key)
            if not queue:
                raise ProviderUnavailable(
                    f"no replay entry for prompt hash {key[:12]} in {self.transcript_path.name}"
                )
            record = queue.popleft()
        return ProviderReply(
            text=record["response"],
            prompt_tokens=int(record["prompt_tokens"]),
            completion_tokens=int(record["completion_tokens"]),
        )


class RecordingProvider:
    """Wraps a provider and captures every exchange for later replay."""

    def __init__(self, inner: GenerationProvider):
        self.inner = inner
        self.provider_id = inner.provider_id
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, prompt: str, seed: int) -> ProviderReply:
        reply = self.inner.complete(prompt, seed)
        record = {
            "prompt_hash": prompt_hash(prompt),
            "prompt": prompt,
            "response": reply.text,
            "prompt_tokens": reply.prompt_tokens,
            "completion_tokens": reply.completion_tokens,
        }
        with self._lock:
            self.records.append(record)
        return reply

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


class HttpChatProvider:
    """OpenAI-compatible chat-completions client.

    Credentials come from the PAIROPT_API_KEY environment variable; base URL
    and model name are constructor arguments.
    """

    def __init__(self, base_url: str, model: str, timeout_s: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout_s = timeout_s
        self.provider_id = f"http:{model}"

    def complete(self, prompt: str, seed: int) -> ProviderReply:
        import requests

        api_key = os.environ.get(API_KEY_ENV_VAR)
        if not api_key:
            raise ProviderUnavailable(f"{API_KEY_ENV_VAR} is not set")
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {api_key}"},
                json={
                    "model": self.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "seed": seed,
                },
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise ProviderUnavailable(str(exc)) from exc
        payload = resp.json()
        usage = payload.get("usage", {})
        text = payload["choices"][0]["message"]["content"]
        return ProviderReply(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", estimate_tokens(prompt))),
            completion_tokens=int(usage.get("completion_tokens", estimate_tokens(text))),
        )
