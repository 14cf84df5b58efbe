"""Language-model providers.

A provider is anything with ``complete(prompt, *, temperature, max_tokens) -> str``
that is safe to call from several threads at once.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import httpx

from .errors import ConfigurationError, ProviderError
from .rubric import (
    BINARY,
    EXEMPLAR_HEADING,
    GUIDANCE_HEADING,
    NO_SHOT,
    CONTEXT,
    FEW_SHOT,
    QUESTION_KEYS,
    QUESTIONS_HEADING,
    SCALAR10,
    TARGET_HEADING,
)

DEFAULT_API_KEY_ENV = "CLIMRANK_API_KEY"


class Provider(Protocol):
    def complete(self, prompt: str, *, temperature: float, max_tokens: int) -> str: ...


class _CallCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0

    def _count(self) -> None:
        with self._lock:
            self.calls += 1


class HTTPProvider(_CallCounter):
    """Chat-completion style endpoint (``POST {base_url}/chat/completions``).

    The API key is read from the environment variable named by
    ``api_key_env`` and sent as a bearer token.  It is never taken from
    configuration files or arguments.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        super().__init__()
        key = os.environ.get(api_key_env)
        if not key:
            raise ConfigurationError(f"environment variable {api_key_env} is not set")
        self.model = model
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {key}"},
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, prompt: str, *, temperature: float, max_tokens: int) -> str:
        self._count()
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        try:
            response = self._client.post("/chat/completions", json=payload)
        except httpx.HTTPError as exc:
            raise ProviderError(f"provider request failed: {exc}") from exc
        if response.status_code >= 400:
            raise ProviderError(f"provider returned HTTP {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected provider response shape: {exc}") from exc


@dataclass(frozen=True)
class BiasMarker:
    """Raise (or lower) scores for works whose abstract mentions ``keyword``."""

    keyword: str
    boost: tuple[str, ...] = ("Q1",)
    suppress: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, data: Mapping) -> "BiasMarker":
        return cls(str(data["keyword"]), tuple(data.get("boost", ("Q1",))), tuple(data.get("suppress", ())))


# Share of "yes" answers per question for unmarked works.
DEFAULT_PREVALENCE = {"Q1": 0.25, "Q2": 0.5, "Q3": 0.4, "Q4": 0.4, "Q5": 0.5, "Q6": 0.35, "Q7": 0.5}

_WORK_ID_RE = re.compile(r"^Work ID: (.*)$", re.MULTILINE)


def _section(prompt: str, heading: str) -> str:
    start = prompt.find(heading)
    if start < 0:
        return ""
    end = prompt.find("\n## ", start + len(heading))
    return prompt[start:end if end >= 0 else None]


class MockProvider(_CallCounter):
    """Deterministic stand-in for a model.

    Scores depend only on (work id, question, scenario, seed).  A latent
    uniform draw per question is mapped to both scoring modes so that a
    binary "yes" coincides with a scalar score of 6 or more.  The mock
    reads the work id, abstract, scenario and scoring mode back out of the
    prompt text.
    """

    def __init__(
        self,
        seed: int = 0,
        bias_markers: Sequence[BiasMarker] = (),
        prevalence: Mapping[str, float] | None = None,
    ):
        super().__init__()
        self.seed = seed
        self.bias_markers = tuple(bias_markers)
        self.prevalence = dict(DEFAULT_PREVALENCE if prevalence is None else prevalence)

    def latent(self, work_id: str, question: str, scenario: str) -> float:
        digest = hashlib.blake2b(f"{self.seed}|{scenario}|{work_id}|{question}".encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") / 2**64

    def score(self, work_id: str, abstract: str, question: str, scenario: str, mode: str) -> int:
        u = self.latent(work_id, question, scenario)
        text = abstract.lower()
        for marker in self.bias_markers:
            if marker.keyword.lower() in text:
                if question in marker.boost:
                    return 1 if mode == BINARY else 9 + (u >= 0.5)
                if question in marker.suppress:
                    return 0 if mode == BINARY else 1 + (u >= 0.5)
        p = self.prevalence[question]
        cut = 1.0 - p
        if mode == BINARY:
            return int(u >= cut)
        if u < cut:
            return 1 + min(4, int(5 * u / cut))
        return 6 + min(4, int(5 * (u - cut) / p))

    def scores(self, work_id: str, abstract: str, scenario: str, mode: str) -> dict[str, int]:
        return {q: self.score(work_id, abstract, q, scenario, mode) for q in QUESTION_KEYS}

    def complete(self, prompt: str, *, temperature: float = 0.0, max_tokens: int = 0) -> str:
        self._count()
        target = _section(prompt, TARGET_HEADING)
        found = _WORK_ID_RE.search(target)
        if not found:
            return "I could not find a work to evaluate."
        work_id = found.group(1).strip()
        abstract = target.split("Abstract:", 1)[-1]
        if EXEMPLAR_HEADING in prompt:
            scenario = FEW_SHOT
        elif GUIDANCE_HEADING in prompt:
            scenario = CONTEXT
        else:
            scenario = NO_SHOT
        mode = SCALAR10 if "integer from 1 to 10" in prompt else BINARY
        return json.dumps(self.scores(work_id, abstract, scenario, mode))


def mock_provider(seed: int = 0, bias_markers: Iterable[BiasMarker | Mapping] | None = None) -> MockProvider:
    markers = [m if isinstance(m, BiasMarker) else BiasMarker.from_dict(m) for m in (bias_markers or ())]
    return MockProvider(seed, markers)


class ScriptedProvider(_CallCounter):
    """Replays canned replies in order; an ``Exception`` instance in the script is raised."""

    def __init__(self, replies: Sequence[str | Exception]):
        super().__init__()
        self._replies = list(replies)
        self._lock2 = threading.Lock()
        self.prompts: list[str] = []

    def complete(self, prompt: str, *, temperature: float = 0.0, max_tokens: int = 0) -> str:
        self._count()
        with self._lock2:
            self.prompts.append(prompt)
            if not self._replies:
                raise ProviderError("script exhausted")
            reply = self._replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply
