"""Test-only providers: scripted responses, fault injection, adversarial output."""

from __future__ import annotations

import random
import re

from lcds.errors import TransientProviderError
from lcds.gateway import CompletionRequest

_CANDIDATE_LINE = re.compile(r"^\[([^\[\]\s]+#[^\[\]]+#\d+)\] ", re.MULTILINE)


class ScriptedProvider:
    """Returns canned responses in order; repeats the last one when exhausted."""

    is_mock = False
    provider_id = "scripted"

    def __init__(self, responses: list[str]):
        self.responses = list(responses)
        self.calls: list[CompletionRequest] = []

    def send(self, req: CompletionRequest) -> str:
        self.calls.append(req)
        if not self.responses:
            raise AssertionError("scripted provider ran out of responses")
        if len(self.responses) > 1:
            return self.responses.pop(0)
        return self.responses[0]


class FlakyProvider:
    """Fails with transient errors n times, then delegates to an inner provider."""

    provider_id = "flaky"

    def __init__(self, inner, failures: int):
        self.inner = inner
        self.failures = failures
        self.attempts = 0
        self.is_mock = getattr(inner, "is_mock", False)

    def send(self, req: CompletionRequest) -> str:
        self.attempts += 1
        if self.attempts <= self.failures:
            raise TransientProviderError("injected 503", status=503)
        return self.inner.send(req)


class OracleAttributionProvider:
    """Answers identifier-list prompts with the ids of candidates whose text
    exactly equals the sentence being attributed."""

    is_mock = False
    provider_id = "oracle"

    def send(self, req: CompletionRequest) -> str:
        lines = req.prompt.splitlines()
        target = lines[-1].split("生成句：", 1)[-1].strip()
        ids = []
        for line in lines:
            m = re.match(r"^\[([^\[\]\s]+#[^\[\]]+#\d+)\] (.*)$", line)
            if m and m.group(2).strip() == target:
                ids.append(m.group(1))
        return "[" + ", ".join(ids) + "]"


class AdversarialAttributionProvider:
    """Answers identifier-list prompts with a mix of real and fabricated ids."""

    is_mock = False
    provider_id = "adversarial"

    def __init__(self, seed: int = 0, fabricated_share: float = 0.5):
        self.rng = random.Random(seed)
        self.fabricated_share = fabricated_share

    def send(self, req: CompletionRequest) -> str:
        candidates = _CANDIDATE_LINE.findall(req.prompt)
        ids: list[str] = []
        for _ in range(self.rng.randint(1, 4)):
            if candidates and self.rng.random() >= self.fabricated_share:
                ids.append(self.rng.choice(candidates))
            else:
                ids.append(f"ghost-{self.rng.randint(0, 999)}#nowhere#{self.rng.randint(0, 9)}")
        return "[" + ", ".join(ids) + "]"
