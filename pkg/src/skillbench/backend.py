"""
Chat backends behind one interface.
An OpenAI-compatible HTTP client, a scripted mock for golden tests and a
keyword-overlap heuristic that routes offline.
"""

import os
import re
import json
import time
import hashlib
import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple, Union

import requests

from .constants import (
    API_KEY_ENV,
    DEFAULT_CONTEXT_LIMIT_TOKENS,
    DEFAULT_REQUEST_TIMEOUT,
    LABEL_CUES,
    MODEL_VRAM_GB,
    SYNTHETIC_LABELS,
)
from .errors import ConfigError, ContextOverflow, EmptyInput, ScriptExhausted, TransportError
from .prompt_protocol import SelectionResponse, ExecutionResponse, Transcript
from .skill_repo import Skill, SkillDescriptor, SkillHub, hub_from_skills

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_DESCRIPTOR_LINE_RE = re.compile(r"^- ([a-z0-9]+(?:-[a-z0-9]+)*): (.+)$", re.MULTILINE)
_SELECTION_MARKER = '"Skills":'

FOUND_MESSAGE = "Yes I need to read the skill information first because it matches the request."
NOT_FOUND_MESSAGE = "I didn't find the right skill."


class BackendKind(str, Enum):
    HTTP = "http"
    MOCK = "mock"
    HEURISTIC = "heuristic"


@dataclass
class BackendConfig:
    kind: BackendKind = BackendKind.HEURISTIC
    endpoint: str = ""
    model_id: str = ""
    context_limit_tokens: int = DEFAULT_CONTEXT_LIMIT_TOKENS
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT
    vram_gb: Optional[float] = None

    def __post_init__(self):
        try:
            self.kind = BackendKind(self.kind)
        except ValueError:
            raise ConfigError(f"unknown backend kind: {self.kind}") from None
        if self.context_limit_tokens <= 0:
            raise ConfigError("context_limit_tokens must be > 0")
        if self.vram_gb is not None and self.vram_gb < 0:
            raise ConfigError("vram_gb must be >= 0")
        if self.kind == BackendKind.HTTP and not self.endpoint:
            raise ConfigError("http backend requires an endpoint")

    def resolved_vram_gb(self) -> float:
        """Explicit VRAM, else the registry value for the model, else 0."""
        if self.vram_gb is not None:
            return float(self.vram_gb)
        return MODEL_VRAM_GB.get(self.model_id.lower(), 0.0)


@dataclass
class CompletionResult:
    text: str
    latency: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0


class ScriptedResponses:
    """Canned outputs handed out in order; the cursor advances atomically."""

    def __init__(self, outputs: List[Union[str, Tuple[str, float]]]):
        self.outputs: List[Tuple[str, float]] = [
            (item, 0.0) if isinstance(item, str) else (item[0], float(item[1]))
            for item in outputs
        ]
        self.cursor = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.outputs)

    def next(self) -> Tuple[str, float]:
        with self._lock:
            if self.cursor >= len(self.outputs):
                raise ScriptExhausted(len(self.outputs))
            item = self.outputs[self.cursor]
            self.cursor += 1
            return item

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ScriptedResponses":
        """Load a JSON list of strings or {"text": ..., "latency": seconds} objects."""
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        if not isinstance(data, list):
            raise ConfigError(f"script file must hold a JSON list: {path}")
        outputs: List[Union[str, Tuple[str, float]]] = []
        for item in data:
            if isinstance(item, str):
                outputs.append(item)
            elif isinstance(item, dict) and isinstance(item.get("text"), str):
                outputs.append((item["text"], float(item.get("latency", 0.0))))
            else:
                raise ConfigError(f"bad script entry in {path}: {item!r}")
        return cls(outputs)


def transcript_fingerprint(t: Transcript) -> str:
    wire = json.dumps(t.to_wire(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(wire.encode("utf-8")).hexdigest()


class TokenUsageCache:
    """Exact prompt-token counts reported by a server, keyed by transcript."""

    def __init__(self):
        self._counts: Dict[str, int] = {}

    def record(self, t: Transcript, prompt_tokens: int) -> None:
        if prompt_tokens > 0:
            self._counts[transcript_fingerprint(t)] = prompt_tokens

    def lookup(self, t: Transcript) -> Optional[int]:
        return self._counts.get(transcript_fingerprint(t))


def estimate_tokens(t: Transcript, usage: Optional[TokenUsageCache] = None) -> int:
    """Estimated prompt tokens: ceil(characters / 4), or the server's exact count if known."""
    if usage is not None:
        exact = usage.lookup(t)
        if exact is not None:
            return exact
    chars = sum(len(m.content) for m in t)
    return -(-chars // 4)


# ---
# Heuristic routing
# ---


def tokenize(text: str) -> Set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


def heuristic_select(task: str, hub: SkillHub) -> SelectionResponse:
    """Pick the skill whose name + description has the highest Jaccard overlap with the task.

    Ties go to the lexicographically smaller name; when nothing overlaps no
    skill is selected.
    """
    if len(hub) == 0:
        raise EmptyInput("skill hub")
    task_tokens = tokenize(task)
    if not task_tokens:
        raise EmptyInput("task")

    best_name: Optional[str] = None
    best_score = Fraction(0)
    for name in sorted(hub.names):
        skill = hub.skills[name]
        skill_tokens = tokenize(f"{skill.name} {skill.description}")
        union = task_tokens | skill_tokens
        score = Fraction(len(task_tokens & skill_tokens), len(union))
        if score > best_score:
            best_name, best_score = name, score

    if best_name is None:
        return SelectionResponse(message=NOT_FOUND_MESSAGE, skills=())
    return SelectionResponse(message=FOUND_MESSAGE, skills=(best_name,))


def classify_by_cues(text: str) -> str:
    """Label with the most cue words in `text`; ties go to the first label."""
    tokens = _TOKEN_RE.findall(text.lower())
    best_label, best_count = SYNTHETIC_LABELS[0], -1
    for label in SYNTHETIC_LABELS:
        cues = set(LABEL_CUES.get(label, []))
        count = sum(1 for token in tokens if token in cues)
        if count > best_count:
            best_label, best_count = label, count
    return best_label


def hub_from_descriptor_lines(text: str) -> SkillHub:
    """Rebuild a descriptor-only hub from the `- name: description` lines of a prompt."""
    skills = {}
    for match in _DESCRIPTOR_LINE_RE.finditer(text):
        name, description = match.group(1), match.group(2).strip()
        if name not in skills and description:
            skills[name] = Skill(SkillDescriptor(name, description), body="")
    return hub_from_skills(skills.values())


# ---
# Adapters
# ---


class ChatBackend(ABC):
    """Abstract base class for chat-completion backends."""

    def __init__(self, config: BackendConfig, usage: Optional[TokenUsageCache] = None):
        self.config = config
        self.usage = usage if usage is not None else TokenUsageCache()

    def complete(self, transcript: Transcript) -> CompletionResult:
        """Run one completion after checking the context budget."""
        estimated = estimate_tokens(transcript, self.usage)
        if estimated > self.config.context_limit_tokens:
            raise ContextOverflow(estimated, self.config.context_limit_tokens)
        return self._complete(transcript)

    @abstractmethod
    def _complete(self, transcript: Transcript) -> CompletionResult:
        pass

    @abstractmethod
    def is_available(self) -> bool:
        pass

    @abstractmethod
    def get_backend_name(self) -> str:
        pass


class HttpBackend(ChatBackend):
    """OpenAI-compatible `POST <endpoint>/chat/completions` client."""

    def __init__(self, config: BackendConfig, usage: Optional[TokenUsageCache] = None,
                 api_key: Optional[str] = None):
        super().__init__(config, usage)
        self.api_key = api_key if api_key is not None else os.getenv(API_KEY_ENV)
        self.url = config.endpoint.rstrip("/") + "/chat/completions"

    def is_available(self) -> bool:
        return bool(self.config.endpoint)

    def get_backend_name(self) -> str:
        return f"http:{self.config.model_id or '?'}@{self.config.endpoint}"

    def _complete(self, transcript: Transcript) -> CompletionResult:
        # no sampling parameters: the server's default decoding applies
        payload = {"model": self.config.model_id, "messages": transcript.to_wire()}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        start = time.perf_counter()
        try:
            response = requests.post(
                self.url, json=payload, headers=headers, timeout=self.config.request_timeout)
        except requests.RequestException as e:
            raise TransportError(None, str(e)) from e
        latency = time.perf_counter() - start

        if response.status_code >= 400:
            reason = getattr(response, "reason", "") or ""
            raise TransportError(response.status_code, str(reason))

        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise TransportError(response.status_code, f"malformed completion body: {e}") from e

        usage = data.get("usage") or {}
        prompt_tokens = int(usage.get("prompt_tokens") or 0)
        completion_tokens = int(usage.get("completion_tokens") or 0)
        self.usage.record(transcript, prompt_tokens)
        logger.info(f"Completion from {self.url} in {latency:.3f}s ({prompt_tokens} prompt tokens)")
        return CompletionResult(
            text=text,
            latency=latency,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
        )


class MockBackend(ChatBackend):
    """Replays scripted outputs; latency is whatever the script says."""

    def __init__(self, config: BackendConfig, script: ScriptedResponses,
                 usage: Optional[TokenUsageCache] = None):
        super().__init__(config, usage)
        self.script = script

    def is_available(self) -> bool:
        return self.script.cursor < len(self.script)

    def get_backend_name(self) -> str:
        return "mock"

    def _complete(self, transcript: Transcript) -> CompletionResult:
        text, latency = self.script.next()
        return CompletionResult(text=text, latency=latency)


class HeuristicBackend(ChatBackend):
    """Offline stand-in: Jaccard routing for selection prompts, cue-word labels otherwise.

    Latency is reported as 0 so offline runs are reproducible.
    """

    def is_available(self) -> bool:
        return True

    def get_backend_name(self) -> str:
        return "heuristic"

    def _complete(self, transcript: Transcript) -> CompletionResult:
        task = transcript.last_user or ""
        system = transcript.system or ""
        if _SELECTION_MARKER in system:
            hub = hub_from_descriptor_lines(system)
            if len(hub) == 0:
                return CompletionResult(text=SelectionResponse(NOT_FOUND_MESSAGE).to_json())
            return CompletionResult(text=heuristic_select(task, hub).to_json())
        return CompletionResult(text=ExecutionResponse(classify_by_cues(task)).to_json())


def create_backend(
        config: BackendConfig,
        script: Optional[ScriptedResponses] = None,
        usage: Optional[TokenUsageCache] = None) -> ChatBackend:
    """Build the adapter for `config`."""
    if config.kind == BackendKind.HTTP:
        backend: ChatBackend = HttpBackend(config, usage)
        if not backend.api_key:
            logger.warning(f"{API_KEY_ENV} is not set; sending requests without a bearer token")
        return backend
    if config.kind == BackendKind.MOCK:
        if script is None:
            raise ConfigError("mock backend requires a script")
        return MockBackend(config, script, usage)
    return HeuristicBackend(config, usage)
