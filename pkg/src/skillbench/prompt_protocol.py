"""
Prompt protocol for the instruction strategies.

Renders the Direct / Full-Skill / Agent-Skill prompts from the bundled
templates, parses the strict-JSON model replies, trims chat history and
swaps the word "skill" for a synonym.
"""

import re
import json
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .constants import DEFAULT_KEYWORD, KEYWORD_PLURALS, TASK_TEMPLATES
from .errors import ConfigError, EmptyHub, EmptySelection, ParseFailure, SchemaViolation
from .skill_repo import Skill, SkillHub

logger = logging.getLogger(__name__)

SKILL_CONTEXT_PLACEHOLDER = "{{Skill Context}}"
EXECUTION_OUTPUT_INSTRUCTION = '**Final Output Format (Strict JSON)**\n\n{\n  "Message": Your message here.\n}'

_TASK_PRIMARY_SLOT = {
    "plain": "Input",
    "imdb": "Review Content",
    "finer": "Sentence Content",
    "insurbench": "Email History",
}
_SLOT_RE = re.compile(r"<<<([^<>]+)>>>")
_FENCE_RE = re.compile(r"```[A-Za-z]*\s*\n?(.*?)```", re.DOTALL)
_TRAILING_COMMA_RE = re.compile(r",\s*([}\]])")


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class Strategy(str, Enum):
    """Instruction strategies: direct, full-skill, agent-skill, agent-skill with history."""
    DI = "DI"
    FSI = "FSI"
    ASI = "ASI"
    ASIH = "ASIH"

    @classmethod
    def parse(cls, value: Union[str, "Strategy"]) -> "Strategy":
        if isinstance(value, Strategy):
            return value
        try:
            return cls(value.upper())
        except ValueError:
            raise ConfigError(f"unknown strategy: {value}") from None


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if not self.content and self.role != Role.ASSISTANT:
            raise ValueError(f"{self.role.value} message must not be empty")

    def to_dict(self) -> Dict[str, str]:
        return {"role": self.role.value, "content": self.content}


@dataclass(frozen=True)
class Transcript:
    """Ordered chat messages; at most one system message, and only in first place."""
    messages: Tuple[ChatMessage, ...] = ()

    def __post_init__(self):
        messages = tuple(self.messages)
        for i, message in enumerate(messages):
            if message.role == Role.SYSTEM and i != 0:
                raise ValueError("system message must be the first message")
        object.__setattr__(self, "messages", messages)

    def __len__(self) -> int:
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    @property
    def system(self) -> Optional[str]:
        if self.messages and self.messages[0].role == Role.SYSTEM:
            return self.messages[0].content
        return None

    @property
    def last_user(self) -> Optional[str]:
        for message in reversed(self.messages):
            if message.role == Role.USER:
                return message.content
        return None

    def to_wire(self) -> List[Dict[str, str]]:
        return [m.to_dict() for m in self.messages]

    @classmethod
    def from_wire(cls, messages: Iterable[Mapping[str, str]]) -> "Transcript":
        return cls(tuple(ChatMessage(Role(m["role"]), m["content"]) for m in messages))

    def extended(self, *messages: ChatMessage) -> "Transcript":
        return Transcript(self.messages + tuple(messages))


@dataclass(frozen=True)
class SelectionResponse:
    message: str
    skills: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "skills", tuple(dict.fromkeys(self.skills)))

    def to_json(self) -> str:
        return json.dumps({"Message": self.message, "Skills": list(self.skills)}, ensure_ascii=False)


@dataclass(frozen=True)
class ExecutionResponse:
    message: str
    degraded: bool = False

    def __post_init__(self):
        if not self.message:
            raise ValueError("execution message must not be empty")

    def to_json(self) -> str:
        return json.dumps({"Message": self.message}, ensure_ascii=False)


# ---
# Keyword substitution
# ---


def _pluralize(word: str) -> str:
    known = KEYWORD_PLURALS.get(word.lower())
    if known is not None:
        return word[0] + known[1:] if word[0].isupper() else known
    if len(word) > 1 and word.endswith("y") and word[-2].lower() not in "aeiou":
        return word[:-1] + "ies"
    return word + "s"


@dataclass(frozen=True)
class KeywordVariant:
    """A synonym used in place of "skill" in the prompt scaffolding."""
    keyword: str = DEFAULT_KEYWORD

    def __post_init__(self):
        if not self.keyword or not self.keyword.strip():
            raise ConfigError("keyword must not be empty")
        object.__setattr__(self, "keyword", self.keyword.strip())

    def forms(self) -> Dict[str, str]:
        """The four case/number forms keyed by the matching forms of "skill"."""
        singular = self.keyword
        plural = _pluralize(singular)

        def lower(w: str) -> str:
            return w[0].lower() + w[1:]

        def upper(w: str) -> str:
            return w[0].upper() + w[1:]

        return {
            "lower": lower(singular),
            "upper": upper(singular),
            "lower_plural": lower(plural),
            "upper_plural": upper(plural),
        }


KeywordLike = Union[str, KeywordVariant]


def _as_variant(keyword: KeywordLike) -> KeywordVariant:
    return keyword if isinstance(keyword, KeywordVariant) else KeywordVariant(keyword)


def substitute_keyword(
        template: str,
        keyword: KeywordLike,
        source: KeywordLike = DEFAULT_KEYWORD) -> str:
    """Replace whole-word occurrences of `source` (default "skill") by `keyword`.

    Case and number follow the matched word. Words glued to a hyphen,
    a quote or a brace are left alone, so kebab-case skill names, JSON keys
    such as "Skills" and the {{Skill Context}} placeholder never change.
    """
    src = _as_variant(source).forms()
    dst = _as_variant(keyword).forms()
    if src == dst:
        return template

    mapping: Dict[str, str] = {}
    for form in ("lower", "upper", "lower_plural", "upper_plural"):
        mapping.setdefault(src[form], dst[form])

    alternatives = sorted(mapping, key=len, reverse=True)
    pattern = re.compile(
        r"(?<![\w\"{-])(" + "|".join(re.escape(a) for a in alternatives) + r")(?![\w\"}-])")
    return pattern.sub(lambda m: mapping[m.group(1)], template)


# ---
# Rendering
# ---


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a bundled template (e.g. 'selection.md', 'task_imdb.txt')."""
    path = resources.files("skillbench").joinpath("templates", name)
    return path.read_text(encoding="utf-8").rstrip("\n")


def render_task(template_name: str, input_text: str, fields: Optional[Mapping[str, str]] = None) -> str:
    """Fill a task template's `<<<slot>>>` markers.

    The primary slot takes `input_text`; any other slot is looked up in
    `fields` and left empty (with a warning) when missing.
    """
    if template_name not in TASK_TEMPLATES:
        raise ConfigError(f"unknown task template: {template_name}")
    template = load_template(f"task_{template_name}.txt")
    values = dict(fields or {})
    values[_TASK_PRIMARY_SLOT[template_name]] = input_text

    def fill(match: "re.Match[str]") -> str:
        slot = match.group(1)
        if slot not in values:
            logger.warning(f"Task template '{template_name}' slot '{slot}' has no value")
            return ""
        return str(values[slot])

    return _SLOT_RE.sub(fill, template)


def _one_line(text: str) -> str:
    return " ".join(text.split())


def _descriptor_lines(skills: Iterable[Skill]) -> str:
    return "\n".join(f"- {s.name}: {_one_line(s.description)}" for s in skills)


def _fill_context(template: str, keyword: KeywordLike, context: str) -> str:
    scaffold = substitute_keyword(template, keyword)
    return scaffold.replace(SKILL_CONTEXT_PLACEHOLDER, context)


def render_selection_prompt(hub: SkillHub, task: str, keyword: KeywordLike = DEFAULT_KEYWORD) -> Transcript:
    """Phase-1 prompt: descriptors only, the model picks skills to load."""
    if len(hub) == 0:
        raise EmptyHub()
    system = _fill_context(load_template("selection.md"), keyword, _descriptor_lines(hub))
    return Transcript((ChatMessage(Role.SYSTEM, system), ChatMessage(Role.USER, task)))


def render_execution_prompt(
        selected: Sequence[Skill],
        task: str,
        keyword: KeywordLike = DEFAULT_KEYWORD) -> Transcript:
    """Phase-2 prompt: the full bodies of the selected skills, in selection order."""
    if not selected:
        raise EmptySelection()
    context = "\n\n".join(f"### {s.name}\n\n{s.body.strip()}" for s in selected)
    system = _fill_context(load_template("execution.md"), keyword, context)
    return Transcript((ChatMessage(Role.SYSTEM, system), ChatMessage(Role.USER, task)))


def render_strategy_prompt(
        strategy: Union[str, Strategy],
        hub: SkillHub,
        task: str,
        keyword: KeywordLike = DEFAULT_KEYWORD) -> Transcript:
    """Single-shot prompts: DI is the bare task, FSI inlines the whole hub."""
    strategy = Strategy.parse(strategy)
    if strategy == Strategy.DI:
        return Transcript((ChatMessage(Role.USER, task),))
    if strategy == Strategy.FSI:
        if len(hub) == 0:
            raise EmptyHub()
        context = "\n\n".join(
            f"### {s.name}\n- {s.name}: {_one_line(s.description)}\n\n{s.body.strip()}" for s in hub)
        system = _fill_context(load_template("execution.md"), keyword, context)
        return Transcript((ChatMessage(Role.SYSTEM, system), ChatMessage(Role.USER, task)))
    raise ValueError(f"{strategy.value} is a two-phase strategy; render its phases separately")


# ---
# Parsing
# ---


def _excerpt(raw: str, limit: int = 200) -> str:
    return raw if len(raw) <= limit else raw[:limit] + "..."


def _find_json_object(raw: str) -> Optional[Dict[str, Any]]:
    """First decodable JSON object in `raw`, looking inside code fences first."""
    candidates = [m.group(1) for m in _FENCE_RE.finditer(raw)] + [raw]
    decoder = json.JSONDecoder()
    for text in candidates:
        for variant in (text, _TRAILING_COMMA_RE.sub(r"\1", text)):
            start = variant.find("{")
            while start != -1:
                try:
                    obj, _ = decoder.raw_decode(variant, start)
                except json.JSONDecodeError:
                    obj = None
                if isinstance(obj, dict):
                    return obj
                start = variant.find("{", start + 1)
    return None


def parse_selection_json(raw: str) -> SelectionResponse:
    obj = _find_json_object(raw or "")
    if obj is None:
        raise ParseFailure(_excerpt(raw or ""))

    if "Message" not in obj:
        raise SchemaViolation("Message", "missing")
    if not isinstance(obj["Message"], str):
        raise SchemaViolation("Message", "must be a string")
    if "Skills" not in obj:
        raise SchemaViolation("Skills", "missing")
    skills = obj["Skills"]
    if not isinstance(skills, list) or not all(isinstance(s, str) for s in skills):
        raise SchemaViolation("Skills", "must be an array of strings")

    return SelectionResponse(message=obj["Message"], skills=tuple(s.strip() for s in skills))


def parse_execution_json(raw: str) -> ExecutionResponse:
    """Parse `{"Message": ...}`; without any JSON object the raw text is kept, flagged degraded."""
    raw = raw or ""
    obj = _find_json_object(raw)
    if obj is None:
        if not raw.strip():
            raise ParseFailure(raw)
        logger.warning(f"No JSON object in execution output, keeping raw text: {_excerpt(raw, 80)!r}")
        return ExecutionResponse(message=raw.strip(), degraded=True)

    if "Message" not in obj:
        raise SchemaViolation("Message", "missing")
    message = obj["Message"]
    if not isinstance(message, str):
        raise SchemaViolation("Message", "must be a string")
    if not message.strip():
        raise SchemaViolation("Message", "must not be empty")
    return ExecutionResponse(message=message)


# ---
# History
# ---


def trim_history(t: Transcript) -> Transcript:
    """Keep the first message plus the 3 (even count) or 4 (odd count) most recent ones."""
    n = len(t)
    if n <= 5:
        return t
    k = 3 if n % 2 == 0 else 4
    return Transcript((t.messages[0],) + t.messages[-k:])
