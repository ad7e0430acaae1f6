"""
SKILL.md skill repositories.
Parses skill documents into (descriptor, body, references) triples, loads
skill hubs from a directory tree and assembles seeded trial hubs that mix a
ground-truth skill with sampled distractors.
"""

import re
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from types import MappingProxyType
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .errors import (
    DuplicateSkillName,
    FrontmatterSyntax,
    InsufficientPool,
    InvalidName,
    MissingField,
    MissingFrontmatter,
    SkillbenchError,
    SkillFileError,
)
from .utils import UINT64_MASK

logger = logging.getLogger(__name__)

SKILL_FILENAME = "SKILL.md"
NAME_RE = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")

# [text](target) or [text](<target> "title")
_LINK_RE = re.compile(r"\[[^\]]*\]\(\s*<?([^)\s>]+)>?(?:\s+[\"'][^)]*[\"'])?\s*\)")
_SKILL_TOKEN_RE = re.compile(r"(?<![\w-])skill:([a-z0-9]+(?:-[a-z0-9]+)*)(?![\w-])")


def is_valid_name(name: str) -> bool:
    return bool(NAME_RE.match(name))


@dataclass(frozen=True)
class SkillDescriptor:
    """The short, always-visible part of a skill: name and description."""
    name: str
    description: str
    source_path: str = ""

    def __post_init__(self):
        if not is_valid_name(self.name):
            raise InvalidName(self.name, self.source_path)
        if not self.description.strip():
            raise MissingField("description", self.source_path)


@dataclass(frozen=True)
class Skill:
    """A skill triple: descriptor, workflow body and referenced skill names."""
    descriptor: SkillDescriptor
    body: str
    references: Tuple[str, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        refs: List[str] = []
        for ref in self.references:
            if ref != self.descriptor.name and ref not in refs:
                refs.append(ref)
        object.__setattr__(self, "references", tuple(refs))

    @property
    def name(self) -> str:
        return self.descriptor.name

    @property
    def description(self) -> str:
        return self.descriptor.description


@dataclass(frozen=True)
class SkillHub:
    """Immutable name -> Skill collection, optionally marking the ground truth."""
    skills: Mapping[str, Skill] = field(default_factory=dict)
    ground_truth: Optional[str] = None

    def __post_init__(self):
        for key, skill in self.skills.items():
            if key != skill.name:
                raise ValueError(f"hub key '{key}' does not match skill name '{skill.name}'")
        if self.ground_truth is not None and self.ground_truth not in self.skills:
            raise ValueError(f"ground truth '{self.ground_truth}' is not in the hub")
        object.__setattr__(self, "skills", MappingProxyType(dict(self.skills)))

    def __len__(self) -> int:
        return len(self.skills)

    def __contains__(self, name: object) -> bool:
        return name in self.skills

    def __iter__(self):
        return iter(self.skills.values())

    @property
    def names(self) -> List[str]:
        return list(self.skills)

    def get(self, name: str) -> Optional[Skill]:
        return self.skills.get(name)


@dataclass
class ValidationResult:
    path: str
    name: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


# ---
# Parsing
# ---


def extract_references(body: str) -> List[str]:
    """Skill names referenced from a body, in order of first occurrence.

    Two forms are recognised: markdown links whose target ends in SKILL.md
    (the parent directory names the skill) and inline `skill:<name>` tokens.
    """
    found: List[Tuple[int, str]] = []

    for match in _LINK_RE.finditer(body):
        target = match.group(1).replace("\\", "/")
        if not target.endswith(SKILL_FILENAME):
            continue
        parent = PurePosixPath(target).parent.name
        if parent and is_valid_name(parent):
            found.append((match.start(), parent))

    for match in _SKILL_TOKEN_RE.finditer(body):
        found.append((match.start(), match.group(1)))

    found.sort(key=lambda item: item[0])
    names: List[str] = []
    for _, name in found:
        if name not in names:
            names.append(name)
    return names


def _decode_value(value: str, source_path: str, line: int) -> Any:
    """Plain text stays as-is; quoted scalars and `[...]` / `{...}` flow values go through YAML."""
    quoted = len(value) >= 2 and value[0] == value[-1] and value[0] in "'\""
    flow = len(value) >= 2 and (value[0], value[-1]) in (("[", "]"), ("{", "}"))
    if not (quoted or flow):
        return value
    try:
        return yaml.safe_load(value)
    except yaml.YAMLError as e:
        problem = getattr(e, "problem", None) or str(e)
        raise FrontmatterSyntax(f"invalid frontmatter value: {problem}", source_path, line) from e


def _parse_frontmatter(block_lines: Sequence[str], source_path: str) -> Dict[str, Tuple[Any, int]]:
    """Flat `key: value` lines, split on the first colon; maps key -> (value, line)."""
    meta: Dict[str, Tuple[Any, int]] = {}
    for i, raw in enumerate(block_lines):
        line = 2 + i
        text = raw.rstrip("\r\n")
        stripped = text.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if text[0].isspace():
            raise FrontmatterSyntax("nested values are not supported", source_path, line)
        if ":" not in text:
            raise FrontmatterSyntax(f"expected 'key: value', got '{stripped}'", source_path, line)
        key, value = text.split(":", 1)
        key = key.strip()
        if not key:
            raise FrontmatterSyntax("empty key", source_path, line)
        if key in meta:
            raise FrontmatterSyntax(f"duplicate key '{key}'", source_path, line)
        meta[key] = (_decode_value(value.strip(), source_path, line), line)
    return meta


def parse_skill_file(text: str, source_path: str = "") -> Skill:
    """Parse a SKILL.md document.

    The document starts with a `---` line; the lines up to the next `---`
    line are the frontmatter and everything after it is the body.
    """
    if text.startswith("﻿"):
        text = text[1:]
    lines = text.splitlines(keepends=True)
    if not lines or lines[0].rstrip() != "---":
        raise MissingFrontmatter(source_path, 1)

    closing = None
    for i in range(1, len(lines)):
        if lines[i].rstrip() == "---":
            closing = i
            break
    if closing is None:
        raise MissingFrontmatter(source_path, len(lines))

    meta = _parse_frontmatter(lines[1:closing], source_path)
    body = "".join(lines[closing + 1:])

    for key in ("name", "description"):
        if key not in meta:
            raise MissingField(key, source_path, closing + 1)
        value, line = meta[key]
        if isinstance(value, (dict, list)):
            raise FrontmatterSyntax(f"field '{key}' must be a plain value", source_path, line)
        if value is None or not str(value).strip():
            raise MissingField(key, source_path, line)

    name = str(meta["name"][0]).strip()
    if not is_valid_name(name):
        raise InvalidName(name, source_path, meta["name"][1])

    descriptor = SkillDescriptor(
        name=name,
        description=str(meta["description"][0]).strip(),
        source_path=source_path,
    )
    extra = {k: v for k, (v, _) in meta.items() if k not in ("name", "description")}
    return Skill(
        descriptor=descriptor,
        body=body,
        references=tuple(extract_references(body)),
        extra=extra,
    )


def _encode_value(value: Any) -> str:
    if not isinstance(value, str):
        return json.dumps(value, ensure_ascii=False, default=str)
    needs_quotes = (
        value != value.strip()
        or len(value.splitlines()) > 1
        or value[:1] in ("'", "\"")
        or (len(value) >= 2 and (value[0], value[-1]) in (("[", "]"), ("{", "}")))
    )
    # a JSON string is a valid double-quoted YAML scalar
    return json.dumps(value, ensure_ascii=False) if needs_quotes else value


def serialize_skill(skill: Skill) -> str:
    """Render a skill back to SKILL.md text (flat frontmatter + body)."""
    meta: Dict[str, Any] = {"name": skill.name, "description": skill.description}
    meta.update(skill.extra)
    frontmatter = "".join(f"{key}: {_encode_value(value)}\n" for key, value in meta.items())
    return f"---\n{frontmatter}---\n{skill.body}"


def read_skill_file(path: Union[str, Path]) -> Skill:
    path = Path(path)
    return parse_skill_file(path.read_text(encoding="utf-8"), str(path))


# ---
# Hubs
# ---


def _skill_files(directory: Path) -> List[Path]:
    return sorted(
        child / SKILL_FILENAME
        for child in directory.iterdir()
        if child.is_dir() and (child / SKILL_FILENAME).is_file()
    )


def hub_from_skills(skills: Iterable[Skill], ground_truth: Optional[str] = None) -> SkillHub:
    by_name: Dict[str, Skill] = {}
    for skill in skills:
        if skill.name in by_name:
            raise DuplicateSkillName(
                skill.name,
                (by_name[skill.name].descriptor.source_path, skill.descriptor.source_path))
        by_name[skill.name] = skill
    return SkillHub(skills=by_name, ground_truth=ground_truth)


def load_hub(directory: Union[str, Path]) -> SkillHub:
    """Parse every SKILL.md one level under `directory`."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(f"skills directory not found: {directory}")

    files = _skill_files(directory)
    hub = hub_from_skills(read_skill_file(path) for path in files)
    logger.info(f"Loaded {len(hub)} skills from {directory}")
    return hub


def validate_directory(directory: Union[str, Path]) -> List[ValidationResult]:
    """Parse every skill file, collecting errors instead of raising them."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(f"skills directory not found: {directory}")

    results: List[ValidationResult] = []
    seen: Dict[str, str] = {}
    for path in _skill_files(directory):
        try:
            skill = read_skill_file(path)
        except SkillFileError as e:
            results.append(ValidationResult(path=str(path), error=f"line {e.line}: {e.reason}"))
            continue
        except (OSError, UnicodeDecodeError) as e:
            results.append(ValidationResult(path=str(path), error=f"unreadable: {e}"))
            continue

        if skill.name in seen:
            results.append(ValidationResult(
                path=str(path), name=skill.name,
                error=f"duplicate skill name '{skill.name}' (also in {seen[skill.name]})"))
            continue
        seen[skill.name] = str(path)
        results.append(ValidationResult(path=str(path), name=skill.name))
    return results


def reference_edges(skills: Iterable[Skill]) -> List[Tuple[str, str]]:
    edges = []
    for skill in skills:
        for ref in skill.references:
            edges.append((skill.name, ref))
    return sorted(edges)


def build_trial_hub(
        ground_truth: Skill,
        pool: Sequence[Skill],
        n_distractors: int,
        seed: int) -> SkillHub:
    """Ground truth plus `n_distractors` skills sampled from `pool`.

    The pool is sorted by name and sampled with a partial Fisher-Yates
    shuffle driven by numpy's PCG64 generator seeded with `seed` (taken
    modulo 2**64). The resulting hub is ordered by name.
    """
    if n_distractors < 0:
        raise ValueError(f"n_distractors must be >= 0, got {n_distractors}")
    if any(skill.name == ground_truth.name for skill in pool):
        raise SkillbenchError(f"distractor pool contains the ground truth '{ground_truth.name}'")

    ordered = sorted(hub_from_skills(pool).skills.values(), key=lambda s: s.name)
    if len(ordered) < n_distractors:
        raise InsufficientPool(len(ordered), n_distractors)

    rng = np.random.default_rng(seed & UINT64_MASK)
    index = list(range(len(ordered)))
    for i in range(n_distractors):
        j = int(rng.integers(i, len(index)))
        index[i], index[j] = index[j], index[i]
    chosen = [ordered[k] for k in index[:n_distractors]]

    members = sorted([ground_truth, *chosen], key=lambda s: s.name)
    return SkillHub(skills={s.name: s for s in members}, ground_truth=ground_truth.name)
