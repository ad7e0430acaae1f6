"""
Exception hierarchy for skillbench.
Every error raised by the library derives from SkillbenchError so callers
(and the CLI) can separate library failures from programming errors.
"""

from typing import Optional


class SkillbenchError(Exception):
    """Base class for all skillbench errors."""


class ConfigError(SkillbenchError):
    """Invalid configuration or command-line usage."""


# ---
# skill_repo
# ---


class SkillFileError(SkillbenchError):
    """A SKILL.md document could not be turned into a Skill."""

    def __init__(self, reason: str, path: str = "", line: int = 1):
        self.reason = reason
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class MissingFrontmatter(SkillFileError):
    def __init__(self, path: str = "", line: int = 1):
        super().__init__("missing '---' frontmatter block", path, line)


class FrontmatterSyntax(SkillFileError):
    pass


class MissingField(SkillFileError):
    def __init__(self, key: str, path: str = "", line: int = 1):
        self.key = key
        super().__init__(f"missing required field '{key}'", path, line)


class InvalidName(SkillFileError):
    def __init__(self, name: str, path: str = "", line: int = 1):
        self.name = name
        super().__init__(
            f"invalid skill name '{name}' (expected kebab-case [a-z0-9]+(-[a-z0-9]+)*)",
            path, line)


class DuplicateSkillName(SkillbenchError):
    def __init__(self, name: str, paths: tuple = ()):
        self.name = name
        self.paths = paths
        super().__init__(f"duplicate skill name '{name}' in {', '.join(paths)}")


class InsufficientPool(SkillbenchError):
    def __init__(self, have: int, need: int):
        self.have = have
        self.need = need
        super().__init__(f"distractor pool has {have} skills, need {need}")


# ---
# prompt_protocol
# ---


class EmptyHub(SkillbenchError):
    def __init__(self):
        super().__init__("skill hub is empty")


class EmptySelection(SkillbenchError):
    def __init__(self):
        super().__init__("no skills selected for execution")


class ParseFailure(SkillbenchError):
    def __init__(self, excerpt: str):
        self.excerpt = excerpt
        super().__init__(f"no JSON object found in model output: {excerpt!r}")


class SchemaViolation(SkillbenchError):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"schema violation on '{key}': {reason}")


# ---
# backend
# ---


class ContextOverflow(SkillbenchError):
    def __init__(self, estimated: int, limit: int):
        self.estimated = estimated
        self.limit = limit
        super().__init__(f"prompt of ~{estimated} tokens exceeds context limit {limit}")


class TransportError(SkillbenchError):
    def __init__(self, status: Optional[int], reason: str):
        self.status = status
        self.reason = reason
        super().__init__(f"transport error ({status}): {reason}")


class ScriptExhausted(SkillbenchError):
    def __init__(self, length: int):
        self.length = length
        super().__init__(f"scripted backend exhausted after {length} responses")


class EmptyInput(SkillbenchError):
    def __init__(self, what: str = "input"):
        super().__init__(f"empty {what}")


# ---
# disclosure_controller
# ---


class InvalidModel(SkillbenchError):
    pass


class ImpossibleObservation(SkillbenchError):
    def __init__(self, action: int, observation: int):
        self.action = action
        self.observation = observation
        super().__init__(
            f"observation {observation} has zero probability after action {action}")


class StateSpaceTooLarge(SkillbenchError):
    def __init__(self, generated: int, limit: int):
        self.generated = generated
        self.limit = limit
        super().__init__(f"backup would generate {generated} vectors (limit {limit})")


# ---
# harness
# ---


class EmptyDataset(SkillbenchError):
    def __init__(self, path: str = ""):
        super().__init__(f"dataset is empty: {path}")


class DatasetError(SkillbenchError):
    pass


class DegenerateInput(SkillbenchError):
    def __init__(self, reason: str):
        super().__init__(f"cannot fit decay curve: {reason}")
