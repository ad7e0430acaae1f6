"""
Shared fixtures: on-disk skill directories and in-memory hubs.
"""

import re
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

import pytest

from skillbench.skill_repo import Skill, SkillDescriptor, hub_from_skills


def write_skill(root: Path, name: str, description: str, body: str = "Follow the steps.\n",
                dirname: str = None) -> Path:
    """Write <root>/<dirname or name>/SKILL.md and return its path."""
    folder = root / (dirname or name)
    folder.mkdir(parents=True, exist_ok=True)
    path = folder / "SKILL.md"
    path.write_text(f"---\nname: {name}\ndescription: {description}\n---\n{body}", encoding="utf-8")
    return path


def make_skill(name: str, description: str, body: str = "") -> Skill:
    return Skill(SkillDescriptor(name, description), body=body or f"Workflow for {name}.\n")


def jaccard_route(task: str, skills: Iterable[Skill]) -> Tuple[str, ...]:
    """Recompute Jaccard routing from scratch: best overlap wins, ties go to the smaller name."""
    def words(text):
        return set(re.findall(r"[a-z0-9]+", text.lower()))

    task_set = words(task)
    scored = []
    for skill in skills:
        skill_set = words(skill.name) | words(skill.description)
        scored.append((-Fraction(len(task_set & skill_set), len(task_set | skill_set)), skill.name))
    best_score, best_name = min(scored)
    return () if best_score == 0 else (best_name,)


REALISTIC_SKILLS: Dict[str, str] = {
    "sentiment-analytics": "Classify movie review sentiment as positive or negative",
    "pdf-tools": "Extract tables and text from pdf documents",
    "xbrl-tagging": "Tag numeric entities in financial filings with xbrl labels",
    "email-triage": "Decide whether an insurance email thread needs a reply",
    "web-research": "Search the web and summarize sources",
    "langgraph-docs": "Answer questions about langgraph state graphs",
}


def realistic_body(name: str) -> str:
    return (
        f"# {name}\n\n"
        "## Workflow\n\n"
        "1. Read the request carefully and restate the goal in one sentence.\n"
        "2. Gather the inputs the request refers to and check they are complete.\n"
        "3. Apply the domain checklist below, step by step, noting each decision.\n"
        "4. Produce the final answer in the required output format.\n\n"
        "## Checklist\n\n"
        "- Prefer the most specific label supported by the evidence.\n"
        "- When the evidence is mixed, weigh explicit statements over tone.\n"
        "- Never invent facts that are not present in the input.\n"
    )


@pytest.fixture
def skills_dir(tmp_path) -> Path:
    """Three valid skills; alpha references beta by link and gamma by token."""
    root = tmp_path / "skills"
    write_skill(root, "alpha", "First skill for alpha tasks",
                "See [beta](../beta/SKILL.md) and skill:gamma.\n")
    write_skill(root, "beta", "Second skill for beta tasks")
    write_skill(root, "gamma", "Third skill for gamma tasks")
    return root


@pytest.fixture
def realistic_skills() -> List[Skill]:
    return [make_skill(n, d, realistic_body(n)) for n, d in sorted(REALISTIC_SKILLS.items())]


@pytest.fixture
def realistic_hub(realistic_skills):
    return hub_from_skills(realistic_skills)


@pytest.fixture
def realistic_dir(tmp_path) -> Path:
    root = tmp_path / "realistic"
    for name, description in REALISTIC_SKILLS.items():
        write_skill(root, name, description, realistic_body(name))
    return root
