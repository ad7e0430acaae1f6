"""
Trial records and the five reported metrics: classification accuracy and
F1, skill routing accuracy, average generation time and average VRAM-time.
"""

import math
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from sklearn.metrics import f1_score

from .errors import EmptyInput
from .utils import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

# stands in for an absent prediction; never a real class label
_ABSENT = "\x00absent"


class SkillMode(str, Enum):
    LENIENT = "lenient"
    STRICT = "strict"


@dataclass
class TrialRecord:
    id: str
    strategy: str
    predicted_label: Optional[str]
    gold_label: str
    selected_skills: Optional[List[str]] = None
    gold_skill: Optional[str] = None
    gt_minutes: float = 0.0
    vram_gb: float = 0.0
    degraded: bool = False
    routing_violation: bool = False
    error: Optional[str] = None
    model: str = ""

    def __post_init__(self):
        if self.gt_minutes < 0:
            raise ValueError("gt_minutes must be >= 0")
        if self.vram_gb < 0:
            raise ValueError("vram_gb must be >= 0")
        self.strategy = getattr(self.strategy, "value", self.strategy)
        if self.selected_skills is not None:
            self.selected_skills = list(self.selected_skills)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, row: Dict[str, Any]) -> "TrialRecord":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in row.items() if k in known})


@dataclass
class Aggregate:
    cls_acc: float
    cls_f1: float
    skill_acc: Optional[float]
    avg_gt_min: float
    avg_vram_time: float
    n: int

    def to_row(self) -> Dict[str, Any]:
        return asdict(self)


def _require(records: Sequence[TrialRecord]) -> None:
    if not records:
        raise EmptyInput("record set")


def classification_accuracy(records: Sequence[TrialRecord]) -> float:
    _require(records)
    hits = sum(1 for r in records if r.predicted_label is not None and r.predicted_label == r.gold_label)
    return hits / len(records)


def f1(records: Sequence[TrialRecord], average: str = "macro") -> float:
    """Per-class F1 over the classes that occur in gold or predictions.

    Absent predictions count against the gold class and form no class of
    their own.
    """
    _require(records)
    if average not in ("macro", "micro"):
        raise ValueError(f"unsupported F1 average: {average}")
    gold = [r.gold_label for r in records]
    pred = [r.predicted_label if r.predicted_label is not None else _ABSENT for r in records]
    labels = sorted(set(gold) | {p for p in pred if p != _ABSENT})
    return float(f1_score(gold, pred, labels=labels, average=average, zero_division=0))


def macro_f1(records: Sequence[TrialRecord]) -> float:
    return f1(records, "macro")


def skill_accuracy(records: Sequence[TrialRecord], mode: Union[SkillMode, str] = SkillMode.LENIENT) -> float:
    _require(records)
    mode = SkillMode(mode)
    hits = 0
    for r in records:
        if r.gold_skill is None:
            raise EmptyInput(f"gold skill on record {r.id}")
        selected = r.selected_skills or []
        if mode == SkillMode.LENIENT:
            hits += r.gold_skill in selected
        else:
            hits += selected == [r.gold_skill]
    return hits / len(records)


def vram_time(vram_gb: float, gt_minutes: float) -> float:
    """GPU memory residency cost in GB*min."""
    if vram_gb < 0 or gt_minutes < 0:
        raise ValueError("vram_gb and gt_minutes must be >= 0")
    return vram_gb * gt_minutes


def aggregate(
        records: Sequence[TrialRecord],
        mode: Union[SkillMode, str] = SkillMode.LENIENT,
        f1_average: str = "macro") -> Aggregate:
    """All five metrics for one record set; independent of record order."""
    _require(records)
    routed = [r for r in records if r.gold_skill is not None]
    n = len(records)
    logger.debug(f"Aggregating {n} records ({len(routed)} with a gold skill)")
    return Aggregate(
        cls_acc=classification_accuracy(records),
        cls_f1=f1(records, f1_average),
        skill_acc=skill_accuracy(routed, mode) if routed else None,
        avg_gt_min=math.fsum(r.gt_minutes for r in records) / n,
        avg_vram_time=math.fsum(vram_time(r.vram_gb, r.gt_minutes) for r in records) / n,
        n=n,
    )


def read_records(path: Union[str, Path]) -> List[TrialRecord]:
    return [TrialRecord.from_dict(row) for row in read_jsonl(path)]


def write_records(path: Union[str, Path], records: Iterable[TrialRecord]) -> None:
    write_jsonl(path, (r.to_dict() for r in records))
