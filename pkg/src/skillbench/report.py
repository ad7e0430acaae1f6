"""
Table-style aggregate reports and the sweep CSV, rendered with pandas.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import pandas as pd

from .errors import ConfigError, EmptyInput
from .metrics import Aggregate, SkillMode, TrialRecord, aggregate, read_records

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["group", "cls_acc", "cls_f1", "skill_acc", "avg_gt_min", "avg_vram_time", "n"]
GROUP_KEYS = ["file", "strategy", "model"]


def group_records(paths: Sequence[Union[str, Path]], group_by: str = "file") -> Dict[str, List[TrialRecord]]:
    if group_by not in GROUP_KEYS:
        raise ConfigError(f"unknown group key: {group_by} (expected one of {', '.join(GROUP_KEYS)})")
    if not paths:
        raise ConfigError("at least one records file is required")

    groups: Dict[str, List[TrialRecord]] = {}
    for path in paths:
        records = read_records(path)
        if not records:
            raise EmptyInput(f"records file {path}")
        for record in records:
            if group_by == "file":
                key = str(path)
            elif group_by == "strategy":
                key = record.strategy
            else:
                key = record.model or "unknown"
            groups.setdefault(key, []).append(record)
    logger.info(f"Grouped records from {len(paths)} file(s) into {len(groups)} group(s) by {group_by}")
    return groups


def aggregate_table(
        groups: Mapping[str, Sequence[TrialRecord]],
        mode: Union[SkillMode, str] = SkillMode.LENIENT,
        f1_average: str = "macro") -> pd.DataFrame:
    """One aggregate row per group, sorted by group key."""
    rows = []
    for key in sorted(groups):
        rows.append({"group": key, **aggregate(list(groups[key]), mode, f1_average).to_row()})
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def aggregate_frame(result: Aggregate, group: str) -> pd.DataFrame:
    return pd.DataFrame([{"group": group, **result.to_row()}], columns=REPORT_COLUMNS)


def render_csv(table: pd.DataFrame) -> str:
    """CSV with three decimals; an absent skill accuracy renders as an empty cell."""
    table = table.copy()
    table["skill_acc"] = table["skill_acc"].astype(float)
    table["n"] = table["n"].astype(int)
    return table.to_csv(index=False, float_format="%.3f", na_rep="", lineterminator="\n")


def write_csv(path: Union[str, Path], table: pd.DataFrame) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(table), encoding="utf-8")


def write_sweep_csv(path: Union[str, Path], points: Sequence[Tuple[int, float]]) -> None:
    frame = pd.DataFrame(points, columns=["N", "skill_acc"])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_sweep_csv(path: Union[str, Path]) -> List[Tuple[float, float]]:
    frame = pd.read_csv(path)
    missing = {"N", "skill_acc"} - set(frame.columns)
    if missing:
        raise ConfigError(f"{path}: missing columns {', '.join(sorted(missing))}")
    return [(float(n), float(acc)) for n, acc in zip(frame["N"], frame["skill_acc"])]
