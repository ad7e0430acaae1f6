"""
Experiment harness.
Runs DI / FSI / ASI / ASIH trials against a chat backend, persists one
record per task, sweeps hub size for the routing-decay curve, runs the
keyword-synonym ablation and generates seeded synthetic routing tasks.
"""

import math
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .backend import BackendConfig, BackendKind, ChatBackend, ScriptedResponses, create_backend, tokenize
from .constants import (
    DEFAULT_KEYWORD,
    DEFAULT_N_DISTRACTORS,
    FILLER_LEXICON,
    LABEL_CUES,
    STOPWORDS,
    SYNTHETIC_LABELS,
    TASK_TEMPLATES,
)
from .errors import (
    ConfigError,
    DatasetError,
    EmptyDataset,
    EmptyHub,
    InsufficientPool,
    SkillbenchError,
)
from .metrics import Aggregate, SkillMode, TrialRecord, aggregate, skill_accuracy
from .prompt_protocol import (
    ChatMessage,
    KeywordVariant,
    Role,
    Strategy,
    Transcript,
    parse_execution_json,
    parse_selection_json,
    render_execution_prompt,
    render_selection_prompt,
    render_strategy_prompt,
    render_task,
    trim_history,
)
from .skill_repo import SkillHub, build_trial_hub, load_hub
from .utils import UINT64_MASK, JsonlAppender, read_jsonl, stable_hash64, write_jsonl

logger = logging.getLogger(__name__)

RECORDS_FILENAME = "records.jsonl"
TRANSCRIPTS_FILENAME = "transcripts.jsonl"
AGGREGATE_FILENAME = "aggregate.csv"
SWEEP_FILENAME = "sweep.csv"


@dataclass
class Task:
    id: str
    input_text: str
    gold_label: str
    gold_skill: str
    fields: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("id", "input_text", "gold_label", "gold_skill"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise DatasetError(f"task field '{name}' must be a non-empty string")

    def to_dict(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "id": self.id,
            "input": self.input_text,
            "label": self.gold_label,
            "skill": self.gold_skill,
        }
        if self.fields:
            row["fields"] = dict(self.fields)
        return row


@dataclass
class ExperimentSpec:
    strategy: Strategy
    dataset_path: str = ""
    skills_dir: str = ""
    backend: BackendConfig = field(default_factory=BackendConfig)
    seed: int = 0
    n_distractors: int = DEFAULT_N_DISTRACTORS
    keyword: str = DEFAULT_KEYWORD
    skill_mode: SkillMode = SkillMode.LENIENT
    parallelism: int = 1
    task_template: str = "plain"
    f1_average: str = "macro"
    script_path: Optional[str] = None

    def __post_init__(self):
        self.strategy = Strategy.parse(self.strategy)
        try:
            self.skill_mode = SkillMode(self.skill_mode)
        except ValueError:
            raise ConfigError(f"unknown skill mode: {self.skill_mode}") from None
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.n_distractors < 0:
            raise ConfigError("n_distractors must be >= 0")
        if self.task_template not in TASK_TEMPLATES:
            raise ConfigError(f"unknown task template: {self.task_template}")
        if self.f1_average not in ("macro", "micro"):
            raise ConfigError(f"unknown F1 average: {self.f1_average}")
        KeywordVariant(self.keyword)
        self.seed = int(self.seed) & UINT64_MASK


@dataclass
class ExperimentResult:
    records: List[TrialRecord]
    aggregate: Aggregate
    out_dir: Optional[Path] = None


# ---
# Datasets
# ---


def load_dataset(path: Union[str, Path]) -> List[Task]:
    """Read `{"id", "input", "label", "skill"[, "fields"]}` JSONL rows."""
    try:
        rows = read_jsonl(path)
    except ValueError as e:
        raise DatasetError(str(e)) from e
    if not rows:
        raise EmptyDataset(str(path))

    tasks: List[Task] = []
    seen = set()
    for lineno, row in enumerate(rows, 1):
        if not isinstance(row, dict):
            raise DatasetError(f"{path}: row {lineno} is not an object")
        missing = [k for k in ("id", "input", "label", "skill") if k not in row]
        if missing:
            raise DatasetError(f"{path}: row {lineno} is missing {', '.join(missing)}")
        fields = row.get("fields") or {}
        if not isinstance(fields, dict):
            raise DatasetError(f"{path}: row {lineno} 'fields' must be an object")
        task = Task(
            id=str(row["id"]),
            input_text=row["input"],
            gold_label=row["label"],
            gold_skill=row["skill"],
            fields={str(k): str(v) for k, v in fields.items()},
        )
        if task.id in seen:
            raise DatasetError(f"{path}: duplicate task id '{task.id}'")
        seen.add(task.id)
        tasks.append(task)
    return tasks


def write_dataset(path: Union[str, Path], tasks: Sequence[Task]) -> None:
    write_jsonl(path, (t.to_dict() for t in tasks))


def derive_task_seed(seed: int, task_id: str) -> int:
    """Per-task seed: independent of every other task in the dataset."""
    return (int(seed) ^ stable_hash64(task_id)) & UINT64_MASK


def label_from_message(message: Optional[str]) -> Optional[str]:
    if message is None:
        return None
    # surrounding quotes and a closing period are not part of the label
    label = message.strip().strip("\"'.").strip()
    return label or None


# ---
# Trials
# ---


class _TrialLog:
    """Transcript log shared by concurrent trials; also owns the ASIH history."""

    def __init__(self, appender: Optional[JsonlAppender] = None):
        self.appender = appender
        self.history: List[ChatMessage] = []
        self.lock = threading.Lock()

    def write(self, trial_id: str, phase: str, transcript: Transcript, response: Optional[str]) -> None:
        if self.appender is not None:
            self.appender.append({
                "trial": trial_id,
                "phase": phase,
                "messages": transcript.to_wire(),
                "response": response,
            })


def _check_pool(hub: SkillHub, n_distractors: int) -> None:
    if len(hub) - 1 < n_distractors:
        raise InsufficientPool(max(len(hub) - 1, 0), n_distractors)


def _check_gold_skills(hub: SkillHub, tasks: Sequence[Task]) -> None:
    unknown = sorted({t.gold_skill for t in tasks if t.gold_skill not in hub})
    if unknown:
        raise DatasetError(f"gold skills not found in the skills directory: {', '.join(unknown)}")


def _trial_hub(spec: ExperimentSpec, task: Task, hub: SkillHub) -> SkillHub:
    gold = hub.get(task.gold_skill)
    if gold is None:
        raise DatasetError(f"gold skill '{task.gold_skill}' not found for task {task.id}")
    pool = [s for s in hub if s.name != gold.name]
    return build_trial_hub(gold, pool, spec.n_distractors, derive_task_seed(spec.seed, task.id))


def run_trial(
        spec: ExperimentSpec,
        task: Task,
        hub: SkillHub,
        backend: ChatBackend,
        log: Optional[_TrialLog] = None,
        selection_only: bool = False) -> TrialRecord:
    """Run one task under `spec.strategy`; failures are recorded, not raised."""
    log = log if log is not None else _TrialLog()
    strategy = spec.strategy
    routed = strategy in (Strategy.ASI, Strategy.ASIH)
    latencies: List[float] = []

    def call(phase: str, transcript: Transcript) -> str:
        try:
            result = backend.complete(transcript)
        except SkillbenchError:
            log.write(task.id, phase, transcript, None)
            raise
        latencies.append(result.latency)
        log.write(task.id, phase, transcript, result.text)
        return result.text

    user_text = render_task(spec.task_template, task.input_text, task.fields)
    predicted: Optional[str] = None
    selected: Optional[List[str]] = [] if routed else None
    degraded = False
    violation = False
    error: Optional[str] = None

    try:
        if not routed:
            trial_hub = _trial_hub(spec, task, hub) if strategy == Strategy.FSI else SkillHub()
            transcript = render_strategy_prompt(strategy, trial_hub, user_text, spec.keyword)
            response = parse_execution_json(call("single", transcript))
            predicted, degraded = label_from_message(response.message), response.degraded
        else:
            trial_hub = _trial_hub(spec, task, hub)
            selection_prompt = render_selection_prompt(trial_hub, user_text, spec.keyword)
            raw_selection = call("selection", selection_prompt)
            selection = parse_selection_json(raw_selection)

            for name in selection.skills:
                if name not in selected:
                    selected.append(name)
            valid = [name for name in selected if name in trial_hub]
            violation = len(valid) < len(selected)
            if violation:
                logger.warning(f"Task {task.id}: model selected unknown skills {list(selection.skills)}")

            if strategy == Strategy.ASIH:
                with log.lock:
                    log.history.extend([
                        ChatMessage(Role.USER, user_text),
                        ChatMessage(Role.ASSISTANT, raw_selection),
                    ])

            if valid and not selection_only:
                execution = render_execution_prompt(
                    [trial_hub.skills[name] for name in valid], user_text, spec.keyword)
                if strategy == Strategy.ASIH:
                    with log.lock:
                        history = list(log.history)
                    execution = trim_history(Transcript(
                        (execution.messages[0], *history, ChatMessage(Role.USER, user_text))))
                raw_execution = call("execution", execution)
                response = parse_execution_json(raw_execution)
                predicted, degraded = label_from_message(response.message), response.degraded
                if strategy == Strategy.ASIH:
                    with log.lock:
                        log.history.extend([
                            ChatMessage(Role.USER, user_text),
                            ChatMessage(Role.ASSISTANT, raw_execution),
                        ])
    except SkillbenchError as e:
        logger.error(f"Trial {task.id} failed: {e}")
        error = str(e)
        predicted = None
        degraded = True

    return TrialRecord(
        id=task.id,
        strategy=strategy.value,
        predicted_label=predicted,
        gold_label=task.gold_label,
        selected_skills=selected,
        gold_skill=task.gold_skill if routed else None,
        gt_minutes=math.fsum(latencies) / 60.0,
        vram_gb=backend.config.resolved_vram_gb(),
        degraded=degraded,
        routing_violation=violation,
        error=error,
        model=backend.config.model_id,
    )


def _effective_parallelism(spec: ExperimentSpec) -> int:
    if spec.strategy == Strategy.ASIH and spec.parallelism > 1:
        logger.warning("ASIH keeps one chat history; running trials sequentially")
        return 1
    return spec.parallelism


def _run_trials(
        spec: ExperimentSpec,
        tasks: Sequence[Task],
        hub: SkillHub,
        backend: ChatBackend,
        log: _TrialLog,
        on_record: Optional[Callable[[TrialRecord], None]] = None,
        selection_only: bool = False) -> List[TrialRecord]:
    def one(task: Task) -> TrialRecord:
        record = run_trial(spec, task, hub, backend, log, selection_only)
        if on_record is not None:
            on_record(record)
        return record

    workers = _effective_parallelism(spec)
    if workers == 1:
        return [one(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, tasks))


def make_backend(spec: ExperimentSpec) -> ChatBackend:
    script = None
    if spec.backend.kind == BackendKind.MOCK:
        if not spec.script_path:
            raise ConfigError("mock backend requires a script file")
        script = ScriptedResponses.from_file(spec.script_path)
    return create_backend(spec.backend, script=script)


def run_experiment(
        spec: ExperimentSpec,
        out_dir: Optional[Union[str, Path]] = None,
        tasks: Optional[Sequence[Task]] = None,
        hub: Optional[SkillHub] = None,
        backend: Optional[ChatBackend] = None) -> ExperimentResult:
    """Run every task of the dataset and aggregate the records.

    With `out_dir`, records and transcripts are appended to
    records.jsonl / transcripts.jsonl as trials finish.
    """
    tasks = list(tasks) if tasks is not None else load_dataset(spec.dataset_path)
    if not tasks:
        raise EmptyDataset(spec.dataset_path)
    hub = hub if hub is not None else load_hub(spec.skills_dir)
    _check_gold_skills(hub, tasks)
    if spec.strategy != Strategy.DI:
        _check_pool(hub, spec.n_distractors)
    backend = backend if backend is not None else make_backend(spec)

    records_log: Optional[JsonlAppender] = None
    log = _TrialLog()
    if out_dir is not None:
        out_dir = Path(out_dir)
        records_log = JsonlAppender(out_dir / RECORDS_FILENAME)
        log.appender = JsonlAppender(out_dir / TRANSCRIPTS_FILENAME)

    logger.info(
        f"Running {len(tasks)} tasks: strategy={spec.strategy.value} "
        f"backend={backend.get_backend_name()} keyword={spec.keyword} seed={spec.seed}")
    records = _run_trials(
        spec, tasks, hub, backend, log,
        on_record=(lambda r: records_log.append(r.to_dict())) if records_log else None)

    result = aggregate(records, spec.skill_mode, spec.f1_average)
    logger.info(f"Finished {len(records)} trials: {result}")
    return ExperimentResult(records=records, aggregate=result, out_dir=out_dir)


# ---
# Ablations
# ---


def sweep_skill_count(
        spec: ExperimentSpec,
        counts: Sequence[int],
        tasks: Optional[Sequence[Task]] = None,
        hub: Optional[SkillHub] = None,
        backend: Optional[ChatBackend] = None) -> List[Tuple[int, float]]:
    """Routing accuracy of selection-only trials for hubs of N skills (N - 1 distractors)."""
    if not counts:
        raise ConfigError("counts must be non-empty")
    if any(n < 1 for n in counts):
        raise ConfigError("every skill count must be >= 1")
    tasks = list(tasks) if tasks is not None else load_dataset(spec.dataset_path)
    if not tasks:
        raise EmptyDataset(spec.dataset_path)
    hub = hub if hub is not None else load_hub(spec.skills_dir)
    _check_gold_skills(hub, tasks)
    _check_pool(hub, max(counts) - 1)

    routed_strategy = spec.strategy if spec.strategy in (Strategy.ASI, Strategy.ASIH) else Strategy.ASI
    points: List[Tuple[int, float]] = []
    for n in counts:
        point_spec = replace(spec, strategy=routed_strategy, n_distractors=n - 1)
        point_backend = backend if backend is not None else make_backend(point_spec)
        records = _run_trials(point_spec, tasks, hub, point_backend, _TrialLog(), selection_only=True)
        acc = skill_accuracy(records, point_spec.skill_mode)
        logger.info(f"Sweep N={n}: skill_acc={acc:.3f}")
        points.append((n, acc))
    return points


def synonym_sweep(
        spec: ExperimentSpec,
        keywords: Sequence[str],
        out_dir: Optional[Union[str, Path]] = None,
        tasks: Optional[Sequence[Task]] = None,
        hub: Optional[SkillHub] = None,
        backend_factory: Optional[Callable[[ExperimentSpec], ChatBackend]] = None) -> Dict[str, Aggregate]:
    """One run per keyword with everything else, seeds included, held fixed."""
    if not keywords:
        raise ConfigError("keywords must be non-empty")
    results: Dict[str, Aggregate] = {}
    for keyword in keywords:
        keyword_spec = replace(spec, keyword=keyword)
        backend = backend_factory(keyword_spec) if backend_factory else None
        keyword_out = Path(out_dir) / keyword if out_dir is not None else None
        result = run_experiment(keyword_spec, keyword_out, tasks=tasks, hub=hub, backend=backend)
        results[keyword] = result.aggregate
    return results


# ---
# Synthetic tasks
# ---


def content_words(description: str) -> List[str]:
    """Lowercase alphanumeric description tokens that are not stopwords, sorted."""
    return sorted(tokenize(description) - STOPWORDS)


def generate_synthetic_tasks(hub: SkillHub, n_tasks: int, seed: int) -> List[Task]:
    """Seeded routing tasks built from the gold skill's description words.

    Each text mixes 3-6 description words, filler words and one cue word
    for its label, in shuffled order.
    """
    if len(hub) == 0:
        raise EmptyHub()
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")

    rng = np.random.default_rng(int(seed) & UINT64_MASK)
    names = sorted(hub.names)
    tasks: List[Task] = []
    for i in range(n_tasks):
        gold = hub.skills[names[int(rng.integers(len(names)))]]
        words = content_words(gold.description)
        if len(words) < 3:
            logger.warning(f"Skill '{gold.name}' has only {len(words)} content words")
        k = int(rng.integers(min(3, len(words)), min(6, len(words)) + 1)) if words else 0
        picked = [words[j] for j in rng.choice(len(words), size=k, replace=False)] if k else []
        n_filler = int(rng.integers(2, 5))
        filler = [FILLER_LEXICON[int(j)] for j in rng.integers(len(FILLER_LEXICON), size=n_filler)]
        label = SYNTHETIC_LABELS[int(rng.integers(len(SYNTHETIC_LABELS)))]
        cues = LABEL_CUES[label]
        cue = cues[int(rng.integers(len(cues)))]

        tokens = picked + filler + [cue]
        order = rng.permutation(len(tokens))
        tasks.append(Task(
            id=f"synthetic-{seed}-{i:04d}",
            input_text=" ".join(tokens[int(j)] for j in order),
            gold_label=label,
            gold_skill=gold.name,
        ))
    return tasks
