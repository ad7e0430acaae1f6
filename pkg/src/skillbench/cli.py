"""
Command-line entry point: `skillbench <command> [flags]`.

Commands: validate, run, sweep, fit, pomdp, report, preflight.
Standard output carries only the line/CSV/JSON contracts; logs go to stderr.
"""
import sys
import json
import logging
import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .backend import BackendConfig
from .constants import DEFAULT_CONTEXT_LIMIT_TOKENS, DEFAULT_N_DISTRACTORS, DEFAULT_REQUEST_TIMEOUT
from .curve_fit import fit_decay_curve
from .disclosure_controller import belief_grid, load_model, value_iteration
from .errors import ConfigError, SkillbenchError
from .harness import (
    AGGREGATE_FILENAME,
    SWEEP_FILENAME,
    ExperimentSpec,
    run_experiment,
    sweep_skill_count,
)
from .preflight import load_env_file, run_checks
from .report import aggregate_frame, aggregate_table, group_records, read_sweep_csv, render_csv, write_csv, write_sweep_csv
from .skill_repo import load_hub, reference_edges, validate_directory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_IO = 2

DEFAULT_SWEEP_COUNTS = "5,10,20,50,100"

# applied after --config so that a config file can supply any of them
EXPERIMENT_DEFAULTS: Dict[str, Any] = {
    "endpoint": "",
    "model": "",
    "vram_gb": None,
    "seed": 0,
    "n_distractors": DEFAULT_N_DISTRACTORS,
    "keyword": "Skill",
    "skill_mode": "lenient",
    "parallelism": 1,
    "task_template": "plain",
    "f1_average": "macro",
    "context_limit": DEFAULT_CONTEXT_LIMIT_TOKENS,
    "timeout": DEFAULT_REQUEST_TIMEOUT,
    "script": None,
    "out": "out",
    "counts": DEFAULT_SWEEP_COUNTS,
}
EXPERIMENT_REQUIRED = ["strategy", "dataset", "skills_dir", "backend"]


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file supplying flag defaults")
    p.add_argument("--log-level", default=None, help="logging level (default WARNING)")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", help="DI, FSI, ASI or ASIH")
    p.add_argument("--dataset", help="task JSONL file")
    p.add_argument("--skills-dir", dest="skills_dir", help="directory of <name>/SKILL.md")
    p.add_argument("--backend", choices=["http", "mock", "heuristic"])
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--vram-gb", dest="vram_gb", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-distractors", dest="n_distractors", type=int)
    p.add_argument("--keyword")
    p.add_argument("--skill-mode", dest="skill_mode", choices=["lenient", "strict"])
    p.add_argument("--parallelism", type=int)
    p.add_argument("--task-template", dest="task_template")
    p.add_argument("--f1-average", dest="f1_average", choices=["macro", "micro"])
    p.add_argument("--context-limit", dest="context_limit", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--script", help="scripted responses JSON for the mock backend")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skillbench", description="Agent skill routing benchmark")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("validate", help="validate a skills directory")
    p.add_argument("skills_dir")
    _add_common(p)

    p = sub.add_parser("run", help="run one experiment")
    _add_experiment_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="routing accuracy versus hub size")
    _add_experiment_flags(p)
    p.add_argument("--counts", help=f"comma-separated hub sizes (default {DEFAULT_SWEEP_COUNTS})")
    _add_common(p)

    p = sub.add_parser("fit", help="fit the decay curve to a sweep CSV")
    p.add_argument("--input", help="sweep CSV with columns N,skill_acc")
    p.add_argument("--n0", type=float)
    p.add_argument("--out", help="write the fit JSON here as well")
    _add_common(p)

    p = sub.add_parser("pomdp", help="value function of a disclosure model on a belief grid")
    p.add_argument("--model", help="model JSON")
    p.add_argument("--horizon", type=int)
    p.add_argument("--resolution", type=int)
    _add_common(p)

    p = sub.add_parser("report", help="aggregate records files into a CSV table")
    p.add_argument("records", nargs="+")
    p.add_argument("--group-by", dest="group_by", choices=["file", "strategy", "model"])
    p.add_argument("--skill-mode", dest="skill_mode", choices=["lenient", "strict"])
    p.add_argument("--f1-average", dest="f1_average", choices=["macro", "micro"])
    _add_common(p)

    p = sub.add_parser("preflight", help="check modules, API key and endpoint")
    p.add_argument("--endpoint")
    _add_common(p)
    return parser


def _apply_config(args: argparse.Namespace, defaults: Dict[str, Any]) -> argparse.Namespace:
    """Explicit flags win over the config file, which wins over built-in defaults."""
    config: Dict[str, Any] = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            config = json.load(f)
        if not isinstance(config, dict):
            raise UsageError(f"config file must hold a JSON object: {args.config}")
        config = {k.replace("-", "_"): v for k, v in config.items()}
    for key, value in config.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _require(args: argparse.Namespace, names: List[str]) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"missing required flags: {flags}")


def _configure_logging(level: Optional[str]) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or "WARNING").upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _experiment_spec(args: argparse.Namespace) -> ExperimentSpec:
    backend = BackendConfig(
        kind=args.backend,
        endpoint=args.endpoint or "",
        model_id=args.model or "",
        context_limit_tokens=int(args.context_limit),
        request_timeout=float(args.timeout),
        vram_gb=args.vram_gb,
    )
    return ExperimentSpec(
        strategy=args.strategy,
        dataset_path=args.dataset,
        skills_dir=args.skills_dir,
        backend=backend,
        seed=int(args.seed),
        n_distractors=int(args.n_distractors),
        keyword=args.keyword,
        skill_mode=args.skill_mode,
        parallelism=int(args.parallelism),
        task_template=args.task_template,
        f1_average=args.f1_average,
        script_path=args.script,
    )


# ---
# Commands
# ---


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        results = validate_directory(args.skills_dir)
    except OSError as e:
        print(f"ERR {args.skills_dir}: {e}")
        return EXIT_IO

    for result in results:
        if result.ok:
            print(f"OK {result.name}")
        else:
            print(f"ERR {result.path}: {result.error}")
    if all(r.ok for r in results):
        for src, dst in reference_edges(load_hub(args.skills_dir)):
            print(f"EDGE {src} -> {dst}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_ERROR


def cmd_run(args: argparse.Namespace) -> int:
    spec = _experiment_spec(args)
    out_dir = Path(args.out)
    result = run_experiment(spec, out_dir)
    table = aggregate_frame(result.aggregate, spec.strategy.value)
    write_csv(out_dir / AGGREGATE_FILENAME, table)
    sys.stdout.write(render_csv(table))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = _experiment_spec(args)
    try:
        counts = [int(c) for c in str(args.counts).split(",") if c.strip()]
    except ValueError:
        raise UsageError(f"--counts must be comma-separated integers: {args.counts}") from None
    points = sweep_skill_count(spec, counts)
    path = Path(args.out) / SWEEP_FILENAME
    write_sweep_csv(path, points)
    sys.stdout.write(pd.DataFrame(points, columns=["N", "skill_acc"]).to_csv(index=False, lineterminator="\n"))
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    _require(args, ["input"])
    fit = fit_decay_curve(read_sweep_csv(args.input), n0=float(args.n0))
    text = json.dumps(fit.to_dict(), indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_pomdp(args: argparse.Namespace) -> int:
    _require(args, ["model"])
    model = load_model(args.model)
    horizon = model.horizon if args.horizon is None else int(args.horizon)
    vf = value_iteration(model, horizon)

    rows = []
    for b in belief_grid(model.n_states, int(args.resolution)):
        row = {f"b_{i}": p for i, p in enumerate(b)}
        row["value"] = vf.value(b)
        row["action"] = model.action_names[vf.best_action(b)]
        rows.append(row)
    frame = pd.DataFrame(rows)
    sys.stdout.write(frame.to_csv(index=False, float_format="%.6f", lineterminator="\n"))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        groups = group_records(args.records, args.group_by)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(render_csv(aggregate_table(groups, args.skill_mode, args.f1_average)))
    return EXIT_OK


def cmd_preflight(args: argparse.Namespace) -> int:
    results = run_checks(args.endpoint)
    print(json.dumps(results, indent=2))
    return EXIT_OK if results["summary"]["ok"] else EXIT_ERROR


COMMANDS = {
    "validate": (cmd_validate, {}, []),
    "run": (cmd_run, EXPERIMENT_DEFAULTS, EXPERIMENT_REQUIRED),
    "sweep": (cmd_sweep, EXPERIMENT_DEFAULTS, EXPERIMENT_REQUIRED),
    "fit": (cmd_fit, {"n0": 5.0}, []),
    "pomdp": (cmd_pomdp, {"resolution": 100}, []),
    "report": (cmd_report, {"group_by": "file", "skill_mode": "lenient", "f1_average": "macro"}, []),
    "preflight": (cmd_preflight, {}, []),
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(args.log_level)
        load_env_file()
        handler, defaults, required = COMMANDS[args.command]
        args = _apply_config(args, defaults)
        _require(args, required)
        return handler(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except SkillbenchError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO if isinstance(e, OSError) else EXIT_ERROR


def run():
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
