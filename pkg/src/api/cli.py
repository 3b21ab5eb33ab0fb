# src/api/cli.py

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

import pydantic
import yaml

from src.api.batch import batch_exit_code, run_batch
from src.api.jobs import EXIT_FAILURE, EXIT_OK, EXIT_VALIDATION, canonical_json, run_job, verify_report, write_report
from src.api.schemas import COMMANDS, ExperimentConfig
from src.core.errors import ValidationError
from src.core.settings import configure_logging, get_settings

# Configure logging
logger = logging.getLogger("ergodic_workbench_api.cli")

# flag -> config field, for flags whose value goes straight into the config
VALUE_FLAGS = {
    "seed": int, "eps": str, "lambda1": str, "lambda2": str, "norm_f": str, "norm_fstar": str,
    "K": str, "mode": str, "horizon": int, "n": int, "N": int, "k": int, "alpha": str, "beta": str,
    "imax": int, "C": float, "schedule_cap": int, "digit_budget": int, "trace_cap": int,
    "window_cap": int, "probe_horizon": int,
}


def _common_arguments() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False, allow_abbrev=False, argument_default=argparse.SUPPRESS)
    parent.add_argument("--config", help="JSON or YAML experiment config (a list runs as a batch)")
    parent.add_argument("--system", help="named system, recipe/document JSON, or a path to one")
    parent.add_argument("--f", help="element: a pattern name or a JSON list of coordinates")
    for name, kind in VALUE_FLAGS.items():
        parent.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind)
    parent.add_argument("--table", help='halting table as JSON, e.g. \'{"1": 2}\'')
    parent.add_argument("--regimes", help="comma-separated growth functions for asymptotic-table")
    parent.add_argument("--rho-range", dest="rho_range", help="comma-separated rho values")
    parent.add_argument("--schedule", action="store_true", help="also run the i_k / n_k schedule")
    parent.add_argument("--explain", action="store_true", help="add lemma-level diagnostics")
    parent.add_argument("--full", action="store_true", help="print big integers in full")
    parent.add_argument("--format", choices=["json", "csv"])
    parent.add_argument("--output", help="output file for the report (json) or table (csv)")
    parent.add_argument("--jobs", type=int, help="worker threads for batch configs")
    parent.add_argument("--log-level", dest="log_level")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _common_arguments()
    parser = argparse.ArgumentParser(prog="run_workbench",
                                     description="Quantitative ergodic theorem workbench.",
                                     parents=[parent], allow_abbrev=False)
    parser.add_argument("--verify", metavar="REPORT", help="recompute a report from its embedded config")
    subparsers = parser.add_subparsers(dest="command")
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[parent], allow_abbrev=False)
    return parser


def _load_structured(value: str) -> Any:
    """JSON text, or a JSON / YAML file path."""
    if os.path.exists(value):
        with open(value, "r") as handle:
            return yaml.safe_load(handle)
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def load_config_documents(path: str) -> List[Dict[str, Any]]:
    """Experiment documents from a config file: one object, a list, or {"experiments": [...]}."""
    try:
        with open(path, "r") as handle:
            doc = yaml.safe_load(handle)
    except (OSError, yaml.YAMLError) as e:
        raise ValidationError(f"cannot read config {path}: {e}") from e
    if isinstance(doc, dict) and "experiments" in doc:
        doc = doc["experiments"]
    if isinstance(doc, dict):
        return [doc]
    if isinstance(doc, list) and all(isinstance(item, dict) for item in doc):
        return doc
    raise ValidationError(f"config {path} must hold an object or a list of objects")


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    opts = vars(args)
    overrides: Dict[str, Any] = {}
    if opts.get("command"):
        overrides["command"] = opts["command"]
    if "system" in opts:
        overrides["system"] = _load_structured(opts["system"])
    if "f" in opts:
        value = _load_structured(opts["f"])
        overrides["f"] = value if isinstance(value, (list, str)) else opts["f"]
    for name in VALUE_FLAGS:
        value = opts.get(name)
        if value is not None:
            overrides[name] = value
    if "table" in opts:
        overrides["table"] = _load_structured(opts["table"])
    if "regimes" in opts:
        overrides["regimes"] = [r.strip() for r in opts["regimes"].split(",") if r.strip()]
    if "rho_range" in opts:
        overrides["rho_range"] = [int(r) for r in opts["rho_range"].split(",") if r.strip()]
    for flag in ("schedule", "explain", "full"):
        if opts.get(flag):
            overrides[flag] = True
    if "format" in opts or "output" in opts:
        overrides["output"] = {"format": opts.get("format"), "path": opts.get("output")}
    return overrides


def build_configs(args: argparse.Namespace) -> List[ExperimentConfig]:
    config_path = vars(args).get("config")
    documents = load_config_documents(config_path) if config_path else [{}]
    overrides = _flag_overrides(args)
    configs = []
    for doc in documents:
        merged = {**doc, **overrides}
        if "output" in overrides:
            given = {k: v for k, v in overrides["output"].items() if v is not None}
            merged["output"] = {**(doc.get("output") or {}), **given}
        configs.append(ExperimentConfig(**merged))
    for config in configs:
        if config.command is None:
            raise ValidationError("no command given (subcommand or 'command' in the config)")
    return configs


def _verify(path: str) -> int:
    try:
        with open(path, "r") as handle:
            document = json.load(handle)
        matches, rerun = verify_report(document)
    except (OSError, json.JSONDecodeError, ValidationError, pydantic.ValidationError) as e:
        logger.error(f"cannot verify {path}: {e}")
        return EXIT_VALIDATION
    print(json.dumps({"report": path, "verified": matches, "command": rerun.command}, sort_keys=True))
    return EXIT_OK if matches else EXIT_FAILURE


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the workbench CLI.

    Returns:
        0 on success, 2 on validation errors, 3 when a budget or cap ran out
        (the partial report is still written), 1 on verification mismatch or failure
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = vars(args)
    configure_logging(opts.get("log_level"))

    if opts.get("verify"):
        return _verify(opts["verify"])
    try:
        configs = build_configs(args)
    except (ValidationError, pydantic.ValidationError) as e:
        logger.error(f"Invalid experiment config: {e}")
        print(json.dumps({"status": "error", "error": str(e)}, sort_keys=True))
        return EXIT_VALIDATION

    settings = get_settings()
    if len(configs) == 1:
        result = run_job(configs[0], settings)
        if write_report(result, configs[0], settings) is None:
            sys.stdout.write(result.to_json())
        return result.exit_code

    results = run_batch(configs, max_workers=opts.get("jobs"), settings=settings)
    for config, result in zip(configs, results):
        write_report(result, config, settings)
    sys.stdout.write(canonical_json({"reports": [r.report for r in results]}))
    return batch_exit_code(results)
