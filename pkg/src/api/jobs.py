# src/api/jobs.py

import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import pydantic

from src.api.schemas import COMMANDS, ExperimentConfig
from src.core import growth, operators
from src.core.computable_rates import (HaltingTable, build_specker_system, dyadic_oracle, exact_oracle,
                                       limit_norm_ergodic, pointwise_rate_from_limit_norm,
                                       r_value, rate_from_limit_norm, recover_halting_bits,
                                       specker_norm, specker_norm_direct)
from src.core.documents import element_from_spec, load_document
from src.core.errors import BudgetExceededError, CapExceededError, ValidationError, WorkbenchError
from src.core.exact import as_rational, fraction_to_json
from src.core.hilbert_core import Element, MeasureSpace, Operator
from src.core.mean_bounds import (asymptotic_table, d_fns, find_stable_n, iterate_schedule,
                                  linear_in_c, local_stability_bound_check, met_bound, norm_sq_from_norm,
                                  u_bound_nonexpansive)
from src.core.pointwise import (chebyshev_measure, find_pointwise_stable_n, maximal_set_measure,
                                maximal_theorem_check, pointwise_schedule, pet_bound)
from src.core.projection import compute_trace, trace_rows, trace_to_csv
from src.core.settings import PROJECT_ROOT, Settings, get_settings
from src.core.upcrossings import (bishop_check, bishop_pet_bound, compare_bounds, count_fluctuations,
                                  crossing_profile, ivanov_check, kachurovskii_met_bound, windowed_crossings)

# Configure logging
logger = logging.getLogger("ergodic_workbench_api.jobs")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_EXHAUSTED = 3

# explain sections look at the first few trace indices only
EXPLAIN_TRACE_INDICES = 16


class Exhausted(Exception):
    """A command finished with a partial result (budget or search cap reached)."""

    def __init__(self, result: Dict[str, Any], reason: str):
        super().__init__(reason)
        self.result = result
        self.reason = reason


@dataclass
class JobResult:
    command: str
    status: str
    exit_code: int
    report: Dict[str, Any]

    def to_json(self) -> str:
        return canonical_json(self.report)


# --- Serialization ---

def sanitize(data: Any) -> Any:
    """Recursively converts numpy scalars, Fractions and non-finite floats for JSON."""
    if isinstance(data, dict):
        return {str(k): sanitize(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [sanitize(item) for item in data]
    if isinstance(data, Fraction):
        return fraction_to_json(data)
    if isinstance(data, np.ndarray):
        return sanitize(data.tolist())
    if isinstance(data, np.bool_):
        return bool(data)
    if isinstance(data, np.integer):
        return int(data)
    if isinstance(data, (float, np.floating)):
        value = float(data)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return data


def canonical_json(report: Dict[str, Any]) -> str:
    """Sorted keys, fixed indentation: identical configs give identical bytes."""
    return json.dumps(sanitize(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


# --- System resolution ---

def resolve_system(config: ExperimentConfig) -> Tuple[MeasureSpace, Operator, Optional[Element]]:
    """(space, operator, f) for a config; f is None when neither config nor document gives one."""
    if config.system is None:
        raise ValidationError("this command needs a system")
    f = None
    if isinstance(config.system, str):
        space, operator = operators.build(operators.named_system(config.system))
    elif "kind" in config.system:
        recipe = dict(config.system)
        recipe.setdefault("seed", config.seed)
        space, operator = operators.build(recipe)
    else:
        space, operator, f = load_document(config.system)
    if config.f is not None:
        f = element_from_spec(config.f, space, config.seed)
    return space, operator, f


def _system_and_element(config: ExperimentConfig) -> Tuple[Operator, Element]:
    _, operator, f = resolve_system(config)
    if f is None:
        raise ValidationError("this command needs an element f")
    return operator, f


def _require(config: ExperimentConfig, *names: str) -> None:
    missing = [name for name in names if getattr(config, name) is None]
    if missing:
        raise ValidationError(f"{config.command} needs {', '.join(missing)}")


def _element_or_norm(config: ExperimentConfig):
    """An Element when a system is configured, otherwise the exact ||f||_2^2 from norm_f."""
    if config.system is not None:
        return _system_and_element(config)[1]
    if config.norm_f is None:
        raise ValidationError(f"{config.command} needs a system with f, or norm_f")
    return norm_sq_from_norm(config.norm_f)


# --- Commands ---

def _stability_search(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    _require(config, "eps")
    T, f = _system_and_element(config)
    K = growth.parse(config.K)
    witness = find_stable_n(T, f, float(as_rational(config.eps)), K, config.horizon,
                            window_cap=config.window_cap or settings.window_cap,
                            cache_limit=settings.averages_cache_limit)
    bound = met_bound(f, config.eps, K, config.mode, config.digit_budget or settings.digit_budget)
    result = {"witness": witness.to_document(), "bound": bound.to_document(config.full),
              "witness_within_bound": local_stability_bound_check(witness, bound)}
    if config.schedule:
        schedule = iterate_schedule(T, f, config.eps, K, config.schedule_cap,
                                           trace_cap=config.trace_cap or settings.trace_cap,
                                           window_cap=config.window_cap or settings.window_cap)
        result["schedule"] = schedule.to_document()
    if config.explain:
        trace = compute_trace(T, f, EXPLAIN_TRACE_INDICES, settings.delta_min)
        explain: Dict[str, Any] = {"d_functions": d_fns(f, config.eps).summary()}
        if K.family in ("identity", "affine"):
            explain["u_bounds"] = u_bound_nonexpansive(trace, T, f, K, float(as_rational(config.eps)))
        else:
            # the dichotomy scans averages up to K(n); only linear K keeps that bounded
            explain["u_bounds"] = "skipped for nonlinear K"
        result["explain"] = explain
    if not witness.found:
        raise Exhausted(result, f"no eps-stable n up to {witness.searched_up_to}")
    return result


def _mean_bound(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    _require(config, "eps")
    f = _element_or_norm(config)
    K = growth.parse(config.K)
    report = met_bound(f, config.eps, K, config.mode, config.digit_budget or settings.digit_budget)
    result = {"bound": report.to_document(config.full), "d_functions": d_fns(f, config.eps).summary()}
    if report.budget_exceeded:
        raise Exhausted(result, "digit budget exceeded")
    return result


def _pointwise_search(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    _require(config, "lambda1", "lambda2")
    T, f = _system_and_element(config)
    K = growth.parse(config.K)
    found = find_pointwise_stable_n(T, f, config.lambda1, config.lambda2, K, config.horizon,
                                    cache_limit=settings.averages_cache_limit,
                                    window_cap=config.window_cap or settings.window_cap)
    bound = pet_bound(f, config.lambda1, config.lambda2, K, config.digit_budget or settings.digit_budget)
    result = {"witness": found.to_document(), "bound": bound.to_document(config.full)}
    if config.schedule:
        result["schedule"] = pointwise_schedule(T, f, config.lambda1, config.lambda2, K, config.schedule_cap,
                                                window_cap=config.window_cap or settings.window_cap)
    if not found.found:
        raise Exhausted(result, f"no pointwise-stable n up to {found.searched_up_to}")
    return result


def _pet_bound(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    _require(config, "lambda1", "lambda2")
    f = _element_or_norm(config)
    report = pet_bound(f, config.lambda1, config.lambda2, growth.parse(config.K),
                       config.digit_budget or settings.digit_budget)
    result = {"bound": report.to_document(config.full)}
    if report.budget_exceeded:
        raise Exhausted(result, "digit budget exceeded")
    return result


def _maximal_check(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    _require(config, "n")
    T, f = _system_and_element(config)
    result = {"maximal": maximal_theorem_check(T, f, config.n).to_document()}
    if config.lambda1 is not None:
        result["maximal_set"] = maximal_set_measure(T, f, config.n, config.lambda1).to_document()
        result["chebyshev"] = chebyshev_measure(f, config.lambda1).to_document()
    return result


def _upcrossings(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    _require(config, "alpha", "beta", "N")
    T, f = _system_and_element(config)
    profile = crossing_profile(T, f, config.alpha, config.beta, config.N)
    result = {"profile": profile.to_document(),
              "bishop": bishop_check(T, f, config.alpha, config.beta, config.N).to_document()}
    if config.k is not None:
        result["ivanov"] = ivanov_check(T, f, config.alpha, config.beta, config.k, config.N).to_document()
    if config.eps is not None:
        result["fluctuations"] = count_fluctuations(T, f, float(as_rational(config.eps)), config.N).to_document()
    if config.lambda1 is not None and config.lambda2 is not None:
        K = growth.parse(config.K)
        e = bishop_pet_bound(f, config.lambda1, config.lambda2, K).e
        result["windowed"] = windowed_crossings(T, f, config.lambda1, K, e, config.N)
    if config.output is not None and config.output.format == "csv":
        profile.to_csv(_output_path(config, settings))
    return result


def _compare_bounds(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    T, f = _system_and_element(config)
    C = config.C or settings.kachurovskii_constant
    rows = compare_bounds(f, growth.parse(config.K), eps=config.eps, lambda1=config.lambda1,
                          lambda2=config.lambda2, C=C, budget=config.digit_budget or settings.digit_budget)
    result = {"rows": rows}
    if config.eps is not None:
        report = kachurovskii_met_bound(f, config.eps, growth.parse(config.K), C,
                                        config.digit_budget or settings.digit_budget)
        result["kachurovskii"] = report.to_document(config.full)
    if config.lambda1 is not None and config.lambda2 is not None:
        result["bishop"] = bishop_pet_bound(f, config.lambda1, config.lambda2, growth.parse(config.K),
                                            config.digit_budget or settings.digit_budget).to_document(config.full)
    return result


def _rate_from_norm(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    _require(config, "norm_fstar")
    T, f = _system_and_element(config)
    if config.norm_fstar == "ergodic":
        norm_fstar = limit_norm_ergodic(f, T, check=True)
    else:
        norm_fstar = as_rational(config.norm_fstar)
    result: Dict[str, Any] = {"norm_fstar": float(norm_fstar)}
    trace_cap = config.trace_cap or settings.trace_cap
    probe = config.probe_horizon or settings.probe_horizon
    if config.eps is None and config.lambda1 is None:
        raise ValidationError("rate-from-norm needs eps, or lambda1 and lambda2")
    if config.eps is not None:
        result["certificate"] = rate_from_limit_norm(T, f, norm_fstar, as_rational(config.eps), trace_cap,
                                                     probe, settings.delta_min).to_document()
    if config.lambda1 is not None:
        _require(config, "lambda2")
        result["pointwise_certificate"] = pointwise_rate_from_limit_norm(
            T, f, norm_fstar, config.lambda1, config.lambda2, trace_cap, probe, settings.delta_min).to_document()
    return result


def _specker(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    _require(config, "N")
    table = HaltingTable(config.table or {})
    system = build_specker_system(table, config.N)
    norm_sq = specker_norm(system)
    direct = specker_norm_direct(system)
    r = r_value(table, config.N)
    bits = recover_halting_bits(exact_oracle(r), table, config.N)
    dyadic_bits = recover_halting_bits(dyadic_oracle(r, max_bits=config.N + 4), table, config.N)
    return {"norm_sq": norm_sq, "norm_sq_direct": direct, "formula_matches_direct": norm_sq == direct,
            "r": r, "half_minus_norm_sq_is_r": Fraction(1, 2) - norm_sq == r,
            "bits": bits, "bits_from_dyadic_oracle": dyadic_bits, "atoms": system.space.atom_count}


def _asymptotic_table(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    regimes = config.regimes or ["n+1", "n+2", "n+4", "n+8", "n+16", "2n", "n^2", "2^n"]
    rows = asymptotic_table(regimes, config.rho_range or [1, 2, 3],
                            "isometry" if config.mode == "isometry" else "nonexpansive",
                            config.digit_budget or settings.digit_budget)
    if config.output is not None and config.output.format == "csv":
        _write_rows_csv(rows, _output_path(config, settings))
    return {"rows": rows, "linear_in_c": linear_in_c(rows)}


def _trace(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    T, f = _system_and_element(config)
    imax = config.imax if config.imax is not None else min(64, config.trace_cap or settings.trace_cap)
    trace = compute_trace(T, f, imax, settings.delta_min)
    if config.output is not None and config.output.format == "csv":
        trace_to_csv(trace, _output_path(config, settings))
    return {"rows": trace_rows(trace), "saturated_at": trace.saturated_at, "rank": trace.rank(trace.last_computed)}


HANDLERS: Dict[str, Callable[[ExperimentConfig, Settings], Dict[str, Any]]] = {
    "stability-search": _stability_search,
    "mean-bound": _mean_bound,
    "pointwise-search": _pointwise_search,
    "pet-bound": _pet_bound,
    "maximal-check": _maximal_check,
    "upcrossings": _upcrossings,
    "compare-bounds": _compare_bounds,
    "rate-from-norm": _rate_from_norm,
    "specker": _specker,
    "asymptotic-table": _asymptotic_table,
    "trace": _trace,
}
assert set(HANDLERS) == set(COMMANDS)


# --- Output files ---

def _output_path(config: ExperimentConfig, settings: Settings) -> str:
    path = config.output.path if config.output and config.output.path else None
    if path is None:
        output_dir = settings.output_dir
        if not os.path.isabs(output_dir):
            output_dir = os.path.join(PROJECT_ROOT, output_dir)
        extension = config.output.format if config.output else "json"
        path = os.path.join(output_dir, f"{config.command}_{config.seed}.{extension}")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return path


def _write_rows_csv(rows, path: str) -> None:
    columns = sorted({key for row in rows for key in row})
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_report(result: JobResult, config: ExperimentConfig, settings: Optional[Settings] = None) -> Optional[str]:
    """Write the JSON report when the config names a JSON output; returns the path written."""
    if config.output is None or config.output.format != "json":
        return None
    path = _output_path(config, settings or get_settings())
    with open(path, "w") as handle:
        handle.write(result.to_json())
    logger.info(f"Saved {result.command} report to {path}")
    return path


# --- Dispatch ---

def run_job(config: ExperimentConfig, settings: Optional[Settings] = None) -> JobResult:
    """
    Run one experiment and wrap the outcome in the report / exit code contract.

    Returns:
        JobResult with exit code 0 (success), 2 (validation error), 3 (budget or
        cap exhausted, partial result kept) or 1 (unexpected failure)
    """
    settings = settings or get_settings()
    command = config.command
    report: Dict[str, Any] = {"command": command, "config": config.parameters()}
    start_time = time.time()
    try:
        if command not in HANDLERS:
            raise ValidationError(f"unknown command {command!r}")
        report["result"] = HANDLERS[command](config, settings)
        status, code = "success", EXIT_OK
    except Exhausted as e:
        report["result"] = e.result
        report["reason"] = e.reason
        status, code = "partial", EXIT_EXHAUSTED
        logger.warning(f"{command}: {e.reason}")
    except (BudgetExceededError, CapExceededError) as e:
        report["result"] = {"partial": getattr(e, "partial", None) or {}}
        report["reason"] = str(e)
        status, code = "partial", EXIT_EXHAUSTED
        logger.warning(f"{command}: {e}")
    except (ValidationError, pydantic.ValidationError) as e:
        report["error"] = str(e)
        status, code = "error", EXIT_VALIDATION
        logger.error(f"{command}: invalid input: {e}")
    except WorkbenchError as e:
        report["error"] = str(e)
        status, code = "error", EXIT_FAILURE
        logger.error(f"{command}: {e}", exc_info=True)
    except Exception as e:
        report["error"] = f"{type(e).__name__}: {e}"
        status, code = "error", EXIT_FAILURE
        logger.error(f"Unexpected error in {command}: {e}", exc_info=True)
    report["status"] = status
    logger.info(f"{command} finished with status {status} in {time.time() - start_time:.2f}s")
    return JobResult(command or "", status, code, report)


def verify_report(document: Dict[str, Any], settings: Optional[Settings] = None) -> Tuple[bool, JobResult]:
    """Re-run the config embedded in a report and compare the results canonically."""
    try:
        config = ExperimentConfig(**document["config"])
    except KeyError as e:
        raise ValidationError("report has no embedded config") from e
    rerun = run_job(config, settings)
    expected = canonical_json({"result": document.get("result"), "status": document.get("status")})
    actual = canonical_json({"result": rerun.report.get("result"), "status": rerun.report.get("status")})
    matches = expected == actual
    if not matches:
        logger.error(f"verification of {config.command} failed: recomputed result differs")
    return matches, rerun
