# src/api/batch.py

import concurrent.futures
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

from src.api.jobs import EXIT_FAILURE, JobResult, run_job
from src.api.schemas import ExperimentConfig
from src.core.settings import Settings, get_settings

# Configure logging
logger = logging.getLogger("ergodic_workbench_api.batch")


def run_batch(configs: Sequence[ExperimentConfig], max_workers: Optional[int] = None,
              settings: Optional[Settings] = None) -> List[JobResult]:
    """
    Run independent experiment configs on a thread pool.

    Each job builds its own system and caches, so nothing is shared between
    workers. Results come back in submission order.

    Args:
        configs: Validated experiment configs
        max_workers: Pool size (defaults to the max_workers setting)
        settings: Workbench settings shared read-only by all jobs

    Returns:
        One JobResult per config, in the order given
    """
    settings = settings or get_settings()
    workers = max(1, min(max_workers or settings.max_workers, len(configs) or 1))
    if workers == 1 or len(configs) <= 1:
        return [run_job(config, settings) for config in configs]

    logger.info(f"Running {len(configs)} jobs on {workers} workers")
    results: List[Optional[JobResult]] = [None] * len(configs)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(run_job, config, settings): index for index, config in enumerate(configs)}
        for future in concurrent.futures.as_completed(futures):
            index = futures[future]
            command = configs[index].command or "unknown"
            try:
                results[index] = future.result()
            except Exception as e:
                # run_job reports its own failures; this only catches pool-level errors
                logger.error(f"Worker for job {index} ({command}) failed: {e}", exc_info=True)
                results[index] = JobResult(command, "error", EXIT_FAILURE,
                                           {"command": command, "status": "error", "error": str(e)})
            else:
                logger.debug(f"Job {index} ({command}) finished with status {results[index].status}")

    failed = sum(1 for r in results if r.exit_code != 0)
    if failed:
        logger.warning(f"{failed} of {len(configs)} jobs did not succeed")
    return results


def batch_exit_code(results: Sequence[JobResult]) -> int:
    """The most severe exit code of a batch: 1 over 2 over 3 over 0."""
    codes = {r.exit_code for r in results}
    for code in (1, 2, 3):
        if code in codes:
            return code
    return 0
