from __future__ import annotations

import asyncio
import logging
from collections.abc import Callable

from ssi_core.experiment import run_trial
from ssi_core.models import ExperimentConfig, TrialRecord


logger = logging.getLogger("ssikit")


class TrialRunner:
    """Runs independent trials on a bounded pool of worker threads."""

    def __init__(
        self,
        config: ExperimentConfig,
        threads: int = 1,
        trial_fn: Callable[[ExperimentConfig, int, int], list[TrialRecord]] = run_trial,
    ):
        self.config = config
        self.threads = max(1, int(threads))
        self.trial_fn = trial_fn

    async def run_trial(self, trial: int) -> tuple[int, list[TrialRecord]]:
        records = await asyncio.to_thread(self.trial_fn, self.config, trial, self.config.seed)
        return trial, records

    async def run_all(self) -> list[TrialRecord]:
        sem = asyncio.Semaphore(self.threads)
        total = self.config.trials
        done = 0

        async def _bounded(trial: int) -> tuple[int, list[TrialRecord]]:
            nonlocal done
            async with sem:
                out = await self.run_trial(trial)
            done += 1
            if done == total or done % 10 == 0:
                logger.info("Trials: %s/%s done", done, total)
            return out

        results = await asyncio.gather(*(_bounded(i) for i in range(total)))
        # порядок строк не зависит от порядка завершения
        results.sort(key=lambda r: r[0])
        return [rec for _, recs in results for rec in recs]

    def run(self) -> list[TrialRecord]:
        return asyncio.run(self.run_all())
