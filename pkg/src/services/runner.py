"""
Experiment runner.
Executes independent experiment cells (per-output fits, learning-curve points,
velocity brackets) on worker threads, bounded by PUSH_VHGP_THREADS.
"""

import asyncio
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence

from src.config.logging import LoggerMixin, log_experiment_cell
from src.config.settings import settings


@dataclass
class Cell:
    """One unit of work: a name for the logs and a blocking callable."""
    name: str
    func: Callable[..., Any]
    args: tuple = ()
    kwargs: Dict[str, Any] = field(default_factory=dict)


class ExperimentRunner(LoggerMixin):
    """Runs cells concurrently; results come back in submission order."""

    def __init__(self, threads: Optional[int] = None):
        self.threads = threads or settings.threads
        self.is_running = False
        self.last_run: Optional[Dict[str, Any]] = None

    async def _run_cell(self, command: str, cell: Cell, semaphore: asyncio.Semaphore) -> Any:
        async with semaphore:
            started = time.time()
            try:
                result = await asyncio.to_thread(cell.func, *cell.args, **cell.kwargs)
            except Exception as e:
                log_experiment_cell(
                    command=command,
                    cell=cell.name,
                    elapsed_ms=int((time.time() - started) * 1000),
                    error=str(e)
                )
                raise
            log_experiment_cell(command=command, cell=cell.name, elapsed_ms=int((time.time() - started) * 1000))
            return result

    async def run_cells(self, command: str, cells: Sequence[Cell]) -> List[Any]:
        """
        Run all cells and return their results in the order given.
        When cells fail, the first failure in submission order is re-raised
        after every cell has finished.
        """
        run_start = datetime.now(timezone.utc)
        semaphore = asyncio.Semaphore(self.threads)
        self.is_running = True
        try:
            results = await asyncio.gather(
                *(self._run_cell(command, cell, semaphore) for cell in cells),
                return_exceptions=True
            )
        finally:
            self.is_running = False

        failures = [r for r in results if isinstance(r, BaseException)]
        self.last_run = {
            "command": command,
            "started_at": run_start.isoformat(),
            "cells": len(cells),
            "failures": len(failures),
        }
        self.logger.info("Experiment run completed", **self.last_run, threads=self.threads)
        if failures:
            raise failures[0]
        return list(results)

    def run(self, command: str, cells: Sequence[Cell]) -> List[Any]:
        """Blocking entry point for callers outside an event loop."""
        return asyncio.run(self.run_cells(command, cells))
