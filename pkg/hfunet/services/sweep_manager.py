"""Concurrent sweep manager running experiment cells in worker processes."""

import asyncio
import multiprocessing
from collections.abc import Callable
from concurrent.futures import Executor, ProcessPoolExecutor
from datetime import UTC, datetime
from typing import Any

from hfunet.logging_config import get_logger
from hfunet.models.experiment import CellResult, ExperimentCell, RunStatus

logger = get_logger(__name__)

CellWorker = Callable[..., CellResult]


class SweepCellInstance:
    """Individual cell tracked by the sweep manager."""

    def __init__(self, cell: ExperimentCell) -> None:
        """Initialize a pending cell.

        Args:
            cell: Topology and training config of this cell
        """
        self.cell = cell
        self.status = RunStatus.PENDING
        self.started_at: datetime | None = None
        self.stopped_at: datetime | None = None
        self.error_message: str | None = None
        self.result: CellResult | None = None

    async def run(
        self, worker: CellWorker, args: tuple[Any, ...], executor: Executor | None
    ) -> CellResult:
        """Run the worker for this cell and record its outcome.

        A worker exception becomes a failed result; it never propagates.
        """
        self.status = RunStatus.RUNNING
        self.started_at = datetime.now(UTC)
        cell_logger = logger.bind(cell_id=self.cell.cell_id, topology=self.cell.topology.label())
        cell_logger.info("Cell started")
        try:
            if executor is None:
                result = worker(self.cell, *args)
            else:
                loop = asyncio.get_running_loop()
                result = await loop.run_in_executor(executor, worker, self.cell, *args)
        except Exception as e:
            cell_logger.error("Cell crashed", error=str(e), exc_info=True)
            result = CellResult(
                cell_id=self.cell.cell_id,
                topology=self.cell.topology,
                seed=self.cell.seed,
                status=RunStatus.FAILED,
                error=str(e),
                error_code=getattr(e, "code", "runtime_error"),
            )
        self.result = result
        self.status = result.status
        self.error_message = result.error
        self.stopped_at = datetime.now(UTC)
        cell_logger.info("Cell finished", status=result.status.value)
        return result


class SweepManager:
    """Manager for running the cells of a sweep concurrently."""

    def __init__(self, max_workers: int = 1) -> None:
        """Initialize the manager.

        Args:
            max_workers: Worker processes; 0 runs cells one after another in this process
        """
        if max_workers < 0:
            msg = f"max_workers must be non-negative, got {max_workers}"
            raise ValueError(msg)
        self.max_workers = max_workers
        self._cells: dict[str, SweepCellInstance] = {}
        self._lock = asyncio.Lock()

    async def run_cells(
        self, cells: list[ExperimentCell], worker: CellWorker, *args: Any
    ) -> list[CellResult]:
        """Run every cell and return results in cell order.

        Args:
            cells: Cells to run; ids must be unique
            worker: Picklable top-level function ``worker(cell, *args) -> CellResult``
            *args: Extra picklable arguments for the worker

        Raises:
            RuntimeError: If a cell id is already running
        """
        async with self._lock:
            instances = []
            for cell in cells:
                if (
                    cell.cell_id in self._cells
                    and self.get_cell_status(cell.cell_id) == RunStatus.RUNNING
                ):
                    msg = f"Cell {cell.cell_id} is already running"
                    raise RuntimeError(msg)
                instance = SweepCellInstance(cell)
                self._cells[cell.cell_id] = instance
                instances.append(instance)

        logger.info("Sweep started", cells=len(cells), max_workers=self.max_workers)
        if self.max_workers == 0:
            results = [await instance.run(worker, args, None) for instance in instances]
        else:
            with ProcessPoolExecutor(
                max_workers=self.max_workers, mp_context=multiprocessing.get_context("spawn")
            ) as executor:
                results = list(
                    await asyncio.gather(
                        *(instance.run(worker, args, executor) for instance in instances)
                    )
                )
        logger.info("Sweep finished", cells=len(results), failed=self.get_failed_cell_ids())
        return results

    def get_cell_status(self, cell_id: str) -> RunStatus:
        """Get the status of one cell.

        Raises:
            KeyError: If the cell is unknown
        """
        if cell_id not in self._cells:
            msg = f"Cell {cell_id} not found"
            raise KeyError(msg)
        return self._cells[cell_id].status

    def get_failed_cell_ids(self) -> list[str]:
        """Ids of failed cells."""
        return [
            cell_id
            for cell_id, instance in self._cells.items()
            if instance.status == RunStatus.FAILED
        ]
