"""Tests for the concurrent sweep manager."""

import pytest

from hfunet.models.experiment import CellResult, ExperimentCell, RunStatus
from hfunet.models.topology import Family, TopologyConfig
from hfunet.models.training import TrainConfig
from hfunet.services.sweep_manager import SweepManager


def _cells(n: int) -> list[ExperimentCell]:
    return [
        ExperimentCell(
            index=i,
            topology=TopologyConfig(family=Family.HF, tcl_count=1, alpha=0.1 * (i + 1)),
            train=TrainConfig(seed=i),
        )
        for i in range(n)
    ]


def echo_worker(cell: ExperimentCell, tag: str) -> CellResult:
    """Complete every cell, failing odd seeds."""
    if cell.seed % 2:
        return CellResult(
            cell_id=cell.cell_id,
            topology=cell.topology,
            seed=cell.seed,
            status=RunStatus.FAILED,
            error=f"{tag}: odd seed",
        )
    return CellResult(
        cell_id=cell.cell_id, topology=cell.topology, seed=cell.seed, status=RunStatus.COMPLETED
    )


def crashing_worker(cell: ExperimentCell) -> CellResult:
    """Raise for every cell."""
    msg = f"boom {cell.index}"
    raise RuntimeError(msg)


class TestSweepManager:
    """Test running cells."""

    async def test_in_process_results_in_order(self):
        """Test in-process execution keeps cell order and statuses."""
        manager = SweepManager(max_workers=0)
        cells = _cells(4)

        results = await manager.run_cells(cells, echo_worker, "t")

        assert [r.cell_id for r in results] == [c.cell_id for c in cells]
        assert [r.status for r in results] == [
            RunStatus.COMPLETED,
            RunStatus.FAILED,
            RunStatus.COMPLETED,
            RunStatus.FAILED,
        ]
        assert results[1].error == "t: odd seed"
        assert manager.get_failed_cell_ids() == [cells[1].cell_id, cells[3].cell_id]
        assert manager.get_cell_status(cells[0].cell_id) == RunStatus.COMPLETED

    async def test_crash_becomes_failed_result(self):
        """Test a raising worker is recorded and the sweep continues."""
        manager = SweepManager(max_workers=0)
        cells = _cells(2)

        results = await manager.run_cells(cells, crashing_worker)

        assert all(r.status == RunStatus.FAILED for r in results)
        assert results[1].error == "boom 1"
        assert manager.get_cell_status(cells[0].cell_id) == RunStatus.FAILED

    async def test_process_pool(self):
        """Test cells run in worker processes with the same results."""
        manager = SweepManager(max_workers=2)
        results = await manager.run_cells(_cells(3), echo_worker, "p")

        assert [r.status for r in results] == [
            RunStatus.COMPLETED,
            RunStatus.FAILED,
            RunStatus.COMPLETED,
        ]
        assert manager.get_failed_cell_ids() == [results[1].cell_id]

    def test_unknown_cell(self):
        """Test status of an unknown cell raises KeyError."""
        with pytest.raises(KeyError, match="not found"):
            SweepManager().get_cell_status("nope")

    def test_negative_workers(self):
        """Test a negative worker count is rejected."""
        with pytest.raises(ValueError, match="non-negative"):
            SweepManager(max_workers=-1)
