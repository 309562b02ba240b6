"""
Run ledger - Test Suite.

Proves:
 Group 1 - Lifecycle
   1.  start_run / record_row / finish_run round through get_run
   2.  Failures are stored with their exception type
   3.  Unknown run ids return None
"""
import asyncio

import numpy as np


def test_run_lifecycle(ledger):
    async def scenario():
        run_id = await ledger.start_run("decay", "hash", 4)
        await ledger.record_row(run_id, 0, {"n": np.int64(10), "sigma": np.float64(0.5)})
        await ledger.record_row(run_id, 1, {"values": np.arange(2.0)})
        await ledger.finish_run(run_id, "done")
        return await ledger.get_run(run_id)

    run = asyncio.run(scenario())
    assert run["experiment"] == "decay" and run["seed"] == 4
    assert run["status"] == "done" and run["finished_at"]
    assert run["rows"] == [{"n": 10, "sigma": 0.5}, {"values": [0.0, 1.0]}]
    assert run["failures"] == []


def test_failures_recorded(ledger):
    async def scenario():
        run_id = await ledger.start_run("tink_bench", "hash", 0)
        await ledger.record_failure(run_id, "n=500", RuntimeError("diverged"))
        await ledger.finish_run(run_id, "partial")
        return await ledger.get_run(run_id)

    run = asyncio.run(scenario())
    assert run["status"] == "partial"
    assert run["failures"] == [{"row_key": "n=500", "error_type": "RuntimeError", "message": "diverged"}]


def test_unknown_run(ledger):
    assert asyncio.run(ledger.get_run("missing")) is None
