"""Run ledger on SQLite: one row per experiment run, its result rows and failures."""
import json
import os
import uuid
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import aiosqlite
import numpy as np


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class Database:
    """SQLite ledger of experiment runs."""

    def __init__(self, db_path: str = "data/runs.db"):
        """Initialize the ledger.

        Args:
            db_path: Path to the SQLite database file
        """
        self.db_path = db_path
        self._ensure_data_dir()

    def _ensure_data_dir(self):
        directory = os.path.dirname(self.db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

    async def init_db(self):
        """Create the ledger tables."""
        async with aiosqlite.connect(self.db_path) as conn:
            await conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    run_id TEXT PRIMARY KEY,
                    experiment TEXT NOT NULL,
                    config_hash TEXT NOT NULL,
                    seed INTEGER,
                    status TEXT DEFAULT 'running',
                    started_at TIMESTAMP,
                    finished_at TIMESTAMP
                )
            """)

            await conn.execute("""
                CREATE TABLE IF NOT EXISTS rows (
                    run_id TEXT,
                    row_index INTEGER,
                    payload TEXT,
                    PRIMARY KEY (run_id, row_index)
                )
            """)

            await conn.execute("""
                CREATE TABLE IF NOT EXISTS failures (
                    failure_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id TEXT,
                    row_key TEXT,
                    error_type TEXT,
                    message TEXT
                )
            """)

            await conn.commit()

    async def start_run(self, experiment: str, config_hash: str, seed: Optional[int]) -> str:
        """Open a run and return its id."""
        run_id = uuid.uuid4().hex
        await self.execute(
            "INSERT INTO runs (run_id, experiment, config_hash, seed, status, started_at) "
            "VALUES (?, ?, ?, ?, 'running', ?)",
            (run_id, experiment, config_hash, seed, _now()),
        )
        return run_id

    async def finish_run(self, run_id: str, status: str = "done"):
        await self.execute(
            "UPDATE runs SET status = ?, finished_at = ? WHERE run_id = ?",
            (status, _now(), run_id),
        )

    async def record_row(self, run_id: str, row_index: int, payload: Dict[str, Any]):
        await self.execute(
            "INSERT OR REPLACE INTO rows (run_id, row_index, payload) VALUES (?, ?, ?)",
            (run_id, row_index, json.dumps(payload, default=_json_default, sort_keys=True)),
        )

    async def record_failure(self, run_id: str, row_key: str, error: BaseException):
        await self.execute(
            "INSERT INTO failures (run_id, row_key, error_type, message) VALUES (?, ?, ?, ?)",
            (run_id, row_key, type(error).__name__, str(error)),
        )

    async def get_run(self, run_id: str) -> Optional[Dict[str, Any]]:
        """Run record with its decoded rows and failures, or None.

        Args:
            run_id: Id returned by ``start_run``
        """
        run = await self.fetchone("SELECT * FROM runs WHERE run_id = ?", (run_id,))
        if run is None:
            return None
        rows = await self.fetchall(
            "SELECT row_index, payload FROM rows WHERE run_id = ? ORDER BY row_index", (run_id,)
        )
        run["rows"] = [json.loads(row["payload"]) for row in rows]
        run["failures"] = await self.fetchall(
            "SELECT row_key, error_type, message FROM failures WHERE run_id = ? ORDER BY failure_id",
            (run_id,),
        )
        return run

    async def execute(self, query: str, parameters: tuple = ()) -> None:
        """Execute a query without returning results.

        Args:
            query: SQL query string
            parameters: Query parameters
        """
        async with aiosqlite.connect(self.db_path) as conn:
            await conn.execute(query, parameters)
            await conn.commit()

    async def fetchone(self, query: str, parameters: tuple = ()) -> Optional[Dict[str, Any]]:
        async with aiosqlite.connect(self.db_path) as conn:
            conn.row_factory = aiosqlite.Row
            async with conn.execute(query, parameters) as cursor:
                row = await cursor.fetchone()
                return dict(row) if row else None

    async def fetchall(self, query: str, parameters: tuple = ()) -> List[Dict[str, Any]]:
        async with aiosqlite.connect(self.db_path) as conn:
            conn.row_factory = aiosqlite.Row
            async with conn.execute(query, parameters) as cursor:
                rows = await cursor.fetchall()
                return [dict(row) for row in rows]


# Global ledger instance
db = Database(os.getenv("RICCATI_DB", "data/runs.db"))
