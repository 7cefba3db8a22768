"""SQLite run log for training, evaluation, benchmarks and API requests."""

from __future__ import annotations

import os
import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

load_dotenv()

_DB_PATH = Path(os.getenv("EVPC_LOG_DB", "data/runs.db"))

_SCHEMA = (
    """
    CREATE TABLE IF NOT EXISTS runs(
      id INTEGER PRIMARY KEY AUTOINCREMENT,
      ts TEXT,
      command TEXT,
      config TEXT,
      seed INTEGER,
      status TEXT,
      final_loss REAL,
      mpjpe2d REAL,
      mpjpe3d REAL,
      latency_mean_us REAL,
      duration_s REAL
    );
    """,
    """
    CREATE TABLE IF NOT EXISTS epochs(
      id INTEGER PRIMARY KEY AUTOINCREMENT,
      run_id INTEGER,
      epoch INTEGER,
      step INTEGER,
      loss REAL,
      mpjpe2d REAL,
      lr REAL
    );
    """,
    """
    CREATE TABLE IF NOT EXISTS bench(
      id INTEGER PRIMARY KEY AUTOINCREMENT,
      run_id INTEGER,
      stage TEXT,
      p50_us REAL,
      p90_us REAL,
      p99_us REAL,
      mean_us REAL,
      count INTEGER
    );
    """,
    """
    CREATE TABLE IF NOT EXISTS requests(
      id INTEGER PRIMARY KEY AUTOINCREMENT,
      ts TEXT,
      camera_id INTEGER,
      n_events INTEGER,
      n_points INTEGER,
      latency_ms REAL,
      model TEXT
    );
    """,
    "CREATE INDEX IF NOT EXISTS idx_runs_ts ON runs(ts);",
    "CREATE INDEX IF NOT EXISTS idx_epochs_run ON epochs(run_id);",
)


def now_iso() -> str:
    return datetime.utcnow().isoformat(timespec="seconds") + "Z"


def init_db(db_path: str | os.PathLike | None = None) -> Path:
    """Create the run database and schema if missing."""

    global _DB_PATH

    if db_path is not None:
        _DB_PATH = Path(db_path)
    _DB_PATH.parent.mkdir(parents=True, exist_ok=True)

    with sqlite3.connect(_DB_PATH) as connection:
        cursor = connection.cursor()
        for statement in _SCHEMA:
            cursor.execute(statement)
        connection.commit()
    return _DB_PATH


def _insert(table: str, **kwargs: Any) -> int | None:
    columns = list(kwargs.keys())
    if not columns:
        return None

    placeholders = ", ".join(["?"] * len(columns))
    column_sql = ", ".join(columns)
    values = [kwargs[column] for column in columns]

    with sqlite3.connect(_DB_PATH) as connection:
        cursor = connection.cursor()
        cursor.execute(
            f"INSERT INTO {table} ({column_sql}) VALUES ({placeholders})",
            values,
        )
        connection.commit()
        return cursor.lastrowid


def log_run(**kwargs: Any) -> int | None:
    """Insert one CLI run and return its row id."""

    kwargs.setdefault("ts", now_iso())
    return _insert("runs", **kwargs)


def update_run(run_id: int, **kwargs: Any) -> None:
    if not kwargs:
        return
    assignments = ", ".join(f"{column} = ?" for column in kwargs)
    with sqlite3.connect(_DB_PATH) as connection:
        connection.execute(
            f"UPDATE runs SET {assignments} WHERE id = ?",
            [*kwargs.values(), run_id],
        )
        connection.commit()


def log_epoch(**kwargs: Any) -> None:
    _insert("epochs", **kwargs)


def log_bench(**kwargs: Any) -> None:
    _insert("bench", **kwargs)


def log_request(**kwargs: Any) -> None:
    kwargs.setdefault("ts", now_iso())
    _insert("requests", **kwargs)
