"""Structured JSON-lines event log for the services."""

from __future__ import annotations

import json
import sys
from pathlib import Path


class EventLog:
    def __init__(self, target: str | Path | None = None):
        self._fh = None
        self._own = False
        if target is not None:
            self._fh = open(target, "a")
            self._own = True
        self.records: list[dict] = []

    def log(self, ts_ms: float, event: str, **fields) -> None:
        rec = {"ts_ms": round(float(ts_ms), 3), "event": event, **fields}
        self.records.append(rec)
        line = json.dumps(rec, separators=(",", ":"))
        if self._fh is not None:
            self._fh.write(line + "\n")
            self._fh.flush()

    def to_stderr(self) -> "EventLog":
        self._fh = sys.stderr
        self._own = False
        return self

    def close(self) -> None:
        if self._own and self._fh is not None:
            self._fh.close()
            self._fh = None

    def events(self, name: str) -> list[dict]:
        return [r for r in self.records if r["event"] == name]
