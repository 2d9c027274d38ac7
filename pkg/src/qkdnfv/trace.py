"""Append-only event trace: one line per message or session event."""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

NO_JOB = "-"


@dataclass(frozen=True)
class TraceRecord:
    t: float
    direction: str
    kind: str
    size: int
    job: str = NO_JOB

    def line(self) -> str:
        return f"{self.t:.6f}\t{self.direction}\t{self.kind}\t{self.size}\t{self.job}"

    @classmethod
    def parse(cls, line: str) -> "TraceRecord":
        t, direction, kind, size, job = line.rstrip("\n").split("\t")
        return cls(float(t), direction, kind, int(size), job)


class Trace:
    def __init__(self):
        self.records: list[TraceRecord] = []
        self._lock = threading.Lock()

    def record(self, t: float, direction: str, kind: str, size: int = 0,
               job: Optional[str] = None) -> TraceRecord:
        rec = TraceRecord(t, direction, kind, int(size), job or NO_JOB)
        with self._lock:
            self.records.append(rec)
        return rec

    def __iter__(self):
        return iter(list(self.records))

    def __len__(self):
        return len(self.records)

    def for_job(self, job: str) -> list[TraceRecord]:
        return [r for r in self.records if r.job == job]

    def kinds(self, job: Optional[str] = None, only: Optional[Iterable[str]] = None) -> list[str]:
        keep = set(only) if only is not None else None
        recs = self.records if job is None else self.for_job(job)
        return [r.kind for r in recs if keep is None or r.kind in keep]

    def lines(self) -> list[str]:
        return [r.line() for r in self.records]

    def dump(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dump())
        return path
