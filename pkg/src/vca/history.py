"""Append-only JSONL history of check sessions.

One file per store (``<store-dir>/history.jsonl``), one session per line.
Lines are only ever appended; vehicle filtering happens at load time.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Union

from .report import report_render
from .rules import Diagnosis, ExternalSnapshot, InternalSnapshot
from .vehicle import Scope

HISTORY_FILE = "history.jsonl"
PROFILES_FILE = "profiles.jsonl"

Snapshot = Union[InternalSnapshot, ExternalSnapshot]


class HistoryError(Exception):
    pass


class DuplicateSession(HistoryError):
    pass


class StorageFailure(HistoryError):
    pass


class CorruptRecord(HistoryError):
    def __init__(self, line: int, detail: str = "") -> None:
        super().__init__(f"corrupt record at line {line}" + (f": {detail}" if detail else ""))
        self.line = line


@dataclass
class CheckSession:
    session_id: str
    vehicle_id: str
    timestamp: int
    scope: Scope
    snapshots: list[Snapshot] = field(default_factory=list)
    diagnoses: list[Diagnosis] = field(default_factory=list)
    report_text: str = ""
    watcher_events: list[tuple[int, str]] = field(default_factory=list)
    incomplete: bool = False

    def to_dict(self) -> dict[str, Any]:
        snaps = []
        for s in self.snapshots:
            scope = Scope.INTERNAL_ONLY if isinstance(s, InternalSnapshot) else Scope.EXTERNAL_ONLY
            snaps.append({"scope": scope.value, "readings": s.to_dict()})
        return {
            "session_id": self.session_id,
            "vehicle_id": self.vehicle_id,
            "timestamp": self.timestamp,
            "scope": self.scope.value,
            "snapshots": snaps,
            "diagnoses": [d.to_dict() for d in self.diagnoses],
            "report_text": self.report_text,
            "watcher_events": [[seq, v] for seq, v in self.watcher_events],
            "incomplete": self.incomplete,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CheckSession:
        return cls(
            session_id=str(d["session_id"]),
            vehicle_id=str(d["vehicle_id"]),
            timestamp=int(d["timestamp"]),
            scope=Scope(d["scope"]),
            snapshots=[snapshot_from_record(s) for s in d["snapshots"]],
            diagnoses=[Diagnosis.from_dict(x) for x in d["diagnoses"]],
            report_text=str(d["report_text"]),
            watcher_events=[(int(seq), str(v)) for seq, v in d["watcher_events"]],
            incomplete=bool(d.get("incomplete", False)),
        )


def snapshot_from_record(rec: dict[str, Any]) -> Snapshot:
    if Scope(rec["scope"]) is Scope.INTERNAL_ONLY:
        return InternalSnapshot.from_dict(rec["readings"])
    return ExternalSnapshot.from_dict(rec["readings"])


class HistoryStore:
    def __init__(self, store_dir: str | os.PathLike[str]) -> None:
        self.dir = Path(store_dir)
        self.path = self.dir / HISTORY_FILE
        self._ids: set[str] | None = None

    def _known_ids(self) -> set[str]:
        if self._ids is None:
            self._ids = {s.session_id for s in self.load_all()}
        return self._ids

    def __len__(self) -> int:
        return len(self._known_ids())

    def append(self, s: CheckSession) -> None:
        ids = self._known_ids()
        if s.session_id in ids:
            raise DuplicateSession(f"session {s.session_id} already stored")
        line = json.dumps(s.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        ids.add(s.session_id)

    def load_all(self) -> list[CheckSession]:
        if not self.path.exists():
            return []
        out = []
        try:
            with self.path.open(encoding="utf-8", newline="") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        for n, line in enumerate(lines, 1):
            if not line.endswith("\n"):
                raise CorruptRecord(n, "truncated line")
            try:
                out.append(CheckSession.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptRecord(n, str(exc)) from exc
        return out

    def load(self, vehicle_id: str) -> list[CheckSession]:
        return [s for s in self.load_all() if s.vehicle_id == vehicle_id]


def append_session(store: HistoryStore, s: CheckSession) -> None:
    store.append(s)


def load_history(store: HistoryStore, vehicle_id: str) -> list[CheckSession]:
    return store.load(vehicle_id)


@dataclass(frozen=True)
class ReplayResult:
    ok: bool
    session_id: str | None = None
    index: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_replay(sessions: Iterable[CheckSession]) -> ReplayResult:
    """Re-render every stored report and compare it byte-wise with the stored text."""
    for i, s in enumerate(sessions):
        text = report_render(s.diagnoses, s.vehicle_id, s.session_id, s.incomplete).text
        if text.encode("utf-8") != s.report_text.encode("utf-8"):
            return ReplayResult(False, s.session_id, i)
    return ReplayResult(True)
