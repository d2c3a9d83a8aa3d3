"""The five cooperating agents and the user-profile store.

Agents never call each other.  Each one consumes a delivered message and
returns the :class:`~vca.bus.Outbound` messages it wants sent; the scheduler
in :mod:`vca.system` puts those on the bus.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .bus import (
    CHECK_AGENTS,
    AgentId,
    AgentStatus,
    Message,
    MessageKind,
    Outbound,
    Registry,
)
from .report import report_render
from .rules import (
    Diagnosis,
    ExternalSnapshot,
    InternalSnapshot,
    RuleConfig,
    evaluate_external_rules,
    evaluate_internal_rules,
)
from .vehicle import Scope, SensorFailure, VehicleState, read_snapshot

GREETING_TEXT = """\
Welcome to the vehicle checking agent.
  1. Register a vehicle:         vehicle-add <vehicle>
  2. Ask for a check:            check <vehicle> internal|external|full
  3. Read the report printed after each check; every check is kept in the
     vehicle's history:          history <vehicle>
  4. Store your details:         profile-set <user> name=<name> vehicles=<v1,v2>
Internal checks cover engine, battery, starter, spark plugs, fuel and alarm.
External checks cover speed, direction of travel, oil, tyres and doors.
"""


class AgentError(Exception):
    pass


class UnknownSession(AgentError):
    pass


class NothingToRecover(AgentError):
    pass


# -- user profiles -----------------------------------------------------------


@dataclass
class UserProfile:
    user_id: str
    name: str = ""
    vehicle_ids: list[str] = field(default_factory=list)
    preferences: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id,
            "name": self.name,
            "vehicle_ids": list(self.vehicle_ids),
            "preferences": dict(self.preferences),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> UserProfile:
        return cls(
            user_id=str(d["user_id"]),
            name=str(d.get("name", "")),
            vehicle_ids=[str(v) for v in d.get("vehicle_ids", [])],
            preferences={str(k): str(v) for k, v in d.get("preferences", {}).items()},
        )


class ProfileStore:
    """Upserting profile store, optionally backed by a JSONL file.

    Each upsert appends the full profile; on load the last line for a
    user_id wins.
    """

    def __init__(self, path: str | os.PathLike[str] | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.profiles: dict[str, UserProfile] = {}
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for n, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        p = UserProfile.from_dict(json.loads(line))
                    except (ValueError, KeyError, TypeError) as exc:
                        raise ValueError(f"{self.path}:{n}: corrupt profile record") from exc
                    self.profiles[p.user_id] = p

    def __len__(self) -> int:
        return len(self.profiles)

    def __contains__(self, user_id: str) -> bool:
        return user_id in self.profiles

    def get(self, user_id: str) -> UserProfile | None:
        return self.profiles.get(user_id)

    def upsert(self, p: UserProfile) -> None:
        self.profiles[p.user_id] = UserProfile.from_dict(p.to_dict())
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())


def store_profile(store: ProfileStore, p: UserProfile) -> ProfileStore:
    store.upsert(p)
    return store


# -- management --------------------------------------------------------------


@dataclass
class SessionRecord:
    session: str
    vehicle_id: str
    scope: Scope
    user_id: str
    pending: list[AgentId]
    skipped: list[AgentId] = field(default_factory=list)
    diagnoses: list[dict[str, Any]] = field(default_factory=list)
    snapshots: list[dict[str, Any]] = field(default_factory=list)
    fatal: str | None = None
    incomplete: bool = False
    closed: bool = False


def plan_for(scope: Scope) -> list[AgentId]:
    """Check agents to run for a scope, in order (internal before external)."""
    return {
        Scope.INTERNAL_ONLY: [AgentId.INTERNAL],
        Scope.EXTERNAL_ONLY: [AgentId.EXTERNAL],
        Scope.FULL: [AgentId.INTERNAL, AgentId.EXTERNAL],
    }[scope]


class ManagementAgent:
    """Routes check requests to the check agents and asks for the report."""

    def __init__(self, profiles: ProfileStore | None = None) -> None:
        self.profiles = profiles if profiles is not None else ProfileStore()
        self.sessions: dict[str, SessionRecord] = {}
        self.terminated: set[AgentId] = set()
        self.log: list[tuple[int, str]] = []

    def handle(self, msg: Message) -> list[Outbound]:
        if msg.receiver is not AgentId.MANAGEMENT:
            raise ValueError("message is not addressed to Management")
        k = msg.kind
        if k is MessageKind.CHECK_REQUEST:
            return self._on_check_request(msg)
        if k is MessageKind.DIAGNOSIS_RESULT:
            return self._on_result(msg)
        if k is MessageKind.WARNING:
            return self._on_warning(msg)
        if k is MessageKind.FATAL_ERROR:
            rec = self.sessions.get(msg.session)
            if rec is not None:
                rec.fatal = str(msg.payload.get("reason", "fatal error"))
            self.log.append((msg.seq, f"fatal error from {msg.sender.value}"))
            return []
        if k is MessageKind.PROFILE_STORE:
            store_profile(self.profiles, UserProfile.from_dict(msg.payload["profile"]))
            return []
        self.log.append((msg.seq, f"ignored {k.value}"))
        return []

    def _on_check_request(self, msg: Message) -> list[Outbound]:
        p = msg.payload
        scope = Scope(p["scope"])
        user_id = str(p.get("user_id", "user"))
        plan = plan_for(scope)
        rec = SessionRecord(
            msg.session,
            str(p["vehicle_id"]),
            scope,
            user_id,
            pending=[a for a in plan if a not in self.terminated],
            skipped=[a for a in plan if a in self.terminated],
        )
        self.sessions[msg.session] = rec
        out = self._greet(rec)
        return out + self._advance(rec)

    def _greet(self, rec: SessionRecord) -> list[Outbound]:
        profile = self.profiles.get(rec.user_id)
        if profile is not None and profile.preferences.get("greeted") == "yes":
            return []
        if profile is None:
            profile = UserProfile(rec.user_id, rec.user_id, [rec.vehicle_id])
        profile.preferences["greeted"] = "yes"
        store_profile(self.profiles, profile)
        return [
            Outbound(rec.session, AgentId.MANAGEMENT, AgentId.USER, MessageKind.GREETING,
                     {"user_id": rec.user_id, "text": GREETING_TEXT})
        ]

    def _advance(self, rec: SessionRecord) -> list[Outbound]:
        if rec.pending:
            target = rec.pending.pop(0)
            return [
                Outbound(rec.session, AgentId.MANAGEMENT, target, MessageKind.DISPATCH,
                         {"vehicle_id": rec.vehicle_id})
            ]
        return self._request_report(rec, incomplete=bool(rec.skipped))

    def _request_report(self, rec: SessionRecord, incomplete: bool) -> list[Outbound]:
        rec.closed = True
        rec.incomplete = incomplete
        payload: dict[str, Any] = {"vehicle_id": rec.vehicle_id, "diagnoses": list(rec.diagnoses)}
        if incomplete:
            payload["incomplete"] = True
        return [Outbound(rec.session, AgentId.MANAGEMENT, AgentId.REPORT,
                         MessageKind.REPORT_REQUEST, payload)]

    def _open(self, session: str) -> SessionRecord:
        rec = self.sessions.get(session)
        if rec is None or rec.closed:
            raise UnknownSession(f"no open session {session!r}")
        return rec

    def _on_result(self, msg: Message) -> list[Outbound]:
        rec = self._open(msg.session)
        rec.diagnoses.extend(msg.payload.get("diagnoses", []))
        if "snapshot" in msg.payload:
            rec.snapshots.append(msg.payload["snapshot"])
        return self._advance(rec)

    def _on_warning(self, msg: Message) -> list[Outbound]:
        reason = msg.payload.get("reason")
        self.log.append((msg.seq, f"warning {reason}"))
        if reason != "FatalRecovery":
            return []
        if msg.payload.get("terminated"):
            self.terminated.add(AgentId(msg.payload["terminated"]))
        rec = self.sessions.get(msg.session)
        if rec is None or rec.closed:
            return []
        rec.skipped.extend(rec.pending)
        rec.pending.clear()
        return self._request_report(rec, incomplete=True)


def management_handle(state: ManagementAgent, msg: Message) -> tuple[ManagementAgent, list[Outbound]]:
    out = state.handle(msg)
    return state, out


# -- check agents ------------------------------------------------------------


def _snapshot_record(scope: Scope, snap: InternalSnapshot | ExternalSnapshot) -> dict[str, Any]:
    return {"scope": scope.value, "readings": snap.to_dict()}


def _check(msg: Message, vehicle: VehicleState, agent: AgentId, cfg: RuleConfig | None) -> Outbound:
    scope = Scope.INTERNAL_ONLY if agent is AgentId.INTERNAL else Scope.EXTERNAL_ONLY
    try:
        snap = read_snapshot(vehicle, scope)
    except SensorFailure as exc:
        return Outbound(msg.session, agent, AgentId.MANAGEMENT, MessageKind.FATAL_ERROR,
                        {"vehicle_id": vehicle.vehicle_id, "reason": str(exc)})
    if agent is AgentId.INTERNAL:
        diagnoses = evaluate_internal_rules(snap)
    else:
        diagnoses = evaluate_external_rules(snap, cfg)
    return Outbound(
        msg.session, agent, AgentId.MANAGEMENT, MessageKind.DIAGNOSIS_RESULT,
        {
            "vehicle_id": vehicle.vehicle_id,
            "snapshot": _snapshot_record(scope, snap),
            "diagnoses": [d.to_dict() for d in diagnoses],
        },
    )


def internal_handle(msg: Message, vehicle: VehicleState) -> Outbound:
    if msg.kind is not MessageKind.DISPATCH or msg.receiver is not AgentId.INTERNAL:
        raise ValueError("internal agent only handles Dispatch addressed to it")
    return _check(msg, vehicle, AgentId.INTERNAL, None)


def external_handle(msg: Message, vehicle: VehicleState, cfg: RuleConfig | None = None) -> Outbound:
    if msg.kind is not MessageKind.DISPATCH or msg.receiver is not AgentId.EXTERNAL:
        raise ValueError("external agent only handles Dispatch addressed to it")
    return _check(msg, vehicle, AgentId.EXTERNAL, cfg or RuleConfig())


class CheckAgent:
    def __init__(self, agent: AgentId, vehicles: Mapping[str, VehicleState],
                 cfg: RuleConfig | None = None) -> None:
        assert agent in CHECK_AGENTS
        self.agent = agent
        self.vehicles = vehicles
        self.cfg = cfg or RuleConfig()

    def handle(self, msg: Message) -> list[Outbound]:
        if msg.kind is not MessageKind.DISPATCH:
            return []
        vehicle_id = msg.payload["vehicle_id"]
        vehicle = self.vehicles.get(vehicle_id)
        if vehicle is None:
            return [Outbound(msg.session, self.agent, AgentId.MANAGEMENT, MessageKind.FATAL_ERROR,
                             {"vehicle_id": vehicle_id, "reason": f"no such vehicle {vehicle_id}"})]
        if self.agent is AgentId.INTERNAL:
            return [internal_handle(msg, vehicle)]
        return [external_handle(msg, vehicle, self.cfg)]


# -- report ------------------------------------------------------------------


class ReportAgent:
    def handle(self, msg: Message) -> list[Outbound]:
        if msg.kind is not MessageKind.REPORT_REQUEST:
            return []
        p = msg.payload
        incomplete = bool(p.get("incomplete", False))
        report = report_render(
            [Diagnosis.from_dict(d) for d in p.get("diagnoses", [])],
            p["vehicle_id"],
            msg.session,
            incomplete,
        )
        return [
            Outbound(msg.session, AgentId.REPORT, AgentId.USER, MessageKind.REPORT_DELIVERED,
                     {"vehicle_id": p["vehicle_id"], "report": report.text, "incomplete": incomplete})
        ]


# -- watcher -----------------------------------------------------------------


class SessionFsmState(str, Enum):
    IDLE = "Idle"
    REQUESTED = "Requested"
    INTERNAL_ACTIVE = "InternalActive"
    EXTERNAL_ACTIVE = "ExternalActive"
    COLLECTED = "Collected"
    REPORTING = "Reporting"


ACTIVE_STATE = {
    AgentId.INTERNAL: SessionFsmState.INTERNAL_ACTIVE,
    AgentId.EXTERNAL: SessionFsmState.EXTERNAL_ACTIVE,
}
ACTIVE_AGENT = {state: agent for agent, state in ACTIVE_STATE.items()}

# Kinds that carry no session-protocol meaning for the Watcher.
NEUTRAL_KINDS = frozenset({MessageKind.GREETING, MessageKind.PROFILE_STORE, MessageKind.WARNING})


class WarningReason(str, Enum):
    ORDERING_VIOLATION = "OrderingViolation"
    CONFLICT = "Conflict"


@dataclass(frozen=True)
class Verdict:
    kind: str
    reason: WarningReason | None = None

    @property
    def is_ok(self) -> bool:
        return self.kind == "Ok"

    @property
    def is_warning(self) -> bool:
        return self.kind == "Warning"

    @property
    def is_fatal(self) -> bool:
        return self.kind == "Fatal"

    def __str__(self) -> str:
        if self.reason is None:
            return self.kind
        return f"{self.kind}({self.reason.value})"


OK = Verdict("Ok")
FATAL = Verdict("Fatal")
ORDERING_VIOLATION = Verdict("Warning", WarningReason.ORDERING_VIOLATION)
CONFLICT = Verdict("Warning", WarningReason.CONFLICT)


@dataclass
class SessionWatch:
    state: SessionFsmState = SessionFsmState.IDLE
    checkpoints: list[SessionFsmState] = field(default_factory=list)
    events: list[tuple[int, str]] = field(default_factory=list)
    fatal_pending: bool = False

    @property
    def active_check_agent(self) -> AgentId | None:
        return ACTIVE_AGENT.get(self.state)

    def enter(self, new: SessionFsmState) -> None:
        self.checkpoints.append(self.state)
        self.state = new


class Watcher:
    """Supervises the session protocol from the tap copies it is delivered."""

    def __init__(self, registry: Registry | None = None) -> None:
        self.registry: Registry = registry if registry is not None else {}
        self.sessions: dict[str, SessionWatch] = {}
        self.flagged: set[int] = set()
        self.events: list[tuple[int, str, str]] = []

    def session(self, session: str) -> SessionWatch:
        return self.sessions.setdefault(session, SessionWatch())

    def state_of(self, session: str) -> SessionFsmState:
        w = self.sessions.get(session)
        return w.state if w is not None else SessionFsmState.IDLE

    def log_event(self, session: str, seq: int, text: str) -> None:
        self.session(session).events.append((seq, text))
        self.events.append((seq, session, text))

    def _set_status(self, agent: AgentId, status: AgentStatus) -> None:
        entry = self.registry.get(agent)
        if entry is not None and entry.status is not AgentStatus.TERMINATED:
            entry.status = status

    def observe(self, msg: Message) -> Verdict:
        if msg.sender is AgentId.WATCHER or msg.kind in NEUTRAL_KINDS:
            verdict = OK
        else:
            verdict = self._step(self.session(msg.session), msg)
        if verdict.is_warning:
            self.flagged.add(msg.seq)
        self.log_event(msg.session, msg.seq, str(verdict))
        return verdict

    def _step(self, w: SessionWatch, msg: Message) -> Verdict:
        S = SessionFsmState
        st, k = w.state, msg.kind
        active = w.active_check_agent
        if k is MessageKind.FATAL_ERROR:
            w.fatal_pending = True
            return FATAL
        if k is MessageKind.CHECK_REQUEST:
            if st is S.IDLE:
                w.enter(S.REQUESTED)
                return OK
            return ORDERING_VIOLATION
        if k is MessageKind.DISPATCH:
            if active is not None:
                return CONFLICT
            if st in (S.REQUESTED, S.COLLECTED) and msg.receiver in ACTIVE_STATE:
                w.enter(ACTIVE_STATE[msg.receiver])
                self._set_status(msg.receiver, AgentStatus.ACTIVE)
                return OK
            return ORDERING_VIOLATION
        if k is MessageKind.DIAGNOSIS_RESULT:
            if active is None:
                return ORDERING_VIOLATION
            if msg.sender is not active:
                return CONFLICT
            w.enter(S.COLLECTED)
            self._set_status(active, AgentStatus.REGISTERED)
            return OK
        if k is MessageKind.SENSOR_REPLY:
            if active is None:
                return ORDERING_VIOLATION
            return OK if msg.sender is active else CONFLICT
        if k is MessageKind.REPORT_REQUEST:
            # an aborted session may ask for a partial report before any result
            if st is S.COLLECTED or (st is S.REQUESTED and msg.payload.get("incomplete")):
                w.enter(S.REPORTING)
                return OK
            return ORDERING_VIOLATION
        if k is MessageKind.REPORT_DELIVERED:
            if st is S.REPORTING:
                w.enter(S.IDLE)
                return OK
            return ORDERING_VIOLATION
        raise AssertionError(k)

    def recover(self, session: str) -> Outbound:
        """Undo the step a fatal error interrupted.

        Terminates the active check agent, returns the session to the state
        on top of its checkpoint stack and yields the notification for
        Management.
        """
        w = self.sessions.get(session)
        if w is None or not w.fatal_pending:
            raise NothingToRecover(f"no fatal error pending in session {session!r}")
        w.fatal_pending = False
        victim = w.active_check_agent
        if victim is not None:
            entry = self.registry.get(victim)
            if entry is not None:
                entry.status = AgentStatus.TERMINATED
        if w.checkpoints:
            w.state = w.checkpoints.pop()
        return Outbound(
            session, AgentId.WATCHER, AgentId.MANAGEMENT, MessageKind.WARNING,
            {
                "reason": "FatalRecovery",
                "terminated": victim.value if victim is not None else None,
                "restored_state": w.state.value,
            },
        )

    def handle(self, msg: Message) -> list[Outbound]:
        verdict = self.observe(msg)
        if verdict.is_warning:
            return [
                Outbound(msg.session, AgentId.WATCHER, AgentId.MANAGEMENT, MessageKind.WARNING,
                         {"reason": verdict.reason.value, "offending_seq": msg.seq,
                          "offending_kind": msg.kind.value})
            ]
        if verdict.is_fatal:
            return [self.recover(msg.session)]
        return []


def watcher_observe(w: Watcher, msg: Message) -> tuple[Watcher, Verdict]:
    return w, w.observe(msg)


def watcher_recover(w: Watcher, session: str) -> Watcher:
    w.recover(session)
    return w
