"""Single-scheduler runtime: one bus, five agents, one delivery loop."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from .agents import (
    CheckAgent,
    ManagementAgent,
    ProfileStore,
    ReportAgent,
    UnknownSession,
    UserProfile,
    Watcher,
)
from .bus import (
    ActivationTracker,
    AgentId,
    Bus,
    Delivery,
    EmptyQueue,
    MessageKind,
    Outbound,
    Registry,
    register_agent,
)
from .history import CheckSession, HistoryStore, snapshot_from_record
from .rules import Diagnosis, RuleConfig
from .vehicle import (
    FaultInjection,
    Scope,
    VehicleState,
    clear_fault,
    inject_fault,
    new_vehicle,
)

ROLES = {
    AgentId.USER: "requests checks and reads reports",
    AgentId.MANAGEMENT: "keeps the agent list and routes work",
    AgentId.INTERNAL: "internal checks: engine, battery, starter, plugs, fuel, alarm",
    AgentId.EXTERNAL: "external checks: speed, direction, oil, tyres, doors",
    AgentId.WATCHER: "supervises message order and handles fatal errors",
    AgentId.REPORT: "renders results for the user",
}

MAX_STEPS = 10_000


class UnknownVehicle(Exception):
    pass


class DuplicateVehicle(Exception):
    pass


class LogicalClock:
    """Deterministic millisecond clock: ``start_ms``, then ``+step_ms`` per call."""

    def __init__(self, start_ms: int = 0, step_ms: int = 1000) -> None:
        self.now = start_ms
        self.step = step_ms

    def __call__(self) -> int:
        t = self.now
        self.now += self.step
        return t


@dataclass
class CheckResult:
    session: CheckSession
    greeting: str | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def report_text(self) -> str:
        return self.session.report_text


def build_registry() -> Registry:
    registry: Registry = {}
    for agent, role in ROLES.items():
        register_agent(registry, agent, role)
    return registry


class VcaSystem:
    def __init__(
        self,
        cfg: RuleConfig | None = None,
        history: HistoryStore | None = None,
        profiles: ProfileStore | None = None,
        clock: Callable[[], int] | None = None,
        seed: int = 0,
        first_session_index: int = 0,
    ) -> None:
        self.cfg = cfg or RuleConfig()
        self.history = history
        self.clock = clock or LogicalClock()
        self.seed = seed
        self._session_index = first_session_index
        self.vehicles: dict[str, VehicleState] = {}
        self.registry = build_registry()
        self.bus = Bus(self.registry, on_drop=self._on_drop)
        self.tracker = ActivationTracker()
        self.management = ManagementAgent(profiles)
        self.watcher = Watcher(self.registry)
        self.handlers: dict[AgentId, Callable] = {
            AgentId.MANAGEMENT: self.management.handle,
            AgentId.INTERNAL: CheckAgent(AgentId.INTERNAL, self.vehicles, self.cfg).handle,
            AgentId.EXTERNAL: CheckAgent(AgentId.EXTERNAL, self.vehicles, self.cfg).handle,
            AgentId.REPORT: ReportAgent().handle,
            AgentId.WATCHER: self.watcher.handle,
        }
        self.user_inbox: list[Delivery] = []
        self.errors: list[tuple[int, str]] = []

    @property
    def profiles(self) -> ProfileStore:
        return self.management.profiles

    # -- vehicles ----------------------------------------------------------

    def add_vehicle(self, vehicle_id: str) -> VehicleState:
        if vehicle_id in self.vehicles:
            raise DuplicateVehicle(f"vehicle {vehicle_id} already exists")
        self.vehicles[vehicle_id] = new_vehicle(vehicle_id)
        return self.vehicles[vehicle_id]

    def vehicle(self, vehicle_id: str) -> VehicleState:
        try:
            return self.vehicles[vehicle_id]
        except KeyError:
            raise UnknownVehicle(f"unknown vehicle {vehicle_id}") from None

    def inject(self, vehicle_id: str, f: FaultInjection) -> VehicleState:
        self.vehicles[vehicle_id] = inject_fault(self.vehicle(vehicle_id), f)
        return self.vehicles[vehicle_id]

    def clear(self, vehicle_id: str, f: FaultInjection) -> VehicleState:
        self.vehicles[vehicle_id] = clear_fault(self.vehicle(vehicle_id), f)
        return self.vehicles[vehicle_id]

    # -- scheduling --------------------------------------------------------

    def _on_drop(self, d: Delivery) -> None:
        self.watcher.log_event(d.message.session, d.message.seq, f"Dropped({d.recipient.value})")

    def step(self) -> Delivery:
        d = self.bus.deliver_next()
        msg = d.message
        if d.tap:
            self.tracker.observe(msg)
        elif msg.seq in self.watcher.flagged:
            # the Watcher already objected to this message; nobody acts on it
            return d
        if d.recipient is AgentId.USER:
            self.user_inbox.append(d)
            return d
        try:
            out = self.handlers[d.recipient](msg)
        except UnknownSession as exc:
            self.errors.append((msg.seq, str(exc)))
            out = []
        self.bus.send_all(out)
        return d

    def run(self) -> int:
        """Deliver until the bus is idle; returns the number of deliveries."""
        for n in range(MAX_STEPS):
            try:
                self.step()
            except EmptyQueue:
                return n
        raise RuntimeError("bus did not go idle")

    def send(self, out: Outbound) -> None:
        self.bus.send(out)

    # -- user-facing operations -------------------------------------------

    def next_session_id(self) -> str:
        self._session_index += 1
        tag = random.Random(f"{self.seed}/{self._session_index}").getrandbits(32)
        return f"S{self._session_index:04d}-{tag:08x}"

    def set_profile(self, profile: UserProfile) -> None:
        self.send(Outbound(f"profile:{profile.user_id}", AgentId.USER, AgentId.MANAGEMENT,
                           MessageKind.PROFILE_STORE, {"profile": profile.to_dict()}))
        self.run()

    def check(self, vehicle_id: str, scope: Scope, user_id: str = "user") -> CheckResult:
        self.vehicle(vehicle_id)
        session = self.next_session_id()
        timestamp = self.clock()
        inbox_start = len(self.user_inbox)
        self.send(Outbound(session, AgentId.USER, AgentId.MANAGEMENT, MessageKind.CHECK_REQUEST,
                           {"vehicle_id": vehicle_id, "scope": scope.value, "user_id": user_id}))
        self.run()

        greeting = None
        report = None
        for d in self.user_inbox[inbox_start:]:
            if d.message.session != session:
                continue
            if d.message.kind is MessageKind.GREETING:
                greeting = d.message.payload["text"]
            elif d.message.kind is MessageKind.REPORT_DELIVERED:
                report = d.message.payload
        if report is None:
            raise RuntimeError(f"session {session} finished without a report")

        rec = self.management.sessions[session]
        watch = self.watcher.session(session)
        record = CheckSession(
            session_id=session,
            vehicle_id=vehicle_id,
            timestamp=timestamp,
            scope=scope,
            snapshots=[snapshot_from_record(s) for s in rec.snapshots],
            diagnoses=sorted({Diagnosis.from_dict(d) for d in rec.diagnoses}, key=Diagnosis.sort_key),
            report_text=report["report"],
            watcher_events=list(watch.events),
            incomplete=bool(report.get("incomplete", False)),
        )
        if self.history is not None:
            self.history.append(record)
        warnings = [f"seq={seq} {v}" for seq, v in watch.events if v != "Ok"]
        return CheckResult(record, greeting, warnings)
