"""Deterministic message bus with an agent registry.

Every message not addressed to the Watcher is delivered twice: first a tap
copy to the Watcher, then the primary copy to its recipient.  All deliveries
share one FIFO queue, so the delivery transcript is a pure function of the
order of sends.
"""
from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, TextIO


class AgentId(str, Enum):
    USER = "User"
    MANAGEMENT = "Management"
    INTERNAL = "Internal"
    EXTERNAL = "External"
    WATCHER = "Watcher"
    REPORT = "Report"


CHECK_AGENTS = (AgentId.INTERNAL, AgentId.EXTERNAL)


class MessageKind(str, Enum):
    CHECK_REQUEST = "CheckRequest"
    DISPATCH = "Dispatch"
    SENSOR_REPLY = "SensorReply"
    DIAGNOSIS_RESULT = "DiagnosisResult"
    REPORT_REQUEST = "ReportRequest"
    REPORT_DELIVERED = "ReportDelivered"
    WARNING = "Warning"
    FATAL_ERROR = "FatalError"
    PROFILE_STORE = "ProfileStore"
    GREETING = "Greeting"


class AgentStatus(str, Enum):
    REGISTERED = "Registered"
    ACTIVE = "Active"
    TERMINATED = "Terminated"


class BusError(Exception):
    pass


class DuplicateAgent(BusError):
    pass


class UnknownAgent(BusError):
    pass


class TerminatedRecipient(BusError):
    pass


class EmptyQueue(BusError):
    pass


@dataclass(frozen=True)
class Outbound:
    """A message as an agent emits it; the bus stamps the sequence number."""

    session: str
    sender: AgentId
    receiver: AgentId
    kind: MessageKind
    payload: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Message:
    seq: int
    session: str
    sender: AgentId
    receiver: AgentId
    kind: MessageKind
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "session": self.session,
            "from": self.sender.value,
            "to": self.receiver.value,
            "kind": self.kind.value,
            "payload": self.payload,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Message:
        return cls(
            seq=int(d["seq"]),
            session=d["session"],
            sender=AgentId(d["from"]),
            receiver=AgentId(d["to"]),
            kind=MessageKind(d["kind"]),
            payload=d["payload"],
        )


@dataclass(frozen=True)
class Delivery:
    message: Message
    recipient: AgentId
    tap: bool = False


@dataclass
class RegistryEntry:
    role: str
    status: AgentStatus = AgentStatus.REGISTERED


Registry = dict[AgentId, RegistryEntry]


def register_agent(registry: Registry, agent: AgentId, role: str) -> Registry:
    if agent in registry:
        raise DuplicateAgent(f"agent {agent.value} is already registered")
    registry[agent] = RegistryEntry(role)
    return registry


class Bus:
    def __init__(
        self,
        registry: Registry | None = None,
        on_drop: Callable[[Delivery], None] | None = None,
    ) -> None:
        self.registry: Registry = registry if registry is not None else {}
        self.on_drop = on_drop
        self._queue: deque[Delivery] = deque()
        self._next_seq = 0
        self._lock = threading.Lock()
        self.transcript: list[Delivery] = []
        self.dropped: list[Delivery] = []

    def __len__(self) -> int:
        return len(self._queue)

    def _check(self, agent: AgentId) -> RegistryEntry:
        entry = self.registry.get(agent)
        if entry is None:
            raise UnknownAgent(f"agent {agent.value} is not registered")
        return entry

    def send(self, out: Outbound) -> Message:
        """Stamp and enqueue ``out``; returns the stamped message as the ack."""
        with self._lock:
            self._check(out.sender)
            if self._check(out.receiver).status is AgentStatus.TERMINATED:
                raise TerminatedRecipient(f"agent {out.receiver.value} has been terminated")
            msg = Message(self._next_seq, out.session, out.sender, out.receiver, out.kind, out.payload)
            self._next_seq += 1
            if msg.receiver is not AgentId.WATCHER and AgentId.WATCHER in self.registry:
                self._queue.append(Delivery(msg, AgentId.WATCHER, tap=True))
            self._queue.append(Delivery(msg, msg.receiver))
            return msg

    def send_all(self, outs: Iterable[Outbound]) -> list[Message]:
        return [self.send(o) for o in outs]

    def deliver_next(self) -> Delivery:
        """Pop the head delivery.

        Deliveries to an agent terminated while they were in flight are
        dropped (and reported to ``on_drop``) rather than returned.
        """
        while True:
            with self._lock:
                if not self._queue:
                    raise EmptyQueue("no pending deliveries")
                d = self._queue.popleft()
            if self.registry[d.recipient].status is AgentStatus.TERMINATED:
                self.dropped.append(d)
                if self.on_drop is not None:
                    self.on_drop(d)
                continue
            self.transcript.append(d)
            return d

    def export_transcript(self, fh: TextIO, include_taps: bool = False) -> None:
        """Write delivered messages as JSON lines in delivery order."""
        for d in self.transcript:
            if d.tap and not include_taps:
                continue
            fh.write(d.message.to_json() + "\n")


class ActivationTracker:
    """Which check agent each session has dispatched and not yet heard back from."""

    def __init__(self) -> None:
        self._active: dict[str, AgentId] = {}

    def observe(self, msg: Message) -> None:
        if msg.kind is MessageKind.DISPATCH and msg.receiver in CHECK_AGENTS:
            self._active[msg.session] = msg.receiver
        elif msg.kind in (MessageKind.DIAGNOSIS_RESULT, MessageKind.FATAL_ERROR):
            if self._active.get(msg.session) is msg.sender:
                del self._active[msg.session]

    def current_activation(self, session: str) -> AgentId | None:
        return self._active.get(session)
