"""Plain-text check reports.

Format::

    VCA REPORT session=<id> vehicle=<id>
    [<severity>] <fault>: <message> -- <action>
    ...
    SUMMARY: <n> fault(s)

An empty diagnosis set renders the single body line ``No fault found``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .rules import Diagnosis, FaultKind

NO_FAULT_LINE = "No fault found"
INCOMPLETE_NOTE = "check incomplete"

RECOMMENDED_ACTION: dict[FaultKind, str] = {
    FaultKind.SPARK_PLUGS: "clean or replace the spark plugs",
    FaultKind.BATTERY: "charge or replace battery",
    FaultKind.STARTER: "repair or replace the starter motor",
    FaultKind.PETROL_FINISHED: "refuel the vehicle",
    FaultKind.VEHICLE_STOLEN: "report the theft and locate the vehicle",
    FaultKind.OVERSPEED: "reduce speed below the limit",
    FaultKind.DIRECTION_INCONSISTENCY: "stop and inspect the transmission",
    FaultKind.OIL_LEAKAGE: "inspect for leaks and top up the oil",
    FaultKind.TYRE_UNDERINFLATED: "inflate the tyre to the recommended pressure",
    FaultKind.DOOR_OPEN: "close and lock the door",
}


@dataclass(frozen=True)
class ReportLine:
    severity: int
    fault: str
    message: str
    action: str

    def __str__(self) -> str:
        return f"[{self.severity}] {self.fault}: {self.message} -- {self.action}"


@dataclass(frozen=True)
class Report:
    session: str
    vehicle_id: str
    lines: tuple[ReportLine, ...]
    verdict_summary: str

    @property
    def text(self) -> str:
        out = [f"VCA REPORT session={self.session} vehicle={self.vehicle_id}"]
        out += [str(line) for line in self.lines] or [NO_FAULT_LINE]
        out.append(self.verdict_summary)
        return "\n".join(out) + "\n"


def report_render(
    diagnoses: Iterable[Diagnosis], vehicle_id: str, session: str, incomplete: bool = False
) -> Report:
    ordered = sorted(set(diagnoses), key=Diagnosis.sort_key)
    lines = tuple(
        ReportLine(d.severity, d.label, d.message, RECOMMENDED_ACTION[d.fault]) for d in ordered
    )
    summary = f"SUMMARY: {len(lines)} fault(s)"
    if incomplete:
        summary += f"; {INCOMPLETE_NOTE}"
    return Report(session, vehicle_id, lines, summary)
