"""Diagnostic rule tables for internal and external vehicle checks.

Both evaluators are pure functions of a snapshot (and, for the external
rules, a :class:`RuleConfig`).  :func:`rule_table` carries the same rules as
data; :func:`interpret_rules` evaluates that data and exists so the two
encodings can be checked against each other.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Iterable


class Direction(str, Enum):
    FORWARD = "Forward"
    REVERSE = "Reverse"
    NEUTRAL = "Neutral"


class Motion(str, Enum):
    FORWARD = "Forward"
    REVERSE = "Reverse"
    STATIONARY = "Stationary"


class Position(str, Enum):
    FL = "FL"
    FR = "FR"
    RL = "RL"
    RR = "RR"


POSITIONS: tuple[Position, ...] = tuple(Position)


class FaultKind(str, Enum):
    SPARK_PLUGS = "SparkPlugs"
    BATTERY = "Battery"
    STARTER = "Starter"
    PETROL_FINISHED = "PetrolFinished"
    VEHICLE_STOLEN = "VehicleStolen"
    OVERSPEED = "Overspeed"
    DIRECTION_INCONSISTENCY = "DirectionInconsistency"
    OIL_LEAKAGE = "OilLeakage"
    TYRE_UNDERINFLATED = "TyreUnderinflated"
    DOOR_OPEN = "DoorOpen"

    @property
    def positional(self) -> bool:
        return self in (FaultKind.TYRE_UNDERINFLATED, FaultKind.DOOR_OPEN)


# lower rank = reported first
SEVERITY: dict[FaultKind, int] = {
    FaultKind.VEHICLE_STOLEN: 1,
    FaultKind.BATTERY: 2,
    FaultKind.STARTER: 3,
    FaultKind.SPARK_PLUGS: 4,
    FaultKind.PETROL_FINISHED: 5,
    FaultKind.OIL_LEAKAGE: 6,
    FaultKind.OVERSPEED: 7,
    FaultKind.DIRECTION_INCONSISTENCY: 8,
    FaultKind.TYRE_UNDERINFLATED: 9,
    FaultKind.DOOR_OPEN: 10,
}


@dataclass(frozen=True)
class InternalSnapshot:
    engine_starts: bool
    engine_turns_over: bool
    engine_getting_petrol: bool
    lights_come_on: bool
    fuel_in_tank: bool
    alarm_bell_ringing: bool

    def __post_init__(self) -> None:
        if not self.fuel_in_tank and self.engine_getting_petrol:
            raise ValueError("engine cannot be getting petrol from an empty tank")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> InternalSnapshot:
        return cls(**{k: bool(d[k]) for k in INTERNAL_FIELDS})


INTERNAL_FIELDS: tuple[str, ...] = (
    "engine_starts",
    "engine_turns_over",
    "engine_getting_petrol",
    "lights_come_on",
    "fuel_in_tank",
    "alarm_bell_ringing",
)


@dataclass(frozen=True)
class ExternalSnapshot:
    speed_kmh: float = 0.0
    commanded_direction: Direction = Direction.NEUTRAL
    actual_motion: Motion = Motion.STATIONARY
    oil_leak_detected: bool = False
    oil_level_fraction: float = 1.0
    tyre_pressure_kpa: tuple[float, float, float, float] = (220.0, 220.0, 220.0, 220.0)
    doors_closed: tuple[bool, bool, bool, bool] = (True, True, True, True)

    def __post_init__(self) -> None:
        if self.speed_kmh < 0:
            raise ValueError("speed_kmh must be non-negative")
        if (self.speed_kmh == 0) != (self.actual_motion is Motion.STATIONARY):
            raise ValueError("speed_kmh is zero exactly when the vehicle is stationary")
        if not 0.0 <= self.oil_level_fraction <= 1.0:
            raise ValueError("oil_level_fraction must lie in [0, 1]")
        if len(self.tyre_pressure_kpa) != 4 or len(self.doors_closed) != 4:
            raise ValueError("expected four tyre pressures and four door flags")
        if any(p < 0 for p in self.tyre_pressure_kpa):
            raise ValueError("tyre pressures must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "speed_kmh": self.speed_kmh,
            "commanded_direction": self.commanded_direction.value,
            "actual_motion": self.actual_motion.value,
            "oil_leak_detected": self.oil_leak_detected,
            "oil_level_fraction": self.oil_level_fraction,
            "tyre_pressure_kpa": list(self.tyre_pressure_kpa),
            "doors_closed": list(self.doors_closed),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExternalSnapshot:
        return cls(
            speed_kmh=float(d["speed_kmh"]),
            commanded_direction=Direction(d["commanded_direction"]),
            actual_motion=Motion(d["actual_motion"]),
            oil_leak_detected=bool(d["oil_leak_detected"]),
            oil_level_fraction=float(d["oil_level_fraction"]),
            tyre_pressure_kpa=tuple(float(p) for p in d["tyre_pressure_kpa"]),
            doors_closed=tuple(bool(c) for c in d["doors_closed"]),
        )


@dataclass(frozen=True)
class RuleConfig:
    speed_limit_kmh: float = 120.0
    min_tyre_kpa: float = 180.0
    min_oil_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.speed_limit_kmh <= 0 or self.min_tyre_kpa <= 0:
            raise ValueError("thresholds must be strictly positive")
        if not 0.0 < self.min_oil_fraction < 1.0:
            raise ValueError("min_oil_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Diagnosis:
    fault: FaultKind
    rule_id: str
    severity: int
    message: str
    position: Position | None = None

    @property
    def label(self) -> str:
        if self.position is None:
            return self.fault.value
        return f"{self.fault.value}({self.position.value})"

    def sort_key(self) -> tuple[int, str, int]:
        pos = POSITIONS.index(self.position) if self.position is not None else -1
        return (self.severity, self.rule_id, pos)

    def to_dict(self) -> dict[str, Any]:
        return {
            "fault": self.fault.value,
            "position": self.position.value if self.position is not None else None,
            "rule_id": self.rule_id,
            "severity": self.severity,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Diagnosis:
        pos = d.get("position")
        return cls(
            fault=FaultKind(d["fault"]),
            rule_id=d["rule_id"],
            severity=int(d["severity"]),
            message=d["message"],
            position=Position(pos) if pos is not None else None,
        )


def fault_message(fault: FaultKind, position: Position | None = None) -> str:
    """Human-readable text for a fault, as shown on report lines."""
    where = position.value if position is not None else ""
    return {
        FaultKind.SPARK_PLUGS: "engine turns over with fuel but will not fire; problem with the spark plugs",
        FaultKind.BATTERY: "battery is not working properly",
        FaultKind.STARTER: "lights work but the engine will not crank; problem with the starter",
        FaultKind.PETROL_FINISHED: "petrol has finished",
        FaultKind.VEHICLE_STOLEN: "alarm bell is ringing; the vehicle may have been stolen",
        FaultKind.OVERSPEED: "vehicle speed is above the configured limit",
        FaultKind.DIRECTION_INCONSISTENCY: "vehicle is moving against the selected direction",
        FaultKind.OIL_LEAKAGE: "oil is leaking or the oil level is low",
        FaultKind.TYRE_UNDERINFLATED: f"tyre {where} pressure is below the minimum",
        FaultKind.DOOR_OPEN: f"door {where} is open",
    }[fault]


def make_diagnosis(rule_id: str, fault: FaultKind, position: Position | None = None) -> Diagnosis:
    return Diagnosis(fault, rule_id, SEVERITY[fault], fault_message(fault, position), position)


def _ordered(diagnoses: Iterable[Diagnosis]) -> list[Diagnosis]:
    return sorted(set(diagnoses), key=Diagnosis.sort_key)


def evaluate_internal_rules(s: InternalSnapshot) -> list[Diagnosis]:
    out = []
    no_start = not s.engine_starts
    if no_start and s.engine_turns_over and s.engine_getting_petrol:
        out.append(make_diagnosis("I-1", FaultKind.SPARK_PLUGS))
    if no_start and not s.engine_turns_over and not s.lights_come_on:
        out.append(make_diagnosis("I-2", FaultKind.BATTERY))
    if no_start and not s.engine_turns_over and s.lights_come_on:
        out.append(make_diagnosis("I-3", FaultKind.STARTER))
    if not s.fuel_in_tank:
        out.append(make_diagnosis("I-4", FaultKind.PETROL_FINISHED))
    if s.alarm_bell_ringing:
        out.append(make_diagnosis("I-5", FaultKind.VEHICLE_STOLEN))
    return _ordered(out)


def _opposed(cmd: Direction, actual: Motion) -> bool:
    return (cmd is Direction.FORWARD and actual is Motion.REVERSE) or (
        cmd is Direction.REVERSE and actual is Motion.FORWARD
    )


def evaluate_external_rules(s: ExternalSnapshot, cfg: RuleConfig | None = None) -> list[Diagnosis]:
    cfg = cfg or RuleConfig()
    out = []
    if s.speed_kmh > cfg.speed_limit_kmh:
        out.append(make_diagnosis("E-1", FaultKind.OVERSPEED))
    if _opposed(s.commanded_direction, s.actual_motion):
        out.append(make_diagnosis("E-2", FaultKind.DIRECTION_INCONSISTENCY))
    if s.oil_leak_detected or s.oil_level_fraction < cfg.min_oil_fraction:
        out.append(make_diagnosis("E-3", FaultKind.OIL_LEAKAGE))
    for pos, kpa in zip(POSITIONS, s.tyre_pressure_kpa):
        if kpa < cfg.min_tyre_kpa:
            out.append(make_diagnosis("E-4", FaultKind.TYRE_UNDERINFLATED, pos))
    for pos, closed in zip(POSITIONS, s.doors_closed):
        if not closed:
            out.append(make_diagnosis("E-5", FaultKind.DOOR_OPEN, pos))
    return _ordered(out)


# Antecedents as data.  A clause is (field, op, operand); operand names a
# RuleConfig attribute when op is "<cfg" or ">cfg".  Fields ending in "[*]"
# are per-wheel and fire once per matching position.  A rule fires when ALL
# clauses of ANY of its alternatives hold.
Clause = tuple[str, str, Any]


@dataclass(frozen=True)
class RuleDescriptor:
    rule_id: str
    scope: str
    description: str
    fault: FaultKind
    alternatives: tuple[tuple[Clause, ...], ...] = field(repr=False)

    @property
    def severity(self) -> int:
        return SEVERITY[self.fault]

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "scope": self.scope,
            "description": self.description,
            "fault": self.fault.value,
            "severity": self.severity,
        }


_RULES: tuple[RuleDescriptor, ...] = (
    RuleDescriptor(
        "I-1", "internal",
        "engine does not start, turns over and is getting petrol",
        FaultKind.SPARK_PLUGS,
        ((("engine_starts", "==", False), ("engine_turns_over", "==", True),
          ("engine_getting_petrol", "==", True)),),
    ),
    RuleDescriptor(
        "I-2", "internal",
        "engine does not start, does not turn over and lights do not come on",
        FaultKind.BATTERY,
        ((("engine_starts", "==", False), ("engine_turns_over", "==", False),
          ("lights_come_on", "==", False)),),
    ),
    RuleDescriptor(
        "I-3", "internal",
        "engine does not start, does not turn over but lights come on",
        FaultKind.STARTER,
        ((("engine_starts", "==", False), ("engine_turns_over", "==", False),
          ("lights_come_on", "==", True)),),
    ),
    RuleDescriptor(
        "I-4", "internal", "no petrol in the fuel tank", FaultKind.PETROL_FINISHED,
        ((("fuel_in_tank", "==", False),),),
    ),
    RuleDescriptor(
        "I-5", "internal", "alarm bell ringing", FaultKind.VEHICLE_STOLEN,
        ((("alarm_bell_ringing", "==", True),),),
    ),
    RuleDescriptor(
        "E-1", "external", "speed above the configured limit", FaultKind.OVERSPEED,
        ((("speed_kmh", ">cfg", "speed_limit_kmh"),),),
    ),
    RuleDescriptor(
        "E-2", "external", "vehicle moving opposite to the commanded direction",
        FaultKind.DIRECTION_INCONSISTENCY,
        (
            (("commanded_direction", "==", Direction.FORWARD), ("actual_motion", "==", Motion.REVERSE)),
            (("commanded_direction", "==", Direction.REVERSE), ("actual_motion", "==", Motion.FORWARD)),
        ),
    ),
    RuleDescriptor(
        "E-3", "external", "oil leak detected or oil level below minimum", FaultKind.OIL_LEAKAGE,
        (
            (("oil_leak_detected", "==", True),),
            (("oil_level_fraction", "<cfg", "min_oil_fraction"),),
        ),
    ),
    RuleDescriptor(
        "E-4", "external", "tyre pressure below minimum (per wheel)",
        FaultKind.TYRE_UNDERINFLATED,
        ((("tyre_pressure_kpa[*]", "<cfg", "min_tyre_kpa"),),),
    ),
    RuleDescriptor(
        "E-5", "external", "door not closed (per door)", FaultKind.DOOR_OPEN,
        ((("doors_closed[*]", "==", False),),),
    ),
)


def rule_table() -> list[RuleDescriptor]:
    return list(_RULES)


def _clause_holds(value: Any, op: str, operand: Any, cfg: RuleConfig) -> bool:
    if op == "==":
        return value == operand
    if op == "<cfg":
        return value < getattr(cfg, operand)
    if op == ">cfg":
        return value > getattr(cfg, operand)
    raise ValueError(f"unknown operator {op!r}")


def interpret_rules(
    snapshot: InternalSnapshot | ExternalSnapshot, cfg: RuleConfig | None = None
) -> list[Diagnosis]:
    """Evaluate the rule table as data against ``snapshot``."""
    cfg = cfg or RuleConfig()
    scope = "internal" if isinstance(snapshot, InternalSnapshot) else "external"
    out = []
    for rule in _RULES:
        if rule.scope != scope:
            continue
        per_wheel = any(c[0].endswith("[*]") for alt in rule.alternatives for c in alt)
        slots: Iterable[Position | None] = POSITIONS if per_wheel else (None,)
        for i, pos in enumerate(slots):
            for alt in rule.alternatives:
                ok = True
                for name, op, operand in alt:
                    if name.endswith("[*]"):
                        value = getattr(snapshot, name[:-3])[i]
                    else:
                        value = getattr(snapshot, name)
                    if not _clause_holds(value, op, operand, cfg):
                        ok = False
                        break
                if ok:
                    out.append(make_diagnosis(rule.rule_id, rule.fault, pos))
                    break
    return _ordered(out)


def rule_table_json() -> list[dict[str, Any]]:
    return [r.to_dict() for r in _RULES]
