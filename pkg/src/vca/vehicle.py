"""Simulated vehicle with fault injection.

The symptom table is the inverse of the diagnostic rule antecedents: each
injection writes a small set of state fields to faulty values, and clearing
it writes those same fields back to their healthy values.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Any

from .rules import (
    Direction,
    ExternalSnapshot,
    FaultKind,
    InternalSnapshot,
    Motion,
    POSITIONS,
    Position,
)


class SensorFailure(Exception):
    """A sensor read failed; the check agent turns this into a FatalError."""


class Scope(str, Enum):
    INTERNAL_ONLY = "InternalOnly"
    EXTERNAL_ONLY = "ExternalOnly"
    FULL = "Full"

    @classmethod
    def parse(cls, text: str) -> Scope:
        key = text.strip().lower()
        for scope, aliases in _SCOPE_ALIASES.items():
            if key in aliases:
                return scope
        raise ValueError(f"unknown scope {text!r} (expected internal, external or full)")


_SCOPE_ALIASES = {
    Scope.INTERNAL_ONLY: {"internal", "internalonly"},
    Scope.EXTERNAL_ONLY: {"external", "externalonly"},
    Scope.FULL: {"full"},
}


class InjectionKind(str, Enum):
    DEAD_BATTERY = "DeadBattery"
    BAD_STARTER = "BadStarter"
    FOULED_SPARK_PLUGS = "FouledSparkPlugs"
    EMPTY_TANK = "EmptyTank"
    THEFT = "Theft"
    OIL_LEAK = "OilLeak"
    UNDERINFLATED_TYRE = "UnderinflatedTyre"
    OPEN_DOOR = "OpenDoor"
    OVERSPEED = "Overspeed"
    DIRECTION_MISMATCH = "DirectionMismatch"
    SENSOR_FAILURE = "SensorFailure"

    @property
    def positional(self) -> bool:
        return self in (InjectionKind.UNDERINFLATED_TYRE, InjectionKind.OPEN_DOOR)


@dataclass(frozen=True)
class FaultInjection:
    kind: InjectionKind
    position: Position | None = None

    def __post_init__(self) -> None:
        if self.kind.positional and self.position is None:
            raise ValueError(f"{self.kind.value} needs a position (FL, FR, RL, RR)")
        if not self.kind.positional and self.position is not None:
            raise ValueError(f"{self.kind.value} takes no position")

    @classmethod
    def parse(cls, name: str, position: str | None = None) -> FaultInjection:
        by_lower = {k.value.lower(): k for k in InjectionKind}
        try:
            kind = by_lower[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown fault {name!r}") from None
        pos = None
        if position is not None:
            try:
                pos = Position(position.strip().upper())
            except ValueError:
                raise ValueError(f"unknown position {position!r}") from None
        return cls(kind, pos)

    def __str__(self) -> str:
        if self.position is None:
            return self.kind.value
        return f"{self.kind.value}({self.position.value})"


# Injections whose faults are read by the internal check agent.
INTERNAL_INJECTIONS = frozenset({
    InjectionKind.DEAD_BATTERY,
    InjectionKind.BAD_STARTER,
    InjectionKind.FOULED_SPARK_PLUGS,
    InjectionKind.EMPTY_TANK,
    InjectionKind.THEFT,
})

EXPECTED_FAULT: dict[InjectionKind, FaultKind] = {
    InjectionKind.DEAD_BATTERY: FaultKind.BATTERY,
    InjectionKind.BAD_STARTER: FaultKind.STARTER,
    InjectionKind.FOULED_SPARK_PLUGS: FaultKind.SPARK_PLUGS,
    InjectionKind.EMPTY_TANK: FaultKind.PETROL_FINISHED,
    InjectionKind.THEFT: FaultKind.VEHICLE_STOLEN,
    InjectionKind.OIL_LEAK: FaultKind.OIL_LEAKAGE,
    InjectionKind.UNDERINFLATED_TYRE: FaultKind.TYRE_UNDERINFLATED,
    InjectionKind.OPEN_DOOR: FaultKind.DOOR_OPEN,
    InjectionKind.OVERSPEED: FaultKind.OVERSPEED,
    InjectionKind.DIRECTION_MISMATCH: FaultKind.DIRECTION_INCONSISTENCY,
}


def scope_for(injection: FaultInjection) -> Scope:
    if injection.kind in INTERNAL_INJECTIONS:
        return Scope.INTERNAL_ONLY
    if injection.kind is InjectionKind.SENSOR_FAILURE:
        return Scope.FULL
    return Scope.EXTERNAL_ONLY


FLAT_TYRE_KPA = 120.0
HEALTHY_TYRE_KPA = 220.0
OVERSPEED_KMH = 160.0
CREEP_KMH = 10.0


@dataclass(frozen=True)
class VehicleState:
    vehicle_id: str
    battery_ok: bool = True
    starter_ok: bool = True
    spark_plugs_ok: bool = True
    alarm_triggered: bool = False
    oil_leak: bool = False
    sensor_failure: bool = False
    fuel_fraction: float = 1.0
    oil_level_fraction: float = 1.0
    speed_kmh: float = 0.0
    commanded_direction: Direction = Direction.NEUTRAL
    actual_motion: Motion = Motion.STATIONARY
    tyre_pressure_kpa: tuple[float, float, float, float] = (HEALTHY_TYRE_KPA,) * 4
    doors_closed: tuple[bool, bool, bool, bool] = (True,) * 4

    def __post_init__(self) -> None:
        if not 0.0 <= self.fuel_fraction <= 1.0:
            raise ValueError("fuel_fraction must lie in [0, 1]")
        if (self.speed_kmh == 0) != (self.actual_motion is Motion.STATIONARY):
            raise ValueError("speed_kmh is zero exactly when the vehicle is stationary")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Enum):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> VehicleState:
        d = dict(d)
        d["commanded_direction"] = Direction(d["commanded_direction"])
        d["actual_motion"] = Motion(d["actual_motion"])
        d["tyre_pressure_kpa"] = tuple(float(p) for p in d["tyre_pressure_kpa"])
        d["doors_closed"] = tuple(bool(c) for c in d["doors_closed"])
        return cls(**d)


def new_vehicle(vehicle_id: str) -> VehicleState:
    return VehicleState(vehicle_id)


# A symptom row maps a field key to (faulty, healthy).  Keys are field names,
# or (field name, wheel index) for the per-position tuples.
FieldKey = str | tuple[str, int]


def symptom_row(injection: FaultInjection) -> dict[FieldKey, tuple[Any, Any]]:
    k = injection.kind
    if k is InjectionKind.DEAD_BATTERY:
        return {"battery_ok": (False, True)}
    if k is InjectionKind.BAD_STARTER:
        return {"starter_ok": (False, True)}
    if k is InjectionKind.FOULED_SPARK_PLUGS:
        return {"spark_plugs_ok": (False, True)}
    if k is InjectionKind.EMPTY_TANK:
        return {"fuel_fraction": (0.0, 1.0)}
    if k is InjectionKind.THEFT:
        return {"alarm_triggered": (True, False)}
    if k is InjectionKind.OIL_LEAK:
        return {"oil_leak": (True, False)}
    if k is InjectionKind.SENSOR_FAILURE:
        return {"sensor_failure": (True, False)}
    if k is InjectionKind.OVERSPEED:
        return {
            "speed_kmh": (OVERSPEED_KMH, 0.0),
            "commanded_direction": (Direction.FORWARD, Direction.NEUTRAL),
            "actual_motion": (Motion.FORWARD, Motion.STATIONARY),
        }
    if k is InjectionKind.DIRECTION_MISMATCH:
        return {
            "speed_kmh": (CREEP_KMH, 0.0),
            "commanded_direction": (Direction.REVERSE, Direction.NEUTRAL),
            "actual_motion": (Motion.FORWARD, Motion.STATIONARY),
        }
    i = POSITIONS.index(injection.position)
    if k is InjectionKind.UNDERINFLATED_TYRE:
        return {("tyre_pressure_kpa", i): (FLAT_TYRE_KPA, HEALTHY_TYRE_KPA)}
    if k is InjectionKind.OPEN_DOOR:
        return {("doors_closed", i): (False, True)}
    raise AssertionError(k)


def _write(v: VehicleState, row: dict[FieldKey, tuple[Any, Any]], column: int) -> VehicleState:
    changes: dict[str, Any] = {}
    for key, values in row.items():
        if isinstance(key, tuple):
            name, i = key
            seq = list(changes.get(name, getattr(v, name)))
            seq[i] = values[column]
            changes[name] = tuple(seq)
        else:
            changes[key] = values[column]
    return replace(v, **changes)


def inject_fault(v: VehicleState, f: FaultInjection) -> VehicleState:
    return _write(v, symptom_row(f), 0)


def clear_fault(v: VehicleState, f: FaultInjection) -> VehicleState:
    return _write(v, symptom_row(f), 1)


def read_snapshot(v: VehicleState, scope: Scope) -> InternalSnapshot | ExternalSnapshot:
    """Project the vehicle onto the sensors of one check agent.

    ``scope`` picks the snapshot type; ``Scope.FULL`` is not a sensor set and
    is rejected.
    """
    if v.sensor_failure:
        raise SensorFailure(f"sensor read failed on vehicle {v.vehicle_id}")
    if scope is Scope.INTERNAL_ONLY:
        fuel = v.fuel_fraction > 0
        turns_over = v.battery_ok and v.starter_ok
        return InternalSnapshot(
            engine_starts=turns_over and fuel and v.spark_plugs_ok,
            engine_turns_over=turns_over,
            engine_getting_petrol=fuel,
            lights_come_on=v.battery_ok,
            fuel_in_tank=fuel,
            alarm_bell_ringing=v.alarm_triggered,
        )
    if scope is Scope.EXTERNAL_ONLY:
        return ExternalSnapshot(
            speed_kmh=v.speed_kmh,
            commanded_direction=v.commanded_direction,
            actual_motion=v.actual_motion,
            oil_leak_detected=v.oil_leak,
            oil_level_fraction=v.oil_level_fraction,
            tyre_pressure_kpa=v.tyre_pressure_kpa,
            doors_closed=v.doors_closed,
        )
    raise ValueError("read_snapshot needs InternalOnly or ExternalOnly scope")
