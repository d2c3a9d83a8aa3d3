"""Command-line front end.

Batch use::

    vca --store ./vca-store vehicle-add v1
    vca fault-inject v1 DeadBattery
    vca check v1 full
    vca history v1

``vca script FILE`` runs a file of the same commands (one per line), or a
JSON fault script.  ``vca repl`` reads commands interactively.

Exit codes: 0 success, 1 user error, 2 internal error.
"""
from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO, Union

from .agents import GREETING_TEXT, ProfileStore, UserProfile
from .history import PROFILES_FILE, HistoryError, HistoryStore
from .rules import RuleConfig
from .system import DuplicateVehicle, LogicalClock, UnknownVehicle, VcaSystem
from .vehicle import FaultInjection, Scope, VehicleState

VEHICLES_FILE = "vehicles.json"
MAX_SCRIPT_DEPTH = 8

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2

COMMAND_HELP = """\
commands:
  vehicle-add <vehicle>
  fault-inject <vehicle> <fault> [position]
  fault-clear <vehicle> <fault> [position]
  check <vehicle> internal|external|full
  history <vehicle>
  profile-set <user> [name=<name>] [vehicles=<v1,v2>] [<key>=<value> ...]
  script <path> [vehicle]
  help
faults: DeadBattery BadStarter FouledSparkPlugs EmptyTank Theft OilLeak
        UnderinflatedTyre <pos> OpenDoor <pos> Overspeed DirectionMismatch
        SensorFailure          (positions: FL FR RL RR)
"""


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleAdd:
    vehicle: str


@dataclass(frozen=True)
class FaultInject:
    vehicle: str
    fault: FaultInjection


@dataclass(frozen=True)
class FaultClear:
    vehicle: str
    fault: FaultInjection


@dataclass(frozen=True)
class Check:
    vehicle: str
    scope: Scope


@dataclass(frozen=True)
class History:
    vehicle: str


@dataclass(frozen=True)
class ProfileSet:
    user: str
    fields: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Script:
    path: str
    vehicle: str | None = None


@dataclass(frozen=True)
class Help:
    pass


Command = Union[VehicleAdd, FaultInject, FaultClear, Check, History, ProfileSet, Script, Help]


def _fault(args: list[str]) -> FaultInjection:
    try:
        return FaultInjection.parse(args[0], args[1] if len(args) > 1 else None)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def parse_command(tokens: list[str]) -> Command:
    if not tokens:
        raise ParseError("empty command")
    name, args = tokens[0], tokens[1:]

    def arity(lo: int, hi: int) -> None:
        if not lo <= len(args) <= hi:
            raise ParseError(f"{name}: wrong number of arguments (see 'help')")

    if name == "vehicle-add":
        arity(1, 1)
        return VehicleAdd(args[0])
    if name in ("fault-inject", "fault-clear"):
        arity(2, 3)
        cls = FaultInject if name == "fault-inject" else FaultClear
        return cls(args[0], _fault(args[1:]))
    if name == "check":
        arity(2, 2)
        try:
            return Check(args[0], Scope.parse(args[1]))
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    if name == "history":
        arity(1, 1)
        return History(args[0])
    if name == "profile-set":
        if not args:
            raise ParseError("profile-set: missing user")
        pairs = []
        for a in args[1:]:
            key, sep, value = a.partition("=")
            if not sep or not key:
                raise ParseError(f"profile-set: expected key=value, got {a!r}")
            pairs.append((key, value))
        return ProfileSet(args[0], tuple(pairs))
    if name == "script":
        arity(1, 2)
        return Script(args[0], args[1] if len(args) > 1 else None)
    if name == "help":
        arity(0, 0)
        return Help()
    raise ParseError(f"unknown command {name!r}")


def parse_line(line: str) -> Command | None:
    """Parse one REPL/script line; blank lines and ``#`` comments give None."""
    try:
        tokens = shlex.split(line, comments=True)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return parse_command(tokens) if tokens else None


# -- world -------------------------------------------------------------------


@dataclass
class World:
    store_dir: Path
    system: VcaSystem
    user: str = "user"
    verbose: bool = False
    script_depth: int = 0

    @classmethod
    def open(
        cls,
        store_dir: str | os.PathLike[str],
        cfg: RuleConfig | None = None,
        seed: int = 0,
        epoch_ms: int = 0,
        user: str = "user",
        verbose: bool = False,
    ) -> World:
        store_dir = Path(store_dir)
        store_dir.mkdir(parents=True, exist_ok=True)
        history = HistoryStore(store_dir)
        done = len(history)
        system = VcaSystem(
            cfg=cfg,
            history=history,
            profiles=ProfileStore(store_dir / PROFILES_FILE),
            clock=LogicalClock(epoch_ms + 1000 * done),
            seed=seed,
            first_session_index=done,
        )
        vpath = store_dir / VEHICLES_FILE
        if vpath.exists():
            data = json.loads(vpath.read_text(encoding="utf-8"))
            for vid, state in data.items():
                system.vehicles[vid] = VehicleState.from_dict(state)
        return cls(store_dir, system, user, verbose)

    def save_vehicles(self) -> None:
        data = {vid: v.to_dict() for vid, v in sorted(self.system.vehicles.items())}
        path = self.store_dir / VEHICLES_FILE
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)


def _format_history(world: World, vehicle: str) -> str:
    sessions = world.system.history.load(vehicle) if world.system.history else []
    out = [f"history for {vehicle}: {len(sessions)} session(s)"]
    for s in sessions:
        out.append(f"-- {s.session_id} timestamp={s.timestamp} scope={s.scope.value}")
        out.append(s.report_text.rstrip("\n"))
    return "\n".join(out) + "\n"


def _run(cmd: Command, world: World) -> str:
    system = world.system
    if isinstance(cmd, Help):
        return GREETING_TEXT + "\n" + COMMAND_HELP
    if isinstance(cmd, VehicleAdd):
        system.add_vehicle(cmd.vehicle)
        world.save_vehicles()
        return f"added vehicle {cmd.vehicle}\n"
    if isinstance(cmd, FaultInject):
        system.inject(cmd.vehicle, cmd.fault)
        world.save_vehicles()
        return f"injected {cmd.fault} into {cmd.vehicle}\n"
    if isinstance(cmd, FaultClear):
        system.clear(cmd.vehicle, cmd.fault)
        world.save_vehicles()
        return f"cleared {cmd.fault} on {cmd.vehicle}\n"
    if isinstance(cmd, Check):
        result = system.check(cmd.vehicle, cmd.scope, world.user)
        text = ""
        if result.greeting:
            text += result.greeting + "\n"
        text += result.report_text
        if world.verbose:
            text += "".join(f"watcher: {w}\n" for w in result.warnings)
        return text
    if isinstance(cmd, History):
        system.vehicle(cmd.vehicle)
        return _format_history(world, cmd.vehicle)
    if isinstance(cmd, ProfileSet):
        existing = system.profiles.get(cmd.user)
        profile = UserProfile.from_dict(existing.to_dict()) if existing else UserProfile(cmd.user, cmd.user)
        for key, value in cmd.fields:
            if key == "name":
                profile.name = value
            elif key == "vehicles":
                profile.vehicle_ids = [v for v in value.split(",") if v]
            else:
                profile.preferences[key] = value
        system.set_profile(profile)
        return f"stored profile {cmd.user}\n"
    if isinstance(cmd, Script):
        return _run_script(cmd, world)
    raise AssertionError(cmd)


class ScriptFailed(Exception):
    def __init__(self, code: int, text: str) -> None:
        super().__init__(text)
        self.code = code
        self.text = text


def _fault_script_commands(data: object, vehicle: str | None) -> list[Command]:
    if not isinstance(data, list):
        raise ParseError("fault script must be a JSON array")
    cmds: list[Command] = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict) or entry.get("cmd") not in ("inject", "clear"):
            raise ParseError(f"fault script entry {i}: expected {{\"cmd\": \"inject\"|\"clear\", ...}}")
        target = entry.get("vehicle", vehicle)
        if target is None:
            raise ParseError(f"fault script entry {i}: no vehicle given")
        if "fault" not in entry:
            raise ParseError(f"fault script entry {i}: missing fault")
        try:
            f = FaultInjection.parse(str(entry["fault"]), entry.get("position"))
        except ValueError as exc:
            raise ParseError(f"fault script entry {i}: {exc}") from None
        cmds.append(FaultInject(target, f) if entry["cmd"] == "inject" else FaultClear(target, f))
    return cmds


def _run_script(cmd: Script, world: World) -> str:
    if world.script_depth >= MAX_SCRIPT_DEPTH:
        raise ParseError("scripts nested too deeply")
    try:
        text = Path(cmd.path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read script {cmd.path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except ValueError:
        data = None
    if data is not None:
        commands = list(_fault_script_commands(data, cmd.vehicle))
        where = [f"entry {i}" for i in range(len(commands))]
    else:
        commands, where = [], []
        for n, line in enumerate(text.splitlines(), 1):
            try:
                parsed = parse_line(line)
            except ParseError as exc:
                raise ParseError(f"{cmd.path}:{n}: {exc}") from None
            if parsed is not None:
                commands.append(parsed)
                where.append(f"{cmd.path}:{n}")
    out = []
    world.script_depth += 1
    try:
        for loc, sub in zip(where, commands):
            code, text = dispatch_command(sub, world)
            out.append(text)
            if code != EXIT_OK:
                raise ScriptFailed(code, "".join(out) + f"script stopped at {loc}\n")
    finally:
        world.script_depth -= 1
    return "".join(out)


def dispatch_command(cmd: Command, world: World) -> tuple[int, str]:
    """Run one command; returns (exit code, output text)."""
    try:
        return EXIT_OK, _run(cmd, world)
    except ScriptFailed as exc:
        return exc.code, exc.text
    except UnknownVehicle as exc:
        return EXIT_USER, f"error: {exc}\n"
    except (DuplicateVehicle, ParseError) as exc:
        return EXIT_USER, f"error: {exc}\n"
    except (HistoryError, OSError) as exc:
        return EXIT_INTERNAL, f"internal error: {exc}\n"


def greet_if_new(world: World) -> str:
    """Operating-procedure greeting, shown once per user profile."""
    profiles = world.system.profiles
    profile = profiles.get(world.user)
    if profile is not None and profile.preferences.get("greeted") == "yes":
        return ""
    if profile is None:
        profile = UserProfile(world.user, world.user)
    profile.preferences["greeted"] = "yes"
    profiles.upsert(profile)
    return GREETING_TEXT + "\n"


def repl(world: World, stdin: TextIO, stdout: TextIO, prompt: bool = True) -> int:
    stdout.write(greet_if_new(world))
    while True:
        if prompt:
            stdout.write("vca> ")
            stdout.flush()
        line = stdin.readline()
        if not line:
            break
        if line.strip() in ("quit", "exit"):
            break
        try:
            cmd = parse_line(line)
        except ParseError as exc:
            stdout.write(f"error: {exc}\n")
            continue
        if cmd is None:
            continue
        _, text = dispatch_command(cmd, world)
        stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vca",
        description="Multi-agent vehicle checking on simulated vehicles.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=COMMAND_HELP + "  repl    interactive prompt\n",
    )
    p.add_argument("--store", default="./vca-store", help="store directory (default ./vca-store)")
    p.add_argument("--seed", type=int, default=0, help="seed for session ids (default 0)")
    p.add_argument("--epoch-ms", type=int, default=0, help="logical clock start in ms (default 0)")
    p.add_argument("--user", default="user", help="user id for checks (default 'user')")
    p.add_argument("--speed-limit", type=float, default=RuleConfig.speed_limit_kmh)
    p.add_argument("--min-tyre-kpa", type=float, default=RuleConfig.min_tyre_kpa)
    p.add_argument("--min-oil-fraction", type=float, default=RuleConfig.min_oil_fraction)
    p.add_argument("--transcript", help="write the bus transcript (JSONL) here on exit")
    p.add_argument("--verbose", "-v", action="store_true", help="show watcher warnings")
    p.add_argument("command", nargs=argparse.REMAINDER, help="command and its arguments")
    return p


def main(argv: Iterable[str] | None = None, stdout: TextIO | None = None,
         stdin: TextIO | None = None) -> int:
    stdout = stdout or sys.stdout
    stdin = stdin or sys.stdin
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    if args.seed < 0:
        stdout.write("error: --seed must be non-negative\n")
        return EXIT_USER
    try:
        cfg = RuleConfig(args.speed_limit, args.min_tyre_kpa, args.min_oil_fraction)
    except ValueError as exc:
        stdout.write(f"error: {exc}\n")
        return EXIT_USER
    try:
        world = World.open(args.store, cfg, args.seed, args.epoch_ms, args.user, args.verbose)
    except (HistoryError, OSError, ValueError) as exc:
        stdout.write(f"internal error: {exc}\n")
        return EXIT_INTERNAL

    tokens = args.command
    if not tokens or tokens == ["repl"]:
        code = repl(world, stdin, stdout, prompt=stdin.isatty())
    else:
        try:
            cmd = parse_command(tokens)
        except ParseError as exc:
            stdout.write(f"error: {exc}\n")
            return EXIT_USER
        code, text = dispatch_command(cmd, world)
        stdout.write(text)
    if args.transcript:
        with open(args.transcript, "w", encoding="utf-8") as fh:
            world.system.bus.export_transcript(fh)
    return code


if __name__ == "__main__":
    sys.exit(main())
