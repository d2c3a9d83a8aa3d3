"""Exit criteria.  Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import io
import random
from pathlib import Path

import pytest

from oracles import ReferenceFsm, internal_truth_table, random_sequence, symbol_message, valid_internal_rows
from vca.agents import SessionFsmState, Watcher, external_handle
from vca.bus import AgentId, AgentStatus, Message, MessageKind
from vca.cli import main
from vca.history import CheckSession, HistoryStore, append_session, load_history, verify_replay
from vca.report import report_render
from vca.rules import InternalSnapshot, evaluate_external_rules, evaluate_internal_rules
from vca.system import VcaSystem, build_registry
from vca.vehicle import (
    EXPECTED_FAULT,
    FaultInjection,
    InjectionKind,
    Position,
    Scope,
    inject_fault,
    new_vehicle,
    read_snapshot,
    scope_for,
)

DEMO = Path(__file__).resolve().parent.parent / "scripts" / "demo.vca"


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def test_1_internal_rule_golden_suite(verdict):
    cases = [
        ((False, True, True, True, True, False), ["SparkPlugs"]),
        ((False, False, True, False, True, False), ["Battery"]),
        ((False, False, True, True, True, False), ["Starter"]),
        ((False, True, False, True, False, False), ["PetrolFinished"]),
        ((True, True, True, True, True, True), ["VehicleStolen"]),
    ]
    passed = sum(
        [d.fault.value for d in evaluate_internal_rules(InternalSnapshot(*row))] == want
        for row, want in cases
    )
    verdict(1, passed == 5, f"internal rule golden pairs {passed}/5")


def test_2_exhaustive_truth_table(verdict):
    rows = list(valid_internal_rows())
    mismatches = sum(
        {d.fault.value for d in evaluate_internal_rules(InternalSnapshot(*row))} != internal_truth_table(*row)
        for row in rows
    )
    verdict(2, mismatches == 0 and len(rows) == 48, f"{len(rows)} valid snapshots, {mismatches} mismatches")


def test_3_round_trip_fault_soundness(verdict):
    hits = 0
    kinds = [k for k in InjectionKind if k is not InjectionKind.SENSOR_FAILURE]
    for kind in kinds:
        f = FaultInjection(kind, Position.FL if kind.positional else None)
        system = VcaSystem()
        system.add_vehicle("v")
        system.inject("v", f)
        result = system.check("v", scope_for(f))
        expected = EXPECTED_FAULT[kind].value + (f"({f.position.value})" if f.position else "")
        hits += f"] {expected}:" in result.report_text
    verdict(3, hits == len(kinds) == 10, f"mapped fault reported {hits}/{len(kinds)}")


def test_4_fsm_conformance_fuzzing(verdict):
    rng = random.Random(20240501)
    n, agree = 10_000, 0
    for _ in range(n):
        word = random_sequence(rng, max_len=20)
        w = Watcher(build_registry())
        ref = ReferenceFsm()
        same = True
        for seq, sym in enumerate(word):
            v = w.observe(symbol_message(sym, seq))
            if v.is_fatal:
                w.recover("s")
            if str(v) != ref.feed(sym):
                same = False
        agree += same and w.state_of("s").value == ref.state
    verdict(4, agree == n, f"watcher matches reference on {agree}/{n} sequences")


def _fatal_case_system(scope: Scope) -> tuple[bool, str]:
    system = VcaSystem()
    system.add_vehicle("v")
    system.inject("v", FaultInjection(InjectionKind.SENSOR_FAILURE))
    result = system.check("v", scope)
    sid = result.session.session_id
    victim = AgentId.INTERNAL if scope is Scope.INTERNAL_ONLY else AgentId.EXTERNAL
    # replay the taps through a fresh watcher to find the state entered before the fatal step
    shadow = Watcher(build_registry())
    predecessor = None
    fatal_seen = False
    for d in system.bus.transcript:
        if not d.tap or d.message.session != sid:
            continue
        if d.message.kind is MessageKind.FATAL_ERROR:
            predecessor = shadow.sessions[sid].checkpoints[-1]
            fatal_seen = shadow.observe(d.message).is_fatal
            break
        shadow.observe(d.message)
    notice = next(d.message for d in system.bus.transcript
                  if not d.tap and d.message.kind is MessageKind.WARNING and d.message.session == sid)
    ok = (
        fatal_seen
        and predecessor is SessionFsmState.REQUESTED
        and notice.payload["restored_state"] == predecessor.value
        and system.registry[victim].status is AgentStatus.TERMINATED
        and result.session.incomplete
    )
    return ok, f"{victim.value}Active -> {notice.payload['restored_state']}"


def _fatal_after_collected() -> tuple[bool, str]:
    # Full scope, internal check finished, external sensors fail
    reg = build_registry()
    w = Watcher(reg)
    M, I, E, U = AgentId.MANAGEMENT, AgentId.INTERNAL, AgentId.EXTERNAL, AgentId.USER
    K = MessageKind
    w.observe(Message(0, "s", U, M, K.CHECK_REQUEST, {}))
    w.observe(Message(1, "s", M, I, K.DISPATCH, {}))
    w.observe(Message(2, "s", I, M, K.DIAGNOSIS_RESULT, {}))
    dispatch = Message(3, "s", M, E, K.DISPATCH, {"vehicle_id": "v"})
    w.observe(dispatch)
    broken = inject_fault(new_vehicle("v"), FaultInjection(InjectionKind.SENSOR_FAILURE))
    out = external_handle(dispatch, broken)
    fatal = Message(4, out.session, out.sender, out.receiver, out.kind, out.payload)
    ok = w.observe(fatal).is_fatal
    w.recover("s")
    ok = ok and w.state_of("s") is SessionFsmState.COLLECTED and reg[E].status is AgentStatus.TERMINATED
    return ok, f"ExternalActive -> {w.state_of('s').value}"


def test_5_fatal_recovery(verdict):
    cases = [_fatal_case_system(Scope.INTERNAL_ONLY), _fatal_case_system(Scope.EXTERNAL_ONLY),
             _fatal_after_collected()]
    ok = all(c[0] for c in cases)
    verdict(5, ok, "; ".join(f"{d} {'ok' if c else 'BAD'}" for c, d in cases))


def test_6_persistence_round_trip(tmp_path, verdict):
    rng = random.Random(6)
    store = HistoryStore(tmp_path)
    written = []
    prefix_ok = True
    prefix = b""
    for i in range(100):
        v = new_vehicle(f"v{i % 7}")
        for _ in range(rng.randint(0, 3)):
            kind = rng.choice([k for k in InjectionKind if k is not InjectionKind.SENSOR_FAILURE])
            v = inject_fault(v, FaultInjection(kind, rng.choice(list(Position)) if kind.positional else None))
        snaps = [read_snapshot(v, Scope.INTERNAL_ONLY), read_snapshot(v, Scope.EXTERNAL_ONLY)]
        diagnoses = evaluate_internal_rules(snaps[0]) + evaluate_external_rules(snaps[1])
        sid = f"S{i:04d}"
        s = CheckSession(sid, v.vehicle_id, 1000 * i, Scope.FULL, snaps, diagnoses,
                         report_render(diagnoses, v.vehicle_id, sid).text, [(i, "Ok")])
        append_session(store, s)
        written.append(s)
        data = store.path.read_bytes()
        prefix_ok = prefix_ok and data.startswith(prefix)
        prefix = data
    loaded = HistoryStore(tmp_path).load_all()
    per_vehicle_ok = all(
        load_history(store, f"v{k}") == [s for s in written if s.vehicle_id == f"v{k}"] for k in range(7)
    )
    ok = loaded == written and per_vehicle_ok and bool(verify_replay(loaded)) and prefix_ok
    verdict(6, ok, f"{len(loaded)}/100 sessions equal, replay {'ok' if verify_replay(loaded) else 'BAD'}, "
                   f"prefix stable {prefix_ok}")


def _demo_run(store: Path) -> tuple[str, bytes]:
    out = io.StringIO()
    code = main(["--store", str(store), "--seed", "42", "script", str(DEMO)], stdout=out, stdin=io.StringIO())
    assert code == 0, out.getvalue()
    return out.getvalue(), (store / "history.jsonl").read_bytes()


def test_7_end_to_end_determinism(tmp_path, verdict):
    out_a, hist_a = _demo_run(tmp_path / "a")
    out_b, hist_b = _demo_run(tmp_path / "b")
    ok = out_a == out_b and hist_a == hist_b and "SUMMARY: 3 fault(s)" in out_a and "history for" in out_a
    verdict(7, ok, f"stdout {len(out_a)} bytes identical={out_a == out_b}, "
                   f"history {len(hist_a)} bytes identical={hist_a == hist_b}")
