import io
import json
import random
import threading

import pytest
from hypothesis import given, strategies as st

from vca.bus import (
    ActivationTracker,
    AgentId,
    AgentStatus,
    Bus,
    DuplicateAgent,
    EmptyQueue,
    Message,
    MessageKind,
    Outbound,
    TerminatedRecipient,
    UnknownAgent,
    register_agent,
)
from vca.system import build_registry


def out(sender, receiver, kind=MessageKind.CHECK_REQUEST, session="s1", **payload):
    return Outbound(session, sender, receiver, kind, payload)


def test_register_agent():
    reg = register_agent({}, AgentId.INTERNAL, "internal checks")
    assert reg[AgentId.INTERNAL].status is AgentStatus.REGISTERED
    with pytest.raises(DuplicateAgent):
        register_agent(reg, AgentId.INTERNAL, "again")


@given(st.permutations(list(AgentId)))
def test_registering_all_ids_in_any_order(order):
    reg = {}
    for a in order:
        register_agent(reg, a, a.value)
    assert len(reg) == 6


def test_send_enqueues_tap_then_primary():
    bus = Bus(build_registry())
    ack = bus.send(out(AgentId.USER, AgentId.MANAGEMENT))
    assert ack.seq == 0
    assert len(bus) == 2
    tap, primary = bus.deliver_next(), bus.deliver_next()
    assert tap.tap and tap.recipient is AgentId.WATCHER
    assert not primary.tap and primary.recipient is AgentId.MANAGEMENT
    assert tap.message == primary.message == ack


def test_send_to_unknown_agent():
    bus = Bus(register_agent({}, AgentId.USER, "u"))
    with pytest.raises(UnknownAgent):
        bus.send(out(AgentId.USER, AgentId.MANAGEMENT))


def test_send_to_terminated_agent():
    reg = build_registry()
    reg[AgentId.INTERNAL].status = AgentStatus.TERMINATED
    with pytest.raises(TerminatedRecipient):
        Bus(reg).send(out(AgentId.MANAGEMENT, AgentId.INTERNAL, MessageKind.DISPATCH))


def test_seq_increments_by_one():
    bus = Bus(build_registry())
    a = bus.send(out(AgentId.USER, AgentId.MANAGEMENT))
    b = bus.send(out(AgentId.USER, AgentId.MANAGEMENT))
    assert b.seq - a.seq == 1


def test_fifo_with_taps():
    bus = Bus(build_registry())
    m1 = bus.send(out(AgentId.USER, AgentId.MANAGEMENT))
    m2 = bus.send(out(AgentId.MANAGEMENT, AgentId.INTERNAL, MessageKind.DISPATCH))
    got = [(d.message.seq, d.recipient, d.tap) for d in (bus.deliver_next() for _ in range(4))]
    assert got == [
        (m1.seq, AgentId.WATCHER, True), (m1.seq, AgentId.MANAGEMENT, False),
        (m2.seq, AgentId.WATCHER, True), (m2.seq, AgentId.INTERNAL, False),
    ]


def test_empty_bus():
    with pytest.raises(EmptyQueue):
        Bus(build_registry()).deliver_next()


def test_no_tap_for_watcher_addressed_message():
    bus = Bus(build_registry())
    bus.send(out(AgentId.MANAGEMENT, AgentId.WATCHER, MessageKind.WARNING))
    assert len(bus) == 1


def test_in_flight_delivery_to_terminated_agent_is_dropped():
    reg = build_registry()
    dropped = []
    bus = Bus(reg, on_drop=dropped.append)
    m = bus.send(out(AgentId.MANAGEMENT, AgentId.INTERNAL, MessageKind.DISPATCH))
    reg[AgentId.INTERNAL].status = AgentStatus.TERMINATED
    assert bus.deliver_next().tap
    with pytest.raises(EmptyQueue):
        bus.deliver_next()
    assert [d.message for d in dropped] == [m]


def _script(seed):
    rng = random.Random(seed)
    agents = [a for a in AgentId if a is not AgentId.WATCHER]
    return [
        out(rng.choice(agents), rng.choice(agents), rng.choice(list(MessageKind)),
            session=f"s{rng.randint(0, 3)}", n=rng.randint(0, 9))
        for _ in range(50)
    ]


def _transcript(script):
    bus = Bus(build_registry())
    lines = []
    for o in script:
        bus.send(o)
        if len(bus) > 3:
            d = bus.deliver_next()
            lines.append(f"{d.recipient.value} {d.tap} {d.message.to_json()}")
    while len(bus):
        d = bus.deliver_next()
        lines.append(f"{d.recipient.value} {d.tap} {d.message.to_json()}")
    return "\n".join(lines).encode()


@pytest.mark.parametrize("seed", range(5))
def test_replay_gives_identical_transcript(seed):
    assert _transcript(_script(seed)) == _transcript(_script(seed))


@given(st.integers(min_value=0, max_value=10_000))
def test_transcript_invariants(seed):
    bus = Bus(build_registry())
    sent = set()
    for o in _script(seed):
        sent.add(bus.send(o).seq)
    seen_tap = set()
    last_primary = -1
    for _ in range(len(bus)):
        d = bus.deliver_next()
        assert d.message.seq in sent
        if d.tap:
            seen_tap.add(d.message.seq)
        else:
            assert d.message.seq in seen_tap
            assert d.message.seq > last_primary
            last_primary = d.message.seq


def test_export_transcript_jsonl():
    bus = Bus(build_registry())
    bus.send(out(AgentId.USER, AgentId.MANAGEMENT, vehicle_id="v1"))
    bus.deliver_next(), bus.deliver_next()
    fh = io.StringIO()
    bus.export_transcript(fh)
    lines = fh.getvalue().splitlines()
    assert len(lines) == 1
    rec = json.loads(lines[0])
    assert set(rec) == {"seq", "session", "from", "to", "kind", "payload"}
    assert Message.from_dict(rec) == bus.transcript[1].message


def test_concurrent_senders_get_unique_seqs():
    bus = Bus(build_registry())
    acks = []

    def worker():
        for _ in range(200):
            acks.append(bus.send(out(AgentId.USER, AgentId.MANAGEMENT)).seq)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(acks) == list(range(800))
    assert len(bus) == 1600


def test_current_activation():
    t = ActivationTracker()
    assert t.current_activation("s") is None
    t.observe(Message(0, "s", AgentId.MANAGEMENT, AgentId.INTERNAL, MessageKind.DISPATCH))
    assert t.current_activation("s") is AgentId.INTERNAL
    t.observe(Message(1, "s", AgentId.INTERNAL, AgentId.MANAGEMENT, MessageKind.DIAGNOSIS_RESULT))
    assert t.current_activation("s") is None
