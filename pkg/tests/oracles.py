"""Independent oracles used by the tests.

Nothing here imports the rule engine or the Watcher; each oracle is written
from the protocol/rule definitions directly, as lookup tables.
"""
from __future__ import annotations

import itertools
import random

from vca.bus import AgentId, Message, MessageKind

# -- internal rules as a truth table -------------------------------------------

# (engine_starts, engine_turns_over, engine_getting_petrol, lights_come_on) -> engine fault
ENGINE_TABLE = {
    (False, True, True, True): "SparkPlugs",
    (False, True, True, False): "SparkPlugs",
    (False, True, False, True): None,
    (False, True, False, False): None,
    (False, False, True, True): "Starter",
    (False, False, False, True): "Starter",
    (False, False, True, False): "Battery",
    (False, False, False, False): "Battery",
}


def internal_truth_table(starts, turns_over, petrol, lights, fuel, bell) -> set[str]:
    out = set()
    if not starts:
        fault = ENGINE_TABLE[(starts, turns_over, petrol, lights)]
        if fault:
            out.add(fault)
    if fuel is False:
        out.add("PetrolFinished")
    if bell is True:
        out.add("VehicleStolen")
    return out


def valid_internal_rows():
    """Every six-bool combination that respects the tank/petrol coupling."""
    for row in itertools.product((False, True), repeat=6):
        starts, turns_over, petrol, lights, fuel, bell = row
        if petrol and not fuel:
            continue
        yield row


# -- session protocol as a transition table --------------------------------------

OK, ORDER, CONFLICT, FATAL = "Ok", "Warning(OrderingViolation)", "Warning(Conflict)", "Fatal"

# Abstract input symbols.  D_x = Dispatch to x, DR_x = DiagnosisResult from x,
# SR_x = SensorReply from x; x in I (Internal), E (External), X (anyone else).
SYMBOLS = (
    "CR", "D_I", "D_E", "D_X", "DR_I", "DR_E", "DR_X", "SR_I", "SR_E", "SR_X",
    "RR", "RR_inc", "RD", "FE", "GREET", "PROFILE", "WARN",
)

_ACTIVE_ROW = {
    "D_I": (CONFLICT, None), "D_E": (CONFLICT, None), "D_X": (CONFLICT, None),
    "DR_X": (CONFLICT, None), "SR_X": (CONFLICT, None),
}
TABLE: dict[str, dict[str, tuple[str, str | None]]] = {
    "Idle": {"CR": (OK, "Requested")},
    "Requested": {
        "D_I": (OK, "InternalActive"),
        "D_E": (OK, "ExternalActive"),
        "RR_inc": (OK, "Reporting"),
    },
    "InternalActive": {
        **_ACTIVE_ROW,
        "DR_I": (OK, "Collected"), "DR_E": (CONFLICT, None),
        "SR_I": (OK, None), "SR_E": (CONFLICT, None),
    },
    "ExternalActive": {
        **_ACTIVE_ROW,
        "DR_E": (OK, "Collected"), "DR_I": (CONFLICT, None),
        "SR_E": (OK, None), "SR_I": (CONFLICT, None),
    },
    "Collected": {
        "D_I": (OK, "InternalActive"),
        "D_E": (OK, "ExternalActive"),
        "RR": (OK, "Reporting"),
        "RR_inc": (OK, "Reporting"),
    },
    "Reporting": {"RD": (OK, "Idle")},
}
NEUTRAL_SYMBOLS = {"GREET", "PROFILE", "WARN"}
ACTIVE_OF = {"InternalActive": "Internal", "ExternalActive": "External"}


class ReferenceFsm:
    """Reference session protocol, with fatal recovery applied immediately."""

    def __init__(self) -> None:
        self.state = "Idle"
        self.stack: list[str] = []
        self.terminated: list[str] = []

    def feed(self, symbol: str) -> str:
        if symbol in NEUTRAL_SYMBOLS:
            return OK
        if symbol == "FE":
            victim = ACTIVE_OF.get(self.state)
            if victim:
                self.terminated.append(victim)
            if self.stack:
                self.state = self.stack.pop()
            return FATAL
        verdict, nxt = TABLE[self.state].get(symbol, (ORDER, None))
        if nxt is not None:
            self.stack.append(self.state)
            self.state = nxt
        return verdict


def symbol_message(symbol: str, seq: int, session: str = "s") -> Message:
    A, K = AgentId, MessageKind
    M, I, E, R, U, W = A.MANAGEMENT, A.INTERNAL, A.EXTERNAL, A.REPORT, A.USER, A.WATCHER
    parts = {
        "CR": (U, M, K.CHECK_REQUEST, {}),
        "D_I": (M, I, K.DISPATCH, {}),
        "D_E": (M, E, K.DISPATCH, {}),
        "D_X": (M, R, K.DISPATCH, {}),
        "DR_I": (I, M, K.DIAGNOSIS_RESULT, {}),
        "DR_E": (E, M, K.DIAGNOSIS_RESULT, {}),
        "DR_X": (R, M, K.DIAGNOSIS_RESULT, {}),
        "SR_I": (I, M, K.SENSOR_REPLY, {}),
        "SR_E": (E, M, K.SENSOR_REPLY, {}),
        "SR_X": (U, M, K.SENSOR_REPLY, {}),
        "RR": (M, R, K.REPORT_REQUEST, {}),
        "RR_inc": (M, R, K.REPORT_REQUEST, {"incomplete": True}),
        "RD": (R, U, K.REPORT_DELIVERED, {}),
        "FE": (I, M, K.FATAL_ERROR, {}),
        "GREET": (M, U, K.GREETING, {}),
        "PROFILE": (U, M, K.PROFILE_STORE, {}),
        "WARN": (W, M, K.WARNING, {}),
    }[symbol]
    sender, receiver, kind, payload = parts
    return Message(seq, session, sender, receiver, kind, dict(payload))


def random_sequence(rng: random.Random, max_len: int = 20) -> list[str]:
    """A random word, biased toward protocol-legal prefixes so deep states get visited."""
    n = rng.randint(0, max_len)
    word = []
    shadow = ReferenceFsm()
    for _ in range(n):
        legal = [s for s in TABLE[shadow.state] if TABLE[shadow.state][s][0] == OK]
        if legal and rng.random() < 0.6:
            sym = rng.choice(legal)
        else:
            sym = rng.choice(SYMBOLS)
        shadow.feed(sym)
        word.append(sym)
    return word


def legal_word(word: list[str]) -> bool:
    """True iff the word drives the table FSM without any non-Ok verdict."""
    fsm = ReferenceFsm()
    return all(fsm.feed(s) == OK for s in word)


# -- vehicle-sim field algebra ------------------------------------------------------

def apply_rows(healthy: dict, rows: list[tuple[str, dict]]) -> dict:
    """Replay inject/clear rows on a flat field dict; latest write wins per field."""
    state = dict(healthy)
    for op, row in rows:
        for key, (faulty, good) in row.items():
            state[key] = faulty if op == "inject" else good
    return state
