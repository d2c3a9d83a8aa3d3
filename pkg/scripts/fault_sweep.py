"""Inject random fault combinations and tally what each check reports.

Prints one row per injection kind: how often it was injected and how often
its mapped fault showed up in the report of a check whose scope covers it.
Faults masked by another injected fault (e.g. a dead battery hides a bad
starter) lower the hit rate; that is expected.
"""
from __future__ import annotations

import argparse
import random
import sys
from collections import Counter

from vca.system import VcaSystem
from vca.vehicle import EXPECTED_FAULT, FaultInjection, InjectionKind, Position, Scope, scope_for


def sweep(trials: int, seed: int, max_faults: int) -> tuple[Counter, Counter]:
    rng = random.Random(seed)
    injected: Counter = Counter()
    reported: Counter = Counter()
    kinds = [k for k in InjectionKind if k is not InjectionKind.SENSOR_FAILURE]
    for t in range(trials):
        system = VcaSystem(seed=seed)
        system.add_vehicle(f"v{t}")
        faults = []
        for kind in rng.sample(kinds, rng.randint(1, max_faults)):
            f = FaultInjection(kind, rng.choice(list(Position)) if kind.positional else None)
            system.inject(f"v{t}", f)
            faults.append(f)
        report = system.check(f"v{t}", Scope.FULL).report_text
        for f in faults:
            injected[f.kind] += 1
            label = EXPECTED_FAULT[f.kind].value + (f"({f.position.value})" if f.position else "")
            reported[f.kind] += f"] {label}:" in report
    return injected, reported


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-faults", type=int, default=3)
    args = ap.parse_args(argv)
    injected, reported = sweep(args.trials, args.seed, args.max_faults)
    print(f"{'injection':<20} {'scope':<13} {'injected':>8} {'reported':>8} {'rate':>6}")
    for kind in sorted(injected, key=lambda k: k.value):
        f = FaultInjection(kind, Position.FL if kind.positional else None)
        n, hit = injected[kind], reported[kind]
        print(f"{kind.value:<20} {scope_for(f).value:<13} {n:>8} {hit:>8} {hit / n:>6.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
