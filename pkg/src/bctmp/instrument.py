"""Process-wide call counters used to prove the online lookup does no geometry work."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, fields

_lock = threading.Lock()


@dataclass
class Counters:
    collision_checks: int = 0
    plan_calls: int = 0
    rollouts: int = 0
    distance_evals: int = 0

    def snapshot(self) -> "Counters":
        return Counters(**{f.name: getattr(self, f.name) for f in fields(self)})

    def __sub__(self, other: "Counters") -> "Counters":
        return Counters(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})


COUNTERS = Counters()


def bump(name: str, amount: int = 1) -> None:
    with _lock:
        setattr(COUNTERS, name, getattr(COUNTERS, name) + amount)


@contextmanager
def measure():
    """Yield a Counters object that holds the deltas once the block exits."""
    before = COUNTERS.snapshot()
    delta = Counters()
    try:
        yield delta
    finally:
        diff = COUNTERS.snapshot() - before
        for f in fields(diff):
            setattr(delta, f.name, getattr(diff, f.name))
