"""Empirical reversibility: a FIFO of pending return-within-K records feeding
a per-(state, action) EMA table."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import NamedTuple

import numpy as np


class PendingRecord(NamedTuple):
    origin_state: int
    origin_action: int
    deadline: int


class PhiTable:
    """Reversibility estimates in [0, 1], one per (state, action).

    Stored as nested lists; the hot loop indexes single cells and list
    access is several times cheaper than numpy scalar indexing.
    """

    def __init__(self, n_states: int, n_actions: int, init_value: float, ema_rate: float):
        if not 0.0 <= init_value <= 1.0:
            raise ValueError(f"phi init_value must lie in [0, 1], got {init_value}")
        if not 0.0 < ema_rate < 1.0:
            raise ValueError(f"ema_rate must lie in (0, 1), got {ema_rate}")
        self.n_states = n_states
        self.n_actions = n_actions
        self.init_value = float(init_value)
        self.ema_rate = float(ema_rate)
        self.values = [[self.init_value] * n_actions for _ in range(n_states)]

    def reset(self) -> None:
        self.values = [[self.init_value] * self.n_actions for _ in range(self.n_states)]

    def lookup(self, state: int, action: int) -> float:
        if not (0 <= state < self.n_states and 0 <= action < self.n_actions):
            raise IndexError(f"(state={state}, action={action}) outside the phi table")
        return self.values[state][action]

    def update(self, state: int, action: int, label: float) -> None:
        row = self.values[state]
        row[action] = (1.0 - self.ema_rate) * row[action] + self.ema_rate * label

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["state", "action", "phi"])
            for s, row in enumerate(self.values):
                for a, v in enumerate(row):
                    writer.writerow([s, a, repr(v)])


class PrecedenceBuffer:
    """Pending records awaiting either a return to their origin state or expiry."""

    def __init__(self, horizon_k: int):
        if horizon_k < 0:
            raise ValueError(f"horizon_k must be non-negative, got {horizon_k}")
        self.horizon_k = int(horizon_k)
        self.records: list[PendingRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        self.records = []

    def enqueue(self, state: int, action: int, t: int) -> None:
        self.records.append(PendingRecord(state, action, t + self.horizon_k))

    def resolve_and_update(self, phi: PhiTable, current_state: int, t: int) -> int:
        """Label and drop every record that matched ``current_state`` or expired.

        ``t`` is the already-incremented step counter. A state match is
        checked before expiry, so a record that matches on the step it
        expires still resolves as reversible. Returns the number removed.
        """
        kept = []
        resolved = 0
        for rec in self.records:
            if rec.origin_state == current_state:
                label = 1.0
            elif t > rec.deadline:
                label = 0.0
            else:
                kept.append(rec)
                continue
            phi.update(rec.origin_state, rec.origin_action, label)
            resolved += 1
        self.records = kept
        return resolved
