"""Native tabular CliffWalking and Taxi environments.

Both environments are pure functions of ``(state, action)``; the full
transition table is built once at construction and every ``step`` is a
lookup. Only ``reset`` consumes randomness, from a caller-supplied RNG.
"""

from __future__ import annotations

import random
from typing import NamedTuple


class StepOutcome(NamedTuple):
    next_state: int
    reward: float
    terminated: bool
    fell_off_cliff: bool = False
    illegal_action: bool = False
    delivered: bool = False


# --------------------------------------------------------------------------
# CliffWalking
# --------------------------------------------------------------------------

UP, RIGHT, DOWN, LEFT = range(4)

CLIFF_ROWS = 4
CLIFF_COLS = 12
CLIFF_START = 36
CLIFF_GOAL = 47

_CLIFF_MOVES = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}


def cliff_encode(row: int, col: int) -> int:
    if not (0 <= row < CLIFF_ROWS and 0 <= col < CLIFF_COLS):
        raise ValueError(f"cell ({row}, {col}) is outside the 4x12 grid")
    return row * CLIFF_COLS + col


def cliff_decode(state: int) -> tuple[int, int]:
    if not 0 <= state < CLIFF_ROWS * CLIFF_COLS:
        raise ValueError(f"CliffWalking state {state} out of range")
    return divmod(state, CLIFF_COLS)


def is_cliff_cell(row: int, col: int) -> bool:
    return row == CLIFF_ROWS - 1 and 1 <= col <= CLIFF_COLS - 2


def _cliff_transition(state: int, action: int) -> StepOutcome:
    row, col = cliff_decode(state)
    drow, dcol = _CLIFF_MOVES[action]
    row = min(max(row + drow, 0), CLIFF_ROWS - 1)
    col = min(max(col + dcol, 0), CLIFF_COLS - 1)
    if is_cliff_cell(row, col):
        return StepOutcome(CLIFF_START, -100.0, False, fell_off_cliff=True)
    nxt = cliff_encode(row, col)
    return StepOutcome(nxt, -1.0, nxt == CLIFF_GOAL)


class CliffWalking:
    """Deterministic 4x12 cliff grid. Falls teleport to the start without ending the episode."""

    name = "cliffwalking"
    n_states = CLIFF_ROWS * CLIFF_COLS
    n_actions = 4
    default_step_limit = 700
    failure_metric = "falls"

    def __init__(self) -> None:
        self._table = [
            [_cliff_transition(s, a) for a in range(self.n_actions)]
            for s in range(self.n_states)
        ]

    def reset(self, rng: random.Random | None = None) -> int:
        return CLIFF_START

    def step(self, state: int, action: int) -> StepOutcome:
        if state == CLIFF_GOAL:
            raise ValueError("cannot step from the goal state; the episode has ended")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"invalid CliffWalking action {action}")
        return self._table[state][action]


# --------------------------------------------------------------------------
# Taxi
# --------------------------------------------------------------------------

SOUTH, NORTH, EAST, WEST, PICKUP, DROPOFF = range(6)

TAXI_SIZE = 5
IN_TAXI = 4
# R, G, Y, B
LANDMARKS = ((0, 0), (0, 4), (4, 0), (4, 3))

# (row, west_col): a wall separates column west_col from west_col + 1 in that row.
TAXI_WALLS = frozenset({(0, 1), (1, 1), (3, 0), (3, 2), (4, 0), (4, 2)})


class TaxiSituation(NamedTuple):
    taxi_row: int
    taxi_col: int
    passenger_loc: int
    destination: int


def taxi_encode(sit: TaxiSituation | tuple[int, int, int, int]) -> int:
    taxi_row, taxi_col, passenger_loc, destination = sit
    if not (0 <= taxi_row < TAXI_SIZE and 0 <= taxi_col < TAXI_SIZE):
        raise ValueError(f"taxi position ({taxi_row}, {taxi_col}) out of range")
    if not 0 <= passenger_loc <= IN_TAXI:
        raise ValueError(f"passenger_loc {passenger_loc} out of range")
    if not 0 <= destination < len(LANDMARKS):
        raise ValueError(f"destination {destination} out of range")
    return ((taxi_row * TAXI_SIZE + taxi_col) * 5 + passenger_loc) * 4 + destination


def taxi_decode(state: int) -> TaxiSituation:
    if not 0 <= state < 500:
        raise ValueError(f"Taxi state {state} out of range")
    state, destination = divmod(state, 4)
    state, passenger_loc = divmod(state, 5)
    taxi_row, taxi_col = divmod(state, TAXI_SIZE)
    return TaxiSituation(taxi_row, taxi_col, passenger_loc, destination)


def _taxi_transition(state: int, action: int, strict_dropoff: bool = False) -> StepOutcome:
    row, col, pas, dest = taxi_decode(state)
    if action == SOUTH:
        row = min(row + 1, TAXI_SIZE - 1)
    elif action == NORTH:
        row = max(row - 1, 0)
    elif action == EAST:
        if col < TAXI_SIZE - 1 and (row, col) not in TAXI_WALLS:
            col += 1
    elif action == WEST:
        if col > 0 and (row, col - 1) not in TAXI_WALLS:
            col -= 1
    elif action == PICKUP:
        if pas != IN_TAXI and (row, col) == LANDMARKS[pas]:
            pas = IN_TAXI
        else:
            return StepOutcome(state, -10.0, False, illegal_action=True)
    else:
        if pas == IN_TAXI and (row, col) == LANDMARKS[dest]:
            nxt = taxi_encode((row, col, dest, dest))
            return StepOutcome(nxt, 20.0, True, delivered=True)
        if pas == IN_TAXI and (row, col) in LANDMARKS and not strict_dropoff:
            # Toy-text Taxi leaves the passenger at the other landmark for -1.
            pas = LANDMARKS.index((row, col))
        else:
            return StepOutcome(state, -10.0, False, illegal_action=True)
    return StepOutcome(taxi_encode((row, col, pas, dest)), -1.0, False)


class Taxi:
    """5x5 Taxi map with the four R/G/Y/B landmarks; delivery ends the episode.

    A dropoff at a landmark other than the destination relocates the
    passenger there (reward -1). With ``strict_dropoff`` it is an illegal
    action instead (-10, no state change).
    """

    name = "taxi"
    n_states = 500
    n_actions = 6
    default_step_limit = 1500
    failure_metric = "illegal_actions"

    def __init__(self, strict_dropoff: bool = False) -> None:
        self.strict_dropoff = strict_dropoff
        self._table = [
            [_taxi_transition(s, a, strict_dropoff) for a in range(self.n_actions)]
            for s in range(self.n_states)
        ]
        self.initial_states = tuple(
            taxi_encode((r, c, p, d))
            for r in range(TAXI_SIZE)
            for c in range(TAXI_SIZE)
            for p in range(len(LANDMARKS))
            for d in range(len(LANDMARKS))
            if p != d
        )

    def reset(self, rng: random.Random) -> int:
        return self.initial_states[rng.randrange(len(self.initial_states))]

    def step(self, state: int, action: int) -> StepOutcome:
        if not 0 <= action < self.n_actions:
            raise ValueError(f"invalid Taxi action {action}")
        return self._table[state][action]


ENVIRONMENTS = {"cliffwalking": CliffWalking, "taxi": Taxi}


def make_env(name: str, *, strict_dropoff: bool = False) -> CliffWalking | Taxi:
    """``strict_dropoff`` only affects Taxi."""
    try:
        cls = ENVIRONMENTS[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}"
        ) from None
    return cls(strict_dropoff) if cls is Taxi else cls()
