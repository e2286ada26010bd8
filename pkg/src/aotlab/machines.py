"""Deterministic finite-state machines with time-independent transitions.

A machine with ``d`` states starts in state 0; on setting ``x`` in state ``q``
it emits ``output[q][x-1]`` and moves to ``next[q][x-1]``. These are the
classical strategies the realizations reduce to, and they serve as a
brute-force oracle independent of the future-equivalence construction.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .core import Scenario, StrategyTree


@dataclass(frozen=True)
class Machine:
    output: tuple[tuple[int, ...], ...]
    next: tuple[tuple[int, ...], ...]

    @property
    def states(self) -> int:
        return len(self.output)

    def run(self, inputs: Sequence[int]) -> tuple[int, ...]:
        q, out = 0, []
        for x in inputs:
            out.append(self.output[q][x - 1])
            q = self.next[q][x - 1]
        return tuple(out)

    def to_tree(self, scenario: Scenario) -> StrategyTree:
        tuples = []
        frontier = [0]
        for _ in range(scenario.L):
            tuples.extend(self.output[q] for q in frontier)
            frontier = [self.next[q][x] for q in frontier for x in range(scenario.S)]
        return StrategyTree(scenario, tuple(tuples))


def iter_machines(O: int, S: int, d: int) -> Iterator[Machine]:
    """Every machine with ``d`` states (initial state 0), ``(O*d)**(d*S)`` in total."""
    cells = list(itertools.product(range(O), range(d)))
    for choice in itertools.product(cells, repeat=d * S):
        out = tuple(tuple(choice[q * S + x][0] for x in range(S)) for q in range(d))
        nxt = tuple(tuple(choice[q * S + x][1] for x in range(S)) for q in range(d))
        yield Machine(out, nxt)


def machine_output_matrix(scenario: Scenario, d: int) -> np.ndarray:
    """Outputs of every ``d``-state machine on every input sequence.

    Shape ``(machines, S**L, L)``; input sequences in lexicographic order.
    """
    inputs = list(scenario.input_sequences())
    rows = [[m.run(xs) for xs in inputs] for m in iter_machines(scenario.O, scenario.S, d)]
    return np.array(rows, dtype=np.int8).reshape(len(rows), len(inputs), scenario.L)


def find_machine(tree: StrategyTree, max_states: int) -> Machine | None:
    """Search for a machine with at most ``max_states`` states reproducing ``tree``.

    Exhaustive backtracking over partial transition tables; states are
    introduced in order of first use so each machine is visited once up to
    relabeling. Returns ``None`` when no such machine exists.
    """
    sc = tree.scenario
    S, L = sc.S, sc.L
    if max_states < 1:
        return None
    nodes = list(sc.nodes())
    out: list[list[int | None]] = [[None] * S for _ in range(max_states)]
    nxt: list[list[int | None]] = [[None] * S for _ in range(max_states)]
    state_of = {0: 0}  # breadth-first offset -> state
    used = [1]

    def step(i: int, x: int) -> bool:
        if i == len(nodes):
            return True
        if x == S:
            return step(i + 1, 0)
        l, k = nodes[i]
        off = sc.offset(l, k)
        q = state_of[off]
        z = tree.tuples[off][x]
        if out[q][x] is not None and out[q][x] != z:
            return False
        set_out = out[q][x] is None
        out[q][x] = z
        if l == L:
            ok = step(i, x + 1)
            if not ok and set_out:
                out[q][x] = None
            return ok
        child = sc.offset(*sc.child(l, k, x + 1))
        if nxt[q][x] is not None:
            state_of[child] = nxt[q][x]
            if step(i, x + 1):
                return True
        else:
            limit = min(used[0] + 1, max_states)
            for target in range(limit):
                fresh = target == used[0]
                if fresh:
                    used[0] += 1
                nxt[q][x] = target
                state_of[child] = target
                if step(i, x + 1):
                    return True
                nxt[q][x] = None
                if fresh:
                    used[0] -= 1
        state_of.pop(child, None)
        if set_out:
            out[q][x] = None
        return False

    if not step(0, 0):
        return None
    d = used[0]
    fill = lambda v: 0 if v is None else v  # noqa: E731
    return Machine(
        tuple(tuple(fill(v) for v in row) for row in out[:d]),
        tuple(tuple(fill(v) for v in row) for row in nxt[:d]),
    )


def smallest_machine_size(tree: StrategyTree, upper: int | None = None) -> int:
    """Minimum number of states of any machine reproducing the tree."""
    limit = upper if upper is not None else len(tree.tuples)
    for d in range(1, limit + 1):
        if find_machine(tree, d) is not None:
            return d
    raise AssertionError("no machine found below the node count")
