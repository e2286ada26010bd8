"""Minimal internal dimension of an extreme point and an explicit minimal realization.

Two nodes can share an internal state only if their futures agree up to the
shorter remaining length. The minimal dimension is the number of distinct
node-futures that are not a truncation of a strictly longer node-future; the
realization assigns one basis state to each of them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import Scenario, StrategyTree, _geometric_sum, count_extreme_points, iter_trees
from .errors import ParseError, ResourceLimitError, StructureError

NodeId = tuple[int, int]


@dataclass(frozen=True)
class Future:
    """Remaining length ``r`` and the subtree of tuples, level by level."""

    r: int
    subtree: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.r < 0 or not self.subtree:
            raise StructureError("a future needs r >= 0 and a root tuple")
        expected = _geometric_sum(self.S, self.r + 1)
        if len(self.subtree) != expected:
            raise StructureError(f"length-{self.r} future needs {expected} tuples, got {len(self.subtree)}")

    @property
    def S(self) -> int:
        return len(self.subtree[0])

    def truncate(self, s: int) -> Future:
        if not 0 <= s <= self.r:
            raise StructureError(f"cannot truncate a length-{self.r} future to {s}")
        return Future(s, self.subtree[: _geometric_sum(self.S, s + 1)])

    @classmethod
    def of_node(cls, tree: StrategyTree, l: int, k: int, r: int | None = None) -> Future:
        sc = tree.scenario
        r = sc.L - l if r is None else r
        if not 0 <= r <= sc.L - l:
            raise StructureError(f"node ({l},{k}) has no length-{r} future")
        tuples = []
        for m in range(r + 1):
            first = (k - 1) * sc.S**m + 1
            for kk in range(first, first + sc.S**m):
                tuples.append(tree.tuple_at(l + m, kk))
        return cls(r, tuple(tuples))


def futures_equivalent(f: Future, g: Future) -> bool:
    """Equal up to the shorter of the two remaining lengths (not transitive)."""
    if f.S != g.S:
        raise StructureError("futures come from scenarios with different S")
    m = min(f.r, g.r)
    return f.truncate(m) == g.truncate(m)


class _FutureIds:
    """Hash-consed ids of every node's futures of every admissible length.

    ``ids[offset][r]`` identifies the length-``r`` future of the node; equal
    ids mean equal futures (and equal lengths).
    """

    def __init__(self, tree: StrategyTree):
        sc = tree.scenario
        S, L = sc.S, sc.L
        table: dict[tuple, int] = {}
        ids: list[list[int]] = [[] for _ in tree.tuples]
        for l in range(L, 0, -1):
            for k in range(1, S ** (l - 1) + 1):
                off = sc.offset(l, k)
                t = tree.tuples[off]
                row = [table.setdefault((t,), len(table))]
                if l < L:
                    kids = [ids[sc.offset(l + 1, (k - 1) * S + x)] for x in range(1, S + 1)]
                    for r in range(1, L - l + 1):
                        key = (t,) + tuple(c[r - 1] for c in kids)
                        row.append(table.setdefault(key, len(table)))
                ids[off] = row
        self.ids = ids
        self.full = [row[-1] for row in ids]
        truncated = {i for row in ids for i in row[:-1]}
        self.maximal = set(self.full) - truncated


@dataclass
class StateAssignment:
    """Node-to-state map (states are 1-based) plus each state's defining node."""

    tree: StrategyTree
    state_of_node: dict[NodeId, int]
    defining_nodes: list[NodeId]

    @property
    def dimension(self) -> int:
        return len(self.defining_nodes)

    @cached_property
    def behaviors(self) -> list[Future]:
        return [Future.of_node(self.tree, l, k) for l, k in self.defining_nodes]

    def behavior(self, state: int) -> Future:
        l, k = self.defining_nodes[state - 1]
        return Future.of_node(self.tree, l, k)


def _assign(tree: StrategyTree):
    sc = tree.scenario
    fids = _FutureIds(tree)
    defining: list[NodeId] = []
    defining_off: list[int] = []
    cover: dict[int, int] = {}  # future id -> lowest state whose behavior truncates to it
    state_of: dict[NodeId, int] = {}
    for (l, k) in sc.nodes():
        off = sc.offset(l, k)
        f = fids.full[off]
        if f in fids.maximal and f not in cover:
            defining.append((l, k))
            defining_off.append(off)
            s = len(defining)
            for i in fids.ids[off]:
                cover.setdefault(i, s)
        state_of[(l, k)] = cover[f]
    return fids, defining, defining_off, cover, state_of


def minimal_dimension(tree: StrategyTree) -> tuple[int, StateAssignment]:
    """Number of inequivalent futures in the history, with a minimal state assignment."""
    _, defining, _, _, state_of = _assign(tree)
    return len(defining), StateAssignment(tree, state_of, defining)


@dataclass
class Realization:
    """Classical minimal machine for a tree, with its quantum (diagonal) description.

    ``transitions[(state, setting)] = (output, next_state)``; states 1-based.
    """

    O: int
    S: int
    dimension: int
    initial: int
    transitions: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)

    def povm(self) -> dict[tuple[int, int], np.ndarray]:
        """``E[(x, a)]`` as 0/1 diagonal integer matrices."""
        d = self.dimension
        effects = {(x, a): np.zeros((d, d), dtype=np.int64) for x in range(1, self.S + 1) for a in range(self.O)}
        for (j, x), (a, _) in self.transitions.items():
            effects[(x, a)][j - 1, j - 1] = 1
        return effects

    def kraus(self) -> dict[tuple[int, int], list[tuple[int, np.ndarray]]]:
        """``K[(x, a)] = [(j, |next><j|), ...]`` measure-and-prepare operators."""
        d = self.dimension
        ops: dict[tuple[int, int], list[tuple[int, np.ndarray]]] = {
            (x, a): [] for x in range(1, self.S + 1) for a in range(self.O)
        }
        for (j, x), (a, nxt) in sorted(self.transitions.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            K = np.zeros((d, d), dtype=np.int64)
            K[nxt - 1, j - 1] = 1
            ops[(x, a)].append((j, K))
        return ops

    def initial_state(self) -> np.ndarray:
        rho = np.zeros((self.dimension, self.dimension), dtype=np.int64)
        rho[self.initial - 1, self.initial - 1] = 1
        return rho

    def run(self, inputs) -> tuple[int, ...]:
        q, out = self.initial, []
        for x in inputs:
            a, q = self.transitions[(q, x)]
            out.append(a)
        return tuple(out)

    def to_json(self) -> str:
        doc = {
            "O": self.O,
            "S": self.S,
            "dimension": self.dimension,
            "initial": self.initial,
            "transitions": [
                {"state": j, "setting": x, "output": a, "next": n}
                for (j, x), (a, n) in sorted(self.transitions.items())
            ],
            "kraus": [
                {"setting": x, "output": a, "index": j, "row": n, "col": j}
                for (j, x), (a, n) in sorted(self.transitions.items(), key=lambda kv: (kv[0][1], kv[1][0], kv[0][0]))
            ],
            "povm": [
                {"setting": x, "output": a, "diag": [int(v) for v in np.diag(E)]}
                for (x, a), E in sorted(self.povm().items())
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Realization:
        try:
            doc = json.loads(text)
            trans = {
                (int(t["state"]), int(t["setting"])): (int(t["output"]), int(t["next"]))
                for t in doc["transitions"]
            }
            real = cls(int(doc["O"]), int(doc["S"]), int(doc["dimension"]), int(doc["initial"]), trans)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed realization document: {exc}") from exc
        real.validate()
        return real

    def validate(self) -> None:
        d = self.dimension
        for j in range(1, d + 1):
            for x in range(1, self.S + 1):
                if (j, x) not in self.transitions:
                    raise ParseError(f"missing transition for state {j}, setting {x}")
                a, n = self.transitions[(j, x)]
                if not 0 <= a < self.O or not 1 <= n <= d:
                    raise ParseError(f"transition ({j},{x}) -> ({a},{n}) out of range")
        if not 1 <= self.initial <= d:
            raise ParseError("initial state out of range")


def synthesize_realization(tree: StrategyTree) -> Realization:
    """Minimal machine: each state emits its behavior's root tuple and follows its subtree.

    States whose behavior has no remaining steps loop onto themselves.
    """
    sc = tree.scenario
    fids, defining, defining_off, cover, _ = _assign(tree)
    trans = {}
    for s, ((l, k), off) in enumerate(zip(defining, defining_off), start=1):
        r = sc.L - l
        t = tree.tuples[off]
        for x in range(1, sc.S + 1):
            if r == 0:
                nxt = s
            else:
                child = sc.offset(*sc.child(l, k, x))
                nxt = cover[fids.ids[child][r - 1]]
            trans[(s, x)] = (t[x - 1], nxt)
    return Realization(sc.O, sc.S, len(defining), 1, trans)


def max_min_dimension(scenario: Scenario, cap: int = 10**7) -> int:
    """Largest minimal dimension over all extreme points of the scenario."""
    total = count_extreme_points(scenario)
    if total > cap:
        raise ResourceLimitError(f"{total} extreme points exceed the cap {cap}")
    return max(minimal_dimension(t)[0] for t in iter_trees(scenario))
