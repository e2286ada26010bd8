"""Scenarios, strategy trees and deterministic correlation tables.

Conventions used throughout the package:

* settings are 1-based (``1..S``), outcomes are 0-based (``0..O-1``);
* tree nodes are addressed by ``(l, k)`` with depth ``l`` in ``1..L`` and
  position ``k`` in ``1..S**(l-1)``; the child of ``(l, k)`` under setting
  ``x`` is ``(l + 1, (k - 1) * S + x)``;
* nodes are stored breadth-first, node ``(l, k)`` at offset
  ``level_offset(l) + k - 1``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import ParseError, ResourceLimitError, StructureError

#: refuse dense tables with more input sequences than this
MAX_TABLE_INPUTS = 10**6
DEFAULT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Scenario:
    """Number of outcomes ``O``, settings ``S`` and time steps ``L``."""

    O: int
    S: int
    L: int

    def __post_init__(self):
        for name in ("O", "S", "L"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise StructureError(f"{name} must be a positive integer, got {value!r}")

    def __str__(self):
        return f"O={self.O} S={self.S} L={self.L}"

    @property
    def node_count(self) -> int:
        return node_count(self)

    def level_offset(self, l: int) -> int:
        """Breadth-first offset of the first node at depth ``l``."""
        return _geometric_sum(self.S, l - 1)

    def offset(self, l: int, k: int) -> int:
        if not 1 <= l <= self.L or not 1 <= k <= self.S ** (l - 1):
            raise StructureError(f"node ({l},{k}) does not exist in {self}")
        return self.level_offset(l) + k - 1

    def child(self, l: int, k: int, x: int) -> tuple[int, int]:
        if not 1 <= x <= self.S:
            raise StructureError(f"setting {x} outside 1..{self.S}")
        return l + 1, (k - 1) * self.S + x

    def nodes(self) -> Iterator[tuple[int, int]]:
        """All ``(l, k)`` pairs in breadth-first order."""
        for l in range(1, self.L + 1):
            for k in range(1, self.S ** (l - 1) + 1):
                yield l, k

    def input_sequences(self, length: int | None = None) -> Iterator[tuple[int, ...]]:
        n = self.L if length is None else length
        return itertools.product(range(1, self.S + 1), repeat=n)

    def output_sequences(self, length: int | None = None) -> Iterator[tuple[int, ...]]:
        n = self.L if length is None else length
        return itertools.product(range(self.O), repeat=n)


def _geometric_sum(S: int, n: int) -> int:
    """``1 + S + ... + S**(n-1)``, exact."""
    if S == 1:
        return n
    return (S**n - 1) // (S - 1)


def node_count(scenario: Scenario) -> int:
    """Number of nodes ``(S**L - 1)/(S - 1)`` of the strategy tree."""
    return _geometric_sum(scenario.S, scenario.L)


def count_extreme_points(scenario: Scenario) -> int:
    """Number of deterministic strategies ``(O**S)**node_count``."""
    return (scenario.O**scenario.S) ** node_count(scenario)


@dataclass(frozen=True)
class StrategyTree:
    """A deterministic extreme point: one outcome tuple per tree node.

    ``tuples[i][x - 1]`` is the outcome of setting ``x`` at the ``i``-th node
    in breadth-first order.
    """

    scenario: Scenario
    tuples: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        sc = self.scenario
        tuples = tuple(tuple(int(z) for z in t) for t in self.tuples)
        object.__setattr__(self, "tuples", tuples)
        if len(tuples) != node_count(sc):
            raise StructureError(
                f"expected {node_count(sc)} tuples for {sc}, got {len(tuples)}"
            )
        for i, t in enumerate(tuples):
            if len(t) != sc.S:
                raise StructureError(f"tuple {i} has length {len(t)}, expected {sc.S}")
            if any(z < 0 or z >= sc.O for z in t):
                raise StructureError(f"tuple {i} = {t} has outcomes outside 0..{sc.O - 1}")

    @classmethod
    def constant(cls, scenario: Scenario, outcome: int = 0) -> StrategyTree:
        row = (outcome,) * scenario.S
        return cls(scenario, (row,) * node_count(scenario))

    @classmethod
    def from_index(cls, scenario: Scenario, index: int) -> StrategyTree:
        """Decode a mixed-radix index (base ``O**S`` per node, root most significant)."""
        total = count_extreme_points(scenario)
        if not 0 <= index < total:
            raise IndexError(f"tree index {index} outside [0, {total})")
        O, S = scenario.O, scenario.S
        n = node_count(scenario) * S
        flat = [0] * n
        for pos in range(n - 1, -1, -1):
            index, flat[pos] = divmod(index, O)
        return cls(scenario, tuple(tuple(flat[i : i + S]) for i in range(0, n, S)))

    @property
    def index(self) -> int:
        O = self.scenario.O
        value = 0
        for t in self.tuples:
            for z in t:
                value = value * O + z
        return value

    @property
    def flat(self) -> tuple[int, ...]:
        return tuple(z for t in self.tuples for z in t)

    def tuple_at(self, l: int, k: int) -> tuple[int, ...]:
        return self.tuples[self.scenario.offset(l, k)]

    def outputs(self, inputs: Sequence[int]) -> tuple[int, ...]:
        """Walk the tree along ``inputs`` and collect the deterministic outputs."""
        sc = self.scenario
        if len(inputs) > sc.L:
            raise StructureError(f"input sequence longer than L={sc.L}")
        l, k, out = 1, 1, []
        for x in inputs:
            if not 1 <= x <= sc.S:
                raise StructureError(f"setting {x} outside 1..{sc.S}")
            out.append(self.tuples[sc.offset(l, k)][x - 1])
            l, k = sc.child(l, k, x)
        return tuple(out)

    def __str__(self):
        return " ".join("(" + ",".join(map(str, t)) + ")" for t in self.tuples)


def iter_trees(scenario: Scenario, start: int = 0, stop: int | None = None) -> Iterator[StrategyTree]:
    """Enumerate strategy trees by index in ``[start, stop)``."""
    total = count_extreme_points(scenario)
    stop = total if stop is None else min(stop, total)
    for index in range(start, stop):
        yield StrategyTree.from_index(scenario, index)


def graft(scenario: Scenario, tuples: list, l: int, k: int, subtree: Sequence[tuple[int, ...]]) -> None:
    """Write ``subtree`` (tuples level by level) below node ``(l, k)`` in place.

    The subtree must reach exactly the last level of the scenario.
    """
    S = scenario.S
    r = scenario.L - l
    if len(subtree) != _geometric_sum(S, r + 1):
        raise StructureError(f"subtree of {len(subtree)} tuples does not fill {r + 1} levels")
    pos = 0
    for m in range(r + 1):
        first = (k - 1) * S**m + 1
        for kk in range(first, first + S**m):
            tuples[scenario.offset(l + m, kk)] = tuple(subtree[pos])
            pos += 1


def enumerate_flat(scenario: Scenario, cap: int = 10**7) -> Iterator[tuple[int, ...]]:
    """Flat outcome strings of all trees in index order (cheaper than trees)."""
    total = count_extreme_points(scenario)
    if total > cap:
        raise ResourceLimitError(f"{total} extreme points exceed the cap {cap}")
    n = node_count(scenario) * scenario.S
    return itertools.product(range(scenario.O), repeat=n)


# --------------------------------------------------------------------------
# correlation tables


@dataclass(frozen=True)
class CorrelationTable:
    """Dense ``p(a|x)`` stored as an array with ``L`` input axes then ``L`` output axes.

    Input axes are indexed by ``setting - 1``. Integer or object (``Fraction``)
    dtypes are treated as exact.
    """

    scenario: Scenario
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        sc = self.scenario
        shape = (sc.S,) * sc.L + (sc.O,) * sc.L
        if self.probs.shape != shape:
            raise StructureError(f"table shape {self.probs.shape} does not match {shape} for {sc}")

    @classmethod
    def zeros(cls, scenario: Scenario, exact: bool = False) -> CorrelationTable:
        _check_table_size(scenario)
        shape = (scenario.S,) * scenario.L + (scenario.O,) * scenario.L
        if exact:
            arr = np.empty(shape, dtype=object)
            arr.fill(Fraction(0))
        else:
            arr = np.zeros(shape)
        return cls(scenario, arr)

    @classmethod
    def uniform(cls, scenario: Scenario, exact: bool = False) -> CorrelationTable:
        t = cls.zeros(scenario, exact)
        value = Fraction(1, scenario.O**scenario.L) if exact else scenario.O ** (-scenario.L)
        t.probs[...] = value
        return t

    @property
    def exact(self) -> bool:
        return self.probs.dtype.kind in "iuO"

    def prob(self, inputs: Sequence[int], outputs: Sequence[int]):
        return self.probs[tuple(x - 1 for x in inputs) + tuple(outputs)]

    def set(self, inputs: Sequence[int], outputs: Sequence[int], value) -> None:
        self.probs[tuple(x - 1 for x in inputs) + tuple(outputs)] = value

    def distribution(self, inputs: Sequence[int]) -> dict[tuple[int, ...], object]:
        sub = self.probs[tuple(x - 1 for x in inputs)]
        return {a: sub[a] for a in self.scenario.output_sequences()}

    def marginal(self, t: int) -> np.ndarray:
        """``sum over a_{t+1..L}``; keeps all input axes."""
        L = self.scenario.L
        axes = tuple(range(L + t, 2 * L))
        return self.probs.sum(axis=axes) if axes else self.probs

    def __eq__(self, other):
        if not isinstance(other, CorrelationTable):
            return NotImplemented
        return self.scenario == other.scenario and bool(np.all(self.probs == other.probs))

    def __hash__(self):
        return hash(self.scenario)


def _check_table_size(scenario: Scenario) -> None:
    if scenario.S**scenario.L > MAX_TABLE_INPUTS:
        raise ResourceLimitError(
            f"S^L = {scenario.S ** scenario.L} input sequences exceed the dense-table cap"
        )


def tree_to_correlations(tree: StrategyTree) -> CorrelationTable:
    """Deterministic 0/1 table of a strategy tree (integer dtype, exact)."""
    sc = tree.scenario
    _check_table_size(sc)
    arr = np.zeros((sc.S,) * sc.L + (sc.O,) * sc.L, dtype=np.int64)
    for xs in sc.input_sequences():
        arr[tuple(x - 1 for x in xs) + tree.outputs(xs)] = 1
    return CorrelationTable(sc, arr)


@dataclass
class AoTViolation:
    kind: str  # "positivity" | "normalization" | "marginal"
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    value: object
    reference: object = None
    reference_inputs: tuple[int, ...] | None = None

    def __str__(self):
        if self.kind == "marginal":
            return (
                f"marginal p({self.outputs}|{self.inputs})={self.value} differs from "
                f"p({self.outputs}|{self.reference_inputs})={self.reference}"
            )
        return f"{self.kind} violated at inputs={self.inputs} outputs={self.outputs}: {self.value}"


@dataclass
class AoTReport:
    passed: bool
    violations: list[AoTViolation]

    def __bool__(self):
        return self.passed


def check_aot(
    table: CorrelationTable,
    tolerance: float = DEFAULT_TOLERANCE,
    scenario: Scenario | None = None,
    max_violations: int = 50,
) -> AoTReport:
    """Check positivity, normalization and the arrow-of-time marginal constraints.

    Exact tables (integer or ``Fraction`` entries) are compared with zero
    tolerance. A shape mismatch against ``scenario`` raises ``StructureError``.
    """
    sc = table.scenario if scenario is None else scenario
    shape = (sc.S,) * sc.L + (sc.O,) * sc.L
    if table.probs.shape != shape:
        raise StructureError(f"table shape {table.probs.shape} does not match {sc}")
    tol = 0 if table.exact else tolerance
    L = sc.L
    p = table.probs
    found: list[AoTViolation] = []

    def _add(v):
        if len(found) < max_violations:
            found.append(v)

    for idx in np.argwhere(p < -tol) if p.size else []:
        idx = tuple(int(i) for i in idx)
        _add(AoTViolation("positivity", tuple(i + 1 for i in idx[:L]), idx[L:], p[idx]))

    norm = p.sum(axis=tuple(range(L, 2 * L)))
    for idx in np.argwhere(np.abs(norm - 1) > tol):
        idx = tuple(int(i) for i in idx)
        _add(AoTViolation("normalization", tuple(i + 1 for i in idx), (), norm[idx]))

    for t in range(1, L):
        m = table.marginal(t)
        # reference: later inputs fixed to setting 1
        ref = m[(slice(None),) * t + (slice(0, 1),) * (L - t)]
        diff = np.abs(m - ref)
        for idx in np.argwhere(diff > tol):
            idx = tuple(int(i) for i in idx)
            xs = tuple(i + 1 for i in idx[:L])
            ref_idx = idx[:t] + (0,) * (L - t) + idx[L:]
            _add(
                AoTViolation(
                    "marginal",
                    xs,
                    idx[L:],
                    m[idx],
                    reference=m[ref_idx],
                    reference_inputs=xs[:t] + (1,) * (L - t),
                )
            )
    return AoTReport(not found, found)


# --------------------------------------------------------------------------
# "aott v1" text format


def dumps_aott(tree: StrategyTree) -> str:
    sc = tree.scenario
    lines = ["aott 1", f"O={sc.O} S={sc.S} L={sc.L}"]
    for (l, k), t in zip(sc.nodes(), tree.tuples):
        lines.append(f"{l},{k}: " + " ".join(map(str, t)))
    return "\n".join(lines) + "\n"


def loads_aott(text: str) -> StrategyTree:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) < 2 or lines[0] != "aott 1":
        raise ParseError("missing 'aott 1' header")
    try:
        fields = dict(item.split("=") for item in lines[1].split())
        sc = Scenario(int(fields["O"]), int(fields["S"]), int(fields["L"]))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad scenario line {lines[1]!r}") from exc
    body = lines[2:]
    if len(body) != node_count(sc):
        raise ParseError(f"expected {node_count(sc)} node lines, got {len(body)}")
    tuples = []
    for expected, line in zip(sc.nodes(), body):
        head, _, rest = line.partition(":")
        try:
            l, k = (int(v) for v in head.split(","))
            values = tuple(int(v) for v in rest.split())
        except ValueError as exc:
            raise ParseError(f"bad node line {line!r}") from exc
        if (l, k) != expected:
            raise ParseError(f"node {l},{k} out of breadth-first order, expected {expected}")
        if len(values) != sc.S or any(not 0 <= v < sc.O for v in values):
            raise ParseError(f"node {l},{k}: invalid outcome tuple {values}")
        tuples.append(values)
    return StrategyTree(sc, tuple(tuples))


def dumps_table(table: CorrelationTable) -> str:
    """JSON listing every ``p(a|x)``; exact values as ``"n/d"`` strings."""
    sc = table.scenario
    entries = []
    for xs in sc.input_sequences():
        for as_ in sc.output_sequences():
            p = table.prob(xs, as_)
            value = str(Fraction(p)) if table.exact else float(p)
            entries.append({"inputs": list(xs), "outputs": list(as_), "p": value})
    doc = {"scenario": {"O": sc.O, "S": sc.S, "L": sc.L}, "exact": table.exact, "entries": entries}
    return json.dumps(doc, sort_keys=True)


def loads_table(text: str) -> CorrelationTable:
    """Inverse of :func:`dumps_table`; entries that are not listed are zero."""
    try:
        doc = json.loads(text)
        sc = Scenario(**{k: int(v) for k, v in doc["scenario"].items()})
        exact = bool(doc.get("exact", False))
        table = CorrelationTable.zeros(sc, exact)
        for e in doc["entries"]:
            xs, as_ = tuple(map(int, e["inputs"])), tuple(map(int, e["outputs"]))
            if len(xs) != sc.L or len(as_) != sc.L:
                raise ValueError(f"entry {e} has the wrong length")
            if any(not 1 <= x <= sc.S for x in xs) or any(not 0 <= a < sc.O for a in as_):
                raise ValueError(f"entry {e} lies outside the scenario")
            table.set(xs, as_, Fraction(e["p"]) if exact else float(e["p"]))
    except (KeyError, TypeError, ValueError, StructureError) as exc:
        raise ParseError(f"malformed table document: {exc}") from exc
    return table
