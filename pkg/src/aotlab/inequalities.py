"""Temporal inequalities from extreme points, their composition and dimension-restricted maxima.

An extreme point yields the inequality whose coefficients are the 0/1 entries
of its deterministic correlations. Blocks of length ``L`` compose into
length ``n L`` inequalities whose bound is the product over periods of the
largest block bound used in that period.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .core import CorrelationTable, Scenario, StrategyTree, node_count
from .errors import ParseError, StructureError
from .machines import Machine, iter_machines, machine_output_matrix
from .quantum import Instrument, random_isometry

Key = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass
class TemporalInequality:
    """``sum c(x, a) p(a|x) <= C_d``; ``bounds`` maps a dimension to ``C_d``."""

    scenario: Scenario
    terms: dict[Key, object]
    bounds: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        L = self.scenario.L
        for xs, as_ in self.terms:
            if len(xs) != L or len(as_) != L:
                raise StructureError(f"term ({xs}, {as_}) does not have length {L}")
            if any(not 1 <= x <= self.scenario.S for x in xs) or any(
                not 0 <= a < self.scenario.O for a in as_
            ):
                raise StructureError(f"term ({xs}, {as_}) outside the scenario")

    @property
    def algebraic_bound(self):
        """Sum of the coefficients; attained by the generating extreme point."""
        return sum(self.terms.values())

    def to_json(self) -> str:
        sc = self.scenario
        doc = {
            "scenario": {"O": sc.O, "S": sc.S, "L": sc.L},
            "terms": [
                {"inputs": list(xs), "outputs": list(as_), "coeff": _num_to_json(c)}
                for (xs, as_), c in sorted(self.terms.items())
            ],
            "bounds": {str(d): v for d, v in sorted(self.bounds.items())},
            "algebraic_bound": _num_to_json(self.algebraic_bound),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> TemporalInequality:
        try:
            doc = json.loads(text)
            sc = Scenario(**{k: int(v) for k, v in doc["scenario"].items()})
            terms = {
                (tuple(map(int, t["inputs"])), tuple(map(int, t["outputs"]))): _num_from_json(t["coeff"])
                for t in doc["terms"]
            }
            bounds = {int(d): float(v) for d, v in doc.get("bounds", {}).items()}
            ineq = cls(sc, terms, bounds)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed inequality document: {exc}") from exc
        return ineq


def _num_to_json(v):
    if isinstance(v, Fraction):
        return v.numerator if v.denominator == 1 else str(v)
    return int(v) if float(v).is_integer() else float(v)


def _num_from_json(v):
    if isinstance(v, str):
        return Fraction(v)
    return v


def from_extreme_point(tree: StrategyTree, bounds: Mapping[int, float] | None = None) -> TemporalInequality:
    """Indicator inequality of the tree's deterministic correlations (``S**L`` terms)."""
    sc = tree.scenario
    terms = {(xs, tree.outputs(xs)): 1 for xs in sc.input_sequences()}
    return TemporalInequality(sc, terms, dict(bounds or {}))


# p(a1 a2 | x1 x2) terms, inputs labelled 0/1; setting = label + 1
_BUILTIN_TERMS = {
    1: ["00|00", "00|11", "01|01", "01|10"],
    2: ["01|00", "01|11", "00|01", "00|10"],
    3: ["01|00", "00|11", "01|01", "01|10"],
    4: ["01|00", "01|11", "01|01", "00|10"],
}


def _tree_from_terms(scenario: Scenario, terms: Mapping[Key, object]) -> StrategyTree:
    tuples: list[list[int | None]] = [[None] * scenario.S for _ in range(node_count(scenario))]
    for xs, as_ in terms:
        l, k = 1, 1
        for x, a in zip(xs, as_):
            slot = tuples[scenario.offset(l, k)]
            if slot[x - 1] not in (None, a):
                raise StructureError("terms are not the correlations of one extreme point")
            slot[x - 1] = a
            l, k = scenario.child(l, k, x)
    if any(v is None for t in tuples for v in t):
        raise StructureError("terms do not cover every input sequence")
    return StrategyTree(scenario, tuple(tuple(t) for t in tuples))


def builtin_b(i: int, bounds: Mapping[int, float] | None = None) -> tuple[TemporalInequality, StrategyTree]:
    """The four length-2 binary witnesses ``B_i`` and the extreme points ``e_i`` they come from.

    No dimension bounds are attached unless supplied.
    """
    if i not in _BUILTIN_TERMS:
        raise ValueError(f"builtin inequalities are numbered 1..4, got {i}")
    sc = Scenario(2, 2, 2)
    terms = {}
    for term in _BUILTIN_TERMS[i]:
        outs, ins = term.split("|")
        terms[(tuple(int(c) + 1 for c in ins), tuple(int(c) for c in outs))] = 1
    return TemporalInequality(sc, terms, dict(bounds or {})), _tree_from_terms(sc, terms)


def evaluate(ineq: TemporalInequality, table: CorrelationTable):
    """``sum c p``; exact when the table is exact."""
    if ineq.scenario != table.scenario:
        raise StructureError(f"inequality for {ineq.scenario} evaluated on a table for {table.scenario}")
    total = 0
    for (xs, as_), c in ineq.terms.items():
        total = total + c * table.prob(xs, as_)
    return total


# --------------------------------------------------------------------------
# composition


@dataclass
class CompositionPlan:
    """Block index for every branch slot of every period.

    ``assignment[j]`` lists the blocks of period ``j + 1``; slot ``i`` is the
    branch whose earlier inputs, read as base-``S`` digits, equal ``i``.
    """

    L: int
    periods: int
    assignment: list[list[int]]

    @classmethod
    def uniform(cls, S: int, L: int, periods: int, block: int = 0) -> CompositionPlan:
        return cls(L, periods, [[block] * S ** (j * L) for j in range(periods)])

    def validate(self, S: int, blocks: int) -> None:
        if len(self.assignment) != self.periods:
            raise StructureError(f"plan lists {len(self.assignment)} periods, expected {self.periods}")
        for j, slots in enumerate(self.assignment):
            if len(slots) != S ** (j * self.L):
                raise StructureError(
                    f"period {j + 1} needs {S ** (j * self.L)} branch slots, got {len(slots)}"
                )
            if any(not 0 <= b < blocks for b in slots):
                raise StructureError(f"period {j + 1} refers to a missing block")

    def to_json(self) -> str:
        return json.dumps({"L": self.L, "periods": self.periods, "assignment": self.assignment}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> CompositionPlan:
        try:
            doc = json.loads(text)
            return cls(int(doc["L"]), int(doc["periods"]), [[int(b) for b in p] for p in doc["assignment"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed composition plan: {exc}") from exc


@dataclass
class Block:
    inequality: TemporalInequality
    tree: StrategyTree
    bound: float | None = None


def compose(blocks: Sequence[Block], plan: CompositionPlan):
    """Graft block trees period by period; returns ``(inequality, bound, tree)``.

    ``bound`` is the product over periods of the largest block bound assigned
    in that period, or ``None`` when some used block has no bound.
    """
    if not blocks:
        raise StructureError("no blocks to compose")
    sc0 = blocks[0].tree.scenario
    if any(b.tree.scenario != sc0 for b in blocks):
        raise StructureError("blocks come from different scenarios")
    if plan.L != sc0.L:
        raise StructureError(f"plan block length {plan.L} differs from the blocks' L={sc0.L}")
    plan.validate(sc0.S, len(blocks))
    sc = Scenario(sc0.O, sc0.S, sc0.L * plan.periods)
    tuples: list = [None] * node_count(sc)
    bound = 1
    for j, slots in enumerate(plan.assignment):
        depth = j * sc0.L + 1
        for i, b in enumerate(slots):
            _graft_block(sc, tuples, depth, i + 1, blocks[b].tree)
        used = [blocks[b].bound for b in set(slots)]
        bound = None if bound is None or any(c is None for c in used) else bound * max(used)
    tree = StrategyTree(sc, tuple(tuples))
    ineq = from_extreme_point(tree)
    return ineq, bound, tree


def _graft_block(sc: Scenario, tuples: list, l: int, k: int, block: StrategyTree) -> None:
    """Copy the block's levels below ``(l, k)``, stopping after the block's own length."""
    S = sc.S
    pos = 0
    for m in range(block.scenario.L):
        first = (k - 1) * S**m + 1
        for kk in range(first, first + S**m):
            tuples[sc.offset(l + m, kk)] = block.tuples[pos]
            pos += 1


# --------------------------------------------------------------------------
# maxima over restricted strategies


def _coefficient_matrix(ineq: TemporalInequality) -> np.ndarray:
    """``C[i, code]``: coefficient of output code ``code`` on the ``i``-th input sequence."""
    sc = ineq.scenario
    index = {xs: i for i, xs in enumerate(sc.input_sequences())}
    C = np.zeros((len(index), sc.O**sc.L))
    for (xs, as_), c in ineq.terms.items():
        code = 0
        for a in as_:
            code = code * sc.O + a
        C[index[xs], code] = float(c)
    return C


def deterministic_maximum(ineq: TemporalInequality, d: int) -> tuple[float, Machine]:
    """Exact maximum over all ``d``-state deterministic machines, with a maximizer."""
    sc = ineq.scenario
    outs = machine_output_matrix(sc, d).astype(np.int64)
    codes = np.zeros(outs.shape[:2], dtype=np.int64)
    for t in range(sc.L):
        codes = codes * sc.O + outs[:, :, t]
    C = _coefficient_matrix(ineq)
    values = C[np.arange(C.shape[0])[None, :], codes].sum(axis=1)
    best = int(np.argmax(values))
    for m, machine in enumerate(iter_machines(sc.O, sc.S, d)):
        if m == best:
            return float(values[best]), machine
    raise AssertionError("unreachable")


def machine_instruments(machine: Machine, O: int, S: int) -> tuple[np.ndarray, dict[int, Instrument]]:
    """Measure-and-prepare instruments of a deterministic machine (one Kraus per state)."""
    d = machine.states
    insts = {}
    for x in range(1, S + 1):
        ops: list[list[np.ndarray]] = [[] for _ in range(O)]
        for q in range(d):
            K = np.zeros((d, d), dtype=np.int64)
            K[machine.next[q][x - 1], q] = 1
            ops[machine.output[q][x - 1]].append(K)
        insts[x] = Instrument(x, tuple(tuple(o) for o in ops))
    rho = np.zeros((d, d), dtype=np.int64)
    rho[0, 0] = 1
    return rho, insts


@dataclass
class QuantumStrategy:
    state: np.ndarray
    instruments: dict[int, Instrument]


def _value(ineq: TemporalInequality, psi: np.ndarray, blocks: dict[int, list[list[np.ndarray]]]) -> float:
    """Objective for a pure initial state and per-setting Kraus blocks."""
    sc = ineq.scenario
    cache: dict[tuple, np.ndarray] = {(): np.outer(psi, psi.conj())}

    def state(prefix):
        if prefix not in cache:
            rho = state(prefix[:-1])
            x, a = prefix[-1]
            cache[prefix] = sum(K @ rho @ K.conj().T for K in blocks[x][a])
        return cache[prefix]

    total = 0.0
    for (xs, as_), c in ineq.terms.items():
        total += float(c) * float(np.trace(state(tuple(zip(xs, as_)))).real)
    return total


def _split(V: np.ndarray, d: int, O: int, m: int) -> list[list[np.ndarray]]:
    return [[V[(a * m + j) * d : (a * m + j + 1) * d] for j in range(m)] for a in range(O)]


def _orthonormalize(A: np.ndarray) -> np.ndarray:
    # polar factor: nearest isometry to A
    U, _, Vh = np.linalg.svd(A, full_matrices=False)
    return U @ Vh


def numeric_maximize(
    ineq: TemporalInequality,
    d: int,
    restarts: int = 4,
    iterations: int = 200,
    seed: int = 0,
    kraus_per_outcome: int | None = None,
) -> tuple[float, QuantumStrategy]:
    """Best value found over ``d``-dimensional quantum strategies, with the strategy.

    Restart 0 starts from the best ``d``-state deterministic machine when the
    machine space is small; the others start from random isometries. Each
    restart runs L-BFGS on an unconstrained parametrization (state vector and
    one matrix per setting, mapped to an isometry by its polar factor). The
    returned value is that of the returned strategy, so it is a lower bound
    on the true dimension-``d`` maximum.
    """
    from scipy.optimize import minimize

    if d < 1:
        raise ValueError("dimension must be >= 1")
    sc = ineq.scenario
    O, S = sc.O, sc.S
    m = kraus_per_outcome or d
    rng = np.random.default_rng(seed)
    rows = d * O * m

    def unpack(theta):
        z = theta[: 2 * d]
        psi = z[:d] + 1j * z[d:]
        psi = psi / (np.linalg.norm(psi) or 1.0)
        off = 2 * d
        blocks = {}
        for x in range(1, S + 1):
            n = rows * d
            A = (theta[off : off + n] + 1j * theta[off + n : off + 2 * n]).reshape(rows, d)
            off += 2 * n
            blocks[x] = _split(_orthonormalize(A), d, O, m)
        return psi, blocks

    def pack(psi, isos):
        parts = [psi.real, psi.imag]
        for x in range(1, S + 1):
            parts += [isos[x].real.ravel(), isos[x].imag.ravel()]
        return np.concatenate(parts)

    starts = []
    if (O * d) ** (d * S) <= 10**5:
        _, machine = deterministic_maximum(ineq, d)
        psi = np.zeros(d, dtype=complex)
        psi[0] = 1
        isos = {}
        for x in range(1, S + 1):
            V = np.zeros((rows, d), dtype=complex)
            for q in range(d):
                a = machine.output[q][x - 1]
                V[(a * m + q % m) * d + machine.next[q][x - 1], q] = 1
            isos[x] = V
        # machines need one Kraus operator per state and outcome
        if m >= d:
            starts.append(pack(psi, isos))
    while len(starts) < max(restarts, 1):
        psi = rng.normal(size=d) + 1j * rng.normal(size=d)
        starts.append(pack(psi, {x: random_isometry(rows, d, rng) for x in range(1, S + 1)}))

    best_val, best_theta = -math.inf, None
    for theta0 in starts:
        res = minimize(
            lambda th: -_value(ineq, *unpack(th)),
            theta0,
            method="L-BFGS-B",
            options={"maxiter": iterations},
        )
        for theta in (theta0, res.x):
            val = _value(ineq, *unpack(theta))
            if val > best_val:
                best_val, best_theta = val, theta

    psi, blocks = unpack(best_theta)
    rho = np.outer(psi, psi.conj())
    insts = {x: Instrument(x, tuple(tuple(ops) for ops in blocks[x])) for x in blocks}
    # rounding can push a sum of probabilities marginally past its maximum
    value = min(best_val, float(ineq.algebraic_bound))
    return value, QuantumStrategy(rho, insts)
