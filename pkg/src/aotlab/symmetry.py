"""Relabeling symmetries of strategy trees: group action, canonical forms, class counts.

The implemented group relabels settings with one permutation and the outcomes
of every setting with an independent permutation (``(O!)^S * S!`` elements).
An element acts by first permuting settings and then applying the outcome
permutation attached to the *new* setting label. The plain direct product
``S_O x S_S`` (one outcome permutation shared by all settings) is available
with ``variant="direct"`` for comparison.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator

from .core import Scenario, StrategyTree, count_extreme_points, node_count
from .errors import ResourceLimitError, StructureError, UnsupportedScenarioError

ORE = "ORE"
RE = "RE"
WREATH = "wreath"
DIRECT = "direct"

Perm = tuple[int, ...]


@dataclass(frozen=True)
class RelabelingElement:
    """``setting_perm[x] = x'`` and ``outcome_perms[x'][a] = a'`` (all 0-based)."""

    setting_perm: Perm
    outcome_perms: tuple[Perm, ...]

    def __post_init__(self):
        S = len(self.setting_perm)
        if sorted(self.setting_perm) != list(range(S)):
            raise StructureError(f"{self.setting_perm} is not a permutation")
        if len(self.outcome_perms) != S:
            raise StructureError("need one outcome permutation per setting")
        O = len(self.outcome_perms[0]) if S else 0
        for p in self.outcome_perms:
            if sorted(p) != list(range(O)):
                raise StructureError(f"{p} is not a permutation of 0..{O - 1}")

    @property
    def S(self) -> int:
        return len(self.setting_perm)

    @property
    def O(self) -> int:
        return len(self.outcome_perms[0])

    @classmethod
    def identity(cls, O: int, S: int) -> RelabelingElement:
        return cls(tuple(range(S)), (tuple(range(O)),) * S)

    @classmethod
    def setting_swap(cls, O: int, S: int, x: int, y: int) -> RelabelingElement:
        """Exchange the 1-based settings ``x`` and ``y``."""
        perm = list(range(S))
        perm[x - 1], perm[y - 1] = y - 1, x - 1
        return cls(tuple(perm), (tuple(range(O)),) * S)

    @classmethod
    def setting_cycle(cls, O: int, S: int, cycle: Iterable[int]) -> RelabelingElement:
        """Cycle of 1-based settings, e.g. ``(1, 2, 3)`` maps 1->2->3->1."""
        cycle = list(cycle)
        perm = list(range(S))
        for a, b in zip(cycle, cycle[1:] + cycle[:1]):
            perm[a - 1] = b - 1
        return cls(tuple(perm), (tuple(range(O)),) * S)

    @classmethod
    def outcome_flip(cls, O: int, S: int, x: int, perm: Perm | None = None) -> RelabelingElement:
        """Relabel the outcomes of the 1-based setting ``x`` only."""
        if perm is None:
            perm = tuple(reversed(range(O)))
        perms = [tuple(range(O))] * S
        perms[x - 1] = tuple(perm)
        return cls(tuple(range(S)), tuple(perms))

    def compose(self, first: RelabelingElement) -> RelabelingElement:
        """The element that applies ``first`` and then ``self``."""
        inv = _invert(self.setting_perm)
        perm = tuple(self.setting_perm[first.setting_perm[x]] for x in range(self.S))
        outs = tuple(
            tuple(self.outcome_perms[x2][first.outcome_perms[inv[x2]][a]] for a in range(self.O))
            for x2 in range(self.S)
        )
        return RelabelingElement(perm, outs)

    def __matmul__(self, other: RelabelingElement) -> RelabelingElement:
        return self.compose(other)

    def inverse(self) -> RelabelingElement:
        inv = _invert(self.setting_perm)
        outs = tuple(_invert(self.outcome_perms[self.setting_perm[x]]) for x in range(self.S))
        return RelabelingElement(inv, outs)


def _invert(p: Perm) -> Perm:
    out = [0] * len(p)
    for i, v in enumerate(p):
        out[v] = i
    return tuple(out)


def group_elements(O: int, S: int, mode: str = RE, variant: str = WREATH) -> Iterator[RelabelingElement]:
    """All relabelings; ``mode=ORE`` keeps the settings fixed."""
    setting_perms = itertools.permutations(range(S)) if mode == RE else [tuple(range(S))]
    outcome_perms = list(itertools.permutations(range(O)))
    for sp in setting_perms:
        if variant == WREATH:
            for ops in itertools.product(outcome_perms, repeat=S):
                yield RelabelingElement(tuple(sp), tuple(ops))
        elif variant == DIRECT:
            for op in outcome_perms:
                yield RelabelingElement(tuple(sp), (op,) * S)
        else:
            raise ValueError(f"unknown group variant {variant!r}")


def group_order(O: int, S: int, mode: str = RE, variant: str = WREATH) -> int:
    outcome = math.factorial(O) ** S if variant == WREATH else math.factorial(O)
    return outcome * (math.factorial(S) if mode == RE else 1)


@lru_cache(maxsize=4096)
def _node_source(S: int, L: int, setting_perm: Perm) -> tuple[int, ...]:
    """For each breadth-first node of the image, the node it is copied from."""
    sc = Scenario(1, S, L)
    inv = _invert(setting_perm)
    src = [0] * node_count(sc)
    for l, k in sc.nodes():
        if l == L:
            continue
        new = sc.offset(l, k)
        for x_new in range(1, S + 1):
            ol, ok = _node_of_offset(sc, src[new])
            src[sc.offset(*sc.child(l, k, x_new))] = sc.offset(*sc.child(ol, ok, inv[x_new - 1] + 1))
    return tuple(src)


def _node_of_offset(sc: Scenario, offset: int) -> tuple[int, int]:
    l = 1
    while sc.level_offset(l + 1) <= offset:
        l += 1
    return l, offset - sc.level_offset(l) + 1


def apply_flat(element: RelabelingElement, flat: tuple[int, ...], S: int, L: int) -> tuple[int, ...]:
    src = _node_source(S, L, element.setting_perm)
    inv = _invert(element.setting_perm)
    ops = element.outcome_perms
    out = []
    for s in src:
        base = s * S
        out.extend(ops[x][flat[base + inv[x]]] for x in range(S))
    return tuple(out)


def _permute_settings(flat: tuple[int, ...], setting_perm: Perm, S: int, L: int) -> tuple[int, ...]:
    src = _node_source(S, L, setting_perm)
    inv = _invert(setting_perm)
    return tuple(flat[s * S + inv[x]] for s in src for x in range(S))


def apply_relabeling(element: RelabelingElement, tree: StrategyTree) -> StrategyTree:
    """Relabel settings and outcomes identically at every time step."""
    sc = tree.scenario
    if element.S != sc.S or element.O != sc.O:
        raise StructureError(
            f"relabeling for O={element.O}, S={element.S} applied to a tree of {sc}"
        )
    flat = apply_flat(element, tree.flat, sc.S, sc.L)
    return _from_flat(sc, flat)


def _from_flat(sc: Scenario, flat: tuple[int, ...]) -> StrategyTree:
    S = sc.S
    return StrategyTree(sc, tuple(flat[i : i + S] for i in range(0, len(flat), S)))


# --------------------------------------------------------------------------
# canonical forms


def _ore_normalize(flat: tuple[int, ...], S: int, variant: str = WREATH) -> tuple[int, ...]:
    # relabel values by order of first appearance: per column (wreath) or globally (direct)
    if variant == DIRECT:
        seen: dict[int, int] = {}
        return tuple(seen.setdefault(z, len(seen)) for z in flat)
    maps: list[dict[int, int]] = [{} for _ in range(S)]
    out = []
    for i, z in enumerate(flat):
        m = maps[i % S]
        out.append(m.setdefault(z, len(m)))
    return tuple(out)


def canonical_flat(
    flat: tuple[int, ...], S: int, L: int, mode: str = RE, variant: str = WREATH
) -> tuple[int, ...]:
    if mode == ORE:
        return _ore_normalize(flat, S, variant)
    best = None
    for sp in itertools.permutations(range(S)):
        cand = _ore_normalize(_permute_settings(flat, sp, S, L), S, variant)
        if best is None or cand < best:
            best = cand
    return best


def canonical_form(tree: StrategyTree, mode: str = RE, variant: str = WREATH) -> StrategyTree:
    """Lexicographically minimal member of the tree's ORE or RE class."""
    if mode not in (ORE, RE):
        raise ValueError(f"mode must be ORE or RE, got {mode!r}")
    sc = tree.scenario
    return _from_flat(sc, canonical_flat(tree.flat, sc.S, sc.L, mode, variant))


def orbit(tree: StrategyTree, mode: str = RE, variant: str = WREATH) -> set[StrategyTree]:
    sc = tree.scenario
    return {apply_relabeling(g, tree) for g in group_elements(sc.O, sc.S, mode, variant)}


# --------------------------------------------------------------------------
# closed-form class counts


def count_ore_classes(scenario: Scenario) -> int:
    """``(2**S)**((S**L - S)/(S - 1))`` ORE classes for two outcomes."""
    if scenario.O != 2:
        raise UnsupportedScenarioError("the ORE class count is only derived for O = 2")
    return (2**scenario.S) ** (node_count(scenario) - 1)


def invariant_component_counts(L: int) -> dict:
    """Invariant-vector counts for ``O = 2, S = 3`` as exact per-step products.

    Returns ``Q`` (``Q_1..Q_L``), ``N_I`` (invariant under all setting
    permutations), ``Ntilde_S`` (invariant under one fixed transposition) and
    ``Ntilde_sigma`` (invariant under a 3-cycle).
    """
    if L < 1:
        raise StructureError("L must be >= 1")
    Q = [(1 + 3 ** (m - 1)) // 2 for m in range(1, L + 1)]
    exp_I = sum(Q[1:])
    exp_S = sum(3 * (3 ** (m - 1) - 1) // 2 + 2 for m in range(2, L + 1))
    exp_sigma = sum(3 ** (m - 1) for m in range(2, L + 1))
    return {"Q": Q, "N_I": 2**exp_I, "Ntilde_S": 2**exp_S, "Ntilde_sigma": 2**exp_sigma}


@dataclass
class OrbitReport:
    scenario: Scenario
    mode: str
    class_count: int
    breakdown: dict[str, int] = field(default_factory=dict)
    representatives: list[StrategyTree] | None = None

    def to_json(self) -> str:
        doc = {
            "scenario": {"O": self.scenario.O, "S": self.scenario.S, "L": self.scenario.L},
            "mode": self.mode,
            "class_count": str(self.class_count),
            "breakdown": {k: str(v) for k, v in self.breakdown.items()},
        }
        if self.representatives is not None:
            doc["representatives"] = [[list(t) for t in r.tuples] for r in self.representatives]
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> OrbitReport:
        doc = json.loads(text)
        sc = Scenario(**doc["scenario"])
        reps = doc.get("representatives")
        if reps is not None:
            reps = [StrategyTree(sc, tuple(tuple(t) for t in r)) for r in reps]
        return cls(
            sc,
            doc["mode"],
            int(doc["class_count"]),
            {k: int(v) for k, v in doc["breakdown"].items()},
            reps,
        )


def count_re_classes(scenario: Scenario) -> OrbitReport:
    """RE class count for ``O = 2`` and ``S`` in ``{2, 3}`` with its orbit breakdown."""
    O, S, L = scenario.O, scenario.S, scenario.L
    if O != 2 or S not in (2, 3):
        raise UnsupportedScenarioError("RE class counts are only derived for O = 2, S in {2, 3}")
    n_ore = count_ore_classes(scenario)
    if S == 2:
        n_i = 4 ** (2 ** (L - 1) - 1)
        n_n, rem = divmod(n_ore - n_i, 2)
        assert rem == 0
        total = n_i + n_n
        assert 2 * total == 4 ** (2**L - 2) + 4 ** (2 ** (L - 1) - 1)
        return OrbitReport(scenario, RE, total, {"N_I": n_i, "N_N": n_n})

    inv = invariant_component_counts(L)
    n_i, nt_s, nt_sigma = inv["N_I"], inv["Ntilde_S"], inv["Ntilde_sigma"]
    n_s = nt_s - n_i
    n_sigma, r1 = divmod(nt_sigma - n_i, 2)
    n_n, r2 = divmod(n_ore - (n_i + 3 * n_s + 2 * n_sigma), 6)
    if r1 or r2:
        raise ArithmeticError("orbit sizes do not divide the invariant counts")
    total = n_i + n_s + n_sigma + n_n
    # closed form N_ORE/6 + Ntilde_S/2 + Ntilde_sigma/3, kept in exact rationals
    closed = Fraction(n_ore, 6) + Fraction(nt_s, 2) + Fraction(nt_sigma, 3)
    if closed.denominator != 1 or closed != total:
        raise ArithmeticError(f"closed form {closed} disagrees with the breakdown {total}")
    return OrbitReport(
        scenario,
        RE,
        total,
        {
            "N_I": n_i,
            "Ntilde_S": nt_s,
            "Ntilde_sigma": nt_sigma,
            "N_S": n_s,
            "N_sigma": n_sigma,
            "N_N": n_n,
        },
    )


def formula_class_count(scenario: Scenario, mode: str) -> int:
    if mode == ORE:
        return count_ore_classes(scenario)
    return count_re_classes(scenario).class_count


# --------------------------------------------------------------------------
# brute-force oracles


DEFAULT_CAP = 10**7


def _orbit_min(flat, elements, S, L):
    return min(apply_flat(g, flat, S, L) for g in elements)


def _partition_shard(args):
    O, S, L, mode, variant, start, stop = args
    sc = Scenario(O, S, L)
    elements = list(group_elements(O, S, mode, variant))
    n = node_count(sc) * S
    reps = set()
    for flat in itertools.islice(itertools.product(range(O), repeat=n), start, stop):
        reps.add(_orbit_min(flat, elements, S, L))
    return reps


def brute_force_orbits(
    scenario: Scenario,
    mode: str = RE,
    variant: str = WREATH,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> set[tuple[int, ...]]:
    """Orbit representatives (minimum over the explicitly applied group) of all trees."""
    total = count_extreme_points(scenario)
    if total > cap:
        raise ResourceLimitError(f"{total} extreme points exceed the cap {cap}")
    O, S, L = scenario.O, scenario.S, scenario.L
    shards = max(1, min(threads, total))
    bounds = [total * i // shards for i in range(shards + 1)]
    jobs = [(O, S, L, mode, variant, a, b) for a, b in zip(bounds, bounds[1:])]
    if shards == 1:
        return _partition_shard(jobs[0])
    reps: set = set()
    with ProcessPoolExecutor(max_workers=shards) as pool:
        for part in pool.map(_partition_shard, jobs):
            reps |= part
    return reps


def brute_force_class_count(
    scenario: Scenario,
    mode: str = RE,
    variant: str = WREATH,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> int:
    return len(brute_force_orbits(scenario, mode, variant, cap, threads))


def burnside_count(scenario: Scenario, mode: str = RE, variant: str = WREATH, cap: int = DEFAULT_CAP) -> Fraction:
    """Average number of fixed trees over the group (exact rational)."""
    total = count_extreme_points(scenario)
    if total > cap:
        raise ResourceLimitError(f"{total} extreme points exceed the cap {cap}")
    O, S, L = scenario.O, scenario.S, scenario.L
    n = node_count(scenario) * S
    elements = list(group_elements(O, S, mode, variant))
    fixed = 0
    for flat in itertools.product(range(O), repeat=n):
        fixed += sum(1 for g in elements if apply_flat(g, flat, S, L) == flat)
    return Fraction(fixed, len(elements))


def brute_force_breakdown(scenario: Scenario) -> dict[str, int]:
    """Invariant counts among ORE representatives (root tuple all zero), ``O = 2``.

    Setting permutations act on ORE classes by relabeling and re-normalizing.
    """
    O, S, L = scenario.O, scenario.S, scenario.L
    if O != 2 or S not in (2, 3):
        raise UnsupportedScenarioError("breakdown oracle implemented for O = 2, S in {2, 3}")
    n = node_count(scenario) * S
    perms = [RelabelingElement(sp, (tuple(range(O)),) * S) for sp in itertools.permutations(range(S))]
    swap = RelabelingElement.setting_swap(O, S, 1, 2)
    cyc = RelabelingElement.setting_cycle(O, S, range(1, S + 1))
    counts = {"N_ORE": 0, "N_I": 0, "Ntilde_S": 0, "Ntilde_sigma": 0}
    for rest in itertools.product(range(O), repeat=n - S):
        rep = (0,) * S + rest

        def fixed_by(g):
            return _ore_normalize(apply_flat(g, rep, S, L), S) == rep

        counts["N_ORE"] += 1
        counts["N_I"] += all(fixed_by(g) for g in perms)
        counts["Ntilde_S"] += fixed_by(swap)
        counts["Ntilde_sigma"] += fixed_by(cyc)
    if S == 2:
        del counts["Ntilde_sigma"]
    return counts
