"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with pytest (lines are repeated in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""
import itertools
import math
import sys
import time

import numpy as np

from aotlab.bounds import (
    INV_E,
    bound_report,
    construct_witness_appc,
    construct_witness_main,
    hoorfar_lower,
    lambert_w_principal,
)
from aotlab.core import Scenario, StrategyTree, iter_trees, tree_to_correlations
from aotlab.inequalities import Block, CompositionPlan, builtin_b, compose, deterministic_maximum, evaluate
from aotlab.machines import find_machine
from aotlab.mindim import max_min_dimension, minimal_dimension, synthesize_realization
from aotlab.quantum import (
    correlation_table,
    instruments_from_realization,
    perturb_convex,
    random_instrument_set,
    random_state,
    robustness_check,
)
from aotlab.symmetry import RE, RelabelingElement, _ore_normalize, apply_flat, brute_force_class_count, count_re_classes

RESULTS: list[str] = []


def _record(n: int, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    within = elapsed < budget
    line = f"[{'PASS' if ok and within else 'FAIL'}] criterion {n}: {detail} ({elapsed:.2f}s, budget {budget:g}s)"
    RESULTS.append(line)
    print(line)
    assert ok, line
    assert within, line


def test_criterion_1_re_classes_two_two_two():
    t0 = time.perf_counter()
    formula = count_re_classes(Scenario(2, 2, 2)).class_count
    brute = brute_force_class_count(Scenario(2, 2, 2), RE)
    _record(1, formula == brute == 10, f"RE classes formula={formula} brute={brute}", time.perf_counter() - t0, 1)


CLASS_REPRESENTATIVES = [
    ((0, 0), (0, 0)), ((0, 0), (1, 1)), ((0, 0), (0, 1)), ((0, 0), (1, 0)), ((0, 1), (0, 1)),
    ((1, 1), (1, 1)), ((0, 1), (1, 0)), ((1, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (0, 1)),
]


def test_criterion_2_class_representatives():
    t0 = time.perf_counter()
    dims = tuple(minimal_dimension(StrategyTree(Scenario(2, 2, 2), ((0, 0), g1, g2)))[0] for g1, g2 in CLASS_REPRESENTATIVES)
    _record(2, dims == (1, 2, 2, 2, 2, 2, 3, 3, 3, 3), f"minimal dimensions {dims}", time.perf_counter() - t0, 1)


def _orbit_type_counts(S: int, L: int) -> dict[str, int]:
    """Sizes of setting-permutation orbits on ORE representatives, counted directly."""
    n = (S**L - 1) // (S - 1) * S
    perms = [RelabelingElement(sp, ((0, 1),) * S) for sp in itertools.permutations(range(S))]
    seen, sizes = set(), {1: 0, 2: 0, 3: 0, 6: 0}
    for rest in itertools.product(range(2), repeat=n - S):
        rep = (0,) * S + rest
        if rep in seen:
            continue
        orb = {_ore_normalize(apply_flat(g, rep, S, L), S) for g in perms}
        seen |= orb
        sizes[len(orb)] += 1
    return {"N_I": sizes[1], "N_S": sizes[3], "N_sigma": sizes[2], "N_N": sizes[6]}


def test_criterion_3_class_count_oracles():
    t0 = time.perf_counter()
    r223 = count_re_classes(Scenario(2, 2, 3)).class_count
    b223 = brute_force_class_count(Scenario(2, 2, 3), RE)
    rep = count_re_classes(Scenario(2, 3, 2))
    b232 = brute_force_class_count(Scenario(2, 3, 2), RE)
    direct = _orbit_type_counts(3, 2)
    expected = {"N_I": 4, "Ntilde_S": 32, "Ntilde_sigma": 8, "N_S": 28, "N_sigma": 2, "N_N": 70}
    ok = (
        r223 == b223 == 2080
        and rep.class_count == b232 == 104
        and rep.breakdown == expected
        and all(direct[k] == expected[k] for k in direct)
    )
    detail = f"(2,2,3) {r223}/{b223}, (2,3,2) {rep.class_count}/{b232}, breakdown {rep.breakdown}, orbit sizes {direct}"
    _record(3, ok, detail, time.perf_counter() - t0, 30)


def test_criterion_4_dimension_cap():
    t0 = time.perf_counter()
    m2 = max_min_dimension(Scenario(2, 2, 2))
    m3 = max_min_dimension(Scenario(2, 3, 2))
    _record(4, (m2, m3) == (3, 4), f"max minimal dimension S=2: {m2}, S=3: {m3}", time.perf_counter() - t0, 10)


def test_criterion_5_realization_round_trip():
    t0 = time.perf_counter()
    trees = list(iter_trees(Scenario(2, 2, 2)))
    trees.append(StrategyTree(Scenario(2, 3, 2), ((0, 0, 0), (0, 0, 0), (1, 1, 1), (0, 0, 1))))
    bad = 0
    for tree in trees:
        rho, insts = instruments_from_realization(synthesize_realization(tree))
        table = correlation_table(rho, insts, tree.scenario)
        bad += not (table.exact and table == tree_to_correlations(tree))
    _record(5, bad == 0, f"{len(trees)} trees simulated exactly, {bad} mismatches", time.perf_counter() - t0, 10)


def test_criterion_6_minimality_oracle():
    t0 = time.perf_counter()
    checked, bad = 0, 0
    for params in [(2, 2, 2), (2, 2, 3)]:
        for tree in iter_trees(Scenario(*params)):
            d = minimal_dimension(tree)[0]
            bad += find_machine(tree, d - 1) is not None
            checked += 1
    _record(6, bad == 0, f"{checked} trees, {bad} with a smaller machine", time.perf_counter() - t0, 300)


def test_criterion_7_bounds():
    t0 = time.perf_counter()
    rep = bound_report(2, 2, 4)
    d_main = minimal_dimension(construct_witness_main(2, 2, 4))[0]
    d_appc = minimal_dimension(construct_witness_appc(2, 2, 4))[0]
    ok = (
        (rep.max_j, rep.main_lower_bound, rep.improved_k, rep.improved_lower_bound) == (3, 4, 3, 7)
        and d_main >= rep.main_lower_bound
        and d_appc >= rep.improved_lower_bound
        and rep.closed_form_flagged
    )
    detail = (
        f"j={rep.max_j} bound={rep.main_lower_bound}, k={rep.improved_k} bound={rep.improved_lower_bound}, "
        f"witness dims {d_main}/{d_appc}, closed form {rep.closed_form_j:.6f} flagged={rep.closed_form_flagged}"
    )
    _record(7, ok, detail, time.perf_counter() - t0, 1)


def test_criterion_8_composition():
    t0 = time.perf_counter()
    b1, e1 = builtin_b(1)
    ineq, _, tree = compose([Block(b1, e1)], CompositionPlan.uniform(2, 2, 2))
    real = synthesize_realization(tree)
    rho, insts = instruments_from_realization(real)
    value = evaluate(ineq, correlation_table(rho, insts, tree.scenario))
    quick = time.perf_counter() - t0
    ok = ineq.algebraic_bound == 16 and minimal_dimension(tree)[0] == real.dimension == 3 and value == 16
    ok = ok and quick < 1

    # bound soundness over every plan of two periods, classical dimensions 1 and 2
    worst = -math.inf
    for d in (1, 2):
        C = [deterministic_maximum(builtin_b(i)[0], d)[0] for i in (1, 2, 3, 4)]
        blocks = [Block(*builtin_b(i), C[i - 1]) for i in (1, 2, 3, 4)]
        for first in range(4):
            for second in itertools.product(range(4), repeat=4):
                composed, bound, _ = compose(blocks, CompositionPlan(2, 2, [[first], list(second)]))
                worst = max(worst, deterministic_maximum(composed, d)[0] - bound)
    ok = ok and worst <= 0
    detail = f"algebraic 16, dimension {real.dimension}, achieved {value} in {quick:.2f}s; max(value - bound) = {worst}"
    _record(8, ok, detail, time.perf_counter() - t0, 60)


def test_criterion_9_robustness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    combos = list(itertools.product((2, 3), (0.001, 0.01, 0.1), (2, 3, 4)))
    draws, violations, worst = 0, 0, 0.0
    while draws < 1008:
        d, eps, L = combos[draws % len(combos)]
        nominal = random_instrument_set(d, 2, 2, rng)
        perturbed, cert = perturb_convex(nominal, eps, random_instrument_set(d, 2, 2, rng))
        rep = robustness_check(random_state(d, rng), nominal, perturbed, cert, Scenario(2, 2, L))
        violations += len(rep.violations)
        worst = max(worst, rep.max_ratio)
        draws += 1
    detail = f"{draws} draws, {violations} violations, largest deviation/bound {worst:.3f}"
    _record(9, violations == 0, detail, time.perf_counter() - t0, 60)


def test_criterion_10_numerics():
    t0 = time.perf_counter()
    grid = np.concatenate([-np.logspace(np.log10(INV_E - 1e-9), -15, 300), [0.0], np.logspace(-15, 15, 600)])
    worst = max(lambert_w_principal(x).residual / max(1.0, abs(x)) for x in grid)
    xs = np.logspace(np.log10(math.e), 9, 5000)
    gap = min(lambert_w_principal(x).w - hoorfar_lower(x) for x in xs)
    ok = worst <= 1e-12 and gap >= 0
    detail = f"max relative residual {worst:.2e} on {len(grid)} points, min W - lower bound {gap:.2e}"
    _record(10, ok, detail, time.perf_counter() - t0, 60)


if __name__ == "__main__":
    failed = 0
    tests = [(k, v) for k, v in dict(globals()).items() if k.startswith("test_criterion_")]
    for _, fn in sorted(tests, key=lambda kv: int(kv[0].split("_")[2])):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
