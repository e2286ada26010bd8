from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aotlab.core import Scenario, StrategyTree, check_aot, iter_trees, tree_to_correlations
from aotlab.errors import ParseError, StructureError
from aotlab.inequalities import builtin_b, evaluate
from aotlab.mindim import synthesize_realization
from aotlab.quantum import (
    Instrument,
    choi_matrix,
    correlation_table,
    diamond_distance_bounds,
    instruments_from_json,
    instruments_from_realization,
    instruments_to_json,
    perturb_convex,
    random_instrument_set,
    random_state,
    robustness_check,
    sequence_probability,
    trace,
    trace_norm,
    validate_instruments,
)

THREE_SETTING = ((0, 0, 0), (0, 0, 0), (1, 1, 1), (0, 0, 1))
PAULI = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.diag([1, -1]).astype(complex),
]
DEPOLARIZING = [P / 2 for P in PAULI]


def z_instrument(x=1):
    return Instrument(x, ((np.diag([1.0, 0.0]).astype(complex),), (np.diag([0.0, 1.0]).astype(complex),)))


def test_three_setting_realization_sequence():
    rho, insts = instruments_from_realization(synthesize_realization(StrategyTree(Scenario(2, 3, 2), THREE_SETTING)))
    assert sequence_probability(rho, insts, (2, 1), (0, 1)) == 1
    assert sequence_probability(rho, insts, (2, 1), (0, 0)) == 0


def test_mixed_qubit_projective_measurement():
    insts = {1: z_instrument()}
    rho = np.eye(2, dtype=complex) / 2
    assert sequence_probability(rho, insts, (1, 1), (0, 0)) == pytest.approx(0.5, abs=1e-12)
    assert sequence_probability(rho, insts, (1, 1), (0, 1)) == pytest.approx(0.0, abs=1e-12)


def test_exact_rational_mode():
    insts = {1: Instrument(1, ((np.array([[1, 0], [0, 0]]),), (np.array([[0, 0], [0, 1]]),)))}
    half = np.array([[Fraction(1, 2), 0], [0, Fraction(1, 2)]], dtype=object)
    assert sequence_probability(half, insts, (1,), (0,)) == Fraction(1, 2)


def test_length_and_dimension_errors():
    insts = {1: z_instrument()}
    rho = np.eye(2, dtype=complex) / 2
    with pytest.raises(StructureError):
        sequence_probability(rho, insts, (1, 1), (0,))
    with pytest.raises(StructureError):
        sequence_probability(np.eye(3) / 3, insts, (1,), (0,))


def test_invalid_instrument_rejected():
    bad = Instrument(1, ((np.eye(2, dtype=complex),), (np.eye(2, dtype=complex),)))
    with pytest.raises(StructureError):
        validate_instruments({1: bad})


def test_realization_tables_round_trip_exactly():
    for tree in iter_trees(Scenario(2, 2, 2)):
        rho, insts = instruments_from_realization(synthesize_realization(tree))
        table = correlation_table(rho, insts, tree.scenario)
        assert table.exact
        assert table == tree_to_correlations(tree)
        assert set(np.unique(table.probs)) <= {0, 1}


def test_e1_realization_reaches_algebraic_bound():
    b1, e1 = builtin_b(1)
    rho, insts = instruments_from_realization(synthesize_realization(e1))
    assert evaluate(b1, correlation_table(rho, insts, e1.scenario)) == 4


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2, 2), (3, 2, 2), (2, 3, 2), (2, 2, 3)]))
def test_random_instruments_give_normalized_aot_tables(seed, params):
    rng = np.random.default_rng(seed)
    sc = Scenario(*params)
    d = 2 + seed % 2
    insts = random_instrument_set(d, sc.O, sc.S, rng)
    validate_instruments(insts, d)
    table = correlation_table(random_state(d, rng), insts, sc)
    report = check_aot(table, 1e-9)
    assert report.passed, report
    sums = table.probs.reshape(sc.S**sc.L, sc.O**sc.L).sum(axis=1)
    assert np.allclose(sums, 1, atol=1e-9)


def test_distinct_states_have_orthogonal_supports():
    # each pair of states is told apart with certainty by some input sequence,
    # and the corresponding density matrices are orthogonal
    for tree in list(iter_trees(Scenario(2, 2, 3)))[::11]:
        real = synthesize_realization(tree)
        _, insts = instruments_from_realization(real)
        d = real.dimension
        states = [np.diag([1 if i == s else 0 for i in range(d)]) for s in range(d)]
        for i in range(d):
            for j in range(i + 1, d):
                run_i = type(real)(real.O, real.S, d, i + 1, real.transitions).run
                run_j = type(real)(real.O, real.S, d, j + 1, real.transitions).run
                xs = next(xs for xs in tree.scenario.input_sequences() if run_i(xs) != run_j(xs))
                assert sequence_probability(states[i], insts, xs, run_i(xs)) == 1
                assert sequence_probability(states[j], insts, xs, run_i(xs)) == 0
                assert np.trace(states[i] @ states[j]) == 0


def test_choi_of_identity_and_depolarizing():
    J = choi_matrix([np.eye(2, dtype=complex)])
    omega = np.zeros(4, dtype=complex)
    omega[[0, 3]] = 1 / np.sqrt(2)
    assert np.allclose(J, np.outer(omega, omega.conj()))
    assert trace(J) == pytest.approx(1)
    assert np.allclose(choi_matrix(DEPOLARIZING), np.eye(4) / 4)


def test_choi_is_additive_and_trace_bounded():
    rng = np.random.default_rng(7)
    for _ in range(50):
        insts = random_instrument_set(3, 2, 1, rng)
        a, b = insts[1].kraus
        assert np.allclose(choi_matrix(list(a) + list(b)), choi_matrix(a) + choi_matrix(b))
        assert trace(choi_matrix(a)) <= 1 + 1e-12
        assert np.all(np.linalg.eigvalsh(choi_matrix(a)) > -1e-12)


def test_choi_rejects_ragged_kraus():
    with pytest.raises(StructureError):
        choi_matrix([np.eye(2), np.eye(3)])


def test_diamond_bracket():
    assert diamond_distance_bounds(DEPOLARIZING, DEPOLARIZING) == (0.0, 0.0)
    lower, upper = diamond_distance_bounds([np.eye(2, dtype=complex)], DEPOLARIZING)
    # Choi difference has eigenvalues 3/4 and -1/4 (three times)
    assert lower == pytest.approx(1.5)
    assert upper == pytest.approx(2 * lower)
    assert trace_norm(np.diag([0.75, -0.25, -0.25, -0.25])) == pytest.approx(1.5)


def test_convex_perturbation_edges():
    rng = np.random.default_rng(3)
    nom = random_instrument_set(2, 2, 2, rng)
    alt = random_instrument_set(2, 2, 2, rng)
    same, cert = perturb_convex(nom, 0.0, alt)
    assert cert == 0
    rho = random_state(2, rng)
    for xs in [(1, 2), (2, 2)]:
        for as_ in [(0, 1), (1, 1)]:
            assert sequence_probability(rho, same, xs, as_) == pytest.approx(sequence_probability(rho, nom, xs, as_))
    full, cert = perturb_convex(nom, 1.0, alt)
    assert cert == 2
    assert sequence_probability(rho, full, (1, 2), (0, 1)) == pytest.approx(sequence_probability(rho, alt, (1, 2), (0, 1)))
    with pytest.raises(ValueError):
        perturb_convex(nom, 1.5, alt)


def test_convex_perturbations_stay_valid_and_are_bracketed():
    rng = np.random.default_rng(11)
    for trial in range(100):
        d = 2 + trial % 2
        eps = [0.001, 0.01, 0.1, 0.5][trial % 4]
        nom = random_instrument_set(d, 2, 2, rng)
        alt = random_instrument_set(d, 2, 2, rng)
        pert, cert = perturb_convex(nom, eps, alt)
        validate_instruments(pert, d)
        for x in (1, 2):
            for a in (0, 1):
                lower, upper = diamond_distance_bounds(nom[x].kraus[a], pert[x].kraus[a])
                assert lower <= cert + 1e-12
                assert lower <= upper


def test_robustness_zero_epsilon():
    rng = np.random.default_rng(5)
    nom = random_instrument_set(2, 2, 2, rng)
    pert, cert = perturb_convex(nom, 0.0, random_instrument_set(2, 2, 2, rng))
    rep = robustness_check(random_state(2, rng), nom, pert, cert, Scenario(2, 2, 3))
    assert rep.max_deviation == pytest.approx(0, abs=1e-15)
    assert rep.passed


def test_robustness_two_steps_uses_single_epsilon_term():
    rng = np.random.default_rng(9)
    nom = random_instrument_set(2, 2, 2, rng)
    pert, cert = perturb_convex(nom, 0.05, random_instrument_set(2, 2, 2, rng))
    rho = random_state(2, rng)
    rep = robustness_check(rho, nom, pert, cert, Scenario(2, 2, 2))
    ratio = 0.0
    for xs in Scenario(2, 2, 2).input_sequences():
        for as_ in Scenario(2, 2, 2).output_sequences():
            p = sequence_probability(rho, nom, xs, as_)
            # step 1 nominal, step 2 drifted
            first = sequence_probability(rho, nom, xs[:1], as_[:1])
            rho1 = sum(K @ rho @ K.conj().T for K in nom[xs[0]].kraus[as_[0]])
            pt = sequence_probability(rho1, pert, xs[1:], as_[1:])
            assert abs(pt - p) <= cert * first + 1e-12
            if first > 0:
                ratio = max(ratio, abs(pt - p) / (cert * first))
    assert rep.sequences == 16
    assert rep.max_ratio == pytest.approx(ratio)


def test_robustness_first_step_variant():
    rng = np.random.default_rng(21)
    for trial in range(30):
        nom = random_instrument_set(2, 2, 2, rng)
        pert, cert = perturb_convex(nom, 0.1, random_instrument_set(2, 2, 2, rng))
        rep = robustness_check(random_state(2, rng), nom, pert, cert, Scenario(2, 2, 3), perturb_first_step=True)
        assert rep.passed


def test_robustness_requires_nominal_first_step():
    rng = np.random.default_rng(1)
    nom = random_instrument_set(2, 2, 2, rng)
    with pytest.raises(ValueError):
        robustness_check(random_state(2, rng), nom, nom, 0.0, Scenario(2, 2, 2), perturb_from_step=1)


def test_instrument_json_roundtrip():
    rng = np.random.default_rng(2)
    rho = random_state(3, rng)
    insts = random_instrument_set(3, 2, 2, rng)
    rho2, insts2 = instruments_from_json(instruments_to_json(rho, insts))
    assert np.array_equal(rho, rho2)
    for x in insts:
        for ops, ops2 in zip(insts[x].kraus, insts2[x].kraus):
            assert all(np.array_equal(K, K2) for K, K2 in zip(ops, ops2))
    with pytest.raises(ParseError):
        instruments_from_json('{"state": [[[1, 0]]]}')
