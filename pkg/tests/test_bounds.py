import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from aotlab.bounds import (
    INV_E,
    BoundReport,
    bound_report,
    closed_form_j,
    construct_witness_appc,
    construct_witness_main,
    corrected_j,
    hoorfar_lower,
    improved_j_real,
    improved_k,
    lambert_w_principal,
    max_j_exact,
)
from aotlab.core import Scenario, node_count
from aotlab.errors import DomainError, StructureError
from aotlab.mindim import Future, futures_equivalent, minimal_dimension


def test_lambert_w_known_values():
    assert lambert_w_principal(0).w == 0
    assert lambert_w_principal(math.e).w == pytest.approx(1, abs=1e-15)
    assert lambert_w_principal(1).w == pytest.approx(0.5671432904097838, abs=1e-15)
    assert lambert_w_principal(-INV_E).w == -1


def test_lambert_w_residual_grid_against_scipy():
    grid = np.concatenate([-np.logspace(np.log10(INV_E - 1e-6), -12, 200), np.logspace(-12, 12, 400)])
    for x in grid:
        res = lambert_w_principal(x)
        assert res.residual <= 1e-12 * max(1.0, abs(x))
        assert res.w == pytest.approx(lambertw(x).real, rel=1e-12, abs=1e-14)


@settings(max_examples=200)
@given(st.floats(-INV_E + 1e-9, 1e15))
def test_lambert_w_property(x):
    res = lambert_w_principal(x)
    assert res.w >= -1
    assert abs(res.w * math.exp(res.w) - x) <= 1e-12 * max(1.0, abs(x))


@pytest.mark.parametrize("x", [-0.5, -1.0, float("nan")])
def test_lambert_w_domain(x):
    with pytest.raises(DomainError):
        lambert_w_principal(x)


def test_hoorfar_lower_bound():
    assert hoorfar_lower(math.e) == pytest.approx(1.0)
    for x in np.logspace(np.log10(math.e), 9, 2000):
        assert hoorfar_lower(x) <= lambert_w_principal(x).w + 1e-15
    with pytest.raises(DomainError):
        hoorfar_lower(2.0)


@pytest.mark.parametrize("O,S,L,j,k", [(2, 2, 4, 3, 3), (2, 2, 2, 2, 1), (2, 2, 3, 3, 2)])
def test_scans(O, S, L, j, k):
    assert max_j_exact(O, S, L) == j
    assert improved_k(O, S, L) == k


def _scan_oracle_j(O, S, L):
    # direct rational check of S^(j-1) <= O^((S^(L-j+2)-S)/(S-1))
    return max(j for j in range(1, L + 1) if S ** ((j - 1) * (S - 1)) <= O ** (S ** (L - j + 2) - S))


def _scan_oracle_k(O, S, L):
    B = O**S
    ok = []
    for k in range(1, L + 1):
        e = (S ** (L - k + 1) - S) // (S - 1)
        # B^e - B^(e-S) with e possibly below S
        if S ** (k - 1) * B**S <= B**e * (B**S - 1):
            ok.append(k)
    return max(ok)


@pytest.mark.parametrize("O,S", [(2, 2), (3, 2), (2, 3), (4, 3), (2, 5)])
def test_scans_match_direct_integer_oracle(O, S):
    for L in range(2, 9 if S < 4 else 6):
        assert max_j_exact(O, S, L) == _scan_oracle_j(O, S, L)
        assert improved_k(O, S, L) == _scan_oracle_k(O, S, L)


def test_report_for_two_two_four():
    rep = bound_report(2, 2, 4)
    assert (rep.max_j, rep.main_lower_bound) == (3, 4)
    assert (rep.improved_k, rep.improved_lower_bound) == (3, 7)
    assert rep.closed_form_flagged
    assert rep.closed_form_floor != rep.max_j


def test_report_without_improvement():
    rep = bound_report(2, 2, 3, improved=False)
    assert rep.improved_k is None and rep.improved_lower_bound is None


def test_report_json_roundtrip():
    rep = bound_report(3, 2, 6)
    text = rep.to_json()
    assert BoundReport.from_json(text) == rep
    assert '"main_lower_bound": "' in text


def test_bad_scenarios():
    for args in [(1, 2, 3), (2, 1, 3), (2, 2, 1)]:
        with pytest.raises(StructureError):
            bound_report(*args)


def test_closed_form_is_monotone_and_corrected_form_tracks_the_scan():
    prev = -math.inf
    for L in range(2, 13):
        cf = closed_form_j(2, 2, L)
        assert cf > prev
        prev = cf
    for O, S in [(2, 2), (3, 2), (2, 3), (5, 4)]:
        for L in range(2, 12):
            assert abs(corrected_j(O, S, L) - max_j_exact(O, S, L)) < 1


@pytest.mark.parametrize("O,S", [(2, 2), (3, 2), (2, 3)])
def test_improved_is_at_least_as_strong(O, S):
    for L in range(2, 10):
        rep = bound_report(O, S, L)
        assert rep.improved_k <= rep.improved_j_real + 1e-9
        assert 1 <= rep.main_lower_bound <= node_count(Scenario(O, S, L))
        assert 1 <= rep.improved_lower_bound <= node_count(Scenario(O, S, L))
        assert rep.improved_lower_bound == (S**rep.improved_k - 1) // (S - 1)


def _witness_params():
    for O in (2, 3):
        for S in (2, 3):
            for L in range(2, 15):
                if S**L <= 2**14 and O * S**L <= 2**14:
                    yield O, S, L


@pytest.mark.parametrize("O,S,L", list(_witness_params()))
def test_main_witness(O, S, L):
    tree = construct_witness_main(O, S, L)
    d, _ = minimal_dimension(tree)
    assert d >= bound_report(O, S, L, improved=False).main_lower_bound
    j = max_j_exact(O, S, L)
    futures = [Future.of_node(tree, j, i) for i in range(1, S ** (j - 1) + 1)]
    for a in range(len(futures)):
        for b in range(a + 1, len(futures)):
            assert not futures_equivalent(futures[a], futures[b])


@pytest.mark.parametrize("O,S,L", list(_witness_params()))
def test_improved_witness(O, S, L):
    if improved_k(O, S, L) >= L:
        pytest.skip("no remaining step below depth k")
    tree = construct_witness_appc(O, S, L)
    k = improved_k(O, S, L)
    d, _ = minimal_dimension(tree)
    assert d >= bound_report(O, S, L).improved_lower_bound
    subtrees = [Future.of_node(tree, k, i).subtree for i in range(1, S ** (k - 1) + 1)]
    assert len(set(subtrees)) == len(subtrees)
    for sub in subtrees:
        assert sub[0] == (0,) * S
        assert any(any(t) for t in sub[1 : 1 + S])


def test_known_witness_dimensions():
    assert minimal_dimension(construct_witness_main(2, 2, 4))[0] == 9
    assert minimal_dimension(construct_witness_appc(2, 2, 4))[0] == 10


def test_main_bound_grows_geometrically():
    ratios = []
    prev = bound_report(2, 2, 2, improved=False).main_lower_bound
    for L in range(3, 21):
        cur = bound_report(2, 2, L, improved=False).main_lower_bound
        ratios.append(cur // prev if cur % prev == 0 else None)
        prev = cur
    assert set(ratios) <= {1, 2}
    # the bound advances every step except for sparse stalls
    assert ratios[-8:].count(2) >= 6
