"""Lower bounds on the dimension needed for worst-case extreme points.

Every reported ``j``/``k`` comes from exact integer scans. The Lambert-W
closed forms are evaluated for comparison only.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .core import Scenario, StrategyTree, _geometric_sum, graft, node_count
from .errors import DomainError, StructureError

INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class LambertResult:
    x: float
    w: float
    residual: float


def lambert_w_principal(x: float, max_iter: int = 100) -> LambertResult:
    """Principal branch ``W(x)`` (``w e^w = x``, ``w >= -1``) by damped Halley iteration."""
    x = float(x)
    if math.isnan(x) or x < -INV_E - 1e-16:
        raise DomainError(f"W(x) is real only for x >= -1/e, got {x}")
    if x <= -INV_E:
        return LambertResult(x, -1.0, abs(-INV_E - x))
    if x == 0.0:
        return LambertResult(x, 0.0, 0.0)
    if math.isinf(x):
        return LambertResult(x, math.inf, 0.0)

    if x < -0.25:
        # series about the branch point
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    elif x < 3.0:
        w = math.log1p(x)
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1

    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1) if wp1 != 0 else ew
        step = f / denom if denom != 0 else 0.0
        new = w - step
        while new < -1.0:
            step /= 2.0
            new = w - step
        if abs(new - w) <= 1e-16 * (1.0 + abs(new)):
            w = new
            break
        w = new
    return LambertResult(x, w, abs(w * math.exp(w) - x))


def _lambert_w_of_exp(t: float) -> float:
    """``W(e^t)`` for large ``t`` without forming ``e^t`` (Newton on ``w + ln w = t``)."""
    if t < 700:
        return lambert_w_principal(math.exp(t)).w
    w = t - math.log(t)
    for _ in range(100):
        step = (w + math.log(w) - t) / (1.0 + 1.0 / w)
        w -= step
        if abs(step) <= 1e-15 * w:
            break
    return w


def hoorfar_lower(x: float) -> float:
    """``ln x - ln ln x + ln ln x / (2 ln x)``, a lower bound on ``W(x)`` for ``x >= e``."""
    if x < math.e:
        raise DomainError(f"the bound holds for x >= e, got {x}")
    l1 = math.log(x)
    l2 = math.log(l1)
    return l1 - l2 + l2 / (2.0 * l1)


# --------------------------------------------------------------------------
# exact scans


def _pow_le(a: int, m: int, b: int, n: int) -> bool:
    """Exact ``a**m <= b**n`` for positive integers; logs decide clear cases."""
    lhs = m * math.log2(a) if m else 0.0
    rhs = n * math.log2(b) if n else 0.0
    margin = 1e-9 * max(1.0, lhs, rhs) + 1e-6
    if lhs < rhs - margin:
        return True
    if lhs > rhs + margin:
        return False
    return a**m <= b**n


def _check(O: int, S: int, L: int) -> None:
    if O < 2 or S < 2 or L < 2:
        raise StructureError("bounds need O >= 2, S >= 2 and L >= 2")


def max_j_exact(O: int, S: int, L: int) -> int:
    """Largest ``j <= L`` with ``S**(j-1) <= O**((S**(L-j+2) - S)/(S-1))``."""
    _check(O, S, L)
    for j in range(L, 0, -1):
        # raised to the power S-1 to stay in integers
        if _pow_le(S, (j - 1) * (S - 1), O, S ** (L - j + 2) - S):
            return j
    raise AssertionError("j = 1 always satisfies the condition")


def improved_k(O: int, S: int, L: int) -> int:
    """Largest ``k`` with ``S**(k-1) <= B**e - B**(e-S)``, ``B = O**S``, ``e = (S**(L-k+1)-S)/(S-1)``.

    Both sides are multiplied by ``B**S`` so the comparison stays in integers.
    """
    _check(O, S, L)
    B = O**S
    for k in range(L, 0, -1):
        e = (S ** (L - k + 1) - S) // (S - 1)
        lhs_log = (k - 1) * math.log2(S) + S * math.log2(B)
        rhs_log = e * math.log2(B) + math.log2(B**S - 1)
        margin = 1e-9 * max(1.0, lhs_log, rhs_log) + 1e-6
        if lhs_log < rhs_log - margin:
            return k
        if lhs_log <= rhs_log + margin and S ** (k - 1) * B**S <= B**e * (B**S - 1):
            return k
    raise AssertionError("k = 1 always satisfies the condition")


def improved_j_real(O: int, S: int, L: int) -> float:
    """Real root of the improved condition, by bisection in log space."""
    _check(O, S, L)
    lnB = S * math.log(O)
    tail = math.log1p(-math.exp(-S * lnB))

    def g(j):
        e = (S ** (L - j + 1) - S) / (S - 1)
        return e * lnB + tail - (j - 1) * math.log(S)

    lo, hi = 0.0, L + 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if g(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def closed_form_j(O: int, S: int, L: int) -> float:
    """The Lambert-W expression for the maximal ``j`` (before taking the floor)."""
    _check(O, S, L)
    lnS = math.log(S)
    logSO = math.log(O) / lnS
    c = S / (S - 1) * logSO
    # ln of the W argument (S^L/(S-1) log_S O) S^c ln S
    ln_arg = L * lnS - math.log(S - 1) + math.log(logSO) + c * lnS + math.log(lnS)
    return _lambert_w_of_exp(ln_arg) / lnS - c + 2


def corrected_j(O: int, S: int, L: int) -> float:
    """Real solution of the scan condition with ``y = j - 1``.

    ``y = a S**-y + b`` with ``a = S**(L+1) log_S O / (S-1)`` and
    ``b = -S log_S O / (S-1)``, hence ``y = W(a S**-b ln S)/ln S + b``.
    """
    _check(O, S, L)
    lnS = math.log(S)
    logSO = math.log(O) / lnS
    b = -S * logSO / (S - 1)
    ln_arg = (L + 1) * lnS + math.log(logSO) - math.log(S - 1) - b * lnS + math.log(lnS)
    return _lambert_w_of_exp(ln_arg) / lnS + b + 1


@dataclass
class BoundReport:
    O: int
    S: int
    L: int
    max_j: int
    main_lower_bound: int
    closed_form_j: float
    closed_form_floor: int
    closed_form_flagged: bool
    corrected_j: float
    improved_k: int | None = None
    improved_lower_bound: int | None = None
    improved_j_real: float | None = None

    def to_json(self) -> str:
        doc = asdict(self)
        for key in ("main_lower_bound", "improved_lower_bound"):
            if doc[key] is not None:
                doc[key] = str(doc[key])
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> BoundReport:
        doc = json.loads(text)
        for key in ("main_lower_bound", "improved_lower_bound"):
            if doc.get(key) is not None:
                doc[key] = int(doc[key])
        return cls(**doc)


def bound_report(O: int, S: int, L: int, improved: bool = True) -> BoundReport:
    j = max_j_exact(O, S, L)
    cf = closed_form_j(O, S, L)
    cf_floor = math.floor(cf + 1e-9)
    rep = BoundReport(
        O, S, L, j, S ** (j - 1), cf, cf_floor, cf_floor != j, corrected_j(O, S, L)
    )
    if improved:
        k = improved_k(O, S, L)
        rep.improved_k = k
        rep.improved_lower_bound = _geometric_sum(S, k)
        rep.improved_j_real = improved_j_real(O, S, L)
    return rep


# --------------------------------------------------------------------------
# witness extreme points


def _digits(value: int, base: int, n: int) -> list[int]:
    out = [0] * n
    for i in range(n - 1, -1, -1):
        value, out[i] = divmod(value, base)
    if value:
        raise ValueError("value does not fit in the requested digits")
    return out


def _chunks(flat: list[int], S: int) -> list[tuple[int, ...]]:
    return [tuple(flat[i : i + S]) for i in range(0, len(flat), S)]


def construct_witness_main(O: int, S: int, L: int) -> StrategyTree:
    """Zero tuples above depth ``j``; pairwise different futures below it (index order)."""
    j = max_j_exact(O, S, L)
    sc = Scenario(O, S, L)
    width = node_count(Scenario(O, S, L - j + 1)) * S
    tuples = [(0,) * S] * node_count(sc)
    for i in range(S ** (j - 1)):
        graft(sc, tuples, j, i + 1, _chunks(_digits(i, O, width), S))
    return StrategyTree(sc, tuple(tuples))


def construct_witness_appc(O: int, S: int, L: int) -> StrategyTree:
    """Zero tuples above depth ``k``; below it pairwise different futures with a zero
    root tuple and at least one non-zero tuple on their second level."""
    k = improved_k(O, S, L)
    sc = Scenario(O, S, L)
    r = L - k
    if r < 1:
        raise AssertionError("the improved construction needs at least one remaining step")
    rest_nodes = node_count(Scenario(O, S, r + 1)) - 1 - S
    rest_count = O ** (S * rest_nodes)
    tuples = [(0,) * S] * node_count(sc)
    for i in range(S ** (k - 1)):
        second, rest = divmod(i, rest_count)
        body = _digits(second + 1, O, S * S) + _digits(rest, O, S * rest_nodes)
        graft(sc, tuples, k, i + 1, _chunks([0] * S + body, S))
    return StrategyTree(sc, tuple(tuples))
