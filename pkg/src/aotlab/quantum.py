"""Sequential quantum instruments: simulation, Choi matrices and drift robustness.

Matrices with integer or object (``Fraction``) dtype are propagated exactly;
complex floating matrices use machine precision with tolerance ``1e-9``.
Maps are given in the Schroedinger picture as Kraus lists,
``rho -> sum_j K_j rho K_j^dagger``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .core import CorrelationTable, Scenario, _check_table_size
from .errors import ParseError, StructureError
from .mindim import Realization

TOL = 1e-9


def is_exact(m: np.ndarray) -> bool:
    return m.dtype.kind in "iuO"


def _dagger(K: np.ndarray) -> np.ndarray:
    return K.T if is_exact(K) else K.conj().T


def apply_map(kraus: Sequence[np.ndarray], rho: np.ndarray) -> np.ndarray:
    out = None
    for K in kraus:
        term = K @ rho @ _dagger(K)
        out = term if out is None else out + term
    if out is None:
        return rho * 0
    return out


def trace(m: np.ndarray):
    t = np.trace(m)
    if isinstance(t, (complex, np.complexfloating)):
        return float(t.real)
    return t


@dataclass(frozen=True)
class Instrument:
    """Kraus operators ``kraus[a]`` for every outcome ``a`` of one setting."""

    setting: int
    kraus: tuple[tuple[np.ndarray, ...], ...]

    @property
    def dimension(self) -> int:
        for ops in self.kraus:
            if ops:
                return ops[0].shape[0]
        raise StructureError("instrument without Kraus operators")

    @property
    def outcomes(self) -> int:
        return len(self.kraus)

    @property
    def exact(self) -> bool:
        return all(is_exact(K) for ops in self.kraus for K in ops)

    def effect(self, a: int) -> np.ndarray:
        d = self.dimension
        E = np.zeros((d, d), dtype=np.int64 if self.exact else complex)
        for K in self.kraus[a]:
            E = E + _dagger(K) @ K
        return E

    def validate(self, tol: float = TOL) -> None:
        d = self.dimension
        for ops in self.kraus:
            for K in ops:
                if K.shape != (d, d):
                    raise StructureError(f"Kraus operator of shape {K.shape} in a dimension-{d} instrument")
        total = sum(self.effect(a) for a in range(self.outcomes))
        eye = np.eye(d, dtype=np.int64)
        if self.exact:
            if not np.all(total == eye):
                raise StructureError(f"instrument for setting {self.setting} is not trace preserving")
        elif np.max(np.abs(total - eye)) > tol:
            raise StructureError(f"instrument for setting {self.setting} is not trace preserving")
        for a in range(self.outcomes):
            if self.exact:
                continue
            w = np.linalg.eigvalsh(self.effect(a))
            if w.min() < -tol or w.max() > 1 + tol:
                raise StructureError(f"effect ({a}|{self.setting}) is not between 0 and identity")


InstrumentSet = Mapping[int, Instrument]


def validate_instruments(instruments: InstrumentSet, dimension: int | None = None, tol: float = TOL) -> None:
    dims = {inst.dimension for inst in instruments.values()}
    if len(dims) != 1 or (dimension is not None and dims != {dimension}):
        raise StructureError(f"instrument dimensions {sorted(dims)} do not match the state")
    for x, inst in instruments.items():
        if inst.setting != x:
            raise StructureError(f"instrument stored under setting {x} claims setting {inst.setting}")
        inst.validate(tol)


def instruments_from_realization(real: Realization) -> tuple[np.ndarray, dict[int, Instrument]]:
    """Exact initial state and instrument set of a classical realization."""
    ops = real.kraus()
    insts = {
        x: Instrument(x, tuple(tuple(K for _, K in ops[(x, a)]) for a in range(real.O)))
        for x in range(1, real.S + 1)
    }
    return real.initial_state(), insts


def sequence_probability(
    rho: np.ndarray,
    instruments: InstrumentSet,
    inputs: Sequence[int],
    outputs: Sequence[int],
    validate: bool = True,
):
    """``tr[I_{a_L|x_L} o ... o I_{a_1|x_1}(rho)]`` with the same instrument at every step."""
    if len(inputs) != len(outputs):
        raise StructureError("input and output sequences differ in length")
    if validate:
        validate_instruments(instruments, rho.shape[0])
    state = rho
    for x, a in zip(inputs, outputs):
        if x not in instruments:
            raise StructureError(f"no instrument for setting {x}")
        state = apply_map(instruments[x].kraus[a], state)
    return trace(state)


def correlation_table(rho: np.ndarray, instruments: InstrumentSet, scenario: Scenario) -> CorrelationTable:
    """All sequence probabilities, propagating unnormalized states along prefixes."""
    _check_table_size(scenario)
    validate_instruments(instruments, rho.shape[0])
    exact = is_exact(rho) and all(inst.exact for inst in instruments.values())
    table = CorrelationTable.zeros(scenario, exact=exact)
    S, O, L = scenario.S, scenario.O, scenario.L

    def walk(state, xs, as_):
        if len(xs) == L:
            p = trace(state)
            table.probs[tuple(x - 1 for x in xs) + tuple(as_)] = Fraction(p) if exact else p
            return
        for x in range(1, S + 1):
            for a in range(O):
                walk(apply_map(instruments[x].kraus[a], state), xs + (x,), as_ + (a,))

    walk(rho, (), ())
    return table


# --------------------------------------------------------------------------
# Choi matrices and diamond-norm brackets


def choi_matrix(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """``(Phi (x) id)(|Omega><Omega|)`` with ``|Omega> = sum_i |ii> / sqrt(d)``."""
    if not kraus:
        raise StructureError("empty Kraus list")
    d = kraus[0].shape[0]
    if any(K.shape != (d, d) for K in kraus):
        raise StructureError("Kraus operators have ragged dimensions")
    omega = np.eye(d, dtype=complex).reshape(d * d) / np.sqrt(d)
    J = np.zeros((d * d, d * d), dtype=complex)
    for K in kraus:
        v = np.kron(np.asarray(K, dtype=complex), np.eye(d)) @ omega
        J += np.outer(v, v.conj())
    return J


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2))))


def diamond_distance_bounds(kraus_a: Sequence[np.ndarray], kraus_b: Sequence[np.ndarray]) -> tuple[float, float]:
    """Bracket ``||A - B||_diamond`` between the Choi-state value and ``d`` times it."""
    d = kraus_a[0].shape[0]
    if kraus_b[0].shape[0] != d:
        raise StructureError("maps act on different dimensions")
    lower = trace_norm(choi_matrix(kraus_a) - choi_matrix(kraus_b))
    return lower, d * lower


# --------------------------------------------------------------------------
# random instruments and drift


def random_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ``rows x cols`` isometry (QR with phase fix)."""
    z = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_instrument_set(
    d: int, O: int, S: int, rng: np.random.Generator, kraus_per_outcome: int = 2
) -> dict[int, Instrument]:
    """Each setting's Kraus operators are the ``d x d`` blocks of one random isometry."""
    insts = {}
    for x in range(1, S + 1):
        V = random_isometry(d * O * kraus_per_outcome, d, rng)
        blocks = [V[i * d : (i + 1) * d] for i in range(O * kraus_per_outcome)]
        insts[x] = Instrument(
            x, tuple(tuple(blocks[a * kraus_per_outcome : (a + 1) * kraus_per_outcome]) for a in range(O))
        )
    return insts


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def perturb_convex(
    instruments: InstrumentSet, epsilon: float, alternative: InstrumentSet
) -> tuple[dict[int, Instrument], float]:
    """``(1 - eps) I_{a|x} + eps F_{a|x}`` and the certified per-map distance ``2 eps``."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if set(instruments) != set(alternative):
        raise StructureError("instrument sets cover different settings")
    out = {}
    for x, inst in instruments.items():
        alt = alternative[x]
        if alt.outcomes != inst.outcomes or alt.dimension != inst.dimension:
            raise StructureError(f"setting {x}: instruments have different shapes")
        ops = []
        for a in range(inst.outcomes):
            nominal = [np.sqrt(1 - epsilon) * K for K in inst.kraus[a]] if epsilon < 1 else []
            drift = [np.sqrt(epsilon) * K for K in alt.kraus[a]] if epsilon > 0 else []
            ops.append(tuple(nominal + drift))
        out[x] = Instrument(x, tuple(ops))
    return out, 2 * epsilon


@dataclass
class RobustnessReport:
    length: int
    certified_eps: float
    sequences: int = 0
    max_deviation: float = 0.0
    max_ratio: float = 0.0
    violations: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def robustness_check(
    rho: np.ndarray,
    nominal: InstrumentSet,
    perturbed: InstrumentSet,
    certified_eps: float,
    scenario: Scenario,
    perturb_from_step: int = 2,
    perturb_first_step: bool = False,
    slack: float = 1e-12,
) -> RobustnessReport:
    """Compare drifted and nominal sequence probabilities of length ``scenario.L``.

    Default: step 1 nominal, steps ``perturb_from_step..L`` drifted; every
    deviation must stay below ``(L - 1) * eps * tr[I_{a1|x1}(rho)]``. With
    ``perturb_first_step`` every step drifts and the bound is ``L * eps``.
    ``slack`` absorbs floating-point rounding only.
    """
    if perturb_from_step < 2 and not perturb_first_step:
        raise ValueError("perturb_from_step must be >= 2")
    if set(nominal) != set(perturbed):
        raise StructureError("instrument sets cover different settings")
    L, S, O = scenario.L, scenario.S, scenario.O
    report = RobustnessReport(L, certified_eps)
    start = 1 if perturb_first_step else perturb_from_step

    def walk(state, state_t, t, xs, as_, p_first):
        if t > L:
            p, pt = trace(state), trace(state_t)
            dev = abs(pt - p)
            bound = L * certified_eps if perturb_first_step else (L - 1) * certified_eps * p_first
            report.sequences += 1
            report.max_deviation = max(report.max_deviation, dev)
            if bound > 0:
                report.max_ratio = max(report.max_ratio, dev / bound)
            if dev > bound + slack:
                report.violations.append(
                    {"inputs": xs, "outputs": as_, "p": p, "p_tilde": pt, "bound": bound}
                )
            return
        for x in range(1, S + 1):
            for a in range(O):
                nxt = apply_map(nominal[x].kraus[a], state)
                drift = perturbed if t >= start else nominal
                nxt_t = apply_map(drift[x].kraus[a], state_t)
                pf = trace(nxt) if t == 1 else p_first
                walk(nxt, nxt_t, t + 1, xs + (x,), as_ + (a,), pf)

    walk(rho, rho, 1, (), (), None)
    return report


# --------------------------------------------------------------------------
# JSON with complex entries as [re, im] pairs


def _matrix_to_json(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def _matrix_from_json(rows) -> np.ndarray:
    try:
        return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad matrix entry: {exc}") from exc


def instruments_to_json(rho: np.ndarray, instruments: InstrumentSet) -> str:
    doc = {
        "dimension": int(rho.shape[0]),
        "state": _matrix_to_json(rho),
        "instruments": [
            {"setting": x, "kraus": [[_matrix_to_json(K) for K in ops] for ops in inst.kraus]}
            for x, inst in sorted(instruments.items())
        ],
    }
    return json.dumps(doc, sort_keys=True)


def instruments_from_json(text: str) -> tuple[np.ndarray, dict[int, Instrument]]:
    try:
        doc = json.loads(text)
        rho = _matrix_from_json(doc["state"])
        insts = {
            int(item["setting"]): Instrument(
                int(item["setting"]),
                tuple(tuple(_matrix_from_json(K) for K in ops) for ops in item["kraus"]),
            )
            for item in doc["instruments"]
        }
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed instrument document: {exc}") from exc
    validate_instruments(insts, rho.shape[0])
    return rho, insts
