"""Post-processing of measurement records into physical quantities.

Purity. With outcome distribution P̃_U on an ℓ-site subsystem, each
unitary contributes

    X_U = 2^ℓ Σ_{s,s'} (-2)^{-D[s,s']} P̃_U(s) P̃_U(s'),

where D is the Hamming distance. The kernel factorizes per site into
[[2, -1], [-1, 2]], so X_U is a quadratic form evaluated with one
O(ℓ 2^ℓ) transform instead of a 4^ℓ double sum. Averaging X_U over
unitaries gives x; for empirical distributions from N shots the
unbiased value is x N/(N-1) - 2^ℓ/(N-1). That closed form equals the
U-statistic over distinct shot pairs exactly: the diagonal of the
double sum contributes k(s, s) = 2^ℓ per shot, and removing it is
algebra, not approximation; purity_pairwise walks the pairs directly
so tests can confirm the identity.

Pauli expectations. Rotating the state by U and reading z is the same
as measuring the back-rotated observable, so each recorded pattern
estimates Tr[P ρ] whenever the forward-conjugated string U P U† is
diagonal. Under uniform label sampling that happens with probability
3^-w (w = support weight), hence the importance weight 3^w on diagonal
hits and 0 otherwise: the classical-shadow estimator, linear in the
outcome probabilities. Records store nominal labels, so miscalibrated
rotations shift these estimates exactly as they would in the lab.

All reductions over unitaries use compensated summation, making results
independent of worker count or reduction order at the 1e-13 level.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .pauli import PauliString, PauliStringSum, conjugate_by_labels, square_observable
from .protocol import EXACT_SHOTS, MeasurementRecord, UnitaryMeasurement
from .statevector import MAX_SUBSYSTEM

__all__ = [
    "EstimatorResult",
    "NormalizationError",
    "purity_estimate",
    "purity_pairwise",
    "pauli_expectation",
    "observable_expectation",
    "hamiltonian_variance",
    "repeat_and_aggregate",
    "bootstrap_over_unitaries",
    "RESULT_COLUMNS",
    "results_to_csv",
]


class NormalizationError(RuntimeError):
    """<H^2> estimate came out non-positive, so the ratio is undefined."""


@dataclass(frozen=True)
class EstimatorResult:
    """A value with repetition statistics and enough context to report it."""

    value: float
    std: float = 0.0
    n_unitaries: int = 0
    n_meas: float = 0
    n_ave: int = 1
    descriptor: str = ""

    def __post_init__(self) -> None:
        if self.std < 0:
            raise ValueError("std must be non-negative")
        if self.n_ave < 1:
            raise ValueError("n_ave must be at least 1")


# ---------------------------------------------------------------------------
# Purity
# ---------------------------------------------------------------------------

_KERNEL = np.array([[2.0, -1.0], [-1.0, 2.0]])


def _check_subsystem(sites: Sequence[int], num_sites: int) -> tuple[int, ...]:
    sub = tuple(sorted(int(s) for s in sites))
    if not sub:
        raise ValueError("subsystem must contain at least one site")
    if len(set(sub)) != len(sub):
        raise ValueError("subsystem sites must be distinct")
    if sub[0] < 1 or sub[-1] > num_sites:
        raise ValueError(f"sites must lie in 1..{num_sites}")
    if len(sub) > MAX_SUBSYSTEM:
        raise ValueError(f"subsystem larger than {MAX_SUBSYSTEM} sites")
    return sub


def _marginal_distribution(
    entry: UnitaryMeasurement, num_sites: int, sites: tuple[int, ...]
) -> np.ndarray:
    """Subsystem outcome distribution, empirical or exact."""
    ell = len(sites)
    if entry.probs is not None:
        shaped = entry.probs.reshape((2,) * num_sites)
        drop = tuple(ax for ax in range(num_sites) if (ax + 1) not in sites)
        return shaped.sum(axis=drop).reshape(-1)
    acc = np.zeros(2**ell)
    total = 0
    for key, c in entry.counts.items():
        idx = 0
        for m in sites:
            idx = (idx << 1) | (key[m - 1] == "1")
        acc[idx] += c
        total += c
    return acc / total


def _kernel_quadratic(p: np.ndarray) -> float:
    """p^T (kron of per-site kernels) p on a 2^l distribution vector."""
    ell = p.size.bit_length() - 1
    q = p
    for site in range(1, ell + 1):
        left = 2 ** (site - 1)
        right = 2 ** (ell - site)
        q = np.einsum("ab,ibj->iaj", _KERNEL, q.reshape(left, 2, right)).reshape(-1)
    return float(p @ q)


def purity_estimate(record: MeasurementRecord, sites: Sequence[int]) -> EstimatorResult:
    """Second Renyi purity of the subsystem from one experiment.

    Exact-probability records give the estimator's expectation directly;
    sampled records get the closed-form shot-noise correction. Values
    are not clipped to [0, 1]: excursions outside are informative.
    """
    if record.n_unitaries == 0:
        raise ValueError("record has no entries")
    sub = _check_subsystem(sites, record.num_sites)
    ell = len(sub)
    x_values = [
        _kernel_quadratic(_marginal_distribution(e, record.num_sites, sub))
        for e in record.entries
    ]
    x = math.fsum(x_values) / len(x_values)
    if record.n_meas == EXACT_SHOTS:
        value = x
    else:
        n = record.n_meas
        if n < 2:
            raise ValueError("bias correction requires at least 2 shots")
        value = x * n / (n - 1) - (2**ell) / (n - 1)
    return EstimatorResult(
        value=value,
        n_unitaries=record.n_unitaries,
        n_meas=record.n_meas,
        descriptor=f"purity[{','.join(str(s) for s in sub)}]",
    )


def purity_pairwise(record: MeasurementRecord, sites: Sequence[int]) -> EstimatorResult:
    """Same purity through the U-statistic over distinct shot pairs.

    O(r^2 l) in the number r of distinct outcomes per unitary; exists to
    pin the closed-form correction against an independent route.
    """
    if record.n_meas == EXACT_SHOTS:
        raise ValueError("pairwise estimator needs sampled shots")
    if record.n_meas < 2:
        raise ValueError("need at least 2 shots to form pairs")
    sub = _check_subsystem(sites, record.num_sites)
    ell = len(sub)
    n = record.n_meas
    per_unitary = []
    for e in record.entries:
        keys = list(e.counts)
        mult = np.array([e.counts[k] for k in keys], dtype=float)
        bits = np.array(
            [[k[m - 1] == "1" for m in sub] for k in keys], dtype=np.int8
        )
        # kernel value per outcome pair from the Hamming distance
        dist = (bits[:, None, :] != bits[None, :, :]).sum(axis=2)
        kern = (2.0**ell) * (-2.0) ** (-dist.astype(float))
        gross = float(mult @ kern @ mult)
        diagonal = float(mult.sum()) * (2.0**ell)
        per_unitary.append((gross - diagonal) / (n * (n - 1)))
    value = math.fsum(per_unitary) / len(per_unitary)
    return EstimatorResult(
        value=value,
        n_unitaries=record.n_unitaries,
        n_meas=record.n_meas,
        descriptor=f"purity_pairwise[{','.join(str(s) for s in sub)}]",
    )


# ---------------------------------------------------------------------------
# Pauli and observable expectations
# ---------------------------------------------------------------------------


def _entry_outcomes(
    entry: UnitaryMeasurement, num_sites: int
) -> tuple[np.ndarray, np.ndarray]:
    """(rows, weights): distinct outcome bit rows and their probabilities."""
    if entry.probs is not None:
        idx = np.arange(2**num_sites)
        shifts = np.arange(num_sites - 1, -1, -1)
        bits = ((idx[:, None] >> shifts) & 1).astype(np.int8)
        return bits, entry.probs
    keys = list(entry.counts)
    bits = np.array([[c == "1" for c in k] for k in keys], dtype=np.int8)
    weights = np.array([entry.counts[k] for k in keys], dtype=float)
    return bits, weights / weights.sum()


def _phase_sign(p: PauliString) -> float:
    if p.phase_pow == 0:
        return 1.0
    if p.phase_pow == 2:
        return -1.0
    raise ValueError("observable strings must carry a real +-1 phase")


def _string_term(
    p: PauliString,
    tables: Sequence[tuple[tuple[int, ...], np.ndarray, np.ndarray]],
) -> float:
    """Shadow estimate of one Pauli string over prepared outcome tables."""
    w = p.weight
    if w == 0:
        return _phase_sign(p)
    weight_factor = float(3**w)
    contributions = []
    for labels, bits, probs in tables:
        q = conjugate_by_labels(p, labels)
        if not q.is_diagonal():
            contributions.append(0.0)
            continue
        cols = [m - 1 for m, c in enumerate(q.letters, start=1) if c == "Z"]
        # product of z eigenvalues (2b - 1): -1 for every 0 bit in support
        zeros = len(cols) - bits[:, cols].sum(axis=1)
        z = np.where(zeros % 2 == 0, 1.0, -1.0)
        contributions.append(
            weight_factor * _phase_sign(q) * float(z @ probs)
        )
    return math.fsum(contributions) / len(contributions)


def _outcome_tables(record: MeasurementRecord):
    return [
        (e.labels, *_entry_outcomes(e, record.num_sites)) for e in record.entries
    ]


def pauli_expectation(record: MeasurementRecord, p: PauliString) -> float:
    """Estimate Tr[P rho] from nominal labels and recorded outcomes."""
    if p.num_sites != record.num_sites:
        raise ValueError("string length differs from the record")
    if record.n_unitaries == 0:
        raise ValueError("record has no entries")
    return _string_term(p, _outcome_tables(record))


def observable_expectation(record: MeasurementRecord, obs: PauliStringSum) -> float:
    """Linear combination of string estimates; identity enters exactly."""
    if obs.num_sites != record.num_sites:
        raise ValueError("observable length differs from the record")
    if record.n_unitaries == 0:
        raise ValueError("record has no entries")
    tables = _outcome_tables(record)
    parts = []
    for word, coeff in obs.items():
        parts.append(coeff * _string_term(PauliString(word), tables))
    total = math.fsum(c.real for c in map(complex, parts)) + 1j * math.fsum(
        c.imag for c in map(complex, parts)
    )
    if abs(total.imag) > 1e-9 * (1.0 + abs(total.real)):
        raise ValueError("observable is not Hermitian: imaginary expectation")
    return float(total.real)


def hamiltonian_variance(
    record: MeasurementRecord,
    h: PauliStringSum,
    h_squared: PauliStringSum | None = None,
) -> EstimatorResult:
    """Normalized energy variance (<H^2> - <H>^2) / <H^2>.

    Pass a precomputed h_squared when estimating against the same
    Hamiltonian repeatedly. Shot noise can push the numerator negative;
    that is reported as-is. A non-positive <H^2> estimate raises
    NormalizationError instead of returning a nonsense ratio.
    """
    if h_squared is None:
        h_squared = square_observable(h)
    e_h = observable_expectation(record, h)
    e_h2 = observable_expectation(record, h_squared)
    if e_h2 <= 0.0:
        raise NormalizationError(f"<H^2> estimate {e_h2:.3e} is not positive")
    return EstimatorResult(
        value=(e_h2 - e_h**2) / e_h2,
        n_unitaries=record.n_unitaries,
        n_meas=record.n_meas,
        descriptor="normalized_variance",
    )


# ---------------------------------------------------------------------------
# Repetition statistics
# ---------------------------------------------------------------------------


def repeat_and_aggregate(
    experiment: Callable[[int], float],
    n_ave: int,
    master_seed: int,
    descriptor: str = "",
    n_unitaries: int = 0,
    n_meas: float = 0,
) -> EstimatorResult:
    """Mean and sample std of an experiment over independent repetitions.

    The experiment closure receives a derived seed per repetition and
    must be a pure function of it (fresh state prep, fresh unitaries,
    fresh shots). std uses ddof=1 and is 0 when n_ave == 1.
    """
    if n_ave < 1:
        raise ValueError("n_ave must be at least 1")
    rep_seeds = np.random.SeedSequence(master_seed).generate_state(n_ave)
    values = np.array([float(experiment(int(s))) for s in rep_seeds])
    value = math.fsum(values) / n_ave
    std = float(values.std(ddof=1)) if n_ave > 1 else 0.0
    return EstimatorResult(
        value=value,
        std=std,
        n_unitaries=n_unitaries,
        n_meas=n_meas,
        n_ave=n_ave,
        descriptor=descriptor,
    )


def bootstrap_over_unitaries(
    record: MeasurementRecord,
    estimator: Callable[[MeasurementRecord], float],
    n_boot: int = 200,
    seed: int = 0,
) -> tuple[float, float]:
    """Resample unitaries with replacement; (mean, std) of the estimate.

    An alternative error bar to repetition std when only one experiment
    exists.
    """
    if n_boot < 2:
        raise ValueError("n_boot must be at least 2")
    rng = np.random.default_rng(seed)
    n = record.n_unitaries
    values = np.array(
        [
            float(estimator(record.subset(rng.integers(0, n, size=n))))
            for _ in range(n_boot)
        ]
    )
    return float(values.mean()), float(values.std(ddof=1))


# ---------------------------------------------------------------------------
# Results table
# ---------------------------------------------------------------------------

RESULT_COLUMNS = (
    "quantity",
    "target",
    "L",
    "N_U",
    "N_meas",
    "eps_percent",
    "mode",
    "value",
    "std",
    "seed",
)


def results_to_csv(rows: Sequence[Mapping]) -> str:
    """Canonical CSV: fixed column order, repr floats, byte-stable."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        out = []
        for col in RESULT_COLUMNS:
            v = row.get(col, "")
            if col == "N_meas" and v == EXACT_SHOTS:
                v = "exact"
            if isinstance(v, float):
                v = repr(v)
            out.append(v)
        writer.writerow(out)
    return buf.getvalue()
