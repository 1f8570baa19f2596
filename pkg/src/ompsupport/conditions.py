"""SNR thresholds for exact and approximate support recovery, and verdicts.

Thresholds for exact recovery are returned on the sqrt(SNR) scale, which is
how the inequalities are naturally written; pass ``squared=True`` for the
SNR scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import HypothesisViolatedError, InputDomainError
from .metrics import SparseSignal, compute_kappa, compute_mar, compute_snr

STRICT_MARGIN = 1e-12

THM1_SUFFICIENT = "THM1_SUFFICIENT"
THM2_NECESSARY = "THM2_NECESSARY"
REMARK_SNR_GT_K = "REMARK_SNR_GT_K"
THM3_SNR_FLOOR = "THM3_SNR_FLOOR"
RIP_SHAPE_THM1 = "RIP_SHAPE_THM1"
CONDITION_IDS = (THM1_SUFFICIENT, THM2_NECESSARY, REMARK_SNR_GT_K, THM3_SNR_FLOOR, RIP_SHAPE_THM1)


def _check_common(k: int, delta: float, mar: float) -> None:
    if int(k) != k or k < 1:
        raise InputDomainError(f"K must be a positive integer, got {k}")
    if not (delta >= 0 and math.isfinite(delta)):
        raise InputDomainError(f"delta must be finite and nonnegative, got {delta}")
    if not 0 < mar <= 1:
        raise InputDomainError(f"MAR must lie in (0, 1], got {mar}")


def sufficient_delta_ceiling(k: int) -> float:
    """Largest admissible delta_{K+1} (exclusive) for the sufficient condition."""
    return 1.0 / (math.sqrt(k) + 1.0)


def sufficient_snr_threshold(k: int, delta: float, mar: float, squared: bool = False) -> float:
    """Right-hand side ``2 sqrt(K)(1+d) / ((1 - (sqrt(K)+1) d) sqrt(MAR))``.

    Exact recovery of every K-sparse signal is guaranteed when sqrt(SNR)
    strictly exceeds this and ``delta = delta_{K+1} < 1/(sqrt(K)+1)``.
    """
    _check_common(k, delta, mar)
    if delta >= sufficient_delta_ceiling(k):
        raise HypothesisViolatedError(
            f"delta_(K+1) = {delta} is not below 1/(sqrt(K)+1) = {sufficient_delta_ceiling(k)}"
        )
    rk = math.sqrt(k)
    den = 1 - (rk + 1) * delta
    if squared:
        # formed directly so that K enters without a square root round trip
        return 4 * k * (1 + delta) ** 2 / (den * den * mar)
    return 2 * rk * (1 + delta) / (den * math.sqrt(mar))


def necessary_snr_threshold(k: int, delta: float, mar: float, squared: bool = False) -> float:
    """Right-hand side ``sqrt(K)(1+d) / ((1 - sqrt(K) d) sqrt(MAR))``.

    Below or at this value some instance makes OMP fail.  The expression
    is only positive for ``delta < 1/sqrt(K)``, which is enforced.
    """
    _check_common(k, delta, mar)
    rk = math.sqrt(k)
    if delta * rk >= 1:
        raise HypothesisViolatedError(f"delta_(K+1) = {delta} is not below 1/sqrt(K) = {1 / rk}")
    den = 1 - rk * delta
    if squared:
        return k * (1 + delta) ** 2 / (den * den * mar)
    return rk * (1 + delta) / (den * math.sqrt(mar))


def first_iteration_threshold(k: int, delta: float) -> float:
    """sqrt(SNR) level guaranteeing a correct first selection."""
    _check_common(k, delta, 1.0)
    rk = math.sqrt(k)
    if delta >= sufficient_delta_ceiling(k):
        raise HypothesisViolatedError("delta_(K+1) outside the first-iteration domain")
    return (rk + 1) * (1 + delta) / (1 - (rk + 1) * delta)


def sufficient_threshold_dominates(k: int, delta: float, mar: float) -> tuple[bool, float, float]:
    """Whether the overall sufficient threshold is at least the first-iteration one.

    Returns ``(dominates, sufficient, first_iteration)``.
    """
    suff = sufficient_snr_threshold(k, delta, mar)
    first = first_iteration_threshold(k, delta)
    return suff >= first, suff, first


def theorem3_snr_floor(kappa: float, delta_2k: float) -> float:
    """``kappa^2 * delta_2K^(-3/2)``; infinite when delta_2K is zero."""
    if not kappa >= 1:
        raise InputDomainError(f"kappa must be >= 1, got {kappa}")
    if not 0 <= delta_2k < 1:
        raise InputDomainError(f"delta_2K must lie in [0, 1), got {delta_2k}")
    if delta_2k == 0:
        return math.inf
    return kappa ** 2 * delta_2k ** -1.5


def theorem3_error_rate_bound(kappa: float, delta_2k: float, c: float) -> float:
    """``min(1, C kappa^2 sqrt(delta_2K))``."""
    if not c > 0:
        raise InputDomainError("C must be positive")
    if not kappa >= 1 or delta_2k < 0:
        raise InputDomainError("need kappa >= 1 and delta_2K >= 0")
    return min(1.0, c * kappa ** 2 * math.sqrt(delta_2k))


# -- verdicts ----------------------------------------------------------------


@dataclass(frozen=True)
class ConditionVerdict:
    """One condition evaluated on one instance.

    For the SNR conditions ``margin = actual - threshold`` and the condition
    holds when the margin is positive (strict, beyond 1e-12) or, for the
    approximate-recovery floor, nonnegative.  For RIP_SHAPE_THM1 ``actual``
    is delta_{K+1}, ``threshold`` the ceiling 1/(sqrt(K)+1), and the
    condition holds when the margin is negative.  Inapplicable conditions
    (hypothesis violated) have ``applicable=False`` and ``holds=False``.
    """

    condition_id: str
    holds: bool
    threshold: float
    actual: float
    margin: float
    applicable: bool = True

    def csv_row(self) -> list[str]:
        return [self.condition_id, str(self.holds).lower(), repr(self.threshold),
                repr(self.actual), repr(self.margin)]


def _strict(cid: str, threshold: float, actual: float) -> ConditionVerdict:
    margin = actual - threshold
    return ConditionVerdict(cid, margin > STRICT_MARGIN, threshold, actual, margin)


def _inapplicable(cid: str, actual: float) -> ConditionVerdict:
    return ConditionVerdict(cid, False, math.inf, actual, -math.inf, applicable=False)


@dataclass(frozen=True)
class Classification:
    verdicts: tuple[ConditionVerdict, ...]
    region: str

    def get(self, cid: str) -> ConditionVerdict | None:
        for v in self.verdicts:
            if v.condition_id == cid:
                return v
        return None


def classify_instance(phi, x, v, deltas: dict[int, float]) -> Classification:
    """Evaluate every condition whose delta is available.

    ``region`` is ``"sufficient"`` when exact recovery is guaranteed,
    ``"indeterminate"`` when only the necessary condition holds (the theory
    decides nothing there), ``"below_necessary"`` when the necessary
    condition fails, and ``"unknown"`` when delta_{K+1} is missing or the
    necessary threshold is undefined.
    """
    xs = x if isinstance(x, SparseSignal) else SparseSignal.from_dense(x)
    k = xs.sparsity
    snr = compute_snr(phi, xs, v)
    mar = compute_mar(xs)
    kappa = compute_kappa(xs)
    root = math.sqrt(snr)

    verdicts = [_strict(REMARK_SNR_GT_K, float(k), snr)]
    d1 = deltas.get(k + 1)
    if d1 is not None:
        ceiling = sufficient_delta_ceiling(k)
        verdicts.append(ConditionVerdict(RIP_SHAPE_THM1, d1 < ceiling, ceiling, d1, d1 - ceiling))
        try:
            verdicts.append(_strict(THM1_SUFFICIENT, sufficient_snr_threshold(k, d1, mar), root))
        except HypothesisViolatedError:
            verdicts.append(_inapplicable(THM1_SUFFICIENT, root))
        try:
            verdicts.append(_strict(THM2_NECESSARY, necessary_snr_threshold(k, d1, mar), root))
        except HypothesisViolatedError:
            verdicts.append(_inapplicable(THM2_NECESSARY, root))
    d2k = deltas.get(2 * k)
    if d2k is not None:
        if d2k < 1:
            floor = theorem3_snr_floor(kappa, d2k)
            if math.isinf(floor):
                margin = 0.0 if math.isinf(snr) else -math.inf
                holds = math.isinf(snr)
            else:
                margin = snr - floor
                holds = margin >= -STRICT_MARGIN * max(1.0, floor)
            verdicts.append(ConditionVerdict(THM3_SNR_FLOOR, holds, floor, snr, margin))
        else:
            verdicts.append(_inapplicable(THM3_SNR_FLOOR, snr))

    out = Classification(tuple(verdicts), "unknown")
    suff, nec = out.get(THM1_SUFFICIENT), out.get(THM2_NECESSARY)
    if suff is not None and suff.applicable and suff.holds:
        region = "sufficient"
    elif nec is not None and nec.applicable:
        region = "indeterminate" if nec.holds else "below_necessary"
    else:
        region = "unknown"
    return Classification(tuple(verdicts), region)


# -- empirical constant for the approximate-recovery bound -----------------------


@dataclass(frozen=True)
class CalibrationResult:
    """Smallest C with ``rho <= C kappa^2 sqrt(delta_2K)`` over a corpus.

    ``c_star`` is infinite when some trial has delta_2K = 0 yet nonzero error.
    """

    c_star: float
    trials: int
    zero_delta_trials: int
    worst_index: int | None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.c_star)


def calibrate_c(rows: Iterable[tuple[float, float, float]]) -> CalibrationResult:
    """``max rho / (kappa^2 sqrt(delta_2K))`` over ``(rho, kappa, delta_2K)`` rows."""
    best, worst, count, zero = 0.0, None, 0, 0
    for i, (rho, kappa, delta) in enumerate(rows):
        count += 1
        if delta <= 0:
            zero += 1
            ratio = 0.0 if rho == 0 else math.inf
        else:
            ratio = rho / (kappa ** 2 * math.sqrt(delta))
        if worst is None or ratio > best:
            best, worst = ratio, i
    return CalibrationResult(best, count, zero, worst)


def ratio_sufficient_to_necessary(k: int, delta: float, mar: float) -> float:
    return sufficient_snr_threshold(k, delta, mar) / necessary_snr_threshold(k, delta, mar)


def grid_values(k_max: int = 10, n_delta: int = 10, mars=(0.25, 0.5, 1.0)):
    """(K, delta, MAR) grid with delta evenly inside [0, 1/(sqrt(K)+1))."""
    for k in range(1, k_max + 1):
        ceiling = sufficient_delta_ceiling(k)
        for d in np.linspace(0.0, ceiling, n_delta, endpoint=False):
            for mar in mars:
                yield k, float(d), float(mar)
