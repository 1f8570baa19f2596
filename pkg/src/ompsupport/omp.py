"""Orthogonal Matching Pursuit with full iteration traces.

The variant implemented here does not normalize columns before the
identification step.  Every iteration re-solves the least-squares fit on the
current support from scratch, which keeps runs bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConsistencyError, DegenerateSystemError, InputDomainError
from .linalg import (
    as_matrix,
    as_vector,
    index_set,
    least_squares_on_support,
)
from .metrics import SparseSignal

TIE_ATOL = 1e-12


@dataclass(frozen=True)
class FixedIterations:
    k: int


@dataclass(frozen=True)
class ResidualNorm:
    """Stop once ``||r^k||_2 <= eps`` (absolute)."""

    eps: float


@dataclass(frozen=True)
class CorrelationNorm:
    """Stop once ``||Phi' r^k||_inf <= eps`` (absolute)."""

    eps: float


StoppingRule = Union[FixedIterations, ResidualNorm, CorrelationNorm]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IterationRecord:
    k: int
    selected_index: int
    support_after: tuple[int, ...]
    coefficients: np.ndarray
    residual: np.ndarray
    max_correlation: float
    tie_detected: bool

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual))


@dataclass(frozen=True)
class RecoveryTrace:
    y: np.ndarray
    iterations: tuple[IterationRecord, ...]
    final_support: tuple[int, ...]
    final_estimate: np.ndarray
    final_residual: np.ndarray
    stop_reason: str

    def residual(self, k: int) -> np.ndarray:
        """``r^k``, with ``r^0 = y``."""
        return self.y if k == 0 else self.iterations[k - 1].residual

    def support(self, k: int) -> tuple[int, ...]:
        return () if k == 0 else self.iterations[k - 1].support_after

    def to_text(self) -> str:
        """One line per iteration: k, t^k, max correlation, ||r^k||, tie flag."""
        return "".join(
            f"{it.k} {it.selected_index} {it.max_correlation!r} "
            f"{it.residual_norm!r} {int(it.tie_detected)}\n"
            for it in self.iterations
        )

    def to_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "final_support": list(self.final_support),
            "final_estimate": self.final_estimate.tolist(),
            "final_residual": self.final_residual.tolist(),
            "iterations": [
                {
                    "k": it.k,
                    "selected_index": it.selected_index,
                    "support_after": list(it.support_after),
                    "coefficients": it.coefficients.tolist(),
                    "residual": it.residual.tolist(),
                    "residual_norm": it.residual_norm,
                    "max_correlation": it.max_correlation,
                    "tie_detected": it.tie_detected,
                }
                for it in self.iterations
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def identify_index(phi, r, excluded=()) -> tuple[int, float, bool]:
    """Column most correlated with ``r`` among those not in ``excluded``.

    Returns ``(index, |<phi_i, r>|, tie_detected)`` with a 1-based index.
    Candidates within ``TIE_ATOL`` of the maximum count as tied; the lowest
    index wins.
    """
    phi = as_matrix(phi)
    m, n = phi.shape
    r = as_vector(r, m)
    excl = index_set(excluded, n)
    if len(excl) >= n:
        raise InputDomainError("every column is excluded")
    corr = np.abs(phi.T @ r)
    mask = np.ones(n, dtype=bool)
    if excl:
        mask[np.asarray(excl) - 1] = False
    best = corr[mask].max()
    candidates = np.flatnonzero(mask & (corr >= best - TIE_ATOL))
    i = int(candidates[0])
    return i + 1, float(corr[i]), bool(candidates.size > 1)


def _validate_rule(rule, m: int, n: int) -> None:
    if isinstance(rule, FixedIterations):
        if not isinstance(rule.k, (int, np.integer)) or rule.k < 1:
            raise InputDomainError(f"iteration count must be a positive integer, got {rule.k!r}")
        if rule.k > min(m, n):
            raise InputDomainError(f"K = {rule.k} exceeds min(m, n) = {min(m, n)}")
    elif isinstance(rule, (ResidualNorm, CorrelationNorm)):
        if not math.isfinite(rule.eps) or rule.eps < 0:
            raise InputDomainError(f"eps must be finite and nonnegative, got {rule.eps}")
    else:
        raise InputDomainError(f"unknown stopping rule {rule!r}")


def _build_trace(y, records, n, reason) -> RecoveryTrace:
    estimate = np.zeros(n)
    support: tuple[int, ...] = ()
    residual = y
    if records:
        last = records[-1]
        support = last.support_after
        estimate[np.asarray(support) - 1] = last.coefficients
        residual = last.residual
    return RecoveryTrace(_frozen(y), tuple(records), support, _frozen(estimate),
                         _frozen(residual), reason)


def omp_run(phi, y, rule: StoppingRule) -> RecoveryTrace:
    """Run OMP on ``y = Phi x + v`` until ``rule`` fires.

    Residual and correlation rules are additionally capped at ``min(m, n)``
    iterations.  A rank-deficient support raises ``DegenerateSystemError``
    whose ``partial`` attribute holds the trace up to the failing iteration.
    """
    phi = as_matrix(phi)
    m, n = phi.shape
    y = as_vector(y, m)
    _validate_rule(rule, m, n)
    cap = min(m, n)

    records: list[IterationRecord] = []
    support: tuple[int, ...] = ()
    r = y
    reason = "iteration cap"
    while len(records) < cap:
        if isinstance(rule, FixedIterations) and len(records) >= rule.k:
            reason = "fixed iterations"
            break
        if isinstance(rule, ResidualNorm) and np.linalg.norm(r) <= rule.eps:
            reason = "residual norm"
            break
        if isinstance(rule, CorrelationNorm) and np.max(np.abs(phi.T @ r)) <= rule.eps:
            reason = "correlation norm"
            break
        t, corr, tie = identify_index(phi, r, support)
        new_support = tuple(sorted(support + (t,)))
        try:
            c = least_squares_on_support(phi, y, new_support)
        except DegenerateSystemError as e:
            raise DegenerateSystemError(
                f"iteration {len(records) + 1}: {e}", partial=_build_trace(y, records, n, "degenerate")
            ) from e
        r = y - phi[:, np.asarray(new_support) - 1] @ c
        records.append(IterationRecord(len(records) + 1, t, new_support, _frozen(c),
                                       _frozen(r), corr, tie))
        support = new_support
    else:
        if isinstance(rule, FixedIterations):
            reason = "fixed iterations"
    return _build_trace(y, records, n, reason)


# -- runtime verification of the iteration-level inequalities ----------------

INEQ_RTOL = 1e-9


@dataclass
class IterationCheck:
    """Inequality diagnostics for the step from iteration k to k+1.

    Slacks are (larger side - smaller side); violations are slacks below
    ``-tolerance``.  The correct-so-far bounds are only evaluated while the
    selected support is inside the true one and both remaining index pools
    are nonempty.
    """

    k: int
    decrease: float
    decrease_bound: float
    decrease_slack: float
    decrease_ok: bool
    orthogonality: float
    orthogonality_ok: bool
    bounds_evaluated: bool = False
    u: float = math.nan
    u_lower: float = math.nan
    u_ok: bool = True
    vbar: float = math.nan
    vbar_upper: float = math.nan
    vbar_ok: bool = True

    @property
    def passed(self) -> bool:
        return self.decrease_ok and self.orthogonality_ok and self.u_ok and self.vbar_ok


@dataclass
class DiagnosticsReport:
    checks: list[IterationCheck] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(
            (not c.decrease_ok) + (not c.orthogonality_ok) + (not c.u_ok) + (not c.vbar_ok)
            for c in self.checks
        )

    @property
    def passed(self) -> bool:
        return self.violations == 0


def verify_iteration_inequalities(phi, x, v, trace: RecoveryTrace, deltas: dict[int, float]) -> DiagnosticsReport:
    """Check the per-iteration residual and correlation inequalities of a run.

    For every step k -> k+1 of ``trace`` this measures

    * the residual energy decrease against ``||Phi' r^k||_inf^2 / (1 + delta_1)``,
    * orthogonality of ``r^k`` to the selected columns,
    * while ``T^k`` is inside the true support ``T`` (|T| = K): the largest
      correlation over remaining correct indices against
      ``((1-d_K)||x_{T\\T^k}|| - sqrt(1+d_K)||v||) / sqrt(K-k)`` and the largest
      over remaining wrong indices against
      ``d_{K+1}||x_{T\\T^k}|| + sqrt(1+d_1)||v||``.

    ``deltas`` must hold the exact constant of order 1; the correct-so-far
    bounds need orders K and K+1 as well and are skipped without them.
    """
    phi = as_matrix(phi)
    m, n = phi.shape
    xs = x if isinstance(x, SparseSignal) else SparseSignal.from_dense(x)
    xd = xs.dense()
    v = as_vector(v, m)
    y = phi @ xd + v
    if 1 not in deltas:
        raise InputDomainError("deltas must contain order 1")

    ynorm = float(np.linalg.norm(y))
    if np.linalg.norm(trace.y - y) > 1e-8 * max(ynorm, 1e-300):
        raise ConsistencyError("trace was not produced from Phi x + v")
    for it in trace.iterations:
        c = least_squares_on_support(phi, y, it.support_after)
        r = y - phi[:, np.asarray(it.support_after) - 1] @ c
        if np.linalg.norm(r - it.residual) > 1e-8 * max(ynorm, 1e-300):
            raise ConsistencyError(f"stored residual of iteration {it.k} does not match")

    K = xs.sparsity
    T = set(xs.support)
    d1 = deltas[1]
    dK, dK1 = deltas.get(K), deltas.get(K + 1)
    vnorm = float(np.linalg.norm(v))
    col_norms = np.linalg.norm(phi, axis=0)
    y2 = ynorm ** 2

    report = DiagnosticsReport()
    for k in range(len(trace.iterations)):
        rk, rk1 = trace.residual(k), trace.residual(k + 1)
        Sk = trace.support(k)
        corr = np.abs(phi.T @ rk)
        decrease = float(rk @ rk - rk1 @ rk1)
        bound = float(corr.max() ** 2 / (1 + d1))
        slack = decrease - bound
        if Sk:
            orth = float(corr[np.asarray(Sk) - 1].max())
            orth_tol = INEQ_RTOL * float(col_norms[np.asarray(Sk) - 1].max()) * ynorm
        else:
            orth, orth_tol = 0.0, 0.0
        chk = IterationCheck(k, decrease, bound, slack, slack >= -INEQ_RTOL * y2,
                             orth, orth <= orth_tol + 1e-300)

        remaining = sorted(T - set(Sk))
        wrong = sorted(set(range(1, n + 1)) - T - set(Sk))
        if set(Sk) <= T and remaining and wrong and dK is not None and dK1 is not None:
            x_rem = float(np.linalg.norm(xd[np.asarray(remaining) - 1]))
            chk.bounds_evaluated = True
            chk.u = float(corr[np.asarray(remaining) - 1].max())
            chk.u_lower = ((1 - dK) * x_rem - math.sqrt(1 + dK) * vnorm) / math.sqrt(K - k)
            tol = INEQ_RTOL * max(abs(chk.u), abs(chk.u_lower), ynorm)
            chk.u_ok = chk.u >= chk.u_lower - tol
            chk.vbar = float(corr[np.asarray(wrong) - 1].max())
            chk.vbar_upper = dK1 * x_rem + math.sqrt(1 + d1) * vnorm
            tol = INEQ_RTOL * max(abs(chk.vbar), abs(chk.vbar_upper), ynorm)
            chk.vbar_ok = chk.vbar <= chk.vbar_upper + tol
        report.checks.append(chk)
    return report

