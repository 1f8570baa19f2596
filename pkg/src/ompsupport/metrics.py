"""Instance quantities: SNR, MAR, kappa, exact isometry constants, error rates."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import CapacityError, InputDomainError
from .linalg import as_matrix, as_vector, index_set

DEFAULT_CAP = 2_000_000
_CHUNK = 50_000


@dataclass(frozen=True)
class SparseSignal:
    """A length-``n`` vector given by its 1-based support and nonzero values."""

    n: int
    support: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if self.n < 1:
            raise InputDomainError(f"signal length must be positive, got {self.n}")
        support = index_set(self.support, self.n)
        if len(support) != len(self.support):
            raise InputDomainError("support has duplicates")
        if len(self.values) != len(support):
            raise InputDomainError(
                f"{len(self.values)} values for a support of size {len(support)}"
            )
        # keep values aligned with the sorted support
        order = sorted(range(len(self.support)), key=lambda j: self.support[j])
        values = tuple(float(self.values[j]) for j in order)
        if any(v == 0.0 or not math.isfinite(v) for v in values):
            raise InputDomainError("support values must be finite and nonzero")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def sparsity(self) -> int:
        return len(self.support)

    def dense(self) -> np.ndarray:
        x = np.zeros(self.n)
        if self.support:
            x[np.asarray(self.support) - 1] = self.values
        return x

    @classmethod
    def from_dense(cls, x) -> "SparseSignal":
        x = as_vector(x)
        nz = np.flatnonzero(x)
        return cls(x.shape[0], tuple(int(i) + 1 for i in nz), tuple(float(v) for v in x[nz]))

    def magnitudes(self) -> np.ndarray:
        return np.abs(np.asarray(self.values))


def _dense(x) -> np.ndarray:
    return x.dense() if isinstance(x, SparseSignal) else as_vector(x)


def _signal(x) -> SparseSignal:
    return x if isinstance(x, SparseSignal) else SparseSignal.from_dense(x)


def compute_snr(phi, x, v) -> float:
    """``||Phi x||^2 / ||v||^2`` as a plain ratio; ``inf`` when ``v`` is zero."""
    phi = as_matrix(phi)
    xd = _dense(x)
    v = as_vector(v, phi.shape[0])
    noise = float(v @ v)
    signal = float(np.sum((phi @ xd) ** 2))
    if noise == 0.0:
        return math.inf
    return signal / noise


def compute_mar(x) -> float:
    """Minimum-to-average ratio ``K * min|x_j|^2 / ||x||^2`` over the support."""
    x = _signal(x)
    if x.sparsity == 0:
        raise InputDomainError("MAR is undefined for an empty support")
    mags2 = x.magnitudes() ** 2
    return float(x.sparsity * mags2.min() / mags2.sum())


def compute_kappa(x) -> float:
    """Dynamic range: largest over smallest nonzero magnitude."""
    x = _signal(x)
    if x.sparsity == 0:
        raise InputDomainError("kappa is undefined for an empty support")
    mags = x.magnitudes()
    return float(mags.max() / mags.min())


@dataclass(frozen=True)
class InstanceMetrics:
    snr: float
    mar: float
    kappa: float
    signal_energy: float
    measurement_energy: float
    noise_energy: float


def instance_metrics(phi, x, v) -> InstanceMetrics:
    phi = as_matrix(phi)
    x = _signal(x)
    xd = x.dense()
    v = as_vector(v, phi.shape[0])
    return InstanceMetrics(
        snr=compute_snr(phi, x, v),
        mar=compute_mar(x),
        kappa=compute_kappa(x),
        signal_energy=float(xd @ xd),
        measurement_energy=float(np.sum((phi @ xd) ** 2)),
        noise_energy=float(v @ v),
    )


# -- exact restricted isometry constants -------------------------------------


@dataclass(frozen=True)
class RipEstimate:
    """Exact isometry constant of one order with the subset attaining it."""

    order: int
    delta: float
    witness: tuple[int, ...]
    subsets_examined: int

    @property
    def at_least_one(self) -> bool:
        """True when the matrix fails the RIP of this order (delta >= 1)."""
        return self.delta >= 1.0

    def csv_row(self) -> list[str]:
        return [
            str(self.order),
            repr(self.delta),
            " ".join(str(i) for i in self.witness),
            str(self.subsets_examined),
        ]


def colex_subsets(n: int, k: int) -> np.ndarray:
    """All k-subsets of {0..n-1} as rows, in colexicographic order."""
    count = math.comb(n, k)
    if k == 0:
        return np.zeros((1, 0), dtype=np.int32)
    lex = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), k)),
        dtype=np.int32,
        count=count * k,
    ).reshape(count, k)
    # reversing lex order of the complemented labels gives colex order
    return (n - 1 - lex[::-1])[:, ::-1]


def _scan(phi: np.ndarray, subsets: np.ndarray) -> tuple[float, int]:
    """Largest isometry deviation over ``subsets`` and its first position."""
    best, where = -math.inf, -1
    for start in range(0, subsets.shape[0], _CHUNK):
        block = subsets[start:start + _CHUNK]
        A = phi[:, block].transpose(1, 0, 2)
        gram = np.matmul(A.transpose(0, 2, 1), A)
        w = np.linalg.eigvalsh(gram)
        dev = np.maximum(1.0 - w[:, 0], w[:, -1] - 1.0)
        j = int(np.argmax(dev))
        if dev[j] > best:
            best, where = float(dev[j]), start + j
    return best, where


def _scan_job(args):
    phi, subsets, offset = args
    best, where = _scan(phi, subsets)
    return best, where + offset


def exact_rip_constant(phi, order: int, cap: int = DEFAULT_CAP, workers: int = 1) -> RipEstimate:
    """Exact ``delta_order`` by enumerating every column subset of that size.

    Enumeration runs in colexicographic order and the first subset reaching
    the maximum deviation is reported as the witness.  With ``workers > 1``
    the subsets are split into contiguous blocks scanned in separate
    processes; the merge keeps the earliest block on ties, so the result does
    not depend on the worker count.
    """
    phi = as_matrix(phi)
    n = phi.shape[1]
    if order < 1 or order > n:
        raise InputDomainError(f"order must lie in [1, {n}], got {order}")
    count = math.comb(n, order)
    if count > cap:
        raise CapacityError(
            f"C({n}, {order}) = {count} subsets exceeds the enumeration cap {cap}", cap
        )
    subsets = colex_subsets(n, order)
    if workers <= 1 or count < 2 * _CHUNK:
        best, where = _scan(phi, subsets)
    else:
        bounds = np.linspace(0, count, workers + 1).astype(int)
        jobs = [(phi, subsets[a:b], a) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_scan_job, jobs))
        best, where = parts[0]
        for d, w in parts[1:]:
            if d > best:
                best, where = d, w
    witness = tuple(int(i) + 1 for i in subsets[where])
    return RipEstimate(order, max(best, 0.0), witness, count)


def rip_table(phi, orders: Iterable[int], cap: int = DEFAULT_CAP) -> dict[int, float]:
    """Exact deltas for several orders, keyed by order."""
    return {k: exact_rip_constant(phi, k, cap).delta for k in sorted(set(orders))}


# -- support recovery ----------------------------------------------------------


@dataclass(frozen=True)
class RecoveryReport:
    true_support: tuple[int, ...]
    estimated_support: tuple[int, ...]
    missed: tuple[int, ...]
    false_alarms: tuple[int, ...]
    error_rate: float
    l2_distortion: float | None = None

    @property
    def exact(self) -> bool:
        return self.true_support == self.estimated_support


def _positive_set(indices) -> tuple[int, ...]:
    s = tuple(sorted(int(i) for i in indices))
    if len(set(s)) != len(s) or (s and s[0] < 1):
        raise InputDomainError(f"invalid index set {s}")
    return s


def support_error_rate(true_support, estimated) -> RecoveryReport:
    """Missed detections, false alarms and ``|T^K \\ T| / |T|``."""
    T = _positive_set(true_support)
    E = _positive_set(estimated)
    if not T:
        raise InputDomainError("true support must be nonempty")
    missed = tuple(sorted(set(T) - set(E)))
    false_alarms = tuple(sorted(set(E) - set(T)))
    if len(E) == len(T):
        assert len(missed) == len(false_alarms)
    return RecoveryReport(T, E, missed, false_alarms, len(false_alarms) / len(T))


def recovery_report(x, estimate) -> RecoveryReport:
    """Support errors plus ``||x - x_hat||_2`` for a dense estimate."""
    x = _signal(x)
    est = as_vector(estimate, x.n)
    report = support_error_rate(x.support, (int(i) + 1 for i in np.flatnonzero(est)))
    dist = float(np.linalg.norm(x.dense() - est))
    return RecoveryReport(**{**report.__dict__, "l2_distortion": dist})


def l2_distortion_bound(delta_k: float, noise_norm: float) -> float:
    """Upper bound ``||v|| / sqrt(1 - delta_K)`` on the error after exact support recovery."""
    if not 0.0 <= delta_k < 1.0:
        raise InputDomainError(f"delta_K must lie in [0, 1), got {delta_k}")
    if noise_norm < 0:
        raise InputDomainError("noise norm must be nonnegative")
    return noise_norm / math.sqrt(1.0 - delta_k)


# -- lemma property checks ------------------------------------------------------


@dataclass
class LemmaCheck:
    """Outcome of one family of inequality checks.

    ``min_slack`` is the smallest (bound - measured) seen, oriented so that
    negative values beyond the tolerance are violations.
    """

    name: str
    checks: int = 0
    skipped: int = 0
    violations: int = 0
    min_slack: float = math.inf

    def record(self, slack: np.ndarray, tol: float):
        slack = np.asarray(slack, dtype=float).ravel()
        if slack.size == 0:
            return
        self.checks += slack.size
        self.violations += int(np.sum(slack < -tol))
        self.min_slack = min(self.min_slack, float(slack.min()))

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class LemmaReport:
    deltas: dict[int, float]
    lemmas: dict[str, LemmaCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.lemmas.values())


def _gather(phi: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Stack of column submatrices, shape (batch, m, len)."""
    return phi[:, idx].transpose(1, 0, 2)


def _unit(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.standard_normal(shape)
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def _perp(basis: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Project each column of ``vecs`` off the span of ``basis`` (batched)."""
    if basis.shape[-1] == 0:
        return vecs
    q, _ = np.linalg.qr(basis)
    return vecs - q @ (np.swapaxes(q, -1, -2) @ vecs)


def lemma_property_checks(
    phi,
    max_order: int = 3,
    pairs: int = 10_000,
    seed: int = 0,
    tol: float = 1e-8,
    deltas: dict[int, float] | None = None,
    cap: int = DEFAULT_CAP,
) -> LemmaReport:
    """Numerically exercise standard consequences of the RIP on random subsets.

    Exact deltas of orders ``1..max_order`` are computed (or taken from
    ``deltas``).  Each of the lemma families below draws ``pairs`` random
    (subset, unit probe) pairs with subset sizes summing to at most
    ``max_order``; the interlacing family needs no delta and uses totals up to
    ``2*max_order`` (capped at m).

    * monotonicity: delta is nondecreasing in the order.
    * gram_sandwich: (1-d)|u| <= |G u| <= (1+d)|u| and, when d < 1,
      |u|/(1+d) <= |G^-1 u| <= |u|/(1-d), with G the Gram of Phi_S.
    * cross_correlation: |Phi_S1' Phi_S2 w| <= d_{|S1|+|S2|} |w| and the same with
      P_perp(S3) inserted, for pairwise disjoint sets.
    * adjoint_norm: |Phi_S' u| <= sqrt(1+d_|S|) |u| for u in R^m.
    * eigen_interlacing: eigenvalues of Phi_S1' P_perp(S2) Phi_S1 lie inside those of the
      Gram of S1 u S2.
    """
    phi = as_matrix(phi)
    m, n = phi.shape
    max_order = min(max_order, n)
    if deltas is None:
        deltas = rip_table(phi, range(1, max_order + 1), cap)
    missing = [k for k in range(1, max_order + 1) if k not in deltas]
    if missing:
        raise InputDomainError(f"deltas missing for orders {missing}")
    rng = np.random.default_rng(seed)
    report = LemmaReport(dict(deltas))

    l1 = report.lemmas.setdefault("monotonicity", LemmaCheck("monotonicity"))
    orders = sorted(deltas)
    l1.record(np.diff([deltas[k] for k in orders]), tol)

    def draw(total: int, count: int) -> np.ndarray:
        return np.argsort(rng.random((count, n)), axis=1, kind="stable")[:, :total]

    def split(total_sizes: list[tuple[int, ...]]) -> dict[tuple[int, ...], int]:
        picks = rng.integers(0, len(total_sizes), pairs)
        return {sz: int(np.sum(picks == i)) for i, sz in enumerate(total_sizes)}

    # one subset, sizes 1..max_order
    l2 = report.lemmas.setdefault("gram_sandwich", LemmaCheck("gram_sandwich"))
    for (s,), cnt in split([(s,) for s in range(1, max_order + 1)]).items():
        if cnt == 0:
            continue
        d = deltas[s]
        A = _gather(phi, draw(s, cnt))
        G = np.swapaxes(A, 1, 2) @ A
        u = _unit(rng, (cnt, s))
        gu = np.linalg.norm(np.einsum("bij,bj->bi", G, u), axis=1)
        l2.record(gu - (1 - d), tol)
        l2.record((1 + d) - gu, tol)
        if d < 1:
            giu = np.linalg.norm(np.linalg.solve(G, u[..., None])[..., 0], axis=1)
            l2.record(giu - 1 / (1 + d), tol)
            l2.record(1 / (1 - d) - giu, tol * max(1.0, 1 / (1 - d)))
        else:
            l2.skipped += cnt

    # disjoint S1, S2 and optionally S3
    l3 = report.lemmas.setdefault("cross_correlation", LemmaCheck("cross_correlation"))
    shapes = [(a, b, c) for a in range(1, max_order) for b in range(1, max_order)
              for c in range(0, max_order) if a + b + c <= max_order]
    for (a, b, c), cnt in split(shapes).items() if shapes else []:
        if cnt == 0:
            continue
        d = deltas[a + b + c]
        idx = draw(a + b + c, cnt)
        A1, A2, A3 = (_gather(phi, idx[:, sl]) for sl in
                      (slice(0, a), slice(a, a + b), slice(a + b, a + b + c)))
        w = _unit(rng, (cnt, b))[..., None]
        val = np.linalg.norm((np.swapaxes(A1, 1, 2) @ _perp(A3, A2 @ w))[..., 0], axis=1)
        l3.record(d - val, tol)

    l4 = report.lemmas.setdefault("adjoint_norm", LemmaCheck("adjoint_norm"))
    for (s,), cnt in split([(s,) for s in range(1, max_order + 1)]).items():
        if cnt == 0:
            continue
        A = _gather(phi, draw(s, cnt))
        u = _unit(rng, (cnt, m))
        val = np.linalg.norm(np.einsum("bmi,bm->bi", A, u), axis=1)
        l4.record(math.sqrt(1 + deltas[s]) - val, tol)

    l5 = report.lemmas.setdefault("eigen_interlacing", LemmaCheck("eigen_interlacing"))
    top = min(m, n, 2 * max_order)
    shapes5 = [(a, b) for a in range(1, top) for b in range(1, top) if a + b <= top]
    for (a, b), cnt in split(shapes5).items() if shapes5 else []:
        if cnt == 0:
            continue
        idx = draw(a + b, cnt)
        A1, A2 = _gather(phi, idx[:, :a]), _gather(phi, idx[:, a:])
        B = np.concatenate([A1, A2], axis=2)
        wb = np.linalg.eigvalsh(np.swapaxes(B, 1, 2) @ B)
        P1 = _perp(A2, A1)
        wa = np.linalg.eigvalsh(np.swapaxes(A1, 1, 2) @ P1)
        scale = np.maximum(1.0, wb[:, -1])
        l5.record((wa[:, 0] - wb[:, 0]) / scale, tol)
        l5.record((wb[:, -1] - wa[:, -1]) / scale, tol)

    return report
