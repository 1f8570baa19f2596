"""Seeded Monte Carlo experiments over grids of OMP recovery problems.

A config is a flat ``key=value`` file; list-valued keys take comma-separated
values and every combination of them forms one cell.  Each trial of a cell
draws a fresh instance from a seed derived from ``(seed, cell key, trial)``,
runs OMP for exactly K iterations, and records metrics, condition verdicts
and optional inequality diagnostics.

Recognized keys::

    seed         base seed (default 0)
    trials       trials per cell (default 10)
    m, n, k      dimensions and sparsity (lists)
    snr          <number> | noise-free | thm1x<f> | thm3x<f>        (list)
    profile      equal[:v] | uniform:lo:hi | gaussian:sigma          (list)
    signs        positive | random                                    (default positive)
    noise        isotropic | basis:<i> | adversarial                  (list)
    matrix       gaussian | normalized | orthogonal | identity |
                 lowrip | lowrip:2k | counterexample:<eps>            (list)
    diagnostics  on/off: per-iteration inequality checks (default off)
    exact_delta  on/off: exact isometry constants (default on)
    cap          enumeration cap for exact deltas (default 2000000)
    workers      worker processes (default 1)
    frame_steps  optimizer steps for lowrip frames (default 1500)
    out_dir      output directory (default results)

``thm1x<f>`` sets sqrt(SNR) to ``f`` times the sufficient threshold plus
2e-6; ``thm3x<f>`` sets SNR to ``f`` times the approximate-recovery floor
``kappa^2 delta_2K^(-3/2)``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import (
    CONDITION_IDS,
    THM1_SUFFICIENT,
    classify_instance,
    sufficient_snr_threshold,
    theorem3_snr_floor,
)
from .errors import CapacityError, InputDomainError, OmpSupportError
from .metrics import (
    DEFAULT_CAP,
    compute_kappa,
    compute_mar,
    compute_snr,
    exact_rip_constant,
    recovery_report,
)
from .omp import FixedIterations, omp_run, verify_iteration_inequalities
from .synth import (
    AdversarialOffSupport,
    EqualMagnitude,
    FixedBasisVector,
    GaussianMagnitude,
    IsotropicGaussianDirection,
    UniformMagnitude,
    appendix_a_instance,
    derive_seed,
    gaussian_matrix,
    low_rip_frame,
    noise_at_snr,
    random_orthogonal,
    randomized_frame,
    sparse_signal,
)

# absolute sqrt(SNR) margin above the sufficient threshold; twice the 1e-6 target
# so that rounding in the noise scaling cannot eat into it
THM1_OFFSET = 2e-6

_LIST_KEYS = ("m", "n", "k", "snr", "profile", "noise", "matrix")
_SCALAR_KEYS = ("seed", "trials", "signs", "diagnostics", "exact_delta", "cap",
                "workers", "frame_steps", "out_dir")
_ON = {"on", "true", "yes", "1"}
_OFF = {"off", "false", "no", "0"}


def _flag(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in _ON:
        return True
    if v in _OFF:
        return False
    raise InputDomainError(f"{key}: expected on/off, got {value!r}")


def _int(key: str, value: str, lo: int = 0) -> int:
    try:
        out = int(value)
    except ValueError:
        raise InputDomainError(f"{key}: expected an integer, got {value!r}") from None
    if out < lo:
        raise InputDomainError(f"{key}: must be >= {lo}, got {out}")
    return out


def _number(token: str) -> float:
    try:
        out = float(token)
    except ValueError:
        raise InputDomainError(f"expected a number, got {token!r}") from None
    if not math.isfinite(out):
        raise InputDomainError(f"expected a finite number, got {token!r}")
    return out


# -- token parsing -------------------------------------------------------------


def parse_profile(token: str, random_signs: bool = False):
    name, *args = token.split(":")
    if name == "equal" and len(args) <= 1:
        return EqualMagnitude(_number(args[0]) if args else 1.0, random_signs)
    if name == "uniform" and len(args) == 2:
        return UniformMagnitude(_number(args[0]), _number(args[1]), random_signs)
    if name == "gaussian" and len(args) <= 1:
        return GaussianMagnitude(_number(args[0]) if args else 1.0, random_signs)
    raise InputDomainError(f"unknown signal profile {token!r}")


def parse_noise(token: str):
    if token == "isotropic":
        return IsotropicGaussianDirection()
    if token == "adversarial":
        return AdversarialOffSupport()
    if token.startswith("basis:"):
        return FixedBasisVector(_int("noise", token[6:], 1))
    raise InputDomainError(f"unknown noise mode {token!r}")


def _check_snr(token: str) -> None:
    if token == "noise-free":
        return
    for prefix in ("thm1x", "thm3x"):
        if token.startswith(prefix):
            if not _number(token[len(prefix):]) > 0:
                raise InputDomainError(f"snr factor must be positive in {token!r}")
            return
    if not _number(token) > 0:
        raise InputDomainError(f"snr must be positive, got {token!r}")


def _matrix_kind(token: str) -> tuple[str, float]:
    if token in ("gaussian", "normalized", "orthogonal", "identity", "lowrip", "lowrip:2k"):
        return token, 0.0
    if token.startswith("counterexample"):
        eps = _number(token.split(":", 1)[1]) if ":" in token else 0.0
        if eps < 0:
            raise InputDomainError("counterexample eps must be nonnegative")
        return "counterexample", eps
    raise InputDomainError(f"unknown matrix ensemble {token!r}")


# -- config --------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    m: int
    n: int
    k: int
    snr: str
    profile: str
    signs: str
    noise: str
    matrix: str

    @property
    def key(self) -> str:
        return (f"m={self.m};n={self.n};k={self.k};snr={self.snr};profile={self.profile};"
                f"signs={self.signs};noise={self.noise};matrix={self.matrix}")

    def frame_order(self) -> int | None:
        if self.matrix == "lowrip":
            return self.k + 1
        if self.matrix == "lowrip:2k":
            return 2 * self.k
        return None


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    trials: int = 10
    m: tuple[int, ...] = ()
    n: tuple[int, ...] = ()
    k: tuple[int, ...] = ()
    snr: tuple[str, ...] = ("noise-free",)
    profile: tuple[str, ...] = ("equal",)
    signs: str = "positive"
    noise: tuple[str, ...] = ("isotropic",)
    matrix: tuple[str, ...] = ("gaussian",)
    diagnostics: bool = False
    exact_delta: bool = True
    cap: int = DEFAULT_CAP
    workers: int = 1
    frame_steps: int = 1500
    out_dir: str = "results"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep:
                raise InputDomainError(f"line {lineno}: expected key=value, got {line!r}")
            if key not in _LIST_KEYS and key not in _SCALAR_KEYS:
                raise InputDomainError(f"line {lineno}: unknown key {key!r}")
            raw[key] = value.strip()
        return cls.from_mapping(raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "ExperimentConfig":
        kw: dict = {}
        for key in _LIST_KEYS:
            if key in raw:
                items = tuple(t.strip() for t in raw[key].split(",") if t.strip())
                if key in ("m", "n", "k"):
                    items = tuple(_int(key, t, 1) for t in items)
                kw[key] = items
        if "seed" in raw:
            kw["seed"] = _int("seed", raw["seed"])
        if "trials" in raw:
            kw["trials"] = _int("trials", raw["trials"], 1)
        if "cap" in raw:
            kw["cap"] = _int("cap", raw["cap"], 1)
        if "workers" in raw:
            kw["workers"] = _int("workers", raw["workers"], 1)
        if "frame_steps" in raw:
            kw["frame_steps"] = _int("frame_steps", raw["frame_steps"], 1)
        if "signs" in raw:
            kw["signs"] = raw["signs"]
        if "out_dir" in raw:
            kw["out_dir"] = raw["out_dir"]
        for key in ("diagnostics", "exact_delta"):
            if key in raw:
                kw[key] = _flag(key, raw[key])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def with_overrides(self, **kw) -> "ExperimentConfig":
        cfg = replace(self, **{k: v for k, v in kw.items() if v is not None})
        cfg.validate()
        return cfg

    def cells(self) -> list[Cell]:
        return [
            Cell(m, n, k, snr, prof, self.signs, noise, mat)
            for m, n, k, snr, prof, noise, mat in itertools.product(
                self.m, self.n, self.k, self.snr, self.profile, self.noise, self.matrix)
        ]

    def validate(self) -> None:
        if self.signs not in ("positive", "random"):
            raise InputDomainError(f"signs must be positive or random, got {self.signs!r}")
        for t in self.snr:
            _check_snr(t)
        for t in self.profile:
            parse_profile(t)
        for t in self.noise:
            parse_noise(t)
        for t in self.matrix:
            _matrix_kind(t)
        for c in self.cells():
            if c.k > c.m:
                raise InputDomainError(f"cell {c.key}: K exceeds m")
            if c.k > c.n:
                raise InputDomainError(f"cell {c.key}: K exceeds n")
            kind, _ = _matrix_kind(c.matrix)
            if kind in ("orthogonal", "identity") and c.n > c.m:
                raise InputDomainError(f"cell {c.key}: {kind} needs n <= m")
            if kind == "counterexample" and (c.n != c.m or c.m <= c.k):
                raise InputDomainError(f"cell {c.key}: counterexample needs n = m > K")
            order = c.frame_order()
            if order is not None and (order > min(c.m, c.n) or c.m > c.n):
                raise InputDomainError(f"cell {c.key}: lowrip needs order <= m <= n")
            if c.noise.startswith("basis:") and parse_noise(c.noise).index > c.m:
                raise InputDomainError(f"cell {c.key}: basis index exceeds m")
            if self.exact_delta and math.comb(c.n, c.k + 1) > self.cap and c.k + 1 <= c.n:
                raise InputDomainError(
                    f"cell {c.key}: C({c.n}, {c.k + 1}) exceeds cap {self.cap}; "
                    "disable exact_delta or raise the cap")
            if c.snr.startswith("thm1x") and not self.exact_delta:
                raise InputDomainError("thm1x snr needs exact_delta=on")
            if c.snr.startswith("thm3x") and not self.exact_delta:
                raise InputDomainError("thm3x snr needs exact_delta=on")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in _LIST_KEYS:
            d[key] = list(d[key])
        return d


# -- matrices --------------------------------------------------------------------

_FRAMES: dict[tuple, np.ndarray] = {}


def _frame_key(base_seed: int, m: int, n: int, order: int, steps: int) -> tuple:
    return (base_seed, m, n, order, steps)


def base_frame(base_seed: int, m: int, n: int, order: int, steps: int) -> np.ndarray:
    """Optimized low-isometry-constant frame shared by all trials of a cell."""
    key = _frame_key(base_seed, m, n, order, steps)
    if key not in _FRAMES:
        _FRAMES[key] = low_rip_frame(m, n, order, derive_seed(base_seed, "frame"), steps)
    return _FRAMES[key]


def _install_frames(frames: dict) -> None:
    _FRAMES.update(frames)


def build_matrix(cell: Cell, seed: int, base_seed: int, steps: int) -> np.ndarray:
    kind, _ = _matrix_kind(cell.matrix)
    m, n = cell.m, cell.n
    if kind == "gaussian":
        return gaussian_matrix(m, n, seed)
    if kind == "normalized":
        g = gaussian_matrix(m, n, seed)
        return g / np.linalg.norm(g, axis=0)
    if kind == "orthogonal":
        return random_orthogonal(m, seed)[:, :n]
    if kind == "identity":
        return np.eye(m)[:, :n]
    if kind in ("lowrip", "lowrip:2k"):
        frame = base_frame(base_seed, m, n, cell.frame_order(), steps)
        return randomized_frame(frame, seed)
    raise InputDomainError(f"no generic matrix for {cell.matrix!r}")


# -- trials ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    cell: str
    seed: int
    m: int
    n: int
    k: int
    matrix: str
    profile: str
    signs: str
    noise: str
    snr_target: float | None = None
    snr_actual: float | None = None
    mar: float | None = None
    kappa: float | None = None
    delta_1: float | None = None
    delta_k: float | None = None
    delta_k1: float | None = None
    delta_2k: float | None = None
    noise_norm: float | None = None
    rho_error: float | None = None
    l2_distortion: float | None = None
    exact_recovery: bool | None = None
    verdicts: tuple[tuple[str, str], ...] = ()
    region: str = ""
    ties: int = 0
    violations: int | None = None
    error: str = ""

    def verdict(self, cid: str) -> str:
        return dict(self.verdicts).get(cid, "")

    def row(self) -> list[str]:
        def f(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return str(v).lower()
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [f(v) for v in (
            self.trial_id, self.cell, self.seed, self.m, self.n, self.k, self.matrix,
            self.profile, self.signs, self.noise, self.snr_target, self.snr_actual,
            self.mar, self.kappa, self.delta_1, self.delta_k, self.delta_k1, self.delta_2k,
            self.noise_norm, self.rho_error, self.l2_distortion, self.exact_recovery,
        )] + [self.verdict(c) for c in CONDITION_IDS] + [
            self.region, str(self.ties), f(self.violations), self.error]


TRIAL_COLUMNS = [
    "trial_id", "cell", "seed", "m", "n", "K", "matrix", "profile", "signs", "noise",
    "snr_target", "snr_actual", "mar", "kappa", "delta_1", "delta_K", "delta_K1", "delta_2K",
    "noise_norm", "rho_error", "l2_distortion", "exact_recovery",
    *CONDITION_IDS, "region", "ties", "violations", "error",
]


def _deltas(phi: np.ndarray, k: int, cap: int, exact: bool, need_one: bool) -> dict[int, float]:
    n = phi.shape[1]
    out: dict[int, float] = {}
    if exact:
        for order in sorted({1, k, k + 1}):
            if order <= n:
                out[order] = exact_rip_constant(phi, order, cap).delta
        # the approximate-recovery order is optional: kept only when affordable
        if 2 * k <= n and 2 * k not in out and math.comb(n, 2 * k) <= cap:
            out[2 * k] = exact_rip_constant(phi, 2 * k, cap).delta
    elif need_one:
        out[1] = exact_rip_constant(phi, 1, cap).delta
    return out


def _delta_fields(deltas: dict[int, float], k: int) -> dict:
    return {"delta_1": deltas.get(1), "delta_k": deltas.get(k),
            "delta_k1": deltas.get(k + 1), "delta_2k": deltas.get(2 * k)}


def run_trial(cell: Cell, index: int, config: ExperimentConfig, trial_id: int = 0) -> TrialRecord:
    """One seeded trial; errors from the library are captured in the record."""
    seed = derive_seed(config.seed, cell.key, index)
    base = dict(trial_id=trial_id, cell=cell.key, seed=seed, m=cell.m, n=cell.n, k=cell.k,
                matrix=cell.matrix, profile=cell.profile, signs=cell.signs, noise=cell.noise)
    got: dict = {}
    try:
        kind, eps = _matrix_kind(cell.matrix)
        if kind == "counterexample":
            inst = appendix_a_instance(cell.k, cell.m, eps)
            phi, x = inst.phi, inst.x
        else:
            phi = build_matrix(cell, seed, config.seed, config.frame_steps)
            profile = parse_profile(cell.profile, cell.signs == "random")
            x = sparse_signal(cell.n, cell.k, profile, derive_seed(seed, "signal"))
        deltas = _deltas(phi, cell.k, config.cap, config.exact_delta, config.diagnostics)
        got.update(_delta_fields(deltas, cell.k))
        if kind == "counterexample":
            v = inst.v
            got["snr_target"] = cell.k / (1 + eps) ** 2
        else:
            target = _target_snr(cell, x, deltas)
            got["snr_target"] = target
            if math.isinf(target):
                v = np.zeros(cell.m)
            else:
                v = noise_at_snr(phi @ x.dense(), target, parse_noise(cell.noise),
                                 derive_seed(seed, "noise"), phi=phi, support=x.support)
        got["snr_actual"] = compute_snr(phi, x, v)
        got["mar"] = compute_mar(x)
        got["kappa"] = compute_kappa(x)
        got["noise_norm"] = float(np.linalg.norm(v))

        trace = omp_run(phi, phi @ x.dense() + v, FixedIterations(cell.k))
        rep = recovery_report(x, trace.final_estimate)
        got["rho_error"] = rep.error_rate
        got["l2_distortion"] = rep.l2_distortion
        got["exact_recovery"] = rep.exact
        got["ties"] = sum(it.tie_detected for it in trace.iterations)
        if cell.k + 1 in deltas:
            cls = classify_instance(phi, x, v, deltas)
            got["verdicts"] = tuple(
                (vd.condition_id, ("pass" if vd.holds else "fail") if vd.applicable else "n/a")
                for vd in cls.verdicts)
            got["region"] = cls.region
        if config.diagnostics:
            got["violations"] = verify_iteration_inequalities(phi, x, v, trace, deltas).violations
    except OmpSupportError as e:
        got["error"] = f"{type(e).__name__}: {e}"
    return TrialRecord(**base, **got)


def _target_snr(cell: Cell, x, deltas: dict[int, float]) -> float:
    token = cell.snr
    if token == "noise-free":
        return math.inf
    if token.startswith("thm1x"):
        f = float(token[5:])
        d = deltas[cell.k + 1]
        root = f * sufficient_snr_threshold(cell.k, d, compute_mar(x)) + THM1_OFFSET
        return root * root
    if token.startswith("thm3x"):
        f = float(token[5:])
        d2k = deltas.get(2 * cell.k)
        if d2k is None:
            raise CapacityError(f"delta_{2 * cell.k} not available under the cap", 0)
        floor = theorem3_snr_floor(compute_kappa(x), d2k)
        if math.isinf(floor):
            return math.inf
        return f * floor
    return float(token)


# -- cells -----------------------------------------------------------------------


@dataclass
class CellSummary:
    cell: Cell
    trials: int
    completed: int
    errors: int
    exact_recovery_rate: float | None
    mean_rho_error: float | None
    max_rho_error: float | None
    mean_l2_distortion: float | None
    verdict_tallies: dict[str, int]
    thm1_exceptions: int
    violations: int
    wall_time: float = 0.0

    def row(self) -> list[str]:
        def f(v):
            return "" if v is None else repr(float(v))

        c = self.cell
        return [c.key, str(c.m), str(c.n), str(c.k), c.matrix, c.profile, c.signs, c.noise, c.snr,
                str(self.trials), str(self.completed), str(self.errors),
                f(self.exact_recovery_rate), f(self.mean_rho_error), f(self.max_rho_error),
                f(self.mean_l2_distortion)] + [
            str(self.verdict_tallies.get(cid, 0)) for cid in CONDITION_IDS
        ] + [str(self.thm1_exceptions), str(self.violations)]


CELL_COLUMNS = [
    "cell", "m", "n", "K", "matrix", "profile", "signs", "noise", "snr", "trials", "completed",
    "errors", "exact_recovery_rate", "mean_rho_error", "max_rho_error", "mean_l2_distortion",
    *(f"{cid}_holds" for cid in CONDITION_IDS), "thm1_exceptions", "violations",
]


def summarize(cell: Cell, records: list[TrialRecord], wall_time: float = 0.0) -> CellSummary:
    done = [r for r in records if not r.error]
    rhos = [r.rho_error for r in done]
    tallies = {cid: sum(r.verdict(cid) == "pass" for r in done) for cid in CONDITION_IDS}
    exceptions = sum(r.verdict(THM1_SUFFICIENT) == "pass" and not r.exact_recovery for r in done)
    return CellSummary(
        cell=cell,
        trials=len(records),
        completed=len(done),
        errors=len(records) - len(done),
        exact_recovery_rate=(sum(r.exact_recovery for r in done) / len(done)) if done else None,
        mean_rho_error=float(np.mean(rhos)) if done else None,
        max_rho_error=float(np.max(rhos)) if done else None,
        mean_l2_distortion=float(np.mean([r.l2_distortion for r in done])) if done else None,
        verdict_tallies=tallies,
        thm1_exceptions=exceptions,
        violations=sum(r.violations or 0 for r in done),
        wall_time=wall_time,
    )


# -- experiments -------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[TrialRecord]
    cells: list[CellSummary]
    paths: dict[str, Path] = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return sum(c.violations for c in self.cells)

    @property
    def errors(self) -> int:
        return sum(c.errors for c in self.cells)


def _timed_trial(args):
    cell, index, config, trial_id = args
    t0 = time.perf_counter()
    rec = run_trial(cell, index, config, trial_id)
    return rec, time.perf_counter() - t0


def _prepare_output(out_dir) -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    probe = d / ".write-probe"
    probe.write_text("")
    probe.unlink()
    return d


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run every cell and trial, then write trials.csv, cells.csv, manifest.json.

    Records are gathered in (cell, trial) order whatever the worker count, so
    both CSV files depend only on the config.  Wall times appear only in the
    manifest.
    """
    config.validate()
    out = _prepare_output(config.out_dir) if write else None
    cells = config.cells()
    t_start = time.perf_counter()

    frames = {}
    for c in cells:
        order = c.frame_order()
        if order is not None:
            base_frame(config.seed, c.m, c.n, order, config.frame_steps)
            key = _frame_key(config.seed, c.m, c.n, order, config.frame_steps)
            frames[key] = _FRAMES[key]

    jobs = [(c, i, config, ci * config.trials + i) for ci, c in enumerate(cells)
            for i in range(config.trials)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers, initializer=_install_frames,
                                 initargs=(frames,)) as pool:
            results = list(pool.map(_timed_trial, jobs, chunksize=max(1, len(jobs) // (8 * config.workers))))
    else:
        results = [_timed_trial(j) for j in jobs]

    records = [r for r, _ in results]
    summaries = []
    for ci, c in enumerate(cells):
        chunk = results[ci * config.trials:(ci + 1) * config.trials]
        summaries.append(summarize(c, [r for r, _ in chunk], sum(t for _, t in chunk)))
    result = ExperimentResult(config, records, summaries)

    if out is not None:
        paths = {"trials": out / "trials.csv", "cells": out / "cells.csv",
                 "manifest": out / "manifest.json"}
        paths["trials"].write_text(_csv_text(TRIAL_COLUMNS, (r.row() for r in records)))
        paths["cells"].write_text(_csv_text(CELL_COLUMNS, (s.row() for s in summaries)))
        manifest = {
            "library": "ompsupport",
            "version": __version__,
            "config": config.to_dict(),
            "cells": len(cells),
            "trials": len(records),
            "violations": result.violations,
            "errors": result.errors,
            "wall_time_seconds": time.perf_counter() - t_start,
            "cell_wall_time_seconds": {s.cell.key: s.wall_time for s in summaries},
        }
        paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n")
        result.paths = paths
    return result


def read_trials_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
