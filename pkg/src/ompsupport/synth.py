"""Seeded instance generators.

All randomness flows from integer seeds through a Philox counter-based bit
generator.  Normal variates are produced by inverse-CDF transformation of
53-bit uniforms (``scipy.special.ndtri``), not numpy's ziggurat sampler, so a
seed maps to the same matrix on any platform.  Per-trial seeds are derived
with :func:`derive_seed` (SHA-256 of the joined keys).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import ndtri

from .errors import InputDomainError
from .linalg import as_vector, format_matrix, format_vector, index_set
from .metrics import SparseSignal, colex_subsets

_TWO53 = float(2 ** 53)


def derive_seed(base_seed: int, *keys) -> int:
    """64-bit seed from ``sha256("base/key1/key2/...")``."""
    text = "/".join(str(k) for k in (base_seed, *keys))
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def _bitgen(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) % 2 ** 64))


def uniforms(seed: int, size) -> np.ndarray:
    """Uniforms strictly inside (0, 1) on the 2**-53 grid offset by half a step."""
    raw = _bitgen(seed).integers(0, 2 ** 53, size=size, dtype=np.uint64)
    return (raw.astype(float) + 0.5) / _TWO53


def normals(seed: int, size) -> np.ndarray:
    return ndtri(uniforms(seed, size))


def gaussian_matrix(m: int, n: int, seed: int) -> np.ndarray:
    """i.i.d. N(0, 1/m) entries, so each column has unit expected squared norm."""
    if m < 1 or n < 1:
        raise InputDomainError(f"matrix dimensions must be positive, got {m}x{n}")
    return normals(derive_seed(seed, "gaussian", m, n), (m, n)) / math.sqrt(m)


def random_orthogonal(n: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix)."""
    q, r = np.linalg.qr(normals(derive_seed(seed, "orthogonal", n), (n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def low_rip_frame(m: int, n: int, order: int, seed: int, steps: int = 1500) -> np.ndarray:
    """Deterministic m x n matrix with a small isometry constant of ``order``.

    Starts from unit-normalized rows of a random orthogonal matrix and runs
    Adam on a log-sum-exp smoothing of the largest eigenvalue deviation
    ``max(1 - lambda_min, lambda_max - 1)`` over all ``order``-column Gram
    matrices.  Random matrices of desk size almost never satisfy the small
    delta hypotheses of exact recovery results; this gives instances that do.
    """
    if not 1 <= order <= min(m, n):
        raise InputDomainError(f"order must lie in [1, min(m, n)], got {order}")
    if m > n:
        raise InputDomainError("expected m <= n")
    subsets = colex_subsets(n, order)
    phi = random_orthogonal(n, derive_seed(seed, "frame", m, n, order))[:m]
    phi = phi / np.linalg.norm(phi, axis=0)
    best, best_dev = phi.copy(), math.inf
    mom, vel = np.zeros_like(phi), np.zeros_like(phi)
    b1, b2, lr0 = 0.9, 0.999, 0.01
    for it in range(1, steps + 1):
        A = phi[:, subsets].transpose(1, 0, 2)
        w, V = np.linalg.eigh(np.swapaxes(A, 1, 2) @ A)
        dev = np.concatenate([1.0 - w[:, 0], w[:, -1] - 1.0])
        top = float(dev.max())
        if top < best_dev:
            best, best_dev = phi.copy(), top
        beta = 30.0 + it / 10.0
        p = np.exp(beta * (dev - top))
        p /= p.sum()
        N = subsets.shape[0]
        lo, hi = V[:, :, 0], V[:, :, -1]
        # d lambda / d A = 2 A v v'
        g = (2.0 * (-p[:N, None, None] * (A @ lo[..., None]) * lo[:, None, :]
                    + p[N:, None, None] * (A @ hi[..., None]) * hi[:, None, :]))
        grad = np.zeros_like(phi)
        for j in range(order):
            np.add.at(grad.T, subsets[:, j], g[:, :, j])
        mom = b1 * mom + (1 - b1) * grad
        vel = b2 * vel + (1 - b2) * grad ** 2
        lr = lr0 * 0.5 * (1 + math.cos(math.pi * it / steps))
        phi = phi - lr * (mom / (1 - b1 ** it)) / (np.sqrt(vel / (1 - b2 ** it)) + 1e-12)
    return best


def randomized_frame(frame, seed: int) -> np.ndarray:
    """Rotate, permute and sign-flip the columns of ``frame``.

    All three operations leave every column Gram matrix's spectrum unchanged,
    so the isometry constants of the result equal those of ``frame`` up to
    rounding.
    """
    frame = np.asarray(frame, dtype=float)
    m, n = frame.shape
    rot = random_orthogonal(m, derive_seed(seed, "rotate"))
    perm = np.argsort(uniforms(derive_seed(seed, "permute"), n), kind="stable")
    signs = np.where(uniforms(derive_seed(seed, "flip"), n) < 0.5, -1.0, 1.0)
    return (rot @ frame)[:, perm] * signs


# -- signals -----------------------------------------------------------------


@dataclass(frozen=True)
class EqualMagnitude:
    value: float = 1.0
    random_signs: bool = False


@dataclass(frozen=True)
class UniformMagnitude:
    lo: float
    hi: float
    random_signs: bool = False

    def __post_init__(self):
        if not 0 < self.lo <= self.hi:
            raise InputDomainError(f"need 0 < lo <= hi, got ({self.lo}, {self.hi})")


@dataclass(frozen=True)
class GaussianMagnitude:
    sigma: float = 1.0
    random_signs: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise InputDomainError("sigma must be positive")


SignalProfile = Union[EqualMagnitude, UniformMagnitude, GaussianMagnitude]


def random_support(n: int, k: int, seed: int) -> tuple[int, ...]:
    """Uniformly random k-subset of [1, n] (k smallest of n uniform keys)."""
    keys = uniforms(derive_seed(seed, "support", n, k), n)
    return tuple(sorted(int(i) + 1 for i in np.argsort(keys, kind="stable")[:k]))


def sparse_signal(n: int, k: int, profile: SignalProfile, seed: int) -> SparseSignal:
    if not 1 <= k <= n:
        raise InputDomainError(f"need 1 <= K <= n, got K={k}, n={n}")
    support = random_support(n, k, seed)
    u = uniforms(derive_seed(seed, "values", n, k), (2, k))
    if isinstance(profile, EqualMagnitude):
        if profile.value == 0:
            raise InputDomainError("magnitude must be nonzero")
        mags = np.full(k, abs(float(profile.value)))
    elif isinstance(profile, UniformMagnitude):
        mags = profile.lo + (profile.hi - profile.lo) * u[0]
    elif isinstance(profile, GaussianMagnitude):
        mags = np.abs(profile.sigma * ndtri(u[0]))
    else:
        raise InputDomainError(f"unknown profile {profile!r}")
    signs = np.where(u[1] < 0.5, -1.0, 1.0) if profile.random_signs else np.ones(k)
    return SparseSignal(n, support, tuple(float(v) for v in signs * mags))


# -- noise -------------------------------------------------------------------


@dataclass(frozen=True)
class IsotropicGaussianDirection:
    pass


@dataclass(frozen=True)
class FixedBasisVector:
    index: int


@dataclass(frozen=True)
class AdversarialOffSupport:
    """Noise along the strongest off-support column, projected off span(Phi_T).

    The competitor is the column outside T most correlated with ``Phi x``; the
    noise is signed so that it increases that column's correlation while
    leaving every support column's correlation untouched.
    """


NoiseMode = Union[IsotropicGaussianDirection, FixedBasisVector, AdversarialOffSupport]


def noise_at_snr(phi_x, target_snr: float, mode: NoiseMode, seed: int = 0, *, phi=None, support=None) -> np.ndarray:
    """Noise vector whose energy makes ``||Phi x||^2 / ||v||^2 == target_snr``."""
    phi_x = as_vector(phi_x)
    m = phi_x.shape[0]
    signal = float(np.linalg.norm(phi_x))
    if signal == 0.0:
        raise InputDomainError("measurement vector is zero; SNR is undefined")
    if not (target_snr > 0 and math.isfinite(target_snr)):
        raise InputDomainError(f"target SNR must be positive and finite, got {target_snr}")

    if isinstance(mode, IsotropicGaussianDirection):
        d = normals(derive_seed(seed, "noise", m), m)
    elif isinstance(mode, FixedBasisVector):
        (i,) = index_set([mode.index], m)
        d = np.zeros(m)
        d[i - 1] = 1.0
    elif isinstance(mode, AdversarialOffSupport):
        if phi is None or support is None:
            raise InputDomainError("adversarial noise needs phi and support")
        phi = np.asarray(phi, dtype=float)
        T = index_set(support, phi.shape[1])
        off = np.setdiff1d(np.arange(phi.shape[1]), np.asarray(T, dtype=int) - 1)
        if off.size == 0:
            raise InputDomainError("no off-support column available")
        corr = phi[:, off].T @ phi_x
        j = off[int(np.argmax(np.abs(corr)))]
        q, _ = np.linalg.qr(phi[:, np.asarray(T, dtype=int) - 1])
        d = phi[:, j] - q @ (q.T @ phi[:, j])
        if np.linalg.norm(d) <= 1e-12 * np.linalg.norm(phi[:, j]):
            raise InputDomainError("competitor column lies in span(Phi_T)")
        if phi[:, j] @ phi_x < 0:
            d = -d
    else:
        raise InputDomainError(f"unknown noise mode {mode!r}")
    return d * (signal / (math.sqrt(target_snr) * np.linalg.norm(d)))


# -- the identity-matrix counterexample ----------------------------------------


@dataclass(frozen=True)
class Instance:
    phi: np.ndarray
    x: SparseSignal
    v: np.ndarray
    y: np.ndarray


def appendix_a_instance(k: int, m: int, eps: float = 0.0) -> Instance:
    """Identity Phi (m x m), K ones on {1..K}, noise (1 + eps) e_m.

    SNR = K / (1 + eps)^2 and MAR = 1 with delta_{K+1} = 0.  At eps = 0 the
    first identification step ties between the support and index m; any
    eps > 0 makes index m win outright.
    """
    if k < 1:
        raise InputDomainError("K must be positive")
    if m <= k:
        raise InputDomainError(f"need m > K, got m={m}, K={k}")
    if not (eps >= 0 and math.isfinite(eps)):
        raise InputDomainError("eps must be finite and nonnegative")
    phi = np.eye(m)
    x = SparseSignal(m, tuple(range(1, k + 1)), (1.0,) * k)
    v = np.zeros(m)
    v[-1] = 1.0 + eps
    return Instance(phi, x, v, phi @ x.dense() + v)


# -- persistence -------------------------------------------------------------


def write_manifest(path, entries: dict) -> None:
    """Flat ``key=value`` file, keys in insertion order."""
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in entries.items()))


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputDomainError(f"malformed manifest line {line!r}")
        out[key.strip()] = value.strip()
    return out


def write_instance(directory, inst: Instance, manifest: dict) -> dict[str, Path]:
    """Write phi.txt, x.txt, v.txt, y.txt and manifest.txt into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {
        "phi": d / "phi.txt",
        "x": d / "x.txt",
        "v": d / "v.txt",
        "y": d / "y.txt",
        "manifest": d / "manifest.txt",
    }
    files["phi"].write_text(format_matrix(inst.phi))
    files["x"].write_text(format_vector(inst.x.dense()))
    files["v"].write_text(format_vector(inst.v))
    files["y"].write_text(format_vector(inst.y))
    write_manifest(files["manifest"], manifest)
    return files
