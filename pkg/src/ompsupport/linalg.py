"""Dense linear algebra on column subsets.

Index sets are 1-based throughout the public interface: ``S = (1, 3)`` picks
the first and third columns of a matrix.  Conversion to numpy's 0-based
indexing happens in exactly one place, :func:`_zero_based`.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.linalg

from .errors import DegenerateSystemError, InputDomainError

RANK_RTOL = 1e-12
SYMMETRY_ATOL = 1e-12
MAX_EIGEN_DIM = 64


def as_matrix(phi) -> np.ndarray:
    """Validate and return a finite 2-D float array."""
    a = np.asarray(phi, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InputDomainError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputDomainError("matrix has non-finite entries")
    return a


def as_vector(u, length: int | None = None) -> np.ndarray:
    a = np.asarray(u, dtype=float)
    if a.ndim != 1:
        raise InputDomainError(f"expected a 1-D vector, got shape {a.shape}")
    if length is not None and a.shape[0] != length:
        raise InputDomainError(f"expected length {length}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise InputDomainError("vector has non-finite entries")
    return a


def index_set(indices: Iterable[int], n: int) -> tuple[int, ...]:
    """Normalize ``indices`` to a sorted tuple of distinct 1-based ints in [1, n]."""
    out = []
    for i in indices:
        if isinstance(i, (bool, np.bool_)) or int(i) != i:
            raise InputDomainError(f"index {i!r} is not an integer")
        out.append(int(i))
    s = sorted(out)
    if len(set(s)) != len(s):
        raise InputDomainError(f"duplicate indices in {out}")
    if s and (s[0] < 1 or s[-1] > n):
        raise InputDomainError(f"indices {s} outside [1, {n}]")
    return tuple(s)


def _zero_based(S: Iterable[int], n: int) -> np.ndarray:
    return np.asarray(index_set(S, n), dtype=np.intp) - 1


def submatrix(phi, S: Iterable[int]) -> np.ndarray:
    """Columns of ``phi`` indexed by the 1-based set ``S``, in ascending order."""
    phi = as_matrix(phi)
    return phi[:, _zero_based(S, phi.shape[1])]


def _qr_factor(A: np.ndarray):
    """Economy QR of ``A`` with the rank check; A may have zero columns."""
    q, r = scipy.linalg.qr(A, mode="economic")
    sv = np.linalg.svd(r, compute_uv=False)
    if sv[-1] < RANK_RTOL * sv[0] or sv[0] == 0.0:
        raise DegenerateSystemError(
            f"column submatrix is rank deficient (sigma_min/sigma_max = "
            f"{sv[-1] / sv[0] if sv[0] else 0.0:.3e})"
        )
    return q, r


def least_squares_on_support(phi, y, S: Iterable[int]) -> np.ndarray:
    """Coefficients ``c`` minimizing ``||y - Phi_S c||_2`` via Householder QR.

    An empty ``S`` gives an empty coefficient vector.
    """
    phi = as_matrix(phi)
    y = as_vector(y, phi.shape[0])
    cols = _zero_based(S, phi.shape[1])
    if cols.size == 0:
        return np.zeros(0)
    if cols.size > phi.shape[0]:
        raise DegenerateSystemError(f"{cols.size} columns exceed {phi.shape[0]} rows")
    q, r = _qr_factor(phi[:, cols])
    return scipy.linalg.solve_triangular(r, q.T @ y)


def project_orthogonal_complement(phi, S: Iterable[int], u) -> np.ndarray:
    """``u`` minus its orthogonal projection onto span(Phi_S)."""
    phi = as_matrix(phi)
    u = as_vector(u, phi.shape[0])
    cols = _zero_based(S, phi.shape[1])
    if cols.size == 0:
        return u.copy()
    if cols.size > phi.shape[0]:
        raise DegenerateSystemError(f"{cols.size} columns exceed {phi.shape[0]} rows")
    q, _ = _qr_factor(phi[:, cols])
    return u - q @ (q.T @ u)


def symmetric_eigen_extremes(A) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a small symmetric matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise InputDomainError(f"expected a non-empty square matrix, got shape {A.shape}")
    if A.shape[0] > MAX_EIGEN_DIM:
        raise InputDomainError(f"dimension {A.shape[0]} exceeds {MAX_EIGEN_DIM}")
    if not np.all(np.isfinite(A)):
        raise InputDomainError("matrix has non-finite entries")
    if np.max(np.abs(A - A.T)) > SYMMETRY_ATOL:
        raise InputDomainError("matrix is not symmetric")
    w = np.linalg.eigvalsh(A)
    return float(w[0]), float(w[-1])


# -- text formats ------------------------------------------------------------
# Matrix: first line "m n", then m*n row-major entries.  Vector: first line
# "n", then n entries.  Entries are whitespace separated decimals.


def _parse_numbers(tokens: list[str]) -> np.ndarray:
    try:
        vals = np.array([float(t) for t in tokens])
    except ValueError as e:
        raise InputDomainError(f"bad numeric token: {e}") from None
    if not np.all(np.isfinite(vals)):
        raise InputDomainError("NaN/Inf entries are not allowed")
    return vals


def _header(tokens: list[str], count: int, what: str) -> list[int]:
    try:
        dims = [int(t) for t in tokens[:count]]
    except ValueError:
        raise InputDomainError(f"bad {what} header {tokens[:count]}") from None
    if len(dims) != count or any(d < 1 for d in dims):
        raise InputDomainError(f"bad {what} header {tokens[:count]}")
    return dims


def parse_matrix(text: str) -> np.ndarray:
    lines = text.strip().splitlines()
    if not lines:
        raise InputDomainError("empty matrix text")
    m, n = _header(lines[0].split(), 2, "matrix")
    body = " ".join(lines[1:]).split()
    if len(body) != m * n:
        raise InputDomainError(f"expected {m * n} entries, got {len(body)}")
    return _parse_numbers(body).reshape(m, n)


def parse_vector(text: str) -> np.ndarray:
    lines = text.strip().splitlines()
    if not lines:
        raise InputDomainError("empty vector text")
    (n,) = _header(lines[0].split(), 1, "vector")
    body = " ".join(lines[1:]).split()
    if len(body) != n:
        raise InputDomainError(f"expected {n} entries, got {len(body)}")
    return _parse_numbers(body)


def format_matrix(phi) -> str:
    phi = as_matrix(phi)
    rows = [" ".join(repr(float(v)) for v in row) for row in phi]
    return f"{phi.shape[0]} {phi.shape[1]}\n" + "\n".join(rows) + "\n"


def format_vector(u) -> str:
    u = as_vector(u)
    return f"{u.shape[0]}\n" + " ".join(repr(float(v)) for v in u) + "\n"


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def read_vector(path) -> np.ndarray:
    return parse_vector(Path(path).read_text())


def write_matrix(path, phi) -> None:
    Path(path).write_text(format_matrix(phi))


def write_vector(path, u) -> None:
    Path(path).write_text(format_vector(u))
