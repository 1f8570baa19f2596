import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ompsupport.errors import DegenerateSystemError, InputDomainError
from ompsupport.linalg import (
    format_matrix,
    format_vector,
    index_set,
    least_squares_on_support,
    parse_matrix,
    parse_vector,
    project_orthogonal_complement,
    submatrix,
    symmetric_eigen_extremes,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_submatrix_selects_columns():
    phi = np.array([[1.0, 2, 3], [4, 5, 6]])
    assert np.array_equal(submatrix(phi, {1, 3}), [[1, 3], [4, 6]])
    assert np.array_equal(submatrix(phi, [1, 2, 3]), phi)


def test_submatrix_matches_direct_indexing():
    phi = rng().standard_normal((8, 16))
    sub = submatrix(phi, [11, 2, 7])
    for j, col in enumerate([2, 7, 11]):
        assert np.array_equal(sub[:, j], phi[:, col - 1])


@pytest.mark.parametrize("bad", [[0], [4], [1, 1], [1.5]])
def test_index_set_rejects(bad):
    with pytest.raises(InputDomainError):
        index_set(bad, 3)


def test_least_squares_identity():
    c = least_squares_on_support(np.eye(3), [1.0, 2, 3], [1, 2])
    assert np.allclose(c, [1, 2])


def test_least_squares_empty_support():
    assert least_squares_on_support(np.eye(3), [1.0, 2, 3], []).shape == (0,)


def test_least_squares_plant_and_recover():
    g = rng(1)
    phi = g.standard_normal((10, 4))
    c_star = g.standard_normal(4)
    c = least_squares_on_support(phi, phi @ c_star, [1, 2, 3, 4])
    assert np.linalg.norm(c - c_star) <= 1e-9 * np.linalg.norm(c_star)


def test_least_squares_matches_svd_solver():
    g = rng(2)
    phi, y = g.standard_normal((12, 20)), g.standard_normal(12)
    S = [3, 8, 9, 17]
    ref = np.linalg.lstsq(phi[:, np.array(S) - 1], y, rcond=None)[0]
    assert np.allclose(least_squares_on_support(phi, y, S), ref, rtol=1e-10, atol=1e-12)


def test_least_squares_rank_deficient():
    phi = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(DegenerateSystemError):
        least_squares_on_support(phi, [1.0, 1, 1], [1, 2])
    # more columns than rows
    with pytest.raises(DegenerateSystemError):
        least_squares_on_support(np.ones((1, 2)), [1.0], [1, 2])


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_residual_orthogonality(seed, s):
    g = rng(seed)
    phi, y = g.standard_normal((8, 10)), g.standard_normal(8)
    S = sorted(g.choice(10, s, replace=False) + 1)
    c = least_squares_on_support(phi, y, S)
    A = phi[:, np.array(S) - 1]
    lhs = np.abs(A.T @ (y - A @ c)).max()
    assert lhs <= 1e-9 * np.abs(A.T @ y).max() + 1e-12


def test_projection_empty_and_in_span():
    g = rng(3)
    phi, u = g.standard_normal((6, 8)), g.standard_normal(6)
    assert np.array_equal(project_orthogonal_complement(phi, [], u), u)
    w = phi[:, [1, 4]] @ np.array([0.3, -2.0])
    assert np.linalg.norm(project_orthogonal_complement(phi, [2, 5], w)) < 1e-9 * np.linalg.norm(w)


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_projection_properties(seed, s):
    g = rng(seed)
    phi = g.standard_normal((7, 9))
    a, b = g.standard_normal(7), g.standard_normal(7)
    S = sorted(g.choice(9, s, replace=False) + 1)
    pa = project_orthogonal_complement(phi, S, a)
    # Pythagoras with an independent pseudoinverse for the parallel part
    A = phi[:, np.array(S) - 1]
    par = A @ (np.linalg.pinv(A) @ a)
    assert abs(pa @ pa + par @ par - a @ a) <= 1e-9 * (a @ a)
    assert np.linalg.norm(project_orthogonal_complement(phi, S, pa) - pa) <= 1e-9 * np.linalg.norm(a)
    assert np.abs(A.T @ pa).max() <= 1e-9 * np.linalg.norm(a) * np.linalg.norm(A, axis=0).max()
    pb = project_orthogonal_complement(phi, S, b)
    assert abs(pa @ b - a @ pb) <= 1e-9 * np.linalg.norm(a) * np.linalg.norm(b)


def test_eigen_extremes_closed_forms():
    assert symmetric_eigen_extremes(np.eye(3)) == pytest.approx((1, 1))
    lo, hi = symmetric_eigen_extremes([[1, 0.6], [0.6, 1]])
    assert lo == pytest.approx(0.4, rel=1e-12) and hi == pytest.approx(1.6, rel=1e-12)


def test_eigen_extremes_reject():
    with pytest.raises(InputDomainError):
        symmetric_eigen_extremes([[1, 0.5], [0.4, 1]])
    with pytest.raises(InputDomainError):
        symmetric_eigen_extremes(np.eye(65))


def test_eigen_extremes_bracket_rayleigh_quotients():
    g = rng(4)
    A = g.standard_normal((10, 4))
    lo, hi = symmetric_eigen_extremes(A.T @ A)
    u = g.standard_normal((100_000, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    q = np.sum((u @ A.T) ** 2, axis=1)
    assert q.min() >= lo - 1e-8 and q.max() <= hi + 1e-8
    # sampled extremes approach the eigenvalues from inside
    assert q.min() - lo < 0.05 * hi and hi - q.max() < 0.05 * hi


def test_text_round_trip():
    g = rng(5)
    phi, u = g.standard_normal((3, 4)), g.standard_normal(5)
    assert np.array_equal(parse_matrix(format_matrix(phi)), phi)
    assert np.array_equal(parse_vector(format_vector(u)), u)


@pytest.mark.parametrize("text", ["2 2\n1 2 3", "2 2\n1 2 nan 4", "2\n1 inf", "x\n1", ""])
def test_text_rejects(text):
    with pytest.raises(InputDomainError):
        if text.startswith("2 2"):
            parse_matrix(text)
        else:
            parse_vector(text)
