import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from cfcayley.errors import ShapeError, SingularMatrixError, StaleFactorizationError
from cfcayley.linalg import (
    BandedMatrix,
    SolveWorkspace,
    commutator,
    compact,
    matmul,
    matrix_exponential,
    shifted_identity,
    solve_shifted,
    to_dense,
)


def random_banded(rng, n, lower, upper):
    m = BandedMatrix.zeros(n, lower, upper)
    m.data[:] = rng.standard_normal(m.data.shape) + 1j * rng.standard_normal(m.data.shape)
    # zero the padding corners so the band layout is canonical
    dense = m.to_dense()
    return BandedMatrix.from_dense(dense, lower, upper)


def random_skew(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a - a.conj().T) / 2


# ---------------------------------------------------------------- storage


def test_banded_round_trip():
    rng = np.random.default_rng(1)
    m = random_banded(rng, 9, 2, 1)
    d = m.to_dense()
    back = BandedMatrix.from_dense(d, 2, 1)
    np.testing.assert_array_equal(back.to_dense(), d)
    assert np.all(np.triu(d, 2) == 0) and np.all(np.tril(d, -3) == 0)


def test_from_dense_rejects_entries_outside_band():
    with pytest.raises(ShapeError):
        BandedMatrix.from_dense(np.ones((4, 4)), 1, 1)


def test_from_diagonals_tridiagonal():
    m = BandedMatrix.from_diagonals({-1: [1, 2], 0: [3, 4, 5], 1: [6, 7]})
    expected = np.array([[3, 6, 0], [1, 4, 7], [0, 2, 5]])
    np.testing.assert_array_equal(m.to_dense(), expected)


def test_banded_arithmetic_matches_dense():
    rng = np.random.default_rng(2)
    a = random_banded(rng, 12, 1, 2)
    b = random_banded(rng, 12, 3, 0)
    da, db = a.to_dense(), b.to_dense()
    np.testing.assert_allclose(to_dense(a + b), da + db, atol=1e-14)
    np.testing.assert_allclose(to_dense(a - b), da - db, atol=1e-14)
    np.testing.assert_allclose(to_dense(2.5j * a), 2.5j * da, atol=1e-14)
    np.testing.assert_allclose(to_dense(a @ b), da @ db, atol=1e-13)
    v = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    np.testing.assert_allclose(a @ v, da @ v, atol=1e-13)
    np.testing.assert_allclose(v @ a, v @ da, atol=1e-13)
    np.testing.assert_allclose(a.matvec(np.stack([v, 2 * v], 1)), da @ np.stack([v, 2 * v], 1), atol=1e-13)
    np.testing.assert_allclose(to_dense(a.H), da.conj().T)


def test_dimension_mismatch_raises():
    a = BandedMatrix.identity(4)
    with pytest.raises(ShapeError):
        a + BandedMatrix.identity(5)
    with pytest.raises(ShapeError):
        a.matvec(np.ones(3))
    with pytest.raises(ShapeError):
        commutator(np.eye(2), np.eye(3))


def test_product_widens_band_then_densifies():
    n = 16
    t = BandedMatrix.from_diagonals({-1: np.ones(n - 1), 0: np.ones(n), 1: np.ones(n - 1)})
    t2 = t @ t
    assert isinstance(t2, BandedMatrix) and (t2.lower, t2.upper) == (2, 2)
    t8 = t2 @ t2 @ t2 @ t2
    assert isinstance(t8, np.ndarray)  # bandwidth 8 > n/4
    np.testing.assert_allclose(t8, np.linalg.matrix_power(t.to_dense(), 8))


# ---------------------------------------------------------------- commutator


def test_commutator_pauli():
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]])
    np.testing.assert_allclose(commutator(sx, sy), [[2j, 0], [0, -2j]])


def test_commutator_self_and_diagonal_vanish():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 5))
    assert not np.any(commutator(a, a))
    d1, d2 = np.diag(rng.standard_normal(5)), np.diag(rng.standard_normal(5))
    assert not np.any(commutator(d1, d2))


def test_banded_commutator_bandwidth():
    rng = np.random.default_rng(4)
    a = random_banded(rng, 40, 1, 1)
    b = random_banded(rng, 40, 2, 1)
    c = commutator(a, b)
    assert isinstance(c, BandedMatrix)
    assert c.lower <= 3 and c.upper <= 2
    da, db = a.to_dense(), b.to_dense()
    np.testing.assert_allclose(c.to_dense(), da @ db - db @ da, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_commutator_antisymmetric_and_bilinear(n, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for _ in range(3))
    np.testing.assert_array_equal(commutator(a, b), -commutator(b, a))
    x, y = 0.7, -1.3j
    np.testing.assert_allclose(
        commutator(x * a + y * c, b), x * commutator(a, b) + y * commutator(c, b), atol=1e-12
    )


# ---------------------------------------------------------------- solves


def test_solve_identity_and_diagonal():
    v = np.array([1.0 + 2j, -3.0])
    np.testing.assert_array_equal(solve_shifted(np.eye(2), v), v)
    np.testing.assert_allclose(solve_shifted(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1, 1])
    np.testing.assert_allclose(
        solve_shifted(BandedMatrix.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1, 1]
    )


def test_solve_residual_random_8x8():
    rng = np.random.default_rng(5)
    m = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)) + 8 * np.eye(8)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    x = solve_shifted(m, v)
    assert np.linalg.norm(m @ x - v) <= 1e-12 * np.linalg.norm(v)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 40), st.integers(0, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_banded_and_dense_solves_agree(n, lower, upper, seed):
    rng = np.random.default_rng(seed)
    m = random_banded(rng, n, lower, upper)
    m = shifted_identity(m, 1.0 / (lower + upper + 1)) + BandedMatrix.diag(np.full(n, 3.0))
    m = BandedMatrix.from_dense(to_dense(m), max(lower, 0), max(upper, 0))
    rhs = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    xb = solve_shifted(m, rhs)
    xd = solve_shifted(m.to_dense(), rhs)
    np.testing.assert_allclose(xb, xd, atol=1e-13 * np.abs(xd).max())
    assert np.linalg.norm(m.to_dense() @ xb - rhs) <= 1e-11 * np.linalg.norm(rhs)


def test_singular_matrix_names_time():
    with pytest.raises(SingularMatrixError, match="t=0.25"):
        solve_shifted(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2), time=0.25)
    with pytest.raises(SingularMatrixError):
        solve_shifted(BandedMatrix.diag([1.0, 0.0, 1.0]), np.ones(3))


def test_stale_factorization_is_detected():
    ws = SolveWorkspace()
    with pytest.raises(StaleFactorizationError):
        ws.solve(np.ones(2))
    gen = ws.factor(np.diag([1.0, 2.0]))
    ws.factor(np.diag([3.0, 4.0]))
    with pytest.raises(StaleFactorizationError):
        ws.solve(np.ones(2), generation=gen)
    np.testing.assert_allclose(ws.solve(np.array([3.0, 4.0])), [1, 1])


def test_workspace_reuse_across_band_shapes():
    ws = SolveWorkspace()
    rng = np.random.default_rng(6)
    for lower, upper in [(1, 1), (2, 2), (1, 1), (0, 0)]:
        m = random_banded(rng, 10, lower, upper) + BandedMatrix.diag(np.full(10, 10.0))
        rhs = rng.standard_normal(10) + 0j
        ws.factor(m)
        np.testing.assert_allclose(ws.solve(rhs), np.linalg.solve(m.to_dense(), rhs), atol=1e-13)


# ---------------------------------------------------------------- exponential


def test_expm_zero_and_scalar():
    np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(matrix_exponential(np.array([[1j * np.pi]])), [[-1]], atol=1e-15)


def test_expm_skew_is_unitary():
    rng = np.random.default_rng(7)
    u = matrix_exponential(random_skew(rng, 6))
    assert np.linalg.norm(u.conj().T @ u - np.eye(6)) <= 1e-12


@pytest.mark.parametrize("scale", [1e-3, 0.1, 1.0, 3.0, 10.0, 60.0])
def test_expm_matches_scipy(scale):
    rng = np.random.default_rng(int(scale * 1000))
    a = rng.standard_normal((10, 10)) + 1j * rng.standard_normal((10, 10))
    a *= scale / np.linalg.norm(a, 2)
    ref = sla.expm(a)
    err = np.linalg.norm(matrix_exponential(a) - ref) / np.linalg.norm(ref)
    assert err <= (1e-12 if scale <= 10 else 1e-10)


def test_expm_banded_input_gives_dense():
    m = BandedMatrix.from_diagonals({-1: [1j, 1j], 0: [0, 0, 0], 1: [1j, 1j]})
    out = matrix_exponential(m)
    assert isinstance(out, np.ndarray)
    np.testing.assert_allclose(out, sla.expm(m.to_dense()), atol=1e-14)


def test_expm_rejects_non_square():
    with pytest.raises(ShapeError):
        matrix_exponential(np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 24), st.floats(0.01, 30.0), st.integers(0, 2**32 - 1))
def test_expm_skew_unitary_property(n, scale, seed):
    rng = np.random.default_rng(seed)
    a = random_skew(rng, n)
    nrm = np.linalg.norm(a, 2)
    if nrm > 0:
        a *= scale / nrm
    u = matrix_exponential(a)
    assert np.linalg.norm(u.conj().T @ u - np.eye(n)) <= 1e-12


def test_matmul_mixed_storage():
    rng = np.random.default_rng(8)
    a = random_banded(rng, 6, 1, 1)
    d = rng.standard_normal((6, 6))
    np.testing.assert_allclose(matmul(a, d), a.to_dense() @ d, atol=1e-14)
    assert compact(a) is a
