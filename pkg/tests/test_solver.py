import numpy as np
import pytest
import scipy.io
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from geoflow.solver import (
    LinearSolver,
    SolverError,
    TripletMatrix,
    export_matrix_market,
    lu_factor,
    solve,
    spmv,
)


def dominant_system(rng, n, density=0.2):
    A = rng.normal(size=(n, n))
    A[rng.random((n, n)) > density] = 0.0
    np.fill_diagonal(A, np.abs(A).sum(axis=1) + 1.0)
    return A


@pytest.mark.parametrize("method", ["DirectLU", "GMRES"])
def test_identity(method):
    b = np.arange(1.0, 11.0)
    x, rep = solve(sparse.identity(10, format="csr"), b, method)
    assert np.allclose(x, b) and rep.residual < 1e-14 and not rep.singular


@pytest.mark.parametrize("n", [50, 200])
def test_direct_matches_dense_oracle(rng, n):
    A = dominant_system(rng, n)
    b = rng.normal(size=n)
    x, rep = solve(sparse.csr_matrix(A), b)
    ref = np.linalg.solve(A, b)
    assert np.abs(x - ref).max() <= 1e-10 * np.abs(ref).max()
    assert rep.method == "DirectLU" and rep.iterations == 0 and rep.residual <= 1e-10


def test_gmres_matches_dense_oracle(rng):
    A = dominant_system(rng, 80)
    b = rng.normal(size=80)
    x, rep = solve(sparse.csr_matrix(A), b, "GMRES", tol=1e-12)
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-9)
    assert rep.iterations >= 1 and rep.residual <= 1e-11


def test_singular_flagged():
    x, rep = solve(sparse.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]))
    assert rep.singular
    with pytest.raises(SolverError):
        solve(sparse.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]), raise_on_failure=True)
    with pytest.raises(SolverError):
        lu_factor(sparse.csr_matrix([[1.0, 1.0], [1.0, 1.0]]))


def test_residual_is_recomputed(rng):
    A = dominant_system(rng, 30)
    b = rng.normal(size=30)
    x, rep = solve(sparse.csr_matrix(A), b, "GMRES", tol=1e-4)
    assert rep.residual == pytest.approx(np.linalg.norm(A @ x - b) / np.linalg.norm(b), rel=1e-10)


def test_dimension_checks():
    with pytest.raises(ValueError):
        solve(sparse.csr_matrix(np.ones((2, 3))), np.ones(2))
    with pytest.raises(ValueError):
        solve(sparse.identity(3, format="csr"), np.ones(4))
    with pytest.raises(ValueError):
        spmv(sparse.identity(3, format="csr"), np.ones(4))


def test_spmv_examples(rng):
    x = rng.normal(size=7)
    assert np.array_equal(spmv(sparse.identity(7, format="csr"), x), x)
    assert np.array_equal(spmv(sparse.csr_matrix((5, 7)), x), np.zeros(5))


def test_triplets_with_duplicates_match_dense_sum(rng):
    T = TripletMatrix((30, 40))
    rows = rng.integers(0, 30, 500)
    cols = rng.integers(0, 40, 500)
    vals = rng.normal(size=500)
    T.add(rows[:250], cols[:250], vals[:250])
    T.add(rows[250:], cols[250:], vals[250:])
    dense = np.zeros((30, 40))
    for r, c, v in zip(rows, cols, vals):
        dense[r, c] += v
    x = rng.normal(size=40)
    assert np.abs(spmv(T.finalize(), x) - dense @ x).max() < 1e-13


def test_triplet_validation():
    T = TripletMatrix((2, 2))
    with pytest.raises(IndexError):
        T.add([2], [0], [1.0])
    with pytest.raises(ValueError):
        T.add([0], [0], [np.nan])
    assert T.finalize().nnz == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 4), st.floats(-1e3, 1e3)), max_size=60))
def test_triplet_round_trip(entries):
    T = TripletMatrix((6, 5))
    dense = np.zeros((6, 5))
    for r, c, v in entries:
        T.add([r], [c], [v])
        dense[r, c] += v
    x = np.linspace(-1.0, 1.0, 5)
    assert np.allclose(spmv(T.finalize(), x), dense @ x, rtol=1e-12, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 60))
def test_recovers_known_solution(seed, n):
    rng = np.random.default_rng(seed)
    A = dominant_system(rng, n)
    x0 = rng.normal(size=n)
    x, rep = solve(sparse.csr_matrix(A), A @ x0)
    assert not rep.singular
    assert np.allclose(x, x0, atol=1e-10 * max(1.0, np.abs(x0).max()))


def test_linear_solver_reuse_meets_tolerance(rng):
    base = dominant_system(rng, 120)
    solver = LinearSolver(reuse_factorization=True)
    for k in range(8):
        A = sparse.csr_matrix(base * (1.0 + 1e-4 * k) + 1e-4 * k * np.eye(120))
        b = rng.normal(size=120)
        x, rep = solver.solve(A, b)
        assert not rep.singular and rep.residual <= 1e-10
        assert np.allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-9)
    assert solver.factorizations < 8


def test_linear_solver_refactors_when_matrix_changes(rng):
    solver = LinearSolver(reuse_factorization=True)
    A1 = dominant_system(rng, 40)
    A2 = dominant_system(rng, 40)  # unrelated matrix: lagged factors are useless
    solver.solve(sparse.csr_matrix(A1), rng.normal(size=40))
    b = rng.normal(size=40)
    x, rep = solver.solve(sparse.csr_matrix(A2), b)
    assert rep.residual <= 1e-10 and solver.factorizations == 2


def test_linear_solver_flags_singular():
    solver = LinearSolver(reuse_factorization=True)
    _, rep = solver.solve(sparse.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]))
    assert rep.singular


def test_matrix_market_export(tmp_path, rng):
    A = sparse.csr_matrix(dominant_system(rng, 12))
    b = rng.normal(size=12)
    export_matrix_market(tmp_path / "k.mtx", A, b)
    back = scipy.io.mmread(str(tmp_path / "k.mtx"))
    assert abs(sparse.csr_matrix(back) - A).max() == 0.0
    assert (tmp_path / "k.mtx.rhs.mtx").exists()
