import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msemu import ConditioningError, InfeasibleError, ResourceError
from msemu.errors import ArgumentError, CapabilityError
from msemu.linalg import (
    Factorization,
    assemble_gram,
    cross_matrix,
    eigen_extremes,
    estimate_nnz,
    kernel_combination,
    logdet_spd,
    solve_error_bound,
    solve_spd,
)

from conftest import rk, spread_points


def test_sparse_equals_dense(rng):
    X = rng.random((400, 2))
    k = rk("wendland-smooth", 2, 6.0)
    D = assemble_gram(X, k, mode="dense")
    S = assemble_gram(X, k, mode="sparse")
    full = S.toarray()
    assert np.array_equal(full, D.dense)
    assert S.nnz == np.count_nonzero(D.dense)
    # upper triangle only
    assert S.upper.nnz == (S.nnz + S.n) // 2


def test_sparse_matvec(rng):
    X = rng.random((300, 3))
    k = rk("wendland-rough", 3, 3.0)
    S = assemble_gram(X, k, mode="sparse")
    V = rng.normal(size=(300, 4))
    assert np.allclose(S.matvec(V), k.gram(X) @ V, atol=1e-13)
    assert np.allclose(S.matvec(V[:, 0]), k.gram(X) @ V[:, 0], atol=1e-13)


def test_sparse_requires_compact(rng):
    with pytest.raises(ArgumentError):
        assemble_gram(rng.random((5, 1)), rk("gaussian", 1, 1.0), mode="sparse")


def test_memory_budget(rng):
    X = rng.random((200, 2))
    with pytest.raises(ResourceError) as exc:
        assemble_gram(X, rk("gaussian", 2, 1.0), memory_budget=1000)
    assert exc.value.estimated_nnz == 200 * 200


def test_estimate_nnz_ballpark():
    rng = np.random.default_rng(1)
    X = rng.random((3000, 2))
    k = rk("wendland-rough", 2, 20.0)
    est = estimate_nnz(3000, k)
    actual = assemble_gram(X, k, mode="sparse").nnz
    assert 0.7 * est <= actual <= 1.05 * est


@pytest.mark.parametrize("n,d,theta", [(200, 2, 4.0), (400, 3, 2.5), (150, 1, 300.0)])
def test_dense_and_cg_agree(n, d, theta):
    rng = np.random.default_rng(n)
    X = rng.random((n, d))
    k = rk("wendland-smooth", d, theta)
    D = assemble_gram(X, k, mode="dense")
    assert np.linalg.cond(D.dense) <= 1e6
    b = rng.normal(size=n)
    xd = solve_spd(D, b).x
    rep = solve_spd(assemble_gram(X, k, mode="sparse"), b)
    assert rep.method == "sparse-pcg" and rep.residual <= 1e-10
    assert np.linalg.norm(rep.x - xd) <= 1e-7 * np.linalg.norm(xd)


def test_solve_report_and_refinement(rng):
    X = rng.random((80, 2))
    A = assemble_gram(X, rk("gaussian", 2, 6.0))
    b = rng.normal(size=80)
    rep = solve_spd(A, b)
    assert rep.residual <= 1e-10
    assert np.allclose(A.dense @ rep.x, b, atol=1e-8)
    assert set(rep.to_dict()) >= {"method", "iterations", "residual", "jitter"}
    assert solve_spd(A, np.zeros(80)).x.tolist() == [0.0] * 80


def test_singular_needs_jitter():
    X = np.array([[0.1, 0.2], [0.1, 0.2], [0.5, 0.5]])
    A = assemble_gram(X, rk("gaussian", 2, 1.0))
    with pytest.raises(ConditioningError) as exc:
        solve_spd(A, np.array([1.0, 1.0, 0.0]))
    assert "q_X" in exc.value.diagnostics
    rep = solve_spd(A, np.array([1.0, 1.0, 0.0]), jitter=True, tol=1e-6)
    assert rep.jitter == pytest.approx(1e-10)


def test_logdet_and_inverse_diagonal(rng):
    X = spread_points(rng, 60, 2, 0.02)
    A = assemble_gram(X, rk("wendland-smooth", 2, 3.0), mode="dense")
    fac = Factorization(A)
    assert fac.logdet == pytest.approx(np.linalg.slogdet(A.dense)[1], rel=1e-10)
    assert np.allclose(fac.inverse_diagonal(), np.diag(np.linalg.inv(A.dense)), rtol=1e-8)
    S = assemble_gram(X, A.kernel, mode="sparse")
    assert logdet_spd(S) == pytest.approx(fac.logdet, rel=1e-10)
    with pytest.raises(CapabilityError):
        Factorization(S).inverse_diagonal()


def test_cross_matrix_and_combination(rng):
    k = rk("wendland-rough", 2, 4.0)
    X, Y = rng.random((50, 2)), rng.random((30, 2))
    dense = cross_matrix(k, X, Y, sparse=False)
    sparse = cross_matrix(k, X, Y, sparse=True)
    assert np.allclose(sparse.toarray(), dense)
    c = rng.normal(size=50)
    assert np.allclose(kernel_combination(k, X, c, Y, chunk=7), dense.T @ c)


def test_eigen_extremes_paths(rng):
    X = spread_points(rng, 300, 2, 0.01)
    A = assemble_gram(X, rk("wendland-smooth", 2, 8.0), mode="sparse")
    exact = np.linalg.eigvalsh(A.toarray())
    e = eigen_extremes(A, max_n_exact=10)
    assert e.method != "dense"
    assert e.lam_max == pytest.approx(exact[-1], rel=1e-8)
    if e.certified:
        assert e.lam_min == pytest.approx(exact[0], rel=1e-6)
    d = eigen_extremes(A)
    assert d.lam_min == pytest.approx(exact[0], rel=1e-10)
    assert d.kappa == pytest.approx(exact[-1] / exact[0], rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 60), d=st.integers(1, 3),
       theta=st.floats(0.5, 30.0), family=st.sampled_from(["gaussian", "wendland-smooth", "wendland-rough"]))
def test_gershgorin_cap(seed, n, d, theta, family):
    X = np.random.default_rng(seed).random((n, d))
    A = assemble_gram(X, rk(family, d, theta))
    assert np.linalg.eigvalsh(A.dense)[-1] <= A.gershgorin_cap() * (1 + 1e-12)


def test_distinct_points_positive_lambda_min():
    rng = np.random.default_rng(3)
    for _ in range(200):
        d = int(rng.integers(1, 3))
        n = int(rng.integers(2, 60))
        X = spread_points(rng, n, d, 0.2 / n)
        q = np.min([np.linalg.norm(a - b) for i, a in enumerate(X) for b in X[:i]]) / 2
        A = assemble_gram(X, rk("gaussian", d, 0.5 / q))
        assert np.linalg.eigvalsh(A.dense)[0] > 0


def test_solve_error_bound_example():
    a, b = solve_error_bound(10.0, 0.01, 0.01)
    assert a == pytest.approx(1.1 / 0.9) and b == pytest.approx(0.2 / 0.9)
    with pytest.raises(InfeasibleError):
        solve_error_bound(1e3, 1e-3, 0.0)
