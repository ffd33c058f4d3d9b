import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msemu import ArgumentError, CapabilityError, Kernel, SelectionError, SelectionSpec, fit, generate_net, nest
from msemu.linalg import assemble_gram
from msemu.select import (
    _better,
    default_bounds,
    kfold_score,
    loo_errors,
    ml_criterion,
    optimize_theta,
    sparsity_theta,
    stage_selector,
)

from conftest import rk, spread_points
from oracles import brute_force_loo


def random_instance(rng):
    d = int(rng.integers(1, 3))
    n = int(rng.integers(5, 41))
    X = spread_points(rng, n, d, 0.3 / n)
    q = np.min([np.linalg.norm(a - b) for i, a in enumerate(X) for b in X[:i]]) / 2
    fam = ["gaussian", "wendland-smooth", "wendland-rough"][int(rng.integers(3))]
    k = rk(fam, d, float(rng.uniform(0.5, 3.0)) / (2 * q) if fam == "gaussian" else float(rng.uniform(0.3, 2.0)) / q)
    y = np.sin(4 * X[:, 0]) + rng.normal(scale=0.1, size=n)
    return X, y, k


def test_loo_shortcut_matches_refits():
    rng = np.random.default_rng(6)
    for _ in range(50):
        X, y, k = random_instance(rng)
        e = loo_errors(X, y, k)
        b = brute_force_loo(X, y, k)
        assert np.all(np.abs(e - b) <= 1e-8 * (1 + np.abs(b)))


def test_kfold_with_n_folds_is_loo():
    rng = np.random.default_rng(2)
    for _ in range(10):
        X, y, k = random_instance(rng)
        assert kfold_score(X, y, k, folds=len(y)) == pytest.approx(np.mean(loo_errors(X, y, k) ** 2), rel=1e-8)


def test_loo_size_limit():
    X = np.random.default_rng(0).random((4001, 2))
    with pytest.raises(CapabilityError, match="k-fold"):
        loo_errors(X, np.zeros(4001), rk("wendland-rough", 2, 50.0))


def test_ml_criterion_recomputed():
    rng = np.random.default_rng(3)
    X, y, k = random_instance(rng)
    A = k.gram(X)
    n = len(y)
    for c in (0.0, 1.5, -20.0):
        yc = y + c
        expect = n * math.log(yc @ np.linalg.solve(A, yc) / n) + np.linalg.slogdet(A)[1]
        assert ml_criterion(X, yc, k) == pytest.approx(expect, rel=1e-10, abs=1e-10)
    reml = ml_criterion(X, y, k, reml=True, n_prev=3)
    expect = (n - 3) * math.log(y @ np.linalg.solve(A, y) / (n - 3)) + np.linalg.slogdet(A)[1]
    assert reml == pytest.approx(expect, rel=1e-10)


@pytest.mark.parametrize("d,n,budget", [(1, 20000, 2e6), (2, 20000, 2e6), (3, 20000, 2e6),
                                        (4, 20000, 2e6), (5, 20000, 1e6), (5, 15625, 1e5)])
def test_sparsity_budget_honoured(d, n, budget):
    th = sparsity_theta(n, d, budget)
    for seed in range(10):
        X = np.random.default_rng(seed).random((n, d))
        nnz = assemble_gram(X, rk("wendland-rough", d, th), mode="sparse", memory_budget=1e9).nnz
        assert nnz <= 1.1 * budget
        if d == 5:
            assert nnz <= budget


def test_sparsity_theta_formula():
    # d=2: pi theta^-2 n^2 = budget
    th = sparsity_theta(100, 2, 1000)
    assert math.pi * 100**2 / th**2 == pytest.approx(1000)
    with pytest.raises(ArgumentError):
        sparsity_theta(100, 2, 50)


def test_spec_validation():
    with pytest.raises(ArgumentError):
        SelectionSpec("aic")
    with pytest.raises(ArgumentError):
        SelectionSpec("kfold", folds=1)
    with pytest.raises(ArgumentError):
        SelectionSpec("fixed_sparsity")
    with pytest.raises(ArgumentError):
        SelectionSpec(bounds=(0.0, 1.0))


def test_tie_break_prefers_narrower():
    a = (1.0, np.array([2.0]))
    b = (1.0 + 1e-14, np.array([1.0]))
    assert _better(a, b) and not _better(b, a)
    assert _better((0.5, np.array([1.0])), (1.0, np.array([5.0])))
    assert not _better((math.inf, np.array([5.0])), (1.0, np.array([1.0])))


@pytest.mark.parametrize("criterion", ["loo", "kfold", "ml", "reml"])
def test_optimize_theta_deterministic(criterion):
    X = generate_net(3, 3, 2, seed=0).points
    y = np.sin(4 * X[:, 0]) * X[:, 1]
    spec = SelectionSpec(criterion, folds=5, grid_size=5, refine_steps=6)
    r1, t1 = optimize_theta(X, y, Kernel("wendland-smooth", 2), spec)
    r2, t2 = optimize_theta(X, y, Kernel("wendland-smooth", 2), spec)
    assert r1 == r2 and t1 == t2
    assert r1.kind == "diagonal"
    best = min(t["score"] for t in t1 if t["score"] is not None)
    chosen = [t for t in t1 if t["theta"] == list(r1.values)]
    assert chosen and chosen[0]["score"] == best


def test_optimize_theta_scalar_in_higher_dimension():
    X = generate_net(3, 3, 3, seed=1).points
    y = X.sum(axis=1)
    resc, trace = optimize_theta(X, y, Kernel("gaussian", 3), SelectionSpec(grid_size=4, refine_steps=4))
    assert resc.kind == "scalar"
    lo, hi = default_bounds(X)
    assert all(lo * (1 - 1e-12) <= t["theta"][0] <= hi * (1 + 1e-12) for t in trace)


def test_fixed_sparsity_selection():
    X = generate_net(5, 3, 2, seed=0).points
    resc, trace = optimize_theta(X, np.zeros(125), Kernel("wendland-rough", 2),
                                 SelectionSpec("fixed_sparsity", budget=2000))
    assert resc.values[0] == pytest.approx(sparsity_theta(125, 2, 2000))
    assert trace[0]["criterion"] == "fixed_sparsity"


def test_all_grid_points_fail():
    X = np.array([[0.1, 0.1], [0.1, 0.1 + 1e-13], [0.7, 0.4], [0.2, 0.8]])
    with pytest.raises(SelectionError) as exc:
        optimize_theta(X, np.arange(4.0), Kernel("gaussian", 2), SelectionSpec(bounds=(0.1, 1.0), grid_size=3))
    assert len(exc.value.failures) == 9


def test_selected_fit_is_exact():
    X = generate_net(5, 3, 2, seed=2).points
    y = np.cos(3 * X[:, 0]) + X[:, 1]
    sel = stage_selector(Kernel("wendland-smooth", 2), SelectionSpec(grid_size=6, refine_steps=6))
    m = fit(nest(X, [25, 125]), y, sel)
    assert np.max(np.abs(m.predict_batch(X) - y)) <= 1e-8 * np.max(np.abs(y))
    assert len(m.fit_meta["selection"]) == 2


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_loo_translation_consistency(seed):
    # LOO errors are linear in y
    rng = np.random.default_rng(seed)
    X, y, k = random_instance(rng)
    z = rng.normal(size=len(y))
    lhs = loo_errors(X, y + 2 * z, k)
    rhs = loo_errors(X, y, k) + 2 * loo_errors(X, z, k)
    assert np.allclose(lhs, rhs, atol=1e-8 * (1 + np.abs(rhs).max()))


def test_loo_selection_near_exhaustive_minimum():
    from msemu.testfunctions import franke

    X = generate_net(5, 3, 2, seed=0).points
    y = franke(X)
    base = Kernel("wendland-smooth", 2)
    spec = SelectionSpec(bounds=(1.0, 100.0))
    resc, _ = optimize_theta(X, y, base, spec)
    chosen = float(np.mean(loo_errors(X, y, rk("wendland-smooth", 2, list(resc.values))) ** 2))
    fine = np.geomspace(1.0, 100.0, 41)
    best = math.inf
    for a in fine:
        for b in fine:
            try:
                best = min(best, float(np.mean(loo_errors(X, y, rk("wendland-smooth", 2, [a, b])) ** 2)))
            except Exception:
                continue
    assert chosen <= 1.05 * best
