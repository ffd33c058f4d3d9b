import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from msemu import ArgumentError, FormatError, generate_net, nest, verify_net
from msemu.design import (
    Design,
    fill_distance,
    read_nested,
    read_points_csv,
    separation_distance,
    stage_sidecar_path,
    write_nested,
    write_points_csv,
)


def test_net_basic_properties():
    D = generate_net(5, 3, 2, seed=4)
    assert D.points.shape == (125, 2)
    assert np.all((D.points >= 0) & (D.points < 1))
    assert verify_net(D, 5, 3)


def test_net_unscrambled_and_determinism():
    assert verify_net(generate_net(3, 3, 3, scramble=False), 3, 3)
    a, b = generate_net(5, 3, 2, seed=1), generate_net(5, 3, 2, seed=1)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, generate_net(5, 3, 2, seed=2).points)


@settings(max_examples=30, deadline=None)
@given(b=st.sampled_from([2, 3, 5]), m=st.integers(0, 4), seed=st.integers(0, 2**31), data=st.data())
def test_prefix_net_property(b, m, seed, data):
    s = data.draw(st.integers(1, b))
    X = generate_net(b, m, s, seed=seed).points
    for mp in range(m + 1):
        assert verify_net(X[: b**mp], b, mp, s)


def test_invalid_net_arguments():
    with pytest.raises(ArgumentError):
        generate_net(4, 2, 2)  # base must be prime
    with pytest.raises(ArgumentError):
        generate_net(2, 2, 3)  # s must not exceed b


def test_verify_net_rejects():
    rng = np.random.default_rng(0)
    assert not verify_net(rng.random((25, 2)), 5, 2)
    with pytest.raises(ArgumentError):
        verify_net(rng.random((24, 2)), 5, 2)


def test_separation_distance_brute_force(rng):
    X = rng.random((60, 3))
    assert separation_distance(X) == pytest.approx(pdist(X).min() / 2, rel=1e-14)


def test_fill_distance_single_point():
    h = fill_distance(np.array([[0.5, 0.5]]))
    assert h == pytest.approx(np.sqrt(0.5), rel=1e-6)


def test_nested_monotone_geometry():
    X = generate_net(5, 4, 2, seed=3).points
    sizes = [25, 125, 625]
    q = [separation_distance(X[:n]) for n in sizes]
    h = [fill_distance(X[:n], resolution=256) for n in sizes]
    assert all(a >= b - 1e-15 for a, b in zip(q, q[1:]))
    mesh = np.sqrt(2) / 255
    assert all(a >= b - mesh for a, b in zip(h, h[1:]))


def test_nest_validation():
    X = np.random.default_rng(0).random((10, 2))
    nd = nest(X, [4, 10])
    assert nd.J == 2 and np.array_equal(nd.prefix(1), X[:4])
    for bad in ([4, 4, 10], [5, 9], [0, 10]):
        with pytest.raises(ArgumentError):
            nest(X, bad)
    assert nest(X, []).stage_sizes == (10,)


def test_design_rejects_bad_points():
    with pytest.raises(ArgumentError):
        Design(np.array([[0.1, np.nan]]))


def test_csv_roundtrip_exact(tmp_path, rng):
    X = rng.random((17, 3))
    y = rng.normal(size=17)
    p = tmp_path / "v.csv"
    write_points_csv(p, X, values=y)
    X2, y2 = read_points_csv(p, with_values=True)
    assert np.array_equal(X, X2) and np.array_equal(y, y2)


def test_csv_errors_name_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x1,x2\n0.1,0.2\n0.3,abc\n")
    with pytest.raises(FormatError, match=":3"):
        read_points_csv(p)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        read_points_csv(p)
    p.write_text("x1,y\n0.1\n")
    with pytest.raises(FormatError, match=":2"):
        read_points_csv(p, with_values=True)


def test_stage_sidecar(tmp_path):
    X = generate_net(3, 3, 2, seed=0).points
    nd = nest(X, [9, 18, 27])
    p = tmp_path / "d.csv"
    write_nested(p, nd)
    assert json.loads(stage_sidecar_path(p).read_text())["stage_sizes"] == [9, 18, 27]
    nd2 = read_nested(p)
    assert nd2.stage_sizes == (9, 18, 27) and np.array_equal(nd2.points, X)
