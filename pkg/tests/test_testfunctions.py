import mpmath
import numpy as np
import pytest

from msemu import ArgumentError
from msemu.testfunctions import (
    TEST_FUNCTIONS,
    eval_test_function,
    franke,
    franke_classic,
    get_test_function,
    michalewicz2d,
    oscillatory1d,
    schwefel,
)


def mp_franke(x, y, classic=False):
    """Independent evaluation of the printed formula at 50 digits."""
    with mpmath.workdps(50):
        a, b = 9 * mpmath.mpf(x), 9 * mpmath.mpf(y)
        t2 = -(a + 1) ** 2 / 49 - (b + 1) / 10 if classic else -((a + 1) ** 2 / 49 - (b + 1) ** 2 / 10)
        return float(mpmath.mpf(3) / 4 * mpmath.exp(-((a - 2) ** 2 + (b - 2) ** 2) / 4)
                     + mpmath.mpf(3) / 4 * mpmath.exp(t2)
                     + mpmath.mpf(1) / 2 * mpmath.exp(-((a - 7) ** 2 + (b - 3) ** 2) / 4)
                     - mpmath.mpf(1) / 5 * mpmath.exp(-((a - 4) ** 2 + (b - 7) ** 2)))


@pytest.mark.parametrize("x,y", [(0.0, 0.0), (0.3, 0.7), (1.0, 1.0), (0.5, 0.1)])
def test_franke_matches_independent_evaluation(x, y):
    assert franke([x, y]) == pytest.approx(mp_franke(x, y), rel=1e-14)
    assert franke_classic([x, y]) == pytest.approx(mp_franke(x, y, classic=True), rel=1e-14)


def test_franke_golden_origin():
    # the printed formula gives 0.91363546..., not the 0.913649 quoted alongside it
    assert franke([0.0, 0.0]) == pytest.approx(0.9136354645354411, rel=1e-15)
    assert franke_classic([0.0, 0.0]) == pytest.approx(0.7664205912849231, rel=1e-14)


def test_michalewicz_golden():
    assert michalewicz2d([0.5, 0.5]) == pytest.approx(1 + 2.0**-10, rel=1e-14)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_schwefel_centre(d):
    assert schwefel(np.full(d, 0.5)) == 0.0


def test_oscillatory():
    e = np.exp(0.25)
    assert oscillatory1d([0.0]) == pytest.approx(e * np.sin(e), rel=1e-14)
    assert oscillatory1d(np.array([[0.0], [1.0]])).shape == (2,)


def test_batch_and_registry():
    X = np.random.default_rng(0).random((10, 2))
    assert np.allclose(eval_test_function("franke", X), [franke(x) for x in X])
    assert set(TEST_FUNCTIONS) == {"franke", "franke-classic", "michalewicz2d", "schwefel", "oscillatory1d"}
    with pytest.raises(ArgumentError):
        get_test_function("rosenbrock")
    with pytest.raises(ArgumentError):
        franke(np.zeros((3, 3)))
