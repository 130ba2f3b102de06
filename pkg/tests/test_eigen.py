import math

import numpy as np
import pytest

from quadgrad.eigen import (coercivity_check, gamma1, nu1, nu_tilde1, principal_eigen, xi1)
from quadgrad.errors import DefinitenessError, InputError
from quadgrad.grid import Grid, Interval, Rectangle, laplacian
from quadgrad.problem import ProblemSpec, constant_problem

PI2 = math.pi ** 2


def discrete_first(n, T=1.0):
    """Exact first eigenvalue of the 1D three-point Laplacian."""
    h = T / (n + 1)
    return 4 / h ** 2 * math.sin(math.pi * h / (2 * T)) ** 2


def test_interval_of_length_pi():
    pair = principal_eigen(Grid(Interval(math.pi), 1023))
    assert pair.value == pytest.approx(1.0, abs=1e-5)


def test_matches_discrete_formula():
    pair = principal_eigen(Grid(Interval(1.0), 127))
    assert pair.value == pytest.approx(discrete_first(127), rel=1e-12)
    assert pair.residual <= 1e-9


def test_unit_square():
    pair = principal_eigen(Grid(Rectangle(1.0, 1.0), 31))
    assert pair.value == pytest.approx(2 * discrete_first(31), rel=1e-10)


def test_eigenfunction_positive_and_normalized():
    pair = principal_eigen(Grid(Rectangle(1.0, 2.0), 15), c=np.linspace(0.5, 2.0, 225))
    assert np.all(pair.function > 0)
    assert np.max(pair.function) == pytest.approx(1.0)


def test_nu1_equals_gamma1_when_h_nonnegative():
    p = constant_problem(1.0, 63, h=2.0)
    assert nu1(p).value == pytest.approx(gamma1(p).value, rel=1e-12)
    assert nu_tilde1(p).value == pytest.approx(gamma1(p).value, rel=1e-12)


def test_nu1_grows_with_h_minus():
    p = constant_problem(1.0, 63, h=-1.0, mu=2.0)
    assert nu1(p).value == pytest.approx(gamma1(p).value + 2.0, rel=1e-10)


def test_xi1_shift():
    p = constant_problem(1.0, 255, h=-3.0)
    assert xi1(p).value == pytest.approx(PI2 + 3, rel=1e-4)


def test_coercivity_h_nonpositive():
    p = constant_problem(1.0, 63, h=-1.0)
    co = coercivity_check(p)
    assert co.coercive and co.margin == pytest.approx(discrete_first(63), rel=1e-10)


def test_coercivity_constant_h_plus():
    p = constant_problem(1.0, 255, h=4.0)
    assert coercivity_check(p).margin == pytest.approx(PI2 - 4.0, rel=1e-4)
    assert not coercivity_check(constant_problem(1.0, 63, h=12.0)).coercive


def test_coercivity_changes_sign_at_weighted_eigenvalue():
    # -Lap - mu2 h^+ is coercive exactly when mu2 < xi, where -Lap w = xi h^+ w
    g = Grid(Interval(1.0), 127)
    hp = np.maximum(g.sample(lambda x: np.cos(2 * np.pi * x)), 0.0) * 3.0
    xi = principal_eigen(g, None, hp).value
    for factor, expected in ((0.99, True), (1.01, False)):
        p = ProblemSpec(g, 1.0, hp, factor * xi)
        co = coercivity_check(p)
        assert co.coercive is expected
        assert abs(co.margin) < 1.0


def test_rayleigh_minimality(rng):
    g = Grid(Interval(1.0), 63)
    c = g.sample(lambda x: 1.5 + np.sin(3 * x))
    pair = principal_eigen(g, None, c)
    A = laplacian(g)
    for _ in range(20):
        w = rng.normal(size=63)
        rq = (w @ (A @ w)) / (w @ (c * w))
        assert rq >= pair.value * (1 - 1e-12)


def test_weight_scaling():
    g = Grid(Interval(1.0), 63)
    c = g.sample(lambda x: 1 + x ** 2)
    one = principal_eigen(g, None, c).value
    two = principal_eigen(g, None, 2 * c).value
    assert two == pytest.approx(one / 2, rel=1e-10)


def test_mesh_convergence():
    errs = [abs(principal_eigen(Grid(Interval(1.0), n)).value - PI2) for n in (31, 63, 127)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_indefinite_weight_rejected():
    g = Grid(Interval(1.0), 15)
    with pytest.raises(InputError):
        principal_eigen(g, None, np.zeros(15))
    with pytest.raises(InputError):
        principal_eigen(g, None, -np.ones(15))


def test_shift_failure_reported():
    # weight vanishes where the potential is very negative: no shift can help
    g = Grid(Interval(1.0), 31)
    c = np.where(g.axis_nodes() < 0, 1.0, 0.0)
    d = np.where(g.axis_nodes() < 0, 0.0, -1e4)
    with pytest.raises(DefinitenessError):
        principal_eigen(g, d, c)


def test_large_negative_potential_handled_by_shift():
    g = Grid(Interval(1.0), 63)
    pair = principal_eigen(g, g.constant(-100.0))
    assert pair.value == pytest.approx(discrete_first(63) - 100, rel=1e-10)
