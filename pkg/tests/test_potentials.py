import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from logsob.potentials import (
    EmpiricalMeasure,
    IntegrationError,
    PotentialError,
    default_order,
    gauss_hermite_grid,
    integrate,
    integrate_mu,
    make_builtin_potential,
    min_curvature,
    mu_grid,
    potential_from_config,
    sample_measure,
)

from conftest import BUILTIN_POTENTIALS


def test_gaussian_oracles_at_one_one():
    p = make_builtin_potential("gaussian", dimension=2)
    x = np.array([1.0, 1.0])
    assert p.value(x) == pytest.approx(1.0)
    np.testing.assert_allclose(p.gradient(x), [1.0, 1.0])
    np.testing.assert_allclose(p.hessian(x), np.eye(2))


def test_double_well_zero_at_one():
    assert make_builtin_potential("double-well").value(np.array([1.0])) == pytest.approx(0.0)


def test_quartic_value_and_second_derivative():
    p = make_builtin_potential("gaussian-plus-quartic", [0.1])
    x = np.array([1.0])
    assert p.value(x) == pytest.approx(0.6)
    assert p.hessian(x)[0, 0] == pytest.approx(2.2)


def test_unknown_name_and_bad_params():
    with pytest.raises(PotentialError):
        make_builtin_potential("nope")
    with pytest.raises(PotentialError):
        make_builtin_potential("scaled-gaussian", [-1.0])
    with pytest.raises(PotentialError):
        make_builtin_potential("double-well", dimension=2)
    with pytest.raises(PotentialError):
        potential_from_config({"params": []})


def test_config_round_trip():
    p = make_builtin_potential("scaled-gaussian", [2.0], 3)
    q = potential_from_config(p.to_config())
    x = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_array_equal(p.value(x), q.value(x))


@pytest.mark.parametrize("name,params,n", BUILTIN_POTENTIALS)
def test_derivatives_match_finite_differences(name, params, n, rng):
    p = make_builtin_potential(name, params, n)
    h = 1e-4
    for _ in range(100):
        x = rng.normal(size=n)
        g = p.gradient(x)
        fd = np.array([(p.value(x + h * e) - p.value(x - h * e)) / (2 * h) for e in np.eye(n)])
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))
        hs = p.hessian(x)
        fdh = np.array([(p.gradient(x + h * e) - p.gradient(x - h * e)) / (2 * h) for e in np.eye(n)])
        assert np.max(np.abs(hs - fdh)) <= 1e-5 * max(1.0, np.max(np.abs(hs)))
        np.testing.assert_array_equal(hs, hs.T)


@pytest.mark.parametrize("name,params,expected", [
    ("gaussian", (), 1.0),
    ("scaled-gaussian", (2.0,), 2.0),
])
def test_min_curvature_constant_hessians(name, params, expected):
    assert min_curvature(make_builtin_potential(name, params), [(-7, 3)]) == pytest.approx(expected, abs=1e-12)


def test_min_curvature_double_well():
    assert min_curvature(make_builtin_potential("double-well"), [(-2, 2)], 401) == pytest.approx(-1.0, abs=1e-3)


def test_min_curvature_box_mismatch():
    with pytest.raises(ValueError):
        min_curvature(make_builtin_potential("gaussian", dimension=2), [(-1, 1)])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_grid_weights(n):
    g = gauss_hermite_grid(n)
    assert g.order == default_order(n)
    assert np.all(g.weights > 0)
    assert abs(g.weights.sum() - 1.0) <= 1e-12
    assert integrate(g, lambda x: np.ones(x.shape[0])) == pytest.approx(1.0, abs=1e-15)


def test_dimension_above_four_is_rejected():
    with pytest.raises(ValueError):
        gauss_hermite_grid(5)


def test_gaussian_moments():
    g = gauss_hermite_grid(1)
    assert integrate(g, lambda x: x[:, 0] ** 2) == pytest.approx(1.0, abs=1e-12)
    assert integrate(g, lambda x: x[:, 0] ** 4) == pytest.approx(3.0, rel=1e-12)
    assert integrate(g, lambda x: 0.0 * x[:, 0]) == 0.0
    assert abs(integrate(g, lambda x: x[:, 0])) <= 1e-14
    assert integrate(g, lambda x: np.exp(0.5 * x[:, 0])) == pytest.approx(math.exp(0.125), rel=1e-12)


def test_fourth_moment_against_direct_sampling():
    z = np.random.default_rng(99).standard_normal(10**7)
    v = z ** 4
    assert abs(v.mean() - integrate(gauss_hermite_grid(1), lambda x: x[:, 0] ** 4)) <= 3 * v.std() / math.sqrt(v.size)


@pytest.mark.parametrize("m", [2, 5, 10, 20])
def test_quadrature_exactness_up_to_degree_2m_minus_1(m):
    g = gauss_hermite_grid(1, m)
    for k in range(2 * m):
        exact = 0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2)))
        got = integrate(g, lambda x: x[:, 0] ** k)
        # Odd moments vanish by cancellation; measure the error against ∫|x|^k.
        scale = integrate(g, lambda x: np.abs(x[:, 0]) ** k)
        assert abs(got - exact) <= 1e-12 * scale


def test_integration_error_reports_node():
    with pytest.raises(IntegrationError, match="node"):
        integrate(gauss_hermite_grid(1), lambda x: np.where(x[:, 0] > 0, np.inf, 0.0))


def test_mu_integrals():
    g = gauss_hermite_grid(1)
    assert integrate_mu(make_builtin_potential("gaussian"), g, lambda x: x[:, 0] ** 2) == pytest.approx(1.0)
    assert integrate_mu(make_builtin_potential("scaled-gaussian", [2.0]), g, lambda x: x[:, 0] ** 2) == pytest.approx(0.5)


@pytest.mark.parametrize("name,params,n", BUILTIN_POTENTIALS)
def test_mu_self_normalization(name, params, n):
    p = make_builtin_potential(name, params, n)
    assert abs(integrate_mu(p, gauss_hermite_grid(n), lambda x: np.ones(x.shape[0])) - 1.0) <= 1e-12


def test_zero_potential_has_no_measure():
    p = make_builtin_potential("zero", dimension=2)
    with pytest.raises(PotentialError):
        mu_grid(p, gauss_hermite_grid(2))
    with pytest.raises(PotentialError):
        sample_measure(p, 10, 0)


def test_direct_gaussian_sampling_mean():
    s = sample_measure(make_builtin_potential("gaussian", dimension=2), 10_000, 4)
    assert len(s) == 10_000
    assert np.all(np.abs(s.points.mean(axis=0)) <= 4 / math.sqrt(10_000))


@given(seed=st.integers(0, 2**32 - 1), count=st.integers(1, 50))
def test_sampling_is_deterministic(seed, count):
    p = make_builtin_potential("double-well")
    a = sample_measure(p, count, seed, burn_in=20)
    b = sample_measure(p, count, seed, burn_in=20)
    assert len(a) == count
    np.testing.assert_array_equal(a.points, b.points)


def test_langevin_scaled_gaussian_variance():
    s = sample_measure(make_builtin_potential("scaled-gaussian", [2.0]), 100_000, 11, burn_in=2000)
    x = s.points[:, 0]
    se = math.sqrt(2.0 / x.size) * 0.5
    assert abs(x.var() - 0.5) <= 3 * se


def test_empirical_measure_csv_round_trip(tmp_path):
    s = sample_measure(make_builtin_potential("gaussian", dimension=2), 7, 1)
    path = tmp_path / "pts.csv"
    s.to_csv(path)
    assert path.read_text().splitlines()[0] == "x1,x2"
    back = EmpiricalMeasure.from_csv(path)
    np.testing.assert_array_equal(back.points, s.points)
