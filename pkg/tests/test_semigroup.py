import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from logsob.fields import PositivityError, builtin_field, fd_gradient
from logsob.gamma import generator_field
from logsob.potentials import PotentialError, gauss_hermite_grid, integrate, make_builtin_potential, mu_grid
from logsob.semigroup import (
    evolve_trace,
    generator_apply,
    mehler_apply,
    mehler_field,
    sde_evolve,
    simulate_paths,
    tabulate_field,
)

GAUSS = make_builtin_potential("gaussian")


def test_identity_at_time_zero():
    f = builtin_field("gauss-bump", [0.7])
    x = np.array([[0.3], [-2.0]])
    np.testing.assert_array_equal(mehler_apply(f, 0.0, x), f.value(x))


def test_linear_at_log_two():
    assert mehler_apply(builtin_field("linear", [1.0]), math.log(2.0), [1.0]) == pytest.approx(0.5, abs=1e-14)


@given(t=st.floats(0.0, 5.0), x=st.floats(-4.0, 4.0))
def test_quadratic_closed_form(t, x):
    e = math.exp(-2 * t)
    assert mehler_apply(builtin_field("quadratic"), t, [x]) == pytest.approx(e * x * x + 1 - e, abs=1e-12)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        mehler_apply(builtin_field("quadratic"), -1.0, [0.0])


@given(t=st.floats(0.0, 4.0), x=st.floats(-5.0, 5.0))
def test_contraction_and_positivity(t, x):
    # 0 <= bump <= 1, so the same bounds hold after averaging.
    v = mehler_apply(builtin_field("gauss-bump", [0.5]), t, [x])
    assert -1e-12 <= v <= 1.0 + 1e-12


@pytest.mark.parametrize("name,params", [("quadratic", []), ("exponential", [0.5]), ("gauss-bump", [0.3])])
def test_semigroup_law_through_tabulation(name, params):
    f = builtin_field(name, params)
    s, t = 0.4, 0.7
    axis = np.linspace(-14.0, 14.0, 8001)
    ptf = tabulate_field(mehler_field(f, t), [axis])
    x = np.linspace(-2.0, 2.0, 9)[:, None]
    np.testing.assert_allclose(mehler_apply(ptf, s, x), mehler_apply(f, s + t, x), atol=1e-8, rtol=1e-8)


def test_semigroup_law_in_two_dimensions():
    f = builtin_field("gauss-bump", [0.3], 2)
    s, t = 0.3, 0.5
    axis = np.linspace(-9.0, 9.0, 241)
    ptf = tabulate_field(mehler_field(f, t, gauss_hermite_grid(2)), [axis, axis])
    x = np.random.default_rng(5).uniform(-1.5, 1.5, size=(6, 2))
    g = gauss_hermite_grid(2)
    np.testing.assert_allclose(mehler_apply(ptf, s, x, g), mehler_apply(f, s + t, x, g), atol=1e-8)


@pytest.mark.parametrize("name,params", [("exponential", [0.5]), ("gauss-bump", [0.4]), ("quadratic", [])])
def test_heat_equation(name, params):
    f = builtin_field(name, params)
    t, h = 0.6, 1e-3
    x = np.linspace(-2.0, 2.0, 7)[:, None]
    dt = (mehler_apply(f, t + h, x) - mehler_apply(f, t - h, x)) / (2 * h)
    l_pt = generator_apply(GAUSS, mehler_field(f, t), x)
    pt_l = mehler_apply(generator_field(GAUSS, f), t, x)
    scale = np.maximum(1.0, np.abs(dt))
    assert np.max(np.abs(dt - l_pt) / scale) <= 1e-5
    assert np.max(np.abs(dt - pt_l) / scale) <= 1e-5


@pytest.mark.parametrize("name,params", [("exponential", [0.5, -0.2]), ("gauss-bump", [0.4]), ("quadratic", [])])
def test_gradient_commutation(name, params):
    f = builtin_field(name, params, None if name == "exponential" else 2)
    g = gauss_hermite_grid(2)
    t = 0.8
    x = np.random.default_rng(1).normal(size=(5, 2))
    lhs = fd_gradient(lambda y: mehler_apply(f, t, y.reshape(-1, 2), g).reshape(y.shape[:-1]), x, accuracy=4)
    rhs = np.stack([
        math.exp(-t) * mehler_apply(builtin_field("linear", [1.0]).__class__(
            "d", 2, lambda y, i=i: f.gradient(y)[..., i]), t, x, g)
        for i in range(2)
    ], axis=-1)
    np.testing.assert_allclose(lhs, rhs, atol=1e-6, rtol=1e-6)


def test_generator_examples():
    x = np.linspace(-3, 3, 11)[:, None]
    np.testing.assert_array_equal(generator_apply(GAUSS, builtin_field("constant", [3.0]), x), 0.0)
    np.testing.assert_allclose(generator_apply(GAUSS, builtin_field("quadratic"), x), 2 - 2 * x[:, 0] ** 2)


@pytest.mark.parametrize("name,params", [
    ("linear", [1.0]), ("quadratic", []), ("exponential", [0.5]), ("gauss-bump", [0.4]), ("shifted-density", [0.8]),
])
def test_generator_has_zero_mean(name, params):
    g = gauss_hermite_grid(1)
    f = builtin_field(name, params)
    assert abs(integrate(g, lambda x: generator_apply(GAUSS, f, x))) <= 1e-10


@pytest.mark.parametrize("potential", [GAUSS, make_builtin_potential("scaled-gaussian", [2.0]),
                                       make_builtin_potential("gaussian-plus-quartic", [0.1]),
                                       make_builtin_potential("double-well")])
def test_symmetry_and_integration_by_parts(potential):
    mu = mu_grid(potential, gauss_hermite_grid(1))
    x = mu.nodes
    fields = [builtin_field("linear", [1.0]), builtin_field("quadratic"),
              builtin_field("exponential", [0.3]), builtin_field("gauss-bump", [0.5])]
    for f in fields:
        for g in fields:
            glf = mu.weights @ (g.value(x) * generator_apply(potential, f, x))
            flg = mu.weights @ (f.value(x) * generator_apply(potential, g, x))
            dd = mu.weights @ np.sum(f.gradient(x) * g.gradient(x), axis=-1)
            assert abs(glf - flg) <= 1e-8
            assert abs(glf + dd) <= 1e-8


def test_sde_zero_time():
    est = sde_evolve(GAUSS, builtin_field("quadratic"), 0.0, [1.5], 10, 1e-3, 0)
    assert est.estimate == 2.25 and est.stderr == 0.0


def test_sde_ergodic_limit():
    f = builtin_field("gauss-bump", [0.5])
    est = sde_evolve(GAUSS, f, 20.0, [2.0], 4000, 1e-2, 3)
    assert abs(est.estimate - integrate(gauss_hermite_grid(1), f.value)) <= 3 * est.stderr


def test_exact_transitions_match_mehler():
    est = sde_evolve(GAUSS, builtin_field("quadratic"), 1.0, [1.0], 20_000, 1e-3, 5, method="exact")
    assert abs(est.estimate - 1.0) <= 3 * est.stderr


def test_exact_method_is_gaussian_only():
    with pytest.raises(PotentialError):
        simulate_paths(make_builtin_potential("double-well"), [[0.0]], [1.0], 10, 1e-2, 0, method="exact")


def test_paths_are_reproducible_and_share_noise():
    a = simulate_paths(GAUSS, [[0.0], [0.1]], [0.5, 1.0], 64, 1e-2, 9)
    b = simulate_paths(GAUSS, [[0.0], [0.1]], [0.5, 1.0], 64, 1e-2, 9)
    assert a.shape == (2, 2, 64, 1)
    np.testing.assert_array_equal(a, b)
    # Linear drift: common noise cancels exactly in the difference of starts.
    diff = a[:, 1] - a[:, 0]
    assert np.ptp(diff[1]) <= 1e-12


def test_trace_examples():
    c = 1.7
    f = builtin_field("linear", [c])
    tr = evolve_trace(GAUSS, f, [0.0])
    assert tr.variance[0] == pytest.approx(c * c, rel=1e-12)
    tr = evolve_trace(GAUSS, f, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(tr.variance, c * c * np.exp([0.0, -1.0, -2.0]), rtol=1e-12)
    with pytest.raises(PositivityError):
        evolve_trace(GAUSS, f, [0.0, 1.0], functionals=["entropy"])


def test_trace_time_validation():
    f = builtin_field("linear", [1.0])
    for bad in ([0.5, 1.0], [0.0, 0.0], [0.0, 1.0, 0.5], []):
        with pytest.raises(ValueError):
            evolve_trace(GAUSS, f, bad)


def test_mehler_trace_requires_gaussian():
    with pytest.raises(PotentialError):
        evolve_trace(make_builtin_potential("double-well"), builtin_field("linear", [1.0]), [0.0, 1.0])


def test_sde_trace_starts_exactly_at_f():
    f = builtin_field("shifted-density", [0.5])
    pts = np.array([[0.0], [1.0]])
    tr = evolve_trace(GAUSS, f, [0.0, 0.5], "exact", pts, gauss_hermite_grid(1, 12), paths=500, seed=2)
    np.testing.assert_array_equal(tr.values[0], f.value(pts))
    assert tr.entropy is not None and tr.fisher is not None


def test_sde_trace_tracks_variance_decay():
    f = builtin_field("linear", [1.0])
    tr = evolve_trace(make_builtin_potential("scaled-gaussian", [2.0]), f, [0.0, 0.25, 0.5], "sde",
                      grid=gauss_hermite_grid(1, 12), paths=400, step=1e-3, seed=4)
    # Pt f equals e^{-2t} f exactly in expectation; CRN keeps the estimate tight.
    exact = 0.5 * np.exp(-4 * tr.times)
    np.testing.assert_allclose(tr.variance, exact, rtol=0.05)


def test_trace_csv_and_sidecar(tmp_path):
    tr = evolve_trace(GAUSS, builtin_field("exponential", [0.5]), [0.0, 0.5], evaluation_points=[[0.0], [1.0]])
    sidecar = tr.to_csv(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "time,variance,entropy,fisher,p0,p1"
    assert len(lines) == 3
    meta = json.loads(sidecar.read_text())
    assert meta["columns"] == {"p0": [0.0], "p1": [1.0]}
    assert meta["method"]["kind"] == "mehler"
