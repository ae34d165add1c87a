import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from logsob.fields import PositivityError, builtin_field
from logsob.gamma import (
    chain_rule_residuals,
    check_cd,
    gamma1,
    gamma1_definitional,
    gamma2,
    gamma2_iterated,
    gamma_bilinear,
)
from logsob.potentials import make_builtin_potential, min_curvature

from conftest import BUILTIN_POTENTIALS

GAUSS = make_builtin_potential("gaussian")


def _catalog(n, rng):
    fields = [
        builtin_field("linear", rng.normal(size=n)),
        builtin_field("quadratic", dimension=n),
        builtin_field("exponential", 0.5 * rng.normal(size=n)),
        builtin_field("gauss-bump", [0.3], n),
        builtin_field("shifted-density", rng.normal(size=n)),
    ]
    if n == 1:
        fields.append(builtin_field("shifted-mixture", [0.3, -1.5, 2.0]))
    return fields


def test_gamma_examples():
    c = np.array([1.5, -0.5])
    x = np.random.default_rng(0).normal(size=(7, 2))
    np.testing.assert_allclose(gamma1(GAUSS, builtin_field("linear", c), x), c @ c)
    assert gamma1(GAUSS, builtin_field("quadratic"), [2.0]) == pytest.approx(16.0)


def test_gamma_definitional_random_points(rng):
    for f in _catalog(1, rng):
        x = rng.normal(size=(50, 1))
        lhs = gamma1_definitional(GAUSS, f, x)
        rhs = gamma1(GAUSS, f, x)
        assert np.max(np.abs(lhs - rhs) / np.maximum(1, np.abs(rhs))) <= 1e-8, f.name


def test_bilinear_definitional_form(rng):
    f, g = builtin_field("exponential", [0.4]), builtin_field("gauss-bump", [0.5])
    x = rng.normal(size=(20, 1))
    np.testing.assert_allclose(gamma1_definitional(GAUSS, f, x, g), gamma_bilinear(GAUSS, f, g, x), atol=1e-9)


def test_gamma2_examples():
    c = np.array([2.0])
    assert gamma2(GAUSS, builtin_field("linear", c), [0.3]) == pytest.approx(4.0)
    x = np.linspace(-2, 2, 5)[:, None]
    np.testing.assert_allclose(gamma2(GAUSS, builtin_field("quadratic"), x), 4 + 4 * x[:, 0] ** 2)
    p = make_builtin_potential("scaled-gaussian", [3.0], 2)
    assert gamma2(p, builtin_field("linear", [1.0, 1.0]), [0.1, 0.2]) == pytest.approx(6.0)


@pytest.mark.parametrize("name,params,n", BUILTIN_POTENTIALS)
def test_gamma2_closed_form_matches_iterated(name, params, n, rng):
    p = make_builtin_potential(name, params, n)
    fields = _catalog(n, rng)
    for k in range(100):
        f = fields[k % len(fields)]
        x = 1.5 * rng.normal(size=n)
        a, b = gamma2(p, f, x), gamma2_iterated(p, f, x)
        assert abs(a - b) <= 1e-7 * max(1.0, abs(a)), (f.name, x)


def test_chain_rule_exponential_is_exact():
    r = chain_rule_residuals(GAUSS, builtin_field("exponential", [0.5]), np.linspace(-2, 2, 9)[:, None])
    assert r.max() <= 1e-8


def test_chain_rule_constant():
    r = chain_rule_residuals(GAUSS, builtin_field("constant", [2.5]), np.linspace(-2, 2, 9)[:, None])
    assert r.max() == 0.0


@pytest.mark.parametrize("name,params,n", BUILTIN_POTENTIALS)
def test_chain_rule_shifted_density(name, params, n, rng):
    p = make_builtin_potential(name, params, n)
    f = builtin_field("shifted-density", rng.normal(size=n))
    assert chain_rule_residuals(p, f, rng.normal(size=(50, n))).max() <= 1e-7


def test_chain_rule_needs_positive_field():
    with pytest.raises(PositivityError):
        chain_rule_residuals(GAUSS, builtin_field("linear", [1.0]), [[0.0]])


def test_ou_satisfies_cd_one_infinity(rng):
    pts = rng.normal(size=(200, 1)) * 2
    rep = check_cd(GAUSS, 1.0, math.inf, _catalog(1, rng), pts)
    assert rep.verdict == "holds" and rep.witness is None
    assert rep.min_gap >= -rep.tolerance


def test_heat_generator_satisfies_cd_zero_n(rng):
    n = 2
    p = make_builtin_potential("zero", dimension=n)
    rep = check_cd(p, 0.0, n, _catalog(n, rng), rng.normal(size=(200, n)))
    assert rep.holds


def test_double_well_fails_at_origin():
    p = make_builtin_potential("double-well")
    rep = check_cd(p, 0.5, math.inf, [builtin_field("linear", [1.0])], [[0.0]])
    assert rep.verdict == "fails"
    assert rep.witness["gap"] == pytest.approx(-1.5)
    assert rep.witness["point"] == [0.0]


def test_ou_fails_finite_dimension_somewhere(rng):
    # OU is not CD(r, m) for r, m > 0: a large generator value breaks it.
    rep = check_cd(GAUSS, 0.5, 5.0, [builtin_field("linear", [1.0])], [[10.0]])
    assert rep.verdict == "fails" and rep.witness["gap"] < 0


@given(rho1=st.floats(-2.0, 1.0), d=st.floats(0.0, 3.0))
def test_monotone_in_rho(rho1, d):
    p = make_builtin_potential("gaussian-plus-quartic", [0.1])
    fields = [builtin_field("linear", [1.0]), builtin_field("exponential", [0.3])]
    pts = np.linspace(-2, 2, 21)[:, None]
    if check_cd(p, rho1, math.inf, fields, pts).holds:
        assert check_cd(p, rho1 - d, math.inf, fields, pts).holds


@pytest.mark.parametrize("name,params,n", BUILTIN_POTENTIALS)
def test_min_curvature_implies_cd(name, params, n, rng):
    p = make_builtin_potential(name, params, n)
    box = [(-1.5, 1.5)] * n
    rho = min_curvature(p, box, 21 if n > 1 else 301)
    pts = rng.uniform(-1.5, 1.5, size=(200, n))
    assert check_cd(p, rho - 1e-6, math.inf, _catalog(n, rng), pts).holds


def test_report_invariants_and_json():
    p = make_builtin_potential("double-well")
    fields = [builtin_field("quadratic"), builtin_field("linear", [1.0])]
    rep = check_cd(p, 0.5, math.inf, fields, np.linspace(-2, 2, 41)[:, None])
    d = json.loads(rep.to_json())
    assert d["n"] == "inf"
    assert d["verdict"] == "fails" and d["witness"]["gap"] < 0
    assert d["witness"]["field"] == "linear" and abs(d["witness"]["point"][0]) < 1e-12
    assert d["samples"] == {"fields": ["quadratic", "linear"], "points": 41}


def test_quadratic_alone_does_not_see_double_well_concavity():
    # Gap 4 + 12x⁴ - 6x² stays positive: ∇f(0) = 0 hides the concave region.
    p = make_builtin_potential("double-well")
    assert check_cd(p, 0.5, math.inf, [builtin_field("quadratic")], np.linspace(-2, 2, 41)[:, None]).holds


def test_check_cd_input_validation():
    with pytest.raises(ValueError):
        check_cd(GAUSS, 1.0, math.inf, [], [[0.0]])
    with pytest.raises(ValueError):
        check_cd(GAUSS, 1.0, 0.0, [builtin_field("quadratic")], [[0.0]])
