"""The end-to-end verification suite behind ``logsob report-all``.

Each check returns a JSON-ready dict ``{id, title, measured, tolerance,
passed}``. Checks are deterministic given the seed; wall-clock time is kept
out of the dicts so repeated runs serialize identically.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .fields import builtin_field
from .functionals import dirichlet, entropy, entropy_derivative_check, fisher, fit_decay_rate, variance
from .gamma import chain_rule_residuals, check_cd, gamma1, gamma1_definitional, gamma2, gamma2_iterated
from .potentials import gauss_hermite_grid, make_builtin_potential, min_curvature, mu_grid
from .semigroup import evolve_trace, generator_apply, mehler_apply, sde_evolve
from .transport import brenier_map_1d, monge_ampere_residual_1d, verify_talagrand, w2_assignment, w2_sorted_1d

__all__ = ["CHECKS", "run_suite"]


def _result(cid, title, measured, tolerance, passed):
    return {"id": cid, "title": title, "measured": measured, "tolerance": tolerance, "passed": bool(passed)}


def poincare_equality(seed):
    g = gauss_hermite_grid(1, 40)
    f = builtin_field("linear", [1.0])
    gap = abs(variance(g, f) - dirichlet(g, f))
    return _result(1, "Poincaré equality for linear f", {"gap": gap}, 1e-10, gap <= 1e-10)


def lsi_equality(seed):
    g = gauss_hermite_grid(1)
    f = builtin_field("exponential", [0.5])
    ent, fis = entropy(g, f), fisher(g, f)
    gap = abs(ent - 0.5 * fis)
    closed = abs(ent - 0.125 * math.exp(0.125))
    ok = gap <= 1e-8 and closed <= 1e-8
    return _result(2, "log-Sobolev equality for exp(x/2)", {"gap": gap, "entropy_error": closed}, 1e-8, ok)


def mehler_closed_form(seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    g = gauss_hermite_grid(1)
    q = builtin_field("quadratic")
    ts = rng.uniform(0.0, 3.0, 50)
    xs = rng.uniform(-3.0, 3.0, 50)
    err = max(abs(mehler_apply(q, t, x, g) - (math.exp(-2 * t) * x * x + 1 - math.exp(-2 * t))) for t, x in zip(ts, xs))
    return _result(3, "Mehler formula on x²", {"max_error": err}, 1e-9, err <= 1e-9)


def sde_vs_mehler(seed):
    p = make_builtin_potential("gaussian")
    q = builtin_field("quadratic")
    est = sde_evolve(p, q, 1.0, [1.0], 100_000, 1e-3, seed)
    exact = mehler_apply(q, 1.0, 1.0)
    z = abs(est.estimate - exact) / est.stderr
    return _result(4, "Euler-Maruyama vs Mehler", {"estimate": est.estimate, "exact": exact, "stderr": est.stderr, "z": z},
                   3.0, z <= 3.0)


def decay_rates(seed):
    p = make_builtin_potential("gaussian")
    times = np.linspace(0.0, 1.0, 5)
    var_fit = fit_decay_rate(evolve_trace(p, builtin_field("linear", [1.0]), times), "variance")
    ent_fit = fit_decay_rate(evolve_trace(p, builtin_field("shifted-density", [1.0]), times), "entropy")
    ok = abs(var_fit.rate + 2) <= 0.01 and var_fit.r_squared >= 0.9999 and abs(ent_fit.rate + 2) <= 0.05
    measured = {"variance_rate": var_fit.rate, "variance_r2": var_fit.r_squared, "entropy_rate": ent_fit.rate}
    return _result(5, "exponential decay rates", measured, {"variance": 0.01, "entropy": 0.05}, ok)


def curvature(seed):
    g = make_builtin_potential("gaussian")
    dw = make_builtin_potential("double-well")
    rho_g = min_curvature(g, [(-5, 5)], 101)
    rho_dw = min_curvature(dw, [(-2, 2)], 401)
    pts = np.linspace(-2, 2, 401)[:, None]
    rep = check_cd(dw, 0.5, math.inf, [builtin_field("linear", [1.0]), builtin_field("quadratic")], pts)
    wx = rep.witness["point"][0] if rep.witness else None
    ok = abs(rho_g - 1) <= 1e-9 and abs(rho_dw + 1) <= 1e-3 and rep.verdict == "fails" and abs(wx) <= 0.05
    return _result(6, "curvature estimates", {"gaussian": rho_g, "double_well": rho_dw, "cd_verdict": rep.verdict,
                                              "witness_x": wx}, {"gaussian": 1e-9, "double_well": 1e-3}, ok)


def _catalog(n, rng):
    return [
        builtin_field("linear", rng.normal(size=n)),
        builtin_field("quadratic", dimension=n),
        builtin_field("exponential", 0.5 * rng.normal(size=n)),
        builtin_field("gauss-bump", [0.3], n),
        builtin_field("shifted-density", rng.normal(size=n)),
    ]


def gamma_identities(seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    worst_g1 = worst_g2 = worst_chain = 0.0
    for name, params, n in [("gaussian", [], 2), ("scaled-gaussian", [2.0], 2),
                            ("gaussian-plus-quartic", [0.1], 2), ("double-well", [], 1)]:
        p = make_builtin_potential(name, params, n)
        fields = _catalog(n, rng)
        for k in range(100):
            f = fields[k % len(fields)]
            x = rng.normal(size=n) * 1.5
            a, b = gamma1(p, f, x), gamma1_definitional(p, f, x)
            worst_g1 = max(worst_g1, abs(a - b) / max(1.0, abs(a)))
            a, b = gamma2(p, f, x), gamma2_iterated(p, f, x)
            worst_g2 = max(worst_g2, abs(a - b) / max(1.0, abs(a)))
        for f in fields:
            if f.positive:
                worst_chain = max(worst_chain, chain_rule_residuals(p, f, rng.normal(size=(50, n)) * 1.5).max())
    ok = max(worst_g1, worst_g2, worst_chain) <= 1e-7
    return _result(7, "Γ-calculus identities", {"gamma": worst_g1, "gamma2": worst_g2, "chain_rule": worst_chain}, 1e-7, ok)


def integration_by_parts(seed):
    worst = 0.0
    pairs = [
        (("linear", [1.0]), ("quadratic", [])),
        (("quadratic", []), ("exponential", [0.5])),
        (("exponential", [0.3]), ("gauss-bump", [0.4])),
        (("gauss-bump", [0.2]), ("shifted-density", [0.7])),
        (("shifted-density", [-0.5]), ("linear", [2.0])),
        (("linear", [1.0]), ("exponential", [-0.4])),
        (("quadratic", []), ("gauss-bump", [0.5])),
        (("exponential", [0.25]), ("shifted-density", [1.0])),
        (("gauss-bump", [0.3]), ("quadratic", [])),
        (("shifted-density", [0.3]), ("exponential", [0.6])),
    ]
    for p in (make_builtin_potential("gaussian"), make_builtin_potential("scaled-gaussian", [2.0])):
        mu = mu_grid(p, gauss_hermite_grid(1))
        for (fa, pa), (ga, pb) in pairs:
            f, g = builtin_field(fa, pa), builtin_field(ga, pb)
            x = mu.nodes
            lhs = np.dot(mu.weights, g.value(x) * generator_apply(p, f, x))
            rhs = np.dot(mu.weights, np.sum(f.gradient(x) * g.gradient(x), axis=-1))
            worst = max(worst, abs(lhs + rhs))
    return _result(8, "integration by parts", {"max_defect": worst}, 1e-8, worst <= 1e-8)


def entropy_derivative(seed):
    p = make_builtin_potential("gaussian")
    worst = 0.0
    for f in (builtin_field("shifted-density", [1.0]), builtin_field("exponential", [0.5])):
        for t in (0.25, 0.5, 1.0):
            worst = max(worst, entropy_derivative_check(p, f, t, 1e-3).residual)
    return _result(9, "entropy derivative", {"max_residual": worst}, 1e-4, worst <= 1e-4)


def w2_oracle(seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 10]))
    worst = 0.0
    for _ in range(20):
        a, b = rng.normal(size=200), rng.normal(loc=rng.normal(), scale=rng.uniform(0.5, 2), size=200)
        worst = max(worst, abs(w2_sorted_1d(a, b).w2 - w2_assignment(a, b).w2))
    return _result(10, "sorted vs assignment W2", {"max_difference": worst}, 1e-10, worst <= 1e-10)


def talagrand_equality(seed):
    p = make_builtin_potential("gaussian")
    rep = verify_talagrand(p, 1.0, builtin_field("shifted-density", [1.0]), 10_000, seed)
    ok = abs(rep.lhs - 1) <= 0.02 and abs(rep.rhs - 1) <= 1e-8 and rep.holds
    return _result(11, "Talagrand equality for a translated Gaussian",
                   {"w2": rep.lhs, "bound": rep.rhs, "verdict": rep.verdict}, {"w2": 0.02, "bound": 1e-8}, ok)


def monge_ampere(seed):
    f = builtin_field("shifted-density", [1.0])
    grid = np.linspace(-3.0, 3.0, 4001)
    res = monge_ampere_residual_1d(f, brenier_map_1d(f, grid), grid)
    return _result(12, "Monge-Ampère residual", {"max_relative_residual": res}, 1e-6, res <= 1e-6)


CHECKS = [
    poincare_equality,
    lsi_equality,
    mehler_closed_form,
    sde_vs_mehler,
    decay_rates,
    curvature,
    gamma_identities,
    integration_by_parts,
    entropy_derivative,
    w2_oracle,
    talagrand_equality,
    monge_ampere,
]


def run_suite(seed: int = 0) -> tuple[list[dict], dict]:
    """Run every check; returns the results and a ``{id: seconds}`` timing map."""
    results, timing = [], {}
    for check in CHECKS:
        start = time.perf_counter()
        res = check(seed)
        timing[str(res["id"])] = time.perf_counter() - start
        results.append(res)
    return results, timing
