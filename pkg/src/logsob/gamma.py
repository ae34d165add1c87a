"""Carré du champ, iterated Γ₂ and sampled curvature-dimension checks.

For ``L f = Δf - ∇psi·∇f`` the closed forms are ``Γ(f) = |∇f|²`` and
``Γ₂(f) = ||Hess f||²_HS + <∇f, Hess psi ∇f>``. The definitional forms

    Γ(f, g)  = ½ (L(fg) - f Lg - g Lf)
    Γ₂(f)    = ½ (L Γ(f) - 2 Γ(f, Lf))

are computed separately from the derivative oracles and serve as test
oracles for the closed forms. Third derivatives are never required of a field:
``∇Δf`` and ``Hess Γ(f)`` come from central differences of closed-form
second-order quantities (five-point stencils).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .fields import PositivityError, ScalarField, _fd_jacobian, fd_gradient, log_field, product
from .potentials import Potential
from .semigroup import generator_apply

__all__ = [
    "CurvatureReport",
    "ChainRuleResiduals",
    "gamma1",
    "gamma_bilinear",
    "gamma1_definitional",
    "gamma2",
    "gamma2_iterated",
    "gamma_field",
    "generator_field",
    "chain_rule_residuals",
    "check_cd",
]


def _step(x):
    # Unscaled five-point step: fields here vary faster, not slower, far from the origin.
    return np.full(x.shape, np.finfo(float).eps ** 0.2)


def _pts(x, n):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, n), x.ndim <= 1


def _out(v, single):
    return float(v[0]) if single else v


def gamma1(p: Potential, f: ScalarField, x):
    """``Γ(f)(x) = |∇f(x)|²``."""
    pts, single = _pts(x, f.dimension)
    g = f.gradient(pts)
    return _out(np.sum(g * g, axis=-1), single)


def gamma_bilinear(p: Potential, f: ScalarField, g: ScalarField, x):
    """``Γ(f, g)(x) = ∇f·∇g``."""
    pts, single = _pts(x, f.dimension)
    return _out(np.sum(f.gradient(pts) * g.gradient(pts), axis=-1), single)


def gamma1_definitional(p: Potential, f: ScalarField, x, g: ScalarField | None = None):
    """``½ (L(fg) - f Lg - g Lf)`` with ``g = f`` by default."""
    g = f if g is None else g
    pts, single = _pts(x, f.dimension)
    fg = product(f, g)
    val = 0.5 * (
        generator_apply(p, fg, pts)
        - f.value(pts) * generator_apply(p, g, pts)
        - g.value(pts) * generator_apply(p, f, pts)
    )
    return _out(val, single)


def gamma2(p: Potential, f: ScalarField, x):
    """``||Hess f||²_HS + <∇f, Hess psi ∇f>``."""
    pts, single = _pts(x, f.dimension)
    h = f.hessian(pts)
    df = f.gradient(pts)
    val = np.sum(h * h, axis=(-2, -1)) + np.einsum("mi,mij,mj->m", df, p.hessian(pts), df)
    return _out(val, single)


def gamma_field(f: ScalarField) -> ScalarField:
    """The field ``x ↦ Γ(f)(x)``; its gradient is ``2 Hess f ∇f``, its Hessian a difference of that."""

    def grad(x):
        return 2.0 * np.einsum("...ij,...j->...i", f.hessian(x), f.gradient(x))

    def hess(x):
        j = _fd_jacobian(grad, x, _step(x), accuracy=4)
        return 0.5 * (j + np.swapaxes(j, -1, -2))

    return ScalarField(
        f"Gamma({f.name})", f.dimension,
        lambda x: np.sum(f.gradient(x) ** 2, axis=-1), grad, hess,
    )


def generator_field(p: Potential, f: ScalarField) -> ScalarField:
    """The field ``x ↦ Lf(x)`` with ``∇Lf = ∇Δf - Hess psi ∇f - Hess f ∇psi``.

    ``∇Δf`` is a central difference of the closed-form Laplacian.
    """

    def value(x):
        return f.laplacian(x) - np.sum(p.gradient(x) * f.gradient(x), axis=-1)

    def grad(x):
        dlap = fd_gradient(f.laplacian, x, _step(x), accuracy=4)
        return (dlap
                - np.einsum("...ij,...j->...i", p.hessian(x), f.gradient(x))
                - np.einsum("...ij,...j->...i", f.hessian(x), p.gradient(x)))

    return ScalarField(f"L({f.name})", f.dimension, value, grad, None)


def gamma2_iterated(p: Potential, f: ScalarField, x):
    """``½ (L Γ(f) - 2 Γ(f, Lf))`` from the derivative oracles."""
    pts, single = _pts(x, f.dimension)
    gf = gamma_field(f)
    lf = generator_field(p, f)
    val = 0.5 * generator_apply(p, gf, pts) - gamma_bilinear(p, f, lf, pts)
    return _out(val, single)


@dataclass(frozen=True)
class ChainRuleResiduals:
    r1: float
    r2: float
    r3: float

    def max(self) -> float:
        return max(self.r1, self.r2, self.r3)


def _rel(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def chain_rule_residuals(p: Potential, f: ScalarField, x) -> ChainRuleResiduals:
    """Residuals of the diffusion chain rules at ``x`` for a positive field.

    ``r1``: ``L log f`` vs ``Lf/f - Γ(f)/f²``; ``r2``: ``Γ(log f)`` vs
    ``Γ(f)/f²``; ``r3``: ``Γ₂(log f)`` vs
    ``Γ₂(f)/f² - Γ(f, Γ(f))/f³ + Γ(f)²/f⁴``. Left sides act on the composed
    field ``log f``; right sides only on ``f``. Residuals are relative to
    ``max(1, |lhs|, |rhs|)`` and maximized over the points. ``Γ(f, Γ(f))``
    differentiates the closed-form ``Γ(f)`` numerically.
    """
    pts, _ = _pts(x, f.dimension)
    f.require_positive()
    u = f.value(pts)
    if np.any(u <= 0):
        raise PositivityError(f"field {f.name!r} is not positive at every point")
    lg = log_field(f)
    g1 = gamma1(p, f, pts)
    lf = generator_apply(p, f, pts)

    lhs1 = generator_apply(p, lg, pts)
    rhs1 = lf / u - g1 / u ** 2
    lhs2 = gamma1(p, lg, pts)
    rhs2 = g1 / u ** 2
    gamma_f_value = lambda y: np.sum(f.gradient(y) ** 2, axis=-1)  # noqa: E731
    cross = np.sum(f.gradient(pts) * fd_gradient(gamma_f_value, pts, _step(pts), accuracy=4), axis=-1)
    lhs3 = gamma2(p, lg, pts)
    rhs3 = gamma2(p, f, pts) / u ** 2 - cross / u ** 3 + g1 ** 2 / u ** 4
    return ChainRuleResiduals(
        float(np.max(_rel(lhs1, rhs1))),
        float(np.max(_rel(lhs2, rhs2))),
        float(np.max(_rel(lhs3, rhs3))),
    )


@dataclass
class CurvatureReport:
    """Outcome of a sampled ``Γ₂(f) >= rho Γ(f) + (Lf)²/n`` check."""

    potential: str
    rho: float
    n: float
    verdict: str
    min_gap: float
    witness: dict | None
    samples: dict
    tolerance: float = 0.0
    gaps: list = field(default_factory=list, repr=False)

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("gaps")
        d["n"] = "inf" if math.isinf(self.n) else self.n
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def check_cd(
    p: Potential,
    rho: float,
    n_param: float = math.inf,
    fields: Sequence[ScalarField] = (),
    points=None,
    tol: float = 1e-9,
) -> CurvatureReport:
    """Sampled curvature-dimension check over ``fields × points``.

    The gap ``Γ₂(f) - rho Γ(f) - (Lf)²/n`` (last term dropped for
    ``n = inf``) is evaluated for every pair. The verdict is ``holds`` iff the
    smallest gap is at least ``-tol``; the worst pair is reported as the
    witness when it fails. A passing verdict is evidence, not a certificate.
    """
    if not fields:
        raise ValueError("check_cd needs at least one field")
    pts = np.asarray(points, dtype=float).reshape(-1, p.dimension)
    if pts.size == 0:
        raise ValueError("check_cd needs at least one point")
    if not (n_param > 0):
        raise ValueError(f"dimension parameter must be positive, got {n_param}")
    inv_n = 0.0 if math.isinf(n_param) else 1.0 / n_param
    best = (math.inf, None, None)
    gaps = []
    for f in fields:
        gap = gamma2(p, f, pts) - rho * gamma1(p, f, pts)
        if inv_n:
            gap = gap - inv_n * generator_apply(p, f, pts) ** 2
        gap = np.atleast_1d(gap)
        gaps.append(gap)
        i = int(np.argmin(gap))
        if gap[i] < best[0]:
            best = (float(gap[i]), f.name, pts[i])
    min_gap, fname, wpt = best
    verdict = "holds" if min_gap >= -tol else "fails"
    witness = None if verdict == "holds" else {"point": wpt.tolist(), "field": fname, "gap": min_gap}
    samples = {"fields": [f.name for f in fields], "points": int(pts.shape[0])}
    return CurvatureReport(p.label, float(rho), float(n_param), verdict, min_gap, witness, samples, tol, gaps)
