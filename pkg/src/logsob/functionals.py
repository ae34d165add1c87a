"""Variance, entropy, Dirichlet energy and Fisher information, plus inequality verdicts.

Every functional takes a *measure backend*: a :class:`QuadratureGrid`
(deterministic; reweighted grids stand for ``mu_psi``) or an
:class:`EmpiricalMeasure` (sample averages). Verdicts are packaged as
:class:`InequalityReport` objects.

Under ``Hess psi >= rho Id`` the decay checks use the rate
``exp(-2 rho t)`` for both variance and entropy.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from ._stats import weighted_dirichlet, weighted_entropy, weighted_fisher, weighted_variance
from .fields import PositivityError, ScalarField
from .potentials import EmpiricalMeasure, Potential, PotentialError, QuadratureGrid, gauss_hermite_grid, mu_grid
from .semigroup import EvolutionTrace, mehler_field

__all__ = [
    "InequalityReport",
    "DecayFit",
    "EntropyDerivative",
    "DecayError",
    "variance",
    "entropy",
    "dirichlet",
    "fisher",
    "verify_poincare",
    "verify_lsi",
    "verify_decay",
    "fit_decay_rate",
    "entropy_derivative_check",
    "lsi_taylor_gap",
    "QUADRATURE_TOLERANCE",
]

QUADRATURE_TOLERANCE = 1e-8
SAMPLING_SIGMAS = 3.0


class DecayError(ValueError):
    """A decay fit met a non-positive functional value."""


def _backend(measure) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(measure, QuadratureGrid):
        return measure.weights, measure.nodes
    if isinstance(measure, EmpiricalMeasure):
        m = len(measure)
        return np.full(m, 1.0 / m), measure.points
    raise TypeError(f"unsupported measure backend {type(measure).__name__}")


def _values(f: ScalarField, nodes: np.ndarray) -> np.ndarray:
    v = f.value(nodes)
    if not np.all(np.isfinite(v)):
        raise ArithmeticError(f"non-finite values of {f.name!r} on the measure support")
    return v


def variance(measure, f: ScalarField) -> float:
    """``∫ f² - (∫ f)²``."""
    w, x = _backend(measure)
    return weighted_variance(w, _values(f, x))


def entropy(measure, f: ScalarField) -> float:
    """Self-normalized entropy ``∫ f log(f / ∫ f)`` of a strictly positive field."""
    f.require_positive()
    w, x = _backend(measure)
    return weighted_entropy(w, _values(f, x))


def dirichlet(measure, f: ScalarField) -> float:
    """``∫ |∇f|²``."""
    w, x = _backend(measure)
    return weighted_dirichlet(w, f.gradient(x))


def fisher(measure, f: ScalarField) -> float:
    """``∫ |∇f|² / f`` of a strictly positive field."""
    f.require_positive()
    w, x = _backend(measure)
    return weighted_fisher(w, _values(f, x), f.gradient(x))


@dataclass
class InequalityReport:
    """``lhs <= rhs`` comparison with its tolerance and inputs.

    ``verdict`` is ``holds`` iff ``slack = rhs - lhs >= -tolerance``.
    """

    kind: str
    lhs: float
    rhs: float
    constant: float
    tolerance: float
    inputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def verdict(self) -> str:
        return "holds" if self.slack >= -self.tolerance else "violated"

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slack"] = self.slack
        d["verdict"] = self.verdict
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "lhs", "rhs", "constant", "slack", "verdict"])
        writer.writerow([self.kind, repr(self.lhs), repr(self.rhs), repr(self.constant), repr(self.slack), self.verdict])
        return buf.getvalue()


def _resolve(p: Potential, backend):
    """Map a user backend to a measure for ``mu_psi`` plus a description."""
    p.require_measure()
    if backend is None:
        backend = gauss_hermite_grid(p.dimension)
    if isinstance(backend, QuadratureGrid):
        grid = mu_grid(p, backend) if backend.measure == "gamma" else backend
        return grid, {"backend": "quadrature", "order": grid.order}
    if isinstance(backend, EmpiricalMeasure):
        src = backend.source.get("potential")
        if src is not None and src != p.label:
            raise ValueError(f"samples were drawn from {src!r}, not {p.label!r}")
        return backend, {"backend": "samples", "count": len(backend), "seed": backend.seed}
    raise TypeError(f"unsupported backend {type(backend).__name__}")


def _se(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0


def _check_rho(rho: float) -> None:
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")


def verify_poincare(p: Potential, rho: float, f: ScalarField, backend=None, tolerance: float | None = None) -> InequalityReport:
    """Check ``Var(f) <= (1/rho) ∫ |∇f|² dmu_psi``."""
    _check_rho(rho)
    measure, info = _resolve(p, backend)
    w, x = _backend(measure)
    v = _values(f, x)
    g = f.gradient(x)
    lhs = weighted_variance(w, v)
    rhs = weighted_dirichlet(w, g) / rho
    if tolerance is None:
        if isinstance(measure, EmpiricalMeasure):
            se_l = _se((v - v.mean()) ** 2)
            se_r = _se(np.sum(g * g, axis=-1) / rho)
            tolerance = SAMPLING_SIGMAS * math.hypot(se_l, se_r)
        else:
            tolerance = QUADRATURE_TOLERANCE
    inputs = {"potential": p.label, "field": f.name, "rho": rho, **info}
    return InequalityReport("poincare", lhs, rhs, 1.0 / rho, tolerance, inputs)


def verify_lsi(p: Potential, rho: float, f: ScalarField, backend=None, tolerance: float | None = None) -> InequalityReport:
    """Check ``Ent(f) <= (1/(2 rho)) ∫ |∇f|²/f dmu_psi`` for a positive field."""
    _check_rho(rho)
    f.require_positive()
    measure, info = _resolve(p, backend)
    w, x = _backend(measure)
    v = _values(f, x)
    g = f.gradient(x)
    # Entropy is non-negative by Jensen; clamp roundoff below zero.
    lhs = max(weighted_entropy(w, v), 0.0)
    rhs = weighted_fisher(w, v, g) / (2.0 * rho)
    if tolerance is None:
        if isinstance(measure, EmpiricalMeasure):
            m = v.mean()
            se_l = _se(v * np.log(v / m))
            se_r = _se(np.sum(g * g, axis=-1) / v / (2.0 * rho))
            tolerance = SAMPLING_SIGMAS * math.hypot(se_l, se_r)
        else:
            tolerance = QUADRATURE_TOLERANCE
    inputs = {"potential": p.label, "field": f.name, "rho": rho, **info}
    return InequalityReport("lsi", lhs, rhs, 1.0 / (2.0 * rho), tolerance, inputs)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    functional: str

    def to_dict(self) -> dict:
        return asdict(self)


def fit_decay_rate(trace: EvolutionTrace, functional: str = "variance") -> DecayFit:
    """Least-squares slope of ``log(functional)`` against time."""
    if functional not in ("variance", "entropy"):
        raise ValueError(f"functional must be 'variance' or 'entropy', got {functional!r}")
    y = np.asarray(trace.series(functional), dtype=float)
    t = np.asarray(trace.times, dtype=float)
    if t.size < 3:
        raise ValueError("a decay fit needs at least 3 times")
    bad = np.flatnonzero(~(y > 0))
    if bad.size:
        raise DecayError(f"{functional} is {y[bad[0]]:g} (not positive) at t={t[bad[0]]:g}")
    res = stats.linregress(t, np.log(y))
    return DecayFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), functional)


def verify_decay(trace: EvolutionTrace, functional: str, rho: float, tolerance: float = QUADRATURE_TOLERANCE) -> InequalityReport:
    """Check ``F(P_t f) <= exp(-2 rho t) F(f)`` at every recorded time; reports the tightest one."""
    _check_rho(rho)
    y = np.asarray(trace.series(functional), dtype=float)
    t = np.asarray(trace.times, dtype=float)
    bound = np.exp(-2.0 * rho * t) * y[0]
    i = int(np.argmin(bound - y))
    kind = {"variance": "decay-variance", "entropy": "decay-entropy"}[functional]
    inputs = {"potential": trace.potential, "field": trace.field, "rho": rho, "method": trace.method}
    return InequalityReport(kind, max(float(y[i]), 0.0), float(bound[i]), 2.0 * rho, tolerance, inputs,
                            {"time": float(t[i])})


@dataclass(frozen=True)
class EntropyDerivative:
    lhs: float
    rhs: float
    residual: float


def entropy_derivative_check(
    p: Potential, f: ScalarField, t: float, h: float = 1e-3, grid: QuadratureGrid | None = None
) -> EntropyDerivative:
    """Compare ``d/dt Ent(P_t f)`` (central difference) with ``-Fisher(P_t f)``.

    Uses the Mehler formula, so ``p`` must be the Gaussian potential.
    """
    if p.name != "gaussian":
        raise PotentialError("the entropy-derivative check uses the Mehler formula (gaussian potential only)")
    if not (h > 0 and t >= h):
        raise ValueError(f"need t >= h > 0, got t={t}, h={h}")
    f.require_positive()
    grid = grid or gauss_hermite_grid(f.dimension)
    try:
        ep = entropy(grid, mehler_field(f, t + h, grid))
        em = entropy(grid, mehler_field(f, t - h, grid))
        rhs = -fisher(grid, mehler_field(f, t, grid))
    except PositivityError as exc:
        raise PositivityError(f"P_t f lost positivity near t={t}: {exc}") from exc
    lhs = (ep - em) / (2.0 * h)
    return EntropyDerivative(lhs, rhs, abs(lhs - rhs))


def lsi_taylor_gap(measure, g: ScalarField, eps: float = 1e-3) -> tuple[float, float]:
    """Return ``(Ent((1 + eps g)²)/eps², 2 Var(g))``; the two agree as ``eps -> 0``.

    This is the linearization that turns a log-Sobolev inequality into a
    Poincaré inequality.
    """
    w, x = _backend(measure)
    gv = _values(g, x)
    f2 = (1.0 + eps * gv) ** 2
    if np.any(f2 <= 0):
        raise PositivityError("1 + eps g vanishes on the measure support; decrease eps")
    return weighted_entropy(w, f2) / eps ** 2, 2.0 * weighted_variance(w, gv)
