"""Quadratic-cost optimal transport: W₂ estimators, 1-D Brenier maps, Talagrand checks.

In one dimension the optimal coupling is the monotone (quantile) coupling,
so the Brenier map from ``f dgamma`` to ``gamma`` is ``T = G⁻¹ ∘ F`` with
``F`` the CDF of ``f dgamma`` and ``G`` the Gaussian CDF. In any dimension
the empirical W₂ between two equal-size clouds is an exact assignment
problem.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate as spi
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, linear_sum_assignment
from scipy.special import ndtr, ndtri

from .fields import PositivityError, ScalarField, log_field
from .functionals import SAMPLING_SIGMAS, InequalityReport, entropy
from .potentials import (
    EmpiricalMeasure,
    Potential,
    PotentialError,
    gauss_hermite_grid,
    mu_grid,
    sample_measure,
)

__all__ = [
    "TransportResult",
    "BrenierMap1D",
    "TransportError",
    "w2_sorted_1d",
    "w2_assignment",
    "w2_bootstrap_se",
    "brenier_map_1d",
    "brenier_w2",
    "monge_ampere_residual_1d",
    "verify_talagrand",
    "otto_villani_check",
    "tilted_gradient",
    "ASSIGNMENT_CAP",
]

ASSIGNMENT_CAP = 2000
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_PHI = 1.0 / math.sqrt(2.0 * math.pi)
_TAIL = 40.0  # tail integrals stop this far beyond the grid
_REVERSE_PAD = 8.0  # support padding when inverting the CDF of f dgamma


class TransportError(ValueError):
    """Invalid transport input or numerically inconsistent map."""


@dataclass
class TransportResult:
    """Empirical W₂ with the coupling that attains it.

    ``pairing[i]`` is the index in ``b`` matched to ``a[i]``.
    """

    w2: float
    coupling: str
    pairing: np.ndarray = field(repr=False)
    sizes: tuple[int, int]
    cost_sum: float

    def to_dict(self) -> dict:
        return {
            "w2": self.w2,
            "cost_sum": self.cost_sum,
            "sizes": list(self.sizes),
            "coupling": {"kind": self.coupling, "pairs": int(self.pairing.size)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _as_cloud(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, 1) if a.ndim <= 1 else a


def w2_sorted_1d(a, b) -> TransportResult:
    """Exact W₂ between two 1-D empirical measures by rank pairing."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise TransportError(f"sample counts differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise TransportError("empty samples")
    ia = np.argsort(a, kind="stable")
    ib = np.argsort(b, kind="stable")
    pairing = np.empty(a.size, dtype=int)
    pairing[ia] = ib
    d = a - b[pairing]
    cost = float(np.mean(d * d))
    return TransportResult(math.sqrt(cost), "monotone-1d", pairing, (a.size, b.size), cost)


def w2_assignment(a, b) -> TransportResult:
    """Exact W₂ between equal-size clouds in any dimension via linear assignment."""
    a, b = _as_cloud(a), _as_cloud(b)
    if a.shape[0] != b.shape[0]:
        raise TransportError(f"sample counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[1] != b.shape[1]:
        raise TransportError("samples live in different dimensions")
    n = a.shape[0]
    if n > ASSIGNMENT_CAP:
        raise TransportError(f"assignment solver is capped at {ASSIGNMENT_CAP} points, got {n}")
    if n == 0:
        raise TransportError("empty samples")
    cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    rows, cols = linear_sum_assignment(cost)
    pairing = np.empty(n, dtype=int)
    pairing[rows] = cols
    d = a - b[pairing]
    c = float(np.mean(np.sum(d * d, axis=-1)))
    return TransportResult(math.sqrt(c), "assignment", pairing, (n, n), c)


def _w2(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape[1] == 1:
        return w2_sorted_1d(a[:, 0], b[:, 0]).w2
    return w2_assignment(a, b).w2


def w2_bootstrap_se(a, b, replicates: int = 50, seed: int = 0) -> float:
    """Bootstrap standard error of the empirical W₂, resampling both clouds."""
    a, b = _as_cloud(a), _as_cloud(b)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB007]))
    n = a.shape[0]
    reps = [_w2(a[rng.integers(0, n, n)], b[rng.integers(0, n, n)]) for _ in range(replicates)]
    return float(np.std(reps, ddof=1))


@dataclass
class BrenierMap1D:
    """Monotone transport map tabulated on an increasing grid.

    ``theta`` is ``∫ (T(x) - x) dx`` up to an additive constant, so that
    ``T = x + theta'``.
    """

    grid: np.ndarray
    map_values: np.ndarray
    theta: np.ndarray
    direction: str

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.grid[0], self.grid[-1]
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise TransportError(f"points outside the map grid [{lo}, {hi}]")
        return self._spline()(x)

    def _spline(self) -> CubicSpline:
        return CubicSpline(self.grid, self.map_values)

    def derivative(self) -> np.ndarray:
        """Second-order finite-difference ``T'`` on the grid."""
        return np.gradient(self.map_values, self.grid, edge_order=2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "T", "theta"])
            for x, t, th in zip(self.grid, self.map_values, self.theta):
                writer.writerow([repr(float(x)), repr(float(t)), repr(float(th))])


class _DensityCDF:
    """Accurate CDF and survival function of ``f dgamma`` anchored on a grid.

    Cells are integrated with 12-point Gauss-Legendre; the tails beyond the
    grid with adaptive quadrature. Left sums accumulate the CDF, right sums
    the survival function, so neither tail suffers cancellation.
    """

    def __init__(self, f: ScalarField, grid: np.ndarray):
        self.f = f
        self.grid = grid
        self._scale = 1.0
        f.value(grid[:, None])  # positivity check on the grid
        dens = self.density
        tail = lambda lo, hi: spi.quad(lambda y: float(dens(np.array([y]))[0]), lo, hi,  # noqa: E731
                                       epsabs=1e-300, epsrel=1e-13, limit=400)[0]
        left_tail = tail(grid[0] - _TAIL, grid[0])
        right_tail = tail(grid[-1], grid[-1] + _TAIL)
        cells = self._cells(grid[:-1], grid[1:])
        self.cdf_grid = left_tail + np.concatenate([[0.0], np.cumsum(cells)])
        self.sf_grid = right_tail + np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
        self.mass = left_tail + float(np.sum(cells)) + right_tail

    def density(self, y: np.ndarray) -> np.ndarray:
        # Raw values: deep in the tails f may overflow while the Gaussian factor
        # underflows; such products are zero for any integrable density.
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            d = np.asarray(self.f.value_fn(y[..., None]), dtype=float) * (_PHI * np.exp(-0.5 * y * y))
        return np.where(np.isfinite(d), d, 0.0)

    def _cells(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        y = mid[:, None] + half[:, None] * _GL_X[None, :]
        return half * (self.density(y) @ _GL_W)

    def normalize(self, z: float) -> None:
        self.cdf_grid = self.cdf_grid / z
        self.sf_grid = self.sf_grid / z
        self.mass = self.mass / z
        self._scale = z

    def at(self, x: float) -> tuple[float, float]:
        """(CDF, survival) at a point inside the grid."""
        z = self._scale
        i = int(np.clip(np.searchsorted(self.grid, x) - 1, 0, self.grid.size - 2))
        part = float(self._cells(np.array([self.grid[i]]), np.array([x]))[0]) / z
        rest = float(self._cells(np.array([x]), np.array([self.grid[i + 1]]))[0]) / z
        return self.cdf_grid[i] + part, self.sf_grid[i + 1] + rest


def _gauss_quantile(cdf: np.ndarray, sf: np.ndarray) -> np.ndarray:
    # Invert through whichever tail probability is smaller to keep full precision.
    return np.where(cdf < 0.5, ndtri(cdf), -ndtri(sf))


def _invert(cdf: "_DensityCDF", support: np.ndarray, u: float, s: float, x: float) -> float:
    """Solve ``F(y) = u`` (equivalently ``1 - F(y) = s``) on the support grid."""
    use_cdf = u < 0.5

    def resid(y):
        c, r = cdf.at(y)
        return c - u if use_cdf else s - r

    i = np.searchsorted(cdf.cdf_grid, u) if use_cdf else np.searchsorted(-cdf.sf_grid, -s)
    i = int(np.clip(i, 1, support.size - 1))
    # Widen by a cell each side: images that land on a node sit on the bracket edge.
    lo, hi = support[max(i - 2, 0)], support[min(i + 1, support.size - 1)]
    rlo, rhi = resid(lo), resid(hi)
    scale = 1e-12 * (u if use_cdf else s)
    if abs(rlo) <= scale or abs(rhi) <= scale:
        return lo if abs(rlo) <= abs(rhi) else hi
    if rlo * rhi > 0:
        raise TransportError(f"image of grid point {x:g} leaves the support grid")
    return brentq(resid, lo, hi, xtol=1e-14, rtol=1e-14)


def brenier_map_1d(f: ScalarField, grid=None, direction: str = "from-fgamma-to-gamma") -> BrenierMap1D:
    """Monotone map between ``f dgamma`` and ``gamma`` on a 1-D grid.

    ``direction="from-fgamma-to-gamma"`` gives ``T = G⁻¹ ∘ F`` (pushes
    ``f dgamma`` onto ``gamma``); ``"from-gamma-to-fgamma"`` gives its inverse
    ``F⁻¹ ∘ G``, found by bracketed root finding. ``f`` must integrate to 1
    against ``gamma`` within 1e-6 (it is then renormalized exactly).
    """
    if f.dimension != 1:
        raise TransportError("Brenier maps are computed in dimension 1 only")
    f.require_positive()
    grid = np.linspace(-6.0, 6.0, 4001) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise TransportError("grid must be strictly increasing with at least 3 points")
    cdf = _DensityCDF(f, grid)
    if abs(cdf.mass - 1.0) >= 1e-6:
        raise TransportError(f"f is not a probability density against gamma: ∫ f dgamma = {cdf.mass:.12g}")
    cdf.normalize(cdf.mass)

    if direction == "from-fgamma-to-gamma":
        t = _gauss_quantile(cdf.cdf_grid, cdf.sf_grid)
    elif direction == "from-gamma-to-fgamma":
        # Images may leave the user grid, so search on a padded support grid.
        step = float(np.min(np.diff(grid)))
        pad = max(_REVERSE_PAD, 0.0)
        npts = int(math.ceil((grid[-1] - grid[0] + 2 * pad) / max(step, 1e-3))) + 1
        support = np.linspace(grid[0] - pad, grid[-1] + pad, npts)
        scdf = _DensityCDF(f, support)
        scdf.normalize(scdf.mass)
        t = np.array([_invert(scdf, support, u, s, x)
                      for u, s, x in zip(ndtr(grid), ndtr(-grid), grid)])
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if np.any(np.diff(t) < 0):
        raise TransportError("map is not monotone; the grid is too coarse for this density")
    theta = spi.cumulative_trapezoid(t - grid, grid, initial=0.0)
    return BrenierMap1D(grid, t, theta, direction)


def brenier_w2(f: ScalarField, m: BrenierMap1D) -> float:
    """W₂ between ``f dgamma`` and ``gamma`` from a tabulated map (``∫ |theta'|²``).

    Integrates ``(T(x) - x)²`` against ``f dgamma`` (forward map) or
    ``gamma`` (reverse map) over the map grid with Simpson's rule.
    """
    x = m.grid
    weight = _PHI * np.exp(-0.5 * x * x)
    if m.direction == "from-fgamma-to-gamma":
        weight = weight * f.value(x[:, None])
    return math.sqrt(spi.simpson((m.map_values - x) ** 2 * weight, x=x))


def monge_ampere_residual_1d(f: ScalarField, m: BrenierMap1D, points) -> float:
    """Largest relative defect of ``f(x) e^{-x²/2} = T'(x) e^{-T(x)²/2}`` over ``points``.

    ``T'`` is a finite difference of the tabulated map; values off the grid
    nodes are interpolated with a cubic spline.
    """
    if m.direction != "from-fgamma-to-gamma":
        raise TransportError("the Monge-Ampère residual is defined for the map from f dgamma to gamma")
    x = np.asarray(points, dtype=float).ravel()
    t = m(x)
    dt = CubicSpline(m.grid, m.derivative())(x)
    lhs = f.value(x[:, None]) * np.exp(-0.5 * x * x)
    rhs = dt * np.exp(-0.5 * t * t)
    return float(np.max(np.abs(lhs - rhs) / lhs))


def tilted_gradient(p: Potential, f: ScalarField):
    """Gradient of ``psi - log f``, the potential of ``f dmu_psi``."""
    lg = log_field(f)
    return lambda x: p.gradient(x) - lg.gradient(x)


def _seeds(seed: int, k: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def _null_floor(b: np.ndarray) -> float:
    """Empirical W₂ between the two halves of ``b``, rescaled to the full size.

    Two independent samples of one law are at positive empirical distance;
    this estimates that bias so it is not mistaken for a violation.
    """
    h = b.shape[0] // 2
    if h < 1:
        return 0.0
    return _w2(b[:h], b[h:2 * h]) / math.sqrt(2.0)


def verify_talagrand(
    p: Potential,
    rho: float,
    f: ScalarField,
    sample_count: int,
    seed: int,
    *,
    constant: float | None = None,
    grid=None,
    tolerance: float | None = None,
    bootstrap: int = 50,
    sampler: dict | None = None,
) -> InequalityReport:
    """Empirical check of ``W₂(f dmu_psi, mu_psi) <= sqrt((2/rho) Ent(f))``.

    ``f`` need not integrate to 1; it is normalized first, so ``Ent`` is
    the entropy of ``f / ∫f dmu_psi``.

    ``lhs`` is the exact empirical W₂ between independent samples of
    ``f dmu_psi`` (Langevin on ``psi - log f``) and of ``mu_psi``;
    ``rhs`` uses the entropy by quadrature. ``constant`` replaces the factor
    ``2/rho`` under the root. The default tolerance is three bootstrap
    standard errors of the W₂ estimate plus a null floor: the empirical
    W₂ between the two halves of the ``mu_psi`` sample, divided by √2.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    p.require_measure()
    if f.dimension != p.dimension:
        raise ValueError("field and potential dimensions differ")
    f.require_positive()
    c = 2.0 / rho if constant is None else float(constant)
    grid = grid or gauss_hermite_grid(p.dimension)
    mu = mu_grid(p, grid)
    # Entropy of the probability density f / ∫f dmu (self-normalized entropy is 1-homogeneous).
    mass = float(mu.weights @ f.value(mu.nodes))
    ent = max(entropy(mu, f), 0.0) / mass
    rhs = math.sqrt(c * ent)

    opts = dict(sampler or {})
    s_mu, s_f = _seeds(seed, 2)
    target = sample_measure(p, sample_count, s_mu, **opts)
    tilted = sample_measure(p, sample_count, s_f, gradient=tilted_gradient(p, f),
                            label=f"{f.name}*{p.label}", **opts)
    a, b = tilted.points, target.points
    if p.dimension == 1:
        res = w2_sorted_1d(a[:, 0], b[:, 0])
    else:
        res = w2_assignment(a, b)
    se = w2_bootstrap_se(a, b, bootstrap, seed) if bootstrap > 1 else 0.0
    floor = _null_floor(b)
    if tolerance is None:
        tolerance = SAMPLING_SIGMAS * se + floor
    inputs = {
        "potential": p.label,
        "field": f.name,
        "rho": rho,
        "samples": sample_count,
        "seed": seed,
        "sampler": {"target": target.source, "tilted": {k: v for k, v in tilted.source.items()}},
    }
    extra = {"w2_stderr": se, "w2_floor": floor, "entropy": ent, "mass": mass, "coupling": res.coupling,
             "note": "empirical W2 converges slowly with dimension"}
    return InequalityReport("talagrand", res.w2, rhs, c, tolerance, inputs, extra)


def otto_villani_check(
    p: Potential,
    densities: Sequence[ScalarField],
    sample_count: int,
    seed: int,
    *,
    lsi_constant: float | None = None,
    rho_free: bool = False,
    **kwargs,
) -> list[InequalityReport]:
    """Talagrand reports implied by a log-Sobolev constant.

    With ``Ent(f²) <= C ∫|∇f|²`` each density gets the bound
    ``W₂(f dmu, mu) <= sqrt(2 C Ent(f))``. Unless ``rho_free`` is set, the
    potential must carry a positive curvature certificate and ``C``
    defaults to ``2/rho``, the constant it implies. Member ``i`` is sampled
    from the ``i``-th child of ``seed``.
    """
    rho = p.curvature_bound
    if not rho_free:
        if rho is None or rho <= 0:
            raise PotentialError(
                f"potential {p.label} has no positive curvature certificate; "
                "Otto-Villani needs a log-Sobolev constant (pass lsi_constant with rho_free=True)"
            )
        if lsi_constant is None:
            lsi_constant = 2.0 / rho
    if lsi_constant is None or not lsi_constant > 0:
        raise ValueError(f"log-Sobolev constant must be positive, got {lsi_constant}")
    seeds = _seeds(seed, len(densities))
    reports = []
    for f, s in zip(densities, seeds):
        # rho only enters through the constant here.
        rep = verify_talagrand(p, 1.0, f, sample_count, s, constant=2.0 * lsi_constant, **kwargs)
        rep.kind = "talagrand"
        rep.inputs["lsi_constant"] = lsi_constant
        rep.inputs["rho_free"] = rho_free
        reports.append(rep)
    return reports
