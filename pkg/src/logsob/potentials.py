"""Potentials, reference measures and integration backends.

A potential ``psi`` defines the generator ``L f = Δf - ∇psi·∇f`` and, when
``exp(-psi)`` is integrable, the probability measure ``mu_psi ∝ exp(-psi)``.
All callables are vectorized over leading axes: a point batch has shape
``(..., n)``.

Two integration backends are provided:

* :class:`QuadratureGrid` -- tensor Gauss-Hermite nodes normalized against the
  standard Gaussian ``gamma``; :func:`mu_grid` turns it into a rule for
  ``mu_psi`` (rescaled nodes for quadratic potentials, a Gauss rule for
  ``exp(-psi)`` in 1-D, reweighting otherwise).
* :class:`EmpiricalMeasure` -- seeded sample clouds (direct Gaussian draws or
  unadjusted Langevin chains).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "Potential",
    "QuadratureGrid",
    "EmpiricalMeasure",
    "PotentialError",
    "IntegrationError",
    "SamplingError",
    "make_builtin_potential",
    "potential_from_config",
    "min_curvature",
    "gauss_hermite_grid",
    "default_order",
    "integrate",
    "mu_grid",
    "integrate_mu",
    "sample_measure",
]

BUILTIN_POTENTIALS = ("gaussian", "scaled-gaussian", "gaussian-plus-quartic", "double-well", "zero")

# Per-axis Gauss-Hermite order by dimension.
_DEFAULT_ORDER = {1: 40, 2: 40, 3: 20, 4: 12}
MAX_QUADRATURE_DIM = 4

LANGEVIN_STEP = 1e-3
LANGEVIN_BURN_IN = 10_000
LANGEVIN_THIN = 10


class PotentialError(ValueError):
    """Invalid potential specification or use."""


class IntegrationError(ArithmeticError):
    """Non-finite integrand or reweighting encountered."""


class SamplingError(ArithmeticError):
    """A sampler trajectory left the finite range."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


def _as_points(x, dimension: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dimension:
        raise ValueError(f"expected points with trailing dimension {dimension}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class Potential:
    """A C² potential ``psi`` with closed-form derivative oracles.

    ``curvature_bound`` is a global lower bound on the smallest eigenvalue of
    ``Hess psi`` when one is known analytically (``None`` otherwise).
    ``normalizable`` is false for the zero potential, whose generator is the
    plain Laplacian and which has no invariant probability measure.
    """

    name: str
    dimension: int
    params: tuple[float, ...]
    value_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    gradient_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    hessian_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    curvature_bound: float | None = None
    normalizable: bool = True

    def value(self, x) -> np.ndarray:
        return self.value_fn(_as_points(x, self.dimension))

    def gradient(self, x) -> np.ndarray:
        return self.gradient_fn(_as_points(x, self.dimension))

    def hessian(self, x) -> np.ndarray:
        return self.hessian_fn(_as_points(x, self.dimension))

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}({', '.join(f'{p:g}' for p in self.params)})"

    def to_config(self) -> dict:
        return {"name": self.name, "params": list(self.params), "dimension": self.dimension}

    def require_measure(self) -> None:
        if not self.normalizable:
            raise PotentialError(f"potential {self.name!r} has no normalizable invariant measure")


def _sq(x):
    return np.sum(x * x, axis=-1)


def _eye_like(x):
    n = x.shape[-1]
    return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()


def make_builtin_potential(name: str, params: Sequence[float] = (), dimension: int = 1) -> Potential:
    """Build a potential from the builtin catalog.

    Parameters
    ----------
    name : str
        One of ``gaussian``, ``scaled-gaussian`` (params ``[rho]``),
        ``gaussian-plus-quartic`` (params ``[eps]``), ``double-well`` (1-D only)
        or ``zero`` (generator Δ, no invariant measure).
    params : sequence of float
        Catalog parameters; arity must match the entry.
    dimension : int
        Ambient dimension, at least 1.
    """
    params = tuple(float(p) for p in params)
    if int(dimension) != dimension or dimension < 1:
        raise PotentialError(f"dimension must be a positive integer, got {dimension!r}")
    dimension = int(dimension)
    arity = {"gaussian": 0, "scaled-gaussian": 1, "gaussian-plus-quartic": 1, "double-well": 0, "zero": 0}
    if name not in arity:
        raise PotentialError(f"unknown potential {name!r}; known: {', '.join(BUILTIN_POTENTIALS)}")
    if len(params) != arity[name]:
        raise PotentialError(f"potential {name!r} takes {arity[name]} parameter(s), got {len(params)}")

    if name == "gaussian":
        return Potential(
            name, dimension, params,
            value_fn=lambda x: 0.5 * _sq(x),
            gradient_fn=lambda x: x.copy(),
            hessian_fn=_eye_like,
            curvature_bound=1.0,
        )
    if name == "scaled-gaussian":
        (rho,) = params
        if rho <= 0:
            raise PotentialError(f"scaled-gaussian needs rho > 0, got {rho}")
        return Potential(
            name, dimension, params,
            value_fn=lambda x: 0.5 * rho * _sq(x),
            gradient_fn=lambda x: rho * x,
            hessian_fn=lambda x: rho * _eye_like(x),
            curvature_bound=rho,
        )
    if name == "gaussian-plus-quartic":
        (eps,) = params
        if eps < 0:
            raise PotentialError(f"gaussian-plus-quartic needs eps >= 0, got {eps}")

        def hess(x):
            r2 = _sq(x)[..., None, None]
            outer = x[..., :, None] * x[..., None, :]
            return _eye_like(x) * (1.0 + 4.0 * eps * r2) + 8.0 * eps * outer

        # Hess(eps |x|^4) = eps (4|x|² I + 8 x xᵀ) is positive semidefinite.
        return Potential(
            name, dimension, params,
            value_fn=lambda x: 0.5 * _sq(x) + eps * _sq(x) ** 2,
            gradient_fn=lambda x: x * (1.0 + 4.0 * eps * _sq(x))[..., None],
            hessian_fn=hess,
            curvature_bound=1.0,
        )
    if name == "double-well":
        if dimension != 1:
            raise PotentialError("double-well is defined in dimension 1 only")
        return Potential(
            name, dimension, params,
            value_fn=lambda x: 0.25 * (x[..., 0] ** 2 - 1.0) ** 2,
            gradient_fn=lambda x: x ** 3 - x,
            hessian_fn=lambda x: (3.0 * x ** 2 - 1.0)[..., None],
            curvature_bound=None,
        )
    # zero potential
    return Potential(
        name, dimension, params,
        value_fn=lambda x: np.zeros(x.shape[:-1]),
        gradient_fn=lambda x: np.zeros_like(x),
        hessian_fn=lambda x: np.zeros(x.shape[:-1] + (x.shape[-1], x.shape[-1])),
        curvature_bound=0.0,
        normalizable=False,
    )


def potential_from_config(spec: dict) -> Potential:
    """Build a potential from ``{"name": ..., "params": [...], "dimension": k}``."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise PotentialError(f"potential config needs a 'name' key, got {spec!r}")
    return make_builtin_potential(spec["name"], spec.get("params", []), spec.get("dimension", 1))


def _box_points(box, resolution) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box.reshape(1, 2)
    if box.shape[-1] != 2 or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError(f"box must be a list of (low, high) pairs with low < high, got {box.tolist()}")
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (box.shape[0],))
    if np.any(res < 2):
        raise ValueError("resolution must be at least 2 per axis")
    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(box, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def min_curvature(p: Potential, box, resolution=101) -> float:
    """Smallest eigenvalue of ``Hess psi`` over a tensor grid on ``box``.

    This is a domain-restricted estimate of the best ``rho`` with
    ``Hess psi >= rho Id``; it certifies nothing outside the box.
    """
    pts = _box_points(box, resolution)
    if pts.shape[-1] != p.dimension:
        raise ValueError(f"box has {pts.shape[-1]} axes, potential has dimension {p.dimension}")
    return float(np.min(np.linalg.eigvalsh(p.hessian(pts))))


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and positive normalized weights representing a probability measure.

    ``measure`` is ``"gamma"`` for the raw Gauss-Hermite grid and
    ``"mu:<label>"`` after reweighting by :func:`mu_grid`.
    """

    dimension: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    order: int
    measure: str = "gamma"

    def __len__(self) -> int:
        return len(self.weights)


def default_order(dimension: int) -> int:
    if dimension not in _DEFAULT_ORDER:
        raise ValueError(f"quadrature supports dimensions 1..{MAX_QUADRATURE_DIM}, got {dimension}")
    return _DEFAULT_ORDER[dimension]


def gauss_hermite_grid(dimension: int, order: int | None = None) -> QuadratureGrid:
    """Tensor Gauss-Hermite grid for integration against the standard Gaussian."""
    if not 1 <= dimension <= MAX_QUADRATURE_DIM:
        raise ValueError(f"quadrature supports dimensions 1..{MAX_QUADRATURE_DIM}, got {dimension}")
    if order is None:
        order = default_order(dimension)
    if order < 2:
        raise ValueError(f"quadrature order must be at least 2, got {order}")
    x, w = hermegauss(order)  # weight exp(-x²/2)
    w = w / w.sum()
    mesh = np.meshgrid(*([x] * dimension), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*([w] * dimension), indexing="ij")
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    weights = weights / weights.sum()
    return QuadratureGrid(dimension, nodes, weights, order)


def _evaluate(g, points: np.ndarray) -> np.ndarray:
    vals = g.value(points) if hasattr(g, "value") else g(points)
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 0:
        vals = np.full(points.shape[0], float(vals))
    return vals


def integrate(grid: QuadratureGrid, g) -> float:
    """Weighted sum of ``g`` over the grid nodes.

    ``g`` is a :class:`~logsob.fields.ScalarField` or a vectorized callable
    mapping ``(m, n)`` points to ``(m,)`` values.
    """
    vals = _evaluate(g, grid.nodes)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        node = grid.nodes[np.argmax(bad)]
        raise IntegrationError(f"non-finite integrand at node {node.tolist()}")
    return float(np.dot(grid.weights, vals))


def _support_1d(p: Potential, drop: float = 120.0) -> tuple[float, float, float]:
    """Interval outside which ``exp(-(psi - min psi))`` is below ``e^{-drop}``."""
    half = 1.0
    while True:
        xs = np.linspace(-half, half, 4001)[:, None]
        v = p.value(xs)
        vmin = float(np.min(v))
        if min(v[0], v[-1]) - vmin > drop:
            return -half, half, vmin
        half *= 1.5
        if half > 1e6:
            raise IntegrationError(f"exp(-psi) for {p.label} does not decay; no quadrature for mu_psi")


def _gauss_rule_1d(p: Potential, order: int, panels: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule for the weight ``exp(-psi)`` via Lanczos on a fine discretization.

    The fine measure is composite Gauss-Legendre on the effective support;
    the Lanczos recurrence (with full reorthogonalization) gives the Jacobi
    matrix and Golub-Welsch gives nodes and weights.
    """
    lo, hi, vmin = _support_1d(p)
    gx, gw = leggauss(20)
    edges = np.linspace(lo, hi, panels + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * gx).ravel()
    w = (half[:, None] * gw).ravel() * np.exp(-(p.value(x[:, None]) - vmin))
    keep = w > 0
    x, w = x[keep], w[keep] / w[keep].sum()
    if order > x.size // 4:
        raise IntegrationError(f"quadrature order {order} too high for the fine discretization")
    q = np.empty((order, x.size))
    a = np.empty(order)
    b = np.zeros(order)
    q[0] = 1.0
    for k in range(order):
        a[k] = np.dot(w, x * q[k] ** 2)
        if k + 1 == order:
            break
        r = (x - a[k]) * q[k] - (b[k] * q[k - 1] if k else 0.0)
        for _ in range(2):
            r -= (q[: k + 1] @ (w * r)) @ q[: k + 1]
        b[k + 1] = np.sqrt(np.dot(w, r * r))
        q[k + 1] = r / b[k + 1]
    nodes, vecs = eigh_tridiagonal(a, b[1:])
    weights = vecs[0] ** 2
    return nodes, weights / weights.sum()


def _reweighted(p: Potential, grid: QuadratureGrid) -> QuadratureGrid:
    with np.errstate(over="ignore"):
        log_ratio = -p.value(grid.nodes) + 0.5 * _sq(grid.nodes)
        shift = np.max(log_ratio)
        ratio = np.exp(log_ratio - shift)
    if not np.isfinite(shift) or not np.all(np.isfinite(ratio)):
        raise IntegrationError(
            f"reweighting overflow for potential {p.label}: potential grows slower than Gaussian at grid extremes"
        )
    w = grid.weights * ratio
    # Nodes whose weight underflows to zero carry no mass; keep the rest positive.
    keep = w > 0
    w = w[keep] / w[keep].sum()
    return QuadratureGrid(grid.dimension, grid.nodes[keep], w, grid.order, f"mu:{p.label}")


def mu_grid(p: Potential, grid: QuadratureGrid) -> QuadratureGrid:
    """Quadrature for ``mu_psi`` with the order of a Gaussian grid.

    Quadratic potentials rescale the Gauss-Hermite nodes (exact). Other
    1-D potentials get a Gauss rule for ``exp(-psi)`` of the same order, so
    polynomials up to degree ``2 order - 1`` integrate exactly. In higher
    dimensions the Gaussian weights are multiplied by ``exp(-psi + |x|²/2)``
    and renormalized; accuracy then depends on how far ``mu_psi`` is from
    ``gamma``.
    """
    p.require_measure()
    if grid.measure != "gamma":
        raise ValueError(f"can only convert a gamma grid, got {grid.measure!r}")
    if p.dimension != grid.dimension:
        raise ValueError("potential and grid dimensions differ")
    label = f"mu:{p.label}"
    if p.name == "gaussian":
        return QuadratureGrid(grid.dimension, grid.nodes, grid.weights, grid.order, label)
    if p.name == "scaled-gaussian":
        (rho,) = p.params
        return QuadratureGrid(grid.dimension, grid.nodes / np.sqrt(rho), grid.weights, grid.order, label)
    if p.dimension == 1:
        nodes, weights = _gauss_rule_1d(p, grid.order)
        return QuadratureGrid(1, nodes[:, None], weights, grid.order, label)
    return _reweighted(p, grid)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """A seeded point cloud standing in for a probability measure."""

    dimension: int
    points: np.ndarray = field(repr=False)
    seed: int
    source: dict

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(self.dimension)])
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, seed: int = 0, source: dict | None = None) -> "EmpiricalMeasure":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
        pts = np.asarray(rows, dtype=float).reshape(-1, len(header))
        return cls(len(header), pts, seed, source or {"kind": "csv"})


def integrate_mu(p: Potential, backend, g) -> float:
    """Estimate ``∫ g dmu_psi`` by reweighted quadrature or by a sample average."""
    p.require_measure()
    if isinstance(backend, QuadratureGrid):
        grid = mu_grid(p, backend) if backend.measure == "gamma" else backend
        return integrate(grid, g)
    if isinstance(backend, EmpiricalMeasure):
        if backend.source.get("potential") not in (None, p.label):
            raise ValueError(f"samples come from {backend.source.get('potential')!r}, not {p.label!r}")
        vals = _evaluate(g, backend.points)
        if not np.all(np.isfinite(vals)):
            raise IntegrationError("non-finite integrand on samples")
        return float(np.mean(vals))
    raise TypeError(f"unsupported integration backend {type(backend).__name__}")


def _langevin(
    grad: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    rng: np.random.Generator,
    step: float,
    burn_in: int,
    draws: int,
    thin: int,
) -> np.ndarray:
    """Unadjusted Langevin chains ``X += -∇psi(X) h + sqrt(2h) ξ``; returns ``(draws, chains, n)``."""
    x = x0.copy()
    noise = np.sqrt(2.0 * step)
    out = np.empty((draws,) + x.shape)
    total = burn_in + draws * thin
    kept = 0
    for k in range(1, total + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            x = x - step * grad(x) + noise * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise SamplingError(f"Langevin trajectory diverged at step {k}", step=k)
        if k > burn_in and (k - burn_in) % thin == 0:
            out[kept] = x
            kept += 1
    return out


def sample_measure(
    p: Potential,
    count: int,
    seed: int,
    *,
    step: float = LANGEVIN_STEP,
    burn_in: int = LANGEVIN_BURN_IN,
    thin: int = LANGEVIN_THIN,
    chains: int | None = None,
    gradient: Callable[[np.ndarray], np.ndarray] | None = None,
    label: str | None = None,
) -> EmpiricalMeasure:
    """Draw ``count`` points from ``mu_psi``.

    The Gaussian potential is sampled directly. Anything else runs ``chains``
    parallel unadjusted Langevin chains (default: one chain per point, so
    draws are independent), each burned in for ``burn_in`` steps and then
    thinned every ``thin`` steps. ``gradient`` overrides ``∇psi`` to sample a
    tilted measure; ``label`` then names the target.
    """
    p.require_measure()
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    rng = np.random.default_rng(seed)
    n = p.dimension
    target = label or p.label
    if p.name == "gaussian" and gradient is None:
        pts = rng.standard_normal((count, n))
        return EmpiricalMeasure(n, pts, seed, {"kind": "direct-gaussian", "potential": target})

    chains = count if chains is None else max(1, min(int(chains), count))
    draws = -(-count // chains)
    grad = gradient or p.gradient
    x0 = rng.standard_normal((chains, n))
    samples = _langevin(grad, x0, rng, step, burn_in, draws, thin)
    pts = samples.reshape(-1, n)[:count]
    source = {
        "kind": "langevin",
        "potential": target,
        "step": step,
        "burn_in": burn_in,
        "thin": thin,
        "chains": chains,
    }
    return EmpiricalMeasure(n, pts, seed, source)
