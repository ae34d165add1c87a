"""Diffusion semigroups: the Mehler formula, Euler-Maruyama evolution and the generator.

For the Gaussian potential the Ornstein-Uhlenbeck semigroup is evaluated
exactly (up to quadrature) through::

    P_t f(x) = ∫ f(e^{-t} x + sqrt(1 - e^{-2t}) y) dgamma(y)

For a general potential ``psi``, ``P_t f(x) = E_x f(X_t)`` where
``dX = sqrt(2) dB - ∇psi(X) dt`` is simulated by Euler-Maruyama.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from ._stats import weighted_entropy, weighted_fisher, weighted_variance
from .fields import PositivityError, ScalarField
from .potentials import Potential, PotentialError, QuadratureGrid, SamplingError, gauss_hermite_grid, mu_grid

__all__ = [
    "EvolutionTrace",
    "SDEEstimate",
    "mehler_apply",
    "mehler_field",
    "sde_evolve",
    "simulate_paths",
    "generator_apply",
    "evolve_trace",
    "tabulate_field",
    "PATH_BLOCK",
]

# Paths are simulated in blocks; block b draws its noise from SeedSequence([seed, b]).
PATH_BLOCK = 4096


def _points(x, n: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    return x.reshape(-1, n), single


_CHUNK = 2_000_000  # integrand samples per block


def _mehler_integral(fn, t: float, x: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    a = math.exp(-t)
    s = math.sqrt(-math.expm1(-2.0 * t))
    step = max(1, _CHUNK // len(grid))
    out = []
    for i in range(0, x.shape[0], step):
        pts = a * x[i:i + step, None, :] + s * grid.nodes[None, :, :]
        vals = fn(pts)
        if not np.all(np.isfinite(vals)):
            raise ArithmeticError(f"non-finite Mehler integrand at t={t}")
        # vals has shape (m, q, ...); contract the node axis.
        out.append(np.einsum("mq...,q->m...", vals, grid.weights))
    if not out:
        return np.einsum("mq...,q->m...", fn(np.zeros((0, len(grid), x.shape[-1]))), grid.weights)
    return np.concatenate(out, axis=0)


def mehler_apply(f: ScalarField, t: float, x, grid: QuadratureGrid | None = None):
    """Evaluate ``P_t f(x)`` for the Ornstein-Uhlenbeck semigroup.

    ``x`` is a single point (returns a float) or a ``(m, n)`` batch. At
    ``t = 0`` the field is evaluated directly.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    grid = grid or gauss_hermite_grid(f.dimension)
    if grid.dimension != f.dimension:
        raise ValueError("field and grid dimensions differ")
    pts, single = _points(x, f.dimension)
    if t == 0:
        out = f.value(pts)
    else:
        out = _mehler_integral(f.value, t, pts, grid)
    return float(out[0]) if single else out


def mehler_field(f: ScalarField, t: float, grid: QuadratureGrid | None = None) -> ScalarField:
    """``P_t f`` as a field.

    Derivatives are taken under the integral sign, so the gradient is
    ``e^{-t}`` times the Mehler average of ``∇f`` and the Hessian
    ``e^{-2t}`` times that of ``Hess f``.
    """
    grid = grid or gauss_hermite_grid(f.dimension)
    if t == 0:
        return f
    a = math.exp(-t)

    def value(x):
        pts = x.reshape(-1, f.dimension)
        return _mehler_integral(f.value, t, pts, grid).reshape(x.shape[:-1])

    def gradient(x):
        pts = x.reshape(-1, f.dimension)
        return a * _mehler_integral(f.gradient, t, pts, grid).reshape(x.shape)

    def hessian(x):
        pts = x.reshape(-1, f.dimension)
        n = f.dimension
        return a * a * _mehler_integral(f.hessian, t, pts, grid).reshape(x.shape + (n,))

    return ScalarField(f"P[{t:g}]{f.name}", f.dimension, value, gradient, hessian, positive=f.positive)


def generator_apply(p: Potential, f: ScalarField, x):
    """``L f(x) = Δf(x) - ∇psi(x)·∇f(x)``."""
    pts, single = _points(x, f.dimension)
    out = f.laplacian(pts) - np.sum(p.gradient(pts) * f.gradient(pts), axis=-1)
    return float(out[0]) if single else out


def _segments(times: Sequence[float], step: float) -> list[tuple[int, float]]:
    """Split the intervals between consecutive times into equal sub-steps no longer than ``step``."""
    out = []
    prev = 0.0
    for t in times:
        dt = t - prev
        if dt <= 0:
            out.append((0, 0.0))
        else:
            k = max(1, int(math.ceil(dt / step - 1e-9)))
            out.append((k, dt / k))
        prev = t
    return out


def simulate_paths(
    p: Potential,
    starts,
    times: Sequence[float],
    paths: int,
    step: float,
    seed: int,
    method: str = "euler",
) -> np.ndarray:
    """Simulate ``dX = sqrt(2) dB - ∇psi(X) dt`` from each start with shared noise.

    Returns an array of shape ``(len(times), k, paths, n)`` for ``k`` starts.
    Every start sees the same Brownian increments, so differences between
    nearby starts are pathwise derivatives rather than noise. With
    ``method="exact"`` (Gaussian potential only) the exact Ornstein-Uhlenbeck
    transition is sampled between requested times.
    """
    if paths < 1:
        raise ValueError(f"paths must be at least 1, got {paths}")
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be non-negative and non-decreasing")
    if method not in ("euler", "exact"):
        raise ValueError(f"unknown SDE method {method!r}")
    if method == "exact" and p.name != "gaussian":
        raise PotentialError("exact transitions are only available for the gaussian potential")
    n = p.dimension
    x0 = np.asarray(starts, dtype=float).reshape(-1, n)
    k = x0.shape[0]
    out = np.empty((len(times), k, paths, n))
    segs = _segments(times, step)
    for b, lo in enumerate(range(0, paths, PATH_BLOCK)):
        size = min(PATH_BLOCK, paths - lo)
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        x = np.broadcast_to(x0[:, None, :], (k, size, n)).copy()
        done = 0
        for j, (nsteps, h) in enumerate(segs):
            if method == "exact" and nsteps:
                dt = nsteps * h
                xi = rng.standard_normal((size, n))
                x = math.exp(-dt) * x + math.sqrt(-math.expm1(-2.0 * dt)) * xi
            else:
                root = math.sqrt(2.0 * h)
                for _ in range(nsteps):
                    xi = rng.standard_normal((size, n))
                    x = x - h * p.gradient(x) + root * xi
                    done += 1
                    if not np.all(np.isfinite(x)):
                        raise SamplingError(f"SDE trajectory diverged at step {done}", step=done)
            out[j, :, lo:lo + size] = x
    return out


@dataclass(frozen=True)
class SDEEstimate:
    estimate: float
    stderr: float
    paths: int
    step: float
    seed: int


def sde_evolve(
    p: Potential,
    f: ScalarField,
    t: float,
    x0,
    paths: int,
    step: float,
    seed: int,
    method: str = "euler",
) -> SDEEstimate:
    """Monte-Carlo estimate of ``P_t f(x0) = E f(X_t)`` with its standard error."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    x0 = np.asarray(x0, dtype=float).reshape(f.dimension)
    if t == 0:
        return SDEEstimate(float(f.value(x0)), 0.0, paths, step, seed)
    xt = simulate_paths(p, x0, [t], paths, step, seed, method)[0, 0]
    vals = f.value(xt)
    se = float(np.std(vals, ddof=1) / math.sqrt(paths)) if paths > 1 else float("nan")
    return SDEEstimate(float(np.mean(vals)), se, paths, step, seed)


def tabulate_field(g, axes: Sequence[np.ndarray], name: str = "tabulated", positive: bool = False) -> ScalarField:
    """Cubic-spline interpolant of ``g`` on a 1-D or 2-D tensor grid.

    ``g`` is a field or a vectorized callable; derivatives come from the
    spline. Used to compose numerical semigroup evaluations.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) == 1:
        (ax,) = axes
        vals = g.value(ax[:, None]) if isinstance(g, ScalarField) else np.asarray(g(ax[:, None]))
        spl = CubicSpline(ax, vals)
        d1, d2 = spl.derivative(1), spl.derivative(2)
        return ScalarField(
            name, 1,
            lambda x: spl(x[..., 0]),
            lambda x: d1(x[..., 0])[..., None],
            lambda x: d2(x[..., 0])[..., None, None],
            positive=positive,
        )
    if len(axes) == 2:
        ax, ay = axes
        mesh = np.stack(np.meshgrid(ax, ay, indexing="ij"), axis=-1)
        vals = g.value(mesh) if isinstance(g, ScalarField) else np.asarray(g(mesh))
        spl = RectBivariateSpline(ax, ay, vals, kx=3, ky=3, s=0)

        def ev(x, dx=0, dy=0):
            return spl.ev(x[..., 0], x[..., 1], dx=dx, dy=dy)

        def hess(x):
            hxx, hxy, hyy = ev(x, 2, 0), ev(x, 1, 1), ev(x, 0, 2)
            return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

        return ScalarField(
            name, 2,
            lambda x: ev(x),
            lambda x: np.stack([ev(x, 1, 0), ev(x, 0, 1)], axis=-1),
            hess,
            positive=positive,
        )
    raise ValueError("tabulated fields support 1-D and 2-D grids only")


@dataclass
class EvolutionTrace:
    """Time-indexed record of ``P_t f`` and its functionals under the invariant measure."""

    times: np.ndarray
    evaluation_points: np.ndarray
    values: np.ndarray  # (len(times), len(evaluation_points))
    variance: np.ndarray
    entropy: np.ndarray | None
    fisher: np.ndarray | None
    method: dict
    field: str
    potential: str
    stderr: np.ndarray | None = field(default=None, repr=False)

    def series(self, functional: str) -> np.ndarray:
        s = {"variance": self.variance, "entropy": self.entropy, "fisher": self.fisher}.get(functional)
        if s is None:
            raise ValueError(f"trace has no {functional!r} record")
        return s

    def to_csv(self, path) -> Path:
        """Write the CSV table and a JSON sidecar next to it; returns the sidecar path."""
        path = Path(path)
        npts = self.evaluation_points.shape[0]
        header = ["time", "variance", "entropy", "fisher"] + [f"p{i}" for i in range(npts)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, t in enumerate(self.times):
                row = [t, self.variance[i],
                       "" if self.entropy is None else self.entropy[i],
                       "" if self.fisher is None else self.fisher[i]]
                row += list(self.values[i])
                writer.writerow([v if v == "" else repr(float(v)) for v in row])
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return sidecar

    def metadata(self) -> dict:
        return {
            "method": self.method,
            "field": self.field,
            "potential": self.potential,
            "evaluation_points": self.evaluation_points.tolist(),
            "columns": {f"p{i}": pt for i, pt in enumerate(self.evaluation_points.tolist())},
        }


def _want(functionals, f: ScalarField) -> tuple[bool, bool]:
    if functionals is None:
        return f.positive, f.positive
    want_ent = "entropy" in functionals
    want_fis = "fisher" in functionals
    if (want_ent or want_fis) and not f.positive:
        raise PositivityError(f"entropy/Fisher information need a strictly positive field, {f.name!r} is unrestricted")
    return want_ent, want_fis


def evolve_trace(
    p: Potential,
    f: ScalarField,
    times: Sequence[float],
    method: str = "mehler",
    evaluation_points=None,
    grid: QuadratureGrid | None = None,
    *,
    functionals: Sequence[str] | None = None,
    paths: int = 2000,
    step: float = 1e-3,
    seed: int = 0,
    fd_step: float = 1e-4,
) -> EvolutionTrace:
    """Tabulate ``P_t f`` and its variance, entropy and Fisher information over ``times``.

    ``method`` is ``"mehler"`` (Gaussian only, deterministic), ``"sde"``
    (Euler-Maruyama) or ``"exact"`` (sampled exact Ornstein-Uhlenbeck
    transitions). The stochastic methods estimate ``P_t f`` at every node of
    the invariant-measure quadrature; gradients come from common-noise
    central differences in the starting point with spacing ``fd_step``.
    ``functionals`` defaults to variance plus entropy/Fisher when ``f`` is
    strictly positive; asking for entropy of an unrestricted field raises.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing and start at 0")
    n = f.dimension
    if p.dimension != n:
        raise ValueError("potential and field dimensions differ")
    want_ent, want_fis = _want(functionals, f)
    grid = grid or gauss_hermite_grid(n)
    measure = mu_grid(p, grid)
    w, nodes = measure.weights, measure.nodes
    evals = np.zeros((0, n)) if evaluation_points is None else np.asarray(evaluation_points, dtype=float).reshape(-1, n)

    nt = times.size
    values = np.empty((nt, evals.shape[0]))
    stderr = None
    var = np.empty(nt)
    ent = np.empty(nt) if want_ent else None
    fis = np.empty(nt) if want_fis else None

    if method == "mehler":
        if p.name != "gaussian":
            raise PotentialError("the Mehler formula applies to the gaussian potential only")
        info = {"kind": "mehler", "order": grid.order}
        for i, t in enumerate(times):
            g = mehler_field(f, t, grid)
            values[i] = g.value(evals) if evals.size else values[i]
            v = g.value(nodes)
            var[i] = weighted_variance(w, v)
            if want_ent:
                ent[i] = weighted_entropy(w, v)
            if want_fis:
                fis[i] = weighted_fisher(w, v, g.gradient(nodes))
    elif method in ("sde", "exact"):
        sde_method = "euler" if method == "sde" else "exact"
        info = {"kind": method, "paths": paths, "step": step, "seed": seed, "fd_step": fd_step, "order": grid.order}
        q = nodes.shape[0]
        shifts = [np.zeros(n)]
        for j in range(n):
            e = np.zeros(n)
            e[j] = fd_step
            shifts += [e, -e]
        starts = np.concatenate([nodes + s for s in shifts] + [evals], axis=0)
        xt = simulate_paths(p, starts, times, paths, step, seed, sde_method)
        fx = f.value(xt)  # (nt, k, paths)
        means = fx.mean(axis=-1)
        means[0] = f.value(starts)  # P_0 = Id exactly
        stderr = fx[:, len(shifts) * q:].std(axis=-1, ddof=1) / math.sqrt(paths) if paths > 1 else None
        for i in range(nt):
            v = means[i, :q]
            grad = np.stack(
                [(means[i, (1 + 2 * j) * q:(2 + 2 * j) * q] - means[i, (2 + 2 * j) * q:(3 + 2 * j) * q]) / (2 * fd_step)
                 for j in range(n)], axis=-1)
            values[i] = means[i, len(shifts) * q:]
            var[i] = weighted_variance(w, v)
            if want_ent:
                ent[i] = weighted_entropy(w, v)
            if want_fis:
                fis[i] = weighted_fisher(w, v, grad)
    else:
        raise ValueError(f"unknown evolution method {method!r}")
    return EvolutionTrace(times, evals, values, var, ent, fis, info, f.name, p.label, stderr)
