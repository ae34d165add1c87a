"""Smooth test functions with derivative oracles.

A :class:`ScalarField` carries a vectorized value map and, when available,
closed-form gradient and Hessian maps; missing derivatives fall back to
central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ScalarField",
    "FieldError",
    "PositivityError",
    "builtin_field",
    "field_from_config",
    "fd_gradient",
    "fd_hessian",
    "default_step",
    "product",
    "compose",
    "log_field",
    "BUILTIN_FIELDS",
]

BUILTIN_FIELDS = (
    "constant",
    "linear",
    "quadratic",
    "exponential",
    "gauss-bump",
    "shifted-density",
    "shifted-mixture",
)

_EPS = np.finfo(float).eps


class FieldError(ValueError):
    """Invalid field specification."""


class PositivityError(ValueError):
    """A field required to be strictly positive is not."""


def default_step(x: np.ndarray, power: float = 1.0 / 3.0) -> np.ndarray:
    """Per-coordinate step ``eps**power * (1 + |x_i|)``."""
    return _EPS ** power * (1.0 + np.abs(x))


def _call(f, x: np.ndarray) -> np.ndarray:
    return f.value(x) if isinstance(f, ScalarField) else np.asarray(f(x), dtype=float)


def _check_finite(vals: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(vals)):
        raise ArithmeticError(f"non-finite samples while differencing {what}")
    return vals


def fd_gradient(f, x, h=None, accuracy: int = 2) -> np.ndarray:
    """Central-difference gradient of a field or vectorized callable.

    ``x`` has shape ``(..., n)``; ``h`` is a scalar or per-coordinate step.
    ``accuracy`` selects the 3-point (2) or 5-point (4) stencil; the default
    step is ``eps**(1/3)`` resp. ``eps**(1/5)`` scaled by ``1 + |x_i|``.
    """
    x = np.asarray(x, dtype=float)
    if accuracy not in (2, 4):
        raise ValueError(f"accuracy must be 2 or 4, got {accuracy}")
    if h is None:
        h = default_step(x, 1.0 / 3.0 if accuracy == 2 else 0.2)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    if np.any(h <= 0):
        raise ValueError("finite-difference step must be positive")
    n = x.shape[-1]
    grad = np.empty(x.shape)
    for i in range(n):
        e = np.zeros(x.shape)
        e[..., i] = h[..., i]
        fp = _check_finite(_call(f, x + e), "value")
        fm = _check_finite(_call(f, x - e), "value")
        if accuracy == 2:
            grad[..., i] = (fp - fm) / (2.0 * h[..., i])
        else:
            fp2 = _check_finite(_call(f, x + 2 * e), "value")
            fm2 = _check_finite(_call(f, x - 2 * e), "value")
            grad[..., i] = (8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * h[..., i])
    return grad


def _fd_jacobian(g: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: np.ndarray, accuracy: int = 2) -> np.ndarray:
    n = x.shape[-1]
    jac = np.empty(x.shape + (n,))
    for j in range(n):
        e = np.zeros(x.shape)
        e[..., j] = h[..., j]
        gp = _check_finite(g(x + e), "gradient")
        gm = _check_finite(g(x - e), "gradient")
        if accuracy == 2:
            jac[..., :, j] = (gp - gm) / (2.0 * h[..., j, None])
        else:
            gp2 = _check_finite(g(x + 2 * e), "gradient")
            gm2 = _check_finite(g(x - 2 * e), "gradient")
            jac[..., :, j] = (8.0 * (gp - gm) - (gp2 - gm2)) / (12.0 * h[..., j, None])
    return jac


def fd_hessian(f, x, h=None) -> np.ndarray:
    """Central-difference Hessian, symmetrized as ``(H + Hᵀ)/2``.

    Differences the closed-form gradient when ``f`` has one; otherwise uses
    second differences of the value with a fourth-root step.
    """
    x = np.asarray(x, dtype=float)
    has_grad = isinstance(f, ScalarField) and f.gradient_fn is not None
    if h is None:
        h = default_step(x) if has_grad else default_step(x, 0.25)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    if np.any(h <= 0):
        raise ValueError("finite-difference step must be positive")
    # Representable steps: x + h - x == h exactly.
    h = (x + h) - x
    if has_grad:
        hess = _fd_jacobian(f.gradient, x, h)
    else:
        n = x.shape[-1]
        hess = np.empty(x.shape + (n,))
        f0 = _check_finite(_call(f, x), "value")
        for i in range(n):
            ei = np.zeros(x.shape)
            ei[..., i] = h[..., i]
            for j in range(i, n):
                if i == j:
                    fp = _call(f, x + ei)
                    fm = _call(f, x - ei)
                    val = (fp - 2.0 * f0 + fm) / h[..., i] ** 2
                else:
                    ej = np.zeros(x.shape)
                    ej[..., j] = h[..., j]
                    val = (
                        _call(f, x + ei + ej) - _call(f, x + ei - ej)
                        - _call(f, x - ei + ej) + _call(f, x - ei - ej)
                    ) / (4.0 * h[..., i] * h[..., j])
                _check_finite(val, "value")
                hess[..., i, j] = val
                hess[..., j, i] = val
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


@dataclass(frozen=True)
class ScalarField:
    """A smooth function ``f: R^n -> R`` with optional closed-form derivatives."""

    name: str
    dimension: int
    value_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    gradient_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    hessian_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    positive: bool = False
    params: tuple[float, ...] = ()

    @property
    def positivity(self) -> str:
        return "strictly-positive" if self.positive else "unrestricted"

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.dimension:
            raise ValueError(f"field {self.name!r} has dimension {self.dimension}, got points of shape {x.shape}")
        return x

    def value(self, x) -> np.ndarray:
        x = self._points(x)
        vals = np.asarray(self.value_fn(x), dtype=float)
        vals = np.broadcast_to(vals, x.shape[:-1]).copy() if vals.shape != x.shape[:-1] else vals
        if self.positive and np.any(vals <= 0):
            bad = np.argmax((vals <= 0).ravel())
            raise PositivityError(
                f"field {self.name!r} declared strictly positive but is {vals.ravel()[bad]:g} "
                f"at {x.reshape(-1, self.dimension)[bad].tolist()}"
            )
        return vals

    def gradient(self, x) -> np.ndarray:
        x = self._points(x)
        if self.gradient_fn is None:
            return fd_gradient(self, x)
        return np.broadcast_to(self.gradient_fn(x), x.shape).copy()

    def hessian(self, x) -> np.ndarray:
        x = self._points(x)
        if self.hessian_fn is None:
            return fd_hessian(self, x)
        n = self.dimension
        return np.broadcast_to(self.hessian_fn(x), x.shape[:-1] + (n, n)).copy()

    def laplacian(self, x) -> np.ndarray:
        return np.trace(self.hessian(x), axis1=-2, axis2=-1)

    def require_positive(self) -> None:
        if not self.positive:
            raise PositivityError(f"field {self.name!r} is not declared strictly positive")

    def with_name(self, name: str) -> "ScalarField":
        return ScalarField(name, self.dimension, self.value_fn, self.gradient_fn, self.hessian_fn,
                           self.positive, self.params)

    def scaled(self, a: float) -> "ScalarField":
        """The field ``a * f``; positivity survives only for ``a > 0``."""
        g, h = self.gradient_fn, self.hessian_fn
        return ScalarField(
            f"{a:g}*{self.name}",
            self.dimension,
            lambda x: a * self.value_fn(x),
            (lambda x: a * g(x)) if g is not None else None,
            (lambda x: a * h(x)) if h is not None else None,
            positive=self.positive and a > 0,
        )

    def to_config(self) -> dict:
        return {"name": self.name, "params": list(self.params)}


def _vec(params: Sequence[float], dimension: int | None, what: str) -> np.ndarray:
    c = np.asarray(params, dtype=float).ravel()
    if c.size == 0:
        raise FieldError(f"{what} needs at least one coefficient")
    if dimension is not None and c.size != dimension:
        raise FieldError(f"{what} has {c.size} coefficient(s) but dimension is {dimension}")
    return c


def builtin_field(name: str, params: Sequence[float] = (), dimension: int | None = None) -> ScalarField:
    """Build a closed-form field from the catalog.

    =================  ====================  =====================================
    name               params                f(x)
    =================  ====================  =====================================
    constant           ``[k]``               k (strictly positive when k > 0)
    linear             ``c`` (length n)      c·x
    quadratic          none                  |x|²
    exponential        ``c`` (length n)      exp(c·x)
    gauss-bump         ``[a]``, a > 0        exp(-a|x|²)
    shifted-density    ``m`` (length n)      exp(m·x - |m|²/2)
    shifted-mixture    ``[w, m1, m2]``       w·sd(m1) + (1-w)·sd(m2) (1-D)
    =================  ====================  =====================================

    Vector-parameter entries infer the dimension from ``params``; the others
    take ``dimension`` (default 1).
    """
    params = tuple(float(p) for p in params)
    if name not in BUILTIN_FIELDS:
        raise FieldError(f"unknown field {name!r}; known: {', '.join(BUILTIN_FIELDS)}")

    if name in ("constant", "quadratic", "gauss-bump"):
        n = 1 if dimension is None else int(dimension)
        if n < 1:
            raise FieldError(f"dimension must be positive, got {dimension}")
        want = {"constant": 1, "quadratic": 0, "gauss-bump": 1}[name]
        if len(params) != want:
            raise FieldError(f"field {name!r} takes {want} parameter(s), got {len(params)}")
        if name == "constant":
            (k,) = params
            return ScalarField(
                name, n,
                lambda x: np.full(x.shape[:-1], k),
                lambda x: np.zeros_like(x),
                lambda x: np.zeros(x.shape + (n,)),
                positive=k > 0, params=params,
            )
        if name == "quadratic":
            return ScalarField(
                name, n,
                lambda x: np.sum(x * x, axis=-1),
                lambda x: 2.0 * x,
                lambda x: 2.0 * np.broadcast_to(np.eye(n), x.shape + (n,)),
                params=params,
            )
        (a,) = params
        if a <= 0:
            raise FieldError(f"gauss-bump needs a > 0, got {a}")

        def bump(x):
            return np.exp(-a * np.sum(x * x, axis=-1))

        def bump_hess(x):
            outer = x[..., :, None] * x[..., None, :]
            return bump(x)[..., None, None] * (4.0 * a * a * outer - 2.0 * a * np.eye(n))

        return ScalarField(
            name, n, bump,
            lambda x: -2.0 * a * x * bump(x)[..., None],
            bump_hess,
            positive=True, params=params,
        )

    if name == "shifted-mixture":
        if len(params) != 3:
            raise FieldError("shifted-mixture takes parameters [w, m1, m2]")
        if dimension not in (None, 1):
            raise FieldError("shifted-mixture is 1-D only")
        w, m1, m2 = params
        if not 0.0 <= w <= 1.0:
            raise FieldError(f"mixture weight must lie in [0, 1], got {w}")
        a = builtin_field("shifted-density", [m1])
        b = builtin_field("shifted-density", [m2])
        return ScalarField(
            name, 1,
            lambda x: w * a.value_fn(x) + (1 - w) * b.value_fn(x),
            lambda x: w * a.gradient_fn(x) + (1 - w) * b.gradient_fn(x),
            lambda x: w * a.hessian_fn(x) + (1 - w) * b.hessian_fn(x),
            positive=True, params=params,
        )

    c = _vec(params, dimension, name)
    n = c.size
    outer = np.outer(c, c)
    if name == "linear":
        return ScalarField(
            name, n,
            lambda x: x @ c,
            lambda x: np.broadcast_to(c, x.shape).copy(),
            lambda x: np.zeros(x.shape + (n,)),
            params=params,
        )
    if name == "exponential":
        def expo(x):
            return np.exp(x @ c)

        return ScalarField(
            name, n, expo,
            lambda x: expo(x)[..., None] * c,
            lambda x: expo(x)[..., None, None] * outer,
            positive=True, params=params,
        )
    # shifted-density: density of N(m, I) with respect to gamma
    half = 0.5 * float(c @ c)

    def dens(x):
        return np.exp(x @ c - half)

    return ScalarField(
        name, n, dens,
        lambda x: dens(x)[..., None] * c,
        lambda x: dens(x)[..., None, None] * outer,
        positive=True, params=params,
    )


def field_from_config(spec: dict, dimension: int | None = None) -> ScalarField:
    """Build a field from ``{"name": ..., "params": [...]}``."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise FieldError(f"field config needs a 'name' key, got {spec!r}")
    return builtin_field(spec["name"], spec.get("params", []), spec.get("dimension", dimension))


def product(f: ScalarField, g: ScalarField) -> ScalarField:
    """The pointwise product ``f g`` with product-rule derivatives."""
    if f.dimension != g.dimension:
        raise ValueError("fields must share a dimension")

    def grad(x):
        return f.gradient(x) * g.value(x)[..., None] + g.gradient(x) * f.value(x)[..., None]

    def hess(x):
        fv, gv = f.value(x)[..., None, None], g.value(x)[..., None, None]
        df, dg = f.gradient(x), g.gradient(x)
        cross = df[..., :, None] * dg[..., None, :]
        return f.hessian(x) * gv + g.hessian(x) * fv + cross + np.swapaxes(cross, -1, -2)

    return ScalarField(
        f"({f.name})*({g.name})", f.dimension,
        lambda x: f.value(x) * g.value(x), grad, hess,
        positive=f.positive and g.positive,
    )


def compose(
    phi: Callable[[np.ndarray], np.ndarray],
    dphi: Callable[[np.ndarray], np.ndarray],
    d2phi: Callable[[np.ndarray], np.ndarray],
    f: ScalarField,
    name: str,
    positive: bool = False,
) -> ScalarField:
    """The field ``phi(f)`` given ``phi`` and its first two derivatives."""

    def grad(x):
        return dphi(f.value(x))[..., None] * f.gradient(x)

    def hess(x):
        u = f.value(x)
        df = f.gradient(x)
        return d2phi(u)[..., None, None] * (df[..., :, None] * df[..., None, :]) + dphi(u)[..., None, None] * f.hessian(x)

    return ScalarField(name, f.dimension, lambda x: phi(f.value(x)), grad, hess, positive=positive)


def log_field(f: ScalarField) -> ScalarField:
    """``log f`` for a strictly positive field."""
    f.require_positive()
    return compose(np.log, lambda u: 1.0 / u, lambda u: -1.0 / (u * u), f, f"log({f.name})")
