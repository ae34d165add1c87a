"""Batch command-line front end.

Every run is described by one JSON config (``--config``); command-line
flags override its keys. Each run writes ``report.json`` (deterministic,
sorted keys) plus CSV tables into ``--out``, and ``metadata.json`` with the
wall-clock details that would otherwise break byte-for-byte reproducibility.

Exit status: 0 when every verdict holds, 1 on a violation, 2 on a
configuration error, 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .fields import builtin_field, field_from_config
from .functionals import verify_decay, fit_decay_rate, verify_lsi, verify_poincare
from .gamma import check_cd
from .potentials import (
    EmpiricalMeasure,
    _box_points,
    gauss_hermite_grid,
    make_builtin_potential,
    min_curvature,
    potential_from_config,
    sample_measure,
)
from .semigroup import evolve_trace
from .suite import run_suite
from .transport import (
    TransportError,
    brenier_map_1d,
    brenier_w2,
    monge_ampere_residual_1d,
    otto_villani_check,
    tilted_gradient,
    verify_talagrand,
    w2_assignment,
    w2_sorted_1d,
)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
MONGE_AMPERE_TOLERANCE = 1e-6


class ConfigError(ValueError):
    """The run configuration is incomplete or inconsistent."""


# ---------------------------------------------------------------- config


def parse_spec(text: str) -> dict:
    """``"name"`` or ``"name:1,2"`` to ``{"name": ..., "params": [...]}``."""
    name, _, rest = text.partition(":")
    try:
        params = [float(v) for v in rest.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad parameter list in {text!r}") from exc
    return {"name": name.strip(), "params": params}


def _as_spec(value) -> dict:
    if isinstance(value, str):
        return parse_spec(value)
    if isinstance(value, dict):
        return dict(value)
    raise ConfigError(f"expected a name or a {{name, params}} object, got {value!r}")


def load_config(args: argparse.Namespace) -> dict:
    """Read ``--config`` and apply flag overrides."""
    cfg: dict = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    cfg["command"] = args.command
    if getattr(args, "kind", None):
        cfg["kind"] = args.kind
    skip = {"command", "kind", "config", "out", "handler"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            cfg[key] = value
    return cfg


def _potential(cfg: dict):
    spec = _as_spec(cfg.get("potential", "gaussian"))
    if "dimension" in cfg:
        spec["dimension"] = int(cfg["dimension"])
    return potential_from_config(spec)


def _fields(cfg: dict, dimension: int, default=None) -> list:
    raw = cfg.get("fields")
    if raw is None and "field" in cfg:
        raw = cfg["field"]
    if raw is None:
        raw = default
    if raw is None:
        raise ConfigError("no field given (use --field or the 'field' key)")
    if isinstance(raw, (str, dict)):
        raw = [raw]
    return [field_from_config(_as_spec(r), dimension) for r in raw]


def _field(cfg: dict, dimension: int):
    fs = _fields(cfg, dimension)
    if len(fs) != 1:
        raise ConfigError(f"this command takes one field, got {len(fs)}")
    return fs[0]


def _rho(cfg: dict, p) -> float:
    if "rho" in cfg:
        return float(cfg["rho"])
    if p.curvature_bound is not None and p.curvature_bound > 0:
        return float(p.curvature_bound)
    raise ConfigError(f"potential {p.label} has no positive curvature bound; pass --rho")


def _seed(cfg: dict) -> int:
    if "seed" not in cfg:
        raise ConfigError("this run is stochastic and needs a seed (--seed or the 'seed' key)")
    return int(cfg["seed"])


def _sampler(cfg: dict) -> dict:
    return {k: cfg[k] for k in ("step", "burn_in", "thin") if k in cfg}


def _backend(cfg: dict, p):
    kind = cfg.get("backend", "quadrature")
    if kind == "quadrature":
        return gauss_hermite_grid(p.dimension, cfg.get("order"))
    if kind == "samples":
        return sample_measure(p, int(cfg.get("samples", 10_000)), _seed(cfg), **_sampler(cfg))
    raise ConfigError(f"backend must be 'quadrature' or 'samples', got {kind!r}")


def _box(cfg: dict, dimension: int, default):
    box = cfg.get("box", [default] * dimension)
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if box.shape[0] != dimension:
        raise ConfigError(f"box has {box.shape[0]} axes, potential has dimension {dimension}")
    return box


def _grid(cfg: dict, default=(-6.0, 6.0, 4001)) -> np.ndarray:
    g = cfg.get("grid", {})
    if isinstance(g, list):
        return np.asarray(g, dtype=float)
    lo, hi, count = g.get("lo", default[0]), g.get("hi", default[1]), g.get("count", default[2])
    return np.linspace(float(lo), float(hi), int(count))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _report_rows(reports):
    return [[r.kind, r.inputs.get("field", ""), r.lhs, r.rhs, r.constant, r.slack, r.tolerance, r.verdict]
            for r in reports]


_REPORT_HEADER = ["kind", "field", "lhs", "rhs", "constant", "slack", "tolerance", "verdict"]


# ---------------------------------------------------------------- commands


def cmd_curvature(cfg: dict, out: Path):
    p = _potential(cfg)
    box = _box(cfg, p.dimension, [-5.0, 5.0])
    res = cfg.get("resolution", 101 if p.dimension == 1 else 41)
    rho = min_curvature(p, box.tolist(), res)
    result = {"potential": p.label, "min_curvature": rho, "box": box.tolist(), "resolution": res,
              "certified_bound": p.curvature_bound}
    _write_csv(out / "curvature.csv", ["potential", "min_curvature"], [[p.label, rho]])
    return result, True


def cmd_verify(cfg: dict, out: Path):
    kind = cfg.get("kind")
    p = _potential(cfg)
    if kind in ("poincare", "lsi"):
        rho = _rho(cfg, p)
        backend = _backend(cfg, p)
        fn = verify_poincare if kind == "poincare" else verify_lsi
        reports = [fn(p, rho, f, backend, cfg.get("tolerance")) for f in _fields(cfg, p.dimension)]
    elif kind == "talagrand":
        rho = _rho(cfg, p)
        seed = _seed(cfg)
        reports = [verify_talagrand(p, rho, f, int(cfg.get("samples", 10_000)), seed,
                                    tolerance=cfg.get("tolerance"), sampler=_sampler(cfg))
                   for f in _fields(cfg, p.dimension)]
    elif kind == "otto-villani":
        reports = otto_villani_check(
            p, _fields(cfg, p.dimension, default=[]), int(cfg.get("samples", 10_000)), _seed(cfg),
            lsi_constant=cfg.get("lsi_constant"), rho_free=bool(cfg.get("rho_free", False)),
            tolerance=cfg.get("tolerance"), sampler=_sampler(cfg),
        )
    elif kind == "cd":
        return _verify_cd(cfg, p, out)
    else:
        raise ConfigError(f"unknown verification {kind!r}")
    _write_csv(out / f"{kind}.csv", _REPORT_HEADER, _report_rows(reports))
    return {"reports": [r.to_dict() for r in reports]}, all(r.holds for r in reports)


def _verify_cd(cfg: dict, p, out: Path):
    rho = float(cfg.get("rho", 0.0))
    n = cfg.get("n", math.inf)
    n = math.inf if n in ("inf", None) else float(n)
    default = [{"name": "linear", "params": [1.0] * p.dimension}, {"name": "quadratic"}]
    fields = _fields(cfg, p.dimension, default=default)
    if "points" in cfg:
        pts = np.asarray(cfg["points"], dtype=float).reshape(-1, p.dimension)
    else:
        box = _box(cfg, p.dimension, [-2.0, 2.0])
        pts = _box_points(box, cfg.get("resolution", 401 if p.dimension == 1 else 41))
    rep = check_cd(p, rho, n, fields, pts, float(cfg.get("tolerance", 1e-9)))
    rows = []
    for f, gap in zip(fields, rep.gaps):
        i = int(np.argmin(gap))
        rows.append([f.name, float(gap[i]), " ".join(repr(float(v)) for v in pts[i])])
    _write_csv(out / "cd.csv", ["field", "min_gap", "point"], rows)
    return {"reports": [rep.to_dict()]}, rep.holds


def _trace(cfg: dict):
    p = _potential(cfg)
    f = _field(cfg, p.dimension)
    times = np.asarray(cfg.get("times", np.linspace(0.0, 1.0, 5).tolist()), dtype=float)
    method = cfg.get("method", "mehler")
    kwargs = {}
    if method != "mehler":
        kwargs = {"paths": int(cfg.get("paths", 2000)), "step": float(cfg.get("step", 1e-3)), "seed": _seed(cfg)}
    grid = gauss_hermite_grid(p.dimension, cfg.get("order"))
    functionals = cfg.get("functionals")
    return p, evolve_trace(p, f, times, method, grid=grid, functionals=functionals, **kwargs)


def _trace_dict(trace) -> dict:
    d = trace.metadata()
    d.pop("columns")
    d["times"] = trace.times.tolist()
    for name in ("variance", "entropy", "fisher"):
        s = getattr(trace, name)
        d[name] = None if s is None else s.tolist()
    return d


def cmd_evolve(cfg: dict, out: Path):
    _, trace = _trace(cfg)
    trace.to_csv(out / "trace.csv")
    return {"trace": _trace_dict(trace)}, True


def cmd_decay(cfg: dict, out: Path):
    p, trace = _trace(cfg)
    rho = _rho(cfg, p)
    functional = cfg.get("functional", "variance")
    fit = fit_decay_rate(trace, functional)
    rep = verify_decay(trace, functional, rho, float(cfg.get("tolerance", 1e-8)))
    trace.to_csv(out / "trace.csv")
    _write_csv(out / "decay.csv", ["functional", "rate", "intercept", "r_squared", "expected_rate"],
               [[functional, fit.rate, fit.intercept, fit.r_squared, -2.0 * rho]])
    return {"fit": fit.to_dict(), "expected_rate": -2.0 * rho, "reports": [rep.to_dict()],
            "trace": _trace_dict(trace)}, rep.holds


def _clouds(cfg: dict):
    if "a" in cfg and "b" in cfg:
        return EmpiricalMeasure.from_csv(cfg["a"]).points, EmpiricalMeasure.from_csv(cfg["b"]).points
    p = _potential(cfg)
    f = _field(cfg, p.dimension)
    count = int(cfg.get("samples", 1000))
    seeds = np.random.SeedSequence(_seed(cfg)).spawn(2)
    s_mu, s_f = (int(s.generate_state(1)[0]) for s in seeds)
    target = sample_measure(p, count, s_mu, **_sampler(cfg))
    tilted = sample_measure(p, count, s_f, gradient=tilted_gradient(p, f), label=f"{f.name}*{p.label}",
                            **_sampler(cfg))
    return tilted.points, target.points


def cmd_transport(cfg: dict, out: Path):
    kind = cfg.get("kind")
    if kind == "w2":
        a, b = _clouds(cfg)
        solver = cfg.get("solver", "sorted" if a.shape[1] == 1 else "assignment")
        if solver == "sorted":
            if a.shape[1] != 1:
                raise ConfigError("the sorted solver is 1-D only")
            res = w2_sorted_1d(a[:, 0], b[:, 0])
        elif solver == "assignment":
            res = w2_assignment(a, b)
        else:
            raise ConfigError(f"solver must be 'sorted' or 'assignment', got {solver!r}")
        _write_csv(out / "w2.csv", ["w2", "n_a", "n_b", "coupling"], [[res.w2, *res.sizes, res.coupling]])
        return {"transport": res.to_dict()}, True

    f = _field(cfg, 1)
    grid = _grid(cfg)
    direction = cfg.get("direction", "from-fgamma-to-gamma")
    m = brenier_map_1d(f, grid, direction)
    m.to_csv(out / "brenier.csv")
    if kind == "brenier":
        return {"field": f.name, "direction": direction, "grid": [grid[0], grid[-1], grid.size],
                "w2": brenier_w2(f, m) if direction == "from-fgamma-to-gamma" else None}, True
    if kind == "monge-ampere":
        if direction != "from-fgamma-to-gamma":
            raise ConfigError("the Monge-Ampère residual is defined for the map from f dgamma to gamma")
        tol = float(cfg.get("tolerance", MONGE_AMPERE_TOLERANCE))
        res = monge_ampere_residual_1d(f, m, grid)
        return {"field": f.name, "max_relative_residual": res, "tolerance": tol,
                "verdict": "holds" if res <= tol else "violated"}, res <= tol
    raise ConfigError(f"unknown transport command {kind!r}")


def cmd_report_all(cfg: dict, out: Path):
    seed = int(cfg.setdefault("seed", 0))
    results, timing = run_suite(seed)
    _write_csv(out / "suite.csv", ["id", "title", "passed"], [[r["id"], r["title"], r["passed"]] for r in results])
    return {"checks": results}, all(r["passed"] for r in results), {"check_seconds": timing}


COMMANDS = {
    "curvature": cmd_curvature,
    "verify": cmd_verify,
    "evolve": cmd_evolve,
    "decay": cmd_decay,
    "transport": cmd_transport,
    "report-all": cmd_report_all,
}


# ---------------------------------------------------------------- plumbing


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _classify(exc: BaseException) -> tuple[int, str]:
    if isinstance(exc, TransportError) and "monotone" in str(exc):
        return EXIT_NUMERIC, "numerical-failure"
    if isinstance(exc, (ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC, "numerical-failure"
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return EXIT_CONFIG, "config-error"
    return EXIT_NUMERIC, "internal-error"


def run(cfg: dict, out: Path) -> int:
    """Execute one configured command, write its reports, return the exit status."""
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    extra_meta: dict = {}
    report = {"command": cfg.get("command"), "kind": cfg.get("kind"), "config": dict(cfg)}
    try:
        handler = COMMANDS.get(cfg.get("command"))
        if handler is None:
            raise ConfigError(f"unknown command {cfg.get('command')!r}")
        outcome = handler(cfg, out)
        result, ok = outcome[0], outcome[1]
        if len(outcome) > 2:
            extra_meta = outcome[2]
        report["config"] = dict(cfg)
        report.update(result=result, status="holds" if ok else "violated",
                      reason="all-hold" if ok else "violation", message=None)
        code = EXIT_OK if ok else EXIT_VIOLATION
    except Exception as exc:  # noqa: BLE001 - classified into exit codes
        code, reason = _classify(exc)
        report.update(result=None, status="error", reason=reason, message=f"{type(exc).__name__}: {exc}")
    report["exit_code"] = code
    (out / "report.json").write_text(dumps(report))
    meta = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "seconds": time.perf_counter() - started,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "argv": sys.argv[1:],
        **extra_meta,
    }
    (out / "metadata.json").write_text(dumps(meta))
    return code


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (required for stochastic runs)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: ./logsob-out)")
    g.add_argument("--tolerance", type=float, default=argparse.SUPPRESS, help="verdict tolerance")

    model = argparse.ArgumentParser(add_help=False)
    m = model.add_argument_group("model")
    m.add_argument("--potential", help="potential as NAME or NAME:p1,p2 (default gaussian)")
    m.add_argument("--dimension", type=int)
    m.add_argument("--field", action="append", help="field as NAME or NAME:p1,p2; repeatable")
    m.add_argument("--rho", type=float)
    m.add_argument("--samples", type=int, help="sample count")
    m.add_argument("--step", type=float, help="time step for Langevin / SDE")
    m.add_argument("--burn-in", dest="burn_in", type=int)
    m.add_argument("--order", type=int, help="Gauss-Hermite order per axis")

    parser = argparse.ArgumentParser(prog="logsob", description=__doc__.split("\n\n")[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curvature", parents=[common, model], help="minimum eigenvalue of Hess psi on a box")
    p.add_argument("--box", type=_floats, help="lo,hi for every axis")
    p.add_argument("--resolution", type=int)

    p = sub.add_parser("verify", parents=[common, model], help="check an inequality")
    p.add_argument("kind", choices=["poincare", "lsi", "talagrand", "cd", "otto-villani"])
    p.add_argument("--backend", choices=["quadrature", "samples"])
    p.add_argument("--n", help="dimension parameter for cd (number or inf)")
    p.add_argument("--box", type=_floats)
    p.add_argument("--resolution", type=int)
    p.add_argument("--lsi-constant", dest="lsi_constant", type=float)
    p.add_argument("--rho-free", dest="rho_free", action="store_true", default=None)

    for name, text in (("evolve", "tabulate P_t f and its functionals"), ("decay", "fit and check decay rates")):
        p = sub.add_parser(name, parents=[common, model], help=text)
        p.add_argument("--times", type=_floats, help="comma-separated times")
        p.add_argument("--method", choices=["mehler", "sde", "exact"])
        p.add_argument("--paths", type=int)
        if name == "decay":
            p.add_argument("--functional", choices=["variance", "entropy"])

    p = sub.add_parser("transport", parents=[common, model], help="W2, Brenier maps, Monge-Ampère residuals")
    p.add_argument("kind", choices=["w2", "brenier", "monge-ampere"])
    p.add_argument("--a", help="CSV samples of the first measure")
    p.add_argument("--b", help="CSV samples of the second measure")
    p.add_argument("--solver", choices=["sorted", "assignment"])
    p.add_argument("--direction", choices=["from-fgamma-to-gamma", "from-gamma-to-fgamma"])

    sub.add_parser("report-all", parents=[common], help="run the full verification suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(getattr(args, "out", "logsob-out"))
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        out.mkdir(parents=True, exist_ok=True)
        report = {"command": args.command, "status": "error", "reason": "config-error",
                  "message": str(exc), "exit_code": EXIT_CONFIG, "result": None}
        (out / "report.json").write_text(dumps(report))
        print(f"logsob: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = run(cfg, out)
    report = json.loads((out / "report.json").read_text())
    line = f"{report['command']}: {report['status']}"
    if report.get("message"):
        line += f" ({report['message']})"
    print(line, file=sys.stderr if code else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
