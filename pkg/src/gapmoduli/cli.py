"""Command-line driver: ``python3 -m gapmoduli <command> --config run.cfg``.

Configs are flat ``key = value`` lines with dotted keys and ``#`` comments::

    shape.kind = circle
    shape.r = 1
    lame.lambda = 1
    lame.mu = 1
    cell.eps = 0.04, 0.02, 0.01, 0.005
    solver.n1 = 800

Exit codes: 0 pass, 1 config or validation error, 2 solver failure,
3 criterion failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import asymptotics as asy
from . import auxfield, fem, geometry
from .geometry import CellSpec, Ellipse, GeometryError, LameParams, MConvex
from .specfun import ConvergenceError, DomainError, NoBracketError

HEADER = [
    "eps", "E1", "E2", "lead1", "lead2", "res1", "res2", "mu_star", "e_star",
    "sup_grad_v", "sup_grad_w", "dofs", "iters",
]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CRITERION = 0, 1, 2, 3


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


# --- configuration ---------------------------------------------------------------

_FLOAT, _INT, _STR, _FLOATS = "float", "int", "str", "floats"

SCHEMA = {
    "shape.kind": _STR,
    "shape.a": _FLOAT,
    "shape.b": _FLOAT,
    "shape.r": _FLOAT,
    "shape.m": _FLOAT,
    "shape.f": _FLOAT,
    "lame.lambda": _FLOAT,
    "lame.mu": _FLOAT,
    "cell.L1": _FLOAT,
    "cell.eps": _FLOATS,
    "solver.n1": _INT,
    "solver.n2": _INT,
    "solver.grading": _FLOAT,
    "solver.tol": _FLOAT,
    "solver.preconditioner": _STR,
    "aux.m": _FLOAT,
    "aux.eps": _FLOAT,
    "aux.points": _INT,
    "integral.m": _FLOAT,
    "integral.kappa0": _FLOAT,
    "integral.eps": _FLOATS,
    "integral.s": _FLOAT,
    "output.precision": _INT,
}


def _fmt(x, precision=17) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), f".{precision}g")


@dataclass
class RunConfig:
    """Parsed configuration; ``values`` maps dotted keys to typed values."""

    values: dict

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}")
        return self.values[key]

    def canonical(self) -> str:
        """Sorted ``key = value`` lines; parsing the result reproduces it byte for byte."""
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            text = ", ".join(_fmt(x) for x in v) if isinstance(v, list) else _fmt(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    # typed views

    def lame(self) -> LameParams:
        try:
            return LameParams(self.require("lame.lambda"), self.require("lame.mu"))
        except GeometryError as exc:
            raise ConfigError(str(exc)) from exc

    def shape(self):
        kind = self.get("shape.kind", "circle")
        try:
            if kind == "circle":
                r = self.get("shape.r", 1.0)
                return Ellipse(r, r)
            if kind == "ellipse":
                return Ellipse(self.require("shape.a"), self.require("shape.b"))
            if kind == "mconvex":
                return MConvex(self.require("shape.m"), self.get("shape.r", 1.0))
        except GeometryError as exc:
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"shape.kind must be circle, ellipse or mconvex, got {kind!r}")

    def eps_list(self):
        eps = self.require("cell.eps")
        if any(not e > 0.0 for e in eps):
            raise ConfigError("cell.eps entries must be positive")
        return eps

    def solver(self) -> asy.SolverConfig:
        d = asy.SolverConfig()
        cfg = asy.SolverConfig(
            n1=self.get("solver.n1", d.n1),
            n2=self.get("solver.n2", d.n2),
            grading=self.get("solver.grading", d.grading),
            tol=self.get("solver.tol", d.tol),
            preconditioner=self.get("solver.preconditioner", d.preconditioner),
        )
        if cfg.n1 % 2 or cfg.n2 % 2 or cfg.n1 < 4 or cfg.n2 < 2:
            raise ConfigError("solver.n1 and solver.n2 must be even (n1 >= 4, n2 >= 2)")
        if not cfg.grading >= 1.0:
            raise ConfigError("solver.grading must be >= 1")
        if not 0.0 < cfg.tol <= 1e-6:
            raise ConfigError("solver.tol must lie in (0, 1e-6]")
        if cfg.preconditioner not in ("jacobi", "lu"):
            raise ConfigError("solver.preconditioner must be jacobi or lu")
        return cfg

    def precision(self) -> int:
        p = self.get("output.precision", 17)
        if not 1 <= p <= 17:
            raise ConfigError("output.precision must lie in [1, 17]")
        return p


def _convert(key, kind, text):
    try:
        if kind == _FLOAT:
            return float(text)
        if kind == _INT:
            return int(text)
        if kind == _FLOATS:
            return [float(t) for t in text.split(",") if t.strip()]
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}") from None


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, SCHEMA[key], val)
    cfg = RunConfig(values)
    for key, v in values.items():
        if SCHEMA[key] == _FLOAT and not math.isfinite(v):
            raise ConfigError(f"{key} must be finite")
    if "lame.lambda" in values or "lame.mu" in values:
        cfg.lame()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


# --- output ----------------------------------------------------------------------


def _row_fields(row: asy.SweepRow, precision: int):
    return [_fmt(getattr(row, k), precision) for k in HEADER]


def _open_out(path):
    if path is None:
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


# --- commands --------------------------------------------------------------------


def cmd_moduli(cfg: RunConfig, args) -> int:
    lame = cfg.lame()
    shape = cfg.shape()
    eps = cfg.eps_list()
    if len(eps) != 1:
        raise ConfigError("moduli needs exactly one cell.eps")
    solver = cfg.solver()
    try:
        CellSpec.touching(shape, eps[0], L1=cfg.get("cell.L1"))
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        row = asy.solve_row(shape, lame, eps[0], solver, L1=cfg.get("cell.L1"))
    except (fem.ResolutionError, ConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out, close = _open_out(args.out)
    writer = csv.writer(out, lineterminator="\n")
    if close:
        writer.writerow(HEADER)
    writer.writerow(_row_fields(row, cfg.precision()))
    if close:
        out.close()
    return EXIT_OK


def sweep_criteria(rows, m: float) -> list:
    """``(name, value, passed)`` for the slope, spread, coefficient and gradient checks.

    ``passed`` is None for checks that are reported but do not gate the exit code.
    """
    ok = [r for r in rows if r.ok]
    checks = []
    if len(ok) < 3:
        return [("rows_ok", len(ok), False)]
    eps = np.array([r.eps for r in ok])
    target = -(1.0 - 1.0 / m)
    halfwidth = 0.05 if m == 2 else 0.03
    slope = asy.fit_slope(eps, [r.E1 for r in ok])
    checks.append(("slope_E1", slope, abs(slope - target) <= halfwidth))
    for k in (1, 2):
        s = asy.spread([getattr(r, f"res{k}") for r in ok])
        checks.append((f"spread_res{k}", s, s <= 2.5))
    coef_tol = 0.05 if m == 2 else 0.07
    last = ok[-1]
    for k in (1, 2):
        ratio = getattr(last, f"E{k}") / getattr(last, f"lead{k}")
        checks.append((f"coef_E{k}", ratio, abs(ratio - 1.0) <= coef_tol))
    # a factor 5 over the 8-fold range 0.04 -> 0.005, scaled to other ranges
    growth = ok[-1].sup_grad_v / ok[0].sup_grad_v
    gw = [r.sup_grad_w for r in ok]
    ratio_w = max(gw) / min(gw)
    # the gradient criteria are posed for circles; for m > 2 they are reported only
    gated = m == 2
    checks.append(("growth_grad_v", growth, growth >= 0.625 * ok[0].eps / ok[-1].eps if gated else None))
    checks.append(("ratio_grad_w", ratio_w, ratio_w <= 3.0 if gated else None))
    checks.append(("rows_ok", len(ok), len(ok) == len(rows)))
    return checks


def cmd_sweep(cfg: RunConfig, args) -> int:
    lame = cfg.lame()
    shape = cfg.shape()
    eps = cfg.eps_list()
    if len(eps) < 3:
        raise ConfigError("need >=3 points to fit")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("cell.eps must be strictly decreasing")
    solver = cfg.solver()
    prec = cfg.precision()
    rows = asy.sweep_report(shape, lame, eps, solver, L1=cfg.get("cell.L1"))
    checks = sweep_criteria(rows, geometry.gap_exponent(shape))
    found = {name: value for name, value, _ in checks}
    out, close = _open_out(args.out)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER + ["status"])
    for r in rows:
        writer.writerow(_row_fields(r, prec) + [r.status])
    nan = float("nan")
    out.write(
        "# slope_E1={} spread_res1={} slope_E2={} spread_res2={}\n".format(
            _fmt(found.get("slope_E1", nan), prec),
            _fmt(found.get("spread_res1", nan), prec),
            _fmt(_slope_e2(rows), prec),
            _fmt(found.get("spread_res2", nan), prec),
        )
    )
    if close:
        out.close()
    for r in rows:
        if not r.ok:
            _log(args, f"eps={r.eps:g}: FAILED: {r.message}")
    failed = [name for name, _, passed in checks if passed is False]
    for name, value, passed in checks:
        label = "INFO" if passed is None else "PASS" if passed else "FAIL"
        _log(args, f"{label} {name} = {value:.6g}")
    return EXIT_CRITERION if failed else EXIT_OK


def _slope_e2(rows):
    ok = [r for r in rows if r.ok]
    if len(ok) < 2:
        return float("nan")
    return asy.fit_slope([r.eps for r in ok], [r.E2 for r in ok])


def cmd_auxcheck(cfg: RunConfig, args) -> int:
    lame = cfg.lame()
    m = cfg.get("aux.m", 2.0)
    if not m >= 2.0:
        raise ConfigError("aux.m must be >= 2")
    eps = cfg.get("aux.eps", 0.01)
    n = cfg.get("aux.points", 10000)
    if not (eps > 0.0 and n > 0):
        raise ConfigError("aux.eps and aux.points must be positive")
    shape = Ellipse(1.0, 1.0) if m == 2 else MConvex(m, 1.0)
    gap = geometry.gap_profile(CellSpec.touching(shape, eps), "simplified")
    rng = np.random.default_rng(args.seed)
    x1, x2 = auxfield.sample_gap_points(gap, n, rng)
    worst_id, worst_fd, where = 0.0, 0.0, None
    for i in (1, 2):
        _, rel, k = auxfield.cancellation_residuals(i, m, x1, x2, lame, gap)
        if rel >= worst_id:
            worst_id, where = rel, (i, x1[k], x2[k])
        g, h = auxfield.fd_mismatch(i, m, x1, x2, lame, gap)
        t = auxfield.potential_mismatch(i, m, x1, x2, lame, gap)
        worst_fd = max(worst_fd, g, h, t)
    print(f"identity_residual={worst_id:.3e} fd_mismatch={worst_fd:.3e}")
    if worst_id <= 1e-10 and worst_fd <= 1e-5:
        return EXIT_OK
    i, a, b = where
    print(f"worst identity point: i={i} x1={a!r} x2={b!r}", file=sys.stderr)
    return EXIT_CRITERION


def cmd_shape(cfg: RunConfig, args) -> int:
    f = cfg.require("shape.f")
    m = cfg.get("shape.m", 4.0)
    if not 0.0 < f < 1.0:
        raise ConfigError("shape.f must lie in (0, 1)")
    try:
        vig = geometry.vigdergauz_solve(f)
    except (NoBracketError, ConvergenceError) as exc:
        print(f"vigdergauz construction failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        mcv = geometry.match_fraction(f, m)
    except (GeometryError, DomainError, NoBracketError) as exc:
        print(f"cannot match fraction {f:g} with m={m:g}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    # the Vigdergauz shape lives in the unit cell; bring it to (-1, 1)^2
    pv = 2.0 * geometry.polygonize(vig, 2048)
    pm = geometry.polygonize(mcv, 2048)
    area_v = geometry.polygon_area(pv) / 4.0
    area_m = geometry.polygon_area(pm) / 4.0
    dev = max_radial_deviation(pv, pm)
    buf = io.StringIO()
    buf.write("shape,x,y\n")
    for name, poly in (("vigdergauz", pv), ("mconvex", pm)):
        for x, y in poly:
            buf.write(f"{name},{_fmt(x)},{_fmt(y)}\n")
    out, close = _open_out(args.out)
    out.write(buf.getvalue())
    if close:
        out.close()
    ok = abs(area_v / f - 1.0) <= 1e-4 and abs(area_m / f - 1.0) <= 1e-4
    _log(args, f"area_vigdergauz={area_v:.10g} area_mconvex={area_m:.10g} f={f:g} "
               f"max_radial_deviation={dev:.6g}")
    return EXIT_OK if ok else EXIT_CRITERION


def _radius_along(poly, angles):
    """Radius of a star-shaped polygon along each ray."""
    ang = np.arctan2(poly[:, 1], poly[:, 0])
    rad = np.hypot(poly[:, 0], poly[:, 1])
    order = np.argsort(ang)
    ang, rad = ang[order], rad[order]
    ang = np.concatenate([ang[-1:] - 2 * np.pi, ang, ang[:1] + 2 * np.pi])
    rad = np.concatenate([rad[-1:], rad, rad[:1]])
    return np.interp(angles, ang, rad)


def max_radial_deviation(p, q, rays: int = 360) -> float:
    angles = np.linspace(-np.pi, np.pi, rays, endpoint=False)
    return float(np.abs(_radius_along(p, angles) - _radius_along(q, angles)).max())


def cmd_integral(cfg: RunConfig, args) -> int:
    m = cfg.get("integral.m", 2.0)
    k0 = cfg.get("integral.kappa0", 1.0)
    s = cfg.get("integral.s", 0.5)
    eps = cfg.require("integral.eps")
    prec = cfg.precision()
    try:
        results = [asy.gap_integral(m, k0, e, s) for e in eps]
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    except ConvergenceError as exc:
        print(f"quadrature failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out, close = _open_out(args.out)
    out.write("eps,numeric,leading,residual\n")
    for e, r in zip(eps, results):
        out.write(",".join(_fmt(x, prec) for x in (e, r["numeric"], r["leading"], r["residual"])) + "\n")
    if close:
        out.close()
    return EXIT_OK


COMMANDS = {
    "moduli": cmd_moduli,
    "sweep": cmd_sweep,
    "auxcheck": cmd_auxcheck,
    "shape": cmd_shape,
    "integral": cmd_integral,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gapmoduli", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--seed", type=int, default=0, help="seed for random sample points")
    p.add_argument("--quiet", action="store_true", help="suppress diagnostics")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2**64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
