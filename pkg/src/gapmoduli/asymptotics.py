"""Leading-order moduli, singular gap integrals and finite-element sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .auxfield import aux_extension
from .geometry import (
    CellSpec,
    LameParams,
    curvature_at_gap,
    gap_exponent,
)
from .specfun import ConvergenceError, DomainError, gamma

__all__ = [
    "LeadingTerm",
    "QuadratureError",
    "leading_energy",
    "leading_moduli",
    "moduli_from_fraction",
    "fraction_constant",
    "gap_integral",
    "SolverConfig",
    "SweepRow",
    "solve_row",
    "sweep_report",
    "fit_slope",
    "spread",
]


class QuadratureError(ConvergenceError):
    """Quadrature did not reach its tolerance."""


@dataclass(frozen=True)
class LeadingTerm:
    """The term ``coefficient * eps**(-exponent)``."""

    coefficient: float
    exponent: float
    modulus_kind: str
    m: float
    kappa0: float

    def __call__(self, eps):
        return self.coefficient * np.asarray(eps, float) ** (-self.exponent)


def _shape_factor(m: float) -> float:
    # pi / sqrt(kappa0) for m = 2 is the limit of 2 pi / (m sin(pi/m))
    if m == 2:
        return math.pi
    return 2.0 * math.pi / (m * math.sin(math.pi / m))


def _check(m, kappa0):
    if not m >= 2:
        raise DomainError(f"gap exponent must be >= 2, got {m!r}")
    if not kappa0 > 0.0:
        raise DomainError(f"kappa0 must be positive, got {kappa0!r}")


def leading_energy(i: int, m: float, kappa0: float, lame: LameParams) -> LeadingTerm:
    """Leading singular term of the cell energy for field ``i``."""
    _check(m, kappa0)
    if i not in (1, 2):
        raise ValueError(f"field index must be 1 or 2, got {i!r}")
    stiff = lame.mu if i == 1 else lame.lam + 2.0 * lame.mu
    coef = stiff * _shape_factor(m) * kappa0 ** (-1.0 / m)
    return LeadingTerm(coef, 1.0 - 1.0 / m, f"energy{i}", m, kappa0)


def leading_moduli(m: float, kappa0: float, lame: LameParams, cell: CellSpec):
    """Leading terms of the effective shear and extensional moduli."""
    _check(m, kappa0)
    factor = _shape_factor(m) * kappa0 ** (-1.0 / m) * cell.aspect
    ex = 1.0 - 1.0 / m
    return (
        LeadingTerm(lame.mu * factor, ex, "shear", m, kappa0),
        LeadingTerm(lame.young() * factor, ex, "extensional", m, kappa0),
    )


def fraction_constant(m: float) -> float:
    """Maximal volume fraction of the ``m``-convex packing, ``Gamma(1/m)^2 / (2 m Gamma(2/m))``."""
    if m == 2:
        return math.pi / 4.0
    return gamma(1.0 / m) ** 2 / (2.0 * m * gamma(2.0 / m))


def moduli_from_fraction(m: float, lame: LameParams, delta_f: float):
    """Leading moduli of a square cell in terms of ``delta_f = f_max - f``.

    Returns ``(mu_star, e_star)`` from the closed forms for circles
    (``m = 2``) and curvilinear squares (``m > 2``).
    """
    if not delta_f > 0.0:
        raise DomainError(f"delta_f must be positive, got {delta_f!r}")
    if not m >= 2:
        raise DomainError(f"gap exponent must be >= 2, got {m!r}")
    if m == 2:
        base = math.pi**1.5 / math.sqrt(2.0) / math.sqrt(delta_f)
    else:
        g = 2.0 / m**2 * gamma(1.0 / m) ** 2 / gamma(2.0 / m)
        ex = 1.0 - 1.0 / m
        base = math.pi / math.sin(math.pi / m) * g**ex / delta_f**ex
    return lame.mu * base, lame.young() * base


# --- gap integral ----------------------------------------------------------------

_GL_CACHE = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _panels(T):
    # unit panels near the core, then doubling widths out to T
    edges = [0.0]
    w = 0.25
    while edges[-1] < T:
        edges.append(min(T, edges[-1] + w))
        if edges[-1] >= 1.0:
            w = edges[-1]
    return np.asarray(edges)


def _panel_sum(f, edges, n):
    x, w = _gauss_legendre(n)
    a, b = edges[:-1, None], edges[1:, None]
    t = 0.5 * (b - a) * x + 0.5 * (a + b)
    return float(np.sum(0.5 * (b - a) * w * f(t)))


def gap_integral(m: float, kappa0: float, eps: float, s: float, rtol: float = 1e-10):
    """Integral of ``1 / (eps + kappa0 |x|^m)`` over ``(-s, s)`` and its leading term.

    The substitution ``x = (eps / kappa0)**(1/m) t`` maps the core of width
    ``eps**(1/m)`` to ``t = O(1)``; ``(0, T)`` is then split into panels whose
    widths double away from the core, each with Gauss-Legendre nodes.  The
    node count doubles until two estimates agree to ``rtol``.
    """
    _check(m, kappa0)
    if not (eps > 0.0 and s > 0.0):
        raise DomainError("eps and s must be positive")
    scale = (eps / kappa0) ** (1.0 / m)
    T = s / scale
    edges = _panels(T)

    def f(t):
        return 1.0 / (1.0 + t**m)

    n = 16
    prev = _panel_sum(f, edges, n)
    for _ in range(6):
        n *= 2
        cur = _panel_sum(f, edges, n)
        if abs(cur - prev) <= rtol * abs(cur):
            numeric = 2.0 * scale / eps * cur
            leading = _shape_factor(m) * kappa0 ** (-1.0 / m) * eps ** (-(1.0 - 1.0 / m))
            return {"numeric": numeric, "leading": leading, "residual": numeric - leading}
        prev = cur
    raise QuadratureError(f"gap integral did not reach rtol={rtol:g} (last change {abs(cur - prev):.3e})")


# --- finite-element sweeps -------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    n1: int = 800
    n2: int = 32
    grading: float = 20.0
    tol: float = 1e-10
    preconditioner: str = "jacobi"


@dataclass
class SweepRow:
    eps: float
    E1: float = math.nan
    E2: float = math.nan
    lead1: float = math.nan
    lead2: float = math.nan
    res1: float = math.nan
    res2: float = math.nan
    mu_star: float = math.nan
    e_star: float = math.nan
    sup_grad_v: float = math.nan
    sup_grad_w: float = math.nan
    dofs: int = 0
    iters: int = 0
    status: str = "OK"
    aux1: float = field(default=math.nan, repr=False)
    aux2: float = field(default=math.nan, repr=False)
    message: str = field(default="", repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "OK"


def _cell_for(shape, eps, L1=None):
    return CellSpec.touching(shape, eps, L1=L1)


def solve_row(shape, lame: LameParams, eps: float, solver: SolverConfig = SolverConfig(), L1=None) -> SweepRow:
    """Solve both cell problems at one gap and collect energies, moduli and gap gradients."""
    cell = _cell_for(shape, eps, L1)
    mesh = fem.build_mesh(cell, solver.n1, solver.n2, solver.grading)
    system = fem.assemble(mesh, lame)
    k0 = curvature_at_gap(shape)
    m = gap_exponent(shape)
    row = SweepRow(eps=eps, dofs=int(system.matrix.shape[0]))
    energies, aux = [], []
    for i in (1, 2):
        v = fem.solve_cell(system, i, tol=solver.tol, preconditioner=solver.preconditioner)
        row.iters += v.info.iterations
        energies.append(fem.energy(system, v))
        u = fem.interpolate(mesh, lambda x, y, i=i: aux_extension(i, cell, lame, x, y))
        aux.append(fem.energy(system, u))
        if i == 1:
            stats = fem.gap_gradient_stats(
                mesh, v, lambda x, y: aux_extension(1, cell, lame, x, y, with_grad=True)[1]
            )
    row.E1, row.E2 = energies
    row.aux1, row.aux2 = aux
    row.lead1 = float(leading_energy(1, m, k0, lame)(eps))
    row.lead2 = float(leading_energy(2, m, k0, lame)(eps))
    row.res1, row.res2 = row.E1 - row.lead1, row.E2 - row.lead2
    row.mu_star, row.e_star = fem.effective_moduli(row.E1, row.E2, cell, lame)
    row.sup_grad_v, row.sup_grad_w = stats["sup_grad_v"], stats["sup_grad_w"]
    return row


def sweep_report(shape, lame: LameParams, eps_list, solver: SolverConfig = SolverConfig(), L1=None):
    """One :class:`SweepRow` per gap, in the given (descending) order.

    Rows whose mesh or solve fails are kept with ``status = "FAILED"``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    rows = []
    for eps in eps_list:
        try:
            rows.append(solve_row(shape, lame, eps, solver, L1))
        except (ValueError, ConvergenceError) as exc:
            rows.append(SweepRow(eps=eps, status="FAILED", message=str(exc)))
    return rows


def fit_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def spread(values) -> float:
    """``max |v| / min |v|``."""
    a = np.abs(np.asarray(values, float))
    return float(a.max() / a.min())
