"""Auxiliary displacement fields for the narrow gap.

In the gap chart the two facing boundaries are ``x2 = +-delta(x1)/2`` (the
chart coordinate is measured from the gap midline).  For ``i = 1, 2`` the
auxiliary field is ``u_i = ubar_i + utilde_i``:

* ``ubar_i = (x2/delta + 1/2) psi_i`` is the Keller ramp, 0 on the lower and
  ``psi_i`` on the upper boundary;
* ``utilde_i = ((x2/delta)**2 - 1/4) P_i(x1, x2)`` is a corrector that
  vanishes on both boundaries.  ``P_i`` is a Lamé-weighted variant of the
  rotation ``(x2, -x1)`` built from ``|x1|**(m-2)`` and ``sign(x1) |x1|**(m-1)``.

All derivatives are analytic (product rule on ramp, bracket and polynomial
factors) and vectorised over arrays of points.  Index conventions:
``grad[..., k, j] = d u^(k) / d x_j`` and ``hess[..., k, j, l] = d2 u^(k) / dx_j dx_l``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    CellSpec,
    GapProfile,
    GeometryError,
    LameParams,
    boundary_height,
    curvature_at_gap,
    gap_exponent,
    gap_profile,
    halfwidth,
)
from .specfun import DomainError

__all__ = [
    "GapModeError",
    "FieldJet",
    "AuxEval",
    "ResidualParts",
    "eval_aux",
    "lame_operator",
    "lame_residual",
    "cancellation_terms",
    "cancellation_check",
    "energy_density",
    "energy_density_terms",
    "aux_extension",
    "sample_gap_points",
    "fd_mismatch",
    "potential_mismatch",
    "cancellation_residuals",
]


class GapModeError(ValueError):
    """The auxiliary-field formulas need the simplified gap profile."""


@dataclass
class FieldJet:
    """Value, gradient and Hessian of a 2-vector field at a batch of points."""

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    def __add__(self, other):
        return FieldJet(self.value + other.value, self.grad + other.grad, self.hess + other.hess)


@dataclass
class AuxEval:
    """Keller part and corrector of an auxiliary field; the sum is exposed directly."""

    keller: FieldJet
    corrector: FieldJet

    @property
    def value(self):
        return self.keller.value + self.corrector.value

    @property
    def grad(self):
        return self.keller.grad + self.corrector.grad

    @property
    def hess(self):
        return self.keller.hess + self.corrector.hess

    def total(self) -> FieldJet:
        return self.keller + self.corrector


@dataclass
class ResidualParts:
    """Remainder terms R, their x2-potentials T, and the Lamé residual.

    Only the pair belonging to the field index is non-zero: ``(R11_11, R12_12)``
    for ``i = 1`` and ``(R22_11, R21_12)`` for ``i = 2``.
    """

    R11_11: np.ndarray
    R12_12: np.ndarray
    R22_11: np.ndarray
    R21_12: np.ndarray
    T11_11: np.ndarray
    T12_12: np.ndarray
    T22_11: np.ndarray
    T21_12: np.ndarray
    residual: np.ndarray


# --- building blocks --------------------------------------------------------


def _even_pow(x, a):
    """|x|**a with its first two derivatives; zero coefficients stay exact zeros."""
    ax = np.abs(x)
    s = np.sign(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = ax**a
        d1 = a * s * ax ** (a - 1.0) if a != 0.0 else np.zeros_like(x)
        d2 = a * (a - 1.0) * ax ** (a - 2.0) if a * (a - 1.0) != 0.0 else np.zeros_like(x)
    return f, d1, d2


def _odd_pow(x, b):
    """sign(x) |x|**b with its first two derivatives."""
    ax = np.abs(x)
    s = np.sign(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = s * ax**b
        d1 = b * ax ** (b - 1.0) if b != 0.0 else np.zeros_like(x)
        d2 = b * (b - 1.0) * s * ax ** (b - 2.0) if b * (b - 1.0) != 0.0 else np.zeros_like(x)
    return f, d1, d2


def _ramp(x2, d, d1, d2):
    """x2/delta + 1/2 and its derivatives, as (value, grad(2,), hess(2,2)) arrays."""
    v = x2 / d + 0.5
    g = np.stack([-x2 * d1 / d**2, 1.0 / d], axis=-1)
    h11 = -x2 * (d2 / d**2 - 2.0 * d1**2 / d**3)
    h12 = -d1 / d**2
    h22 = np.zeros_like(x2)
    h = np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)
    return v, g, h


def _bracket(x2, d, d1, d2):
    """(x2/delta)**2 - 1/4 and its derivatives."""
    v = (x2 / d) ** 2 - 0.25
    g = np.stack([-2.0 * x2**2 * d1 / d**3, 2.0 * x2 / d**2], axis=-1)
    h11 = -2.0 * x2**2 * (d2 / d**3 - 3.0 * d1**2 / d**4)
    h12 = -4.0 * x2 * d1 / d**3
    h22 = 2.0 / d**2 * np.ones_like(x2)
    h = np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)
    return v, g, h


def _poly_x2_even(c, x1, x2, m):
    """c * x2 * |x1|**(m-2)."""
    e, e1, e2 = _even_pow(x1, m - 2.0)
    v = c * x2 * e
    g = np.stack([c * x2 * e1, c * e], axis=-1)
    h = np.stack(
        [np.stack([c * x2 * e2, c * e1], -1), np.stack([c * e1, np.zeros_like(x1)], -1)], -2
    )
    return v, g, h


def _poly_odd(c, x1, x2, m):
    """c * sign(x1) |x1|**(m-1)."""
    o, o1, o2 = _odd_pow(x1, m - 1.0)
    z = np.zeros_like(x1)
    v = c * o
    g = np.stack([c * o1, z], axis=-1)
    h = np.stack([np.stack([c * o2, z], -1), np.stack([z, z], -1)], -2)
    return v, g, h


def _product(a, b):
    av, ag, ah = a
    bv, bg, bh = b
    v = av * bv
    g = ag * bv[..., None] + av[..., None] * bg
    mixed = ag[..., :, None] * bg[..., None, :]
    # symmetrise before summing so the Hessian is exactly symmetric
    mixed = mixed + np.swapaxes(mixed, -1, -2)
    h = ah * bv[..., None, None] + mixed + av[..., None, None] * bh
    return v, g, h


def _corrector_coefficients(i, m, k0, lame: LameParams):
    """Coefficients of (x2 |x1|^(m-2)) and (sign |x1|^(m-1)) in P_i, per component."""
    lam, mu = lame.lam, lame.mu
    half_mm1 = m * (m - 1.0) / 2.0
    if i == 1:
        c_first = (2.0 - mu / (lam + 2.0 * mu)) * k0 / 3.0 * half_mm1
        c_second = (1.0 - mu / (lam + 2.0 * mu)) * k0 * m / 2.0
        return ("even", c_first), ("odd", c_second)
    if i == 2:
        c_first = (lam + mu) / mu * k0 * m / 2.0
        c_second = -lam / (3.0 * mu) * k0 * half_mm1
        return ("odd", c_first), ("even", c_second)
    raise ValueError(f"field index must be 1 or 2, got {i!r}")


def _aux_jets(i, m, k0, lame, x1, x2, d, d1, d2) -> AuxEval:
    # for non-integer m < 4 the Hessian is genuinely infinite at x1 = 0
    with np.errstate(invalid="ignore", divide="ignore"):
        return _aux_jets_raw(i, m, k0, lame, x1, x2, d, d1, d2)


def _aux_jets_raw(i, m, k0, lame, x1, x2, d, d1, d2) -> AuxEval:
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    shape = x1.shape
    ramp = _ramp(x2, d, d1, d2)
    bracket = _bracket(x2, d, d1, d2)

    kv = np.zeros(shape + (2,))
    kg = np.zeros(shape + (2, 2))
    kh = np.zeros(shape + (2, 2, 2))
    kv[..., i - 1], kg[..., i - 1, :], kh[..., i - 1, :, :] = ramp

    cv = np.zeros_like(kv)
    cg = np.zeros_like(kg)
    ch = np.zeros_like(kh)
    for comp, (kind, c) in enumerate(_corrector_coefficients(i, m, k0, lame)):
        poly = _poly_x2_even(c, x1, x2, m) if kind == "even" else _poly_odd(c, x1, x2, m)
        cv[..., comp], cg[..., comp, :], ch[..., comp, :, :] = _product(bracket, poly)
    return AuxEval(FieldJet(kv, kg, kh), FieldJet(cv, cg, ch))


def _check_gap(gap: GapProfile, x1, x2, region):
    if gap.mode != "simplified":
        raise GapModeError("auxiliary-field formulas use the simplified gap profile")
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    d = gap.delta(x1)
    if np.any(np.abs(x1) > region * gap.halfwidth) or np.any(
        np.abs(x2) > 0.5 * d * (1.0 + 1e-12)
    ):
        raise DomainError(
            f"point outside the gap region |x1| <= {region} * halfwidth, |x2| <= delta/2"
        )
    return d


def eval_aux(i: int, m: float, x1, x2, lame: LameParams, gap: GapProfile) -> AuxEval:
    """Auxiliary field ``u_i`` and its analytic derivatives in the gap.

    Parameters
    ----------
    i : {1, 2}
        Shear (1) or extension (2) field.
    m : float
        Contact order; must match ``gap.m``.
    x1, x2 : array_like
        Gap-chart coordinates, ``|x1| <= halfwidth/2`` and ``|x2| <= delta(x1)/2``.
    gap : GapProfile
        Simplified profile, ``delta = eps + kappa0 |x1|**m``.
    """
    d = _check_gap(gap, x1, x2, 0.5)
    if gap.m is not None and not np.isclose(m, gap.m):
        raise ValueError(f"exponent m = {m!r} does not match the gap profile (m = {gap.m!r})")
    k0 = gap.kappa0
    x1 = np.asarray(x1, float)
    d1 = gap.ddelta(x1)
    _, _, e2 = _even_pow(x1, m)
    d2 = k0 * e2
    return _aux_jets(i, m, k0, lame, x1, x2, d, d1, d2)


def lame_operator(jet: FieldJet, lame: LameParams) -> np.ndarray:
    """``mu Lap u + (lambda + mu) grad div u`` from a Hessian."""
    h = jet.hess
    lap = h[..., :, 0, 0] + h[..., :, 1, 1]
    grad_div = h[..., 0, :, 0] + h[..., 1, :, 1]
    return lame.mu * lap + (lame.lam + lame.mu) * grad_div


def _remainders(i, m, k0, lame, x1, x2, d):
    """Closed forms of the two remainders R and their potentials T (dT/dx2 = R)."""
    lam, mu = lame.lam, lame.mu
    a, _, _ = _even_pow(np.asarray(x1, float), 2.0 * m - 2.0)
    base_R = 2.0 * m**2 * k0**2 * a * x2 / d**3
    base_T = m**2 * k0**2 * a * x2**2 / d**3
    ratio = (lam + mu) / (lam + 2.0 * mu) if i == 1 else (lam + mu) / mu
    return base_R, -ratio * base_R, base_T, -ratio * base_T


def lame_residual(i: int, m: float, x1, x2, lame: LameParams, gap: GapProfile) -> ResidualParts:
    """Lamé residual of ``u_i`` from the reduced expressions, with R and T terms."""
    ev = eval_aux(i, m, x1, x2, lame, gap)
    lam, mu = lame.lam, lame.mu
    x2 = np.asarray(x2, float)
    d = gap.delta(np.asarray(x1, float))
    Ra, Rb, Ta, Tb = _remainders(i, m, gap.kappa0, lame, x1, x2, d)
    th = ev.corrector.hess
    z = np.zeros_like(Ra)
    if i == 1:
        r1 = (lam + 2.0 * mu) * th[..., 0, 0, 0] + (lam + 2.0 * mu) * Ra + (lam + mu) * Rb
        r2 = mu * th[..., 1, 0, 0] + (lam + mu) * th[..., 0, 1, 0]
        return ResidualParts(Ra, Rb, z, z, Ta, Tb, z, z, np.stack([r1, r2], -1))
    r1 = (lam + 2.0 * mu) * th[..., 0, 0, 0] + (lam + mu) * th[..., 1, 0, 1]
    r2 = mu * th[..., 1, 0, 0] + mu * Ra + (lam + mu) * Rb
    return ResidualParts(z, z, Ra, Rb, z, z, Ta, Tb, np.stack([r1, r2], -1))


def cancellation_terms(i: int, m: float, x1, x2, lame: LameParams, gap: GapProfile):
    """Constituent terms of the two structural identities, as two lists of arrays.

    Each list sums to zero identically; they are the combinations that let the
    Lamé residual reduce to the expressions used in :func:`lame_residual`.
    """
    ev = eval_aux(i, m, x1, x2, lame, gap)
    lam, mu = lame.lam, lame.mu
    x2 = np.asarray(x2, float)
    d = gap.delta(np.asarray(x1, float))
    Ra, Rb, _, _ = _remainders(i, m, gap.kappa0, lame, x1, x2, d)
    bh, th = ev.keller.hess, ev.corrector.hess
    if i == 1:
        first = [
            (lam + 2.0 * mu) * bh[..., 0, 0, 0],
            -(lam + 2.0 * mu) * Ra,
            mu * th[..., 0, 1, 1],
            (lam + mu) * th[..., 1, 0, 1],
            -(lam + mu) * Rb,
        ]
        second = [(lam + 2.0 * mu) * th[..., 1, 1, 1], (lam + mu) * bh[..., 0, 1, 0]]
    else:
        first = [(lam + mu) * bh[..., 1, 0, 1], mu * th[..., 0, 1, 1]]
        second = [
            (lam + 2.0 * mu) * th[..., 1, 1, 1],
            mu * bh[..., 1, 0, 0],
            -mu * Ra,
            (lam + mu) * th[..., 0, 0, 1],
            -(lam + mu) * Rb,
        ]
    return first, second


def cancellation_check(i: int, m: float, x1, x2, lame: LameParams, gap: GapProfile):
    """The two identity combinations ``(c1, c2)``; both vanish up to rounding."""
    first, second = cancellation_terms(i, m, x1, x2, lame, gap)
    return sum(first), sum(second)


def energy_density(grad: np.ndarray, lame: LameParams) -> np.ndarray:
    """``(C grad u, grad u)`` computed from the symmetric strain."""
    e11 = grad[..., 0, 0]
    e22 = grad[..., 1, 1]
    e12 = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
    tr = e11 + e22
    return lame.lam * tr**2 + 2.0 * lame.mu * (e11**2 + e22**2 + 2.0 * e12**2)


def energy_density_terms(
    i: int, m: float, x1, x2, lame: LameParams, gap: GapProfile, part: str = "full"
) -> dict:
    """Block decomposition of ``(C grad u_i, grad u_i)``.

    ``I11 + I12 + I21 + I22`` equals the energy density.  ``I12_1 .. I12_4`` are
    the four products ``mu d_j u^(k) d_2 u^(1)`` whose parity decides which
    terms integrate to zero over the gap.  ``part`` selects the gradient used:
    ``"full"``, ``"keller"`` or ``"corrector"``.
    """
    ev = eval_aux(i, m, x1, x2, lame, gap)
    g = {"full": ev.grad, "keller": ev.keller.grad, "corrector": ev.corrector.grad}[part]
    lam, mu = lame.lam, lame.mu
    a11, a12 = g[..., 0, 0], g[..., 0, 1]  # d1 u1, d2 u1
    a21, a22 = g[..., 1, 0], g[..., 1, 1]  # d1 u2, d2 u2
    shear = mu * (a12 + a21)
    return {
        "I11": ((lam + 2.0 * mu) * a11 + lam * a22) * a11,
        "I12": shear * a12,
        "I21": shear * a21,
        "I22": (lam * a11 + (lam + 2.0 * mu) * a22) * a22,
        "I12_1": mu * a11 * a12,
        "I12_2": mu * a12 * a12,
        "I12_3": mu * a21 * a12,
        "I12_4": mu * a22 * a12,
    }


# --- admissible extension to the whole cell ------------------------------------


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t)


def aux_extension(i: int, cell: CellSpec, lame: LameParams, x, y, with_grad: bool = False):
    """Auxiliary field extended to the translated cell ``(-L1, L1) x (0, 2 L2)``.

    Inside the matrix the field is ``psi_i * s + chi(|x1|) * utilde_i`` where
    ``s`` is the linear ramp between the two facing boundaries in each vertical
    line (so ``s`` equals the Keller ramp in the gap) and ``chi`` is a cubic
    cutoff equal to 1 for ``|x1| <= 3w/8`` and 0 for ``|x1| >= w/2``.  The
    corrector uses the exact gap width, so the field is exactly 0 on the lower
    and ``psi_i`` on the upper boundary.

    Returns the values (``(..., 2)``) and, if requested, gradients (``(..., 2, 2)``).
    """
    shape = cell.shape
    w = halfwidth(shape)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    x, y = np.broadcast_arrays(x, y)
    inside = np.abs(x) < w
    xb = np.where(inside, x, 0.0)
    ybot = np.where(inside, boundary_height(shape, np.clip(xb, -w, w)), 0.0)
    height = 2.0 * (cell.L2 - ybot)
    s = (y - ybot) / height
    val = np.zeros(x.shape + (2,))
    val[..., i - 1] = s
    grad = np.zeros(x.shape + (2, 2)) if with_grad else None

    try:
        k0 = curvature_at_gap(shape)
        m = gap_exponent(shape)
    except GeometryError:
        k0 = None
    gapmask = np.abs(x) < 0.5 * w
    if with_grad:
        gp_all = gap_profile(cell, "exact")
        slope = np.zeros_like(x)
        # exact gap: d(height)/dx = ddelta inside the inclusion span
        slope[inside] = gp_all.ddelta(x[inside])
        grad[..., i - 1, 0] = -((y - cell.L2) / height**2) * slope
        grad[..., i - 1, 1] = 1.0 / height
    if k0 is None or not np.any(gapmask):
        return (val, grad) if with_grad else val

    gp = gap_profile(cell, "exact")
    xg, yg = x[gapmask], y[gapmask] - cell.L2
    d = gp.delta(xg)
    d1 = gp.ddelta(xg)
    # second derivative of the exact gap width is only needed for Hessians
    d2 = np.zeros_like(xg)
    jets = _aux_jets(i, m, k0, lame, xg, yg, d, d1, d2).corrector
    chi, dchi = _smoothstep((0.5 * w - np.abs(xg)) / (0.125 * w))
    val[gapmask] += chi[:, None] * jets.value
    if with_grad:
        g = chi[:, None, None] * jets.grad
        g[..., 0] += (-np.sign(xg) * dchi / (0.125 * w))[:, None] * jets.value
        grad[gapmask] += g
        return val, grad
    return val


# --- verification helpers --------------------------------------------------------


def sample_gap_points(gap: GapProfile, n: int, rng: np.random.Generator, region: float = 0.49):
    """``n`` uniform random points of the gap chart with ``|x1| <= region * halfwidth``.

    ``x2`` is drawn from the interior ``|x2| <= 0.49 delta`` so that
    finite-difference stencils stay inside the gap.
    """
    x1 = rng.uniform(-region, region, n) * gap.halfwidth
    x2 = rng.uniform(-0.49, 0.49, n) * gap.delta(x1)
    return x1, x2


def _rel(a, b, axes):
    scale = np.max(np.abs(b), axis=axes) + np.finfo(float).tiny
    return np.max(np.abs(a - b), axis=axes) / scale


def fd_mismatch(i: int, m: float, x1, x2, lame: LameParams, gap: GapProfile, step: float = 1e-5):
    """Largest relative gaps between analytic and centred-difference derivatives.

    The stencil width is ``step * delta(x1)`` in both directions.  Returns
    ``(grad_err, hess_err)``.  The gradient error is the worst point's ratio
    of the maximal entry error to the maximal analytic entry.  The Hessian
    error is normwise over the whole sample: near ``x1 = 0`` with large ``m``
    the Hessian is many orders below ``|grad| / h``, where differencing the
    gradient only returns rounding noise.
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    h = step * gap.delta(x1)
    ev = eval_aux(i, m, x1, x2, lame, gap)
    fd_g = np.empty_like(ev.grad)
    fd_h = np.empty_like(ev.hess)
    for j, (dx, dy) in enumerate(((h, 0.0), (0.0, h))):
        plus = eval_aux(i, m, x1 + dx, x2 + dy, lame, gap)
        minus = eval_aux(i, m, x1 - dx, x2 - dy, lame, gap)
        fd_g[..., j] = (plus.value - minus.value) / (2.0 * h[:, None])
        fd_h[..., j] = (plus.grad - minus.grad) / (2.0 * h[:, None, None])
    hess_err = np.abs(fd_h - ev.hess).max() / np.abs(ev.hess).max()
    return float(_rel(fd_g, ev.grad, (1, 2)).max()), float(hess_err)


def potential_mismatch(i: int, m: float, x1, x2, lame: LameParams, gap: GapProfile, step: float = 1e-5):
    """Largest relative gap between ``d T / d x2`` (centred differences) and ``R``."""
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    h = step * gap.delta(x1)
    Ra, Rb, _, _ = _remainders(i, m, gap.kappa0, lame, x1, x2, gap.delta(x1))
    _, _, Tp, Tq = _remainders(i, m, gap.kappa0, lame, x1, x2 + h, gap.delta(x1))
    _, _, Tm, Tn = _remainders(i, m, gap.kappa0, lame, x1, x2 - h, gap.delta(x1))
    fd = np.stack([(Tp - Tm) / (2 * h), (Tq - Tn) / (2 * h)], -1)
    return float(_rel(fd, np.stack([Ra, Rb], -1), (1,)).max())


def cancellation_residuals(i: int, m: float, x1, x2, lame: LameParams, gap: GapProfile):
    """Worst identity residuals, absolute and relative to the largest constituent term.

    Returns ``(abs_err, rel_err, worst_index)``.
    """
    out_abs, out_rel = [], []
    for terms in cancellation_terms(i, m, x1, x2, lame, gap):
        stack = np.stack(terms)
        out_abs.append(np.abs(stack.sum(axis=0)))
        out_rel.append(out_abs[-1] / (np.abs(stack).max(axis=0) + np.finfo(float).tiny))
    a = np.maximum(*out_abs)
    r = np.maximum(*out_rel)
    k = int(np.argmax(r))
    return float(a.max()), float(r[k]), k
