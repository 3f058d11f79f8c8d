"""Inclusion shapes, the periodic cell and the gap between neighbouring inclusions.

Coordinates follow the translated cell ``(-L1, L1) x (0, 2 L2)``: the lower
inclusion D2 is centred at the origin (only its upper half lies in the cell)
and the upper inclusion D1 is centred at ``(0, 2 L2)``.  The narrow gap sits
around ``(0, L2)``.  Gap profiles are expressed in the *gap chart*, where the
vertical coordinate is measured from ``L2`` so that the two facing boundaries
are ``x2 = eps/2 + h1(x1)`` and ``x2 = -eps/2 + h2(x1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .specfun import DomainError, elliptic_f, elliptic_k, find_root, gamma

__all__ = [
    "GeometryError",
    "LameParams",
    "Ellipse",
    "MConvex",
    "Vigdergauz",
    "InclusionShape",
    "CellSpec",
    "GapProfile",
    "curvature_at_gap",
    "halfwidth",
    "apex_height",
    "boundary_height",
    "boundary_slope",
    "gap_profile",
    "volume_fraction",
    "max_volume_fraction",
    "match_fraction",
    "vigdergauz_solve",
    "vigdergauz_boundary",
    "polygonize",
    "polygon_area",
    "write_polygon_csv",
]


class GeometryError(ValueError):
    """Invalid or unsupported geometric input."""


@dataclass(frozen=True)
class LameParams:
    """Lamé constants of the isotropic matrix.

    Strong ellipticity (``mu > 0`` and ``lambda + mu > 0``) is checked on
    construction.
    """

    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0.0:
            raise GeometryError(f"mu > 0 violated (mu = {self.mu!r})")
        if not self.lam + self.mu > 0.0:
            raise GeometryError(
                f"lambda + mu > 0 violated (lambda + mu = {self.lam + self.mu!r})"
            )

    def young(self) -> float:
        return self.mu * (3.0 * self.lam + 2.0 * self.mu) / (self.lam + self.mu)

    def poisson(self) -> float:
        return self.lam / (2.0 * (self.lam + self.mu))

    def tensor(self) -> np.ndarray:
        """Elasticity tensor C_ijkl as a (2, 2, 2, 2) array."""
        d = np.eye(2)
        return (
            self.lam * np.einsum("ij,kl->ijkl", d, d)
            + self.mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))
        )


@dataclass(frozen=True)
class Ellipse:
    """Ellipse ``x1**2/a**2 + x2**2/b**2 <= 1``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise GeometryError("ellipse semi-axes must be positive")


@dataclass(frozen=True)
class MConvex:
    """Curvilinear square ``|x1|**m + |x2|**m <= r**m`` with ``m > 2``."""

    m: float
    r: float

    def __post_init__(self):
        if not self.m > 2.0:
            raise GeometryError(f"m-convex exponent must exceed 2, got {self.m!r}")
        if not self.r > 0.0:
            raise GeometryError("m-convex half-width must be positive")


@dataclass(frozen=True)
class Vigdergauz:
    """Vigdergauz inclusion for a unit square cell; build with :func:`vigdergauz_solve`."""

    f: float
    p: float
    h: float
    M: float


InclusionShape = Union[Ellipse, MConvex, Vigdergauz]


def halfwidth(shape: InclusionShape) -> float:
    """Extent of the inclusion along x1 (and, by symmetry, x2 for squares)."""
    if isinstance(shape, Ellipse):
        return shape.a
    if isinstance(shape, MConvex):
        return shape.r
    if isinstance(shape, Vigdergauz):
        return _vigdergauz_scale(shape) * elliptic_f(math.sqrt(1.0 - shape.M), shape.p)
    raise GeometryError(f"unknown shape {shape!r}")


def apex_height(shape: InclusionShape) -> float:
    """Height of the topmost boundary point above the centre."""
    if isinstance(shape, Ellipse):
        return shape.b
    if isinstance(shape, MConvex):
        return shape.r
    if isinstance(shape, Vigdergauz):
        # quarter-symmetric: the top equals the side extent
        return halfwidth(shape)
    raise GeometryError(f"unknown shape {shape!r}")


@dataclass(frozen=True)
class CellSpec:
    """Periodic cell ``(-L1, L1) x (-L2, L2)`` with gap ``eps`` between inclusions.

    ``eps`` defaults to the value implied by the geometry, ``2 (L2 - apex)``.
    """

    L1: float
    L2: float
    shape: InclusionShape
    eps: float = None

    def __post_init__(self):
        if not (self.L1 > 0.0 and self.L2 > 0.0):
            raise GeometryError("cell half-widths must be positive")
        implied = 2.0 * (self.L2 - apex_height(self.shape))
        if self.eps is None:
            object.__setattr__(self, "eps", implied)
        elif not math.isclose(self.eps, implied, rel_tol=1e-9, abs_tol=1e-14):
            raise GeometryError(
                f"gap eps = {self.eps!r} inconsistent with 2 (L2 - apex) = {implied!r}"
            )
        if not self.eps > 0.0:
            raise GeometryError(f"gap must be positive, got eps = {self.eps!r}")
        if not halfwidth(self.shape) < self.L1:
            raise GeometryError("inclusion must stay away from the vertical cell sides")

    @classmethod
    def touching(cls, shape: InclusionShape, eps: float, L1: float = None) -> "CellSpec":
        """Cell whose height puts the inclusions ``eps`` apart.

        ``L1`` defaults to ``L2``, i.e. a square cell.
        """
        L2 = apex_height(shape) + 0.5 * eps
        return cls(L1=L2 if L1 is None else L1, L2=L2, shape=shape, eps=eps)

    @property
    def aspect(self) -> float:
        """``L2 / L1``."""
        return self.L2 / self.L1


def curvature_at_gap(shape: InclusionShape) -> float:
    """Coefficient kappa0 of the leading ``|x1|**m`` term of the gap opening."""
    if isinstance(shape, Ellipse):
        return shape.b / shape.a**2
    if isinstance(shape, MConvex):
        return (2.0 / shape.m) * shape.r ** (1.0 - shape.m)
    raise GeometryError(f"no gap coefficient for {type(shape).__name__} inclusions")


def gap_exponent(shape: InclusionShape) -> float:
    """Order m of contact: 2 for ellipses, the exponent for m-convex shapes."""
    if isinstance(shape, Ellipse):
        return 2.0
    if isinstance(shape, MConvex):
        return float(shape.m)
    raise GeometryError(f"no gap exponent for {type(shape).__name__} inclusions")


def boundary_height(shape: InclusionShape, x1):
    """Upper branch of the boundary curve, ``x2 >= 0`` at abscissa ``x1``."""
    x1 = np.asarray(x1, dtype=float)
    w = halfwidth(shape)
    if np.any(np.abs(x1) > w * (1.0 + 1e-14)):
        raise DomainError(f"|x1| exceeds the inclusion half-width {w!r}")
    if isinstance(shape, Ellipse):
        t = np.clip(1.0 - (x1 / shape.a) ** 2, 0.0, None)
        out = shape.b * np.sqrt(t)
    elif isinstance(shape, MConvex):
        t = np.clip(shape.r**shape.m - np.abs(x1) ** shape.m, 0.0, None)
        out = t ** (1.0 / shape.m)
    elif isinstance(shape, Vigdergauz):
        xs, ys = _vigdergauz_upper(shape)
        out = np.interp(np.abs(x1), xs, ys)
    else:
        raise GeometryError(f"unknown shape {shape!r}")
    return out if out.ndim else float(out)


def boundary_slope(shape: InclusionShape, x1):
    """Derivative of :func:`boundary_height` (Ellipse and MConvex only)."""
    x1 = np.asarray(x1, dtype=float)
    if isinstance(shape, Ellipse):
        t = 1.0 - (x1 / shape.a) ** 2
        out = -shape.b * x1 / (shape.a**2 * np.sqrt(t))
    elif isinstance(shape, MConvex):
        m = shape.m
        ax = np.abs(x1)
        out = -np.sign(x1) * ax ** (m - 1.0) * (shape.r**m - ax**m) ** (1.0 / m - 1.0)
    else:
        raise GeometryError(f"no analytic slope for {type(shape).__name__}")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GapProfile:
    """Facing boundaries of the gap in the gap chart.

    ``h1``/``h2`` are the offsets of the upper/lower boundary from ``+eps/2``
    and ``-eps/2``; ``ddelta`` is the derivative of ``delta``.
    """

    eps: float
    halfwidth: float
    mode: str
    h1: Callable = field(repr=False)
    h2: Callable = field(repr=False)
    ddelta: Callable = field(repr=False)
    kappa0: float = None
    m: float = None

    def delta(self, x1):
        return self.eps + self.h1(x1) - self.h2(x1)

    def midline(self, x1):
        return 0.5 * (self.h1(x1) + self.h2(x1))


def gap_profile(cell: CellSpec, mode: str = "exact") -> GapProfile:
    """Gap profile of ``cell``.

    ``exact`` follows the true boundary; ``simplified`` keeps only the leading
    term, ``h1 = -h2 = kappa0 |x1|**m / 2`` so that ``delta = eps + kappa0 |x1|**m``.
    """
    shape = cell.shape
    w = halfwidth(shape)
    if mode == "simplified":
        k0 = curvature_at_gap(shape)
        m = gap_exponent(shape)

        def h1(x1):
            return 0.5 * k0 * np.abs(x1) ** m

        def h2(x1):
            return -0.5 * k0 * np.abs(x1) ** m

        def ddelta(x1):
            x1 = np.asarray(x1, dtype=float)
            return m * k0 * np.sign(x1) * np.abs(x1) ** (m - 1.0)

        return GapProfile(cell.eps, w, mode, h1, h2, ddelta, k0, m)

    if mode == "exact":
        top = apex_height(shape)

        def h2(x1):
            return boundary_height(shape, x1) - top

        def h1(x1):
            return -h2(x1)

        def ddelta(x1):
            return -2.0 * boundary_slope(shape, x1)

        try:
            k0, m = curvature_at_gap(shape), gap_exponent(shape)
        except GeometryError:
            k0 = m = None
        return GapProfile(cell.eps, w, mode, h1, h2, ddelta, k0, m)

    raise ValueError(f"mode must be 'exact' or 'simplified', got {mode!r}")


def volume_fraction(shape: InclusionShape, L: float) -> float:
    """Inclusion area over cell area for the square cell of half-width ``L``."""
    if isinstance(shape, Vigdergauz):
        return shape.f
    if isinstance(shape, Ellipse):
        if shape.a != shape.b:
            raise GeometryError("volume fraction formula needs a circle (a == b)")
        return math.pi * shape.a**2 / (4.0 * L**2)
    if isinstance(shape, MConvex):
        m = shape.m
        return shape.r**2 / (2.0 * m * L**2) * gamma(1.0 / m) ** 2 / gamma(2.0 / m)
    raise GeometryError(f"unknown shape {shape!r}")


def max_volume_fraction(m: float, L: float = 1.0) -> float:
    """Volume fraction at touching (``r = L``); independent of ``L``."""
    if m < 2.0:
        raise GeometryError(f"m must be >= 2, got {m!r}")
    if m == 2.0:
        return math.pi / 4.0
    return gamma(1.0 / m) ** 2 / (2.0 * m * gamma(2.0 / m))


def match_fraction(f_target: float, m: float, L: float = 1.0) -> InclusionShape:
    """Inclusion of exponent ``m`` with volume fraction ``f_target`` in the ``L`` cell.

    Returns a circle ``Ellipse(r, r)`` for ``m == 2``.
    """
    fmax = max_volume_fraction(m)
    if not 0.0 < f_target < fmax:
        raise GeometryError(f"volume fraction must lie in (0, {fmax!r}), got {f_target!r}")
    r = L * math.sqrt(f_target / fmax)
    if m == 2.0:
        return Ellipse(r, r)
    return MConvex(m, r)


# --- Vigdergauz inclusion ------------------------------------------------------


def _k_ratio(p):
    return elliptic_k(1.0 - p) / elliptic_k(p)


def vigdergauz_solve(f: float) -> Vigdergauz:
    """Parameters of the Vigdergauz inclusion of volume fraction ``f`` (unit cell)."""
    if not 0.0 < f < 1.0:
        raise GeometryError(f"volume fraction must lie in (0, 1), got {f!r}")
    h = (1.0 - f) / (1.0 + f)
    p = find_root(lambda q: _k_ratio(q) - h, 0.5, 1.0 - 1e-12, tol=1e-15)
    return Vigdergauz(f=f, p=p, h=h, M=(1.0 - p) ** 2 / p**2)


def _vigdergauz_scale(v: Vigdergauz) -> float:
    return 1.0 / (2.0 * (1.0 + v.h) * elliptic_k(v.p))


def vigdergauz_boundary(v: Vigdergauz, t: float):
    """Point ``(x, y)`` on the quarter boundary for parameter ``t`` in ``[M, 1]``."""
    if not v.M * (1.0 - 1e-14) <= t <= 1.0:
        raise DomainError(f"t must lie in [M, 1] = [{v.M!r}, 1], got {t!r}")
    s = _vigdergauz_scale(v)
    x = -s * elliptic_f(math.sqrt(max(0.0, 1.0 - t)), v.p)
    y = s * elliptic_f(math.sqrt(max(0.0, 1.0 - v.M / t)), v.p)
    return x, y


def _vigdergauz_quarter(v: Vigdergauz, n: int) -> np.ndarray:
    # the arc is symmetric under t -> M/t, so sample log t with end clustering
    u = 0.5 * (1.0 - np.cos(np.linspace(0.0, math.pi, n)))
    t = np.exp(math.log(v.M) * (1.0 - u))
    t[0], t[-1] = v.M, 1.0
    pts = np.array([vigdergauz_boundary(v, ti) for ti in t])
    # mirror x -> -x: first quadrant, from (0, top) at t = 1 to (side, 0) at t = M
    pts[:, 0] = -pts[:, 0]
    return pts[::-1]


_VIG_CACHE: dict = {}


def _vigdergauz_upper(v: Vigdergauz, n: int = 2049):
    """Upper boundary as increasing abscissae with heights, for interpolation."""
    key = (v, n)
    if key not in _VIG_CACHE:
        q = _vigdergauz_quarter(v, n)
        order = np.argsort(q[:, 0])
        _VIG_CACHE[key] = (q[order, 0], q[order, 1])
    return _VIG_CACHE[key]


def polygonize(shape: InclusionShape, n: int = 1024) -> np.ndarray:
    """Counter-clockwise polygon of roughly ``n`` vertices approximating the boundary."""
    if n < 8:
        raise GeometryError("polygonize needs n >= 8")
    if isinstance(shape, Vigdergauz):
        nq = max(2, n // 4 + 1)
        q = _vigdergauz_quarter(shape, nq)[::-1]  # (side, 0) -> (0, top)
        quads = [
            q,
            q[::-1][1:] * [-1.0, 1.0],
            q[1:] * [-1.0, -1.0],
            q[::-1][1:-1] * [1.0, -1.0],
        ]
        return np.vstack(quads)
    theta = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    c, s = np.cos(theta), np.sin(theta)
    if isinstance(shape, Ellipse):
        return np.column_stack([shape.a * c, shape.b * s])
    if isinstance(shape, MConvex):
        e = 2.0 / shape.m
        return shape.r * np.column_stack(
            [np.sign(c) * np.abs(c) ** e, np.sign(s) * np.abs(s) ** e]
        )
    raise GeometryError(f"unknown shape {shape!r}")


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise order)."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def write_polygon_csv(poly: np.ndarray, stream, precision: int = 17) -> None:
    """Write polygon vertices as ``x,y`` lines."""
    for x, y in poly:
        stream.write(f"{x:.{precision}g},{y:.{precision}g}\n")
