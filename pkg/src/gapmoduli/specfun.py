"""Special functions and a bracketing root finder.

Everything here is scalar and dependency free.  The elliptic integrals use
the *parameter* convention of the algebraic integrand,

    F(x | p) = int_0^x ds / sqrt((1 - s^2)(1 - p s^2)),

so ``p`` multiplies ``s**2`` directly (it is the square of the usual modulus).
"""

import math

__all__ = [
    "DomainError",
    "NoBracketError",
    "ConvergenceError",
    "gamma",
    "carlson_rf",
    "elliptic_f",
    "elliptic_k",
    "find_root",
]


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class NoBracketError(ValueError):
    """The endpoints of a root search do not bracket a sign change."""


class ConvergenceError(RuntimeError):
    """An iteration hit its cap before meeting its tolerance."""


# Lanczos coefficients for g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x):
    """Gamma function for real ``x > 0`` (Lanczos approximation)."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"gamma requires x > 0, got {x!r}")
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def carlson_rf(x, y, z, rtol=1e-15):
    """Carlson's symmetric integral R_F(x, y, z) by duplication.

    At most one of the arguments may be zero; all must be non-negative.
    """
    if min(x, y, z) < 0.0 or (x == 0.0) + (y == 0.0) + (z == 0.0) > 1:
        raise DomainError("carlson_rf needs non-negative args, at most one zero")
    # Carlson (1995): error ~ tol**6 / (4 (1 - tol)); tol = (4 rtol)**(1/6)
    tol = (4.0 * rtol) ** (1.0 / 6.0) / 2.0
    for _ in range(100):
        sx, sy, sz = math.sqrt(x), math.sqrt(y), math.sqrt(z)
        lam = sx * sy + sy * sz + sz * sx
        x, y, z = 0.25 * (x + lam), 0.25 * (y + lam), 0.25 * (z + lam)
        mu = (x + y + z) / 3.0
        dx, dy, dz = 1.0 - x / mu, 1.0 - y / mu, 1.0 - z / mu
        if max(abs(dx), abs(dy), abs(dz)) < tol:
            break
    else:
        raise ConvergenceError("carlson_rf duplication did not converge")
    e2 = dx * dy - dz * dz
    e3 = dx * dy * dz
    series = 1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0
    return series / math.sqrt(mu)


def _check_param(p):
    if not 0.0 < p < 1.0:
        raise DomainError(f"elliptic parameter must lie in (0, 1), got {p!r}")


def elliptic_f(x, p):
    """Incomplete elliptic integral of the first kind, F(x | p).

    Parameters
    ----------
    x : float
        Upper limit, ``0 <= x <= 1``.
    p : float
        Parameter in ``(0, 1)``; multiplies ``s**2`` in the integrand.
    """
    x = float(x)
    p = float(p)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"elliptic_f requires 0 <= x <= 1, got {x!r}")
    _check_param(p)
    if x == 0.0:
        return 0.0
    x2 = x * x
    return x * carlson_rf(1.0 - x2, 1.0 - p * x2, 1.0)


def elliptic_k(p):
    """Complete elliptic integral K(p) = F(1 | p) via the arithmetic-geometric mean."""
    p = float(p)
    _check_param(p)
    a, b = 1.0, math.sqrt(1.0 - p)
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (2.0 * a)


def _same_sign(u, v):
    # comparing signs avoids the underflow of u * v for tiny values
    return (u < 0.0) == (v < 0.0)


def find_root(f, lo, hi, tol=1e-12, maxiter=200):
    """Root of ``f`` in ``[lo, hi]`` by safeguarded secant/bisection.

    Each step tries a secant (regula falsi with the Illinois weighting) and
    falls back to bisection whenever the secant point leaves the bracket or
    fails to shrink it by half.  Deterministic for a given ``f``.

    Raises
    ------
    NoBracketError
        If ``f(lo)`` and ``f(hi)`` have the same sign.
    ConvergenceError
        If the bracket is not narrower than ``tol`` after ``maxiter`` steps.
    """
    a, b = float(lo), float(hi)
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if _same_sign(fa, fb):
        raise NoBracketError(
            f"f({a!r}) = {fa!r} and f({b!r}) = {fb!r} have the same sign"
        )
    side = 0
    for _ in range(maxiter):
        width = b - a
        if abs(width) <= tol:
            return a if abs(fa) < abs(fb) else b
        c = (a * fb - b * fa) / (fb - fa)
        if not (min(a, b) < c < max(a, b)):
            c = 0.5 * (a + b)
        fc = f(c)
        if fc == 0.0:
            return c
        if not _same_sign(fa, fc):
            b, fb = c, fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = c, fc
            if side == 1:
                fb *= 0.5
            side = 1
        if abs(b - a) > 0.5 * abs(width):
            # secant stalled; force a bisection step
            m = 0.5 * (a + b)
            fm = f(m)
            if fm == 0.0:
                return m
            if not _same_sign(fa, fm):
                b, fb = m, fm
            else:
                a, fa = m, fm
            side = 0
    raise ConvergenceError(f"find_root: bracket [{a!r}, {b!r}] still wider than {tol!r}")
