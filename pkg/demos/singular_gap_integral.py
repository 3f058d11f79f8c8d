"""
The singular gap integral
=========================

Between two nearly touching inclusions the local stiffness behaves like
``1 / delta(x1)`` with ``delta = eps + kappa0 |x1|^m``.  Its integral over the
gap carries the whole blow-up of the effective moduli.  This script compares
the quadrature with the closed-form leading term and watches the remainder
settle to a constant.
"""

import math

from gapmoduli.asymptotics import gap_integral

###############################################################################
# Circles (m = 2)
# ---------------
# For m = 2 the integral has an arctan antiderivative, so the quadrature can
# be checked exactly.  The remainder tends to ``-4 / (kappa0 s)``.

for eps in (1e-2, 1e-3, 1e-4, 1e-5):
    out = gap_integral(2, 1.0, eps, 0.5)
    exact = 2 / math.sqrt(eps) * math.atan(0.5 / math.sqrt(eps))
    print(f"eps={eps:.0e}  numeric={out['numeric']:12.6f}  "
          f"rel.err={abs(out['numeric'] / exact - 1):.1e}  residual={out['residual']:+.5f}")

###############################################################################
# Curvilinear squares (m = 4)
# ---------------------------
# The leading term now scales like ``eps^-(3/4)``.  No antiderivative is at
# hand, but the remainder should still approach a constant.

for eps in (1e-3, 1e-4, 1e-5, 1e-6):
    out = gap_integral(4, 0.5, eps, 0.5)
    print(f"eps={eps:.0e}  numeric={out['numeric']:14.6f}  "
          f"leading={out['leading']:14.6f}  residual={out['residual']:+.5f}")

###############################################################################
# Flatter contact
# ---------------
# Larger m widens the near-contact zone: at a fixed gap the integral grows
# with m.

for m in (2, 3, 4, 6, 10):
    print(f"m={m:2d}  integral={gap_integral(m, 1.0, 1e-4, 0.5)['numeric']:10.3f}")
