"""
Shapes at equal volume fraction
===============================

Dense packings of circles and of curvilinear squares ``|x|^m + |y|^m = r^m``
approach their maximal volume fractions at different rates, so the same
fraction means very different gaps.  This script sets a circle packing 0.01
below its maximum, finds the curvilinear square with the same fraction,
and compares the leading effective shear moduli.  It also builds the
Vigdergauz inclusion at the same fraction.
"""

import math

import numpy as np

from gapmoduli.asymptotics import moduli_from_fraction
from gapmoduli.geometry import (
    LameParams,
    match_fraction,
    max_volume_fraction,
    polygon_area,
    polygonize,
    vigdergauz_solve,
)

lame = LameParams(1.0, 1.0)

###############################################################################
# Matching the fraction
# ---------------------

f = math.pi / 4 - 0.01
delta4 = max_volume_fraction(4) - f
print(f"f = {f:.6f}; distance to the m = 4 maximum: {delta4:.6f}")

mu2, _ = moduli_from_fraction(2, lame, 0.01)
mu4, _ = moduli_from_fraction(4, lame, delta4)
print(f"circles:       mu* = {mu2 / math.pi:.4f} pi")
print(f"squares (m=4): mu* = {mu4 / math.pi:.4f} pi")

###############################################################################
# The inclusions
# --------------
# The m-convex shape lives in the cell (-1, 1)^2; the Vigdergauz shape is
# built in the unit-area cell and scaled by 2 to compare.

square = match_fraction(f, 4)
vig = vigdergauz_solve(f)
poly_m = polygonize(square, 2048)
poly_v = 2 * polygonize(vig, 2048)
print(f"m-convex radius r = {square.r:.6f}, Vigdergauz p = {vig.p:.12f}")
print(f"areas / 4: {polygon_area(poly_m) / 4:.6f}, {polygon_area(poly_v) / 4:.6f}")

angles = np.radians([0, 15, 30, 45])
for name, poly in (("m-convex", poly_m), ("Vigdergauz", poly_v)):
    rad = np.hypot(*poly.T)
    ang = np.arctan2(poly[:, 1], poly[:, 0])
    order = np.argsort(ang)
    print(name, np.round(np.interp(angles, ang[order], rad[order]), 4))
