"""Effective elastic moduli of composites with nearly touching rigid inclusions.

Modules:

* :mod:`gapmoduli.specfun` gamma, elliptic integrals and a bracketing root finder
* :mod:`gapmoduli.geometry` inclusion shapes, cells, gap profiles, volume fractions
* :mod:`gapmoduli.auxfield` auxiliary fields of the narrow gap and their identities
* :mod:`gapmoduli.fem` bilinear finite elements for the cell problem
* :mod:`gapmoduli.asymptotics` leading-order moduli, gap integrals, sweeps
* :mod:`gapmoduli.cli` the ``python3 -m gapmoduli`` driver
"""

from .geometry import CellSpec, Ellipse, LameParams, MConvex, Vigdergauz

__all__ = ["CellSpec", "Ellipse", "LameParams", "MConvex", "Vigdergauz"]
__version__ = "0.1.0"
