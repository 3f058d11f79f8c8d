"""
Cell energies for nearly touching circles
=========================================

Solve the two cell problems (shear and extension) for a pair of unit disks
at shrinking separations, then compare the finite element energies with
their singular leading terms.  The differences should stay bounded while
the energies themselves blow up like ``eps^(-1/2)``.
"""

import math

from gapmoduli import fem
from gapmoduli.asymptotics import SolverConfig, fit_slope, spread, sweep_report
from gapmoduli.geometry import CellSpec, Ellipse, LameParams

lame = LameParams(1.0, 1.0)
disk = Ellipse(1.0, 1.0)

###############################################################################
# A single cell
# -------------
# The mesh is fitted to both disks and graded toward the gap.  The gap column
# must hold cells no taller than eps/8.

cell = CellSpec.touching(disk, 0.01)
mesh = fem.build_mesh(cell, 800, 32, grading=20.0)
system = fem.assemble(mesh, lame)
shear = fem.solve_cell(system, 1)
print(f"free dofs: {system.matrix.shape[0]}, PCG iterations: {shear.info.iterations}")
print(f"E1 = {fem.energy(system, shear):.6f}")
print("symmetry defects:", fem.symmetry_defects(shear))

###############################################################################
# The sweep
# ---------
# ``res`` is the energy minus its leading term.  Bounded residuals are the
# numerical face of the "+ O(1)" in the asymptotic formulas.

rows = sweep_report(disk, lame, [0.04, 0.02, 0.01, 0.005], SolverConfig())
for r in rows:
    print(f"eps={r.eps:<6g} E1={r.E1:9.4f} lead1={r.lead1:9.4f} res1={r.res1:+.4f} "
          f"E2={r.E2:9.4f} res2={r.res2:+.4f}")

eps = [r.eps for r in rows]
print(f"slope of log E1: {fit_slope(eps, [r.E1 for r in rows]):.4f} (leading order -0.5)")
print(f"residual spreads: {spread([r.res1 for r in rows]):.3f}, {spread([r.res2 for r in rows]):.3f}")

###############################################################################
# Coefficients
# ------------
# At eps = 0.005 the shear energy is within 5% of its leading term; the
# extensional one carries a larger negative constant (about -9 against 133).

last = rows[-1]
print(f"E1 sqrt(eps)/pi = {last.E1 * math.sqrt(last.eps) / math.pi:.4f}")
print(f"E2 sqrt(eps)/(3 pi) = {last.E2 * math.sqrt(last.eps) / (3 * math.pi):.4f}")

###############################################################################
# Gradients in the gap
# --------------------
# The strain in the gap grows like 1/eps, but subtracting the auxiliary field
# leaves something bounded.

for r in rows:
    print(f"eps={r.eps:<6g} sup|grad v|={r.sup_grad_v:9.3f}  sup|grad(v-u)|={r.sup_grad_w:.4f}")
