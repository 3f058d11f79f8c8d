"""Bilinear finite elements for the cell problem on the translated cell.

The matrix region of the translated cell is vertically simple: above each
abscissa ``x`` it is the interval between the lower inclusion (or the bottom
edge) and the upper inclusion (or the top edge).  The mesh is therefore a
mapped tensor grid: columns at graded abscissae, and in every column the
nodes split ``[y_bot(x), y_top(x)]`` at fixed fractions ``eta``.  The bottom
node row lies on the lower boundary and is pinned to 0, the top row lies on
the upper boundary and is pinned to ``psi_i``; the sides are traction free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import (
    CellSpec,
    LameParams,
    GeometryError,
    boundary_height,
    curvature_at_gap,
    gap_exponent,
    halfwidth,
)
from .specfun import ConvergenceError

__all__ = [
    "FREE",
    "PIN_BOTTOM",
    "PIN_TOP",
    "ResolutionError",
    "GapMesh",
    "StiffnessSystem",
    "DisplacementField",
    "SolveInfo",
    "graded_axis",
    "build_mesh",
    "refine_mesh",
    "assemble",
    "element_stiffness",
    "solve_cell",
    "energy",
    "boundary_work",
    "effective_moduli",
    "cell_gradients",
    "gap_gradient_stats",
    "interpolate",
    "symmetry_defects",
]

FREE, PIN_BOTTOM, PIN_TOP = 0, 1, 2
PSI = {1: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0])}

_GAUSS = np.array([-1.0, 1.0]) / math.sqrt(3.0)


class ResolutionError(ValueError):
    """Mesh too coarse for the gap."""


@dataclass
class GapMesh:
    """Structured quadrilateral mesh of the matrix region.

    Node ``(j, k)`` (column ``j``, row ``k``) has index ``j * (n2 + 1) + k``.
    """

    cell: CellSpec
    n1: int
    n2: int
    nodes: np.ndarray
    cells: np.ndarray
    node_class: np.ndarray
    active: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def node_grid(self) -> np.ndarray:
        """Nodes reshaped to ``(n1 + 1, n2 + 1, 2)``."""
        return self.nodes.reshape(self.n1 + 1, self.n2 + 1, 2)

    def free_dofs(self) -> np.ndarray:
        free = np.repeat(self.node_class == FREE, 2)
        return np.flatnonzero(free)

    def centroids(self) -> np.ndarray:
        return self.nodes[self.cells].mean(axis=1)

    def mirror_x(self) -> np.ndarray:
        """Node permutation realising ``x1 -> -x1`` (the grid is symmetric)."""
        idx = np.arange(self.n_nodes).reshape(self.n1 + 1, self.n2 + 1)
        return idx[::-1, :].ravel()

    def mirror_y(self) -> np.ndarray:
        """Node permutation realising ``x2 -> 2 L2 - x2``."""
        idx = np.arange(self.n_nodes).reshape(self.n1 + 1, self.n2 + 1)
        return idx[:, ::-1].ravel()


def graded_axis(length: float, n: int, grading: float) -> np.ndarray:
    """``n + 1`` points on ``[0, length]`` with geometric spacing.

    ``grading`` is the ratio of the last to the first interval; 1 is uniform.
    """
    if n < 1:
        raise ValueError("need at least one interval")
    if grading < 1.0:
        raise ValueError(f"grading must be >= 1, got {grading!r}")
    if grading == 1.0 or n == 1:
        return np.linspace(0.0, length, n + 1)
    q = grading ** (1.0 / (n - 1))
    widths = q ** np.arange(n)
    pts = np.concatenate([[0.0], np.cumsum(widths)])
    return length * pts / pts[-1]


def _columns(cell: CellSpec, n1: int, grading: float) -> np.ndarray:
    """Column abscissae: graded on ``[0, w]`` toward 0, uniform on ``[w, L1]``, mirrored."""
    w = halfwidth(cell.shape)
    half = n1 // 2
    n_out = max(1, int(round(half * (cell.L1 - w) / cell.L1)))
    n_out = min(n_out, half - 1)
    n_in = half - n_out
    inner = graded_axis(w, n_in, grading)
    outer = np.linspace(w, cell.L1, n_out + 1)[1:]
    right = np.concatenate([inner, outer])
    return np.concatenate([-right[:0:-1], right])


def _bottom_profile(cell: CellSpec, x: np.ndarray) -> np.ndarray:
    w = halfwidth(cell.shape)
    inside = np.abs(x) < w
    y = np.zeros_like(x)
    y[inside] = boundary_height(cell.shape, x[inside])
    return y


def _gap_width_scale(cell: CellSpec) -> float:
    try:
        return (cell.eps / curvature_at_gap(cell.shape)) ** (1.0 / gap_exponent(cell.shape))
    except GeometryError:
        return cell.eps


def _structured(cell, xs, eta):
    n1, n2 = len(xs) - 1, len(eta) - 1
    ybot = _bottom_profile(cell, xs)
    ytop = 2.0 * cell.L2 - ybot
    X = np.repeat(xs[:, None], n2 + 1, axis=1)
    Y = ybot[:, None] + eta[None, :] * (ytop - ybot)[:, None]
    return n1, n2, np.stack([X, Y], axis=-1).reshape(-1, 2)


def _connectivity(n1, n2):
    j, k = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    a = (j * (n2 + 1) + k).ravel()
    # counter-clockwise: (j,k), (j+1,k), (j+1,k+1), (j,k+1)
    return np.stack([a, a + n2 + 1, a + n2 + 2, a + 1], axis=1)


def _classes(n1, n2):
    cls = np.zeros((n1 + 1, n2 + 1), dtype=np.int8)
    cls[:, 0] = PIN_BOTTOM
    cls[:, -1] = PIN_TOP
    return cls.ravel()


def build_mesh(cell: CellSpec, n1: int, n2: int, grading: float = 1.0) -> GapMesh:
    """Mapped tensor mesh of the matrix region of the translated cell.

    Parameters
    ----------
    n1, n2 : int
        Even numbers of element columns and rows.
    grading : float
        Ratio of the widest to the narrowest column over the inclusion span;
        columns cluster toward ``x1 = 0``.

    Raises
    ------
    ResolutionError
        If the cells of the column at ``x1 = 0`` are taller than ``eps / 8``
        or fewer than five node columns fall inside the gap width
        ``(eps / kappa0)**(1/m)``.
    """
    if n1 % 2 or n2 % 2 or n1 < 4 or n2 < 2:
        raise ValueError("n1 and n2 must be even (n1 >= 4, n2 >= 2)")
    xs = _columns(cell, n1, grading)
    eta = np.linspace(0.0, 1.0, n2 + 1)
    n1, n2, nodes = _structured(cell, xs, eta)
    mesh = GapMesh(
        cell=cell,
        n1=n1,
        n2=n2,
        nodes=nodes,
        cells=_connectivity(n1, n2),
        node_class=_classes(n1, n2),
        active=np.ones(n1 * n2, dtype=bool),
    )
    _check_resolution(mesh)
    return mesh


def _check_resolution(mesh: GapMesh) -> None:
    cell = mesh.cell
    scale = _gap_width_scale(cell)
    g = mesh.node_grid()
    cols = np.flatnonzero(np.abs(g[:, 0, 0]) <= scale)
    if len(cols) < 5:
        raise ResolutionError(
            f"min-gap-cell rule: only {len(cols)} node columns within the gap width "
            f"{scale:.3g}; increase n1 or the grading"
        )
    # cells of the central column span the narrowest part of the gap
    hmax = np.diff(g[mesh.n1 // 2, :, 1]).max()
    if hmax > cell.eps / 8.0 * (1.0 + 1e-9):
        raise ResolutionError(
            f"min-gap-cell rule: gap cells of height {hmax:.3g} exceed eps/8 = "
            f"{cell.eps / 8.0:.3g}; increase n2"
        )


def refine_mesh(mesh: GapMesh) -> GapMesh:
    """Uniform nested refinement: every quad is split in four in reference coordinates.

    New nodes are images of the reference midpoints under the coarse bilinear
    maps, so the coarse finite element space is a subspace of the fine one.
    """
    g = mesh.node_grid()
    n1, n2 = 2 * mesh.n1, 2 * mesh.n2
    fine = np.empty((n1 + 1, n2 + 1, 2))
    fine[::2, ::2] = g
    fine[1::2, ::2] = 0.5 * (g[:-1] + g[1:])
    fine[::2, 1::2] = 0.5 * (g[:, :-1] + g[:, 1:])
    fine[1::2, 1::2] = 0.25 * (g[:-1, :-1] + g[1:, :-1] + g[:-1, 1:] + g[1:, 1:])
    return GapMesh(
        cell=mesh.cell,
        n1=n1,
        n2=n2,
        nodes=fine.reshape(-1, 2),
        cells=_connectivity(n1, n2),
        node_class=_classes(n1, n2),
        active=np.ones(n1 * n2, dtype=bool),
    )


# --- element kernels -------------------------------------------------------------


def _shape_derivatives(xe: np.ndarray, xi: float, et: float):
    """Physical shape-function gradients and Jacobian determinants at one reference point.

    ``xe`` has shape ``(C, 4, 2)``; returns ``(C, 4, 2)`` and ``(C,)``.
    """
    dN = 0.25 * np.array(
        [
            [-(1 - et), -(1 - xi)],
            [(1 - et), -(1 + xi)],
            [(1 + et), (1 + xi)],
            [-(1 + et), (1 - xi)],
        ]
    )
    J = np.einsum("cai,aj->cij", xe, dN)  # J[c, i, j] = dx_i / dxi_j
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    # dN/dx_i = dN/dxi_j * dxi_j/dx_i
    B = np.einsum("aj,cji->cai", dN, inv)
    return B, det


def element_stiffness(xe: np.ndarray, lame: LameParams) -> np.ndarray:
    """Element matrices ``(C, 8, 8)`` with dof order ``(node, component)``."""
    xe = np.asarray(xe, float)
    single = xe.ndim == 2
    if single:
        xe = xe[None]
    lam, mu = lame.lam, lame.mu
    K = np.zeros((xe.shape[0], 4, 2, 4, 2))
    eye = np.eye(2)
    for xi in _GAUSS:
        for et in _GAUSS:
            B, det = _shape_derivatives(xe, xi, et)
            if np.any(det <= 0.0):
                raise ValueError("inverted or degenerate element")
            dot = np.einsum("caj,cbj->cab", B, B)
            Kg = (
                lam * np.einsum("cai,cbk->caibk", B, B)
                + mu * np.einsum("ik,cab->caibk", eye, dot)
                + mu * np.einsum("cak,cbi->caibk", B, B)
            )
            K += Kg * det[:, None, None, None, None]
    K = K.reshape(-1, 8, 8)
    return K[0] if single else K


def _dof_map(cells: np.ndarray) -> np.ndarray:
    return np.stack([2 * cells, 2 * cells + 1], axis=-1).reshape(cells.shape[0], 8)


def _global_matrix(mesh: GapMesh, lame: LameParams) -> sp.csr_matrix:
    cells = mesh.cells[mesh.active]
    Ke = element_stiffness(mesh.nodes[cells], lame)
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    dofs = _dof_map(cells)
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    n = 2 * mesh.n_nodes
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


@dataclass
class StiffnessSystem:
    """Stiffness matrix reduced to free dofs, plus what is needed to lift pinned data.

    ``rhs`` is the load for unit boundary data ``psi_i`` on the top boundary;
    it is computed per field index in :func:`solve_cell`.
    """

    mesh: GapMesh
    lame: LameParams
    full: sp.csr_matrix = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)
    coupling: sp.csr_matrix = field(repr=False)
    free: np.ndarray = field(repr=False)
    pinned: np.ndarray = field(repr=False)

    def pinned_values(self, i: int, scale: float = 1.0) -> np.ndarray:
        """Prescribed values on the pinned dofs for field ``i``."""
        vals = np.zeros(2 * self.mesh.n_nodes)
        top = np.flatnonzero(self.mesh.node_class == PIN_TOP)
        vals[2 * top] = scale * PSI[i][0]
        vals[2 * top + 1] = scale * PSI[i][1]
        return vals[self.pinned]

    def rhs(self, i: int, scale: float = 1.0) -> np.ndarray:
        return -(self.coupling @ self.pinned_values(i, scale))


def assemble(mesh: GapMesh, lame: LameParams) -> StiffnessSystem:
    """Assemble the elasticity stiffness with 2x2 Gauss quadrature and eliminate pins."""
    A = _global_matrix(mesh, lame)
    free = mesh.free_dofs()
    pinned = np.setdiff1d(np.arange(A.shape[0]), free)
    Aff = A[free][:, free].tocsr()
    Afp = A[free][:, pinned].tocsr()
    return StiffnessSystem(mesh, lame, A, Aff, Afp, free, pinned)


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    preconditioner: str


@dataclass
class DisplacementField:
    """Nodal displacements ``(n_nodes, 2)`` for field index ``i``."""

    mesh: GapMesh
    i: int
    values: np.ndarray
    info: SolveInfo = None

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def _pcg(A, b, apply_prec, tol, maxiter):
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    z = apply_prec(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, it, res
        z = apply_prec(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"PCG did not reach relative residual {tol:.1e} in {maxiter} iterations "
        f"(final {res:.3e}); the system is badly conditioned"
    )


def solve_cell(
    system: StiffnessSystem,
    i: int,
    tol: float = 1e-10,
    preconditioner: str = "jacobi",
    scale: float = 1.0,
) -> DisplacementField:
    """Solve the cell problem for field ``i`` by preconditioned conjugate gradients.

    ``preconditioner`` is ``"jacobi"`` (diagonal) or ``"lu"`` (a sparse LU
    factorisation used as an exact preconditioner, so CG only polishes the
    residual).  The iteration cap is ``20 sqrt(n)``.
    """
    if i not in (1, 2):
        raise ValueError(f"field index must be 1 or 2, got {i!r}")
    if not 0.0 < tol <= 1e-6:
        raise ValueError("tol must lie in (0, 1e-6]")
    A = system.matrix
    b = system.rhs(i, scale)
    n = A.shape[0]
    if preconditioner == "jacobi":
        dinv = 1.0 / A.diagonal()

        def apply_prec(r):
            return dinv * r

    elif preconditioner == "lu":
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})

        def apply_prec(r):
            return lu.solve(r)

    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    maxiter = max(1, int(20 * math.sqrt(n)))
    x, iters, res = _pcg(A, b, apply_prec, tol, maxiter)
    full = np.zeros(2 * system.mesh.n_nodes)
    full[system.free] = x
    full[system.pinned] = system.pinned_values(i, scale)
    return DisplacementField(system.mesh, i, full.reshape(-1, 2), SolveInfo(iters, res, preconditioner))


def energy(system: StiffnessSystem, field) -> float:
    """Strain energy ``int (C e(v), e(v))`` of a nodal field over the active cells."""
    u = field.flat() if isinstance(field, DisplacementField) else np.asarray(field).reshape(-1)
    return float(u @ (system.full @ u))


def boundary_work(system: StiffnessSystem, field: DisplacementField) -> float:
    """Discrete boundary work: nodal reactions on pinned dofs dotted with the pinned values."""
    u = field.flat()
    react = (system.full @ u)[system.pinned]
    return float(react @ u[system.pinned])


def effective_moduli(e1: float, e2: float, cell: CellSpec, lame: LameParams):
    """Effective shear and extensional moduli from the two cell energies."""
    if e1 < 0.0 or e2 < 0.0:
        raise ValueError("energies must be non-negative")
    r = cell.L2 / cell.L1
    return r * e1, lame.young() / (lame.lam + 2.0 * lame.mu) * r * e2


def interpolate(mesh: GapMesh, fn) -> np.ndarray:
    """Nodal interpolant of ``fn(x, y) -> (n, 2)`` as an ``(n_nodes, 2)`` array."""
    return np.asarray(fn(mesh.nodes[:, 0], mesh.nodes[:, 1]), float).reshape(-1, 2)


def cell_gradients(mesh: GapMesh, values: np.ndarray):
    """Displacement gradients at cell centres, ``(C, 2, 2)`` with ``[c, k, j] = d v^k / d x_j``."""
    xe = mesh.nodes[mesh.cells]
    B, _ = _shape_derivatives(xe, 0.0, 0.0)
    ve = values[mesh.cells]  # (C, 4, 2)
    return np.einsum("cak,caj->ckj", ve, B), xe.mean(axis=1)


def gap_gradient_stats(mesh: GapMesh, field: DisplacementField, aux_grad, region: float = 0.25):
    """Largest cell-centre gradients of ``v`` and ``v - u`` in the gap core.

    Samples the centres of cells with four free nodes and ``|x1| < region * w``.
    ``aux_grad(x, y)`` returns the gradient of the auxiliary field (``(n, 2, 2)``).
    """
    w = halfwidth(mesh.cell.shape)
    grads, centres = cell_gradients(mesh, field.values)
    allfree = np.all(mesh.node_class[mesh.cells] == FREE, axis=1)
    sel = allfree & (np.abs(centres[:, 0]) < region * w)
    if not np.any(sel):
        raise ValueError("no free gap cells to sample")
    gv = grads[sel]
    gu = np.asarray(aux_grad(centres[sel, 0], centres[sel, 1]))
    norm_v = np.sqrt(np.sum(gv**2, axis=(1, 2)))
    norm_w = np.sqrt(np.sum((gv - gu) ** 2, axis=(1, 2)))
    return {"sup_grad_v": float(norm_v.max()), "sup_grad_w": float(norm_w.max())}


def symmetry_defects(field: DisplacementField) -> dict:
    """Deviations of a solved field from its two exact reflection symmetries.

    ``reflect_x``: for ``i = 1`` the first component is even and the second
    odd in ``x1``; for ``i = 2`` the parities swap.  ``conjugate``: with
    ``S_i = diag(1, -1)`` for ``i = 1`` and ``diag(-1, 1)`` for ``i = 2``,
    ``v(x1, x2) + S_i v(x1, 2 L2 - x2) = psi_i``.  Both are maximum nodal
    deviations relative to ``max |v|``.
    """
    mesh, v = field.mesh, field.values
    sign = np.array([1.0, -1.0]) if field.i == 1 else np.array([-1.0, 1.0])
    scale = np.abs(v).max()
    rx = np.abs(v - sign * v[mesh.mirror_x()]).max()
    cj = np.abs(v + sign * v[mesh.mirror_y()] - PSI[field.i]).max()
    return {"reflect_x": float(rx / scale), "conjugate": float(cj / scale)}
