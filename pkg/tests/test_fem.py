import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gapmoduli import fem
from gapmoduli.auxfield import aux_extension
from gapmoduli.fem import FREE, PIN_BOTTOM, PIN_TOP, ResolutionError
from gapmoduli.geometry import CellSpec, Ellipse, LameParams, MConvex, boundary_height, halfwidth

UNIT = LameParams(1.0, 1.0)
UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@pytest.fixture(scope="module")
def circle_cell():
    return CellSpec.touching(Ellipse(1, 1), 0.05)


@pytest.fixture(scope="module")
def circle_system(circle_cell):
    mesh = fem.build_mesh(circle_cell, 128, 16, grading=10.0)
    return fem.assemble(mesh, UNIT)


@pytest.fixture(scope="module")
def circle_fields(circle_system):
    return {i: fem.solve_cell(circle_system, i) for i in (1, 2)}


class TestMesh:
    def test_uniform_circle_pins_symmetric(self):
        cell = CellSpec.touching(Ellipse(1, 1), 0.05)
        assert cell.L1 == cell.L2 == pytest.approx(1.025)
        mesh = fem.build_mesh(cell, 64, 64, grading=1.0)
        x = mesh.nodes[:, 0]
        for cls in (PIN_BOTTOM, PIN_TOP):
            pinned = mesh.node_class == cls
            assert np.sum(pinned & (x < 0)) == np.sum(pinned & (x > 0))
        assert np.allclose(mesh.nodes[mesh.mirror_x(), 0], -x)

    def test_under_resolved_raises(self):
        cell = CellSpec.touching(Ellipse(1, 1), 0.005)
        with pytest.raises(ResolutionError, match="min-gap-cell rule"):
            fem.build_mesh(cell, 256, 4, grading=10.0)

    def test_too_few_gap_columns_raises(self):
        cell = CellSpec.touching(Ellipse(1, 1), 0.005)
        with pytest.raises(ResolutionError, match="node columns"):
            fem.build_mesh(cell, 8, 64, grading=1.0)

    def test_mconvex_gap_column_rows(self):
        cell = CellSpec.touching(MConvex(4, 1), 0.01)
        mesh = fem.build_mesh(cell, 256, 16, grading=10.0)
        centre = mesh.node_class.reshape(mesh.n1 + 1, mesh.n2 + 1)[mesh.n1 // 2]
        assert np.sum(centre == FREE) >= 8

    @pytest.mark.parametrize("n1,n2", [(63, 16), (64, 15), (2, 16)])
    def test_odd_counts_rejected(self, circle_cell, n1, n2):
        with pytest.raises(ValueError):
            fem.build_mesh(circle_cell, n1, n2)

    @pytest.mark.parametrize("shape", [Ellipse(1, 1), Ellipse(1, 2), MConvex(4, 1)])
    def test_free_nodes_outside_inclusions(self, shape):
        cell = CellSpec.touching(shape, 0.02)
        mesh = fem.build_mesh(cell, 256, 16, grading=10.0)
        x, y = mesh.nodes[mesh.node_class == FREE].T
        inside = np.abs(x) < halfwidth(shape)
        h = boundary_height(shape, x[inside])
        assert np.all(y[inside] > h)
        assert np.all(y[inside] < 2 * cell.L2 - h)

    def test_pins_lie_on_boundary(self, circle_system):
        mesh = circle_system.mesh
        cell = mesh.cell
        x, y = mesh.nodes[mesh.node_class == PIN_BOTTOM].T
        inside = np.abs(x) < halfwidth(cell.shape)
        assert np.allclose(y[inside], boundary_height(cell.shape, x[inside]))
        assert np.all(y[~inside] == 0.0)
        top = mesh.nodes[mesh.node_class == PIN_TOP]
        assert np.allclose(top[:, 1], 2 * cell.L2 - mesh.nodes[mesh.node_class == PIN_BOTTOM][:, 1])

    def test_refinement_is_nested(self, circle_system):
        coarse = circle_system.mesh
        fine = fem.refine_mesh(coarse)
        assert np.array_equal(fine.node_grid()[::2, ::2], coarse.node_grid())


class TestElement:
    def test_zero_row_sums(self):
        K = fem.element_stiffness(UNIT_SQUARE, LameParams(0.0, 1.0))
        tx = np.tile([1.0, 0.0], 4)
        ty = np.tile([0.0, 1.0], 4)
        assert np.abs(K @ tx).max() <= 1e-14
        assert np.abs(K @ ty).max() <= 1e-14

    def test_uniform_strain_density(self):
        K = fem.element_stiffness(UNIT_SQUARE, UNIT)
        v = np.column_stack([UNIT_SQUARE[:, 0], np.zeros(4)]).ravel()
        assert v @ K @ v == pytest.approx(3.0, rel=1e-14)

    @given(
        st.lists(st.floats(-0.2, 0.2), min_size=8, max_size=8),
        st.floats(0.1, 5.0),
        st.floats(-0.6, 5.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_rigid_motions_in_kernel(self, jitter, mu, lam_ratio):
        xe = UNIT_SQUARE + np.reshape(jitter, (4, 2))
        lame = LameParams(lam_ratio * mu, mu)
        K = fem.element_stiffness(xe, lame)
        rot = np.column_stack([xe[:, 1], -xe[:, 0]]).ravel()
        assert abs(rot @ K @ rot) <= 1e-12 * np.abs(K).max() * (rot @ rot)
        assert np.allclose(K, K.T, rtol=0, atol=1e-14 * np.abs(K).max())
        assert np.linalg.eigvalsh(K)[3] > 0.0

    def test_rotation_on_unpinned_patch(self, circle_system):
        x, y = circle_system.mesh.nodes.T
        rot = np.column_stack([y, -x])
        assert abs(fem.energy(circle_system, rot)) <= 1e-12 * np.abs(rot).max() ** 2

    def test_inverted_element_rejected(self):
        with pytest.raises(ValueError):
            fem.element_stiffness(UNIT_SQUARE[::-1], UNIT)


class TestAssembly:
    def test_matrix_exactly_symmetric(self, circle_system):
        A = circle_system.matrix
        assert (A - A.T).count_nonzero() == 0
        assert sp.isspmatrix_csr(A)

    def test_positive_definite(self, circle_system):
        A = circle_system.matrix
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = rng.standard_normal(A.shape[0])
            assert x @ (A @ x) > 0.0

    def test_free_dofs(self, circle_system):
        mesh = circle_system.mesh
        assert circle_system.matrix.shape[0] == 2 * np.sum(mesh.node_class == FREE)
        assert len(circle_system.pinned) == 2 * np.sum(mesh.node_class != FREE)


class TestSolve:
    def test_pinned_values_exact(self, circle_fields):
        for i, v in circle_fields.items():
            cls = v.mesh.node_class
            assert np.all(v.values[cls == PIN_BOTTOM] == 0.0)
            assert np.all(v.values[cls == PIN_TOP] == fem.PSI[i])

    def test_residual_reported(self, circle_fields):
        for v in circle_fields.values():
            assert v.info.residual <= 1e-10
            assert v.info.iterations > 0

    @pytest.mark.parametrize("i", [1, 2])
    def test_symmetries(self, circle_fields, i):
        d = fem.symmetry_defects(circle_fields[i])
        assert d["reflect_x"] <= 1e-9
        assert d["conjugate"] <= 1e-9

    @given(st.floats(0.25, 8.0))
    @settings(max_examples=5, deadline=None)
    def test_linearity(self, circle_system, scale):
        a = fem.solve_cell(circle_system, 1, preconditioner="lu")
        b = fem.solve_cell(circle_system, 1, preconditioner="lu", scale=scale)
        assert np.abs(b.values - scale * a.values).max() <= 1e-9 * scale

    def test_doubling_data_doubles_field(self, circle_system):
        a = fem.solve_cell(circle_system, 2)
        b = fem.solve_cell(circle_system, 2, scale=2.0)
        assert np.abs(b.values - 2 * a.values).max() <= 1e-8

    def test_zero_data(self, circle_system):
        v = fem.solve_cell(circle_system, 1, scale=0.0)
        assert not np.any(v.values)
        assert fem.energy(circle_system, v) == 0.0

    def test_zero_field_energy(self, circle_system):
        assert fem.energy(circle_system, np.zeros((circle_system.mesh.n_nodes, 2))) == 0.0

    @pytest.mark.parametrize("i", [1, 2])
    def test_preconditioners_agree(self, circle_system, circle_fields, i):
        lu = fem.solve_cell(circle_system, i, preconditioner="lu")
        e_j, e_lu = fem.energy(circle_system, circle_fields[i]), fem.energy(circle_system, lu)
        assert e_lu == pytest.approx(e_j, rel=1e-9)

    @pytest.mark.parametrize("i", [1, 2])
    def test_galerkin_upper_bound(self, circle_system, circle_fields, i):
        mesh = circle_system.mesh
        u = fem.interpolate(mesh, lambda x, y: aux_extension(i, mesh.cell, UNIT, x, y))
        assert fem.energy(circle_system, circle_fields[i]) <= fem.energy(circle_system, u)

    @pytest.mark.parametrize("i", [1, 2])
    def test_energy_traction_identity(self, circle_system, circle_fields, i):
        e = fem.energy(circle_system, circle_fields[i])
        w = fem.boundary_work(circle_system, circle_fields[i])
        assert abs(e - w) <= 1e-10 * e

    def test_refinement_monotone(self, circle_system, circle_fields):
        fine = fem.assemble(fem.refine_mesh(circle_system.mesh), UNIT)
        for i in (1, 2):
            coarse_e = fem.energy(circle_system, circle_fields[i])
            fine_e = fem.energy(fine, fem.solve_cell(fine, i, preconditioner="lu"))
            assert fine_e <= coarse_e * (1 + 1e-10)

    def test_iteration_cap(self, circle_system):
        with pytest.raises(fem.ConvergenceError, match="final"):
            fem.solve_cell(circle_system, 1, tol=1e-300)

    @pytest.mark.parametrize("kwargs", [{"tol": 1e-3}, {"tol": 0.0}, {"preconditioner": "ilu"}])
    def test_bad_arguments(self, circle_system, kwargs):
        with pytest.raises(ValueError):
            fem.solve_cell(circle_system, 1, **kwargs)

    def test_deterministic(self, circle_system, circle_fields):
        again = fem.solve_cell(circle_system, 1)
        assert np.array_equal(again.values, circle_fields[1].values)


class TestModuli:
    def test_shear_arithmetic(self, circle_cell):
        square = CellSpec(L1=circle_cell.L2, L2=circle_cell.L2, shape=circle_cell.shape, eps=circle_cell.eps)
        mu_star, _ = fem.effective_moduli(math.pi, 1.0, square, UNIT)
        assert mu_star == math.pi

    @given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(1.01, 3.0))
    def test_formulas(self, e1, e2, L1):
        cell = CellSpec(L1=L1, L2=1.005, shape=Ellipse(1, 1), eps=0.01)
        mu_star, e_star = fem.effective_moduli(e1, e2, cell, UNIT)
        assert mu_star == pytest.approx(1.005 / L1 * e1, rel=1e-15, abs=0)
        assert e_star == pytest.approx(2.5 / 3 * 1.005 / L1 * e2, rel=1e-15, abs=0)

    def test_negative_energy_rejected(self, circle_cell):
        with pytest.raises(ValueError):
            fem.effective_moduli(-1.0, 1.0, circle_cell, UNIT)

    @pytest.mark.xfail(strict=True, reason="O(1) correction is about -15% at this gap")
    def test_shear_coefficient_bracket_at_005(self, circle_system, circle_fields):
        c = fem.energy(circle_system, circle_fields[1]) * math.sqrt(0.05) / math.pi
        assert 0.9 <= c <= 1.1

    @pytest.mark.xfail(strict=True, reason="O(1) correction is about -19% at this gap")
    def test_extensional_bracket_at_005(self, circle_cell, circle_system, circle_fields):
        e1, e2 = (fem.energy(circle_system, circle_fields[i]) for i in (1, 2))
        _, e_star = fem.effective_moduli(e1, e2, circle_cell, UNIT)
        lead = UNIT.young() * math.pi / math.sqrt(0.05) * circle_cell.aspect
        assert e_star == pytest.approx(lead, rel=0.1)

    def test_shear_coefficient_near_leading(self, circle_system, circle_fields):
        # below the leading term by the O(1) correction, but of the right size
        c = fem.energy(circle_system, circle_fields[1]) * math.sqrt(0.05) / math.pi
        assert 0.8 <= c <= 1.0


class TestGapStats:
    def test_aux_field_has_zero_w(self, circle_system):
        mesh = circle_system.mesh
        cell = mesh.cell
        u = fem.interpolate(mesh, lambda x, y: aux_extension(1, cell, UNIT, x, y))
        fake = fem.DisplacementField(mesh, 1, u)

        def grad(x, y):
            g, _ = fem.cell_gradients(mesh, u)
            c = mesh.centroids()
            lookup = {(a, b): k for k, (a, b) in enumerate(map(tuple, c))}
            return g[[lookup[p] for p in zip(x, y)]]

        stats = fem.gap_gradient_stats(mesh, fake, grad)
        assert stats["sup_grad_w"] == 0.0
        assert stats["sup_grad_v"] > 1.0

    def test_solved_stats(self, circle_system, circle_fields):
        cell = circle_system.mesh.cell
        stats = fem.gap_gradient_stats(
            circle_system.mesh,
            circle_fields[1],
            lambda x, y: aux_extension(1, cell, UNIT, x, y, with_grad=True)[1],
        )
        assert stats["sup_grad_w"] < stats["sup_grad_v"]
        assert stats["sup_grad_v"] == pytest.approx(1 / 0.05, rel=0.2)

    def test_empty_sample(self, circle_system, circle_fields):
        with pytest.raises(ValueError, match="no free gap cells"):
            fem.gap_gradient_stats(circle_system.mesh, circle_fields[1], None, region=0.0)
