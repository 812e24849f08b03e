"""Discretization layer: element exactness, constraints, symmetry, energies."""

import numpy as np
import pytest

from hingedplate import (DofField, LoadSpec, Mesh, ReinforcementMask,
                         assemble_bilinear, assemble_load, energy_value,
                         point_eval, symmetry_decompose)
from hingedplate.fem import (DOF_VALUE, apply_functional, field_to_csv,
                             reflect_x, reflect_y)


def interpolate(mesh, fn, dfx, dfy, dfxy):
    """Hermite interpolant of a smooth function from exact nodal data."""
    fld = DofField.zeros(mesh)
    for j, y in enumerate(mesh.ys):
        for i, x in enumerate(mesh.xs):
            base = 4 * mesh.node_index(i, j)
            fld.dofs[base + 0] = fn(x, y)
            fld.dofs[base + 1] = dfx(x, y)
            fld.dofs[base + 2] = dfy(x, y)
            fld.dofs[base + 3] = dfxy(x, y)
    return fld


class TestMesh:
    def test_invariants(self, params):
        with pytest.raises(ValueError):
            Mesh(2, 4, params.half_width)
        with pytest.raises(ValueError):
            Mesh(8, 1, params.half_width)
        m = Mesh(8, 4, params.half_width)
        assert m.n_dofs == 4 * 9 * 5
        X, Y = m.node_coordinates()
        # row-major in x then y, corners present
        assert X[0] == 0.0 and Y[0] == -params.half_width
        assert X[8] == pytest.approx(np.pi)
        assert Y[-1] == params.half_width

    def test_locate(self, mesh_small):
        ei, ej, tx, ty = mesh_small.locate(np.pi / 2, 0.0)
        assert 0 <= ei < mesh_small.nx and 0 <= ej < mesh_small.ny
        assert 0.0 <= tx <= 1.0 and 0.0 <= ty <= 1.0
        with pytest.raises(ValueError):
            mesh_small.locate(-0.5, 0.0)

    def test_grid_symmetry(self, mesh_small):
        assert np.allclose(mesh_small.ys, -mesh_small.ys[::-1])
        assert np.allclose(mesh_small.xs, np.pi - mesh_small.xs[::-1])


class TestAssembly:
    def test_region_additivity_is_exact_to_rounding(self, mesh_small, params):
        # integrals over D and its complement add with no quadrature or
        # cut-cell error; only final-rounding ulps may differ
        sel = np.zeros((mesh_small.ny, mesh_small.nx), dtype=bool)
        sel[:, : mesh_small.nx // 3] = True
        sel[2, 5] = True
        full = assemble_bilinear(mesh_small, params).matrix
        part = (assemble_bilinear(mesh_small, params, region=sel).matrix
                + assemble_bilinear(mesh_small, params, region=~sel).matrix)
        diff = (full - part)
        scale = np.max(np.abs(full.data))
        assert diff.nnz == 0 or np.max(np.abs(diff.data)) <= 1e-15 * scale

    def test_spd_on_constrained_subspace(self, params):
        mesh = Mesh(6, 2, params.half_width)
        k = assemble_bilinear(mesh, params).matrix
        free = mesh.free_dof_mask()
        dense = k[free][:, free].toarray()
        assert np.allclose(dense, dense.T, atol=1e-18)
        eigs = np.linalg.eigvalsh(dense)
        assert eigs.min() > 0.0

    def test_energy_of_sine_matches_closed_form(self, mesh_mid, params):
        # quadratic part of sin(x): integrand sin(x)^2, integral = pi * l
        fld = interpolate(mesh_mid, lambda x, y: np.sin(x),
                          lambda x, y: np.cos(x), lambda x, y: 0.0,
                          lambda x, y: 0.0)
        form = assemble_bilinear(mesh_mid, params)
        quad = fld.dofs @ (form.matrix @ fld.dofs)
        assert quad == pytest.approx(np.pi * params.half_width, rel=1e-5)

    def test_weighted_combination(self, mesh_small, params):
        sel = np.zeros((mesh_small.ny, mesh_small.nx), dtype=bool)
        sel[:, :4] = True
        alpha, beta = 0.5, 2.0
        full = assemble_bilinear(mesh_small, params)
        region = assemble_bilinear(mesh_small, params, region=sel)
        weighted = full.scaled(alpha) + region.scaled(beta - alpha)
        probe = np.sin(np.arange(mesh_small.n_dofs))
        lhs = weighted.matrix @ probe
        rhs = alpha * (full.matrix @ probe) + (beta - alpha) * (region.matrix @ probe)
        assert np.allclose(lhs, rhs, rtol=1e-13, atol=1e-18)


class TestLoads:
    def test_zero_load_gives_zero_functional(self, mesh_small):
        b = assemble_load(mesh_small, LoadSpec(density=0.0))
        assert np.all(b == 0.0)

    def test_point_mass_functional_is_point_evaluation(self, mesh_small):
        rng = np.random.default_rng(5)
        fld = DofField(mesh_small, rng.normal(size=mesh_small.n_dofs))
        for q in [(0.7, 0.03), (np.pi / 2, -0.1), (2.9, 0.0)]:
            b = assemble_load(mesh_small, LoadSpec.point(*q, weight=1.0))
            assert apply_functional(b, fld) == pytest.approx(
                point_eval(fld, q), rel=1e-12, abs=1e-14)

    def test_node_located_mass_reads_value_dof(self, mesh_small):
        i, j = 4, 2
        q = (mesh_small.xs[i], mesh_small.ys[j])
        b = assemble_load(mesh_small, LoadSpec.point(*q))
        fld = DofField.zeros(mesh_small)
        fld.dofs[4 * mesh_small.node_index(i, j) + DOF_VALUE] = 2.5
        assert apply_functional(b, fld) == pytest.approx(2.5, rel=1e-13)

    def test_antisym_pair_is_odd_functional(self, mesh_small):
        b = assemble_load(mesh_small, LoadSpec.antisym_pair(1.2, 0.07))
        rng = np.random.default_rng(9)
        fld = DofField(mesh_small, rng.normal(size=mesh_small.n_dofs))
        assert apply_functional(b, reflect_y(fld)) == pytest.approx(
            -apply_functional(b, fld), rel=1e-12)

    def test_mass_outside_plate_rejected(self, mesh_small):
        with pytest.raises(ValueError):
            assemble_load(mesh_small, LoadSpec.point(4.0, 0.0))

    def test_density_weighting_splits_by_region(self, mesh_small, params):
        sel = np.zeros((mesh_small.ny, mesh_small.nx), dtype=bool)
        sel[:, : mesh_small.nx // 2] = True
        mask = ReinforcementMask(sel, alpha=0.5, beta=2.0)
        b_w = assemble_load(mesh_small, LoadSpec(density=1.0), weight=mask)
        b_d = assemble_load(mesh_small, LoadSpec(density=1.0), weight=None)
        # weighted = alpha * plain + (beta - alpha) * plain-restricted-to-D
        mask_only = np.where(sel, 1.0, 0.0)
        b_region = assemble_load(
            mesh_small,
            LoadSpec(density=lambda x, y: mask_only[
                np.clip((np.asarray(y) + mesh_small.half_width) / mesh_small.hy, 0,
                        mesh_small.ny - 1).astype(int),
                np.clip(np.asarray(x) / mesh_small.hx, 0, mesh_small.nx - 1).astype(int)]))
        combo = 0.5 * b_d.astype(float) + 1.5 * b_region.astype(float)
        assert np.allclose(b_w.astype(float), combo, rtol=1e-12, atol=1e-18)

    def test_weight_with_point_masses_rejected(self, mesh_small):
        sel = np.ones((mesh_small.ny, mesh_small.nx), dtype=bool)
        mask = ReinforcementMask(sel, alpha=0.5, beta=2.0)
        load = LoadSpec(density=1.0, point_masses=((1.0, 0.0, 1.0),))
        with pytest.raises(ValueError):
            assemble_load(mesh_small, load, weight=mask)


class TestPointEval:
    def test_reproduces_bicubics_exactly(self, mesh_small):
        # tensor cubics lie in the element space: interpolation is exact
        fn = lambda x, y: (x ** 3 - 2 * x ** 2 + 3) * (y ** 2 + y)
        dfx = lambda x, y: (3 * x ** 2 - 4 * x) * (y ** 2 + y)
        dfy = lambda x, y: (x ** 3 - 2 * x ** 2 + 3) * (2 * y + 1)
        dfxy = lambda x, y: (3 * x ** 2 - 4 * x) * (2 * y + 1)
        fld = interpolate(mesh_small, fn, dfx, dfy, dfxy)
        rng = np.random.default_rng(2)
        l = mesh_small.half_width
        for _ in range(20):
            q = (rng.uniform(0, np.pi), rng.uniform(-l, l))
            assert point_eval(fld, q) == pytest.approx(fn(*q), rel=1e-11)

    def test_mid_element_matches_refined_interpolant(self, params):
        fn = lambda x, y: np.sin(x) * np.cosh(y)
        dfx = lambda x, y: np.cos(x) * np.cosh(y)
        dfy = lambda x, y: np.sin(x) * np.sinh(y)
        dfxy = lambda x, y: np.cos(x) * np.sinh(y)
        coarse = interpolate(Mesh(16, 4, params.half_width), fn, dfx, dfy, dfxy)
        fine = interpolate(Mesh(64, 16, params.half_width), fn, dfx, dfy, dfxy)
        rng = np.random.default_rng(14)
        l = params.half_width
        for _ in range(10):
            # coarse interpolation error is O(h^4) ~ 4e-6 at 16 columns
            q = (rng.uniform(0, np.pi), rng.uniform(-l, l))
            a, b = point_eval(coarse, q), point_eval(fine, q)
            assert a == pytest.approx(b, rel=1e-5, abs=1e-8)
            assert b == pytest.approx(fn(*q), rel=1e-7)

    def test_zero_trace_on_short_edges(self, mesh_small):
        rng = np.random.default_rng(4)
        fld = DofField(mesh_small, rng.normal(size=mesh_small.n_dofs))
        fld.dofs[~mesh_small.free_dof_mask()] = 0.0  # admissible field
        for y in np.linspace(-0.1, 0.1, 7):
            assert point_eval(fld, (0.0, y)) == pytest.approx(0.0, abs=1e-14)
            assert point_eval(fld, (np.pi, y)) == pytest.approx(0.0, abs=1e-14)

    def test_outside_rejected(self, mesh_small):
        fld = DofField.zeros(mesh_small)
        with pytest.raises(ValueError):
            point_eval(fld, (1.0, 1.0))


class TestSymmetry:
    def test_even_field_has_zero_odd_part(self, mesh_small):
        fld = interpolate(mesh_small, lambda x, y: np.sin(x) * np.cos(y),
                          lambda x, y: np.cos(x) * np.cos(y),
                          lambda x, y: -np.sin(x) * np.sin(y),
                          lambda x, y: -np.cos(x) * np.sin(y))
        even, odd = symmetry_decompose(fld)
        assert np.allclose(odd.dofs, 0.0, atol=1e-15)
        assert np.allclose(even.dofs, fld.dofs, rtol=1e-15)

    def test_linear_in_y_field_has_zero_even_part(self, mesh_small):
        fld = interpolate(mesh_small, lambda x, y: np.sin(x) * y,
                          lambda x, y: np.cos(x) * y,
                          lambda x, y: np.sin(x),
                          lambda x, y: np.cos(x))
        even, odd = symmetry_decompose(fld)
        assert np.allclose(even.dofs, 0.0, atol=1e-15)

    def test_parts_sum_and_are_energy_orthogonal(self, mesh_small, params):
        rng = np.random.default_rng(6)
        fld = DofField(mesh_small, rng.normal(size=mesh_small.n_dofs))
        even, odd = symmetry_decompose(fld)
        assert np.allclose(even.dofs + odd.dofs, fld.dofs, rtol=1e-15)
        k = assemble_bilinear(mesh_small, params).matrix
        inner = even.dofs @ (k @ odd.dofs)
        scale = np.sqrt((even.dofs @ (k @ even.dofs)) * (odd.dofs @ (k @ odd.dofs))) + 1e-30
        assert abs(inner) / scale < 1e-12

    def test_x_mirror_involution(self, mesh_small):
        rng = np.random.default_rng(8)
        fld = DofField(mesh_small, rng.normal(size=mesh_small.n_dofs))
        assert np.array_equal(reflect_x(reflect_x(fld)).dofs, fld.dofs)
        # mirrored field evaluates at mirrored points
        q = (0.9, 0.04)
        assert point_eval(reflect_x(fld), q) == pytest.approx(
            point_eval(fld, (np.pi - q[0], q[1])), rel=1e-11)


class TestEnergies:
    def test_zero_field_zero_load(self, mesh_small, params):
        fld = DofField.zeros(mesh_small)
        e = energy_value(fld, LoadSpec(density=0.0), params)
        assert e == 0.0

    def test_degenerate_weights_collapse_to_base(self, mesh_small, params):
        rng = np.random.default_rng(10)
        fld = DofField(mesh_small, rng.normal(size=mesh_small.n_dofs))
        load = LoadSpec(density=lambda x, y: np.sin(x))
        sel = np.zeros((mesh_small.ny, mesh_small.nx), dtype=bool)
        sel[:, :5] = True
        mask = ReinforcementMask(sel, alpha=1.0, beta=1.0)
        base = energy_value(fld, load, params)
        e1 = energy_value(fld, load, params, variant="E1", mask=mask)
        assert e1 == pytest.approx(base, rel=1e-14)

    def test_quadratic_part_matches_matrix_form(self, mesh_small, params):
        rng = np.random.default_rng(12)
        fld = DofField(mesh_small, rng.normal(size=mesh_small.n_dofs))
        e = energy_value(fld, LoadSpec(density=0.0), params)
        k = assemble_bilinear(mesh_small, params).matrix
        assert e == pytest.approx(0.5 * fld.dofs @ (k @ fld.dofs), rel=1e-12)

    def test_density_weighted_rejects_point_masses(self, mesh_small, params):
        fld = DofField.zeros(mesh_small)
        sel = np.ones((mesh_small.ny, mesh_small.nx), dtype=bool)
        mask = ReinforcementMask(sel, alpha=0.5, beta=2.0)
        load = LoadSpec(point_masses=((1.0, 0.0, 1.0),))
        with pytest.raises(ValueError):
            energy_value(fld, load, params, variant="E2", mask=mask)


class TestReinforcementMask:
    def test_density_invariants(self):
        sel = np.ones((4, 16), dtype=bool)
        with pytest.raises(ValueError):
            ReinforcementMask(sel, alpha=1.5, beta=2.0)
        with pytest.raises(ValueError):
            ReinforcementMask(sel, alpha=0.5, beta=0.8)

    def test_area_balance_checked(self, mesh_small):
        # target |D| = |Omega| (1-a)/(b-a) = 1/4 of the plate = 4 columns
        sel = np.zeros((mesh_small.ny, mesh_small.nx), dtype=bool)
        sel[:, :4] = True
        mask = ReinforcementMask(sel, alpha=0.5, beta=2.5)
        assert mask.area_defect(mesh_small) == pytest.approx(0.0, abs=1e-9)
        mask.validate(mesh_small)
        bad = ReinforcementMask(np.zeros_like(sel), alpha=0.5, beta=2.5)
        with pytest.raises(ValueError):
            bad.validate(mesh_small)

    def test_complement_and_indicator(self, mesh_small):
        mask = ReinforcementMask.from_indicator(
            mesh_small, lambda x, y: x < np.pi / 2, alpha=0.5, beta=2.0)
        comp = mask.complement()
        assert np.array_equal(mask.elements, ~comp.elements)
        assert np.count_nonzero(mask.elements) == mesh_small.nx * mesh_small.ny // 2


class TestExport:
    def test_csv_roundtrip(self, mesh_small, tmp_path):
        rng = np.random.default_rng(13)
        fld = DofField(mesh_small, rng.normal(size=mesh_small.n_dofs))
        path = tmp_path / "field.csv"
        field_to_csv(fld, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,u,ux,uy,uxy"
        assert len(lines) == 1 + mesh_small.n_nodes
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == 0.0 and first[1] == -mesh_small.half_width
        assert first[2] == fld.dofs[0]  # 17 significant digits round-trip
