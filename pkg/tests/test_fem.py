import math

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from contrastbands import fem
from contrastbands.coeff import ContrastField, ContrastProfile, Periodic
from contrastbands.eig import solve_smallest

from conftest import LATTICE, mirrored, periodic

phases = st.floats(0.0, 2 * math.pi, allow_nan=False)


def cell_mesh(field, target_h=0.05, frame_h=None):
    return fem.build_mesh(fem.cell_domain(field), field, target_h, frame_h)


def uniform_cell(h):
    n1, n2 = math.ceil(1.4 / h), math.ceil(1.0 / h)
    return fem.StructuredMesh(np.linspace(-0.7, 0.7, n1 + 1), np.linspace(-0.5, 0.5, n2 + 1))


def test_mesh_counts_at_eps_over_three():
    f = periodic(0.04)
    mesh = cell_mesh(f, target_h=0.04 / 3)
    assert mesh.n1 >= 105 and mesh.n2 >= 75


def test_mesh_resolution_and_alignment():
    f = periodic(0.04)
    mesh = cell_mesh(f, target_h=0.025)
    for axis, coords in enumerate((mesh.x, mesh.y)):
        half = LATTICE.half_widths[axis]
        for line in (half - 0.04, half - 0.08, -(half - 0.04), -(half - 0.08)):
            assert np.min(np.abs(coords - line)) < 1e-12
        mid = 0.5 * (coords[1:] + coords[:-1])
        size = np.diff(coords)
        near = half - np.abs(mid) < 2 * 0.04
        assert np.all(size[near] <= 0.04 / 3 + 1e-12)
        assert np.all(size <= 0.025 + 1e-12)


def test_coarse_target_still_resolves_frames():
    f = periodic(0.08)
    mesh = cell_mesh(f, target_h=10.0)
    assert mesh.n1 >= 1 and mesh.n2 >= 1
    assert np.diff(mesh.x).min() <= 0.08 / 3 + 1e-12


def test_strip_of_three_cells_triples_n1():
    f = periodic(0.04)
    one = fem.build_mesh(fem.cell_domain(f), f, 0.025)
    three = fem.build_mesh(fem.cell_domain(f, (3, 1)), f, 0.025)
    assert three.n1 == 3 * one.n1 and three.n2 == one.n2


def test_huge_mesh_rejected():
    with pytest.raises(fem.MeshError):
        fem.build_mesh(((-1e6, 1e6), (-0.5, 0.5)), periodic(0.04), 0.025)
    with pytest.raises(fem.MeshError):
        fem.build_mesh(((0.0, 0.0), (-0.5, 0.5)), periodic(0.04), 0.025)


def test_mirrored_mesh_is_symmetric():
    f = mirrored(0.04)
    x = 0.35 + 0.7 + 2 * 2 * 0.7
    mesh = fem.build_mesh(((-x, x), (-0.5, 0.5)), f, 0.025)
    assert np.allclose(mesh.x, -mesh.x[::-1], atol=1e-12)
    assert np.min(np.abs(mesh.x)) == 0.0


def test_element_orientation():
    mesh = fem.StructuredMesh(np.array([0.0, 1.0, 3.0]), np.array([0.0, 2.0]))
    xs, ys = mesh.node_coordinates()
    first = mesh.element_nodes()[0]
    assert list(zip(xs[first], ys[first])) == [(0, 0), (1, 0), (1, 2), (0, 2)]


@pytest.mark.parametrize("field, domain", [
    (periodic(0.04), ((-0.7, 0.7), (-0.5, 0.5))),
    (periodic(0.04, homogeneous=True), ((-0.7, 0.7), (-0.5, 0.5))),
    (mirrored(0.04), ((-1.05, 1.05), (-0.5, 0.5))),
])
def test_constant_in_kernel_and_mass_sums_to_area(field, domain):
    mesh = fem.build_mesh(domain, field, 0.05)
    k, m = fem.assemble_nodal(mesh, field)
    one = np.ones(mesh.num_nodes)
    assert np.linalg.norm(k @ one) <= 1e-10 * sp.linalg.norm(k)
    assert m.sum() == pytest.approx(mesh.area, rel=1e-10)


def test_reduced_constant_in_kernel_at_zero_phase():
    f = periodic(0.08, homogeneous=True)
    p = fem.assemble(cell_mesh(f), f, fem.BoundarySpec.bloch(0.0, 0.0))
    one = np.ones(p.dim)
    assert np.linalg.norm(p.K @ one) <= 1e-10 * sp.linalg.norm(p.K)


@settings(max_examples=15, deadline=None)
@given(phases, phases)
def test_hermitian_and_positive_mass(phi1, phi2):
    f = periodic(0.08)
    mesh = cell_mesh(f, 0.08)
    p = fem.assemble(mesh, f, fem.BoundarySpec.bloch(phi1, phi2))
    for a in (p.K, p.M):
        assert sp.linalg.norm(a - a.conj().T) <= 1e-12 * sp.linalg.norm(a)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((p.dim, 5)) + 1j * rng.standard_normal((p.dim, 5))
    assert np.all(np.real(np.einsum("ij,ij->j", u.conj(), p.M @ u)) > 0)


@settings(max_examples=10, deadline=None)
@given(phases, phases)
def test_conjugation_symmetry(phi1, phi2):
    f = periodic(0.08)
    mesh = cell_mesh(f, 0.08)
    k, m = fem.assemble_nodal(mesh, f)
    a = fem.reduce(k, m, mesh, fem.BoundarySpec.bloch(phi1, phi2), f)
    b = fem.reduce(k, m, mesh, fem.BoundarySpec.bloch(2 * math.pi - phi1, 2 * math.pi - phi2), f)
    assert abs(a.K.conj() - b.K).max() <= 1e-12 * abs(a.K).max()
    va = la.eigvalsh(a.K.toarray(), a.M.toarray())[:6]
    vb = la.eigvalsh(b.K.toarray(), b.M.toarray())[:6]
    assert np.allclose(va, vb, rtol=1e-9, atol=1e-9)


def test_bloch_needs_whole_periods():
    f = periodic(0.04)
    mesh = fem.build_mesh(((-0.7, 0.5), (-0.5, 0.5)), f, 0.05)
    with pytest.raises(fem.AssemblyError):
        fem.assemble(mesh, f, fem.BoundarySpec.bloch(0.0, 0.0))


def test_nonfinite_coefficient_rejected():
    class Broken:
        def __call__(self, x1, x2):
            return np.full(np.broadcast(x1, x2).shape, np.nan)
    mesh = uniform_cell(0.2)
    with pytest.raises(fem.AssemblyError):
        fem.element_matrices(mesh, Broken())


def test_bad_side_condition():
    with pytest.raises(ValueError):
        fem.BoundarySpec(None, None, ("D", "X"))


def test_reduction_operator_shapes():
    mesh = uniform_cell(0.1)
    p, dofs = fem.reduction_operator(mesh, fem.BoundarySpec.bloch(0.3, 0.0))
    assert p.shape == (mesh.num_nodes, mesh.n1 * mesh.n2)
    p, dofs = fem.reduction_operator(mesh, fem.BoundarySpec.dirichlet())
    assert p.shape[1] == (mesh.n1 - 1) * (mesh.n2 - 1)
    p, dofs = fem.reduction_operator(mesh, fem.BoundarySpec(None, None, ("N", "N"), ("N", "D")))
    assert p.shape[1] == (mesh.n1 + 1) * mesh.n2


@pytest.mark.parametrize("phase, expected", [
    ((0.0, 0.0), [0.0, (math.pi / 0.7) ** 2, (math.pi / 0.7) ** 2]),
    ((math.pi, 0.0), [(math.pi / 1.4) ** 2]),
])
def test_oracle_values(phase, expected):
    vals = fem.constant_coefficient_oracle(LATTICE, phase, len(expected))
    assert np.allclose(vals, expected, rtol=1e-12, atol=1e-12)
    assert (math.pi / 0.7) ** 2 == pytest.approx(20.142, abs=1e-3)
    assert (math.pi / 1.4) ** 2 == pytest.approx(5.0355, abs=1e-4)


@given(phases, phases, st.integers(1, 20))
def test_oracle_sorted_nonnegative(phi1, phi2, count):
    vals = fem.constant_coefficient_oracle(LATTICE, (phi1, phi2), count)
    assert len(vals) == count and np.all(vals >= 0) and np.all(np.diff(vals) >= 0)


def test_patch_test_ratio():
    f = ContrastField(LATTICE, ContrastProfile(0.04), Periodic(), homogeneous=True)
    exact = fem.constant_coefficient_oracle(LATTICE, (0.0, 0.0), 2)
    errs = []
    for h in (0.05, 0.025):
        mesh = uniform_cell(h)
        p = fem.assemble(mesh, f, fem.BoundarySpec.bloch(0.0, 0.0))
        vals = solve_smallest(p, 2, vectors=False).values
        assert abs(vals[0]) < 1e-9
        errs.append(abs(vals[1] - exact[1]))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_dirichlet_monotonicity():
    f = periodic(0.04)
    mesh = cell_mesh(f, 0.05)
    k, m = fem.assemble_nodal(mesh, f)
    d = fem.reduce(k, m, mesh, fem.BoundarySpec.dirichlet(), f)
    b = fem.reduce(k, m, mesh, fem.BoundarySpec.bloch(0.0, 0.0), f)
    vd = solve_smallest(d, 1, vectors=False).values[0]
    vb = solve_smallest(b, 1, vectors=False).values[0]
    assert vd >= vb


def test_expand_applies_phase():
    mesh = uniform_cell(0.1)
    p = fem.assemble(mesh, periodic(0.08, homogeneous=True), fem.BoundarySpec.bloch(0.5, 0.0))
    u = p.expand(np.ones(p.dim))
    grid = u.reshape(len(mesh.y), len(mesh.x))
    assert np.allclose(grid[:, -1], np.exp(0.5j) * grid[:, 0])


def test_dump_coo(tmp_path):
    a = sp.csr_matrix(np.array([[1.0, 0.0], [2.0 + 1j, 3.0]]))
    path = tmp_path / "a.txt"
    fem.dump_coo(a, path)
    lines = path.read_text().splitlines()
    assert lines[0].split() == ["0", "0", "1", "0"]
    assert lines[1].split()[:2] == ["1", "0"] and float(lines[1].split()[3]) == 1.0
    assert len(lines) == 3
