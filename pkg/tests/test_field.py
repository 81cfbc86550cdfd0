import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldwr.field import (
    MU0,
    NU0,
    BrauerReluctivity,
    CoilSpec,
    ConstantReluctivity,
    FieldModel,
    FieldModelError,
    LinearStiffness,
    Material,
    assemble_fe,
    builtin_field_model,
    equivalent_inductance,
    eval_field_residual,
    export_matrix_model,
    load_matrix_model,
    transformer_lite,
    validate_assumptions,
)
from fieldwr.mesh import Mesh2D, MeshError, read_mesh, structured_mesh, write_mesh


def one_dof(M=0.0, K=2.0, X=1.0):
    return FieldModel(np.array([[M]]), LinearStiffness(np.array([[K]])), np.array([[X]]))


def unit_coil(region=0, turns=1.0):
    return [CoilSpec("c", turns, ((region, 1),))]


# oracles: P1 element matrices from the barycentric coordinate system


def p1_gradients(p):
    # phi_i(x, y) = c0 + c1 x + c2 y with phi_i(p_j) = delta_ij
    V = np.column_stack([np.ones(3), p])
    coeff = np.linalg.inv(V)
    return coeff[1:].T


def p1_stiffness(p):
    area = 0.5 * abs(np.linalg.det(np.column_stack([p[1] - p[0], p[2] - p[0]])))
    g = p1_gradients(p)
    return area * g @ g.T


def p1_mass(p):
    area = 0.5 * abs(np.linalg.det(np.column_stack([p[1] - p[0], p[2] - p[0]])))
    return area / 12.0 * (np.ones((3, 3)) + np.eye(3))


def dense_oracle(mesh, sigma, nu):
    n = mesh.n_vertices
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    for t, tri in enumerate(mesh.triangles):
        p = mesh.vertices[tri]
        K[np.ix_(tri, tri)] += nu[t] * p1_stiffness(p)
        M[np.ix_(tri, tri)] += sigma[t] * p1_mass(p)
    free = np.setdiff1d(np.arange(n), mesh.dirichlet)
    return M[np.ix_(free, free)], K[np.ix_(free, free)]


def test_three_by_three_mesh_stiffness():
    mesh = structured_mesh(3)
    model = assemble_fe(mesh, {0: Material(0.0, 1.0)}, unit_coil())
    assert model.n_dof == 1
    assert model.K(np.zeros(1)).toarray() == pytest.approx(np.array([[4.0]]))


def test_all_dirichlet_is_rejected():
    mesh = Mesh2D([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [0], [0, 1, 2])
    with pytest.raises(FieldModelError, match="empty model"):
        assemble_fe(mesh, {0: Material(0.0, 1.0)}, unit_coil())


def test_zero_conductivity_gives_zero_mass():
    model = assemble_fe(structured_mesh(5), {0: Material(0.0, 1.0)}, unit_coil())
    assert model.M.nnz == 0 or abs(model.M).max() == 0
    assert len(model.algebraic_rows()) == model.n_dof


def test_negative_conductivity_rejected():
    with pytest.raises(FieldModelError, match="non-negative"):
        Material(-1.0, 1.0)


def test_missing_coupled_coil():
    with pytest.raises(FieldModelError, match="coupled coil"):
        assemble_fe(structured_mesh(3), {0: Material()}, [CoilSpec("c", 1.0, ((0, 1),), coupled=False)])


def test_empty_coil_region():
    with pytest.raises(FieldModelError, match="empty"):
        assemble_fe(structured_mesh(3), {0: Material()}, unit_coil(region=7))


def test_assembly_matches_elementwise_oracle():
    def region(x, y):
        return int(x > 0.7) + 2 * int(y > -0.3)

    mesh = structured_mesh(6, region, extent=(0.0, 2.0, -1.0, 0.5))
    materials = {0: Material(0.0, 1.0), 1: Material(3.0, 2.5), 2: Material(0.5, 7.0), 3: Material(1.0, 0.2)}
    sigma = np.array([materials[r].sigma for r in mesh.regions])
    nu = np.array([materials[r].nu.nu for r in mesh.regions])
    model = assemble_fe(mesh, materials, [CoilSpec("c", 3.0, ((1, 1), (2, -1)))])
    M_ref, K_ref = dense_oracle(mesh, sigma, nu)
    np.testing.assert_allclose(model.M.toarray(), M_ref, atol=1e-14)
    np.testing.assert_allclose(model.K(None).toarray(), K_ref, atol=1e-12)


def test_coupling_column_integrates_winding_density():
    mesh = structured_mesh(9, lambda x, y: int(0.25 < x < 0.75 and 0.25 < y < 0.75))
    model = assemble_fe(mesh, {0: Material(), 1: Material()}, [CoilSpec("c", 20.0, ((1, 1),))])
    # partition of unity: sum_i int chi phi_i = int chi = turns
    assert model.X.sum() == pytest.approx(20.0)


def test_transformer_properties(transformer):
    assert transformer.n_ports == 1
    assert [c.coupled for c in transformer.coils] == [True, False]
    K = transformer.K(None)
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    # coils balance: go and return sides carry opposite total density
    assert transformer.X.sum() == pytest.approx(0.0, abs=1e-9)


def test_eddy_variant_decouples_mass_and_coils():
    model = builtin_field_model("transformer-lite-eddy")
    assert model.M.nnz > 0
    assert np.abs(model.X.T @ model.M.toarray()).max() == 0.0


def test_equivalent_inductance_against_magnetic_circuit(transformer):
    # lumped ring: mean path 4 * 7/16, leg width 3/16, mu_r 1000, 50 turns
    reluctance = 4 * (7 / 16) / (1000 * MU0 * (3 / 16))
    L_ring = 50.0**2 / reluctance
    L_eq = equivalent_inductance(transformer)[0, 0]
    # the fringing air paths add inductance on top of the ring
    assert L_ring < L_eq < 1.3 * L_ring


def test_refinement_rate_of_equivalent_inductance():
    values = [equivalent_inductance(builtin_field_model("transformer-lite", n=n))[0, 0] for n in (17, 33, 65)]
    d1, d2 = values[1] - values[0], values[2] - values[1]
    assert d1 > d2 > 0
    assert 2.0 <= d1 / d2 <= 4.5


def test_brauer_jacobian_matches_finite_differences():
    model = builtin_field_model("transformer-lite-nonlinear", n=17)
    rng = np.random.default_rng(3)
    a = 5e-3 * rng.standard_normal(model.n_dof)
    v = rng.standard_normal(model.n_dof)
    h = 1e-7
    fd = (model.Ka(a + h * v) - model.Ka(a - h * v)) / (2 * h)
    np.testing.assert_allclose(model.dKa(a) @ v, fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())


def test_brauer_law_is_bounded_and_increasing():
    law = BrauerReluctivity()
    b2 = np.linspace(0.0, 2.5**2, 50)
    assert (np.diff(law(b2)) > 0).all()
    assert law(0.0) == pytest.approx(3.8 + NU0 / 5000)
    with pytest.raises(FieldModelError):
        BrauerReluctivity(k3=0.0)


def test_one_dof_residual_and_solve():
    model = one_dof()
    r = eval_field_residual(model, np.array([1.0]), np.array([0.0]), 1.0, [2.0], [1.0])
    np.testing.assert_allclose(r, 0.0)
    # the residual is affine: solve the 2x2 system directly
    A = np.array([[2.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(np.linalg.solve(A, [0.0, 1.0]), [1.0, 2.0])
    with pytest.raises(ValueError):
        eval_field_residual(model, [1.0], [0.0], 0.0, [2.0], [1.0])


def test_stationary_state_has_zero_residual(transformer):
    i = np.array([0.3])
    a = spla.spsolve(transformer.K(None).tocsc(), transformer.X @ i)
    r = eval_field_residual(transformer, a, a, 0.01, i, [0.0])
    assert np.abs(r).max() <= 1e-9 * np.abs(transformer.X).max()
    assert transformer.port_current(a) == pytest.approx(i)


def test_dimension_mismatch():
    with pytest.raises(FieldModelError, match="dimension"):
        FieldModel(np.eye(2), LinearStiffness(np.eye(3)), np.ones((2, 1)))


def _write_model(tmp_path, M, K, X):
    for name, A in zip("MKX", (M, K, X)):
        scipy.io.mmwrite(str(tmp_path / f"{name}.mtx"), sp.coo_matrix(A))
    return str(tmp_path)


def test_load_one_dof(tmp_path):
    model = load_matrix_model(_write_model(tmp_path, [[0.0]], [[2.0]], [[1.0]]))
    assert model.n_dof == 1 and model.n_ports == 1
    assert model.K(None).toarray() == pytest.approx(np.array([[2.0]]))


def test_load_rejects_rank_deficient_coupling(tmp_path):
    X = np.array([[1.0, 2.0], [1.0, 2.0]])
    with pytest.raises(FieldModelError, match="X rank-deficient"):
        load_matrix_model(_write_model(tmp_path, np.zeros((2, 2)), np.eye(2), X))


def test_load_rejects_asymmetric_mass(tmp_path):
    M = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(FieldModelError, match="not symmetric"):
        load_matrix_model(_write_model(tmp_path, M, np.eye(2), np.ones((2, 1))))
    model = load_matrix_model(str(tmp_path), strict=False)
    assert not validate_assumptions(model, samples=5).symmetric.ok


def test_load_dimension_mismatch(tmp_path):
    with pytest.raises(FieldModelError, match="dimension"):
        load_matrix_model(_write_model(tmp_path, np.eye(2), np.eye(3), np.ones((2, 1))))


def test_export_round_trip(tmp_path):
    model = builtin_field_model("transformer-lite-eddy", n=17)
    export_matrix_model(model, str(tmp_path))
    again = load_matrix_model(str(tmp_path))
    K = model.K(None)
    assert abs(again.M - model.M).max() <= 1e-12 * abs(model.M).max()
    assert abs(again.K(None) - K).max() <= 1e-12 * abs(K).max()
    np.testing.assert_array_equal(again.X, model.X)


def test_export_nonlinear_rejected(tmp_path):
    with pytest.raises(FieldModelError, match="linear"):
        export_matrix_model(builtin_field_model("transformer-lite-nonlinear", n=17), str(tmp_path))


def test_validation_of_builtins():
    for name in ("transformer-lite", "transformer-lite-eddy"):
        report = validate_assumptions(builtin_field_model(name, n=17), samples=5)
        assert report.passed, report.to_text()


def test_validation_flags_negative_mass():
    model = FieldModel(-10 * np.eye(2), LinearStiffness(np.eye(2)), np.ones((2, 1)))
    report = validate_assumptions(model, samples=5)
    assert report.symmetric.ok
    assert not report.pencil_positive_definite.ok
    assert not report.passed
    assert "(b) M + K(a) positive definite: FAIL" in report.to_text()


def test_validation_flags_rank_deficient_coupling():
    model = FieldModel(np.zeros((2, 2)), LinearStiffness(np.eye(2)), np.ones((2, 2)))
    assert not validate_assumptions(model, samples=2).coupling_full_rank.ok


def test_validation_brauer_is_monotone():
    model = builtin_field_model("transformer-lite-nonlinear", n=17)
    report = validate_assumptions(model, samples=10, monotone_samples=40, seed=1)
    assert report.strongly_monotone.ok
    assert report.monotonicity_constant > 0


def test_unknown_builtin():
    with pytest.raises(FieldModelError, match="unknown builtin"):
        builtin_field_model("nope")
    with pytest.raises(FieldModelError, match="divisible"):
        transformer_lite(n=20)


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 9), st.floats(0.1, 10.0), st.floats(0.0, 5.0))
def test_assembled_matrices_are_symmetric_and_semidefinite(n, nu, sigma):
    model = assemble_fe(structured_mesh(n), {0: Material(sigma, nu)}, unit_coil())
    K = model.K(None).toarray()
    M = model.M.toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-12 * np.abs(K).max())
    np.testing.assert_allclose(M, M.T, atol=1e-14)
    assert np.linalg.eigvalsh(K).min() > 0
    assert np.linalg.eigvalsh(M).min() >= -1e-14


def test_mesh_round_trip(tmp_path):
    mesh, _, _ = transformer_lite(n=17)
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    again = read_mesh(path)
    np.testing.assert_array_equal(again.vertices, mesh.vertices)
    np.testing.assert_array_equal(again.triangles, mesh.triangles)
    np.testing.assert_array_equal(again.regions, mesh.regions)
    np.testing.assert_array_equal(again.dirichlet, mesh.dirichlet)


def test_mesh_errors(tmp_path):
    with pytest.raises(MeshError, match="degenerate"):
        Mesh2D([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], [0], [0, 1, 2])
    with pytest.raises(MeshError, match="degenerate or negatively oriented"):
        Mesh2D([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]], [0], [0, 1, 2])
    with pytest.raises(MeshError, match="Dirichlet"):
        Mesh2D([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [0], [0, 1])
    bad = tmp_path / "bad.txt"
    bad.write_text("3\n0 0\n1 0\n")
    with pytest.raises(MeshError, match="malformed"):
        read_mesh(bad)


def test_constant_law_rejects_nonpositive():
    with pytest.raises(FieldModelError):
        ConstantReluctivity(0.0)
