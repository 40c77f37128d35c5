import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from cdgfem.analysis import coercivity_ratio, triple_norm
from cdgfem.assembly import (ProblemSpec, assemble_advection, assemble_diffusion,
                             assemble_reaction, assemble_system, penalty_diagnostic)
from cdgfem.experiments.problem import velocity, velocity_divergence
from cdgfem.experiments.runner import block_elements
from cdgfem.fem import DiscreteFunction, build_space, element_quadrature, values_at_quadrature
from cdgfem.mesh import EDGE_J, build_structured_mesh, decompose
from cdgfem.solver import solve


def const(bx, by):
    return lambda x, y: (np.full(np.shape(x), bx), np.full(np.shape(x), by))


def ones(space):
    return np.ones(space.n_dofs)


def test_advection_of_constant_equals_inflow_length():
    for n in (1, 4):
        mesh = build_structured_mesh(n)
        d = decompose(mesh, [], const(1.0, 0.0))
        space = build_space(mesh, d, "dG")
        spec = ProblemSpec(1.0, const(1.0, 0.0))
        A = assemble_advection(space, d, spec)
        assert ones(space) @ A @ ones(space) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("c, expected", [(lambda x, y: 1.0 + 0 * x, 1.0),
                                         (lambda x, y: 0 * x, 0.0),
                                         (lambda x, y: x, 0.5)])
def test_reaction_of_constant(c, expected):
    mesh = build_structured_mesh(3)
    space = build_space(mesh, kind="dG")
    R = assemble_reaction(space, ProblemSpec(1.0, const(0, 0), c=c))
    assert ones(space) @ R @ ones(space) == pytest.approx(expected, abs=1e-14)


@pytest.fixture(scope="module")
def setup8():
    mesh = build_structured_mesh(8)
    d = decompose(mesh, block_elements(8, 5), velocity)
    spec = ProblemSpec(1e-3, velocity, velocity_divergence, sigma=10.0)
    return mesh, d, spec


@pytest.mark.parametrize("variant", ["standard", "decoupled"])
@pytest.mark.parametrize("kind", ["cG", "dG", "cdG"])
def test_diffusion_symmetric(setup8, kind, variant):
    mesh, d, spec = setup8
    D = assemble_diffusion(build_space(mesh, d, kind), d, spec, variant)
    assert abs(D - D.T).max() <= 1e-13


def test_diffusion_of_continuous_function_is_h1_seminorm(setup8):
    mesh, d, spec = setup8
    for k in (1, 2):
        space = build_space(mesh, kind="cG", k=k)
        w = space.interpolate(lambda x, y: x + 2 * y + 3 * x * y)
        D = assemble_diffusion(space, d, spec)
        X, Y, wJ = element_quadrature(mesh, 6)
        exact = np.sum(wJ * ((1 + 3 * Y) ** 2 + (2 + 3 * X) ** 2))
        assert w.coefficients @ D @ w.coefficients == pytest.approx(exact, rel=1e-12)
    # the same continuous function in dG also picks up boundary penalty terms
    dspace = build_space(mesh, kind="dG")
    wd = dspace.interpolate(lambda x, y: 0 * x + 1.0)
    Dd = assemble_diffusion(dspace, d, spec)
    assert wd.coefficients @ Dd @ wd.coefficients == pytest.approx(32 * 10.0 * 8 / 8, rel=1e-12)


def test_decoupled_difference_supported_on_interface(setup8):
    mesh, d, spec = setup8
    space = build_space(mesh, d, "cdG")
    diff = (assemble_diffusion(space, d, spec, "decoupled")
            - assemble_diffusion(space, d, spec, "standard")).tocoo()
    j_el = mesh.edge_elements[d.J].ravel()
    j_dofs = np.zeros(space.n_dofs, dtype=bool)
    j_dofs[space.element_dofs[j_el].ravel()] = True
    big = np.abs(diff.data) > 1e-14
    assert big.any()
    assert np.all(j_dofs[diff.row[big]] & j_dofs[diff.col[big]])


def test_degenerate_decompositions(setup8):
    mesh, _, spec = setup8
    spec = ProblemSpec(1e-3, velocity, velocity_divergence, f=lambda x, y: x - y,
                       g=lambda x, y: x * y, sigma=10.0)
    all_cg = decompose(mesh, np.ones(64, bool), velocity)
    all_dg = decompose(mesh, np.zeros(64, bool), velocity)
    for variant in ("standard", "decoupled"):
        a = assemble_system(build_space(mesh, all_cg, "cdG"), all_cg, spec, variant)
        b = assemble_system(build_space(mesh, all_cg, "cG"), all_cg, spec, variant)
        assert abs(a.matrix - b.matrix).max() <= 1e-14
        assert np.max(np.abs(a.rhs - b.rhs)) <= 1e-14
        a = assemble_system(build_space(mesh, all_dg, "cdG"), all_dg, spec, variant)
        b = assemble_system(build_space(mesh, all_dg, "dG"), all_dg, spec, "standard")
        assert abs(a.matrix - b.matrix).max() <= 1e-14
        assert np.max(np.abs(a.rhs - b.rhs)) <= 1e-14


@pytest.mark.parametrize("kind", ["cG", "dG", "cdG"])
def test_manufactured_linear_solution(setup8, kind):
    mesh, d, _ = setup8
    b = const(1.0, 1.0)
    dd = decompose(mesh, d.element_is_cg, b)
    spec = ProblemSpec(0.01, b, c=lambda x, y: 1.0 + 0 * x,
                       f=lambda x, y: 2.0 + x + y, g=lambda x, y: x + y)
    space = build_space(mesh, dd, kind)
    x, _ = solve(assemble_system(space, dd, spec))
    nodal = space.dof_coords.sum(axis=1)
    assert np.max(np.abs(x - nodal)) <= 1e-10


def test_decoupled_form_is_not_consistent_across_interface(setup8):
    mesh, d, _ = setup8
    b = const(1.0, 1.0)
    dd = decompose(mesh, d.element_is_cg, b)
    spec = ProblemSpec(0.01, b, c=lambda x, y: 1.0 + 0 * x,
                       f=lambda x, y: 2.0 + x + y, g=lambda x, y: x + y)
    space = build_space(mesh, dd, "cdG")
    x, _ = solve(assemble_system(space, dd, spec, "decoupled"))
    assert np.max(np.abs(x - space.dof_coords.sum(axis=1))) > 1e-6


@pytest.mark.parametrize("kind", ["dG", "cdG"])
def test_advection_reaction_identity(setup8, kind):
    mesh, d, spec = setup8
    spec = ProblemSpec(1e-3, velocity, velocity_divergence, c=lambda x, y: 0.5 + x * y)
    space = build_space(mesh, d, kind)
    A = assemble_advection(space, d, spec) + assemble_reaction(space, spec)
    rng = np.random.default_rng(1)
    for _ in range(20):
        # the identity holds on the homogeneous space: shared boundary values vanish
        w = rng.standard_normal(space.n_dofs)
        w[space.constrained_dofs] = 0.0
        rep = triple_norm(DiscreteFunction(space, w), d, spec)
        assert w @ A @ w == pytest.approx(rep.ar2, rel=1e-10)


def test_coercivity_small(setup8):
    mesh, d, spec = setup8
    for kind in ("dG", "cdG"):
        space = build_space(mesh, d, kind)
        for variant in ("standard", "decoupled"):
            A = assemble_system(space, d, spec.homogeneous(), variant).matrix
            assert coercivity_ratio(A, space, d, spec, n_samples=30).min_ratio >= 0.25


def test_rhs_linear_in_data(setup8):
    mesh, d, _ = setup8
    space = build_space(mesh, d, "cdG")

    def rhs(f, g):
        spec = ProblemSpec(1e-3, velocity, velocity_divergence, f=f, g=g)
        return assemble_system(space, d, spec).rhs

    f1, f2 = (lambda x, y: np.sin(x)), (lambda x, y: x * y)
    g1, g2 = (lambda x, y: x + 0 * y), (lambda x, y: np.cos(y) + 0 * x)
    combo = rhs(lambda x, y: 2 * f1(x, y) - f2(x, y), lambda x, y: 2 * g1(x, y) - g2(x, y))
    np.testing.assert_allclose(combo, 2 * rhs(f1, g1) - rhs(f2, g2), atol=1e-13)


def test_constrained_rows_are_identity(setup8):
    mesh, d, spec = setup8
    space = build_space(mesh, d, "cdG")
    spec = ProblemSpec(1e-3, velocity, velocity_divergence, g=lambda x, y: 3.0 + x)
    sys_ = assemble_system(space, d, spec)
    rows = sys_.matrix[space.constrained_dofs]
    assert rows.nnz == space.constrained_dofs.size
    np.testing.assert_array_equal(rows[:, space.constrained_dofs].diagonal(), 1.0)
    np.testing.assert_allclose(sys_.rhs[space.constrained_dofs],
                               3.0 + space.dof_coords[space.constrained_dofs, 0])


def test_matrix_market_roundtrip(setup8, tmp_path):
    mesh, d, spec = setup8
    sys_ = assemble_system(build_space(mesh, d, "cdG"), d, spec)
    sys_.to_matrix_market(tmp_path / "A.mtx")
    B = sp.csr_matrix(scipy.io.mmread(tmp_path / "A.mtx"))
    assert abs(B - sys_.matrix).max() <= 1e-15 * abs(sys_.matrix).max()


def test_mismatched_inputs(setup8):
    mesh, d, spec = setup8
    other = decompose(mesh, block_elements(8, 3), velocity)
    space = build_space(mesh, d, "cdG")
    with pytest.raises(ValueError):
        assemble_system(space, other, spec)
    with pytest.raises(ValueError):
        assemble_diffusion(space, d, spec, "weird")
    with pytest.raises(ValueError):
        ProblemSpec(0.0, velocity)
    with pytest.raises(ValueError):
        ProblemSpec(1e-3, velocity, sigma=-1.0)
    with pytest.raises(ValueError):
        ProblemSpec(1e-3, velocity, eps_max=1e-4)


def test_penalty_diagnostic_warns(setup8, caplog):
    mesh, d, _ = setup8
    space = build_space(mesh, d, "dG")
    good = ProblemSpec(1e-3, velocity, sigma=10.0)
    assert penalty_diagnostic(space, d, good, n_samples=10) >= 0.5
    bad = ProblemSpec(1e-3, velocity, sigma=0.05)
    with caplog.at_level("WARNING"):
        assert penalty_diagnostic(space, d, bad, n_samples=10) < 0.5
    assert "sigma" in caplog.text


def test_gradient_of_solution_consistent(setup8):
    # values_at_quadrature gradients match finite differences of the nodal field
    mesh, d, _ = setup8
    space = build_space(mesh, d, "cdG", k=2)
    u = space.interpolate(lambda x, y: x ** 2 - x * y)
    X, Y, _ = element_quadrature(mesh, 3)
    _, grad = values_at_quadrature(u, 3)
    np.testing.assert_allclose(grad[..., 0], 2 * X - Y, atol=1e-12)
    np.testing.assert_allclose(grad[..., 1], -X, atol=1e-12)
