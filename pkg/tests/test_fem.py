import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from cdgfem.experiments.problem import velocity
from cdgfem.experiments.runner import block_elements
from cdgfem.fem import (DiscreteFunction, build_space, element_quadrature, evaluate,
                        evaluate_gradient, gauss_rule, inject, lobatto_nodes, project_PiD,
                        reference_element)
from cdgfem.mesh import build_structured_mesh, decompose


def test_gauss_one_and_two_points():
    r1 = gauss_rule(1)
    np.testing.assert_allclose(r1.points, [[0.0, 0.0]])
    np.testing.assert_allclose(r1.weights, [4.0])
    r2 = gauss_rule(2)
    g = 1 / np.sqrt(3)
    assert sorted(map(tuple, np.round(r2.points, 15))) == sorted(
        (round(a, 15), round(b, 15)) for a in (-g, g) for b in (-g, g))
    np.testing.assert_allclose(r2.weights, 1.0)


def test_gauss_x2y2_on_unit_square():
    mesh = build_structured_mesh(1, (-1.0, -1.0, 1.0, 1.0))
    X, Y, wJ = element_quadrature(mesh, 2)
    assert np.sum(wJ * X ** 2 * Y ** 2) == pytest.approx(4 / 9, abs=1e-15)


@pytest.mark.parametrize("q", range(1, 9))
def test_gauss_monomial_exactness(q):
    r = gauss_rule(q)
    for a in range(2 * q):
        for b in range(2 * q):
            exact = ((1 - (-1) ** (a + 1)) / (a + 1)) * ((1 - (-1) ** (b + 1)) / (b + 1))
            approx = np.sum(r.weights * r.points[:, 0] ** a * r.points[:, 1] ** b)
            assert approx == pytest.approx(exact, abs=1e-13)


@pytest.mark.parametrize("q", [0, 17, 2.5])
def test_gauss_rejects_bad_order(q):
    with pytest.raises(ValueError):
        gauss_rule(q)


def test_lobatto_nodes():
    np.testing.assert_allclose(lobatto_nodes(1), [-1, 1])
    np.testing.assert_allclose(lobatto_nodes(2), [-1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(lobatto_nodes(3), [-1, -1 / np.sqrt(5), 1 / np.sqrt(5), 1])


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_reference_basis_partition_and_kronecker(k):
    ref = reference_element(k, k + 2)
    np.testing.assert_allclose(ref.phi.sum(axis=1), 1.0, atol=1e-13)
    np.testing.assert_allclose(ref.dphi.sum(axis=1), 0.0, atol=1e-11)
    nodes = lobatto_nodes(k)
    mesh = build_structured_mesh(1, (-1, -1, 1, 1))
    space = build_space(mesh, kind="dG", k=k)
    for a in range(space.n_local):
        c = np.zeros(space.n_local)
        c[a] = 1.0
        f = DiscreteFunction(space, c)
        for b in range(space.n_local):
            xi, eta = nodes[b % (k + 1)], nodes[b // (k + 1)]
            assert evaluate(f, 0, (xi, eta)) == pytest.approx(float(a == b), abs=1e-13)


def test_degree_limits():
    mesh = build_structured_mesh(2)
    for k in (0, 5):
        with pytest.raises(ValueError):
            build_space(mesh, kind="dG", k=k)
    with pytest.raises(ValueError):
        build_space(mesh, kind="cdG")
    with pytest.raises(ValueError):
        build_space(mesh, kind="xG")


def cdg_count(n, k, s):
    return (k * s + 1) ** 2 + (k + 1) ** 2 * (n * n - s * s) if s else (k + 1) ** 2 * n * n


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 3, 8])
def test_dof_counts(n, k):
    mesh = build_structured_mesh(n)
    assert build_space(mesh, kind="cG", k=k).n_dofs == (k * n + 1) ** 2
    assert build_space(mesh, kind="dG", k=k).n_dofs == (k + 1) ** 2 * n * n
    for s in range(n + 1):
        d = decompose(mesh, block_elements(n, s), velocity)
        assert build_space(mesh, d, "cdG", k).n_dofs == cdg_count(n, k, s)


def test_reference_dof_counts(mesh32, block_decomp):
    assert build_space(mesh32, kind="dG").n_dofs == 4096
    assert build_space(mesh32, kind="cG").n_dofs == 1089
    assert build_space(mesh32, block_decomp(30), "cdG").n_dofs == 1457
    assert build_space(mesh32, block_decomp(31), "cdG").n_dofs == 1276


def test_constrained_dofs_are_boundary_nodes():
    mesh = build_structured_mesh(4)
    sp_ = build_space(mesh, kind="cG", k=2)
    xy = sp_.dof_coords[sp_.constrained_dofs]
    assert sp_.constrained_dofs.size == 4 * 8
    assert np.all(np.any(np.isclose(xy, 0.0) | np.isclose(xy, 1.0), axis=1))
    assert build_space(mesh, kind="dG").constrained_dofs.size == 0
    assert build_space(mesh, kind="cG", dirichlet_mode="none").constrained_dofs.size == 0


def test_interpolate_linear_function_gradient():
    mesh = build_structured_mesh(1)
    u = build_space(mesh, kind="dG").interpolate(lambda x, y: x)
    assert evaluate(u, 0, (-0.5, 0.0)) == pytest.approx(0.25)
    np.testing.assert_allclose(evaluate_gradient(u, 0, (0.3, -0.1)), [1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(k=st.integers(1, 3), s=st.integers(0, 4), seed=st.integers(0, 2 ** 31))
def test_embedding_preserves_point_values(k, s, seed):
    rng = np.random.default_rng(seed)
    n = 4
    mesh = build_structured_mesh(n)
    d = decompose(mesh, block_elements(n, s), velocity)
    cg = build_space(mesh, kind="cG", k=k)
    cdg = build_space(mesh, d, "cdG", k)
    dg = build_space(mesh, kind="dG", k=k)
    f = DiscreteFunction(cg, rng.standard_normal(cg.n_dofs))
    g = inject(f, cdg)
    h = inject(g, dg)
    x, y = rng.random(50), rng.random(50)
    np.testing.assert_allclose(g.sample(x, y), f.sample(x, y), atol=1e-13)
    np.testing.assert_allclose(h.sample(x, y), f.sample(x, y), atol=1e-13)
    with pytest.raises(ValueError):
        inject(h, cg)


def test_cg_functions_are_continuous():
    rng = np.random.default_rng(3)
    mesh = build_structured_mesh(3)
    cg = build_space(mesh, kind="cG", k=2)
    f = DiscreteFunction(cg, rng.standard_normal(cg.n_dofs))
    # approach the vertical line x = 1/3 from both sides
    y = rng.random(20)
    row = (3 * y).astype(int)
    eta = 6 * y - 2 * row - 1
    left = [evaluate(f, 3 * r, (1.0, e)) for r, e in zip(row, eta)]
    right = [evaluate(f, 3 * r + 1, (-1.0, e)) for r, e in zip(row, eta)]
    np.testing.assert_allclose(left, right, atol=1e-13)


def test_to_csv(tmp_path):
    mesh = build_structured_mesh(2)
    u = build_space(mesh, kind="cG").interpolate(lambda x, y: x + 2 * y)
    path = tmp_path / "u.csv"
    u.to_csv(path, samples=5)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (25, 3)
    np.testing.assert_allclose(data[:, 2], data[:, 0] + 2 * data[:, 1], atol=1e-14)


# --- projection onto the discontinuous part -------------------------------------------------

def _random_smooth(rng):
    a, b, c, d = rng.normal(size=4)
    fx, fy = rng.uniform(1, 12, size=2)
    return lambda x, y: a * np.sin(fx * x + b) * np.cos(fy * y) + c * x * y ** 2 + d


@pytest.fixture(scope="module")
def proj_setup():
    mesh = build_structured_mesh(8)
    d = decompose(mesh, block_elements(8, 5), velocity)
    return mesh, d, build_space(mesh, d, "cdG", 1)


def _bilinear(X, Y, mesh):
    o = mesh.element_origins
    hx, hy = mesh.cell_size
    s = (X - o[:, 0, None]) / hx
    t = (Y - o[:, 1, None]) / hy
    return [np.ones_like(s), s, t, s * t]


def test_projection_properties_random(proj_setup):
    mesh, d, space = proj_setup
    q = 6
    X, Y, wJ = element_quadrature(mesh, q)
    monos = _bilinear(X, Y, mesh)
    dg = ~d.element_is_cg
    rng = np.random.default_rng(11)
    for _ in range(100):
        v = _random_smooth(rng)
        p = project_PiD(v, d, space, q=q)
        assert np.all(p.local()[d.element_is_cg] == 0.0)
        ref = reference_element(1, q)
        pv = p.local() @ ref.phi.T
        vv = v(X, Y)
        scale = np.sqrt(np.sum(wJ * vv ** 2, axis=1))
        resid = vv - pv
        for mono in monos:
            orth = np.abs(np.sum(wJ * resid * mono, axis=1))[dg]
            assert np.max(orth / scale[dg]) <= 1e-12
        assert np.all(np.sum(wJ * pv ** 2, axis=1)[dg] <= np.sum(wJ * vv ** 2, axis=1)[dg] + 1e-14)


def test_projection_idempotent_and_linear(proj_setup):
    mesh, d, space = proj_setup
    rng = np.random.default_rng(5)
    u = DiscreteFunction(space, rng.standard_normal(space.n_dofs))
    w = DiscreteFunction(space, rng.standard_normal(space.n_dofs))
    pu = project_PiD(u, d, space)
    np.testing.assert_allclose(pu.local()[~d.element_is_cg], u.local()[~d.element_is_cg],
                               atol=1e-12)
    np.testing.assert_allclose(project_PiD(pu, d, space).coefficients, pu.coefficients,
                               atol=1e-12)
    combo = DiscreteFunction(space, 2.0 * u.coefficients - 3.0 * w.coefficients)
    lhs = project_PiD(combo, d, space).coefficients
    rhs = 2.0 * pu.coefficients - 3.0 * project_PiD(w, d, space).coefficients
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_projection_of_x_is_x(proj_setup):
    mesh, d, space = proj_setup
    p = project_PiD(lambda x, y: x, d, space)
    dg_dofs = space.element_dofs[~d.element_is_cg].ravel()
    np.testing.assert_allclose(p.coefficients[dg_dofs], space.dof_coords[dg_dofs, 0], atol=1e-14)


def test_projection_against_scipy_dblquad():
    mesh = build_structured_mesh(2)
    d = decompose(mesh, [], velocity)
    space = build_space(mesh, d, "cdG", 1)
    f = lambda x, y: np.exp(x) * np.cos(3 * y)  # noqa: E731
    p = project_PiD(f, d, space, q=10)
    # element 0 = [0, 1/2]^2: solve the 4x4 normal equations with adaptive quadrature
    basis = [lambda x, y: (1 - 2 * x) * (1 - 2 * y), lambda x, y: 2 * x * (1 - 2 * y),
             lambda x, y: (1 - 2 * x) * 2 * y, lambda x, y: 4 * x * y]
    M = np.array([[integrate.dblquad(lambda y, x: a(x, y) * b(x, y), 0, .5, 0, .5)[0]
                   for b in basis] for a in basis])
    r = np.array([integrate.dblquad(lambda y, x: a(x, y) * f(x, y), 0, .5, 0, .5,
                                    epsabs=1e-14)[0] for a in basis])
    np.testing.assert_allclose(p.local()[0], np.linalg.solve(M, r), rtol=1e-9)
