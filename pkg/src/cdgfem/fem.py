"""Reference elements, quadrature, dof spaces and discrete functions.

Shape functions are tensor-product Lagrange polynomials on Gauss-Lobatto
nodes of ``[-1, 1]^2``.  Local dof ``a = i + (k + 1) * j`` sits at node
``(xi_i, xi_j)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Callable

import numpy as np
from numpy.polynomial import legendre

if TYPE_CHECKING:
    from .mesh import Decomposition, Mesh

__all__ = [
    "QuadratureRule",
    "gauss_rule",
    "lobatto_nodes",
    "lagrange_basis_1d",
    "ReferenceElement",
    "reference_element",
    "DofSpace",
    "build_space",
    "DiscreteFunction",
    "evaluate",
    "evaluate_gradient",
    "inject",
    "project_PiD",
    "MAX_DEGREE",
]

MAX_DEGREE = 4


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Tensor-product Gauss-Legendre rule on ``[-1, 1]^2``."""

    points_1d: np.ndarray
    weights_1d: np.ndarray
    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.weights)

    @property
    def exact_degree(self) -> int:
        return 2 * len(self.points_1d) - 1


@lru_cache(maxsize=None)
def gauss_rule(q: int) -> QuadratureRule:
    """``q`` points per direction, exact for ``Q_{2q-1}``."""
    if int(q) != q or not 1 <= q <= 16:
        raise ValueError(f"points per direction must be in 1..16, got {q!r}")
    x, w = legendre.leggauss(int(q))
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    rule = QuadratureRule(x, w, pts, W.ravel())
    for a in (x, w, pts, rule.weights):
        a.setflags(write=False)
    return rule


@lru_cache(maxsize=None)
def lobatto_nodes(k: int) -> np.ndarray:
    """The ``k + 1`` Gauss-Lobatto nodes on ``[-1, 1]``."""
    if k < 1:
        raise ValueError("degree must be >= 1")
    if k == 1:
        nodes = np.array([-1.0, 1.0])
    else:
        inner = legendre.Legendre.basis(k).deriv().roots()
        nodes = np.concatenate([[-1.0], np.sort(inner.real), [1.0]])
    nodes.setflags(write=False)
    return nodes


def lagrange_basis_1d(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the Lagrange polynomials through ``nodes``.

    Returns two arrays of shape ``(len(x), len(nodes))``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = len(nodes)
    val = np.ones((len(x), m))
    der = np.zeros((len(x), m))
    for i in range(m):
        others = [j for j in range(m) if j != i]
        denom = np.prod([nodes[i] - nodes[j] for j in others])
        for j in others:
            val[:, i] *= x - nodes[j]
        for l in others:
            term = np.ones(len(x))
            for j in others:
                if j != l:
                    term *= x - nodes[j]
            der[:, i] += term
        val[:, i] /= denom
        der[:, i] /= denom
    return val, der


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Basis tables for ``Q_k`` at a ``q x q`` Gauss rule and on the four faces.

    ``face_phi[f]`` and ``face_dphi[f]`` are tabulated at the 1D Gauss points
    ordered by increasing tangential coordinate, so neighbouring elements
    see the same physical points in the same order.
    """

    k: int
    q: int
    rule: QuadratureRule
    nodes: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    face_phi: np.ndarray
    face_dphi: np.ndarray

    @property
    def n_local(self) -> int:
        return (self.k + 1) ** 2


def _tensor_basis(nodes, xi, eta):
    vx, dx = lagrange_basis_1d(nodes, xi)
    vy, dy = lagrange_basis_1d(nodes, eta)
    m = len(nodes)
    # local index a = i + m * j
    phi = (vx[:, None, :] * vy[:, :, None]).reshape(len(xi), m * m)
    dphi_x = (dx[:, None, :] * vy[:, :, None]).reshape(len(xi), m * m)
    dphi_y = (vx[:, None, :] * dy[:, :, None]).reshape(len(xi), m * m)
    return phi, np.stack([dphi_x, dphi_y], axis=-1)


@lru_cache(maxsize=None)
def reference_element(k: int, q: int) -> ReferenceElement:
    if not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"unsupported polynomial degree {k} (1..{MAX_DEGREE})")
    rule = gauss_rule(q)
    nodes = lobatto_nodes(k)
    phi, dphi = _tensor_basis(nodes, rule.points[:, 0], rule.points[:, 1])
    t = rule.points_1d
    one = np.ones_like(t)
    faces = [(-one, t), (one, t), (t, -one), (t, one)]
    fphi, fdphi = zip(*(_tensor_basis(nodes, xi, eta) for xi, eta in faces))
    ref = ReferenceElement(k, q, rule, nodes, phi, dphi, np.array(fphi), np.array(fdphi))
    for a in (ref.phi, ref.dphi, ref.face_phi, ref.face_dphi):
        a.setflags(write=False)
    return ref


@dataclass(frozen=True, eq=False)
class DofSpace:
    """Global numbering of a cG, dG or cdG space of tensor degree ``k``.

    ``element_is_cg`` marks elements whose dofs are shared with neighbours.
    Shared (cG) dofs come first in lexicographic node order, followed by the
    element-local blocks of the dG elements in element order.
    ``constrained_dofs`` lists shared dofs on the domain boundary, which carry
    strongly imposed Dirichlet values; they are counted in ``n_dofs``.
    """

    mesh: "Mesh"
    kind: str
    k: int
    element_is_cg: np.ndarray
    element_dofs: np.ndarray
    n_dofs: int
    dof_coords: np.ndarray
    dirichlet_mode: str
    constrained_dofs: np.ndarray

    @property
    def n_local(self) -> int:
        return (self.k + 1) ** 2

    def prescribed_values(self, g: Callable) -> np.ndarray:
        x = self.dof_coords[self.constrained_dofs]
        return np.broadcast_to(g(x[:, 0], x[:, 1]), (len(x),)).astype(float)

    def interpolate(self, func: Callable) -> "DiscreteFunction":
        """Nodal interpolant of ``func(x, y)``."""
        x = self.dof_coords
        vals = np.broadcast_to(func(x[:, 0], x[:, 1]), (self.n_dofs,)).astype(float)
        return DiscreteFunction(self, vals.copy())


def build_space(
    mesh: "Mesh",
    decomp: "Decomposition | None" = None,
    kind: str = "cdG",
    k: int = 1,
    dirichlet_mode: str = "strong",
) -> DofSpace:
    """Create the dof map for ``kind`` in ``{"cG", "dG", "cdG"}``.

    ``decomp`` is required for ``"cdG"`` and ignored otherwise.
    """
    if not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"unsupported polynomial degree {k} (1..{MAX_DEGREE})")
    if dirichlet_mode not in ("strong", "none"):
        raise ValueError(f"unknown dirichlet mode {dirichlet_mode!r}")
    n_el = mesh.n_elements
    if kind == "cG":
        is_cg = np.ones(n_el, dtype=bool)
    elif kind == "dG":
        is_cg = np.zeros(n_el, dtype=bool)
    elif kind == "cdG":
        if decomp is None:
            raise ValueError("a cdG space needs a decomposition")
        if decomp.mesh is not mesh:
            raise ValueError("decomposition belongs to a different mesh")
        is_cg = np.array(decomp.element_is_cg, dtype=bool)
    else:
        raise ValueError(f"unknown space kind {kind!r}")

    n = mesh.n_per_side
    m = k + 1
    nl = m * m
    N = k * n + 1
    x0, y0, x1, y1 = mesh.domain
    dx, dy = mesh.cell_size
    nodes = lobatto_nodes(k)

    ex = np.arange(n_el) % n
    ey = np.arange(n_el) // n
    li = np.arange(nl) % m
    lj = np.arange(nl) // m
    grid_i = k * ex[:, None] + li[None, :]
    grid_j = k * ey[:, None] + lj[None, :]
    grid_id = grid_j * N + grid_i

    element_dofs = np.empty((n_el, nl), dtype=np.int64)
    used = np.zeros(N * N, dtype=bool)
    used[grid_id[is_cg].ravel()] = True
    cg_number = np.full(N * N, -1, dtype=np.int64)
    n_cg = int(used.sum())
    cg_number[used] = np.arange(n_cg)
    element_dofs[is_cg] = cg_number[grid_id[is_cg]]
    dg_el = np.flatnonzero(~is_cg)
    element_dofs[dg_el] = n_cg + np.arange(dg_el.size * nl).reshape(dg_el.size, nl)
    n_dofs = n_cg + dg_el.size * nl

    px = x0 + ex[:, None] * dx + 0.5 * (nodes[li][None, :] + 1.0) * dx
    py = y0 + ey[:, None] * dy + 0.5 * (nodes[lj][None, :] + 1.0) * dy
    coords = np.empty((n_dofs, 2))
    coords[element_dofs.ravel(), 0] = px.ravel()
    coords[element_dofs.ravel(), 1] = py.ravel()

    if dirichlet_mode == "strong" and n_cg:
        gi, gj = np.divmod(np.flatnonzero(used), N)[::-1]
        on_bnd = (gi == 0) | (gi == N - 1) | (gj == 0) | (gj == N - 1)
        constrained = np.flatnonzero(on_bnd).astype(np.int64)
    else:
        constrained = np.zeros(0, dtype=np.int64)

    for a in (is_cg, element_dofs, coords, constrained):
        a.setflags(write=False)
    return DofSpace(mesh, kind, k, is_cg, element_dofs, n_dofs, coords,
                    dirichlet_mode, constrained)


@dataclass(eq=False)
class DiscreteFunction:
    """Coefficient vector on a :class:`DofSpace`."""

    space: DofSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.n_dofs,):
            raise ValueError(
                f"expected {self.space.n_dofs} coefficients, got {self.coefficients.shape}"
            )

    def local(self) -> np.ndarray:
        """Element-wise coefficients, shape ``(n_elements, n_local)``."""
        return self.coefficients[self.space.element_dofs]

    def __sub__(self, other: "DiscreteFunction") -> "DiscreteFunction":
        if other.space is not self.space:
            raise ValueError("functions live on different spaces")
        return DiscreteFunction(self.space, self.coefficients - other.coefficients)

    def to_csv(self, path, samples: int = 101) -> None:
        """Write ``(x, y, value)`` rows on a uniform ``samples x samples`` grid."""
        mesh = self.space.mesh
        x0, y0, x1, y1 = mesh.domain
        xs = np.linspace(x0, x1, samples)
        ys = np.linspace(y0, y1, samples)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        V = self.sample(X.ravel(), Y.ravel())
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for row in zip(X.ravel(), Y.ravel(), V):
                w.writerow([f"{v:.16g}" for v in row])

    def sample(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Evaluate at physical points (on shared faces the element with the
        larger index wins)."""
        mesh = self.space.mesh
        n = mesh.n_per_side
        x0, y0, _, _ = mesh.domain
        dx, dy = mesh.cell_size
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ix = np.clip(np.floor((x - x0) / dx).astype(int), 0, n - 1)
        iy = np.clip(np.floor((y - y0) / dy).astype(int), 0, n - 1)
        el = iy * n + ix
        xi = 2.0 * (x - x0 - ix * dx) / dx - 1.0
        eta = 2.0 * (y - y0 - iy * dy) / dy - 1.0
        phi, _ = _tensor_basis(lobatto_nodes(self.space.k), xi, eta)
        return np.einsum("pa,pa->p", phi, self.local()[el])


def evaluate(f: DiscreteFunction, element: int, point) -> float:
    """Value of ``f`` on ``element`` at reference point ``(xi, eta)``."""
    phi, _ = _tensor_basis(lobatto_nodes(f.space.k), np.array([point[0]]), np.array([point[1]]))
    return float(phi[0] @ f.coefficients[f.space.element_dofs[element]])


def evaluate_gradient(f: DiscreteFunction, element: int, point) -> np.ndarray:
    """Physical gradient of ``f`` on ``element`` at reference point ``point``."""
    _, dphi = _tensor_basis(lobatto_nodes(f.space.k), np.array([point[0]]), np.array([point[1]]))
    dx, dy = f.space.mesh.cell_size
    c = f.coefficients[f.space.element_dofs[element]]
    return np.array([dphi[0, :, 0] @ c * 2.0 / dx, dphi[0, :, 1] @ c * 2.0 / dy])


def inject(f: DiscreteFunction, target: DofSpace) -> DiscreteFunction:
    """Represent ``f`` in a larger space on the same mesh (cG -> cdG -> dG).

    Both spaces use the same nodal basis, so element-local coefficients are
    copied verbatim.
    """
    src = f.space
    if target.mesh is not src.mesh or target.k != src.k:
        raise ValueError("spaces must share mesh and degree")
    if np.any(target.element_is_cg & ~src.element_is_cg):
        raise ValueError("target space is not a superspace of the source")
    out = np.zeros(target.n_dofs)
    out[target.element_dofs] = f.local()
    return DiscreteFunction(target, out)


def element_quadrature(mesh: "Mesh", q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Physical Gauss points ``X, Y`` (``(n_el, nq)``) and weights with Jacobian."""
    rule = gauss_rule(q)
    dx, dy = mesh.cell_size
    o = mesh.element_origins
    X = o[:, 0, None] + 0.5 * (rule.points[None, :, 0] + 1.0) * dx
    Y = o[:, 1, None] + 0.5 * (rule.points[None, :, 1] + 1.0) * dy
    return X, Y, rule.weights * (0.25 * dx * dy)


def values_at_quadrature(f: DiscreteFunction, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(n_el, nq)`` and physical gradients ``(n_el, nq, 2)`` of ``f``."""
    ref = reference_element(f.space.k, q)
    dx, dy = f.space.mesh.cell_size
    c = f.local()
    val = c @ ref.phi.T
    grad = np.einsum("ea,qad->eqd", c, ref.dphi) * np.array([2.0 / dx, 2.0 / dy])
    return val, grad


def l2_project_local(values: np.ndarray, k: int, q: int, mesh: "Mesh") -> np.ndarray:
    """Element-wise ``L^2`` projection of quadrature values onto ``Q_k``.

    ``values`` has shape ``(n_el, nq)``; returns local coefficients.
    """
    ref = reference_element(k, q)
    w = ref.rule.weights
    mass = (ref.phi * w[:, None]).T @ ref.phi
    rhs = (values * w[None, :]) @ ref.phi
    # the Jacobian cancels between mass matrix and load vector
    return np.linalg.solve(mass, rhs.T).T


def project_PiD(
    v,
    decomp: "Decomposition",
    space: DofSpace,
    q: int | None = None,
) -> DiscreteFunction:
    """``L^2``-orthogonal projection onto the dG part of ``space``.

    ``v`` may be a :class:`DiscreteFunction`, a callable ``v(x, y)`` or an
    array of values at the ``q x q`` Gauss points of every element.  The
    result vanishes on every cG element of ``decomp``.
    """
    mesh = space.mesh
    dg = ~np.asarray(decomp.element_is_cg)
    if np.any(space.element_is_cg & dg):
        raise ValueError("space has shared dofs on dG elements")
    if q is None:
        q = 2 * (space.k + 1)
    if isinstance(v, DiscreteFunction):
        q = max(q, v.space.k + 1)
        vals, _ = values_at_quadrature(v, q)
    elif callable(v):
        X, Y, _ = element_quadrature(mesh, q)
        vals = np.broadcast_to(v(X, Y), X.shape)
    else:
        vals = np.asarray(v, dtype=float)
        nq = vals.shape[1]
        q = int(round(np.sqrt(nq)))
    local = l2_project_local(vals[dg], space.k, q, mesh)
    out = np.zeros(space.n_dofs)
    out[space.element_dofs[dg]] = local
    return DiscreteFunction(space, out)
