"""Assembly of the advection, reaction and interior penalty forms.

Face contributions are only assembled where the space allows jumps: on edges
with at least one element carrying element-local dofs, and on boundary edges
of such elements.  Across shared (cG) edges every jump vanishes identically
and cG boundary dofs are fixed strongly, so those terms are dropped rather
than assembled and cancelled.  Which edges form the interface J comes from
the decomposition, so the decoupled form can also be applied on a pure dG
space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fem import DofSpace, element_quadrature, gauss_rule, reference_element
from .mesh import EDGE_J, Decomposition, Mesh

__all__ = [
    "ProblemSpec",
    "SparseSystem",
    "assemble_advection",
    "assemble_reaction",
    "assemble_diffusion",
    "assemble_system",
    "penalty_diagnostic",
    "default_quadrature",
]

log = logging.getLogger(__name__)

Scalar = Callable[[np.ndarray, np.ndarray], np.ndarray]
Vector = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _zero(x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass
class ProblemSpec:
    """Coefficients of ``-eps Lap u + b.grad u + c u = f``, ``u = g`` on the boundary.

    Scalar fields are vectorised callables ``f(x, y)``; ``b`` returns the
    pair ``(bx, by)`` and ``div_b`` its divergence.  ``eps_max`` defaults to
    ``eps``.
    """

    eps: float
    b: Vector
    div_b: Scalar = _zero
    c: Scalar = _zero
    f: Scalar = _zero
    g: Scalar = _zero
    sigma: float = 10.0
    eps_max: float | None = None

    def __post_init__(self):
        if self.eps_max is None:
            self.eps_max = self.eps
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.eps > self.eps_max:
            raise ValueError("eps exceeds eps_max")

    def velocity(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        bx, by = self.b(x, y)
        shape = np.shape(x)
        return np.broadcast_to(bx, shape), np.broadcast_to(by, shape)

    def field(self, name: str, x, y) -> np.ndarray:
        return np.broadcast_to(getattr(self, name)(x, y), np.shape(x)).astype(float)

    def reaction_balance(self, x, y) -> np.ndarray:
        """``c_b = c - div(b) / 2``."""
        return self.field("c", x, y) - 0.5 * self.field("div_b", x, y)

    def homogeneous(self) -> "ProblemSpec":
        """Copy with ``f = g = 0``."""
        return ProblemSpec(self.eps, self.b, self.div_b, self.c, _zero, _zero,
                           self.sigma, self.eps_max)


@dataclass
class SparseSystem:
    """Assembled matrix with strong Dirichlet rows and right-hand side."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    space: DofSpace
    prescribed: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_matrix_market(self, path) -> None:
        scipy.io.mmwrite(path, self.matrix.tocoo(), field="real")


def default_quadrature(k: int) -> int:
    return 2 * (k + 1)


def _scatter(rows_dofs: np.ndarray, cols_dofs: np.ndarray, blocks: np.ndarray, n: int):
    """Sum dense blocks ``(nb, r, c)`` into a CSR matrix."""
    r = np.broadcast_to(rows_dofs[:, :, None], blocks.shape).ravel()
    c = np.broadcast_to(cols_dofs[:, None, :], blocks.shape).ravel()
    v = blocks.ravel()
    order = np.lexsort((c, r))
    m = sp.coo_matrix((v[order], (r[order], c[order])), shape=(n, n)).tocsr()
    m.sum_duplicates()
    return m


def _scatter_vec(dofs: np.ndarray, vals: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    np.add.at(out, dofs.ravel(), vals.ravel())
    return out


class _FaceData:
    """Traces of the basis on a set of edges from both sides.

    ``phi[s]`` is ``(n_edges, q, n_local)`` for slot ``s``; ``dn[s]`` the
    normal derivative along the slot-0 outward normal.
    """

    def __init__(self, space: DofSpace, edges: np.ndarray, q: int):
        mesh = space.mesh
        ref = reference_element(space.k, q)
        self.edges = edges
        self.rule = ref.rule
        self.weights = ref.rule.weights_1d[None, :] * (0.5 * mesh.edge_lengths[edges])[:, None]
        dx, dy = mesh.cell_size
        scale = np.array([2.0 / dx, 2.0 / dy])
        n = mesh.edge_normals[edges]
        self.normal = n
        self.h_e = mesh.h_e[edges]
        self.elements = mesh.edge_elements[edges]
        self.phi = []
        self.dn = []
        self.dofs = []
        for s in (0, 1):
            faces = mesh.edge_faces[edges, s]
            valid = faces >= 0
            fidx = np.where(valid, faces, 0)
            phi = ref.face_phi[fidx] * valid[:, None, None]
            grad = ref.face_dphi[fidx] * scale
            dn = np.einsum("eqad,ed->eqa", grad, n) * valid[:, None, None]
            self.phi.append(phi)
            self.dn.append(dn)
            el = np.where(valid, self.elements[:, s], self.elements[:, 0])
            self.dofs.append(space.element_dofs[el])
        t = ref.rule.points_1d
        self.points = mesh.edge_points(edges, t)


def _face_mask(space: DofSpace) -> tuple[np.ndarray, np.ndarray]:
    """Interior and boundary edges that carry face terms in ``space``."""
    mesh = space.mesh
    ee = mesh.edge_elements
    interior = ee[:, 1] >= 0
    shared_a = space.element_is_cg[ee[:, 0]]
    shared_b = np.where(interior, space.element_is_cg[np.maximum(ee[:, 1], 0)], True)
    inner = interior & ~(shared_a & shared_b)
    bnd = ~interior & ~shared_a
    return np.flatnonzero(inner), np.flatnonzero(bnd)


def assemble_advection(space: DofSpace, decomp: Decomposition, spec: ProblemSpec,
                       q: int | None = None) -> sp.csr_matrix:
    """Upwind advection form.

    Volume term ``(b.grad w, v)``, minus ``b.[w] v^in`` on interior edges where
    ``v^in`` is the trace from the downwind element, minus ``(b.n) w v`` on
    the inflow boundary.
    """
    _check(space, decomp)
    q = q or default_quadrature(space.k)
    mesh = space.mesh
    ref = reference_element(space.k, q)
    dx, dy = mesh.cell_size
    X, Y, wJ = element_quadrature(mesh, q)
    bx, by = spec.velocity(X, Y)
    grad = ref.dphi * np.array([2.0 / dx, 2.0 / dy])
    bgrad = bx[:, :, None] * grad[None, :, :, 0] + by[:, :, None] * grad[None, :, :, 1]
    blocks = np.einsum("q,qi,eqj->eij", wJ, ref.phi, bgrad)
    N = space.n_dofs
    A = _scatter(space.element_dofs, space.element_dofs, blocks, N)

    inner, bnd = _face_mask(space)
    if inner.size:
        fd = _FaceData(space, inner, q)
        fbx, fby = spec.velocity(fd.points[..., 0], fd.points[..., 1])
        bn = fbx * fd.normal[:, None, 0] + fby * fd.normal[:, None, 1]
        jump = np.concatenate([fd.phi[0], -fd.phi[1]], axis=2)
        slot = decomp.downwind_slot[inner]
        test = np.where(slot[:, None, None] == 0, fd.phi[0], fd.phi[1])
        test_dofs = np.where(slot[:, None] == 0, fd.dofs[0], fd.dofs[1])
        blocks = -np.einsum("eq,eqi,eqj->eij", fd.weights * bn, test, jump)
        cols = np.concatenate(fd.dofs, axis=1)
        A = A + _scatter(test_dofs, cols, blocks, N)

    inflow = bnd[decomp.inflow[bnd]]
    if inflow.size:
        fd = _FaceData(space, inflow, q)
        fbx, fby = spec.velocity(fd.points[..., 0], fd.points[..., 1])
        bn = fbx * fd.normal[:, None, 0] + fby * fd.normal[:, None, 1]
        blocks = -np.einsum("eq,eqi,eqj->eij", fd.weights * bn, fd.phi[0], fd.phi[0])
        A = A + _scatter(fd.dofs[0], fd.dofs[0], blocks, N)
    return A.tocsr()


def assemble_reaction(space: DofSpace, spec: ProblemSpec, q: int | None = None) -> sp.csr_matrix:
    """Weighted mass matrix ``(c w, v)``."""
    q = q or default_quadrature(space.k)
    ref = reference_element(space.k, q)
    X, Y, wJ = element_quadrature(space.mesh, q)
    c = spec.field("c", X, Y)
    blocks = np.einsum("eq,qi,qj->eij", c * wJ, ref.phi, ref.phi)
    return _scatter(space.element_dofs, space.element_dofs, blocks, space.n_dofs)


def assemble_diffusion(space: DofSpace, decomp: Decomposition, spec: ProblemSpec,
                       variant: str = "standard", q: int | None = None) -> sp.csr_matrix:
    """Symmetric interior penalty form (without the factor ``eps``).

    ``variant="decoupled"`` drops every penalty and consistency term on the
    interface edges J.
    """
    if variant not in ("standard", "decoupled"):
        raise ValueError(f"unknown diffusion variant {variant!r}")
    if spec.sigma <= 0:
        raise ValueError("sigma must be positive")
    _check(space, decomp)
    q = q or default_quadrature(space.k)
    mesh = space.mesh
    ref = reference_element(space.k, q)
    dx, dy = mesh.cell_size
    _, _, wJ = element_quadrature(mesh, q)
    grad = ref.dphi * np.array([2.0 / dx, 2.0 / dy])
    K = np.einsum("q,qid,qjd->ij", wJ, grad, grad)
    blocks = np.broadcast_to(K, (mesh.n_elements,) + K.shape)
    N = space.n_dofs
    A = _scatter(space.element_dofs, space.element_dofs, blocks, N)

    inner, bnd = _face_mask(space)
    if variant == "decoupled":
        inner = inner[decomp.edge_class[inner] != EDGE_J]
    sigma = spec.sigma
    if inner.size:
        fd = _FaceData(space, inner, q)
        jump = np.concatenate([fd.phi[0], -fd.phi[1]], axis=2)
        avg = 0.5 * np.concatenate([fd.dn[0], fd.dn[1]], axis=2)
        w = fd.weights
        pen = (sigma / fd.h_e)[:, None] * w
        blocks = (np.einsum("eq,eqi,eqj->eij", pen, jump, jump)
                  - np.einsum("eq,eqi,eqj->eij", w, jump, avg)
                  - np.einsum("eq,eqi,eqj->eij", w, avg, jump))
        dofs = np.concatenate(fd.dofs, axis=1)
        A = A + _scatter(dofs, dofs, blocks, N)
    if bnd.size:
        fd = _FaceData(space, bnd, q)
        w = fd.weights
        pen = (sigma / fd.h_e)[:, None] * w
        phi, dn = fd.phi[0], fd.dn[0]
        blocks = (np.einsum("eq,eqi,eqj->eij", pen, phi, phi)
                  - np.einsum("eq,eqi,eqj->eij", w, phi, dn)
                  - np.einsum("eq,eqi,eqj->eij", w, dn, phi))
        A = A + _scatter(fd.dofs[0], fd.dofs[0], blocks, N)
    return A.tocsr()


def _boundary_rhs(space: DofSpace, decomp: Decomposition, spec: ProblemSpec,
                  edges: np.ndarray, q: int) -> np.ndarray:
    fd = _FaceData(space, edges, q)
    X, Y = fd.points[..., 0], fd.points[..., 1]
    g = spec.field("g", X, Y)
    w = fd.weights
    vals = spec.eps * (np.einsum("eq,eqi->ei", (spec.sigma / fd.h_e)[:, None] * w * g, fd.phi[0])
                       - np.einsum("eq,eqi->ei", w * g, fd.dn[0]))
    inflow = decomp.inflow[edges]
    if inflow.any():
        bx, by = spec.velocity(X, Y)
        bn = bx * fd.normal[:, None, 0] + by * fd.normal[:, None, 1]
        adv = -np.einsum("eq,eqi->ei", w * bn * g, fd.phi[0])
        vals = vals + adv * inflow[:, None]
    return _scatter_vec(fd.dofs[0], vals, space.n_dofs)


def assemble_system(
    space: DofSpace,
    decomp: Decomposition,
    spec: ProblemSpec,
    variant: str = "standard",
    q: int | None = None,
    boundary_q: int | None = None,
    refine_boundary: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> SparseSystem:
    """Matrix ``eps B_d + B_a + B_r`` and load vector with Dirichlet data.

    Data on dG boundary edges enters weakly (penalty, symmetric consistency
    and inflow terms); shared boundary dofs get identity rows carrying the
    nodal value of ``g``.  Boundary edges whose midpoint satisfies
    ``refine_boundary`` use ``boundary_q`` Gauss points for the data terms.
    """
    q = q or default_quadrature(space.k)
    N = space.n_dofs
    A = (spec.eps * assemble_diffusion(space, decomp, spec, variant, q)
         + assemble_advection(space, decomp, spec, q)
         + assemble_reaction(space, spec, q))

    ref = reference_element(space.k, q)
    X, Y, wJ = element_quadrature(space.mesh, q)
    fvals = spec.field("f", X, Y)
    rhs = _scatter_vec(space.element_dofs, (fvals * wJ) @ ref.phi, N)

    _, bnd = _face_mask(space)
    if bnd.size:
        fine = np.zeros(bnd.size, dtype=bool)
        if refine_boundary is not None and boundary_q:
            mid = space.mesh.edge_points(bnd, np.array([0.0]))[:, 0, :]
            fine = np.asarray(refine_boundary(mid[:, 0], mid[:, 1]), dtype=bool)
        if (~fine).any():
            rhs += _boundary_rhs(space, decomp, spec, bnd[~fine], q)
        if fine.any():
            rhs += _boundary_rhs(space, decomp, spec, bnd[fine], max(q, boundary_q))

    prescribed = space.prescribed_values(spec.g)
    A = _apply_constraints(A.tocsr(), space.constrained_dofs)
    rhs[space.constrained_dofs] = prescribed
    return SparseSystem(A, rhs, space, prescribed)


def _apply_constraints(A: sp.csr_matrix, dofs: np.ndarray) -> sp.csr_matrix:
    if dofs.size == 0:
        return A
    keep = np.ones(A.shape[0])
    keep[dofs] = 0.0
    fixed = np.zeros(A.shape[0])
    fixed[dofs] = 1.0
    out = sp.diags(keep) @ A + sp.diags(fixed)
    out = out.tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def penalty_diagnostic(space: DofSpace, decomp: Decomposition, spec: ProblemSpec,
                       n_samples: int = 50, seed: int = 0) -> float:
    """Empirical ``min B_d(w, w) / ||w||_d^2`` over random ``w`` (``eps = 1``).

    Logs a warning when the minimum drops below 1/2, i.e. when ``sigma`` is
    too small for the symmetric interior penalty form to be coercive.
    """
    from .analysis import triple_norm
    from .fem import DiscreteFunction

    A = assemble_diffusion(space, decomp, spec, "standard")
    unit = ProblemSpec(1.0, spec.b, spec.div_b, spec.c, sigma=spec.sigma, eps_max=1.0)
    rng = np.random.default_rng(seed)
    free = np.ones(space.n_dofs, dtype=bool)
    free[space.constrained_dofs] = False
    ratios = []
    for _ in range(n_samples):
        w = rng.standard_normal(space.n_dofs) * free
        d2 = triple_norm(DiscreteFunction(space, w), decomp, unit).d2
        ratios.append(w @ (A @ w) / d2)
    worst = float(min(ratios))
    if worst < 0.5:
        log.warning("penalty sigma=%g looks too small: min B_d(w,w)/||w||_d^2 = %.3g",
                    spec.sigma, worst)
    return worst


def _check(space: DofSpace, decomp: Decomposition) -> None:
    if decomp.mesh is not space.mesh:
        raise ValueError("space and decomposition live on different meshes")
    if space.kind == "cdG" and not np.array_equal(space.element_is_cg, decomp.element_is_cg):
        raise ValueError("cdG space does not match the decomposition")
