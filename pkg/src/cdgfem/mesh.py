"""Structured quadrilateral meshes, T_h-decompositions and assumption checks.

Elements are axis-aligned rectangles numbered row-major (x fastest).  Local
faces are numbered ``0`` left, ``1`` right, ``2`` bottom, ``3`` top.  Every
edge stores its adjacent elements in ``edge_elements``; slot 0 always holds an
element and the stored normal is outward from that element.  Slot 1 is ``-1``
on the boundary.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .fem import gauss_rule

__all__ = [
    "Mesh",
    "Decomposition",
    "InterfaceReport",
    "PecletReport",
    "RhoReport",
    "SignAssumptionError",
    "build_structured_mesh",
    "decompose",
    "check_interface_assumption",
    "check_peclet",
    "check_rho",
    "element_velocity_sup",
    "EDGE_CG",
    "EDGE_DG",
    "EDGE_J",
    "EDGE_GAMMA_CG",
    "EDGE_GAMMA_DG",
]

VelocityField = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]

EDGE_CG = 0
EDGE_DG = 1
EDGE_J = 2
EDGE_GAMMA_CG = 3
EDGE_GAMMA_DG = 4
EDGE_CLASS_NAMES = {
    EDGE_CG: "interior-cG",
    EDGE_DG: "interior-dG",
    EDGE_J: "J",
    EDGE_GAMMA_CG: "boundary-cG",
    EDGE_GAMMA_DG: "boundary-dG",
}

# outward normals of the local faces
FACE_NORMALS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])

SIGN_RTOL = 1e-12
ZERO_FLUX_ATOL = 1e-14


class SignAssumptionError(ValueError):
    """Raised when ``b . n`` changes sign along a single edge."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform ``n x n`` axis-aligned quadrilateral mesh of a rectangle."""

    n_per_side: int
    domain: tuple[float, float, float, float]
    vertices: np.ndarray
    elements: np.ndarray
    edge_vertices: np.ndarray
    edge_elements: np.ndarray
    edge_faces: np.ndarray
    edge_normals: np.ndarray
    edge_lengths: np.ndarray
    h_E: np.ndarray
    h_e: np.ndarray
    h_convention: str = "side"

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    @property
    def cell_size(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.domain
        return (x1 - x0) / self.n_per_side, (y1 - y0) / self.n_per_side

    @property
    def element_origins(self) -> np.ndarray:
        """Lower-left corner of every element, shape ``(n_elements, 2)``."""
        return self.vertices[self.elements[:, 0]]

    @property
    def element_centers(self) -> np.ndarray:
        dx, dy = self.cell_size
        return self.element_origins + 0.5 * np.array([dx, dy])

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elements[:, 1] >= 0)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elements[:, 1] < 0)

    def element_index(self, ix: int, iy: int) -> int:
        return iy * self.n_per_side + ix

    def edge_points(self, edges: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Physical points at parameters ``t`` in [-1, 1] along ``edges``.

        Returns an array of shape ``(len(edges), len(t), 2)``.
        """
        a = self.vertices[self.edge_vertices[edges, 0]]
        b = self.vertices[self.edge_vertices[edges, 1]]
        s = 0.5 * (np.asarray(t) + 1.0)
        return a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]

    def to_dict(self) -> dict:
        return {
            "n_per_side": self.n_per_side,
            "domain": list(self.domain),
            "vertices": self.vertices.tolist(),
            "elements": self.elements.tolist(),
            "edges": [
                {
                    "vertices": self.edge_vertices[e].tolist(),
                    "elements": [int(t) for t in self.edge_elements[e] if t >= 0],
                    "normal": self.edge_normals[e].tolist(),
                    "length": float(self.edge_lengths[e]),
                }
                for e in range(self.n_edges)
            ],
        }


def build_structured_mesh(
    n: int,
    domain: Sequence[float] = (0.0, 0.0, 1.0, 1.0),
    h_convention: str = "side",
) -> Mesh:
    """Build an ``n x n`` mesh of the rectangle ``(x0, y0, x1, y1)``.

    ``h_convention`` selects the element size: ``"side"`` uses the longest
    side, ``"diagonal"`` the true diameter.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"cells per side must be a positive integer, got {n!r}")
    n = int(n)
    x0, y0, x1, y1 = (float(v) for v in domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain {domain!r}")
    if h_convention not in ("side", "diagonal"):
        raise ValueError(f"unknown h convention {h_convention!r}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ix, iy = ix.ravel(), iy.ravel()
    elements = np.column_stack(
        [vid(ix, iy), vid(ix + 1, iy), vid(ix + 1, iy + 1), vid(ix, iy + 1)]
    )

    dx, dy = (x1 - x0) / n, (y1 - y0) / n
    h = max(dx, dy) if h_convention == "side" else float(np.hypot(dx, dy))
    h_E = np.full(n * n, h)

    ev, ee, ef, en = [], [], [], []
    # vertical edges x = x_i, ordered by (row, column)
    for j in range(n):
        for i in range(n + 1):
            ev.append((vid(i, j), vid(i, j + 1)))
            left = j * n + i - 1 if i > 0 else -1
            right = j * n + i if i < n else -1
            if left >= 0:
                ee.append((left, right))
                ef.append((1, 0 if right >= 0 else -1))
                en.append((1.0, 0.0))
            else:
                ee.append((right, -1))
                ef.append((0, -1))
                en.append((-1.0, 0.0))
    # horizontal edges y = y_j
    for j in range(n + 1):
        for i in range(n):
            ev.append((vid(i, j), vid(i + 1, j)))
            below = (j - 1) * n + i if j > 0 else -1
            above = j * n + i if j < n else -1
            if below >= 0:
                ee.append((below, above))
                ef.append((3, 2 if above >= 0 else -1))
                en.append((0.0, 1.0))
            else:
                ee.append((above, -1))
                ef.append((2, -1))
                en.append((0.0, -1.0))

    edge_vertices = np.array(ev, dtype=np.int64)
    edge_elements = np.array(ee, dtype=np.int64)
    edge_faces = np.array(ef, dtype=np.int64)
    edge_normals = np.array(en)
    vertical = edge_normals[:, 0] != 0.0
    edge_lengths = np.where(vertical, dy, dx)
    other = np.where(edge_elements[:, 1] >= 0, edge_elements[:, 1], edge_elements[:, 0])
    h_e = np.minimum(h_E[edge_elements[:, 0]], h_E[other])

    arrays = (vertices, elements, edge_vertices, edge_elements, edge_faces,
              edge_normals, edge_lengths, h_E, h_e)
    for a in arrays:
        a.setflags(write=False)
    return Mesh(n, (x0, y0, x1, y1), *arrays, h_convention=h_convention)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Splitting of the mesh into cG and dG sub-meshes plus skeleton labels.

    ``downwind_slot`` gives, per edge, the slot (0 or 1) in
    ``mesh.edge_elements`` of the element whose inflow boundary contains the
    edge; boundary edges always report slot 0.  ``inflow`` is meaningful on
    boundary edges only.  ``interface_normals`` holds ``n^C`` (pointing from
    the cG element into the dG element) on J edges and zero elsewhere.
    """

    mesh: Mesh
    element_is_cg: np.ndarray
    edge_class: np.ndarray
    inflow: np.ndarray
    downwind_slot: np.ndarray
    interface_normals: np.ndarray

    @property
    def cg_elements(self) -> np.ndarray:
        return np.flatnonzero(self.element_is_cg)

    @property
    def dg_elements(self) -> np.ndarray:
        return np.flatnonzero(~self.element_is_cg)

    @property
    def J(self) -> np.ndarray:
        return np.flatnonzero(self.edge_class == EDGE_J)

    @property
    def dg_skeleton(self) -> np.ndarray:
        """Edges of E_h^dG (interior dG, J and boundary dG)."""
        return np.flatnonzero(np.isin(self.edge_class, (EDGE_DG, EDGE_J, EDGE_GAMMA_DG)))

    @property
    def cg_skeleton(self) -> np.ndarray:
        return np.flatnonzero(np.isin(self.edge_class, (EDGE_CG, EDGE_GAMMA_CG)))

    def edges_of_class(self, cls: int) -> np.ndarray:
        return np.flatnonzero(self.edge_class == cls)

    def to_dict(self) -> dict:
        d = self.mesh.to_dict()
        d["element_region"] = ["cG" if c else "dG" for c in self.element_is_cg]
        d["edge_class"] = [EDGE_CLASS_NAMES[int(c)] for c in self.edge_class]
        bnd = self.mesh.boundary_edges
        d["inflow_edges"] = [int(e) for e in bnd if self.inflow[e]]
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _edge_flux(mesh: Mesh, b: VelocityField, edges: np.ndarray, q: int) -> np.ndarray:
    """``b . n`` at Gauss points and both endpoints of each edge (normal of slot 0)."""
    t = np.concatenate([[-1.0], gauss_rule(q).points_1d, [1.0]])
    pts = mesh.edge_points(edges, t)
    bx, by = b(pts[..., 0], pts[..., 1])
    bx = np.broadcast_to(bx, pts.shape[:2])
    by = np.broadcast_to(by, pts.shape[:2])
    n = mesh.edge_normals[edges]
    return bx * n[:, None, 0] + by * n[:, None, 1]


def decompose(
    mesh: Mesh,
    cg_region: Callable[[np.ndarray, np.ndarray], np.ndarray] | Iterable[int] | np.ndarray,
    b: VelocityField,
    q: int = 4,
) -> Decomposition:
    """Label elements as cG/dG and classify every edge.

    ``cg_region`` is either a predicate on element centres ``(x, y)``, a
    boolean mask over elements, or a collection of cG element indices.
    """
    n_el = mesh.n_elements
    if callable(cg_region):
        c = mesh.element_centers
        is_cg = np.asarray(cg_region(c[:, 0], c[:, 1]), dtype=bool)
        is_cg = np.broadcast_to(is_cg, (n_el,)).copy()
    else:
        arr = np.asarray(list(cg_region) if not isinstance(cg_region, np.ndarray) else cg_region)
        if arr.dtype == bool:
            if arr.shape != (n_el,):
                raise ValueError("boolean cG mask must have one entry per element")
            is_cg = arr.copy()
        else:
            is_cg = np.zeros(n_el, dtype=bool)
            is_cg[arr.astype(np.int64)] = True

    ee = mesh.edge_elements
    interior = ee[:, 1] >= 0
    a_cg = is_cg[ee[:, 0]]
    b_cg = np.where(interior, is_cg[np.maximum(ee[:, 1], 0)], False)

    edge_class = np.empty(mesh.n_edges, dtype=np.int8)
    edge_class[interior & a_cg & b_cg] = EDGE_CG
    edge_class[interior & ~a_cg & ~b_cg] = EDGE_DG
    edge_class[interior & (a_cg != b_cg)] = EDGE_J
    edge_class[~interior & a_cg] = EDGE_GAMMA_CG
    edge_class[~interior & ~a_cg] = EDGE_GAMMA_DG

    all_edges = np.arange(mesh.n_edges)
    flux = _edge_flux(mesh, b, all_edges, q)
    scale = np.max(np.abs(flux), axis=1)
    tol = SIGN_RTOL * scale
    pos = np.any(flux > tol[:, None], axis=1)
    neg = np.any(flux < -tol[:, None], axis=1)
    bad = np.flatnonzero(pos & neg)
    if bad.size:
        raise SignAssumptionError(
            f"b.n changes sign along {bad.size} edge(s), first edge {int(bad[0])}"
        )
    # slot 0 sees inflow iff b.n <= 0 w.r.t. its own outward normal
    slot0_inflow = ~pos | (scale <= ZERO_FLUX_ATOL)
    inflow = np.where(interior, False, slot0_inflow)
    downwind_slot = np.where(interior & ~slot0_inflow, 1, 0).astype(np.int8)

    interface_normals = np.zeros((mesh.n_edges, 2))
    J = edge_class == EDGE_J
    # normal stored is outward from slot 0; flip when slot 0 is the dG side
    sign = np.where(a_cg, 1.0, -1.0)
    interface_normals[J] = sign[J, None] * mesh.edge_normals[J]

    for a in (is_cg, edge_class, inflow, downwind_slot, interface_normals):
        a.setflags(write=False)
    return Decomposition(mesh, is_cg, edge_class, inflow, downwind_slot, interface_normals)


@dataclass
class InterfaceReport:
    """Outcome of the non-characteristic interface check on J."""

    passed: bool
    edges: np.ndarray
    margins: np.ndarray
    min_advective: float
    penalty_bound: np.ndarray
    sigma_bound: float

    @property
    def min_margin(self) -> float:
        return float(self.margins.min()) if self.margins.size else float("inf")

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "n_interface_edges": int(self.edges.size),
            "min_margin": self.min_margin,
            "min_quarter_b_dot_nC": self.min_advective,
            "sigma_bound": self.sigma_bound,
        }


def check_interface_assumption(
    decomp: Decomposition,
    b: VelocityField,
    eps_max: float,
    sigma: float,
    q: int = 4,
) -> InterfaceReport:
    """Check ``1/4 b.n^C > eps_max sigma / h_e^{3/2}`` on every J edge.

    ``sigma_bound`` is the largest penalty for which the inequality would hold
    on all of J (``inf`` when J is empty).
    """
    if sigma <= 0 or eps_max <= 0:
        raise ValueError("sigma and eps_max must be positive")
    mesh = decomp.mesh
    J = decomp.J
    if J.size == 0:
        empty = np.zeros(0)
        return InterfaceReport(True, J, empty, float("inf"), empty, float("inf"))
    t = np.concatenate([[-1.0], gauss_rule(q).points_1d, [1.0]])
    pts = mesh.edge_points(J, t)
    bx, by = b(pts[..., 0], pts[..., 1])
    nC = decomp.interface_normals[J]
    bn = (np.broadcast_to(bx, pts.shape[:2]) * nC[:, None, 0]
          + np.broadcast_to(by, pts.shape[:2]) * nC[:, None, 1])
    lhs = 0.25 * bn.min(axis=1)
    rhs = eps_max * sigma * mesh.h_e[J] ** -1.5
    margins = lhs - rhs
    sigma_bound = float(np.min(lhs * mesh.h_e[J] ** 1.5 / eps_max))
    return InterfaceReport(bool(np.all(margins > 0)), J, margins, float(lhs.min()), rhs,
                           sigma_bound)


def element_velocity_sup(mesh: Mesh, b: VelocityField, q: int = 4) -> np.ndarray:
    """Per-element sup of the largest velocity component magnitude.

    Sampled on the element vertices together with a ``q x q`` Gauss rule.
    """
    g = np.concatenate([[-1.0], gauss_rule(q).points_1d, [1.0]])
    xi, eta = np.meshgrid(g, g, indexing="xy")
    xi, eta = xi.ravel(), eta.ravel()
    dx, dy = mesh.cell_size
    o = mesh.element_origins
    X = o[:, 0, None] + 0.5 * (xi[None, :] + 1.0) * dx
    Y = o[:, 1, None] + 0.5 * (eta[None, :] + 1.0) * dy
    bx, by = b(X, Y)
    bx = np.broadcast_to(np.abs(bx), X.shape)
    by = np.broadcast_to(np.abs(by), X.shape)
    return np.maximum(bx, by).max(axis=1)


@dataclass
class PecletReport:
    peclet: np.ndarray
    min_peclet: float
    peclet_at_eps_max: np.ndarray
    max_h_over_b_dg: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "min_peclet": self.min_peclet,
            "min_peclet_at_eps_max": float(self.peclet_at_eps_max.min()),
            "max_h_over_b_dg": self.max_h_over_b_dg,
            "passed": bool(self.passed),
        }


def check_peclet(
    mesh: Mesh,
    b: VelocityField,
    eps: float,
    eps_max: float | None = None,
    decomp: Decomposition | None = None,
    q: int = 4,
) -> PecletReport:
    """Local mesh Peclet numbers ``|b|_{L^inf(E)} h_E / (2 eps)``.

    The pre-asymptotic test uses ``eps_max``: every element must have Peclet
    number above ``sqrt(h_E)`` and ``max(h_E / |b|_{L^inf(E)}, h_E) <= 1`` on
    the dG elements (all elements when ``decomp`` is omitted).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    eps_max = eps if eps_max is None else eps_max
    bsup = element_velocity_sup(mesh, b, q)
    pe = bsup * mesh.h_E / (2.0 * eps)
    pe_max = bsup * mesh.h_E / (2.0 * eps_max)
    dg = np.ones(mesh.n_elements, dtype=bool) if decomp is None else ~decomp.element_is_cg
    with np.errstate(divide="ignore"):
        h_over_b = np.where(bsup > 0, mesh.h_E / np.where(bsup > 0, bsup, 1.0), np.inf)
    max_h_over_b = float(h_over_b[dg].max()) if dg.any() else 0.0
    ok = bool(np.all(pe_max > np.sqrt(mesh.h_E))
              and max(max_h_over_b, float(mesh.h_E.max())) <= 1.0)
    return PecletReport(pe, float(pe.min()), pe_max, max_h_over_b, ok)


@dataclass
class RhoReport:
    rho: float
    passed: bool

    def to_dict(self) -> dict:
        return {"rho": self.rho, "passed": bool(self.passed)}


def check_rho(c, b_div, mesh: Mesh, q: int = 4) -> RhoReport:
    """Sampled minimum of ``c - div(b)/2`` over volume quadrature points.

    ``c`` and ``b_div`` are scalar fields ``f(x, y)``.
    """
    rule = gauss_rule(q)
    dx, dy = mesh.cell_size
    o = mesh.element_origins
    X = o[:, 0, None] + 0.5 * (rule.points[None, :, 0] + 1.0) * dx
    Y = o[:, 1, None] + 0.5 * (rule.points[None, :, 1] + 1.0) * dy
    cb = np.broadcast_to(c(X, Y), X.shape) - 0.5 * np.broadcast_to(b_div(X, Y), X.shape)
    rho = float(cb.min())
    return RhoReport(rho, rho > 0)
