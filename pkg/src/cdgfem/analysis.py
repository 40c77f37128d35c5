"""Mesh-dependent norms, coercivity diagnostics and error norms."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .assembly import ProblemSpec, _FaceData, default_quadrature
from .fem import (DiscreteFunction, DofSpace, element_quadrature, l2_project_local,
                  reference_element, values_at_quadrature)
from .mesh import Decomposition, element_velocity_sup
from .special import erf, erfc

__all__ = [
    "NormReport",
    "CoercivityReport",
    "triple_norm",
    "sdg_norm",
    "streamline_weights",
    "coercivity_ratio",
    "error_norms",
    "h2_norm_ueps",
]


@dataclass
class NormReport:
    """Squared parts of the triple and streamline norms."""

    d2: float
    ar2: float
    triple2: float
    streamline2: float = 0.0
    sdg2: float = 0.0
    tau: float | None = None

    @property
    def triple(self) -> float:
        return float(np.sqrt(self.triple2))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf).writerow([self.to_dict()[k] for k in self.to_dict()])
        return buf.getvalue().strip()

    @staticmethod
    def csv_header() -> str:
        return "d2,ar2,triple2,streamline2,sdg2,tau"


def _edge_jumps(v: DiscreteFunction, edges: np.ndarray, q: int):
    """Jump magnitudes (slot0 minus slot1, or the trace on Γ) at edge points."""
    fd = _FaceData(v.space, edges, q)
    c0 = v.coefficients[fd.dofs[0]]
    c1 = v.coefficients[fd.dofs[1]]
    jump = np.einsum("eqa,ea->eq", fd.phi[0], c0) - np.einsum("eqa,ea->eq", fd.phi[1], c1)
    return fd, jump


def triple_norm(v: DiscreteFunction, decomp: Decomposition, spec: ProblemSpec,
                q: int | None = None) -> NormReport:
    """``|||v|||^2 = ||v||_d^2 + ||v||_ar^2`` with jump terms on every edge of the mesh."""
    space = v.space
    mesh = space.mesh
    if decomp.mesh is not mesh:
        raise ValueError("function and decomposition live on different meshes")
    q = q or default_quadrature(space.k)
    X, Y, wJ = element_quadrature(mesh, q)
    val, grad = values_at_quadrature(v, q)
    h1 = float(np.sum(wJ * np.sum(grad ** 2, axis=-1)))
    cb = spec.reaction_balance(X, Y)
    l2w = float(np.sum(wJ * cb * val ** 2))

    edges = np.arange(mesh.n_edges)
    fd, jump = _edge_jumps(v, edges, q)
    bx, by = spec.velocity(fd.points[..., 0], fd.points[..., 1])
    bn = np.abs(bx * fd.normal[:, None, 0] + by * fd.normal[:, None, 1])
    jump2 = fd.weights * jump ** 2
    pen = float(np.sum((spec.sigma / fd.h_e)[:, None] * jump2))
    adv = float(np.sum(bn * jump2))

    d2 = spec.eps * h1 + spec.eps * pen
    ar2 = l2w + 0.5 * adv
    return NormReport(d2, ar2, d2 + ar2)


def streamline_weights(decomp: Decomposition, spec: ProblemSpec, tau: float = 1.0) -> np.ndarray:
    """``tau_E = tau * min(h_E / |b|_{L^inf(E)}, h_E^2 / eps)`` per element."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    mesh = decomp.mesh
    bsup = element_velocity_sup(mesh, spec.velocity)
    h = mesh.h_E
    with np.errstate(divide="ignore"):
        adv = np.where(bsup > 0, h / np.where(bsup > 0, bsup, 1.0), np.inf)
    return tau * np.minimum(adv, h ** 2 / spec.eps)


def sdg_norm(v: DiscreteFunction, decomp: Decomposition, spec: ProblemSpec,
             tau: float = 1.0, q: int | None = None) -> NormReport:
    """Triple norm plus ``sum_E tau_E ||Pi_D(b . grad_h v)||^2_E``."""
    rep = triple_norm(v, decomp, spec, q)
    space = v.space
    mesh = space.mesh
    q = q or default_quadrature(space.k)
    X, Y, wJ = element_quadrature(mesh, q)
    _, grad = values_at_quadrature(v, q)
    bx, by = spec.velocity(X, Y)
    stream = bx * grad[..., 0] + by * grad[..., 1]
    dg = ~np.asarray(decomp.element_is_cg)
    tau_E = streamline_weights(decomp, spec, tau)
    term = 0.0
    if dg.any():
        coef = l2_project_local(stream[dg], space.k, q, mesh)
        proj = coef @ reference_element(space.k, q).phi.T
        per_el = np.sum(wJ * proj ** 2, axis=1)
        term = float(np.sum(tau_E[dg] * per_el))
    return NormReport(rep.d2, rep.ar2, rep.triple2, term, rep.triple2 + term, tau)


@dataclass
class CoercivityReport:
    min_ratio: float
    ratios: np.ndarray

    def to_dict(self) -> dict:
        return {"min_ratio": self.min_ratio, "n_samples": int(self.ratios.size),
                "mean_ratio": float(self.ratios.mean())}


def coercivity_ratio(A, space: DofSpace, decomp: Decomposition, spec: ProblemSpec,
                     n_samples: int = 100, seed: int = 0) -> CoercivityReport:
    """Minimum of ``w^T A w / |||w|||^2`` over seeded Gaussian coefficient vectors.

    Strongly constrained dofs are zeroed so ``w`` lies in the homogeneous
    space; pass a matrix assembled with ``g = 0``.
    """
    rng = np.random.default_rng(seed)
    free = np.ones(space.n_dofs)
    free[space.constrained_dofs] = 0.0
    ratios = np.empty(n_samples)
    for i in range(n_samples):
        w = rng.standard_normal(space.n_dofs) * free
        ratios[i] = (w @ (A @ w)) / triple_norm(DiscreteFunction(space, w), decomp, spec).triple2
    return CoercivityReport(float(ratios.min()), ratios)


def error_norms(v: DiscreteFunction, exact=None, grad_exact=None, eps: float = 1.0,
                q: int | None = None) -> dict:
    """``L^2`` error, ``sqrt(eps)``-weighted broken ``H^1`` seminorm error and the
    ``L^2`` norm of the jumps of ``v`` over interior edges.

    ``exact`` and ``grad_exact`` are callables on physical coordinates;
    ``grad_exact`` returns ``(ux, uy)``.  Omit both to measure ``v`` itself.
    """
    space = v.space
    mesh = space.mesh
    q = q or max(default_quadrature(space.k), 6)
    X, Y, wJ = element_quadrature(mesh, q)
    val, grad = values_at_quadrature(v, q)
    if exact is not None:
        val = val - np.broadcast_to(exact(X, Y), X.shape)
    if grad_exact is not None:
        gx, gy = grad_exact(X, Y)
        grad = grad - np.stack([np.broadcast_to(gx, X.shape), np.broadcast_to(gy, X.shape)], -1)
    l2 = float(np.sqrt(np.sum(wJ * val ** 2)))
    h1 = float(np.sqrt(eps * np.sum(wJ * np.sum(grad ** 2, axis=-1))))
    fd, jump = _edge_jumps(v, mesh.interior_edges, q)
    jl2 = float(np.sqrt(np.sum(fd.weights * jump ** 2)))
    return {"l2": l2, "h1_weighted": h1, "jump_l2": jl2}


def _layer_profile(eps: float):
    """One-dimensional factor ``G`` of the layer remainder and its derivatives.

    The remainder of the unit-square benchmark is ``G(x) + G(y)`` with
    ``G(t) = (erfc(t/s) - erfc(1/s)) / erf(1/s)`` and ``s = sqrt(2 eps)``.
    """
    s = np.sqrt(2.0 * eps)
    e1 = float(erf(1.0 / s))
    tail = float(erfc(1.0 / s))
    amp = 2.0 / (np.sqrt(np.pi) * s * e1)

    def G(t):
        return (erfc(np.asarray(t) / s) - tail) / e1

    def dG(t):
        return -amp * np.exp(-(np.asarray(t) / s) ** 2)

    def d2G(t):
        t = np.asarray(t)
        return amp * 2.0 * t / s ** 2 * np.exp(-(t / s) ** 2)

    return s, G, dG, d2G


def h2_norm_ueps(delta: float, eps: float, rtol: float = 1e-10) -> float:
    """``||u_eps||_{H^2((1-delta, 1)^2)}`` for the unit-square layer benchmark.

    The integrand separates in ``x`` and ``y``; the one-dimensional integrals
    are evaluated with adaptive Gauss-Kronrod quadrature.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    s, G, dG, d2G = _layer_profile(eps)
    a, b = 1.0 - delta, 1.0
    # decay length of the squared Gaussians at the left end of the interval
    ell = min(s, s * s / (4.0 * a)) if a > 0 else s
    brk = [p for p in a + ell * 2.0 ** np.arange(-2, 40) if p < b][:40]

    def quad(fun):
        val, _ = integrate.quad(lambda t: float(fun(t)), a, b, epsabs=0.0, epsrel=rtol,
                                limit=500, points=brk or None)
        return val

    iG = quad(G)
    iG2 = quad(lambda t: G(t) ** 2)
    idG2 = quad(lambda t: dG(t) ** 2)
    id2G2 = quad(lambda t: d2G(t) ** 2)
    L = b - a
    total = 2.0 * L * iG2 + 2.0 * iG ** 2 + 2.0 * L * idG2 + 2.0 * L * id2G2
    return float(np.sqrt(total))
