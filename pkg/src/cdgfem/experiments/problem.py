"""Unit-square benchmark with exponential outflow layers along x = 0 and y = 0.

``-eps Lap u + (-x, -y) . grad u = -x - y`` with Dirichlet data taken from

    u(x, y) = x + y - (erf(x/s) + erf(y/s)) / erf(1/s),   s = sqrt(2 eps).

Away from the layers ``u`` is close to the reduced solution ``u0 = x + y - 2``;
the remainder ``u_eps = u - u0`` is evaluated through ``erfc`` so that it keeps
its relative accuracy where it is exponentially small.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assembly import ProblemSpec
from ..special import erf, erfc

__all__ = ["ExactSolution", "velocity", "velocity_divergence", "benchmark_spec"]


def velocity(x, y):
    return -np.asarray(x, dtype=float), -np.asarray(y, dtype=float)


def velocity_divergence(x, y):
    return np.full(np.shape(x), -2.0)


def _zero(x, y):
    return np.zeros(np.shape(x))


def _source(x, y):
    return -np.asarray(x, dtype=float) - np.asarray(y, dtype=float)


@dataclass(frozen=True)
class ExactSolution:
    eps: float

    @property
    def scale(self) -> float:
        return float(np.sqrt(2.0 * self.eps))

    @property
    def _e1(self) -> float:
        return float(erf(1.0 / self.scale))

    def u(self, x, y):
        s = self.scale
        return np.asarray(x) + np.asarray(y) - (erf(np.asarray(x) / s) + erf(np.asarray(y) / s)) / self._e1

    def u0(self, x, y):
        return np.asarray(x, dtype=float) + np.asarray(y, dtype=float) - 2.0

    def _G(self, t):
        s = self.scale
        return (erfc(np.asarray(t, dtype=float) / s) - float(erfc(1.0 / s))) / self._e1

    def _dG(self, t):
        s = self.scale
        t = np.asarray(t, dtype=float)
        return -2.0 / (np.sqrt(np.pi) * s * self._e1) * np.exp(-(t / s) ** 2)

    def _d2G(self, t):
        s = self.scale
        t = np.asarray(t, dtype=float)
        return 4.0 * t / (np.sqrt(np.pi) * s ** 3 * self._e1) * np.exp(-(t / s) ** 2)

    def u_eps(self, x, y):
        return self._G(x) + self._G(y)

    def grad(self, x, y):
        return 1.0 + self._dG(x), 1.0 + self._dG(y)

    def laplacian(self, x, y):
        return self._d2G(x) + self._d2G(y)

    def residual(self, x, y):
        """``-eps Lap u + b . grad u - f``; zero up to rounding."""
        ux, uy = self.grad(x, y)
        bx, by = velocity(x, y)
        return -self.eps * self.laplacian(x, y) + bx * ux + by * uy - _source(x, y)


def benchmark_spec(eps: float = 1e-6, sigma: float = 10.0, eps_max: float | None = None,
                   homogeneous: bool = False) -> ProblemSpec:
    exact = ExactSolution(eps)
    return ProblemSpec(
        eps=eps,
        b=velocity,
        div_b=velocity_divergence,
        c=_zero,
        f=_zero if homogeneous else _source,
        g=_zero if homogeneous else exact.u,
        sigma=sigma,
        eps_max=eps_max,
    )
