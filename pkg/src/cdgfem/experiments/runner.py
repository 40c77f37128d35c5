"""Sweeps over the cG block size for the unit-square layer benchmark.

``m`` counts the cells per side of the top-right cG block
``[1 - m h, 1]^2``: ``m = 0`` is the pure dG method and ``m = n`` the pure cG
method.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..analysis import error_norms, h2_norm_ueps, sdg_norm
from ..assembly import assemble_system
from ..fem import DiscreteFunction, build_space, inject
from ..mesh import (build_structured_mesh, check_interface_assumption, check_peclet,
                    check_rho, decompose)
from ..solver import SolverConfig, SolverError, solve
from .problem import ExactSolution, benchmark_spec, velocity, velocity_divergence

__all__ = [
    "ExperimentConfig",
    "CaseResult",
    "REFERENCE_DOFS_32",
    "block_elements",
    "violation_elements",
    "assumption_reports",
    "run_case",
    "run_violation_case",
    "run_table1",
    "run_figure3",
    "run_figure4",
    "write_csv",
]

log = logging.getLogger(__name__)

# published dof counts of the 32 x 32, Q1 sweep, keyed by block size m
REFERENCE_DOFS_32 = {0: 4096, 8: 3361, 16: 2417, 24: 2121, 30: 1457, 31: 1276, 32: 1089}

FIGURE3_EPS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
FIGURE3_DELTA = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)


@dataclass
class ExperimentConfig:
    n: int = 32
    eps: float = 1e-6
    sigma: float = 10.0
    tau: float = 1.0
    k: int = 1
    m_list: Sequence[int] = tuple(range(33))
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: Path = Path("results")
    q: int | None = None
    boundary_q: int = 8
    eps_max: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError("n and k must be positive")
        for name in ("eps", "sigma", "tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        self.out = Path(self.out)
        if self.eps_max is None:
            self.eps_max = self.eps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["out"] = str(self.out)
        d["m_list"] = list(self.m_list)
        return d

    def layer_refinement(self):
        width = 4.0 * np.sqrt(self.eps) + 0.5 / self.n

        def near_layer(x, y):
            return np.minimum(x, y) <= width

        return near_layer


def block_elements(n: int, m: int) -> np.ndarray:
    """Boolean mask of the top-right ``m x m`` block of an ``n x n`` mesh."""
    if not 0 <= m <= n:
        raise ValueError(f"block size must lie in 0..{n}, got {m}")
    ix = np.arange(n * n) % n
    iy = np.arange(n * n) // n
    return (ix >= n - m) & (iy >= n - m)


def violation_elements(n: int) -> np.ndarray:
    """Block ``[h, 1]^2`` plus the single outflow element ``[1/2, 1/2 + h] x [0, h]``."""
    mask = block_elements(n, n - 1)
    mask[n // 2] = True
    return mask


def assumption_reports(config: ExperimentConfig, decomp, spec) -> dict:
    mesh = decomp.mesh
    rho = check_rho(spec.c, velocity_divergence, mesh)
    pe = check_peclet(mesh, velocity, config.eps, config.eps_max, decomp)
    iface = check_interface_assumption(decomp, velocity, config.eps_max, config.sigma)
    return {"rho": rho.to_dict(), "peclet": pe.to_dict(), "interface": iface.to_dict(),
            "passed": bool(rho.passed and pe.passed and iface.passed)}


@dataclass
class CaseResult:
    m: int | None
    n_cg_elements: int
    dofs_dg: int
    dofs_cdg: int
    diff_standard: dict
    diff_decoupled: dict
    standard_vs_decoupled: dict
    error_cdg: dict
    error_dg: dict
    norms_cdg: dict
    norms_dg: dict
    assumptions: dict
    solver: dict
    failed: str | None = None
    solutions: dict = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        d = self.diff_standard
        return {
            "m": self.m,
            "dofs": self.dofs_cdg,
            "percent_dg": 100.0 * self.dofs_cdg / self.dofs_dg,
            "diff_l2": d.get("l2"),
            "diff_h1_weighted": d.get("h1_weighted"),
            "diff_jump_l2": d.get("jump_l2"),
            "decoupled_diff_h1_weighted": self.diff_decoupled.get("h1_weighted"),
            "err_l2": self.error_cdg.get("l2"),
            "err_h1_weighted": self.error_cdg.get("h1_weighted"),
            "err_jump_l2": self.error_cdg.get("jump_l2"),
            "assumptions_ok": self.assumptions.get("passed"),
            "failed": self.failed or "",
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("solutions")
        return d


def run_case(config: ExperimentConfig, m: int | None = None,
             cg_elements: np.ndarray | None = None, keep_solutions: bool = False) -> CaseResult:
    """Solve the dG, decoupled cdG and standard cdG problems for one cG region.

    Solver failures are recorded in ``failed`` instead of raised.
    """
    if (m is None) == (cg_elements is None):
        raise ValueError("give exactly one of m and cg_elements")
    n = config.n
    mask = block_elements(n, m) if cg_elements is None else np.asarray(cg_elements, dtype=bool)
    mesh = build_structured_mesh(n)
    decomp = decompose(mesh, mask, velocity)
    spec = benchmark_spec(config.eps, config.sigma, config.eps_max)
    exact = ExactSolution(config.eps)
    v_dg = build_space(mesh, decomp, "dG", config.k)
    v_cdg = build_space(mesh, decomp, "cdG", config.k)
    asm = dict(q=config.q, boundary_q=config.boundary_q, refine_boundary=config.layer_refinement())

    solutions, reports = {}, {}
    failed = None
    try:
        for name, space, variant in (("dG", v_dg, "standard"), ("cdG", v_cdg, "standard"),
                                     ("cdG_decoupled", v_cdg, "decoupled")):
            system = assemble_system(space, decomp, spec, variant, **asm)
            x, rep = solve(system, config=config.solver)
            solutions[name] = DiscreteFunction(space, x)
            reports[name] = rep.to_dict()
    except SolverError as exc:
        failed = f"{type(exc).__name__}: {exc}"
        log.warning("case m=%s failed: %s", m, failed)

    result = CaseResult(m, int(mask.sum()), v_dg.n_dofs, v_cdg.n_dofs, {}, {}, {}, {}, {}, {},
                        {}, assumption_reports(config, decomp, spec), reports, failed)
    if failed:
        return result

    eps = config.eps
    w_dg = solutions["dG"]
    v_std = inject(solutions["cdG"], v_dg)
    v_dec = inject(solutions["cdG_decoupled"], v_dg)
    result.diff_standard = error_norms(v_std - w_dg, eps=eps)
    result.diff_decoupled = error_norms(v_dec - w_dg, eps=eps)
    result.standard_vs_decoupled = error_norms(v_std - v_dec, eps=eps)
    result.error_cdg = error_norms(solutions["cdG"], exact.u, exact.grad, eps=eps)
    result.error_dg = error_norms(w_dg, exact.u, exact.grad, eps=eps)
    result.norms_cdg = sdg_norm(solutions["cdG"], decomp, spec, config.tau).to_dict()
    result.norms_dg = sdg_norm(w_dg, decomp, spec, config.tau).to_dict()
    if keep_solutions:
        result.solutions = solutions
    return result


def run_violation_case(config: ExperimentConfig, keep_solutions: bool = False) -> CaseResult:
    """The ``m = n - 1`` region plus one cG element on the outflow boundary."""
    return run_case(config, cg_elements=violation_elements(config.n), keep_solutions=keep_solutions)


def write_csv(path: Path, rows: Iterable[dict]) -> Path:
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return path


def _write_manifest(config: ExperimentConfig, name: str, payload: dict) -> Path:
    path = config.out / f"{name}_manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"command": name, "config": config.to_dict(), **payload}
    path.write_text(json.dumps(doc, indent=2, default=float), encoding="utf-8")
    return path


def run_table1(config: ExperimentConfig, m_list: Sequence[int] | None = None,
               write: bool = True) -> list[dict]:
    """Dof counts and weighted ``H^1`` differences between cdG and dG solutions."""
    m_list = list(REFERENCE_DOFS_32) if m_list is None else list(m_list)
    rows, cases = [], []
    for m in m_list:
        res = run_case(config, m)
        ref = REFERENCE_DOFS_32.get(m) if (config.n, config.k) == (32, 1) else None
        rows.append({
            "m": m,
            "label": "dG" if m == 0 else "cG" if m == config.n else f"{m}h",
            "dofs": res.dofs_cdg,
            "percent_dg": round(100.0 * res.dofs_cdg / res.dofs_dg, 2),
            "diff_h1_weighted": res.diff_standard.get("h1_weighted"),
            "reference_dofs": ref if ref is not None else "",
            "matches_reference": "" if ref is None else ref == res.dofs_cdg,
            "failed": res.failed or "",
        })
        cases.append(res.to_dict())
    if write:
        write_csv(config.out / "table1.csv", rows)
        _write_manifest(config, "table1", {"cases": cases})
    return rows


def run_figure3(eps_list: Sequence[float] = FIGURE3_EPS,
                delta_list: Sequence[float] = FIGURE3_DELTA,
                out: Path | None = None) -> list[dict]:
    """``||u_eps||_{H^2((1 - delta, 1)^2)}`` over an ``(eps, delta)`` grid."""
    rows = [{"eps": e, "delta": d, "h2_norm": h2_norm_ueps(d, e)}
            for e in eps_list for d in delta_list]
    if out is not None:
        write_csv(Path(out) / "figure3.csv", rows)
    return rows


def run_figure4(config: ExperimentConfig, write: bool = True) -> list[dict]:
    """Difference and error norms for every block size in ``config.m_list``."""
    results = [run_case(config, m) for m in config.m_list]
    rows = [r.row() for r in sorted(results, key=lambda r: r.m)]
    if write:
        write_csv(config.out / "figure4.csv", rows)
        _write_manifest(config, "figure4", {"cases": [r.to_dict() for r in results]})
    return rows
