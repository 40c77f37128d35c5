"""Command line entry point: ``cdgfem <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..solver import SolverConfig
from .runner import (FIGURE3_DELTA, FIGURE3_EPS, REFERENCE_DOFS_32, ExperimentConfig,
                     assumption_reports, block_elements, run_case, run_figure3, run_figure4,
                     run_table1, run_violation_case, write_csv)

log = logging.getLogger("cdgfem")

_SOLVERS = {
    "direct": SolverConfig(method="direct"),
    "gmres": SolverConfig(method="gmres", preconditioner="ilu0", restart=200, max_iter=4000),
    "gmres-jacobi": SolverConfig(method="gmres", preconditioner="diagonal"),
    "auto": SolverConfig(),
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=32, help="cells per side")
    common.add_argument("--eps", type=float, default=1e-6, help="diffusion coefficient")
    common.add_argument("--sigma", type=float, default=10.0, help="interior penalty parameter")
    common.add_argument("--tau", type=float, default=1.0, help="streamline norm scaling")
    common.add_argument("--k", type=int, default=1, help="polynomial degree")
    common.add_argument("--m", type=int, nargs="*", help="cG block sizes (cells per side)")
    common.add_argument("--solver", choices=sorted(_SOLVERS), default="auto")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--config", type=Path, help="JSON file whose keys override the flags")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cdgfem", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("table1", parents=[common], help="dof counts and H1 differences")
    f3 = sub.add_parser("figure3", parents=[common], help="H2 norms of the layer remainder")
    f3.add_argument("--eps-list", type=float, nargs="+", default=list(FIGURE3_EPS))
    f3.add_argument("--delta-list", type=float, nargs="+", default=list(FIGURE3_DELTA))
    sub.add_parser("figure4", parents=[common], help="difference norms over the m sweep")
    sub.add_parser("violation", parents=[common], help="single-element counterexample")
    sub.add_parser("check", parents=[common], help="assumption report only")
    sub.add_parser("solve", parents=[common], help="one case, prints a JSON summary")
    return p


def _config(args) -> ExperimentConfig:
    values = {"n": args.n, "eps": args.eps, "sigma": args.sigma, "tau": args.tau, "k": args.k,
              "out": args.out, "solver": args.solver}
    if args.m:
        values["m_list"] = list(args.m)
    if args.config:
        values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    solver = values.pop("solver")
    values["solver"] = _SOLVERS[solver] if isinstance(solver, str) else SolverConfig(**solver)
    if "m_list" not in values:
        values["m_list"] = list(range(values["n"] + 1))
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = _config(args)

    if args.command == "table1":
        m_list = args.m if args.m else None
        if m_list is None and (config.n, config.k) != (32, 1):
            m_list = config.m_list
        rows = run_table1(config, m_list)
        _print_rows(rows)
    elif args.command == "figure3":
        rows = run_figure3(args.eps_list, args.delta_list, out=config.out)
        _print_rows(rows)
    elif args.command == "figure4":
        _print_rows(run_figure4(config))
    elif args.command == "violation":
        res = run_violation_case(config)
        summary = {"difference": res.diff_standard, "assumptions": res.assumptions,
                   "failed": res.failed}
        config.out.mkdir(parents=True, exist_ok=True)
        (config.out / "violation.json").write_text(json.dumps(res.to_dict(), indent=2,
                                                              default=float))
        print(json.dumps(summary, indent=2, default=float))
    elif args.command == "check":
        from ..mesh import build_structured_mesh, decompose
        from .problem import benchmark_spec, velocity

        mesh = build_structured_mesh(config.n)
        spec = benchmark_spec(config.eps, config.sigma, config.eps_max)
        ok = True
        rows = []
        for m in config.m_list:
            rep = assumption_reports(config, decompose(mesh, block_elements(config.n, m),
                                                       velocity), spec)
            ok &= rep["passed"]
            rows.append({"m": m, "rho": rep["rho"]["rho"],
                         "min_peclet": rep["peclet"]["min_peclet"],
                         "interface_min_margin": rep["interface"]["min_margin"],
                         "sigma_bound": rep["interface"]["sigma_bound"],
                         "passed": rep["passed"]})
        write_csv(config.out / "check.csv", rows)
        _print_rows(rows)
        return 0 if ok else 1
    elif args.command == "solve":
        m = config.m_list[0] if args.m else config.n - 1
        res = run_case(config, m)
        print(json.dumps(res.to_dict(), indent=2, default=float))
        return 1 if res.failed else 0
    return 0


def _print_rows(rows) -> None:
    if not rows:
        return
    keys = list(rows[0])
    print("\t".join(keys))
    for r in rows:
        print("\t".join(f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]) for k in keys))


if __name__ == "__main__":
    sys.exit(main())
