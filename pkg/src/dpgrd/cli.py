"""Experiment runner: reproduces the three reference experiments as CSV.

Each refinement step writes one CSV row

    step,n_elements,eta_sq,err_u_sq,err_sigma_sq,eps_err_rho_sq,cg_iters,wall_ms

with floats at 17 significant digits; the error columns stay empty for
problems without a closed-form solution.  Meshes can optionally be dumped
in the plain text format next to the CSV.
"""

import argparse
import sys
from pathlib import Path
from typing import Iterable, Optional

from .adaptivity import adaptive_loop
from .assembly import EpsWeights
from .config import ExperimentConfig, setup_problem
from .mesh import write_mesh
from .verification import ErrorReport, balanced_errors

__all__ = ["run", "sweep_test_order", "main", "CSV_HEADER"]

CSV_HEADER = ("step,n_elements,eta_sq,err_u_sq,err_sigma_sq,"
              "eps_err_rho_sq,cg_iters,wall_ms")


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else format(v, ".17g")


def _csv_row(step, record, report: ErrorReport) -> str:
    return ",".join([
        str(step),
        str(record.mesh.n_triangles),
        _fmt(report.eta_sq),
        _fmt(report.err_u_sq),
        _fmt(report.err_sigma_sq),
        _fmt(report.eps_err_rho_sq),
        str(report.cg_iters),
        _fmt(record.wall_ms),
    ])


def run(cfg: ExperimentConfig, csv_name: Optional[str] = None) -> int:
    """Execute one experiment; returns a process exit code."""
    try:
        reports = run_collect(cfg, csv_name=csv_name)
    except Exception as exc:  # noqa: BLE001 - surface diagnostics to callers
        print(f"dpgrd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0 if reports else 1


def run_collect(cfg: ExperimentConfig, csv_name: Optional[str] = None):
    """Execute one experiment and return the per-step error reports."""
    problem = setup_problem(cfg)
    w = EpsWeights(cfg.eps, cfg.alpha, cfg.beta)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / (csv_name or f"{cfg.tag()}.csv")
    reports = []
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for record in adaptive_loop(cfg, problem):
            if problem.exact is not None:
                eu, es, er = balanced_errors(
                    record.mesh, record.solution, record.dofmap,
                    problem.exact, w,
                )
            else:
                eu = es = er = None
            report = ErrorReport(
                n_elements=record.mesh.n_triangles,
                eta_sq=record.indicators.total,
                err_u_sq=eu, err_sigma_sq=es, eps_err_rho_sq=er,
                cg_iters=record.cg_iters,
            )
            reports.append((record, report))
            fh.write(_csv_row(record.step, record, report) + "\n")
            fh.flush()
            if cfg.dump_meshes:
                write_mesh(record.mesh,
                           cfg.out_dir / f"{cfg.tag()}_mesh{record.step:03d}.txt")
    return reports


def sweep_test_order(cfg: ExperimentConfig,
                     orders: Iterable[int] = range(0, 7)) -> dict:
    """Re-run the experiment for several test orders; one CSV per order."""
    out = {}
    for r in orders:
        sub = ExperimentConfig(
            problem=cfg.problem, eps=cfg.eps, alpha=cfg.alpha, beta=cfg.beta,
            test_order=r, refine=cfg.refine, theta=cfg.theta,
            max_elements=cfg.max_elements, cg_tol=cfg.cg_tol,
            out_dir=cfg.out_dir, seed=cfg.seed, threads=cfg.threads,
            dump_meshes=cfg.dump_meshes,
            initial_subdivisions=cfg.initial_subdivisions,
        )
        out[r] = run_collect(sub)
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dpgrd",
        description="Robust DPG solver for -eps lap u + c u = f; "
                    "writes one CSV row per refinement step.",
    )
    p.add_argument("--problem", required=True,
                   choices=("manufactured", "unaligned", "lshape"))
    p.add_argument("--eps-exp", type=int, default=0,
                   help="diffusion parameter as a power of ten: eps = 10^n")
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--test-order", type=int, default=4)
    p.add_argument("--refine", choices=("uniform", "adaptive"),
                   default="adaptive")
    p.add_argument("--theta", type=float, default=0.75)
    p.add_argument("--max-elements", type=int, default=20000)
    p.add_argument("--cg-tol", type=float, default=1e-10)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--threads", type=int, default=1,
                   help="accepted for compatibility; execution is "
                        "single-threaded and bitwise deterministic")
    p.add_argument("--dump-meshes", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = ExperimentConfig(
        problem=args.problem,
        eps=10.0 ** args.eps_exp,
        alpha=args.alpha,
        beta=args.beta,
        test_order=args.test_order,
        refine=args.refine,
        theta=args.theta,
        max_elements=args.max_elements,
        cg_tol=args.cg_tol,
        out_dir=args.out,
        seed=args.seed,
        threads=args.threads,
        dump_meshes=args.dump_meshes,
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
