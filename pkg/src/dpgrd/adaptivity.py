"""Residual-based error indicators, bulk marking and the adaptive loop."""

import time
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .assembly import (
    EpsWeights,
    LocalSystems,
    assemble_normal_equations,
    build_trial_dofmap,
)
from .linalg import cg_solve
from .mesh import Mesh, build_skeleton, refine_nvb, uniform_refine

__all__ = [
    "IndicatorField",
    "StepRecord",
    "local_indicators",
    "mark_doerfler",
    "adaptive_loop",
]


@dataclass(frozen=True)
class IndicatorField:
    """Per-element squared error indicators eta_K^2."""

    eta_sq: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.eta_sq))


def local_indicators(systems: LocalSystems, x: np.ndarray) -> IndicatorField:
    """eta_K^2 = r_K^T G_K^{-1} r_K with r_K = ell_K - B_K x|_K.

    Computed through the stored Cholesky factors as a sum of squares, so
    every indicator is nonnegative by construction.
    """
    res = systems.residuals(x)
    half = systems.half_solve(res)
    return IndicatorField(np.einsum("kr,kr->k", half, half))


def mark_doerfler(etas: IndicatorField, theta: float) -> np.ndarray:
    """Minimal-cardinality bulk marking.

    Elements are sorted by decreasing eta_K^2 (ties broken by ascending
    element index) and the shortest prefix with
    sum_marked >= theta * sum_total is returned.
    """
    if not (0.0 < theta <= 1.0):
        raise ValueError("theta must lie in (0, 1]")
    eta = etas.eta_sq
    total = float(np.sum(eta))
    if total <= 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-eta, kind="stable")
    csum = np.cumsum(eta[order])
    k = int(np.searchsorted(csum, theta * total - 1e-14 * total)) + 1
    k = min(k, int(np.sum(eta > 0.0)))
    return np.sort(order[:k])


@dataclass
class StepRecord:
    """One iterate of the solve / estimate / mark / refine loop."""

    step: int
    mesh: Mesh
    solution: np.ndarray
    dofmap: object
    systems: LocalSystems
    indicators: IndicatorField
    cg_iters: int
    wall_ms: float


def adaptive_loop(
    config,
    problem=None,
) -> Iterator[StepRecord]:
    """Run solve -> estimate -> mark -> refine until the element budget.

    ``config`` is an :class:`dpgrd.config.ExperimentConfig`; ``problem``
    (load, reaction, boundary data, initial mesh) is resolved from it when
    not supplied.  Each iterate is yielded before the next refinement; the
    final iterate is the first mesh reaching ``max_elements``.
    """
    from .config import setup_problem

    if problem is None:
        problem = setup_problem(config)
    w = EpsWeights(config.eps, config.alpha, config.beta)
    mesh = problem.initial_mesh

    for step in range(10_000):
        t0 = time.perf_counter()
        skeleton = build_skeleton(mesh)
        dofmap = build_trial_dofmap(mesh, skeleton, dirichlet=problem.dirichlet)
        a, rhs, systems = assemble_normal_equations(
            mesh, skeleton, dofmap, w, config.test_order,
            f=problem.load, c=problem.reaction,
        )
        x, iters = cg_solve(a, rhs, rel_tol=config.cg_tol)
        indicators = local_indicators(systems, x)
        wall_ms = 1e3 * (time.perf_counter() - t0)
        yield StepRecord(step, mesh, x, dofmap, systems, indicators,
                         iters, wall_ms)
        if mesh.n_triangles >= config.max_elements:
            return
        if config.refine == "uniform":
            mesh = uniform_refine(mesh)
        else:
            marked = mark_doerfler(indicators, config.theta)
            if marked.size == 0:
                return
            mesh = refine_nvb(mesh, marked)
