"""Experiment configuration and problem setup."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .mesh import Mesh, make_lshape_mesh, make_unit_square_mesh
from .verification import ExactSolution, load_unaligned, manufactured_solution_31

__all__ = ["ExperimentConfig", "ProblemSetup", "setup_problem", "PROBLEMS"]

PROBLEMS = ("manufactured", "unaligned", "lshape")


@dataclass
class ExperimentConfig:
    """Settings of one experiment run.

    ``problem`` selects the manufactured-solution, unaligned-layer or
    L-shape setup; ``refine`` is either ``uniform`` (all elements split
    into four per step) or ``adaptive`` (bulk marking with parameter
    ``theta``).  The loop stops with the first mesh whose element count
    reaches ``max_elements``.
    """

    problem: str
    eps: float = 1.0
    alpha: float = 0.25
    beta: float = 0.5
    test_order: int = 4
    refine: str = "adaptive"
    theta: float = 0.75
    max_elements: int = 20000
    cg_tol: float = 1e-10
    out_dir: Path = field(default_factory=lambda: Path("."))
    seed: int = 0
    threads: int = 1
    dump_meshes: bool = False
    initial_subdivisions: int = 2

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")
        if self.test_order not in range(0, 7):
            raise ValueError("test order must lie in 0..6")
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("theta must lie in (0, 1]")
        if self.refine not in ("uniform", "adaptive"):
            raise ValueError("refine must be 'uniform' or 'adaptive'")
        self.out_dir = Path(self.out_dir)

    def tag(self) -> str:
        return (f"{self.problem}_{self.refine}_eps{self.eps:.0e}"
                f"_r{self.test_order}")


@dataclass
class ProblemSetup:
    """Initial mesh, data callbacks and (optionally) the exact solution."""

    initial_mesh: Mesh
    load: Callable
    reaction: Optional[Callable] = None
    dirichlet: Optional[Callable] = None
    exact: Optional[ExactSolution] = None


def setup_problem(cfg: ExperimentConfig) -> ProblemSetup:
    if cfg.problem == "manufactured":
        exact = manufactured_solution_31(cfg.eps, cfg.alpha)
        return ProblemSetup(
            make_unit_square_mesh(cfg.initial_subdivisions),
            load=exact.f, reaction=exact.c, dirichlet=exact.boundary,
            exact=exact,
        )
    if cfg.problem == "unaligned":
        return ProblemSetup(
            make_unit_square_mesh(cfg.initial_subdivisions),
            load=load_unaligned(),
        )
    return ProblemSetup(
        make_lshape_mesh(),
        load=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
    )
