"""Exact solutions, balanced error norms, dense oracle and rate fits."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import (
    EpsWeights,
    build_trial_dofmap,
    local_b,
    local_gram,
    local_load,
)
from .basis import basis_size, mesh_affine_data, quadrature_triangle
from .linalg import cholesky, solve_cholesky
from .mesh import Mesh, build_skeleton

__all__ = [
    "ExactSolution",
    "ErrorReport",
    "manufactured_solution_31",
    "load_unaligned",
    "balanced_errors",
    "energy_error",
    "dense_oracle_solve",
    "rate_fit",
]

# exponentials below exp(-700) are clamped to zero (they would only feed
# subnormals into layer terms)
_EXP_FLOOR = -700.0


def _exp(t):
    t = np.asarray(t, dtype=float)
    return np.where(t < _EXP_FLOOR, 0.0, np.exp(np.maximum(t, _EXP_FLOOR)))


@dataclass(frozen=True)
class ExactSolution:
    """Manufactured solution with analytic derivatives.

    ``sigma`` and ``rho`` are the scaled first-order-system fields
    eps^alpha grad u and eps^alpha lap u; ``f`` is defined as
    -eps lap u + c u, so the consistency residual vanishes by
    construction.
    """

    eps: float
    alpha: float
    u: Callable
    grad_u: Callable            # returns (..., 2)
    laplace_u: Callable
    c: Callable
    f: Callable

    def sigma(self, x, y):
        return self.eps ** self.alpha * self.grad_u(x, y)

    def rho(self, x, y):
        return self.eps ** self.alpha * self.laplace_u(x, y)

    def boundary(self, x, y):
        return self.u(x, y)

    def consistency_residual(self, x, y):
        """-eps lap u + c u - f, relative to max(|f|, 1)."""
        r = -self.eps * self.laplace_u(x, y) + self.c(x, y) * self.u(x, y) \
            - self.f(x, y)
        scale = np.maximum(np.abs(self.f(x, y)), 1.0)
        return r / scale


def manufactured_solution_31(eps: float, alpha: float = 0.25) -> ExactSolution:
    """Smooth-plus-boundary-layer solution on the unit square with the
    variable reaction coefficient c = 1 + x^2 y^2 e^{x y / 2}."""
    s = 1.0 / np.sqrt(eps)

    def layers(x, y):
        e1 = _exp(-2.0 * x * s)
        e2 = _exp(-2.0 * (1.0 - x) * s)
        e3 = _exp(-3.0 * y * s)
        e4 = _exp(-3.0 * (1.0 - y) * s)
        return e1, e2, e3, e4

    def u(x, y):
        e1, e2, e3, e4 = layers(x, y)
        p = x ** 3 * (1.0 + y ** 2) + np.sin(np.pi * x ** 2) \
            + np.cos(np.pi * y / 2.0)
        return p + (x + y) * (e1 + e2 + e3 + e4)

    def grad_u(x, y):
        e1, e2, e3, e4 = layers(x, y)
        E = e1 + e2 + e3 + e4
        ex = 2.0 * s * (e2 - e1)
        ey = 3.0 * s * (e4 - e3)
        px = 3.0 * x ** 2 * (1.0 + y ** 2) \
            + 2.0 * np.pi * x * np.cos(np.pi * x ** 2)
        py = 2.0 * x ** 3 * y - (np.pi / 2.0) * np.sin(np.pi * y / 2.0)
        gx = px + E + (x + y) * ex
        gy = py + E + (x + y) * ey
        return np.stack([gx, gy], axis=-1)

    def laplace_u(x, y):
        e1, e2, e3, e4 = layers(x, y)
        ex = 2.0 * s * (e2 - e1)
        ey = 3.0 * s * (e4 - e3)
        exx = 4.0 * s ** 2 * (e1 + e2)
        eyy = 9.0 * s ** 2 * (e3 + e4)
        pxx = 6.0 * x * (1.0 + y ** 2) + 2.0 * np.pi * np.cos(np.pi * x ** 2) \
            - 4.0 * np.pi ** 2 * x ** 2 * np.sin(np.pi * x ** 2)
        pyy = 2.0 * x ** 3 - (np.pi ** 2 / 4.0) * np.cos(np.pi * y / 2.0)
        return pxx + pyy + 2.0 * (ex + ey) + (x + y) * (exx + eyy)

    def c(x, y):
        return 1.0 + x ** 2 * y ** 2 * np.exp(x * y / 2.0)

    def f(x, y):
        return -eps * laplace_u(x, y) + c(x, y) * u(x, y)

    return ExactSolution(eps, alpha, u, grad_u, laplace_u, c, f)


def load_unaligned() -> Callable:
    """Indicator load of the disk |(x,y) - (1/2,1/2)|^2 < 0.1; produces an
    interior layer that no mesh line can align with."""

    def f(x, y):
        r2 = (x - 0.5) ** 2 + (y - 0.5) ** 2
        return np.where(r2 < 0.1, 1.0, 0.0)

    return f


@dataclass(frozen=True)
class ErrorReport:
    """Balanced-norm error components and the estimator total of one solve."""

    n_elements: int
    eta_sq: float
    err_u_sq: Optional[float] = None
    err_sigma_sq: Optional[float] = None
    eps_err_rho_sq: Optional[float] = None
    cg_iters: int = 0

    def balanced_sq(self) -> Optional[float]:
        if self.err_u_sq is None:
            return None
        return self.err_u_sq + self.err_sigma_sq + self.eps_err_rho_sq


def balanced_errors(
    mesh: Mesh,
    x: np.ndarray,
    dofmap,
    exact: ExactSolution,
    w: EpsWeights,
    quad_degree: int = 14,
    chunk: int = 2048,
):
    """Componentwise squared L2 errors of the piecewise-constant fields.

    Returns ``(err_u_sq, err_sigma_sq, eps_err_rho_sq)`` where the third
    entry carries the balanced weight eps^{2 beta}.
    """
    nt = mesh.n_triangles
    sl = dofmap.field_slices()
    u_h = x[sl["u"]]
    s1_h = x[sl["sigma1"]]
    s2_h = x[sl["sigma2"]]
    rho_h = x[sl["rho"]]

    quad = quadrature_triangle(quad_degree)
    jac, det, _ = mesh_affine_data(mesh)
    err_u = err_s = err_r = 0.0
    for lo in range(0, nt, chunk):
        hi = min(lo + chunk, nt)
        pts = np.einsum("kab,qb->kqa", jac[lo:hi], quad.points) + \
            mesh.vertices[mesh.triangles[lo:hi, 0]][:, None, :]
        xq, yq = pts[:, :, 0], pts[:, :, 1]
        wq = det[lo:hi, None] * quad.weights[None, :]
        du = exact.u(xq, yq) - u_h[lo:hi, None]
        err_u += float(np.sum(wq * du ** 2))
        sig = exact.sigma(xq, yq)
        ds1 = sig[..., 0] - s1_h[lo:hi, None]
        ds2 = sig[..., 1] - s2_h[lo:hi, None]
        err_s += float(np.sum(wq * (ds1 ** 2 + ds2 ** 2)))
        dr = exact.rho(xq, yq) - rho_h[lo:hi, None]
        err_r += float(np.sum(wq * dr ** 2))
    return err_u, err_s, w.power(2.0 * w.beta) * err_r


def energy_error(indicators) -> float:
    """Energy-norm error surrogate sqrt(sum eta_K^2)."""
    return float(np.sqrt(max(indicators.total, 0.0)))


@dataclass(frozen=True)
class OracleSolution:
    x: np.ndarray
    eta_sq: np.ndarray

    @property
    def eta_sq_total(self) -> float:
        return float(np.sum(self.eta_sq))


def dense_oracle_solve(
    mesh: Mesh,
    w: EpsWeights,
    r: int,
    f: Callable,
    c: Optional[Callable] = None,
    dirichlet: Optional[Callable] = None,
    max_elements: int = 32,
) -> OracleSolution:
    """Brute-force reference pipeline on a small mesh.

    Builds the full dense test-trial coupling matrix and the block-diagonal
    Gram matrix, inverts the Gram blocks explicitly, forms the normal
    equations densely and solves them by a dense Cholesky factorization.
    Shares only the per-element matrices with the production path.
    """
    nt = mesh.n_triangles
    if nt > max_elements:
        raise ValueError(f"dense oracle limited to {max_elements} elements")
    skeleton = build_skeleton(mesh)
    dofmap = build_trial_dofmap(mesh, skeleton, dirichlet=dirichlet)
    n4 = 4 * basis_size(r)
    n_free = dofmap.n_total

    b_full = np.zeros((nt * n4, n_free))
    ell = np.zeros(nt * n4)
    jinv = np.zeros((nt * n4, nt * n4))
    for k in range(nt):
        bk, cols, _ = local_b(mesh, skeleton, dofmap, k, w, r, c=c)
        lk = local_load(mesh, k, f, c, w, r)
        rows = slice(k * n4, (k + 1) * n4)
        ell[rows] = lk - bk @ dofmap.local_lift[k]
        for j, col in enumerate(cols):
            if col >= 0:
                b_full[rows, col] += bk[:, j]
        jinv[rows, rows] = np.linalg.inv(local_gram(mesh, k, w, r))

    a = b_full.T @ jinv @ b_full
    rhs = b_full.T @ (jinv @ ell)
    x = solve_cholesky(cholesky(a), rhs)
    res = ell - b_full @ x
    eta_sq = np.empty(nt)
    for k in range(nt):
        rows = slice(k * n4, (k + 1) * n4)
        eta_sq[k] = res[rows] @ jinv[rows, rows] @ res[rows]
    return OracleSolution(x, eta_sq)


def rate_fit(counts, values, window: int = 4) -> float:
    """Least-squares slope of log(value) against log(count) over the
    trailing ``window`` data points."""
    counts = np.asarray(counts, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(counts) != len(values) or len(counts) < 2:
        raise ValueError("need at least two (count, value) pairs")
    k = min(window, len(counts))
    cn, vn = counts[-k:], values[-k:]
    if np.any(cn <= 0.0) or np.any(vn <= 0.0):
        raise ValueError("rate fit requires positive counts and values")
    slope, _ = np.polyfit(np.log(cn), np.log(vn), 1)
    return float(slope)
