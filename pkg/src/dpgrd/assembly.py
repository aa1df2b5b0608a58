"""Elementwise DPG systems and assembly of the SPD normal equations.

Per element K the method needs the triple (B_K, G_K, ell_K): the coupling
of the 16 local trial unknowns against the broken test space, the Gram
matrix of the weighted test inner product, and the load vector.  The
global system is Sum_K B_K^T G_K^{-1} B_K over the free trial unknowns,
driven by Sum_K B_K^T G_K^{-1} ell_K (the Dirichlet lift moves prescribed
trace values to the right-hand side).

Local test functions are ordered [tau_1 | tau_2 | mu | v], each block a
P^r basis; local trial columns are ordered

    [u, sigma_1, sigma_2, rho,
     u_hat_a (3 vertices), u_hat_b (3 vertices),
     sigma_hat_a (3 edges), sigma_hat_b (3 edges)].

Flux columns carry the element's orientation sign, so the stored B_K maps
global coefficients directly.  Everything that does not involve the load
or a variable reaction coefficient is integrated exactly by contracting
reference-element moment tensors with the affine geometry.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sparse

from .basis import (
    basis_size,
    mesh_affine_data,
    quadrature_triangle,
    reference_basis,
)
from .mesh import Mesh, Skeleton

__all__ = [
    "EpsWeights",
    "TrialDofMap",
    "LocalSystem",
    "LocalSystems",
    "AssemblyError",
    "InvalidCoefficientError",
    "build_trial_dofmap",
    "build_local_systems",
    "assemble_normal_equations",
    "local_gram",
    "local_b",
    "local_load",
    "apply_variable_reaction",
    "default_quadrature_degree",
    "N_LOCAL_COLS",
]

N_LOCAL_COLS = 16
COL_U, COL_S1, COL_S2, COL_RHO = 0, 1, 2, 3
COL_UA, COL_UB, COL_SA, COL_SB = 4, 7, 10, 13


class AssemblyError(Exception):
    """Fatal assembly failure (non-SPD Gram block, inconsistent inputs)."""


class InvalidCoefficientError(Exception):
    """Reaction coefficient not strictly positive at a quadrature point."""


@dataclass(frozen=True)
class EpsWeights:
    """Diffusion parameter and the exponent pair weighting the test norm.

    The defaults alpha = 1/4, beta = 1/2 are the robust choice.  Powers are
    evaluated in log-space; for extremely small eps a weight may underflow
    to exactly zero, which simply drops the corresponding term (the Gram
    blocks stay positive definite).
    """

    eps: float = 1.0
    alpha: float = 0.25
    beta: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha and beta must lie in [0, 1]")
        for name in (
            "neg_alpha", "beta_minus_alpha", "one_minus_alpha",
            "one_minus_alpha_plus_beta", "pow_beta", "neg_two_alpha",
            "neg_two_beta", "two_beta_minus_alpha", "two_one_minus_alpha",
        ):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"weight eps^q overflows for eps={self.eps}")

    def power(self, q: float) -> float:
        if self.eps == 1.0 or q == 0.0:
            return 1.0
        return math.exp(q * math.log(self.eps))

    @property
    def neg_alpha(self):
        return self.power(-self.alpha)

    @property
    def beta_minus_alpha(self):
        return self.power(self.beta - self.alpha)

    @property
    def one_minus_alpha(self):
        return self.power(1.0 - self.alpha)

    @property
    def one_minus_alpha_plus_beta(self):
        return self.power(1.0 - self.alpha + self.beta)

    @property
    def pow_beta(self):
        return self.power(self.beta)

    @property
    def neg_two_alpha(self):
        return self.power(-2.0 * self.alpha)

    @property
    def neg_two_beta(self):
        return self.power(-2.0 * self.beta)

    @property
    def two_beta_minus_alpha(self):
        return self.power(2.0 * (self.beta - self.alpha))

    @property
    def two_one_minus_alpha(self):
        return self.power(2.0 * (1.0 - self.alpha))


def default_quadrature_degree(r: int) -> int:
    """Volume quadrature exactness used for loads and variable reaction."""
    return 2 * r + 6


@dataclass(frozen=True)
class TrialDofMap:
    """Global numbering of the seven trial unknown groups.

    Element fields (u, sigma_1, sigma_2, rho) are piecewise constants and
    come first; then the two vertex-based trace groups (only unconstrained
    vertices carry an index), then the two edge-based flux groups.  Trace
    values prescribed by Dirichlet data are held in the lift arrays.
    """

    n_triangles: int
    n_edges: int
    n_free_vertices: int
    free_vertex: np.ndarray      # (nv,) index among free vertices, -1 if fixed
    lift_a: np.ndarray           # (nv,) prescribed u_hat_a values (0 at free)
    lift_b: np.ndarray
    local_cols: np.ndarray       # (nt, 16) global index, -1 for constrained
    local_signs: np.ndarray      # (nt, 16) +/-1 on flux columns, +1 elsewhere
    local_lift: np.ndarray       # (nt, 16) lift values at constrained slots

    @property
    def n_total(self) -> int:
        return (4 * self.n_triangles + 2 * self.n_free_vertices
                + 2 * self.n_edges)

    def field_slices(self):
        nt = self.n_triangles
        return {
            "u": slice(0, nt),
            "sigma1": slice(nt, 2 * nt),
            "sigma2": slice(2 * nt, 3 * nt),
            "rho": slice(3 * nt, 4 * nt),
        }


def build_trial_dofmap(
    mesh: Mesh,
    skeleton: Skeleton,
    dirichlet: Optional[Callable] = None,
) -> TrialDofMap:
    """Number the trial unknowns and record boundary-trace lift values.

    ``dirichlet`` is a callback g(x, y); when None the boundary data is
    homogeneous.  Both trace groups are lifted with the same vertex values
    g(z) at boundary vertices.
    """
    nt, ne, nv = mesh.n_triangles, skeleton.n_edges, mesh.n_vertices
    bnd = mesh.boundary_vertices()
    is_free = np.ones(nv, dtype=bool)
    is_free[bnd] = False
    free_vertex = np.full(nv, -1, dtype=np.int64)
    free_vertex[is_free] = np.arange(int(is_free.sum()))
    nfv = int(is_free.sum())

    lift_a = np.zeros(nv)
    if dirichlet is not None and len(bnd):
        vals = np.asarray(
            dirichlet(mesh.vertices[bnd, 0], mesh.vertices[bnd, 1]), dtype=float
        )
        lift_a[bnd] = vals
    lift_b = lift_a.copy()

    tris = mesh.triangles
    cols = np.empty((nt, N_LOCAL_COLS), dtype=np.int64)
    signs = np.ones((nt, N_LOCAL_COLS))
    lift = np.zeros((nt, N_LOCAL_COLS))

    elem = np.arange(nt)
    cols[:, COL_U] = elem
    cols[:, COL_S1] = nt + elem
    cols[:, COL_S2] = 2 * nt + elem
    cols[:, COL_RHO] = 3 * nt + elem
    off_ua = 4 * nt
    off_ub = 4 * nt + nfv
    off_sa = 4 * nt + 2 * nfv
    off_sb = off_sa + ne
    for lv in range(3):
        v = tris[:, lv]
        fid = free_vertex[v]
        cols[:, COL_UA + lv] = np.where(fid >= 0, off_ua + fid, -1)
        cols[:, COL_UB + lv] = np.where(fid >= 0, off_ub + fid, -1)
        lift[:, COL_UA + lv] = lift_a[v]
        lift[:, COL_UB + lv] = lift_b[v]
    lift[cols >= 0] = 0.0
    for le in range(3):
        e = skeleton.tri_edges[:, le]
        cols[:, COL_SA + le] = off_sa + e
        cols[:, COL_SB + le] = off_sb + e
        signs[:, COL_SA + le] = skeleton.tri_edge_sign[:, le]
        signs[:, COL_SB + le] = skeleton.tri_edge_sign[:, le]

    return TrialDofMap(
        nt, ne, nfv, free_vertex, lift_a, lift_b, cols, signs, lift
    )


@dataclass(frozen=True)
class LocalSystem:
    """Per-element view of the DPG triple with its global column data."""

    b_matrix: np.ndarray        # (4n, 16), orientation signs applied
    gram: np.ndarray            # (4n, 4n) symmetric positive definite
    load: np.ndarray            # (4n,)
    global_indices: np.ndarray  # (16,), -1 marks a constrained trace column
    signs: np.ndarray           # (16,)
    lift: np.ndarray            # (16,) prescribed values at constrained slots


class LocalSystems:
    """All per-element systems of one mesh, stored as stacked arrays.

    The Gram matrix of each element is block diagonal over the three test
    fields; the Cholesky factors of the (tau, mu, v) blocks are kept and
    reused by the solver right-hand side and the error indicators.
    """

    def __init__(self, mesh, skeleton, dofmap, weights, r, b, load,
                 chol_tau, chol_mu, chol_v):
        self.mesh = mesh
        self.skeleton = skeleton
        self.dofmap = dofmap
        self.weights = weights
        self.test_order = r
        self.n_scalar = basis_size(r)
        self.b = b
        self.load = load
        self.chol_tau = chol_tau
        self.chol_mu = chol_mu
        self.chol_v = chol_v

    @property
    def n_triangles(self) -> int:
        return self.b.shape[0]

    @property
    def n_test(self) -> int:
        return self.b.shape[1]

    def gram(self, k: int) -> np.ndarray:
        n = self.n_scalar
        out = np.zeros((4 * n, 4 * n))
        lt = self.chol_tau[k]
        out[: 2 * n, : 2 * n] = lt @ lt.T
        lm = self.chol_mu[k]
        out[2 * n: 3 * n, 2 * n: 3 * n] = lm @ lm.T
        lv = self.chol_v[k]
        out[3 * n:, 3 * n:] = lv @ lv.T
        return out

    def local_system(self, k: int) -> LocalSystem:
        d = self.dofmap
        return LocalSystem(
            self.b[k].copy(), self.gram(k), self.load[k].copy(),
            d.local_cols[k].copy(), d.local_signs[k].copy(),
            d.local_lift[k].copy(),
        )

    def _blocks(self, x):
        n = self.n_scalar
        return x[:, : 2 * n], x[:, 2 * n: 3 * n], x[:, 3 * n:]

    def apply_gram_inverse(self, x: np.ndarray) -> np.ndarray:
        """Solve G_K z = x_K for every element (x stacked, test dim axis 1)."""
        out = np.empty_like(x)
        n = self.n_scalar
        for lo, hi, L in (
            (0, 2 * n, self.chol_tau),
            (2 * n, 3 * n, self.chol_mu),
            (3 * n, 4 * n, self.chol_v),
        ):
            rhs = x[:, lo:hi]
            squeeze = rhs.ndim == 2
            if squeeze:
                rhs = rhs[:, :, None]
            y = np.linalg.solve(L, rhs)
            z = np.linalg.solve(L.transpose(0, 2, 1), y)
            out[:, lo:hi] = z[:, :, 0] if squeeze else z
        return out

    def half_solve(self, x: np.ndarray) -> np.ndarray:
        """Solve L_K y = x_K blockwise; sum of squares of y is the local
        Gram-inverse quadratic form of x."""
        out = np.empty_like(x)
        n = self.n_scalar
        for lo, hi, L in (
            (0, 2 * n, self.chol_tau),
            (2 * n, 3 * n, self.chol_mu),
            (3 * n, 4 * n, self.chol_v),
        ):
            out[:, lo:hi] = np.linalg.solve(L, x[:, lo:hi, None])[:, :, 0]
        return out

    def local_coefficients(self, x: np.ndarray) -> np.ndarray:
        """Gather the full 16-column coefficient vector of every element
        from a free-DOF solution vector, inserting lifted trace values."""
        cols = self.dofmap.local_cols
        vals = np.where(cols >= 0, x[np.clip(cols, 0, None)],
                        self.dofmap.local_lift)
        return vals

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """ell_K - B_K x_K for every element."""
        return self.load - np.einsum("krj,kj->kr", self.b, self.local_coefficients(x))


def _cholesky_stack(blocks: np.ndarray, label: str, start: int):
    try:
        return np.linalg.cholesky(blocks)
    except np.linalg.LinAlgError:
        for i, blk in enumerate(blocks):
            try:
                np.linalg.cholesky(blk)
            except np.linalg.LinAlgError:
                raise AssemblyError(
                    f"Gram {label} block of element {start + i} is not SPD"
                ) from None
        raise


def _gram_blocks(det, inv_t, w: EpsWeights, rb):
    """Cholesky factors of the (tau, mu, v) Gram blocks for a batch."""
    n = rb.size
    k = len(det)
    C = np.einsum("kca,kcb->kab", inv_t, inv_t)
    m3 = np.stack([C[:, 0, 0], 2.0 * C[:, 0, 1], C[:, 1, 1]], axis=1)
    stiff_c = np.einsum("kcd,cdij->kij", C, rb.stiff, optimize=True)

    tau = np.empty((k, 2 * n, 2 * n))
    a00 = np.einsum("kc,kd,cdij->kij", inv_t[:, 0], inv_t[:, 0], rb.stiff,
                    optimize=True)
    a11 = np.einsum("kc,kd,cdij->kij", inv_t[:, 1], inv_t[:, 1], rb.stiff,
                    optimize=True)
    a01 = np.einsum("kc,kd,cdij->kij", inv_t[:, 0], inv_t[:, 1], rb.stiff,
                    optimize=True)
    mass = rb.mass[None, :, :]
    d = det[:, None, None]
    tau[:, :n, :n] = d * (w.neg_two_alpha * mass + a00)
    tau[:, n:, n:] = d * (w.neg_two_alpha * mass + a11)
    tau[:, :n, n:] = d * a01
    tau[:, n:, :n] = d * a01.transpose(0, 2, 1)

    mu = d * (w.neg_two_beta * mass + stiff_c)
    hess_c = np.einsum("ka,kb,abij->kij", m3, m3, rb.hess2, optimize=True)
    v = d * (mass + w.two_beta_minus_alpha * stiff_c
             + w.two_one_minus_alpha * hess_c)
    return tau, mu, v, m3


def _edge_geometry(mesh, skeleton, sel):
    """Lengths, outward normals and orientation signs of the three local
    edges of the selected elements."""
    e = skeleton.tri_edges[sel]                  # (k, 3)
    sign = skeleton.tri_edge_sign[sel]           # (k, 3)
    lengths = skeleton.lengths[e]                # (k, 3)
    normals = skeleton.normals[e] * sign[:, :, None]   # outward
    return e, sign, lengths, normals


def _local_b_batch(mesh, skeleton, sel, w, rb, det, inv_t,
                   quad, tab_vals, tab_hess, m3, f=None, c=None, jac=None,
                   with_load=True):
    """B_K (signed) and optionally ell_K for the selected elements."""
    n = rb.size
    k = len(sel)
    rows_tau1 = slice(0, n)
    rows_tau2 = slice(n, 2 * n)
    rows_mu = slice(2 * n, 3 * n)
    rows_v = slice(3 * n, 4 * n)
    b = np.zeros((k, 4 * n, N_LOCAL_COLS))

    # physical quadrature data for the c-weighted terms and the load
    pts = np.einsum("kab,qb->kqa", jac, quad.points) + \
        mesh.vertices[mesh.triangles[sel, 0]][:, None, :]
    if c is not None:
        cvals = np.asarray(c(pts[:, :, 0], pts[:, :, 1]), dtype=float)
        cvals = np.broadcast_to(cvals, (k, len(quad.weights)))
        if np.any(cvals <= 0.0):
            raise InvalidCoefficientError(
                "reaction coefficient must be positive at quadrature points"
            )
    else:
        cvals = np.ones((k, len(quad.weights)))

    dweight = det[:, None]
    div1 = np.einsum("kc,ci->ki", inv_t[:, 0], rb.g0)
    div2 = np.einsum("kc,ci->ki", inv_t[:, 1], rb.g0)

    # column u:  (u, div tau + c v)
    b[:, rows_tau1, COL_U] = dweight * div1
    b[:, rows_tau2, COL_U] = dweight * div2
    wq_c = quad.weights[None, :] * cvals
    b[:, rows_v, COL_U] = dweight * (wq_c @ tab_vals.T)

    # columns sigma: (sigma, eps^-a tau + grad mu + (eps^{1-a}+eps^{b-a}) grad v)
    grad_w = w.one_minus_alpha + w.beta_minus_alpha
    b[:, rows_tau1, COL_S1] = w.neg_alpha * dweight * rb.m0[None, :]
    b[:, rows_tau2, COL_S2] = w.neg_alpha * dweight * rb.m0[None, :]
    b[:, rows_mu, COL_S1] = dweight * div1
    b[:, rows_mu, COL_S2] = dweight * div2
    b[:, rows_v, COL_S1] = grad_w * dweight * div1
    b[:, rows_v, COL_S2] = grad_w * dweight * div2

    # column rho: (rho, mu + eps^{1-a+b} lap v / c)
    b[:, rows_mu, COL_RHO] = dweight * rb.m0[None, :]
    wq_invc = quad.weights[None, :] / cvals
    lap_term = np.einsum("kq,ka,aiq->ki", wq_invc, m3, tab_hess,
                         optimize=True)
    b[:, rows_v, COL_RHO] = w.one_minus_alpha_plus_beta * dweight * lap_term

    # skeleton terms
    _, _, lengths, normals = _edge_geometry(mesh, skeleton, sel)
    qn = np.einsum("kdc,ked->kec", inv_t, normals)   # J^{-1} n per edge
    for le in range(3):
        L = lengths[:, le][:, None]
        nrm = normals[:, le]
        ev_tot = rb.edge_val[0, le] + rb.edge_val[1, le]
        # -<u_hat_a, tau . n> and -eps^b <u_hat_b, grad v . n>
        for wi in (0, 1):
            lv = le if wi == 0 else (le + 1) % 3
            b[:, rows_tau1, COL_UA + lv] -= L * nrm[:, 0:1] * rb.edge_val[wi, le][None, :]
            b[:, rows_tau2, COL_UA + lv] -= L * nrm[:, 1:2] * rb.edge_val[wi, le][None, :]
            gn = np.einsum("kc,ci->ki", qn[:, le], rb.edge_grad[wi, le])
            b[:, rows_v, COL_UB + lv] -= w.pow_beta * L * gn
        # -<sigma_hat_a, mu> and -eps^{1-a} <sigma_hat_b, v>; the columns are
        # w.r.t. the element-local trace q.n_K, the caller applies the
        # orientation signs that map them onto the global edge unknowns
        s = lengths[:, le][:, None]
        b[:, rows_mu, COL_SA + le] -= s * ev_tot[None, :]
        b[:, rows_v, COL_SB + le] -= w.one_minus_alpha * s * ev_tot[None, :]

    if not with_load:
        return b, None

    if f is None:
        load = np.zeros((k, 4 * n))
    else:
        fvals = np.asarray(f(pts[:, :, 0], pts[:, :, 1]), dtype=float)
        fvals = np.broadcast_to(fvals, (k, len(quad.weights)))
        wf = quad.weights[None, :] * fvals
        term1 = wf @ tab_vals.T
        term2 = np.einsum("kq,ka,aiq->ki", wf / cvals, m3, tab_hess,
                          optimize=True)
        load = np.zeros((k, 4 * n))
        load[:, rows_v] = det[:, None] * (term1 - w.pow_beta * term2)
    return b, load


def build_local_systems(
    mesh: Mesh,
    skeleton: Skeleton,
    dofmap: TrialDofMap,
    w: EpsWeights,
    r: int,
    f: Optional[Callable] = None,
    c: Optional[Callable] = None,
    quad_degree: Optional[int] = None,
    chunk: int = 2048,
) -> LocalSystems:
    """Compute (B_K, G_K factors, ell_K) for every element of the mesh."""
    rb = reference_basis(r)
    n = rb.size
    nt = mesh.n_triangles
    quad = quadrature_triangle(
        default_quadrature_degree(r) if quad_degree is None else quad_degree
    )
    tab = rb.tables(quad)
    tab_vals = tab.values
    tab_hess = tab.hessians.transpose(2, 0, 1)   # (3, n, nq)

    jac, det, inv_t = mesh_affine_data(mesh)
    b = np.empty((nt, 4 * n, N_LOCAL_COLS))
    load = np.empty((nt, 4 * n))
    chol_tau = np.empty((nt, 2 * n, 2 * n))
    chol_mu = np.empty((nt, n, n))
    chol_v = np.empty((nt, n, n))

    for lo in range(0, nt, chunk):
        hi = min(lo + chunk, nt)
        sel = np.arange(lo, hi)
        tau, mu, v, m3 = _gram_blocks(det[sel], inv_t[sel], w, rb)
        chol_tau[lo:hi] = _cholesky_stack(tau, "tau", lo)
        chol_mu[lo:hi] = _cholesky_stack(mu, "mu", lo)
        chol_v[lo:hi] = _cholesky_stack(v, "v", lo)
        bk, lk = _local_b_batch(
            mesh, skeleton, sel, w, rb, det[sel], inv_t[sel],
            quad, tab_vals, tab_hess, m3, f=f, c=c, jac=jac[sel],
        )
        bk *= dofmap.local_signs[sel][:, None, :]
        b[lo:hi] = bk
        load[lo:hi] = lk

    return LocalSystems(mesh, skeleton, dofmap, w, r, b, load,
                        chol_tau, chol_mu, chol_v)


def assemble_normal_equations(
    mesh: Mesh,
    skeleton: Skeleton,
    dofmap: TrialDofMap,
    w: EpsWeights,
    r: int,
    f: Optional[Callable] = None,
    c: Optional[Callable] = None,
    quad_degree: Optional[int] = None,
):
    """Assemble A = Sum B_K^T G_K^{-1} B_K and the lifted right-hand side.

    Returns ``(A, rhs, systems)`` with A in CSR format over the free trial
    unknowns and ``systems`` holding the per-element matrices and Gram
    Cholesky factors for reuse by the error indicators.
    """
    systems = build_local_systems(mesh, skeleton, dofmap, w, r, f=f, c=c,
                                  quad_degree=quad_degree)
    n_free = dofmap.n_total
    cols = dofmap.local_cols
    free = cols >= 0

    cinv = systems.apply_gram_inverse(systems.b)
    a_loc = np.einsum("kri,krj->kij", systems.b, cinv)
    ell_eff = systems.load - np.einsum("krj,kj->kr", systems.b,
                                       dofmap.local_lift)
    rhs_loc = np.einsum("kri,kr->ki", cinv, ell_eff)

    pair = free[:, :, None] & free[:, None, :]
    rows = np.broadcast_to(cols[:, :, None], a_loc.shape)[pair]
    ccols = np.broadcast_to(cols[:, None, :], a_loc.shape)[pair]
    vals = a_loc[pair]
    a = sparse.coo_matrix((vals, (rows, ccols)),
                          shape=(n_free, n_free)).tocsr()

    rhs = np.zeros(n_free)
    np.add.at(rhs, cols[free], rhs_loc[free])
    return a, rhs, systems


# ---------------------------------------------------------------------------
# single-element views (used by the dense oracle and the test suite)
# ---------------------------------------------------------------------------

def local_gram(mesh: Mesh, element: int, w: EpsWeights, r: int) -> np.ndarray:
    """Dense Gram matrix of the weighted test inner product on one element."""
    rb = reference_basis(r)
    _, det, inv_t = mesh_affine_data(mesh)
    sel = np.array([element])
    tau, mu, v, _ = _gram_blocks(det[sel], inv_t[sel], w, rb)
    n = rb.size
    out = np.zeros((4 * n, 4 * n))
    out[: 2 * n, : 2 * n] = tau[0]
    out[2 * n: 3 * n, 2 * n: 3 * n] = mu[0]
    out[3 * n:, 3 * n:] = v[0]
    return out


def local_b(
    mesh: Mesh,
    skeleton: Skeleton,
    dofmap: TrialDofMap,
    element: int,
    w: EpsWeights,
    r: int,
    c: Optional[Callable] = None,
    quad_degree: Optional[int] = None,
):
    """B_K with orientation signs applied, plus the global column indices
    and signs of the 16 local trial columns."""
    rb = reference_basis(r)
    quad = quadrature_triangle(
        default_quadrature_degree(r) if quad_degree is None else quad_degree
    )
    tab = rb.tables(quad)
    jac, det, inv_t = mesh_affine_data(mesh)
    sel = np.array([element])
    _, _, _, m3 = _gram_blocks(det[sel], inv_t[sel], w, rb)
    b, _ = _local_b_batch(
        mesh, skeleton, sel, w, rb, det[sel], inv_t[sel],
        quad, tab.values, tab.hessians.transpose(2, 0, 1), m3, c=c,
        jac=jac[sel], with_load=False,
    )
    b = b[0] * dofmap.local_signs[element][None, :]
    return b, dofmap.local_cols[element].copy(), dofmap.local_signs[element].copy()


def apply_variable_reaction(mesh, skeleton, dofmap, element, w, r, c,
                            quad_degree=None):
    """Local coupling matrix for reaction coefficient c (tests with
    v - eps^beta lap v / c); identical to :func:`local_b` for c == 1."""
    return local_b(mesh, skeleton, dofmap, element, w, r, c=c,
                   quad_degree=quad_degree)


def local_load(
    mesh: Mesh,
    element: int,
    f: Callable,
    c: Optional[Callable],
    w: EpsWeights,
    r: int,
    quad_degree: Optional[int] = None,
) -> np.ndarray:
    """Load vector (f, v - eps^beta lap v / c) on one element."""
    rb = reference_basis(r)
    quad = quadrature_triangle(
        default_quadrature_degree(r) if quad_degree is None else quad_degree
    )
    tab = rb.tables(quad)
    jac, det, inv_t = mesh_affine_data(mesh)
    sel = np.array([element])
    n = rb.size
    C = np.einsum("kca,kcb->kab", inv_t[sel], inv_t[sel])
    m3 = np.stack([C[:, 0, 0], 2.0 * C[:, 0, 1], C[:, 1, 1]], axis=1)
    pts = np.einsum("kab,qb->kqa", jac[sel], quad.points) + \
        mesh.vertices[mesh.triangles[sel, 0]][:, None, :]
    if c is not None:
        cvals = np.asarray(c(pts[:, :, 0], pts[:, :, 1]), dtype=float)
        cvals = np.broadcast_to(cvals, (1, len(quad.weights)))
        if np.any(cvals <= 0.0):
            raise InvalidCoefficientError(
                "reaction coefficient must be positive at quadrature points"
            )
    else:
        cvals = np.ones((1, len(quad.weights)))
    fvals = np.asarray(f(pts[:, :, 0], pts[:, :, 1]), dtype=float)
    fvals = np.broadcast_to(fvals, (1, len(quad.weights)))
    wf = quad.weights[None, :] * fvals
    tab_hess = tab.hessians.transpose(2, 0, 1)
    term1 = wf @ tab.values.T
    term2 = np.einsum("kq,ka,aiq->ki", wf / cvals, m3, tab_hess,
                      optimize=True)
    load = np.zeros(4 * n)
    load[3 * n:] = det[sel][:, None] * (term1 - w.pow_beta * term2)
    return load
