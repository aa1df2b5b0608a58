"""Reference-triangle polynomial spaces, quadrature rules and affine maps.

The reference triangle is T = {(x, y) : x >= 0, y >= 0, x + y <= 1} with
vertices r0 = (0,0), r1 = (1,0), r2 = (0,1).  Shape functions are
hierarchical: the three barycentric coordinates, edge functions built from
Legendre kernels of the difference of the two adjacent barycentric
coordinates, and interior bubbles.  Only the spanned space P^p matters for
the solver, so any hierarchical basis of P^p is admissible; this one keeps
the vertex functions as a partition of unity.

All basis functions are stored as exact monomial coefficient matrices,
which makes values, gradients and second derivatives cheap to tabulate and
lets reference integrals be computed in closed form from
``int_T x^a y^b = a! b! / (a + b + 2)!``.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "MAX_ORDER",
    "MAX_QUAD_DEGREE",
    "UnsupportedOrderError",
    "SingularMapError",
    "ShapeTable",
    "QuadratureRule",
    "AffineMap",
    "shape_table",
    "quadrature_triangle",
    "quadrature_edge",
    "affine_map",
    "basis_size",
    "ReferenceBasis",
    "reference_basis",
]

MAX_ORDER = 6
MAX_QUAD_DEGREE = 20


class UnsupportedOrderError(Exception):
    """Polynomial order or quadrature degree beyond the supported range."""


class SingularMapError(Exception):
    """Degenerate element geometry."""


def basis_size(p: int) -> int:
    return (p + 1) * (p + 2) // 2


# ---------------------------------------------------------------------------
# polynomial arithmetic on monomial coefficient matrices C[a, b] <-> x^a y^b
# ---------------------------------------------------------------------------

def _poly(p, entries):
    c = np.zeros((p + 1, p + 1))
    for (a, b), v in entries.items():
        c[a, b] = v
    return c

def _pmul(A, B):
    out = np.zeros((A.shape[0] + B.shape[0] - 1, A.shape[1] + B.shape[1] - 1))
    for a in range(A.shape[0]):
        for b in range(A.shape[1]):
            if A[a, b] != 0.0:
                out[a:a + B.shape[0], b:b + B.shape[1]] += A[a, b] * B
    return out

def _ppad(A, shape):
    out = np.zeros(shape)
    out[:A.shape[0], :A.shape[1]] = A
    return out

def _pdx(A):
    out = np.zeros_like(A)
    if A.shape[0] > 1:
        out[:-1] = A[1:] * np.arange(1, A.shape[0])[:, None]
    return out

def _pdy(A):
    out = np.zeros_like(A)
    if A.shape[1] > 1:
        out[:, :-1] = A[:, 1:] * np.arange(1, A.shape[1])[None, :]
    return out

def _peval(coeffs, x, y):
    """Evaluate stacked coefficient matrices (n, d, d) at points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = coeffs.shape[1]
    xp = np.stack([x ** a for a in range(d)])          # (d, npts)
    yp = np.stack([y ** b for b in range(d)])
    return np.einsum("nab,ap,bp->np", coeffs, xp, yp)


def _legendre_of(m, t):
    """Legendre polynomial P_m composed with the bivariate polynomial t."""
    shape = (m * (t.shape[0] - 1) + 1, m * (t.shape[1] - 1) + 1)
    shape = (max(shape[0], 1), max(shape[1], 1))
    p_prev = _ppad(np.array([[1.0]]), shape)
    if m == 0:
        return p_prev
    p_cur = _ppad(t, shape)
    for k in range(1, m):
        nxt = ((2 * k + 1) * _pmul(t, p_cur)[:shape[0], :shape[1]]
               - k * p_prev) / (k + 1)
        p_prev, p_cur = p_cur, nxt
    return p_cur


@lru_cache(maxsize=None)
def _hierarchical_coeffs(p: int) -> np.ndarray:
    """Monomial coefficients of the hierarchical basis of P^p, (nb, p+1, p+1)."""
    if p == 0:
        return np.ones((1, 1, 1))
    lam = [
        _poly(p, {(0, 0): 1.0, (1, 0): -1.0, (0, 1): -1.0}),  # 1 - x - y
        _poly(p, {(1, 0): 1.0}),                               # x
        _poly(p, {(0, 1): 1.0}),                               # y
    ]
    funcs = [lam[0], lam[1], lam[2]]
    shape = (p + 1, p + 1)
    for k in range(2, p + 1):
        for i in range(3):
            j = (i + 1) % 3
            t = (lam[j] - lam[i])[:2, :2]
            kernel = _legendre_of(k - 2, t)
            f = _pmul(_pmul(lam[i], lam[j]), kernel)
            funcs.append(_ppad(f[:p + 1, :p + 1], shape))
    bubble = _pmul(_pmul(lam[0], lam[1]), lam[2])
    for deg in range(0, p - 2):
        for a in range(deg, -1, -1):
            b = deg - a
            mono = _poly(p, {(a, b): 1.0})
            funcs.append(_ppad(_pmul(bubble, mono)[:p + 1, :p + 1], shape))
    out = np.stack(funcs)
    assert out.shape[0] == basis_size(p)
    return out


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeTable:
    """Values and derivatives of the P^p basis at a set of reference points.

    ``hessians`` stores the second derivatives in the order (xx, xy, yy);
    ``laplacians`` is their trace (xx + yy).
    """

    order: int
    values: np.ndarray      # (nb, npts)
    gradients: np.ndarray   # (nb, npts, 2)
    hessians: np.ndarray    # (nb, npts, 3)
    laplacians: np.ndarray  # (nb, npts)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class QuadratureRule:
    """Positive quadrature rule; ``points`` is (nq, 2) on the reference
    triangle or (nq,) on the unit interval for edge rules."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


@dataclass(frozen=True)
class AffineMap:
    """Affine map from the reference triangle onto a physical triangle.

    ``x = jacobian @ x_ref + translation``; gradients transform with the
    inverse-transpose Jacobian and the physical Laplacian of a mapped
    function is a fixed contraction of the reference Hessian with the
    constant metric ``J^{-1} J^{-T}``.
    """

    jacobian: np.ndarray
    translation: np.ndarray
    determinant: float
    inverse_transpose: np.ndarray

    def apply(self, pts):
        return np.asarray(pts) @ self.jacobian.T + self.translation

    @property
    def metric(self) -> np.ndarray:
        """The matrix J^{-1} J^{-T} governing second-derivative transforms."""
        return self.inverse_transpose.T @ self.inverse_transpose


def shape_table(p: int, pts) -> ShapeTable:
    """Tabulate the hierarchical basis of P^p at reference points.

    Raises
    ------
    UnsupportedOrderError
        For p > 6 (or negative p).
    """
    if p < 0 or p > MAX_ORDER:
        raise UnsupportedOrderError(f"polynomial order {p} not in 0..{MAX_ORDER}")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    coeffs = _hierarchical_coeffs(p)
    vals = _peval(coeffs, x, y)
    dx = np.stack([_pdx(c) for c in coeffs])
    dy = np.stack([_pdy(c) for c in coeffs])
    grads = np.stack([_peval(dx, x, y), _peval(dy, x, y)], axis=2)
    dxx = np.stack([_pdx(c) for c in dx])
    dxy = np.stack([_pdy(c) for c in dx])
    dyy = np.stack([_pdy(c) for c in dy])
    hess = np.stack(
        [_peval(dxx, x, y), _peval(dxy, x, y), _peval(dyy, x, y)], axis=2
    )
    return ShapeTable(p, vals, grads, hess, hess[:, :, 0] + hess[:, :, 2])


def quadrature_triangle(degree: int) -> QuadratureRule:
    """Symmetric rule on the reference triangle, exact for total degree
    <= ``degree``.

    A tensor Gauss rule on the collapsed square (Duffy transform) is
    symmetrized over the six affine self-maps of the triangle, which
    preserves exactness.
    """
    if degree < 0 or degree > MAX_QUAD_DEGREE:
        raise UnsupportedOrderError(
            f"quadrature degree {degree} not in 0..{MAX_QUAD_DEGREE}"
        )
    m_xi = degree // 2 + 1
    m_eta = (degree + 1) // 2 + 1
    xi, w_xi = leggauss(m_xi)
    eta, w_eta = leggauss(m_eta)
    xi, w_xi = (xi + 1) / 2, w_xi / 2
    eta, w_eta = (eta + 1) / 2, w_eta / 2
    X, E = np.meshgrid(xi, eta, indexing="ij")
    W = np.outer(w_xi, w_eta) * (1.0 - E)
    x = (X * (1.0 - E)).ravel()
    y = E.ravel()
    w = W.ravel()

    lam = np.stack([1.0 - x - y, x, y], axis=1)
    pts, wts = [], []
    for perm in ((0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2)):
        pts.append(np.stack([lam[:, perm[1]], lam[:, perm[2]]], axis=1))
        wts.append(w / 6.0)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)


def quadrature_edge(degree: int) -> QuadratureRule:
    """Gauss rule on [0, 1], exact for polynomials of degree <= ``degree``."""
    if degree < 0 or degree > MAX_QUAD_DEGREE:
        raise UnsupportedOrderError(
            f"quadrature degree {degree} not in 0..{MAX_QUAD_DEGREE}"
        )
    m = degree // 2 + 1
    t, w = leggauss(m)
    return QuadratureRule((t + 1) / 2, w / 2, degree)


def affine_map(triangle: int, mesh) -> AffineMap:
    """Affine map of one mesh triangle (columns of J are the edge vectors)."""
    p = mesh.vertices[mesh.triangles[triangle]]
    jac = np.stack([p[1] - p[0], p[2] - p[0]], axis=1)
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= GEOM_DET_TOL:
        raise SingularMapError(f"triangle {triangle} is degenerate (det={det})")
    inv = np.array([[jac[1, 1], -jac[0, 1]], [-jac[1, 0], jac[0, 0]]]) / det
    return AffineMap(jac, p[0].copy(), float(det), inv.T)


GEOM_DET_TOL = 1e-28


def mesh_affine_data(mesh):
    """Batched Jacobians, determinants and inverse transposes for all
    triangles: arrays of shape (nt, 2, 2), (nt,), (nt, 2, 2)."""
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= GEOM_DET_TOL):
        k = int(np.argmin(det))
        raise SingularMapError(f"triangle {k} is degenerate (det={det[k]})")
    inv_t = np.empty_like(jac)
    inv_t[:, 0, 0] = jac[:, 1, 1]
    inv_t[:, 0, 1] = -jac[:, 1, 0]
    inv_t[:, 1, 0] = -jac[:, 0, 1]
    inv_t[:, 1, 1] = jac[:, 0, 0]
    inv_t /= det[:, None, None]
    return jac, det, inv_t


# ---------------------------------------------------------------------------
# exact reference integrals
# ---------------------------------------------------------------------------

def _monomial_integrals(maxdeg: int) -> np.ndarray:
    """I[a, b] = integral of x^a y^b over the reference triangle."""
    out = np.empty((maxdeg + 1, maxdeg + 1))
    for a in range(maxdeg + 1):
        for b in range(maxdeg + 1):
            out[a, b] = factorial(a) * factorial(b) / factorial(a + b + 2)
    return out


class ReferenceBasis:
    """Exact reference-element integrals of one P^p basis.

    The volume tensors are what elementwise Gram and coupling matrices
    contract against per element:

    - ``m0[i]``, ``mass[i, j]``: integrals of phi_i and phi_i phi_j,
    - ``g0[c, i]``, ``stiff[c, d, i, j]``: first-derivative moments,
    - ``h0[a, i]``, ``hess2[a, b, i, j]``: second-derivative moments with
      a, b running over (xx, xy, yy).

    The edge tables hold integrals over the three reference edges against
    the linear weights (1 - t) and t of the edge parametrization:
    ``edge_val[w, l, i]`` for values and ``edge_grad[w, l, c, i]`` for
    reference-gradient components (w = 0 for 1 - t, w = 1 for t).
    """

    def __init__(self, p: int):
        if p < 0 or p > MAX_ORDER:
            raise UnsupportedOrderError(f"polynomial order {p} not in 0..{MAX_ORDER}")
        self.order = p
        self.size = basis_size(p)
        coeffs = _hierarchical_coeffs(p)
        self.coeffs = coeffs
        n, d = coeffs.shape[0], coeffs.shape[1]

        imat = _monomial_integrals(2 * d)
        # kernel K[(a,b),(c,d)] = integral of x^{a+c} y^{b+d}
        a = np.arange(d)
        K = imat[a[:, None, None, None] + a[None, None, :, None],
                 a[None, :, None, None] + a[None, None, None, :]]
        K = K.reshape(d * d, d * d)

        dx = np.stack([_pdx(c) for c in coeffs])
        dy = np.stack([_pdy(c) for c in coeffs])
        dxx = np.stack([_pdx(c) for c in dx])
        dxy = np.stack([_pdy(c) for c in dx])
        dyy = np.stack([_pdy(c) for c in dy])

        flat = lambda c: c.reshape(n, d * d)
        C = flat(coeffs)
        D = [flat(dx), flat(dy)]
        H = [flat(dxx), flat(dxy), flat(dyy)]

        ivec = imat[:d, :d].reshape(d * d)
        self.m0 = C @ ivec
        self.g0 = np.stack([D[0] @ ivec, D[1] @ ivec])
        self.h0 = np.stack([h @ ivec for h in H])
        self.mass = C @ K @ C.T
        self.stiff = np.stack(
            [np.stack([D[c] @ K @ D[e].T for e in range(2)]) for c in range(2)]
        )
        self.hess2 = np.stack(
            [np.stack([H[a_] @ K @ H[b_].T for b_ in range(3)]) for a_ in range(3)]
        )

        # edge tables, exact 1D Gauss (integrands are degree <= p + 1)
        t, w = leggauss(p + 2)
        t, w = (t + 1) / 2, w / 2
        zeros = np.zeros_like(t)
        edge_pts = [
            np.stack([t, zeros], axis=1),            # r0 -> r1
            np.stack([1.0 - t, t], axis=1),          # r1 -> r2
            np.stack([zeros, 1.0 - t], axis=1),      # r2 -> r0
        ]
        ev = np.empty((2, 3, n))
        eg = np.empty((2, 3, 2, n))
        weights = [w * (1.0 - t), w * t]
        for l, pts in enumerate(edge_pts):
            vals = _peval(coeffs, pts[:, 0], pts[:, 1])
            gx = _peval(dx, pts[:, 0], pts[:, 1])
            gy = _peval(dy, pts[:, 0], pts[:, 1])
            for wi in range(2):
                ev[wi, l] = vals @ weights[wi]
                eg[wi, l, 0] = gx @ weights[wi]
                eg[wi, l, 1] = gy @ weights[wi]
        self.edge_val = ev
        self.edge_grad = eg

    def tables(self, rule: QuadratureRule) -> ShapeTable:
        """Value/derivative tables at volume quadrature points."""
        return shape_table(self.order, rule.points)


@lru_cache(maxsize=None)
def reference_basis(p: int) -> ReferenceBasis:
    return ReferenceBasis(p)
