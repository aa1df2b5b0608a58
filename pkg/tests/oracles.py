"""Independent brute-force reassembly of the local DPG matrices.

Everything here integrates by direct quadrature with tabulated shape
functions, deliberately avoiding the reference-moment-tensor contractions
of the production assembly, so the two paths share only the basis
definition.
"""

import numpy as np

from dpgrd.basis import (
    affine_map,
    basis_size,
    quadrature_edge,
    quadrature_triangle,
    shape_table,
)

REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def brute_force_gram(mesh, k, w, r, degree=16):
    """Gram matrix of the weighted test inner product by plain quadrature."""
    n = basis_size(r)
    amap = affine_map(k, mesh)
    q = quadrature_triangle(degree)
    st = shape_table(r, q.points)
    wq = q.weights * amap.determinant
    g_phys = np.einsum("ab,iqb->iqa", amap.inverse_transpose, st.gradients)
    C = amap.metric
    lap = (C[0, 0] * st.hessians[:, :, 0] + 2 * C[0, 1] * st.hessians[:, :, 1]
           + C[1, 1] * st.hessians[:, :, 2])

    mass = (st.values * wq) @ st.values.T
    stiff = np.einsum("iqa,jqa,q->ij", g_phys, g_phys, wq)
    lap2 = (lap * wq) @ lap.T

    G = np.zeros((4 * n, 4 * n))
    t1, t2 = slice(0, n), slice(n, 2 * n)
    mu, v = slice(2 * n, 3 * n), slice(3 * n, 4 * n)
    # tau block: eps^{-2a} (tau, tau') + (div tau, div tau')
    div = [g_phys[:, :, 0], g_phys[:, :, 1]]
    for a, ra in ((0, t1), (1, t2)):
        for b, rb in ((0, t1), (1, t2)):
            G[ra, rb] = (div[a] * wq) @ div[b].T
        G[ra, ra] += w.neg_two_alpha * mass
    G[mu, mu] = w.neg_two_beta * mass + stiff
    G[v, v] = (mass + w.two_beta_minus_alpha * stiff
               + w.two_one_minus_alpha * lap2)
    return G


def brute_force_local_b(mesh, skeleton, k, w, r, c=None, degree=16):
    """Coupling matrix B_K (orientation signs applied) by plain quadrature."""
    n = basis_size(r)
    amap = affine_map(k, mesh)
    q = quadrature_triangle(degree)
    st = shape_table(r, q.points)
    wq = q.weights * amap.determinant
    pts = amap.apply(q.points)
    cq = np.ones(len(wq)) if c is None else c(pts[:, 0], pts[:, 1])
    g_phys = np.einsum("ab,iqb->iqa", amap.inverse_transpose, st.gradients)
    C = amap.metric
    lap = (C[0, 0] * st.hessians[:, :, 0] + 2 * C[0, 1] * st.hessians[:, :, 1]
           + C[1, 1] * st.hessians[:, :, 2])

    B = np.zeros((4 * n, 16))
    t1, t2 = slice(0, n), slice(n, 2 * n)
    mu, v = slice(2 * n, 3 * n), slice(3 * n, 4 * n)

    B[t1, 0] = g_phys[:, :, 0] @ wq
    B[t2, 0] = g_phys[:, :, 1] @ wq
    B[v, 0] = st.values @ (wq * cq)
    gw = w.one_minus_alpha + w.beta_minus_alpha
    B[t1, 1] = w.neg_alpha * (st.values @ wq)
    B[t2, 2] = w.neg_alpha * (st.values @ wq)
    B[mu, 1] = g_phys[:, :, 0] @ wq
    B[mu, 2] = g_phys[:, :, 1] @ wq
    B[v, 1] = gw * (g_phys[:, :, 0] @ wq)
    B[v, 2] = gw * (g_phys[:, :, 1] @ wq)
    B[mu, 3] = st.values @ wq
    B[v, 3] = w.one_minus_alpha_plus_beta * (lap @ (wq / cq))

    qe = quadrature_edge(degree)
    t = qe.points
    pverts = mesh.vertices[mesh.triangles[k]]
    for le in range(3):
        pa, pb = pverts[le], pverts[(le + 1) % 3]
        L = np.linalg.norm(pb - pa)
        dvec = (pb - pa) / L
        nrm = np.array([dvec[1], -dvec[0]])          # outward for CCW
        ra, rb = REF_VERTS[le], REF_VERTS[(le + 1) % 3]
        rpts = ra[None, :] + t[:, None] * (rb - ra)[None, :]
        ste = shape_table(r, rpts)
        ge = np.einsum("ab,iqb->iqa", amap.inverse_transpose, ste.gradients)
        gn = ge[:, :, 0] * nrm[0] + ge[:, :, 1] * nrm[1]
        wl = qe.weights * L
        for hat, lv in ((1.0 - t, le), (t, (le + 1) % 3)):
            B[t1, 4 + lv] += -nrm[0] * (ste.values @ (hat * wl))
            B[t2, 4 + lv] += -nrm[1] * (ste.values @ (hat * wl))
            B[v, 7 + lv] += -w.pow_beta * (gn @ (hat * wl))
        sgn = skeleton.tri_edge_sign[k, le]
        B[mu, 10 + le] += -sgn * (ste.values @ wl)
        B[v, 13 + le] += -w.one_minus_alpha * sgn * (ste.values @ wl)
    return B


def brute_force_load(mesh, k, f, c, w, r, degree=16):
    """Load vector (f, v - eps^beta lap v / c) by plain quadrature."""
    n = basis_size(r)
    amap = affine_map(k, mesh)
    q = quadrature_triangle(degree)
    st = shape_table(r, q.points)
    wq = q.weights * amap.determinant
    pts = amap.apply(q.points)
    fq = f(pts[:, 0], pts[:, 1])
    cq = np.ones(len(wq)) if c is None else c(pts[:, 0], pts[:, 1])
    C = amap.metric
    lap = (C[0, 0] * st.hessians[:, :, 0] + 2 * C[0, 1] * st.hessians[:, :, 1]
           + C[1, 1] * st.hessians[:, :, 2])
    out = np.zeros(4 * n)
    out[3 * n:] = st.values @ (wq * fq) - w.pow_beta * (lap @ (wq * fq / cq))
    return out
