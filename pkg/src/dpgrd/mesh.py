"""Conforming triangular meshes with newest-vertex bisection (NVB).

A mesh stores vertex coordinates, counterclockwise vertex triples and, per
triangle, the local index of its refinement edge.  Local edge ``l`` of a
triangle ``(a, b, c)`` connects vertices ``l`` and ``(l + 1) % 3``, i.e.
edge 0 is ``(a, b)``, edge 1 is ``(b, c)`` and edge 2 is ``(c, a)``.

Meshes are treated as immutable values: refinement returns a new mesh and
never modifies its input.  The skeleton (the collection of all element
edges together with adjacency, fixed unit normals and per-element
orientation signs) is computed from a conforming mesh on demand.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mesh",
    "Skeleton",
    "MeshInconsistencyError",
    "make_unit_square_mesh",
    "make_lshape_mesh",
    "refine_nvb",
    "uniform_refine",
    "build_skeleton",
    "write_mesh",
    "read_mesh",
]

# geometric predicates (signed area) are trusted down to this scale
GEOM_TOL = 1e-14


class MeshInconsistencyError(Exception):
    """Raised when a mesh violates conformity or orientation rules."""


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (nv, 2) float array
        Vertex coordinates.
    triangles : (nt, 3) int array
        Counterclockwise vertex triples.
    ref_edge : (nt,) int array
        Local index (0, 1 or 2) of each triangle's refinement edge.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    ref_edge: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        r = np.ascontiguousarray(np.asarray(self.ref_edge, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        if r.shape != (t.shape[0],):
            raise ValueError("ref_edge must have one entry per triangle")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle vertex index out of range")
        if r.size and (r.min() < 0 or r.max() > 2):
            raise ValueError("refinement-edge index must be 0, 1 or 2")
        for a in (v, t, r):
            a.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "ref_edge", r)
        areas = self.areas()
        if np.any(areas <= GEOM_TOL):
            raise MeshInconsistencyError(
                "all triangles must be counterclockwise with positive area"
            )

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def areas(self) -> np.ndarray:
        """Signed areas of all triangles (positive for CCW orientation)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_vertex_pairs(self) -> np.ndarray:
        """All local edges as vertex pairs, shape (nt, 3, 2), directed CCW."""
        t = self.triangles
        return np.stack(
            [
                np.stack([t[:, 0], t[:, 1]], axis=1),
                np.stack([t[:, 1], t[:, 2]], axis=1),
                np.stack([t[:, 2], t[:, 0]], axis=1),
            ],
            axis=1,
        )

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in radians."""
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosv = np.sum(a * b, axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            angles.append(np.arccos(np.clip(cosv, -1.0, 1.0)))
        return float(np.min(angles))

    def boundary_edges(self) -> np.ndarray:
        """Boundary edges as sorted vertex pairs, shape (nb, 2)."""
        pairs = np.sort(self.edge_vertex_pairs().reshape(-1, 2), axis=1)
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshInconsistencyError("an edge is shared by more than two triangles")
        return uniq[counts == 1]

    def boundary_vertices(self) -> np.ndarray:
        """Indices of vertices lying on the domain boundary."""
        return np.unique(self.boundary_edges())


@dataclass(frozen=True)
class Skeleton:
    """Edge structure of a conforming mesh.

    Each undirected edge appears exactly once.  The stored unit normal of
    edge ``(a, b)`` with ``a < b`` points to the right of the direction
    ``a -> b``; ``tri_edge_sign[k, l]`` is ``+1`` when the outward normal
    of triangle ``k`` on its local edge ``l`` coincides with the stored
    normal and ``-1`` otherwise.
    """

    edges: np.ndarray            # (ne, 2) vertex pairs, low index first
    edge_tris: np.ndarray        # (ne, 2) incident triangles, -1 if boundary
    is_boundary: np.ndarray      # (ne,) bool
    normals: np.ndarray          # (ne, 2) unit normals
    lengths: np.ndarray          # (ne,)
    tri_edges: np.ndarray        # (nt, 3) global edge index per local edge
    tri_edge_sign: np.ndarray    # (nt, 3) +/-1 orientation signs

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def flipped(self, edge_index: int) -> "Skeleton":
        """Copy of the skeleton with one stored edge normal reversed.

        The per-element orientation signs are flipped accordingly, so the
        pair (normal, signs) still describes the same outward normals.
        """
        normals = self.normals.copy()
        normals[edge_index] *= -1.0
        sign = self.tri_edge_sign.copy()
        sign[self.tri_edges == edge_index] *= -1.0
        return Skeleton(
            self.edges, self.edge_tris, self.is_boundary, normals,
            self.lengths, self.tri_edges, sign,
        )


def build_skeleton(mesh: Mesh) -> Skeleton:
    """Extract the edge skeleton of a conforming mesh.

    Raises
    ------
    MeshInconsistencyError
        If an edge has more than two incident triangles or a shared edge is
        traversed in the same direction by both triangles (hanging nodes or
        inconsistent orientation).
    """
    nt = mesh.n_triangles
    directed = mesh.edge_vertex_pairs().reshape(-1, 2)      # (3 nt, 2)
    pairs = np.sort(directed, axis=1)
    edges, tri_edges_flat, counts = np.unique(
        pairs, axis=0, return_inverse=True, return_counts=True
    )
    if np.any(counts > 2):
        raise MeshInconsistencyError("an edge is shared by more than two triangles")
    tri_edges = tri_edges_flat.reshape(nt, 3)

    # +1 when the triangle traverses the edge from low to high vertex index
    sign = np.where(directed[:, 0] < directed[:, 1], 1.0, -1.0).reshape(nt, 3)

    ne = len(edges)
    edge_tris = np.full((ne, 2), -1, dtype=np.int64)
    order = np.argsort(tri_edges_flat, kind="stable")
    tri_of_incidence = order // 3
    slot = np.zeros(ne, dtype=np.int64)
    for inc, e in zip(tri_of_incidence, tri_edges_flat[order]):
        edge_tris[e, slot[e]] = inc
        slot[e] += 1
    is_boundary = counts == 1

    # interior edges must be traversed in opposite directions
    dir_sum = np.zeros(ne)
    np.add.at(dir_sum, tri_edges_flat, sign.ravel())
    if np.any(np.abs(dir_sum[~is_boundary]) > 0.5):
        raise MeshInconsistencyError("shared edge traversed twice in the same direction")

    vec = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    lengths = np.linalg.norm(vec, axis=1)
    normals = np.stack([vec[:, 1], -vec[:, 0]], axis=1) / lengths[:, None]

    return Skeleton(edges, edge_tris, is_boundary, normals, lengths, tri_edges, sign)


def _assign_longest_refinement_edges(vertices, triangles):
    """Refinement edge = longest edge; ties broken by the smallest opposite
    vertex index (the vertex opposite local edge l is vertex (l + 2) % 3)."""
    p = vertices[triangles]
    lens = np.stack(
        [
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        ],
        axis=1,
    )
    opposite = triangles[:, [2, 0, 1]]
    max_len = np.max(lens, axis=1, keepdims=True)
    tied = lens >= max_len * (1.0 - 1e-12)
    opp_key = np.where(tied, opposite, np.iinfo(np.int64).max)
    return np.argmin(opp_key, axis=1).astype(np.int64)


def make_unit_square_mesh(n: int) -> Mesh:
    """Structured mesh of (0,1)^2 with 2*n^2 triangles.

    Each grid cell is split along the diagonal from its lower-left to its
    upper-right corner; refinement edges are the diagonals (longest edges),
    which is an NVB-compatible initial assignment.
    """
    if n < 1:
        raise ValueError("subdivision count must be at least 1")
    coords = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.array(tris, dtype=np.int64)
    ref = _assign_longest_refinement_edges(vertices, triangles)
    return Mesh(vertices, triangles, ref)


def make_lshape_mesh() -> Mesh:
    """Coarse mesh of the L-shaped domain (-1,1)^2 minus [0,1)x(-1,0].

    Six triangles, two per unit square; all square diagonals meet the
    re-entrant corner at the origin.  Total area is 3.
    """
    vertices = np.array(
        [
            [-1.0, -1.0],  # 0
            [0.0, -1.0],   # 1
            [-1.0, 0.0],   # 2
            [0.0, 0.0],    # 3  re-entrant corner
            [1.0, 0.0],    # 4
            [-1.0, 1.0],   # 5
            [0.0, 1.0],    # 6
            [1.0, 1.0],    # 7
        ]
    )
    triangles = np.array(
        [
            [0, 1, 3],
            [0, 3, 2],
            [2, 3, 5],
            [3, 6, 5],
            [3, 4, 7],
            [3, 7, 6],
        ],
        dtype=np.int64,
    )
    ref = _assign_longest_refinement_edges(vertices, triangles)
    return Mesh(vertices, triangles, ref)


def refine_nvb(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked elements.

    The refinement edges of all marked triangles are bisected.  Closure
    iterates the rule "a triangle with any bisected edge must bisect its
    refinement edge" to a fixpoint, which keeps the mesh conforming.  Each
    triangle is then split according to its set of bisected edges (2, 3 or
    4 children); children carry the standard NVB refinement-edge labels.
    An empty marked set returns the mesh unchanged.
    """
    marked = np.asarray(sorted(set(int(m) for m in marked)), dtype=np.int64)
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_triangles):
        raise ValueError("marked element index out of range")
    if marked.size == 0:
        return mesh

    skel = build_skeleton(mesh)
    nt = mesh.n_triangles
    ne = skel.n_edges
    ref_global = skel.tri_edges[np.arange(nt), mesh.ref_edge]

    edge_marked = np.zeros(ne, dtype=bool)
    edge_marked[ref_global[marked]] = True
    while True:
        has_marked = edge_marked[skel.tri_edges].any(axis=1)
        need = has_marked & ~edge_marked[ref_global]
        if not need.any():
            break
        edge_marked[ref_global[need]] = True

    # one new vertex per bisected edge
    split_edges = np.flatnonzero(edge_marked)
    mid_index = np.full(ne, -1, dtype=np.int64)
    mid_index[split_edges] = mesh.n_vertices + np.arange(len(split_edges))
    midpoints = 0.5 * (
        mesh.vertices[skel.edges[split_edges, 0]]
        + mesh.vertices[skel.edges[split_edges, 1]]
    )
    vertices = np.vstack([mesh.vertices, midpoints])

    # normalized frame: vertex a, b span the refinement edge, c is opposite
    r = mesh.ref_edge
    rows = np.arange(nt)
    a = mesh.triangles[rows, r]
    b = mesh.triangles[rows, (r + 1) % 3]
    c = mesh.triangles[rows, (r + 2) % 3]
    e0 = skel.tri_edges[rows, r]
    e1 = skel.tri_edges[rows, (r + 1) % 3]
    e2 = skel.tri_edges[rows, (r + 2) % 3]
    s0 = edge_marked[e0]
    s1 = edge_marked[e1]
    s2 = edge_marked[e2]

    n_children = np.where(s0, 2 + s1.astype(int) + s2.astype(int), 1)
    offsets = np.concatenate([[0], np.cumsum(n_children)])
    total = offsets[-1]
    out_tris = np.empty((total, 3), dtype=np.int64)
    out_ref = np.zeros(total, dtype=np.int64)

    keep = ~s0
    out_tris[offsets[:-1][keep]] = mesh.triangles[keep]
    out_ref[offsets[:-1][keep]] = mesh.ref_edge[keep]

    split = s0
    m0 = mid_index[e0]
    # first child (c, a, m0), bisected again at mid(c, a) when edge 2 is split
    one = split & ~s2
    two = split & s2
    out_tris[offsets[:-1][one]] = np.stack([c[one], a[one], m0[one]], axis=1)
    p = offsets[:-1][two]
    out_tris[p] = np.stack([m0[two], c[two], mid_index[e2[two]]], axis=1)
    out_tris[p + 1] = np.stack([a[two], m0[two], mid_index[e2[two]]], axis=1)

    # second child (b, c, m0), bisected again at mid(b, c) when edge 1 is split
    base = offsets[:-1] + 1 + s2.astype(int)
    one = split & ~s1
    two = split & s1
    out_tris[base[one]] = np.stack([b[one], c[one], m0[one]], axis=1)
    p = base[two]
    out_tris[p] = np.stack([m0[two], b[two], mid_index[e1[two]]], axis=1)
    out_tris[p + 1] = np.stack([c[two], m0[two], mid_index[e1[two]]], axis=1)

    return Mesh(vertices, out_tris, out_ref)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four (two NVB generations per element).

    Equivalent to bisecting all three edges of every triangle; the element
    count is exactly quadrupled and conformity is preserved.
    """
    skel = build_skeleton(mesh)
    nt = mesh.n_triangles
    ne = skel.n_edges

    mid_index = mesh.n_vertices + np.arange(ne)
    midpoints = 0.5 * (
        mesh.vertices[skel.edges[:, 0]] + mesh.vertices[skel.edges[:, 1]]
    )
    vertices = np.vstack([mesh.vertices, midpoints])

    r = mesh.ref_edge
    rows = np.arange(nt)
    a = mesh.triangles[rows, r]
    b = mesh.triangles[rows, (r + 1) % 3]
    c = mesh.triangles[rows, (r + 2) % 3]
    m0 = mid_index[skel.tri_edges[rows, r]]
    m1 = mid_index[skel.tri_edges[rows, (r + 1) % 3]]
    m2 = mid_index[skel.tri_edges[rows, (r + 2) % 3]]

    out_tris = np.empty((4 * nt, 3), dtype=np.int64)
    out_tris[0::4] = np.stack([m0, c, m2], axis=1)
    out_tris[1::4] = np.stack([a, m0, m2], axis=1)
    out_tris[2::4] = np.stack([m0, b, m1], axis=1)
    out_tris[3::4] = np.stack([c, m0, m1], axis=1)
    return Mesh(vertices, out_tris, np.zeros(4 * nt, dtype=np.int64))


def write_mesh(mesh: Mesh, path) -> None:
    """Write a mesh in the plain text format.

    Layout: a line ``vertices <n>`` followed by n lines ``x y``; a line
    ``triangles <m>`` followed by m lines ``i j k r`` with 0-based vertex
    indices and the refinement-edge local index r in {0, 1, 2}; a line
    ``boundary <b>`` followed by b lines ``i j``.
    """
    bnd = mesh.boundary_edges()
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x!r} {y!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for (i, j, k), r in zip(mesh.triangles, mesh.ref_edge):
            fh.write(f"{i} {j} {k} {r}\n")
        fh.write(f"boundary {len(bnd)}\n")
        for i, j in bnd:
            fh.write(f"{i} {j}\n")


def read_mesh(path) -> Mesh:
    """Read a mesh written by :func:`write_mesh` and validate it."""
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != word:
            raise MeshInconsistencyError(f"expected '{word}' in mesh file")
        pos += 1
        n = int(tokens[pos])
        pos += 1
        return n

    nv = expect("vertices")
    vertices = np.array(tokens[pos:pos + 2 * nv], dtype=float).reshape(nv, 2)
    pos += 2 * nv
    nt = expect("triangles")
    tri_data = np.array(tokens[pos:pos + 4 * nt], dtype=np.int64).reshape(nt, 4)
    pos += 4 * nt
    nb = expect("boundary")
    bnd = np.array(tokens[pos:pos + 2 * nb], dtype=np.int64).reshape(nb, 2)
    pos += 2 * nb

    mesh = Mesh(vertices, tri_data[:, :3], tri_data[:, 3])
    stored = {tuple(sorted(e)) for e in bnd.tolist()}
    derived = {tuple(e) for e in mesh.boundary_edges().tolist()}
    if stored != derived:
        raise MeshInconsistencyError("stored boundary does not match mesh topology")
    return mesh
