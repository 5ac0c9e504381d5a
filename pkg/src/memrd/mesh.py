"""Triangulated closed surfaces: icosphere generation, OFF I/O, geometry.

A :class:`SurfaceMesh` is a closed, orientable, consistently outward-oriented
triangle mesh. All geometric quantities (triangle areas, enclosed volume,
one-ring adjacency) are precomputed at construction and the underlying arrays
are frozen, so instances can be shared freely between threads.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "SurfaceMesh",
    "MeshError",
    "OffFormatError",
    "OpenSurfaceError",
    "NonManifoldError",
    "OrientationError",
    "DegenerateTriangleError",
    "icosphere",
    "load_off",
    "write_off",
]

# Triangles with (absolute) area below this are considered numerically
# collapsed; they would break stiffness assembly.
DEGENERATE_AREA = 1e-14

MAX_ICOSPHERE_LEVEL = 8


class MeshError(ValueError):
    """Base class for mesh construction and parsing failures."""


class OffFormatError(MeshError):
    """The OFF file could not be parsed."""


class OpenSurfaceError(MeshError):
    """Some edge belongs to fewer than two triangles: surface not closed."""


class NonManifoldError(MeshError):
    """Some edge belongs to more than two triangles."""


class OrientationError(MeshError):
    """Triangle orientations are inconsistent or point inward."""


class DegenerateTriangleError(MeshError):
    """A triangle has (numerically) zero area."""


def _triangle_areas_normals(vertices: np.ndarray, triangles: np.ndarray):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    cross = np.cross(p1 - p0, p2 - p0)
    doubled = np.linalg.norm(cross, axis=1)
    return 0.5 * doubled, cross


class SurfaceMesh:
    """Closed oriented triangle surface with precomputed geometry.

    Parameters
    ----------
    vertices : (n, 3) array_like
        Vertex coordinates (dimensionless units).
    triangles : (m, 3) array_like
        Vertex index triples, counter-clockwise when seen from outside.

    Raises
    ------
    OpenSurfaceError, NonManifoldError, OrientationError, DegenerateTriangleError
        If the mesh violates the closed-oriented-surface invariants.
    """

    def __init__(self, vertices, triangles):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        t = np.ascontiguousarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must be (m, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")

        self.vertices = v
        self.triangles = t
        self._check_edge_manifold()

        areas, cross = _triangle_areas_normals(v, t)
        bad = np.flatnonzero(areas <= DEGENERATE_AREA)
        if bad.size:
            raise DegenerateTriangleError(
                f"triangle {bad[0]} has area {areas[bad[0]]:.3e} <= {DEGENERATE_AREA}"
            )
        self.triangle_areas = areas
        self._triangle_cross = cross  # 2*area*outward_normal

        # Signed volume via origin tetrahedra; positive iff outward oriented.
        p0 = v[t[:, 0]]
        self._signed_volume = float(np.einsum("ij,ij->", p0, cross) / 6.0)
        if self._signed_volume <= 0.0:
            raise OrientationError(
                f"enclosed signed volume {self._signed_volume:.3e} is not positive; "
                "triangles must be oriented outward"
            )

        self._build_adjacency()
        for arr in (self.vertices, self.triangles, self.triangle_areas):
            arr.flags.writeable = False

    # -- construction helpers -------------------------------------------------

    def _check_edge_manifold(self):
        t = self.triangles
        i, j, k = t[:, 0], t[:, 1], t[:, 2]
        src = np.concatenate([i, j, k])
        dst = np.concatenate([j, k, i])
        n = len(self.vertices)
        directed = src * n + dst
        uniq, counts = np.unique(directed, return_counts=True)
        if np.any(counts > 1):
            e = uniq[counts > 1][0]
            raise OrientationError(
                f"directed edge ({e // n}, {e % n}) used by more than one triangle; "
                "orientation is inconsistent or the edge is non-manifold"
            )
        undirected = np.minimum(src, dst) * n + np.maximum(src, dst)
        uniq_u, counts_u = np.unique(undirected, return_counts=True)
        if np.any(counts_u == 1):
            e = uniq_u[counts_u == 1][0]
            raise OpenSurfaceError(
                f"surface not closed: edge ({e // n}, {e % n}) has only one triangle"
            )
        if np.any(counts_u > 2):
            e = uniq_u[counts_u > 2][0]
            raise NonManifoldError(
                f"edge ({e // n}, {e % n}) is shared by more than two triangles"
            )

    def _build_adjacency(self):
        """One-ring vertex neighbours in CSR layout (indptr/indices)."""
        t = self.triangles
        src = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
        dst = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
        # Each undirected edge appears once per direction on a closed mesh.
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        counts = np.bincount(src, minlength=len(self.vertices))
        indptr = np.zeros(len(self.vertices) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        self._adj_indptr = indptr
        self._adj_indices = dst
        for arr in (self._adj_indptr, self._adj_indices):
            arr.flags.writeable = False

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def vertex_neighbors(self, i: int) -> np.ndarray:
        """Indices of the one-ring neighbours of vertex ``i``."""
        return self._adj_indices[self._adj_indptr[i] : self._adj_indptr[i + 1]]

    def vertex_areas(self) -> np.ndarray:
        """Lumped vertex areas (one third of each incident triangle)."""
        areas = np.zeros(self.n_vertices)
        third = self.triangle_areas / 3.0
        for c in range(3):
            np.add.at(areas, self.triangles[:, c], third)
        return areas

    def surface_area(self) -> float:
        """Total surface area (sum of triangle areas)."""
        return float(self.triangle_areas.sum())

    def enclosed_volume(self) -> float:
        """Volume enclosed by the surface (signed origin-tetrahedra sum).

        Exact for polyhedra and independent of the origin location because
        the surface is closed.
        """
        return self._signed_volume

    def __repr__(self):  # pragma: no cover
        return f"SurfaceMesh({self.n_vertices} vertices, {self.n_triangles} triangles)"


# -- icosphere -----------------------------------------------------------------

_PHI = (1.0 + math.sqrt(5.0)) / 2.0

_ICOSAHEDRON_VERTICES = np.array(
    [
        [-1.0, _PHI, 0.0],
        [1.0, _PHI, 0.0],
        [-1.0, -_PHI, 0.0],
        [1.0, -_PHI, 0.0],
        [0.0, -1.0, _PHI],
        [0.0, 1.0, _PHI],
        [0.0, -1.0, -_PHI],
        [0.0, 1.0, -_PHI],
        [_PHI, 0.0, -1.0],
        [_PHI, 0.0, 1.0],
        [-_PHI, 0.0, -1.0],
        [-_PHI, 0.0, 1.0],
    ]
)

_ICOSAHEDRON_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def icosphere(level: int) -> SurfaceMesh:
    """Unit sphere mesh: icosahedron with ``level`` rounds of 1-to-4 subdivision.

    Each subdivision splits every triangle at its edge midpoints and projects
    the midpoints back onto the unit sphere, giving quasi-uniform triangles.
    The result has ``20 * 4**level`` triangles.
    """
    level = int(level)
    if level < 0:
        raise ValueError("subdivision level must be nonnegative")
    if level > MAX_ICOSPHERE_LEVEL:
        raise ValueError(
            f"icosphere level {level} exceeds the guard {MAX_ICOSPHERE_LEVEL} "
            f"({20 * 4**level} triangles would exhaust memory)"
        )

    verts = _ICOSAHEDRON_VERTICES / np.linalg.norm(_ICOSAHEDRON_VERTICES[0])
    faces = _ICOSAHEDRON_FACES
    for _ in range(level):
        verts, faces = _subdivide(verts, faces)
    return SurfaceMesh(verts, faces)


def _subdivide(verts: np.ndarray, faces: np.ndarray):
    n = len(verts)
    i, j, k = faces[:, 0], faces[:, 1], faces[:, 2]
    edges = np.stack(
        [np.minimum(i, j) * n + np.maximum(i, j),
         np.minimum(j, k) * n + np.maximum(j, k),
         np.minimum(k, i) * n + np.maximum(k, i)],
        axis=1,
    )
    uniq, inverse = np.unique(edges, return_inverse=True)
    inverse = inverse.reshape(edges.shape)
    a, b = uniq // n, uniq % n
    midpoints = 0.5 * (verts[a] + verts[b])
    midpoints /= np.linalg.norm(midpoints, axis=1, keepdims=True)
    new_verts = np.vstack([verts, midpoints])

    mij = n + inverse[:, 0]
    mjk = n + inverse[:, 1]
    mki = n + inverse[:, 2]
    new_faces = np.concatenate(
        [
            np.stack([i, mij, mki], axis=1),
            np.stack([mij, j, mjk], axis=1),
            np.stack([mki, mjk, k], axis=1),
            np.stack([mij, mjk, mki], axis=1),
        ]
    )
    return new_verts, new_faces


# -- OFF I/O ---------------------------------------------------------------------

def load_off(path) -> SurfaceMesh:
    """Read an ASCII OFF triangle mesh and validate all surface invariants."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = []
        for line in fh:
            body = line.split("#", 1)[0].strip()
            if body:
                tokens.extend(body.split())
    if not tokens:
        raise OffFormatError(f"{path}: empty file")
    if tokens[0] != "OFF":
        raise OffFormatError(f"{path}: missing OFF header (got {tokens[0]!r})")
    pos = 1
    try:
        nv, nf, _ne = (int(tokens[pos + c]) for c in range(3))
        pos += 3
        verts = np.array(tokens[pos : pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
        pos += 3 * nv
        faces = np.empty((nf, 3), dtype=np.int64)
        for f in range(nf):
            arity = int(tokens[pos])
            if arity != 3:
                raise OffFormatError(f"{path}: face {f} has {arity} vertices, only triangles supported")
            faces[f] = [int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])]
            pos += 4
    except OffFormatError:
        raise
    except (ValueError, IndexError) as exc:
        raise OffFormatError(f"{path}: malformed OFF data ({exc})") from exc
    return SurfaceMesh(verts, faces)


def write_off(path, mesh: SurfaceMesh) -> None:
    """Write a mesh as ASCII OFF."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} 0\n")
        for p in mesh.vertices:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
