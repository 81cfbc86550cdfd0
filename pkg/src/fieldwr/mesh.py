"""Triangular meshes for the 2D cross-section field model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh2D:
    """Triangle mesh with one region tag per triangle.

    ``dirichlet`` lists the vertices where ``A_z = 0`` is imposed; every
    boundary edge must have both end points in this set.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    dirichlet: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=int).reshape(-1, 3))
        object.__setattr__(self, "regions", np.asarray(self.regions, dtype=int).reshape(-1))
        object.__setattr__(self, "dirichlet", np.unique(np.asarray(self.dirichlet, dtype=int)))
        self.validate()

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def boundary_edges(self):
        edges = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return uniq[counts == 1]

    def validate(self):
        if len(self.regions) != self.n_triangles:
            raise MeshError("one region tag per triangle required")
        if self.n_triangles == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= self.n_vertices:
            raise MeshError("triangle references a missing vertex")
        if len(self.dirichlet) and (self.dirichlet.min() < 0 or self.dirichlet.max() >= self.n_vertices):
            raise MeshError("Dirichlet list references a missing vertex")
        areas = self.areas()
        scale = np.ptp(self.vertices, axis=0).max() ** 2
        bad = np.flatnonzero(areas <= 1e-14 * scale)
        if len(bad):
            raise MeshError(f"triangle {bad[0]} is degenerate or negatively oriented")
        on_dirichlet = np.isin(self.boundary_edges(), self.dirichlet).all(axis=1)
        if not on_dirichlet.all():
            raise MeshError("boundary edge without Dirichlet condition")


def structured_mesh(n, region_of=None, extent=(0.0, 1.0, 0.0, 1.0)):
    """Structured ``n x n`` vertex mesh of a rectangle.

    Each cell is split along the same diagonal into two triangles. The
    region of a triangle is ``region_of(cx, cy)`` evaluated at its centroid
    (region 0 if ``region_of`` is None). All boundary vertices are Dirichlet.
    """
    if n < 2:
        raise MeshError("need at least 2 vertices per side")
    x0, x1, y0, y1 = extent
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange(n * n).reshape(n, n)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.vstack([lower, upper])

    centroids = vertices[triangles].mean(axis=1)
    if region_of is None:
        regions = np.zeros(len(triangles), dtype=int)
    else:
        regions = np.array([region_of(cx, cy) for cx, cy in centroids], dtype=int)

    on_boundary = (
        np.isclose(vertices[:, 0], x0)
        | np.isclose(vertices[:, 0], x1)
        | np.isclose(vertices[:, 1], y0)
        | np.isclose(vertices[:, 1], y1)
    )
    return Mesh2D(vertices, triangles, regions, np.flatnonzero(on_boundary))


def write_mesh(mesh, path):
    """Plain-text mesh: vertex count and ``x y`` lines, triangle count and
    ``i j k region`` lines, Dirichlet count and the vertex indices."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"{mesh.n_triangles}\n")
        for (i, j, k), r in zip(mesh.triangles, mesh.regions):
            fh.write(f"{i} {j} {k} {r}\n")
        fh.write(f"{len(mesh.dirichlet)}\n")
        fh.write(" ".join(str(int(v)) for v in mesh.dirichlet) + "\n")


def read_mesh(path):
    with open(path) as fh:
        tokens = fh.read().split()
    try:
        pos = 0
        nv = int(tokens[pos])
        pos += 1
        vertices = np.array(tokens[pos : pos + 2 * nv], dtype=float).reshape(nv, 2)
        pos += 2 * nv
        nt = int(tokens[pos])
        pos += 1
        tri = np.array(tokens[pos : pos + 4 * nt], dtype=int).reshape(nt, 4)
        pos += 4 * nt
        nd = int(tokens[pos])
        pos += 1
        dirichlet = np.array(tokens[pos : pos + nd], dtype=int)
        if len(dirichlet) != nd:
            raise ValueError("truncated Dirichlet list")
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from None
    return Mesh2D(vertices, tri[:, :3], tri[:, 3], dirichlet)
