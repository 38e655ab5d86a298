"""Convex polygonal silo domains with a piecewise-linear wall profile.

The silo floor is a convex polygon; the wall height is prescribed at each
vertex and interpolated linearly along every edge.  All boundary queries
(nearest point, wall-taxed escape cost, node placement) live here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tolerances import GEOM_TOL, REFINE_TOL, TIE_TOL

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BoundaryPoint:
    """Point on the polygon boundary, parameterized along one edge.

    ``edge_parameter`` runs from 0 at the edge's start vertex to 1 at its
    end vertex; points shared by two edges are canonicalized to parameter
    0 of the later edge.
    """

    edge_index: int
    edge_parameter: float
    position: np.ndarray

    @property
    def key(self) -> tuple[int, float]:
        return (self.edge_index, self.edge_parameter)


class ConvexDomain:
    """Convex polygon (counter-clockwise vertices) with wall heights.

    Collinear consecutive vertices are allowed; they are the supported way
    to encode wall profiles with several linear pieces along a straight
    side (e.g. steep ramps approximating a gate).
    """

    def __init__(self, vertices, wall_values):
        vertices = np.asarray(vertices, dtype=float)
        wall_values = np.asarray(wall_values, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if len(vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if wall_values.shape != (len(vertices),):
            raise ValueError("one wall value per vertex required")
        if np.any(wall_values < 0.0):
            raise ValueError("wall values must be non-negative")

        edges = np.roll(vertices, -1, axis=0) - vertices
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(cross < -GEOM_TOL):
            raise ValueError("vertices must describe a convex counter-clockwise polygon")
        lengths = np.linalg.norm(edges, axis=1)
        if np.any(lengths <= GEOM_TOL):
            raise ValueError("degenerate (zero-length) edge")

        self.vertices = vertices
        self.wall_values = wall_values
        self.edges = edges
        self.edge_lengths = lengths
        self.perimeter = float(lengths.sum())
        x, y = vertices[:, 0], vertices[:, 1]
        self.area = float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        self.diameter = float(
            np.max(np.linalg.norm(vertices[:, None, :] - vertices[None, :, :], axis=2))
        )
        self.bbox = (vertices.min(axis=0), vertices.max(axis=0))
        # Inward normals: rotate CCW edge direction by +90 degrees.
        self._normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1) / lengths[:, None]

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    def boundary_point(self, edge_index: int, s: float) -> BoundaryPoint:
        """Construct the boundary point at parameter ``s`` of one edge."""
        edge_index = int(edge_index) % self.n_edges
        s = float(s)
        if not 0.0 <= s <= 1.0:
            raise ValueError("edge parameter outside [0, 1]")
        if s >= 1.0 - GEOM_TOL:
            edge_index = (edge_index + 1) % self.n_edges
            s = 0.0
        elif s <= GEOM_TOL:
            s = 0.0
        pos = self.vertices[edge_index] + s * self.edges[edge_index]
        return BoundaryPoint(edge_index, s, pos)

    def contains(self, x) -> bool:
        """Closed-polygon membership via half-plane tests (distance tol GEOM_TOL)."""
        x = np.asarray(x, dtype=float)
        rel = x - self.vertices
        side = (self.edges[:, 0] * rel[:, 1] - self.edges[:, 1] * rel[:, 0]) / self.edge_lengths
        return bool(np.all(side >= -GEOM_TOL))

    def contains_many(self, points) -> np.ndarray:
        """Vectorized closed-polygon membership for an (m, 2) array."""
        points = np.asarray(points, dtype=float)
        rel = points[:, None, :] - self.vertices[None, :, :]
        side = (
            self.edges[None, :, 0] * rel[:, :, 1] - self.edges[None, :, 1] * rel[:, :, 0]
        ) / self.edge_lengths[None, :]
        return np.all(side >= -GEOM_TOL, axis=1)

    def nearest_boundary(self, x) -> list[BoundaryPoint]:
        """All nearest points of the boundary, ties within TIE_TOL.

        Result is sorted by (edge_index, edge_parameter); duplicates arising
        from the two parameterizations of a shared vertex are removed.
        """
        x = np.asarray(x, dtype=float)
        rel = x - self.vertices
        t = np.einsum("ij,ij->i", rel, self.edges) / self.edge_lengths**2
        t = np.clip(t, 0.0, 1.0)
        feet = self.vertices + t[:, None] * self.edges
        dists = np.linalg.norm(feet - x, axis=1)
        best = dists.min()
        return self._collect_ties(t, dists, best)

    def distance_to_boundary(self, x) -> float:
        x = np.asarray(x, dtype=float)
        rel = x - self.vertices
        t = np.einsum("ij,ij->i", rel, self.edges) / self.edge_lengths**2
        t = np.clip(t, 0.0, 1.0)
        feet = self.vertices + t[:, None] * self.edges
        return float(np.linalg.norm(feet - x, axis=1).min())

    def wall_height(self, b: BoundaryPoint) -> float:
        """Linear interpolation of the vertex wall values along the edge."""
        i = b.edge_index
        j = (i + 1) % self.n_edges
        return float((1.0 - b.edge_parameter) * self.wall_values[i] + b.edge_parameter * self.wall_values[j])

    def wall_height_at(self, edge_index: int, s: float) -> float:
        j = (edge_index + 1) % self.n_edges
        return float((1.0 - s) * self.wall_values[edge_index] + s * self.wall_values[j])

    def escape_cost(self, y) -> tuple[float, list[BoundaryPoint]]:
        """Cheapest wall crossing from an interior point.

        Minimizes wall height plus straight-line distance over the whole
        boundary.  Each edge's 1-D objective is convex (linear wall term
        plus a distance), so golden-section refinement is reliable.
        Returns the optimal cost and all minimizers within TIE_TOL.
        """
        y = np.asarray(y, dtype=float)
        n = self.n_edges
        t_best = np.empty(n)
        f_best = np.empty(n)
        for i in range(n):
            t_best[i], f_best[i] = self._edge_minimum(i, y)
        best = f_best.min()
        minimizers = self._collect_ties(t_best, f_best, best)
        return float(best), minimizers

    def boundary_nodes(self, spacing: float) -> list[BoundaryPoint]:
        """Nodes at arc-length intervals <= spacing, vertices always included."""
        if spacing <= 0.0:
            raise ValueError("spacing must be positive")
        nodes = []
        for i in range(self.n_edges):
            n_sub = max(1, int(np.ceil(self.edge_lengths[i] / spacing - GEOM_TOL)))
            for k in range(n_sub):
                s = k / n_sub
                nodes.append(BoundaryPoint(i, s, self.vertices[i] + s * self.edges[i]))
        return nodes

    def _edge_minimum(self, i: int, y: np.ndarray) -> tuple[float, float]:
        """Golden-section minimum of wall(s) + |edge(s) - y| on edge i."""
        a_val = self.wall_values[i]
        b_val = self.wall_values[(i + 1) % self.n_edges]
        v = self.vertices[i]
        e = self.edges[i]

        def f(s):
            return (1.0 - s) * a_val + s * b_val + float(np.linalg.norm(v + s * e - y))

        lo, hi = 0.0, 1.0
        c = hi - _INV_GOLDEN * (hi - lo)
        d = lo + _INV_GOLDEN * (hi - lo)
        fc, fd = f(c), f(d)
        while hi - lo > REFINE_TOL:
            if fc <= fd:
                hi, d, fd = d, c, fc
                c = hi - _INV_GOLDEN * (hi - lo)
                fc = f(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + _INV_GOLDEN * (hi - lo)
                fd = f(d)
        s_mid = 0.5 * (lo + hi)
        candidates = [(0.0, f(0.0)), (s_mid, f(s_mid)), (1.0, f(1.0))]
        return min(candidates, key=lambda c: c[1])

    def _collect_ties(self, t: np.ndarray, values: np.ndarray, best: float) -> list[BoundaryPoint]:
        points: dict[tuple[int, float], BoundaryPoint] = {}
        for i in np.nonzero(values <= best + TIE_TOL)[0]:
            bp = self.boundary_point(int(i), float(t[i]))
            points.setdefault(bp.key, bp)
        return [points[k] for k in sorted(points)]
