"""Simplicial meshes of convex polygons and triangle quadrature rules.

The default domain is the unit square, triangulated by splitting an n-by-n
grid of squares along the (0,0)-(1,1) diagonal of each cell.  All meshes are
conforming and counterclockwise oriented; uniform refinement by edge
midpoints preserves both properties and the shape-regularity of the parent.
"""

import numpy as np

_BOTTOM, _RIGHT, _TOP, _LEFT = 1, 2, 3, 4


class Mesh:
    """Conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (nv, 2) float array
        Vertex coordinates.
    cells : (nc, 3) int array
        Vertex indices per triangle, counterclockwise.
    boundary_edges : (nb, 2) int array
        Vertex index pairs of boundary edges.
    boundary_tags : (nb,) int array
        Integer tag per boundary edge (unit square: 1 bottom, 2 right,
        3 top, 4 left).

    Notes
    -----
    Instances are treated as immutable: the arrays are marked read-only at
    construction and derived quantities (areas, mesh sizes, edge tables)
    are computed once.
    """

    def __init__(self, vertices, cells, boundary_edges, boundary_tags):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        self.boundary_tags = np.ascontiguousarray(boundary_tags, dtype=np.int64)
        for a in (self.vertices, self.cells, self.boundary_edges, self.boundary_tags):
            a.flags.writeable = False

        p = self.vertices[self.cells]  # (nc, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(signed <= 0.0):
            bad = int(np.argmax(signed <= 0.0))
            raise ValueError(f"cell {bad} is degenerate or clockwise (signed area {signed[bad]:.3e})")
        self.areas = signed
        self.areas.flags.writeable = False

        # longest edge per cell, and inradius for the quasi-uniformity check
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        lengths = np.linalg.norm(e, axis=2)  # (3, nc)
        self.cell_diameters = lengths.max(axis=0)
        self.cell_diameters.flags.writeable = False
        self.h_max = float(self.cell_diameters.max())
        self.h_min = float(self.cell_diameters.min())
        self._inradii = 2.0 * self.areas / lengths.sum(axis=0)

        self.edges, self.cell_edges = _edge_table(self.cells)
        self.n_vertices = self.vertices.shape[0]
        self.n_cells = self.cells.shape[0]
        self.n_edges = self.edges.shape[0]

    @property
    def area(self):
        """Total area of the triangulation."""
        return float(self.areas.sum())

    def shape_regularity(self):
        """Max over cells of diameter / inradius (lower is rounder)."""
        return float((self.cell_diameters / self._inradii).max())

    def quasi_uniformity(self):
        """Ratio h_max / h_min."""
        return self.h_max / self.h_min

    def boundary_vertices(self):
        """Sorted indices of vertices lying on the boundary."""
        return np.unique(self.boundary_edges)

    def check_conformity(self):
        """Raise if an interior edge is not shared by exactly two cells.

        Boundary edges must be claimed by exactly one cell and must all be
        listed in ``boundary_edges``.
        """
        counts = np.bincount(self.cell_edges.ravel(), minlength=self.n_edges)
        if counts.max() > 2:
            raise ValueError("edge shared by more than two cells")
        once = np.flatnonzero(counts == 1)
        listed = {tuple(sorted(e)) for e in self.boundary_edges}
        actual = {tuple(self.edges[i]) for i in once}
        if listed != actual:
            raise ValueError("boundary edge list does not match cells with a free edge")
        return True


def _edge_table(cells):
    """Unique edges and the cell-to-edge map.

    Returns
    -------
    edges : (ne, 2) int array
        Sorted vertex pairs.
    cell_edges : (nc, 3) int array
        Edge index opposite each local vertex: entry j is the edge joining
        the two cell vertices other than vertex j.
    """
    nc = cells.shape[0]
    raw = np.empty((3 * nc, 2), dtype=np.int64)
    raw[0::3] = cells[:, [1, 2]]
    raw[1::3] = cells[:, [2, 0]]
    raw[2::3] = cells[:, [0, 1]]
    raw.sort(axis=1)
    edges, inverse = np.unique(raw, axis=0, return_inverse=True)
    cell_edges = inverse.reshape(nc, 3)
    return edges, cell_edges


def triangulate_unit_square(n):
    """Structured triangulation of [0,1]^2 with n subdivisions per side.

    Each grid square is split along its lower-left to upper-right diagonal,
    giving 2*n^2 congruent right triangles with h_max = sqrt(2)/n.
    Boundary tags: 1 bottom, 2 right, 3 top, 4 left (corners belong to the
    edge they start, walking counterclockwise from the origin).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = I.ravel(), J.ravel()
    v00 = vid(i, j)
    v10 = vid(i + 1, j)
    v01 = vid(i, j + 1)
    v11 = vid(i + 1, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper

    k = np.arange(n)
    be, bt = [], []
    be.append(np.column_stack([vid(k, 0), vid(k + 1, 0)]))
    bt.append(np.full(n, _BOTTOM))
    be.append(np.column_stack([vid(n, k), vid(n, k + 1)]))
    bt.append(np.full(n, _RIGHT))
    be.append(np.column_stack([vid(n - k, n), vid(n - k - 1, n)]))
    bt.append(np.full(n, _TOP))
    be.append(np.column_stack([vid(0, n - k), vid(0, n - k - 1)]))
    bt.append(np.full(n, _LEFT))
    return Mesh(vertices, cells, np.vstack(be), np.concatenate(bt))


def refine_uniform(mesh):
    """Split every triangle into four by connecting edge midpoints.

    Child cells inherit the parent orientation; boundary edges are split in
    two and keep their tag.
    """
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    c = mesh.cells
    m = nv + mesh.cell_edges  # midpoint vertex opposite each local vertex
    corner0 = np.column_stack([c[:, 0], m[:, 2], m[:, 1]])
    corner1 = np.column_stack([c[:, 1], m[:, 0], m[:, 2]])
    corner2 = np.column_stack([c[:, 2], m[:, 1], m[:, 0]])
    center = m[:, [0, 1, 2]]
    cells = np.vstack([corner0, corner1, corner2, center])

    # split boundary edges, locating each in the parent edge table
    sorted_be = np.sort(mesh.boundary_edges, axis=1)
    idx = _rows_in(mesh.edges, sorted_be)
    mid = nv + idx
    first = np.column_stack([mesh.boundary_edges[:, 0], mid])
    second = np.column_stack([mid, mesh.boundary_edges[:, 1]])
    boundary_edges = np.vstack([first, second])
    boundary_tags = np.concatenate([mesh.boundary_tags, mesh.boundary_tags])
    return Mesh(vertices, cells, boundary_edges, boundary_tags)


def _rows_in(table, rows):
    """Index of each row of `rows` inside the lexicographically sorted `table`."""
    key_t = table[:, 0] * (table.max() + 1) + table[:, 1]
    key_r = rows[:, 0] * (table.max() + 1) + rows[:, 1]
    order = np.argsort(key_t)
    pos = np.searchsorted(key_t[order], key_r)
    idx = order[pos]
    if not np.array_equal(key_t[idx], key_r):
        raise KeyError("row not present in table")
    return idx


class QuadratureRule:
    """Symmetric Gauss rule on the reference triangle {x>=0, y>=0, x+y<=1}.

    Attributes
    ----------
    degree : int
        Highest polynomial degree integrated exactly.
    points : (nq, 3) float array
        Barycentric coordinates of the nodes.
    weights : (nq,) float array
        Weights summing to the reference area 1/2.
    """

    def __init__(self, degree, points, weights):
        self.degree = degree
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.points.flags.writeable = False
        self.weights.flags.writeable = False
        self.n_points = self.weights.size

    @property
    def xy(self):
        """Cartesian node coordinates on the reference triangle, (nq, 2)."""
        return self.points[:, 1:]


def _sym3(a):
    """The three permutations of barycentric (1-2a, a, a)."""
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def triangle_quadrature(degree):
    """Quadrature rule on the reference triangle, exact to `degree`.

    Degrees 1 through 5 are available (1, 3, 4, 6 and 7 point rules).
    """
    if degree <= 1:
        pts = [(1 / 3, 1 / 3, 1 / 3)]
        wts = [1.0]
    elif degree == 2:
        pts = _sym3(1 / 6)
        wts = [1 / 3] * 3
    elif degree == 3:
        # degree-4 rule reused: positive weights, cheaper than Gauss(3) with negatives
        return triangle_quadrature(4)
    elif degree == 4:
        a1, w1 = 0.445948490915965, 0.223381589678011
        a2, w2 = 0.091576213509771, 0.109951743655322
        pts = _sym3(a1) + _sym3(a2)
        wts = [w1] * 3 + [w2] * 3
    elif degree == 5:
        s = np.sqrt(15.0)
        a1, w1 = (6.0 - s) / 21.0, (155.0 - s) / 1200.0
        a2, w2 = (6.0 + s) / 21.0, (155.0 + s) / 1200.0
        pts = [(1 / 3, 1 / 3, 1 / 3)] + _sym3(a1) + _sym3(a2)
        wts = [9 / 40] + [w1] * 3 + [w2] * 3
    else:
        raise ValueError(f"no rule of degree {degree}")
    pts = np.array(pts, dtype=float)
    wts = 0.5 * np.array(wts, dtype=float)  # reference triangle has area 1/2
    return QuadratureRule(degree if degree != 3 else 4, pts, wts)
