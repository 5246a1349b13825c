"""Mixed Taylor-Hood finite elements on triangles.

Velocity is continuous piecewise P2 (scalar dofs at vertices and edge
midpoints), pressure continuous P1.  Velocity vectors are stored
component-major: the first ``n_scalar`` coefficients are the x component,
the next ``n_scalar`` the y component.  A P1 velocity variant (the
classical unstable equal-order pair) is available for stability probes.

Assembly is vectorized over cells: local element tensors are computed for
all cells at once with einsum and scattered into COO triplets.
"""

import numpy as np
import scipy.sparse as sp

from .mesh import _rows_in, triangle_quadrature

_P1_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _basis_values(degree, bary):
    """Basis values at barycentric points, shape (nbf, nq)."""
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    if degree == 1:
        return np.stack([l0, l1, l2])
    if degree == 2:
        return np.stack([
            l0 * (2.0 * l0 - 1.0),
            l1 * (2.0 * l1 - 1.0),
            l2 * (2.0 * l2 - 1.0),
            4.0 * l1 * l2,
            4.0 * l2 * l0,
            4.0 * l0 * l1,
        ])
    raise ValueError(f"unsupported degree {degree}")


def _basis_grads(degree, bary):
    """Reference-element basis gradients, shape (nbf, nq, 2)."""
    nq = bary.shape[0]
    if degree == 1:
        return np.broadcast_to(_P1_GRADS[:, None, :], (3, nq, 2)).copy()
    if degree == 2:
        l = bary  # (nq, 3)
        g = _P1_GRADS  # (3, 2)
        out = np.empty((6, nq, 2))
        for i in range(3):
            out[i] = (4.0 * l[:, i] - 1.0)[:, None] * g[i]
        out[3] = 4.0 * (l[:, 2][:, None] * g[1] + l[:, 1][:, None] * g[2])
        out[4] = 4.0 * (l[:, 0][:, None] * g[2] + l[:, 2][:, None] * g[0])
        out[5] = 4.0 * (l[:, 1][:, None] * g[0] + l[:, 0][:, None] * g[1])
        return out
    raise ValueError(f"unsupported degree {degree}")


class _RuleTables:
    """Quadrature rule plus basis/gradient tables for both subspaces."""

    def __init__(self, space, degree):
        self.rule = triangle_quadrature(degree)
        bary = self.rule.points
        self.weights = self.rule.weights
        self.vel_values = _basis_values(space.velocity_degree, bary)
        self.vel_grads_ref = _basis_grads(space.velocity_degree, bary)
        self.pre_values = _basis_values(space.pressure_degree, bary)
        self.pre_grads_ref = _basis_grads(space.pressure_degree, bary)
        # physical gradients per cell: (nc, nbf, nq, 2)
        self.vel_grads = np.einsum("cij,aqj->caqi", space.inv_jac_t, self.vel_grads_ref)
        self.pre_grads = np.einsum("cij,aqj->caqi", space.inv_jac_t, self.pre_grads_ref)
        # quadrature point coordinates, (nc, nq, 2)
        p0 = space.mesh.vertices[space.mesh.cells[:, 0]]
        self.points = p0[:, None, :] + np.einsum("cij,qj->cqi", space.jac, self.rule.xy)


class MixedSpace:
    """Velocity/pressure pair on a mesh.

    Parameters
    ----------
    mesh : Mesh
    velocity_degree : int
        2 for Taylor-Hood (default), 1 for the equal-order probe pair.
    pressure_degree : int
        Only 1 is supported.
    quad_degree : int
        Rule for constant bilinear forms (mass, stiffness, divergence).
    form_quad_degree : int
        Richer rule for the trilinear form and analytic loads.
    """

    def __init__(self, mesh, velocity_degree=2, pressure_degree=1, quad_degree=4, form_quad_degree=5):
        if pressure_degree != 1:
            raise ValueError("pressure space must be P1")
        if velocity_degree not in (1, 2):
            raise ValueError("velocity space must be P1 or P2")
        self.mesh = mesh
        self.velocity_degree = velocity_degree
        self.pressure_degree = pressure_degree

        nv, ne = mesh.n_vertices, mesh.n_edges
        if velocity_degree == 2:
            self.n_scalar = nv + ne
            self.vel_dofmap = np.hstack([mesh.cells, nv + mesh.cell_edges])
            mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
            self.scalar_nodes = np.vstack([mesh.vertices, mids])
        else:
            self.n_scalar = nv
            self.vel_dofmap = mesh.cells.copy()
            self.scalar_nodes = mesh.vertices
        self.n_velocity = 2 * self.n_scalar
        self.n_pressure = nv
        self.pre_dofmap = mesh.cells

        # affine geometry
        p = mesh.vertices[mesh.cells]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nc, 2, 2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv /= det[:, None, None]
        self.jac = jac
        self.det_jac = det
        self.inv_jac_t = np.transpose(inv, (0, 2, 1))

        self.base = _RuleTables(self, quad_degree)
        self.form = _RuleTables(self, form_quad_degree) if form_quad_degree != quad_degree else self.base

        bverts = np.unique(mesh.boundary_edges)
        if velocity_degree == 2:
            bedges = _rows_in(mesh.edges, np.sort(mesh.boundary_edges, axis=1))
            self.boundary_scalar_dofs = np.sort(np.concatenate([bverts, nv + bedges]))
        else:
            self.boundary_scalar_dofs = bverts

    def dirichlet_velocity_dofs(self):
        """Vector-valued dof indices pinned by the no-slip condition."""
        b = self.boundary_scalar_dofs
        return np.concatenate([b, b + self.n_scalar])

    def interpolate_velocity(self, fn):
        """Nodal interpolant of a velocity field.

        ``fn`` maps an (N, 2) array of points to (N, 2) values.
        """
        vals = np.asarray(fn(self.scalar_nodes), dtype=float)
        if vals.shape != (self.n_scalar, 2):
            raise ValueError("velocity callable must return one 2-vector per node")
        return np.concatenate([vals[:, 0], vals[:, 1]])

    def interpolate_pressure(self, fn):
        """Vertex interpolant of a scalar field."""
        return np.asarray(fn(self.mesh.vertices), dtype=float).reshape(self.n_pressure)

    def velocity_components(self, u):
        """Split a vector coefficient array into (x, y) scalar parts."""
        return u[: self.n_scalar], u[self.n_scalar :]

    def eval_velocity(self, u, tables=None):
        """Velocity values at quadrature points, (nc, nq, 2)."""
        t = tables or self.base
        ux, uy = self.velocity_components(u)
        loc = self.vel_dofmap
        vx = np.einsum("ca,aq->cq", ux[loc], t.vel_values)
        vy = np.einsum("ca,aq->cq", uy[loc], t.vel_values)
        return np.stack([vx, vy], axis=-1)

    def eval_velocity_grad(self, u, tables=None):
        """Velocity gradients at quadrature points, (nc, nq, 2, 2).

        Entry [c, q, d, j] is the derivative of component j in direction d.
        """
        t = tables or self.base
        ux, uy = self.velocity_components(u)
        loc = self.vel_dofmap
        gx = np.einsum("ca,caqd->cqd", ux[loc], t.vel_grads)
        gy = np.einsum("ca,caqd->cqd", uy[loc], t.vel_grads)
        return np.stack([gx, gy], axis=-1)

    def eval_pressure(self, q, tables=None):
        t = tables or self.base
        return np.einsum("ca,aq->cq", q[self.pre_dofmap], t.pre_values)


def _scatter(space, local, rows_map, cols_map, shape):
    """Scatter (nc, a, b) local blocks into a CSR matrix."""
    nc, na, nb = local.shape
    rows = np.repeat(rows_map, nb, axis=1)
    cols = np.tile(cols_map, (1, na))
    mat = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    return mat.tocsr()


def _tables(space, which):
    if which == "velocity":
        return space.base.vel_values, space.base.vel_grads, space.vel_dofmap, space.n_scalar
    if which == "pressure":
        return space.base.pre_values, space.base.pre_grads, space.pre_dofmap, space.n_pressure
    raise ValueError(which)


def scalar_mass(space, which="velocity"):
    """Scalar mass matrix of one subspace."""
    vals, _, dofmap, n = _tables(space, which)
    ref = np.einsum("q,aq,bq->ab", space.base.weights, vals, vals)
    local = ref[None, :, :] * space.det_jac[:, None, None]
    return _scatter(space, local, dofmap, dofmap, (n, n))


def scalar_stiffness(space, which="velocity"):
    """Scalar stiffness matrix of one subspace."""
    _, grads, dofmap, n = _tables(space, which)
    local = np.einsum("q,caqd,cbqd,c->cab", space.base.weights, grads, grads, space.det_jac)
    return _scatter(space, local, dofmap, dofmap, (n, n))


def vector_mass(space):
    """Velocity mass matrix, block diagonal over components."""
    m = scalar_mass(space, "velocity")
    return sp.block_diag((m, m), format="csr")


def vector_stiffness(space):
    """Velocity stiffness matrix, block diagonal over components."""
    k = scalar_stiffness(space, "velocity")
    return sp.block_diag((k, k), format="csr")


def pressure_mass(space):
    return scalar_mass(space, "pressure")


def divergence(space):
    """Divergence pairing B with entries (q_i, d N_a / d x_comp).

    Shape (n_pressure, n_velocity); ``B @ u`` tests div u against every
    pressure basis function.
    """
    t = space.base
    n = space.n_scalar
    blocks = []
    for comp in range(2):
        local = np.einsum("q,aq,cbqd,c->cab", t.weights, t.pre_values, t.vel_grads[:, :, :, comp : comp + 1], space.det_jac)
        blocks.append(_scatter(space, local, space.pre_dofmap, space.vel_dofmap, (space.n_pressure, n)))
    return sp.hstack(blocks, format="csr")


def pressure_area_weights(space):
    """Vector w with w_i = integral of pressure basis i (so w.q = mean * area)."""
    t = space.base
    local = np.einsum("q,aq,c->ca", t.weights, t.pre_values, space.det_jac)
    return np.bincount(space.pre_dofmap.ravel(), weights=local.ravel(), minlength=space.n_pressure)


def convection(space, w, compensated=True):
    """Matrix of the convective form linearized at velocity ``w``.

    Row (i, a), column (j, b) holds the trilinear form evaluated at
    z1 = w, z2 = basis (j, b), test = basis (i, a):

        ( [w . grad] z2 + (grad w)^T z2, test )

    With ``compensated=True`` a further ``((div w) z2, test)`` is added.
    The plain form is energy neutral only for exactly divergence-free w;
    the compensated variant satisfies both the neutrality identity
    b(w, z, w) = 0 and the antisymmetry b(z1, z2, w) = -b(w, z2, z1)
    exactly (up to quadrature) for any w vanishing on the boundary, and
    coincides with the plain form whenever div w = 0 pointwise.
    """
    t = space.form
    n = space.n_scalar
    wv = space.eval_velocity(w, t)  # (nc, nq, 2)
    gw = space.eval_velocity_grad(w, t)  # (nc, nq, d, j)

    wN = t.weights[None, :] * space.det_jac[:, None]  # (nc, nq) combined weight
    adv = np.einsum("cqd,cbqd->cbq", wv, t.vel_grads)  # [w . grad] N_b
    same = np.einsum("cq,aq,cbq->cab", wN, t.vel_values, adv)
    if compensated:
        divw = gw[:, :, 0, 0] + gw[:, :, 1, 1]
        same = same + np.einsum("cq,cq,aq,bq->cab", wN, divw, t.vel_values, t.vel_values)

    pairs = np.einsum("cq,aq,bq->cabq", wN, t.vel_values, t.vel_values)
    rows_map = space.vel_dofmap
    blocks = [[None, None], [None, None]]
    for i in range(2):
        for j in range(2):
            local = np.einsum("cabq,cq->cab", pairs, gw[:, :, i, j])
            if i == j:
                local = local + same
            blocks[i][j] = _scatter(space, local, rows_map, rows_map, (n, n))
    return sp.bmat(blocks, format="csr")


def transport_matrix(space, v, compensated=True):
    """Matrix of the convective form linearized in the transporting slot.

    Row (i, a), column (j, b) holds the form with the trial function as
    the transporter and ``v`` frozen as the advected field:

        ( [trial . grad] v + (grad trial)^T v, test )

    plus ``((div trial) v, test)`` when ``compensated``.  This is the
    block that couples the implicit transporting velocity to the momentum
    equation; the compensated variant makes u' T(v) u vanish exactly for
    any zero-trace u, which the energy balance of the time stepper relies
    on.
    """
    t = space.form
    n = space.n_scalar
    vv = space.eval_velocity(v, t)  # (nc, nq, 2)
    gv = space.eval_velocity_grad(v, t)  # (nc, nq, d, j) = d_d v_j
    wN = t.weights[None, :] * space.det_jac[:, None]

    blocks = [[None, None], [None, None]]
    for i in range(2):
        for j in range(2):
            local = np.einsum("cq,aq,bq,cq->cab", wN, t.vel_values, t.vel_values, gv[:, :, j, i])
            local += np.einsum("cq,aq,cbq,cq->cab", wN, t.vel_values, t.vel_grads[:, :, :, i], vv[:, :, j])
            if compensated:
                local += np.einsum("cq,aq,cbq,cq->cab", wN, t.vel_values, t.vel_grads[:, :, :, j], vv[:, :, i])
            blocks[i][j] = _scatter(space, local, space.vel_dofmap, space.vel_dofmap, (n, n))
    return sp.bmat(blocks, format="csr")


def skew_convection(space, w):
    """Skew-symmetrized Navier-Stokes convection matrix at velocity ``w``.

    Represents 0.5 ( [w . grad] z2, test ) - 0.5 ( [w . grad] test, z2 ),
    which is exactly antisymmetric, hence energy neutral, regardless of
    div w.
    """
    t = space.form
    n = space.n_scalar
    wv = space.eval_velocity(w, t)
    wN = t.weights[None, :] * space.det_jac[:, None]
    adv = np.einsum("cqd,cbqd->cbq", wv, t.vel_grads)
    half = 0.5 * np.einsum("cq,aq,cbq->cab", wN, t.vel_values, adv)
    local = half - np.transpose(half, (0, 2, 1))
    block = _scatter(space, local, space.vel_dofmap, space.vel_dofmap, (n, n))
    return sp.block_diag((block, block), format="csr")


def trilinear_form(space, z1, z2, w, compensated=False):
    """Direct quadrature evaluation of the convective trilinear form.

    Independent of the matrix assembly path; used to cross-check
    ``convection``.  Returns the scalar
    ( [z1 . grad] z2, w ) + ( (grad z1)^T z2, w )
    plus ( (div z1)(z2 . w) ) when ``compensated``.
    """
    t = space.form
    v1 = space.eval_velocity(z1, t)
    g1 = space.eval_velocity_grad(z1, t)
    v2 = space.eval_velocity(z2, t)
    g2 = space.eval_velocity_grad(z2, t)
    vw = space.eval_velocity(w, t)
    wN = t.weights[None, :] * space.det_jac[:, None]

    adv = np.einsum("cqd,cqdj->cqj", v1, g2)  # [z1 . grad] z2
    gradT = np.einsum("cqdj,cqj->cqd", g1, v2)  # (grad z1)^T z2
    total = np.einsum("cq,cqj,cqj->", wN, adv, vw) + np.einsum("cq,cqd,cqd->", wN, gradT, vw)
    if compensated:
        div1 = g1[:, :, 0, 0] + g1[:, :, 1, 1]
        total += np.einsum("cq,cq,cqj,cqj->", wN, div1, v2, vw)
    return float(total)


def load_velocity(space, fn):
    """Load vector of an analytic velocity-valued function.

    ``fn`` maps (N, 2) points to (N, 2) values; integrated with the richer
    quadrature rule.
    """
    t = space.form
    pts = t.points.reshape(-1, 2)
    vals = np.asarray(fn(pts), dtype=float).reshape(t.points.shape)
    wN = t.weights[None, :] * space.det_jac[:, None]
    local = np.einsum("cq,aq,cqj->caj", wN, t.vel_values, vals)
    out = np.zeros(space.n_velocity)
    for comp in range(2):
        np.add.at(out, space.vel_dofmap + comp * space.n_scalar, local[:, :, comp])
    return out


def load_velocity_gradform(space, grad_fn):
    """Load vector of the pairing (grad v, grad test) for analytic grad v.

    ``grad_fn`` maps (N, 2) points to (N, 2, 2) arrays with entry [d, j]
    holding the derivative of component j in direction d.
    """
    t = space.form
    pts = t.points.reshape(-1, 2)
    g = np.asarray(grad_fn(pts), dtype=float).reshape(t.points.shape[0], t.points.shape[1], 2, 2)
    wN = t.weights[None, :] * space.det_jac[:, None]
    local = np.einsum("cq,cqdj,caqd->caj", wN, g, t.vel_grads)
    out = np.zeros(space.n_velocity)
    for comp in range(2):
        np.add.at(out, space.vel_dofmap + comp * space.n_scalar, local[:, :, comp])
    return out


def integrate_velocity_dot(space, u, fn):
    """Integral of u . fn over the domain, by quadrature on the rich rule."""
    t = space.form
    uv = space.eval_velocity(u, t)
    pts = t.points.reshape(-1, 2)
    vals = np.asarray(fn(pts), dtype=float).reshape(t.points.shape)
    wN = t.weights[None, :] * space.det_jac[:, None]
    return float(np.einsum("cq,cqj,cqj->", wN, uv, vals))


def velocity_l2_error(space, u, fn):
    """L2 distance between a coefficient field and an analytic velocity."""
    t = space.form
    uv = space.eval_velocity(u, t)
    pts = t.points.reshape(-1, 2)
    vals = np.asarray(fn(pts), dtype=float).reshape(t.points.shape)
    wN = t.weights[None, :] * space.det_jac[:, None]
    diff = uv - vals
    return float(np.sqrt(np.einsum("cq,cqj,cqj->", wN, diff, diff)))


def divergence_residual(space, u, B=None):
    """Max norm of the discrete divergence constraint B u."""
    if B is None:
        B = divergence(space)
    return float(np.abs(B @ u).max())
