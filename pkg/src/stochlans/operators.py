"""Discrete flow operators: filter, Laplacian, projections, energy norms.

Everything here acts on the discretely divergence-free, zero-trace velocity
subspace realized through saddle-point systems (divergence coupling plus a
zero-mean pressure multiplier), with factorizations cached per space.

The differential filter maps v to (u, pt) solving

    (u, phi) + alpha^2 (grad u, grad phi) - (pt, div phi) = (v, phi)
    (div u, q) = 0,   mean pt = 0,   u = 0 on the boundary,

and satisfies two identities used as runtime checks: v = u - alpha^2 Lap_h u
coefficient-wise, and (grad v, grad u) = |grad u|^2 + alpha^2 |Lap_h u|^2,
where Lap_h is the discrete Laplacian ranged in the same subspace.
"""

import numpy as np

from . import fem
from .linalg import BlockSystem, factorize, relative_residual


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"filter scale alpha must lie in (0, 1], got {alpha}")


class _Saddle:
    """Factorized velocity/pressure saddle system with zero-mean multiplier."""

    def __init__(self, ops, a_block):
        space = ops.space
        sysm = BlockSystem([("u", space.n_velocity), ("p", space.n_pressure)])
        sysm.set_block("u", "u", a_block)
        sysm.set_block("u", "p", -ops.B.T)
        sysm.set_block("p", "u", ops.B)
        sysm.add_mean_constraint("p", ops.area_weights)
        sysm.pin("u", ops.dirichlet)
        self.system = sysm
        self.A, _ = sysm.assemble()
        self.mask = sysm.pin_mask()
        self.lu = factorize(self.A)
        self.offsets = sysm.offsets()
        self.n = sysm.size

    def solve(self, load):
        b = np.zeros(self.n)
        b[: load.size] = load
        b *= self.mask
        x = self.lu.solve(b)
        parts = self.system.split(x)
        return parts["u"], parts["p"], relative_residual(self.A, x, b)


class FlowOperators:
    """Operator workspace bound to one mixed space.

    Assembles the velocity mass/stiffness, divergence pairing and pressure
    weights once, and caches saddle factorizations (one per filter scale).
    """

    def __init__(self, space):
        self.space = space
        self.M = fem.vector_mass(space)
        self.K = fem.vector_stiffness(space)
        self.B = fem.divergence(space)
        self.Mp = fem.pressure_mass(space)
        self.area_weights = fem.pressure_area_weights(space)
        self.dirichlet = space.dirichlet_velocity_dofs()
        self._mass_saddle = None
        self._stiff_saddle = None
        self._filters = {}
        self._plain_mass_lu = None
        self._pinned_mass = None

    # cached systems ----------------------------------------------------

    def mass_saddle(self):
        if self._mass_saddle is None:
            self._mass_saddle = _Saddle(self, self.M)
        return self._mass_saddle

    def stiffness_saddle(self):
        if self._stiff_saddle is None:
            self._stiff_saddle = _Saddle(self, self.K)
        return self._stiff_saddle

    def filter_saddle(self, alpha):
        _check_alpha(alpha)
        if alpha not in self._filters:
            self._filters[alpha] = _Saddle(self, self.M + alpha**2 * self.K)
        return self._filters[alpha]

    # norms ---------------------------------------------------------------

    def l2_norm(self, u):
        return float(np.sqrt(u @ (self.M @ u)))

    def h1_seminorm(self, u):
        return float(np.sqrt(u @ (self.K @ u)))

    def alpha_norm(self, u, alpha):
        """Norm with square |u|^2 + alpha^2 |grad u|^2."""
        _check_alpha(alpha)
        return float(np.sqrt(u @ (self.M @ u) + alpha**2 * (u @ (self.K @ u))))

    def pressure_zero_mean(self, q):
        """Shift a pressure field to zero weighted mean."""
        area = self.area_weights.sum()
        return q - (self.area_weights @ q) / area

    # filter and Laplacian ------------------------------------------------

    def apply_filter(self, v, alpha):
        """Filtered velocity and its pressure multiplier for data v.

        ``v`` is a velocity coefficient vector; the load is (v, phi).
        """
        u, pt, _ = self.filter_saddle(alpha).solve(self.M @ v)
        return u, pt

    def unfilter(self, u, alpha):
        """Inverse of the filter on the divergence-free subspace.

        Returns v with (v, phi) = (u, phi) + alpha^2 (grad u, grad phi) for
        all discretely divergence-free phi, i.e. the datum whose filtered
        image is u.
        """
        _check_alpha(alpha)
        v, _, _ = self.mass_saddle().solve(self.M @ u + alpha**2 * (self.K @ u))
        return v

    def discrete_laplacian(self, z, divfree=True):
        """Velocity field y with (y, phi) = -(grad z, grad phi).

        With ``divfree=True`` (default) the test space is the discretely
        divergence-free zero-trace subspace and y lies in it, which is the
        variant satisfying the filter identities.  ``divfree=False`` solves
        the unconstrained mass system on the full velocity space instead.
        """
        load = -(self.K @ z)
        if divfree:
            y, _, _ = self.mass_saddle().solve(load)
            return y
        if self._plain_mass_lu is None:
            self._plain_mass_lu = factorize(self.M)
        return self._plain_mass_lu.solve(load)

    # projections ---------------------------------------------------------

    def _velocity_load(self, data):
        if callable(data):
            return fem.load_velocity(self.space, data)
        data = np.asarray(data, dtype=float)
        if data.shape == (self.space.n_velocity,):
            return self.M @ data
        raise ValueError("expected a velocity coefficient vector or a callable")

    def l2_project(self, data, divfree=False):
        """L2-orthogonal projection onto the zero-trace velocity space.

        ``data`` is either a coefficient vector or a callable on points.
        With ``divfree=True`` the target is the discretely divergence-free
        subspace (saddle solve); otherwise a pinned mass solve.
        """
        load = self._velocity_load(data)
        if divfree:
            u, _, _ = self.mass_saddle().solve(load)
            return u
        if self._pinned_mass is None:
            sysm = BlockSystem([("u", self.space.n_velocity)])
            sysm.set_block("u", "u", self.M)
            sysm.pin("u", self.dirichlet)
            A, _ = sysm.assemble()
            self._pinned_mass = (factorize(A), sysm.pin_mask())
        lu, mask = self._pinned_mass
        return lu.solve(load * mask)

    def ritz_project(self, data, grad_fn=None):
        """Energy-orthogonal projection onto the divergence-free subspace.

        Solves (grad r, grad phi) = (grad v, grad phi) for all phi in the
        subspace.  Pass a coefficient vector, or a callable together with
        ``grad_fn`` giving the analytic gradient (points to (N, 2, 2)).
        """
        if grad_fn is not None:
            load = fem.load_velocity_gradform(self.space, grad_fn)
        else:
            data = np.asarray(data, dtype=float)
            if data.shape != (self.space.n_velocity,):
                raise ValueError("need a coefficient vector or grad_fn")
            load = self.K @ data
        r, _, _ = self.stiffness_saddle().solve(load)
        return r

    elliptic_project = ritz_project

    def divergence_residual(self, u):
        return float(np.abs(self.B @ u).max())

    def random_divfree(self, rng, scale=1.0):
        """Random member of the discretely divergence-free subspace."""
        raw = rng.standard_normal(self.space.n_velocity) * scale
        return self.l2_project(raw, divfree=True)
