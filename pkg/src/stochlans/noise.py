"""Truncated Q-Wiener increments on the unit square.

Each velocity component gets an independent series over the Dirichlet
Laplacian eigenfunctions e_ij(x, y) = 2 sin(i pi x) sin(j pi y) with
covariance eigenvalues lambda_ij = (i + j)^-2, truncated at i, j <= modes.
A time increment over a step of size k is

    dW_l = sqrt(k) * sum_ij sqrt(lambda_ij) xi_ij^l e_ij,

with xi standard normal.  Draws come from counter-based Philox streams
keyed by (seed, path) with the step index in the high counter word, so any
(path, step) block is reproducible independently of evaluation order.

Because the e_ij are L2-orthonormal, the L2 norm of a truncated field is
available exactly from its spectral coefficients (Parseval); moment checks
use that route and avoid quadrature and interpolation bias.
"""

import numpy as np
from numpy.random import Generator, Philox


def _normals(seed, path, step, shape):
    key = np.array([seed, path], dtype=np.uint64)
    counter = np.array([0, 0, 0, step], dtype=np.uint64)
    return Generator(Philox(key=key, counter=counter)).standard_normal(shape)


class NoiseModel:
    """Spectrum, trace, and reproducible spectral draws.

    Parameters
    ----------
    modes : int
        Truncation level per axis (modes^2 eigenpairs per component).
    seed : int
        Base key; combined with (path, step) for every draw.
    """

    def __init__(self, modes=10, seed=12345):
        if modes < 1:
            raise ValueError("modes must be positive")
        self.modes = int(modes)
        self.seed = int(seed)
        i = np.arange(1, self.modes + 1)
        self.eigenvalues = 1.0 / (i[:, None] + i[None, :]) ** 2
        self.eigenvalues.flags.writeable = False

    @property
    def component_trace(self):
        """Sum of eigenvalues of one component (truncated trace)."""
        return float(self.eigenvalues.sum())

    @property
    def trace(self):
        """Truncated trace of the full two-component covariance."""
        return 2.0 * self.component_trace

    def normals(self, step, path=0, count=1):
        """Standard normal block for (path, step), shape (count, 2, M, M)."""
        out = _normals(self.seed, path, step, (count, 2, self.modes, self.modes))
        return out[0] if count == 1 else out

    def increment(self, step, k, path=0):
        """Spectral coefficients of dW over step ``step``, shape (2, M, M)."""
        if k < 0:
            raise ValueError("step size must be nonnegative")
        xi = self.normals(step, path)
        return np.sqrt(k * self.eigenvalues)[None, :, :] * xi

    def aggregated_increment(self, coarse_step, substeps, k_fine, path=0):
        """Increment of a coarse step as the sum of fine-grid draws.

        Coarse step m covers fine steps (m-1)*substeps+1 ... m*substeps, so
        ladders sharing the fine grid see pathwise-coupled noise.
        """
        first = (coarse_step - 1) * substeps + 1
        total = np.zeros((2, self.modes, self.modes))
        for s in range(first, first + substeps):
            total += self.increment(s, k_fine, path)
        return total

    @staticmethod
    def spectral_norm_sq(coeffs):
        """Exact squared L2 norm of the truncated field (Parseval)."""
        return float(np.sum(np.asarray(coeffs) ** 2))


class FieldSampler:
    """Realizes spectral increments as velocity coefficient fields.

    ``mode='interpolate'`` (default) evaluates the truncated series at the
    scalar nodes; ``mode='project'`` L2-projects each eigenfunction onto
    the zero-trace velocity space once and combines the projections.
    """

    def __init__(self, model, space, mode="interpolate"):
        if mode not in ("interpolate", "project"):
            raise ValueError(f"unknown sampling mode {mode!r}")
        self.model = model
        self.space = space
        self.mode = mode
        i = np.arange(1, model.modes + 1)
        nodes = space.scalar_nodes
        self._sx = np.sin(np.pi * nodes[:, 0:1] * i[None, :])
        self._sy = np.sin(np.pi * nodes[:, 1:2] * i[None, :])
        if mode == "project":
            from . import fem
            from .linalg import BlockSystem, factorize

            sysm = BlockSystem([("u", space.n_scalar)])
            sysm.set_block("u", "u", fem.scalar_mass(space))
            sysm.pin("u", space.boundary_scalar_dofs)
            A, _ = sysm.assemble()
            lu = factorize(A)
            mask = sysm.pin_mask()
            t = space.form
            pts = t.points
            wN = t.weights[None, :] * space.det_jac[:, None]
            m = model.modes
            self._modes_flat = np.empty((space.n_scalar, m * m))
            for a in range(m):
                for b in range(m):
                    vals = 2.0 * np.sin((a + 1) * np.pi * pts[:, :, 0]) * np.sin((b + 1) * np.pi * pts[:, :, 1])
                    local = np.einsum("cq,aq,cq->ca", wN, t.vel_values, vals)
                    load = np.bincount(space.vel_dofmap.ravel(), weights=local.ravel(), minlength=space.n_scalar)
                    self._modes_flat[:, a * m + b] = lu.solve(load * mask)

    def _scalar_field(self, c):
        if self.mode == "interpolate":
            return 2.0 * np.einsum("ni,ij,nj->n", self._sx, c, self._sy, optimize=True)
        return self._modes_flat @ c.ravel()

    def realize(self, coeffs):
        """Velocity coefficient vector of a spectral increment (2, M, M)."""
        return np.concatenate([self._scalar_field(coeffs[0]), self._scalar_field(coeffs[1])])

    def sample(self, step, k, path=0):
        """Convenience: draw and realize one increment."""
        c = self.model.increment(step, k, path)
        return self.realize(c), c


class MomentReport:
    """Outcome of a sampled moment-bound check."""

    def __init__(self, order, empirical, bound, se, theory=None):
        self.order = order
        self.empirical = empirical
        self.bound = bound
        self.se = se
        self.theory = theory

    @property
    def ok(self):
        return self.empirical <= self.bound + 3.0 * self.se

    def __repr__(self):
        return (
            f"MomentReport(r={self.order}, empirical={self.empirical:.5e}, "
            f"bound={self.bound:.5e}, se={self.se:.2e})"
        )


def double_factorial(n):
    return int(np.prod(np.arange(n, 0, -2))) if n > 0 else 1


def check_moment_bound(model, k, order, n_samples):
    """Sample E |dW|^(2r) and compare with (2r-1)!! k^r (tr Q)^r.

    Norms are computed spectrally, so the only error is statistical.  For
    r = 1 the bound is attained exactly in expectation; the report carries
    that theory value.  One sample per path key, all at step 1.
    """
    if order < 1:
        raise ValueError("order must be a positive integer")
    scale_sq = k * model.eigenvalues
    values = np.empty(n_samples)
    for path in range(n_samples):
        xi = model.normals(step=1, path=path)  # (2, M, M), spectrum shared by both components
        values[path] = np.sum(scale_sq * xi**2)
    values **= order
    bound = double_factorial(2 * order - 1) * (k * model.trace) ** order
    se = float(values.std(ddof=1) / np.sqrt(n_samples))
    theory = k * model.trace if order == 1 else None
    return MomentReport(order, float(values.mean()), bound, se, theory)
