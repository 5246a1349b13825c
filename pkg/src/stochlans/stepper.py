"""Semi-implicit time steppers for the stochastic flow models.

One step of the filtered model advances the pair (V, U) -- momentum
velocity and filtered velocity -- by solving a single coupled linear
system.  With phi/psi velocity test functions and q pressure tests:

    (V - V_prev, phi) + k nu (grad V, grad phi) + k b(U, V_prev, phi)
        - k (Pi, div phi) = k (f, phi) + (g dW, phi)
    (V, psi) - (U, psi) - alpha^2 (grad U, grad psi) + (Pit, div psi) = 0
    (div V, q) = 0,   (div U, q) = 0

The convection b freezes the transported field at V_prev and takes the
transporting field implicitly, so each step is linear; only the
transport block changes between steps.  The unfiltered reference model
(``NseStepper``) is the alpha -> 0 degeneration of the same scheme: the
filter equation collapses to U = V and the transport block lands on the
diagonal.

Solvers: ``direct`` refactorizes the step matrix (reproducible to the
bit), ``iterative`` runs GMRES preconditioned with the frozen
zero-transport factorization and falls back to a direct solve whenever
the recomputed residual misses the tolerance.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .linalg import BlockSystem, factorize, relative_residual, solve_direct, solve_iterative
from .mesh import triangulate_unit_square
from .noise import FieldSampler, NoiseModel
from .operators import FlowOperators


class BlowupError(RuntimeError):
    """Solution left the representable range (NaN/Inf or runaway norm)."""

    def __init__(self, step, message):
        super().__init__(message)
        self.step = step


def _masked_delta(T, row_off, col_off, row_keep, col_keep, scale, n):
    """Embed scale*T into an n-by-n matrix, dropping constrained rows/cols.

    The base matrix is assembled with symmetric elimination of the pinned
    dofs (identity rows, zero columns), so the per-step update must not
    reintroduce entries there.
    """
    coo = sp.coo_matrix(T)
    keep = row_keep[coo.row] & col_keep[coo.col]
    return sp.csr_matrix(
        (scale * coo.data[keep], (row_off + coo.row[keep], col_off + coo.col[keep])),
        shape=(n, n),
    )


@dataclass
class StepInfo:
    residual: float
    iterations: int = 0
    fallback: bool = False
    method: str = "direct"


class _StepperBase:
    """Shared per-step linear-system machinery."""

    def __init__(self, solver, tol):
        if solver not in ("direct", "iterative"):
            raise ValueError(f"unknown solver {solver!r}")
        self.solver = solver
        self.tol = float(tol)
        self._a0_lu = None
        self._prec = None
        self._last_x = None
        self.fallbacks = 0

    def reset(self):
        """Forget warm-start state carried from a previous trajectory."""
        self._last_x = None

    def _a0_factor(self):
        if self._a0_lu is None:
            self._a0_lu = factorize(self.A0)
        return self._a0_lu

    def _preconditioner(self):
        if self._prec is None:
            lu = self._a0_factor()
            self._prec = spla.LinearOperator(self.A0.shape, matvec=lu.solve,
                                             dtype=np.float64)
        return self._prec

    def _solve(self, delta, b):
        """Solve (A0 + delta) x = b by the configured strategy."""
        if delta is None and self.solver == "direct":
            report = solve_direct(self.A0, b, factor=self._a0_factor())
            return report.x, StepInfo(report.residual, method="direct")
        if self.solver == "direct":
            report = solve_direct((self.A0 + delta).tocsc(), b)
            return report.x, StepInfo(report.residual, method="direct")

        A0 = self.A0
        if delta is None:
            op = A0
        else:
            op = spla.LinearOperator(A0.shape, matvec=lambda x: A0 @ x + delta @ x,
                                     dtype=np.float64)
        report = solve_iterative(
            op, b, tol=self.tol, max_iter=200,
            preconditioner=self._preconditioner(), x0=self._last_x,
        )
        if report.converged:
            self._last_x = report.x
            return report.x, StepInfo(report.residual, report.iterations, method="gmres")
        # honest fallback: refactorize the true matrix for this step
        self.fallbacks += 1
        full = self.A0 if delta is None else (self.A0 + delta).tocsc()
        direct = solve_direct(full, b)
        self._last_x = direct.x
        return direct.x, StepInfo(direct.residual, report.iterations, fallback=True,
                                  method="gmres+direct")


class LansStepper(_StepperBase):
    """One-step solver for the filtered (alpha-regularized) model."""

    def __init__(self, space, ops, nu, alpha, k, solver="direct", tol=1e-10,
                 convection="compensated"):
        super().__init__(solver, tol)
        self.space = space
        self.ops = ops
        self.nu = float(nu)
        self.alpha = float(alpha)
        self.k = float(k)
        self.compensated = convection == "compensated"

        n = space.n_velocity
        sysm = BlockSystem([("v", n), ("u", n), ("pi", space.n_pressure),
                            ("pit", space.n_pressure)])
        sysm.set_block("v", "v", ops.M + self.k * self.nu * ops.K)
        sysm.set_block("v", "pi", -self.k * ops.B.T)
        sysm.set_block("u", "v", -ops.M)
        sysm.set_block("u", "u", ops.M + self.alpha**2 * ops.K)
        sysm.set_block("u", "pit", -ops.B.T)
        sysm.set_block("pi", "v", ops.B)
        sysm.set_block("pit", "u", ops.B)
        sysm.add_mean_constraint("pi", ops.area_weights)
        sysm.add_mean_constraint("pit", ops.area_weights)
        sysm.pin("v", ops.dirichlet)
        sysm.pin("u", ops.dirichlet)
        self.system = sysm
        self.A0, _ = sysm.assemble()
        self.mask = sysm.pin_mask()
        off = sysm.offsets()
        self.v_off, self.u_off = off["v"], off["u"]
        keep = self.mask > 0.5
        self._keep_v = keep[self.v_off:self.v_off + n]
        self._keep_u = keep[self.u_off:self.u_off + n]

    def _delta(self, V_prev):
        """Transport block k*b(., V_prev, .) placed at rows v, columns u."""
        if not np.any(V_prev):
            return None
        T = fem.transport_matrix(self.space, V_prev, compensated=self.compensated)
        return _masked_delta(T, self.v_off, self.u_off, self._keep_v, self._keep_u,
                             self.k, self.A0.shape[0])

    def step(self, V_prev, load):
        """Advance one step.

        ``load`` collects every momentum source beyond the history term:
        k * (drift load) + (noise load), as an assembled test-function
        vector of length n_velocity.
        """
        b = np.zeros(self.A0.shape[0])
        bv = self.ops.M @ V_prev
        if load is not None:
            bv = bv + load
        b[self.v_off:self.v_off + self.space.n_velocity] = bv
        b *= self.mask
        x, info = self._solve(self._delta(V_prev), b)
        parts = self.system.split(x)
        return parts["v"], parts["u"], parts["pi"], parts["pit"], info


class NseStepper(_StepperBase):
    """One-step solver for the unfiltered reference model."""

    def __init__(self, space, ops, nu, k, solver="direct", tol=1e-10,
                 convection="compensated"):
        super().__init__(solver, tol)
        self.space = space
        self.ops = ops
        self.nu = float(nu)
        self.k = float(k)
        self.compensated = convection == "compensated"

        sysm = BlockSystem([("v", space.n_velocity), ("pi", space.n_pressure)])
        sysm.set_block("v", "v", ops.M + self.k * self.nu * ops.K)
        sysm.set_block("v", "pi", -self.k * ops.B.T)
        sysm.set_block("pi", "v", ops.B)
        sysm.add_mean_constraint("pi", ops.area_weights)
        sysm.pin("v", ops.dirichlet)
        self.system = sysm
        self.A0, _ = sysm.assemble()
        self.mask = sysm.pin_mask()
        self.v_off = sysm.offsets()["v"]
        keep = self.mask > 0.5
        self._keep_v = keep[self.v_off:self.v_off + space.n_velocity]

    def _delta(self, v_prev):
        if not np.any(v_prev):
            return None
        T = fem.transport_matrix(self.space, v_prev, compensated=self.compensated)
        return _masked_delta(T, self.v_off, self.v_off, self._keep_v, self._keep_v,
                             self.k, self.A0.shape[0])

    def step(self, v_prev, load):
        b = np.zeros(self.A0.shape[0])
        bv = self.ops.M @ v_prev
        if load is not None:
            bv = bv + load
        b[self.v_off:self.v_off + self.space.n_velocity] = bv
        b *= self.mask
        x, info = self._solve(self._delta(v_prev), b)
        parts = self.system.split(x)
        return parts["v"], parts["pi"], info


def energy_step_defect(ops, nu, k, U, U_prev, work, alpha=None, V=None):
    """Residual of the one-step energy balance, with its natural scale.

    Testing the momentum equation with the new filtered iterate U gives,
    exactly at the discrete level,

        0.5|U|_a^2 - 0.5|U_prev|_a^2 + 0.5|U - U_prev|_a^2
            + k nu (|grad U|^2 + alpha^2 |Lap_h U|^2) = work

    where |.|_a is the alpha-weighted norm, Lap_h U = (U - V)/alpha^2,
    and ``work`` is the inner product of all momentum sources with U
    (k * drift load + noise load, dotted with U).  The unfiltered model
    is the alpha = None case with V = U and no filter terms.
    """
    M, K = ops.M, ops.K
    dU = U - U_prev
    if alpha is None:
        a2 = 0.0
        lap_sq = 0.0
    else:
        a2 = float(alpha) ** 2
        z = (U - V) / a2
        lap_sq = float(z @ (M @ z))
    sq = lambda w: float(w @ (M @ w)) + a2 * float(w @ (K @ w))
    kinetic = 0.5 * sq(U) - 0.5 * sq(U_prev) + 0.5 * sq(dU)
    dissipation = k * nu * (float(U @ (K @ U)) + a2 * lap_sq)
    defect = kinetic + dissipation - work
    scale = max(0.5 * sq(U), 0.5 * sq(U_prev), 0.5 * sq(dU), dissipation, abs(work), 1e-300)
    return defect, scale


# ---------------------------------------------------------------------------
# whole-trajectory driver


DIAGNOSTIC_COLUMNS = (
    "m", "t", "norm_u_alpha", "norm_v_l2", "norm_grad_u", "norm_lap_u",
    "div_residual_u", "div_residual_v", "solver_residual", "wall_time",
    "energy_defect", "energy_scale", "solver_iterations", "norm_du_alpha",
)


@dataclass
class PathResult:
    """Per-step diagnostics plus final coefficient vectors of one trajectory."""

    model: str
    path: int
    rows: np.ndarray            # (n_steps + 1, len(DIAGNOSTIC_COLUMNS))
    U: np.ndarray
    V: np.ndarray
    Pi: np.ndarray = None
    Pit: np.ndarray = None
    snapshots: list = field(default_factory=list)
    history: list = None        # optional list of (U, V) pairs per step
    fallbacks: int = 0

    def column(self, name):
        return self.rows[:, DIAGNOSTIC_COLUMNS.index(name)]


def vortex_field(pts):
    """Divergence-free initial field: the curl of sin^2(pi x) sin^2(pi y)."""
    x, y = pts[..., 0], pts[..., 1]
    sx, sy = np.sin(np.pi * x), np.sin(np.pi * y)
    cx, cy = np.cos(np.pi * x), np.cos(np.pi * y)
    return np.stack([2 * np.pi * sx**2 * sy * cy, -2 * np.pi * sx * cx * sy**2], axis=-1)


class SimContext:
    """Mesh/operator bundle reused by every trajectory of one configuration.

    ``mesh`` overrides the default structured triangulation (used for
    nested-refinement studies where meshes must share ancestry).
    """

    def __init__(self, cfg, mesh=None):
        self.cfg = cfg
        self.mesh = triangulate_unit_square(cfg.n) if mesh is None else mesh
        self.space = fem.MixedSpace(self.mesh)
        self.ops = FlowOperators(self.space)
        self.alpha = cfg.effective_alpha()
        if cfg.g == "none":
            self.noise = None
            self.sampler = None
        else:
            self.noise = NoiseModel(cfg.noise_M, cfg.seed)
            self.sampler = FieldSampler(self.noise, self.space, cfg.sample_mode)
        if cfg.f_magnitude != 0.0:
            mag = cfg.f_magnitude
            self.drift_load = fem.load_velocity(
                self.space,
                lambda pts: np.stack(
                    [np.full(pts.shape[:-1], mag), np.zeros(pts.shape[:-1])], axis=-1))
        else:
            self.drift_load = None
        if cfg.u0 == "vortex":
            self.U0 = self.ops.l2_project(vortex_field, divfree=True)
        else:
            self.U0 = np.zeros(self.space.n_velocity)
        self._steppers = {}

    def stepper(self, model):
        key = model
        if key not in self._steppers:
            cfg = self.cfg
            if model == "lans":
                st = LansStepper(self.space, self.ops, cfg.nu, self.alpha, cfg.k,
                                 solver=cfg.solver, tol=cfg.tol,
                                 convection=cfg.convection)
            elif model == "nse":
                st = NseStepper(self.space, self.ops, cfg.nu, cfg.k,
                                solver=cfg.solver, tol=cfg.tol,
                                convection=cfg.convection)
            else:
                raise ValueError(f"unknown model {model!r}")
            self._steppers[key] = st
        return self._steppers[key]


def run_path(cfg, path=0, model="lans", context=None, increment_field=None,
             keep_history=False):
    """Integrate one trajectory and return its PathResult.

    ``increment_field``, when given, overrides the default noise source:
    a callable m -> realized increment field (nodal coefficient vector),
    used to couple trajectories across grids.  Deterministic given
    (cfg, path): the noise substream is indexed by (cfg.seed, path, m).
    """
    if context is None:
        context = SimContext(cfg)
    ops, space = context.ops, context.space
    k, nu, alpha = cfg.k, cfg.nu, context.alpha
    n_steps = cfg.n_steps
    lans = model == "lans"

    stepper = context.stepper(model)
    stepper.reset()
    stepper.fallbacks = 0

    if increment_field is None and context.sampler is not None:
        sampler, noise = context.sampler, context.noise

        def increment_field(m):
            return sampler.realize(noise.increment(m, k, path))

    U = context.U0.copy()
    V = ops.unfilter(U, alpha) if (lans and np.any(U)) else U.copy()
    Pi = Pit = None
    scale_guard = 1e8 * (1.0 + ops.l2_norm(U))

    rows = np.zeros((n_steps + 1, len(DIAGNOSTIC_COLUMNS)))
    history = [] if keep_history else None
    snapshots = []

    def record(m, U, V, res, wall, defect, scale, iters, dU_norm):
        lap = (U - V) / alpha**2 if lans else np.zeros_like(U)
        rows[m] = (
            m, m * k,
            ops.alpha_norm(U, alpha) if lans else ops.l2_norm(U),
            ops.l2_norm(V),
            ops.h1_seminorm(U),
            ops.l2_norm(lap) if lans else 0.0,
            ops.divergence_residual(U),
            ops.divergence_residual(V),
            res, wall, defect, scale, iters, dU_norm,
        )

    record(0, U, V, 0.0, 0.0, 0.0, 1.0, 0, 0.0)
    if cfg.stride > 0:
        snapshots.append((0, U.copy(), V.copy()))

    for m in range(1, n_steps + 1):
        tic = time.perf_counter()
        load = np.zeros(space.n_velocity)
        if context.drift_load is not None:
            load += k * context.drift_load
        noise_load = None
        if increment_field is not None and cfg.g != "none":
            s = increment_field(m)
            if cfg.g == "multiplicative":
                s = U * s
            noise_load = ops.M @ s
            load += noise_load

        U_prev, V_prev = U, V
        if lans:
            V, U, Pi, Pit, info = stepper.step(V_prev, load)
        else:
            V, Pi, info = stepper.step(V_prev, load)
            U = V
        wall = time.perf_counter() - tic

        if not np.all(np.isfinite(U)):
            raise BlowupError(m, f"non-finite iterate at step {m}")
        normU = ops.l2_norm(U)
        if normU > scale_guard:
            raise BlowupError(m, f"runaway norm {normU:.3e} at step {m}")
        scale_guard = max(scale_guard, 1e8 * (1.0 + normU))

        work = float(load @ U)
        defect, scale = energy_step_defect(
            ops, nu, k, U, U_prev, work,
            alpha=alpha if lans else None, V=V if lans else None)
        dU_norm = (ops.alpha_norm(U - U_prev, alpha) if lans
                   else ops.l2_norm(U - U_prev))
        record(m, U, V, info.residual, wall, defect, scale, info.iterations, dU_norm)
        if keep_history:
            history.append((U.copy(), V.copy()))
        if cfg.stride > 0 and (m % cfg.stride == 0 or m == n_steps):
            snapshots.append((m, U.copy(), V.copy()))

    return PathResult(model=model, path=path, rows=rows, U=U, V=V, Pi=Pi, Pit=Pit,
                      snapshots=snapshots, history=history,
                      fallbacks=stepper.fallbacks)
