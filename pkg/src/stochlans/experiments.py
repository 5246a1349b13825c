"""Monte Carlo experiments and stability probes built on the steppers.

Everything here reduces to repeated run_path calls plus plain statistics:
energy-functional estimates on regime ladders, common-random-number
comparison of the filtered and unfiltered models, self-convergence under
simultaneous mesh/time refinement with coupled noise, and a discrete
inf-sup probe for the velocity/pressure pairing.
"""

from collections import OrderedDict
from copy import deepcopy
from dataclasses import dataclass

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sp

from . import fem
from .config import config_hash
from .mesh import refine_uniform, triangulate_unit_square
from .operators import FlowOperators
from .stepper import SimContext, run_path

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# Monte Carlo scaffolding


@dataclass
class McEstimate:
    """Sample mean with its standard error."""

    mean: float
    se: float
    n: int

    @classmethod
    def from_samples(cls, values):
        values = np.asarray(values, dtype=float)
        n = values.size
        se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(values.mean()), se, n)


_CTX_CACHE = OrderedDict()


def get_context(cfg, mesh=None):
    """Per-process context cache; custom-mesh contexts are not cached."""
    if mesh is not None:
        return SimContext(cfg, mesh=mesh)
    key = config_hash(cfg)
    if key not in _CTX_CACHE:
        while len(_CTX_CACHE) >= 2:
            _CTX_CACHE.popitem(last=False)
        _CTX_CACHE[key] = SimContext(cfg)
    return _CTX_CACHE[key]


ENERGY_STATISTICS = (
    "max_energy",        # max_m |U^m|_a^2
    "dissipation",       # k nu sum_m (|grad U^m|^2 + a^2 |Lap_h U^m|^2)
    "increments",        # 1/2 sum_m |U^m - U^{m-1}|_a^2
    "max_energy_sq",     # (max_m |U^m|_a^2)^2
    "dissipation_sq",    # (k nu sum_m ...)^2
    "max_v_energy",      # max_m |V^m|_{L2}^2
)


def path_energy_statistics(cfg, result):
    """The energy functionals of one trajectory, from its diagnostics."""
    alpha = cfg.effective_alpha()
    na = result.column("norm_u_alpha")
    grad = result.column("norm_grad_u")[1:]
    lap = result.column("norm_lap_u")[1:]
    du = result.column("norm_du_alpha")[1:]
    nv = result.column("norm_v_l2")
    max_energy = float(np.max(na**2))
    dissipation = float(cfg.k * cfg.nu * np.sum(grad**2 + alpha**2 * lap**2))
    increments = float(0.5 * np.sum(du**2))
    return {
        "max_energy": max_energy,
        "dissipation": dissipation,
        "increments": increments,
        "max_energy_sq": max_energy**2,
        "dissipation_sq": dissipation**2,
        "max_v_energy": float(np.max(nv**2)),
    }


def estimate_energy_stats(cfg, model="lans", n_paths=None, context=None):
    """Monte Carlo estimates of the trajectory energy functionals.

    Returns {statistic: McEstimate}.  Paths are the independent noise
    substreams 0..n_paths-1 of cfg.seed.
    """
    n_paths = cfg.paths if n_paths is None else int(n_paths)
    context = context or get_context(cfg)
    samples = {name: np.zeros(n_paths) for name in ENERGY_STATISTICS}
    for p in range(n_paths):
        res = run_path(cfg, path=p, model=model, context=context)
        for name, value in path_energy_statistics(cfg, res).items():
            samples[name][p] = value
    return {name: McEstimate.from_samples(vals) for name, vals in samples.items()}


V_STATISTICS = (
    "v_over_u",       # max_m |V^m|_{L2} / |U^m|_alpha  (steps with |U|_a > 1e-14)
    "v_time_mean",    # k sum_m |V^m|_{L2}^2
)


def path_v_statistics(cfg, result):
    """Data-side functionals of one trajectory.

    ``v_over_u`` probes the pathwise control of the data field by the
    filtered one, which holds with a mesh-independent constant whenever
    alpha is tied to h; steps where |U^m|_alpha <= 1e-14 are skipped
    (0.0 if no step qualifies).  ``v_time_mean`` is the time-integrated
    squared data norm, bounded by the energy estimates whenever
    alpha <= 1.
    """
    na = result.column("norm_u_alpha")[1:]
    nv = result.column("norm_v_l2")[1:]
    valid = na > 1e-14
    ratio = float(np.max(nv[valid] / na[valid])) if valid.any() else 0.0
    return {
        "v_over_u": ratio,
        "v_time_mean": float(cfg.k * np.sum(nv**2)),
    }


def estimate_v_stats(cfg, model="lans", n_paths=None, context=None):
    """Monte Carlo estimates of the data-field functionals."""
    n_paths = cfg.paths if n_paths is None else int(n_paths)
    context = context or get_context(cfg)
    samples = {name: np.zeros(n_paths) for name in V_STATISTICS}
    for p in range(n_paths):
        res = run_path(cfg, path=p, model=model, context=context)
        for name, value in path_v_statistics(cfg, res).items():
            samples[name][p] = value
    return {name: McEstimate.from_samples(vals) for name, vals in samples.items()}


# ---------------------------------------------------------------------------
# regime ladders


def ladder_configs(base_cfg, regime, ns, T, c=0.5, k0=None, L=0.95):
    """Refinement ladder of configs in one of the two theory regimes.

    ``alpha_le_ch``: alpha = c*h on every rung, k halving with h
    (k = k0 * ns[0]/n, default k0 = 4e-3 at n = 8 scaled accordingly).
    ``alpha_fixed``: alpha = 1; by default k = 0.9 h^2 (the canonical
    parabolic coupling, sqrt(k)/h = sqrt(0.9) < 1 on every rung), or
    k halving with h when ``k0`` is given -- then sqrt(k)/h grows toward
    the regime bound L down the ladder, so the constraint is checked
    where it is tightest.  T must be an integer multiple of every k.
    """
    rungs = []
    for n in ns:
        cfg = deepcopy(base_cfg)
        cfg.n = int(n)
        cfg.T = float(T)
        cfg.regime = regime
        cfg.regime_L = L
        if regime == "alpha_le_ch":
            cfg.alpha_rule = "c_times_h"
            cfg.c = c
            base_k = (4e-3 * 8 / ns[0]) if k0 is None else k0
            cfg.k = base_k * ns[0] / n
        elif regime == "alpha_fixed":
            cfg.alpha_rule = "const"
            cfg.alpha = 1.0
            cfg.k = 0.9 * (SQRT2 / n) ** 2 if k0 is None else k0 * ns[0] / n
        else:
            raise ValueError(f"unknown regime {regime!r}")
        rungs.append(cfg.validate())
    return rungs


def uniformity_ladder(base_cfg, regime, ns, T, n_paths, model="lans", **kw):
    """Energy statistics on every rung plus their max/min spread ratios."""
    rungs = ladder_configs(base_cfg, regime, ns, T, **kw)
    table = []
    for cfg in rungs:
        table.append(estimate_energy_stats(cfg, model=model, n_paths=n_paths))
    ratios = {}
    for name in ENERGY_STATISTICS:
        means = np.array([row[name].mean for row in table])
        lo = means.min()
        ratios[name] = float(means.max() / lo) if lo > 0 else np.inf
    return {"rungs": rungs, "stats": table, "spread": ratios}


# ---------------------------------------------------------------------------
# common-random-number model comparison


class _IncrementRecorder:
    """Wraps a noise source and checksums what it hands out."""

    def __init__(self, inner):
        self.inner = inner
        self.checksum = 0.0
        self.calls = 0

    def __call__(self, m):
        s = self.inner(m)
        self.checksum += float(s @ s)
        self.calls += 1
        return s


def compare_models(cfg, n_paths=None, context=None):
    """Pathwise distance between the filtered and unfiltered models.

    Both models integrate the same trajectories of the same Wiener
    process (identical seed/path substreams), so the squared
    time-integrated L2 distance

        D_p = k * sum_m |V^m_filtered - v^m_reference|_{L2}^2

    measures only the effect of the filter.  Returns the McEstimate of D
    plus the per-path samples and the noise checksums that certify the
    coupling.
    """
    n_paths = cfg.paths if n_paths is None else int(n_paths)
    context = context or get_context(cfg)
    ops = context.ops
    k = cfg.k
    samples = np.zeros(n_paths)
    coupling_ok = True
    for p in range(n_paths):
        sources = []
        if context.sampler is not None:
            sampler, noise = context.sampler, context.noise

            def base(m, _p=p):
                return sampler.realize(noise.increment(m, k, _p))

            rec_a, rec_b = _IncrementRecorder(base), _IncrementRecorder(base)
            sources = [rec_a, rec_b]
        else:
            rec_a = rec_b = None
        ra = run_path(cfg, path=p, model="lans", context=context,
                      increment_field=rec_a, keep_history=True)
        rb = run_path(cfg, path=p, model="nse", context=context,
                      increment_field=rec_b, keep_history=True)
        if sources and not np.isclose(rec_a.checksum, rec_b.checksum, rtol=0, atol=0):
            coupling_ok = False
        total = 0.0
        for (_, V_l), (v_n, _) in zip(ra.history, rb.history):
            diff = V_l - v_n
            total += k * ops.l2_norm(diff) ** 2
        samples[p] = total
    return {
        "estimate": McEstimate.from_samples(samples),
        "samples": samples,
        "coupled": coupling_ok,
    }


def coupling_ladder(base_cfg, ns, T, n_paths, c=0.5, k0=None):
    """compare_models on every rung of an alpha = c*h ladder."""
    rungs = ladder_configs(base_cfg, "alpha_le_ch", ns, T, c=c, k0=k0)
    rows = []
    for cfg in rungs:
        rows.append(compare_models(cfg, n_paths=n_paths))
    return {"rungs": rungs, "rows": rows}


# ---------------------------------------------------------------------------
# nested-mesh prolongation and self-convergence


# scalar node positions of a child cell in parent barycentric coordinates:
# rows = [3 vertices, 3 edge midpoints opposite them], one table per child
# (children stacked by refine_uniform as [corner0 | corner1 | corner2 | center])
def _child_parent_barys():
    mids = {(0, 1): np.array([0.5, 0.5, 0.0]),
            (1, 2): np.array([0.0, 0.5, 0.5]),
            (2, 0): np.array([0.5, 0.0, 0.5])}
    e = np.eye(3)
    corners = [
        [e[0], mids[(0, 1)], mids[(2, 0)]],
        [e[1], mids[(1, 2)], mids[(0, 1)]],
        [e[2], mids[(2, 0)], mids[(1, 2)]],
        [mids[(1, 2)], mids[(2, 0)], mids[(0, 1)]],
    ]
    tables = []
    for verts in corners:
        verts = np.asarray(verts)
        nodes = np.vstack([
            verts,
            0.5 * (verts[1] + verts[2]),
            0.5 * (verts[2] + verts[0]),
            0.5 * (verts[0] + verts[1]),
        ])
        tables.append(nodes)
    return np.asarray(tables)  # (4, 6, 3)


_CHILD_TABLES = _child_parent_barys()


def scalar_prolongation(coarse_space, fine_space):
    """Exact interpolation matrix from coarse to fine quadratic dofs.

    Requires ``fine_space`` to live on ``refine_uniform(coarse_space.mesh)``
    so that every fine cell c descends from coarse cell c % nc.  Quadratics
    restricted to child cells stay quadratic, so the map is exact.
    """
    nc = coarse_space.mesh.n_cells
    if fine_space.mesh.n_cells != 4 * nc:
        raise ValueError("fine mesh is not the uniform refinement of the coarse mesh")
    # geometric check of the descent map: every fine vertex must sit inside
    # its parent cell (cell counts alone cannot tell unrelated meshes apart)
    cmesh, fmesh = coarse_space.mesh, fine_space.mesh
    parents = np.tile(np.arange(nc), 4)
    p0 = cmesh.vertices[cmesh.cells[parents, 0]]
    edges = np.stack([cmesh.vertices[cmesh.cells[parents, 1]] - p0,
                      cmesh.vertices[cmesh.cells[parents, 2]] - p0], axis=2)
    for j in range(3):
        rel = fmesh.vertices[fmesh.cells[:, j]] - p0
        lam = np.linalg.solve(edges, rel[:, :, None])[:, :, 0]
        bad = (lam.min(axis=1) < -1e-10) | (lam.sum(axis=1) > 1 + 1e-10)
        if np.any(bad):
            raise ValueError("fine mesh is not the uniform refinement of the coarse mesh")
    basis = fem._basis_values  # local P2 values at given barycentric points
    rows, cols, vals = [], [], []
    for child in range(4):
        table = _CHILD_TABLES[child]            # (6 fine nodes, 3 barys)
        values = basis(2, table)                # (6 coarse basis, 6 nodes)
        fine_cells = np.arange(child * nc, (child + 1) * nc)
        fdof = fine_space.vel_dofmap[fine_cells]     # (nc, 6)
        cdof = coarse_space.vel_dofmap[np.arange(nc)]
        for a in range(6):                      # fine local node
            for b in range(6):                  # coarse local basis
                v = values[b, a]
                if abs(v) < 1e-14:
                    continue
                rows.append(fdof[:, a])
                cols.append(cdof[:, b])
                vals.append(np.full(nc, v))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    # duplicate (row, col) entries from shared nodes carry identical values;
    # keep the first of each
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    keep = np.ones(rows.size, dtype=bool)
    keep[1:] = (np.diff(rows) != 0) | (np.diff(cols) != 0)
    P = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])),
                      shape=(fine_space.n_scalar, coarse_space.n_scalar))
    return P


def prolong_velocity(P, u, coarse_space, fine_space):
    ux, uy = coarse_space.velocity_components(u)
    return np.concatenate([P @ ux, P @ uy])


def refinement_chain(n0, levels):
    """Meshes [mesh(n0), refine(mesh), ...] nested by construction."""
    meshes = [triangulate_unit_square(n0)]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


def self_convergence(base_cfg, n0, levels, T, n_paths=0, model="lans"):
    """Trajectory differences between successive rungs of a nested ladder.

    Rung i lives on the i-times refined mesh with k_i = 0.9 h_i^2 (so k
    shrinks by exactly 4 per rung) and all rungs integrate the same
    Brownian path: the coarse increment over a step is the sum of the
    finest-rung increments it spans.  For each neighbouring pair the
    squared distance

        D = k_coarse * sum_m |u_fine(t_m)|interp-coarse diff|_{L2(fine)}^2

    is evaluated at the coarse times on the finer mesh.  n_paths = 0 runs
    a single deterministic trajectory (noise off); otherwise one sample
    per path with paired differences.
    """
    meshes = refinement_chain(n0, levels)
    cfgs, ctxs = [], []
    for i, mesh in enumerate(meshes):
        cfg = deepcopy(base_cfg)
        cfg.n = n0 * 2**i
        cfg.T = float(T)
        cfg.k = 0.9 * (SQRT2 / cfg.n) ** 2
        if n_paths == 0:
            cfg.g = "none"
        cfg.validate()
        cfgs.append(cfg)
        ctxs.append(SimContext(cfg, mesh=mesh))
    prolong = [scalar_prolongation(ctxs[i].space, ctxs[i + 1].space)
               for i in range(levels - 1)]

    k_fine = cfgs[-1].k
    substeps = [int(round(cfg.k / k_fine)) for cfg in cfgs]

    def sources(path):
        out = []
        for cfg, ctx, s in zip(cfgs, ctxs, substeps):
            if n_paths == 0 or ctx.sampler is None:
                out.append(None)
                continue
            sampler, noise = ctx.sampler, ctx.noise

            def inc(m, sampler=sampler, noise=noise, s=s, path=path):
                return sampler.realize(noise.aggregated_increment(m, s, k_fine, path))

            out.append(inc)
        return out

    n_runs = max(1, n_paths)
    diffs = np.zeros((n_runs, levels - 1))
    for p in range(n_runs):
        incs = sources(p)
        results = [run_path(cfgs[i], path=p, model=model, context=ctxs[i],
                            increment_field=incs[i], keep_history=True)
                   for i in range(levels)]
        for i in range(levels - 1):
            coarse, fine = results[i], results[i + 1]
            cs, fs = ctxs[i].space, ctxs[i + 1].space
            ops_f = ctxs[i + 1].ops
            stride = int(round(cfgs[i].k / cfgs[i + 1].k))
            total = 0.0
            for m in range(1, cfgs[i].n_steps + 1):
                uc = coarse.history[m - 1][0]
                uf = fine.history[m * stride - 1][0]
                diff = uf - prolong_velocity(prolong[i], uc, cs, fs)
                total += cfgs[i].k * ops_f.l2_norm(diff) ** 2
            diffs[p, i] = total
    out = {"configs": cfgs, "diffs": diffs}
    if n_paths > 0:
        out["pairs"] = [McEstimate.from_samples(diffs[:, i]) for i in range(levels - 1)]
        # paired decreases between neighbouring refinement gaps
        out["drops"] = [McEstimate.from_samples(diffs[:, i] - diffs[:, i + 1])
                        for i in range(levels - 2)]
    return out


# ---------------------------------------------------------------------------
# inf-sup probe


@dataclass
class InfSupResult:
    n: int
    velocity_degree: int
    beta: float          # square root of the smallest eigenvalue beyond the kernel
    kernel_dim: int      # pressure modes invisible to the velocity space
    eigenvalues: np.ndarray


def infsup_constant(n, velocity_degree=2, kernel_tol=1e-7):
    """Discrete inf-sup constant of the velocity/pressure pairing.

    beta_h^2 is the smallest nonzero eigenvalue of the pressure Schur
    complement B A^{-1} B^T (A the vector stiffness on the zero-trace
    velocity space) generalized against the pressure mass matrix.  A
    stable pairing has kernel dimension exactly 1 (constant pressures);
    spurious extra kernel modes and a beta decaying under refinement are
    the instability signatures.
    """
    mesh = triangulate_unit_square(n)
    space = fem.MixedSpace(mesh, velocity_degree=velocity_degree,
                           quad_degree=4 if velocity_degree == 2 else 2,
                           form_quad_degree=5 if velocity_degree == 2 else 4)
    ops = FlowOperators(space)
    keep = np.setdiff1d(np.arange(space.n_velocity), ops.dirichlet)
    A = ops.K.toarray()[np.ix_(keep, keep)]
    B = ops.B.toarray()[:, keep]
    Mp = ops.Mp.toarray()
    S = B @ dla.solve(A, B.T, assume_a="pos")
    w = np.clip(dla.eigh(S, Mp, eigvals_only=True), 0.0, None)
    roots = np.sqrt(w)
    kernel = int(np.sum(roots < kernel_tol))
    beta = float(roots[kernel]) if kernel < roots.size else 0.0
    return InfSupResult(n, velocity_degree, beta, kernel, roots)


def infsup_table(ns, velocity_degree=2):
    return [infsup_constant(n, velocity_degree=velocity_degree) for n in ns]
