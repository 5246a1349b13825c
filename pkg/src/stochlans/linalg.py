"""Sparse block systems and linear solvers.

A ``BlockSystem`` collects named fields, sparse blocks, right-hand sides,
homogeneous Dirichlet constraints, and zero-mean constraints (appended as
scalar Lagrange multiplier fields), then assembles one CSR matrix.  Both
solve paths recompute the residual from the assembled matrix rather than
trusting the solver's internal report.
"""

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(RuntimeError):
    """A factorization found an exactly singular matrix."""


class BlockSystem:
    """Square block-structured sparse system with named fields.

    Parameters
    ----------
    fields : list of (name, size)
        Ordering fixes the layout of the assembled matrix.
    """

    def __init__(self, fields):
        self.names = [name for name, _ in fields]
        self.sizes = {name: int(size) for name, size in fields}
        self.blocks = {}
        self.rhs = {name: np.zeros(self.sizes[name]) for name in self.names}
        self.pinned = {}

    @property
    def size(self):
        return sum(self.sizes.values())

    def offsets(self):
        off, pos = {}, 0
        for name in self.names:
            off[name] = pos
            pos += self.sizes[name]
        return off

    def set_block(self, row, col, matrix):
        matrix = sp.csr_matrix(matrix)
        expected = (self.sizes[row], self.sizes[col])
        if matrix.shape != expected:
            raise ValueError(f"block ({row},{col}) has shape {matrix.shape}, expected {expected}")
        self.blocks[(row, col)] = matrix

    def set_rhs(self, name, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.sizes[name],):
            raise ValueError(f"rhs for {name} has wrong length")
        self.rhs[name] = vec.copy()

    def add_mean_constraint(self, field, weights, label=None):
        """Append a scalar multiplier enforcing weights . x_field = 0."""
        label = label or f"mean_{field}"
        self.names.append(label)
        self.sizes[label] = 1
        self.rhs[label] = np.zeros(1)
        w = sp.csr_matrix(np.asarray(weights, dtype=float).reshape(1, -1))
        self.blocks[(label, field)] = w
        self.blocks[(field, label)] = w.T.tocsr()
        return label

    def pin(self, field, dofs):
        """Constrain the listed dofs of a field to zero (homogeneous Dirichlet)."""
        dofs = np.asarray(dofs, dtype=np.int64)
        prev = self.pinned.get(field)
        self.pinned[field] = dofs if prev is None else np.union1d(prev, dofs)

    def assemble(self):
        """Assembled (A, b) with constraints applied symmetrically.

        Pinned dofs get identity rows and zeroed columns everywhere, with a
        zero right-hand side entry, so eliminating them does not perturb
        the remaining equations.
        """
        grid = [[None] * len(self.names) for _ in self.names]
        index = {name: i for i, name in enumerate(self.names)}
        for (r, c), mat in self.blocks.items():
            grid[index[r]][index[c]] = mat
        A = sp.bmat(grid, format="csr")
        b = np.concatenate([self.rhs[name] for name in self.names])

        mask = self.pin_mask()
        if mask.min() < 1.0:
            P = sp.diags(mask)
            fix = sp.diags(1.0 - mask)
            A = (P @ A @ P + fix).tocsr()
            b = b * mask
        return A, b

    def pin_mask(self):
        """Vector of ones with zeros at pinned dofs, in assembled layout."""
        off = self.offsets()
        mask = np.ones(self.size)
        for field, dofs in self.pinned.items():
            mask[off[field] + dofs] = 0.0
        return mask

    def split(self, x):
        """Slice a solution vector into a dict keyed by field name."""
        off = self.offsets()
        return {name: x[off[name] : off[name] + self.sizes[name]] for name in self.names}


class SolveReport:
    """Outcome of a linear solve: solution, recomputed residual, diagnostics."""

    def __init__(self, x, residual, converged=True, iterations=0, method="direct", message=""):
        self.x = x
        self.residual = residual
        self.converged = converged
        self.iterations = iterations
        self.method = method
        self.message = message

    def __repr__(self):
        state = "ok" if self.converged else "FAILED"
        return f"SolveReport({self.method}, {state}, residual={self.residual:.3e}, it={self.iterations})"


def relative_residual(A, x, b):
    """norm(b - A x) / norm(b), falling back to the absolute norm for b = 0."""
    r = np.linalg.norm(b - A @ x)
    nb = np.linalg.norm(b)
    return r / nb if nb > 0 else r


def _singular_diagnosis(A):
    A = A.tocsr()
    empty_rows = np.flatnonzero(np.diff(A.indptr) == 0)
    empty_cols = np.flatnonzero(np.diff(A.tocsc().indptr) == 0)
    parts = []
    if empty_rows.size:
        parts.append(f"structurally empty rows {empty_rows[:5].tolist()}")
    if empty_cols.size:
        parts.append(f"structurally empty columns {empty_cols[:5].tolist()}")
    return "; ".join(parts) if parts else "no structurally empty rows/columns; numerical rank loss"


def factorize(A):
    """LU factorization handle with a descriptive singularity error."""
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as err:
        raise SingularSystemError(f"LU factorization failed: {err} ({_singular_diagnosis(A)})") from err


def solve_direct(A, b, factor=None):
    """Sparse LU solve; the report carries the recomputed relative residual."""
    lu = factor if factor is not None else factorize(A)
    x = lu.solve(np.asarray(b, dtype=float))
    return SolveReport(x, relative_residual(A, x, b), method="direct")


def solve_iterative(A, b, tol=1e-10, max_iter=500, preconditioner=None, x0=None):
    """Preconditioned GMRES with an honest convergence report.

    ``preconditioner`` may be a factorization handle (anything with a
    ``solve`` method) or a LinearOperator.  Non-convergence is reported,
    never raised: the best iterate and its recomputed residual come back
    with ``converged=False``.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter <= 0:
        x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
        return SolveReport(x, relative_residual(A, x, b), converged=False, iterations=0,
                           method="gmres", message="iteration budget is zero")
    M = None
    if preconditioner is not None:
        if isinstance(preconditioner, spla.LinearOperator):
            M = preconditioner
        else:
            solver = preconditioner.solve if hasattr(preconditioner, "solve") else preconditioner
            M = spla.LinearOperator((n, n), matvec=solver, dtype=b.dtype)

    count = {"it": 0}

    def cb(_):
        count["it"] += 1

    x, info = spla.gmres(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=M,
                         x0=x0, callback=cb, callback_type="pr_norm")
    res = relative_residual(A, x, b)
    ok = info == 0 and res <= 10 * tol
    msg = "" if ok else f"gmres info={info}, residual {res:.3e} above tol {tol:.1e}"
    return SolveReport(x, res, converged=ok, iterations=count["it"], method="gmres", message=msg)


def ilu_preconditioner(A, drop_tol=1e-5, fill_factor=15):
    """Incomplete LU preconditioner handle for solve_iterative."""
    return spla.spilu(sp.csc_matrix(A), drop_tol=drop_tol, fill_factor=fill_factor)


def dump_matrix(path, A, comment=""):
    """Write a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)


def load_matrix(path):
    return sp.csr_matrix(scipy.io.mmread(str(path)))
