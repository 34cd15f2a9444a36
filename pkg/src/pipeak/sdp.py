"""Semidefinite program container, solver adapters, and file export.

A :class:`ConicProgram` is the fully numeric target of the certificate
compiler: block-diagonal PSD (and free) variable blocks, sparse linear
equality constraints over the stacked block entries, and a linear objective.
Columns enumerate the upper-triangular entries of each PSD block (row-major)
followed by the entries of free blocks, in block creation order.

Solving goes through cvxpy with a selectable backend (CLARABEL by default,
CVXOPT and SCS as alternatives).  Every returned solution carries an
independent feasibility re-check computed here from the raw data, so a
misbehaving solver cannot silently certify garbage.  Programs can also be
exported to the SDPA sparse format and read back for cross-solver runs.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp


@dataclass
class Block:
    name: str
    kind: str  # "psd" | "free"
    size: int

    @property
    def ncols(self):
        return self.size * (self.size + 1) // 2 if self.kind == "psd" else self.size


def tri_indices(q):
    """Upper-triangle (row-major) index pairs of a q x q matrix."""
    rows, cols = [], []
    for i in range(q):
        for j in range(i, q):
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


@dataclass
class ConicProgram:
    """min c.u  s.t.  A u = b,  each PSD block's matrix >= 0."""

    blocks: list
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def ncols(self):
        return sum(bl.ncols for bl in self.blocks)

    @property
    def nrows(self):
        return self.A.shape[0]

    def block_offset(self, name):
        off = 0
        for bl in self.blocks:
            if bl.name == name:
                return off, bl
            off += bl.ncols
        raise KeyError(name)

    def block_value(self, x, name):
        """Extract a block from a column vector (symmetric matrix for PSD)."""
        off, bl = self.block_offset(name)
        vals = x[off : off + bl.ncols]
        if bl.kind == "free":
            return vals.copy()
        M = np.zeros((bl.size, bl.size))
        iu, ju = tri_indices(bl.size)
        M[iu, ju] = vals
        M[ju, iu] = vals
        return M

    def stats(self):
        return {
            "columns": int(self.ncols),
            "rows": int(self.nrows),
            "nnz": int(self.A.nnz),
            "psd_blocks": [bl.size for bl in self.blocks if bl.kind == "psd"],
            "free_columns": int(sum(bl.size for bl in self.blocks if bl.kind == "free")),
        }


@dataclass
class Solution:
    status: str  # "optimal" | "inaccurate" | "infeasible" | "unbounded" | "error"
    objective: Optional[float]
    x: Optional[np.ndarray]
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "optimal"


def verify_solution(prog, x, eq_tol=1e-6, psd_tol=1e-6):
    """Independent feasibility check of a candidate solution vector.

    Tolerances are relative: the equality residual is measured against the
    right-hand side scale and each block's minimum eigenvalue against that
    block's magnitude, so boundary-degenerate optima are not misflagged.
    """
    res = prog.A @ x - prog.b
    eq_res = float(np.max(np.abs(res))) if len(res) else 0.0
    min_rel = np.inf
    min_eig = np.inf
    worst = None
    for bl in prog.blocks:
        if bl.kind != "psd" or bl.size == 0:
            continue
        M = prog.block_value(x, bl.name)
        ev = float(np.linalg.eigvalsh(M)[0])
        rel = ev / (1.0 + float(np.max(np.abs(M))))
        if rel < min_rel:
            min_rel, min_eig, worst = rel, ev, bl.name
    scale = 1.0 + (float(np.max(np.abs(prog.b))) if len(prog.b) else 0.0)
    passed = eq_res <= eq_tol * scale and (min_rel == np.inf or min_rel >= -psd_tol)
    return {
        "eq_residual": eq_res,
        "min_eigenvalue": None if min_eig == np.inf else min_eig,
        "worst_block": worst,
        "feasible": bool(passed),
    }


# ----------------------------------------------------------------------
# cvxpy adapters
# ----------------------------------------------------------------------

_SOLVER_OPTS = {
    "CLARABEL": {"max_iter": 200},
    "CVXOPT": {"max_iters": 200, "abstol": 1e-8, "reltol": 1e-8, "feastol": 1e-8},
    "SCS": {"eps": 1e-8, "max_iters": 100000},
}


class CvxpySolver:
    """Reusable cvxpy model of a program, with optional pinned scalars.

    Pinned columns become parameters, so a bisection loop pays the
    canonicalization cost once and re-solves cheaply for each new value.
    """

    def __init__(self, prog, pin=(), solver="CLARABEL"):
        import cvxpy as cp

        self.prog = prog
        self.solver = solver
        self._cp = cp
        pieces = []
        self._mats = {}
        for bl in prog.blocks:
            if bl.kind == "psd":
                if bl.size == 0:
                    continue
                V = cp.Variable((bl.size, bl.size), name=bl.name, PSD=True)
                self._mats[bl.name] = V
                iu, ju = tri_indices(bl.size)
                pieces.append(V[iu, ju])
            else:
                v = cp.Variable(bl.size, name=bl.name)
                self._mats[bl.name] = v
                pieces.append(v)
        u = cp.hstack(pieces) if pieces else cp.Variable(0)
        cons = []
        if prog.nrows:
            cons.append(prog.A @ u == prog.b)
        self._params = {}
        scalars = prog.meta.get("scalars", {})
        for name in pin:
            col = scalars[name]
            par = cp.Parameter(name=f"pin_{name}")
            self._params[name] = par
            cons.append(u[col] == par)
        obj = cp.Minimize(prog.c @ u if np.any(prog.c) else 0)
        self.problem = cp.Problem(obj, cons)
        self._u = u

    def solve(self, pin_values=None, warm_start=True, **overrides):
        cp = self._cp
        for name, val in (pin_values or {}).items():
            self._params[name].value = float(val)
        opts = dict(_SOLVER_OPTS.get(self.solver, {}))
        opts.update(overrides)
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # accuracy is re-checked below
                self.problem.solve(solver=self.solver, warm_start=warm_start, **opts)
        except cp.error.SolverError as err:
            return Solution("error", None, None, {"solver": self.solver, "message": str(err)})
        wall = time.perf_counter() - t0
        status = self.problem.status
        info = {
            "solver": self.solver,
            "cvxpy_status": status,
            "wall_time": wall,
            "iterations": _iteration_count(self.problem),
        }
        if status in ("infeasible", "infeasible_inaccurate"):
            return Solution("infeasible", None, None, info)
        if status in ("unbounded", "unbounded_inaccurate"):
            return Solution("unbounded", None, None, info)
        if status not in ("optimal", "optimal_inaccurate"):
            return Solution("error", None, None, info)
        x = np.asarray(self._u.value, dtype=float).ravel() if self._u.size else np.zeros(0)
        check = verify_solution(self.prog, x)
        info["verify"] = check
        # The independent feasibility check decides acceptance: a verified
        # point is a sound certificate even if the solver stopped short of
        # its own optimality tolerance (the level is then merely less tight).
        label = "optimal" if check["feasible"] else "inaccurate"
        return Solution(label, float(self.problem.value), x, info)


def _iteration_count(problem):
    try:
        stats = problem.solver_stats
        return int(stats.num_iters) if stats and stats.num_iters is not None else None
    except Exception:
        return None


def solve(prog, solver="CLARABEL", **kw):
    """One-shot convenience wrapper around :class:`CvxpySolver`."""
    return CvxpySolver(prog, solver=solver).solve(**kw)


# ----------------------------------------------------------------------
# SDPA sparse format
# ----------------------------------------------------------------------
#
# The program is written in the standard LMI ("dual") form used by .dat-s
# files:  min c.y  s.t.  sum_i y_i F_i - F0 >= 0 block-diagonally.  Our PSD
# blocks map to matrix blocks with elementary F_i; the equality rows A u = b
# become a paired diagonal block enforcing both inequalities.  Floats are
# written with 17 significant digits, so reading the file back reproduces the
# program bit-exactly.


def write_sdpa(prog, path):
    lines = [f'"generated by pipeak: {prog.meta.get("name", "program")}"']
    nvars = prog.ncols
    bsizes = [bl.size for bl in prog.blocks if bl.kind == "psd" and bl.size > 0]
    free_sizes = [bl.size for bl in prog.blocks if bl.kind == "free"]
    neq = prog.nrows
    blocks = list(bsizes)
    # free variables get a paired-diagonal block too (v = p - n split is not
    # needed in LMI form: they are already unconstrained y's)
    if neq:
        blocks.append(-2 * neq)
    lines.append(f"{nvars} = mDIM")
    lines.append(f"{len(blocks)} = nBLOCK")
    lines.append("(" + ", ".join(str(s) for s in blocks) + ") = bLOCKsTRUCT")
    lines.append(" ".join(_fmt(v) for v in prog.c))
    entries = []

    # column -> (psd block, i, j) map
    col = 0
    psd_no = 0
    for bl in prog.blocks:
        if bl.kind == "psd" and bl.size > 0:
            psd_no += 1
            iu, ju = tri_indices(bl.size)
            for k in range(bl.ncols):
                entries.append((col + k + 1, psd_no, int(iu[k]) + 1, int(ju[k]) + 1, 1.0))
            col += bl.ncols
        else:
            col += bl.ncols

    if neq:
        eq_blk = len(blocks)
        Acoo = prog.A.tocoo()
        for r, cidx, v in zip(Acoo.row, Acoo.col, Acoo.data):
            entries.append((int(cidx) + 1, eq_blk, int(r) + 1, int(r) + 1, float(v)))
            entries.append((int(cidx) + 1, eq_blk, neq + int(r) + 1, neq + int(r) + 1, -float(v)))
        for r, v in enumerate(prog.b):
            if v != 0.0:
                entries.append((0, eq_blk, r + 1, r + 1, float(v)))
                entries.append((0, eq_blk, neq + r + 1, neq + r + 1, -float(v)))

    entries.sort()
    for mat, blk, i, j, v in entries:
        lines.append(f"{mat} {blk} {i} {j} {_fmt(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v):
    return f"{float(v):.17g}"


@dataclass
class SdpaData:
    nvars: int
    block_struct: list
    c: np.ndarray
    entries: dict  # (matno, blkno) -> list of (i, j, value), 1-based

    def matrix(self, matno, blkno):
        size = abs(self.block_struct[blkno - 1])
        M = np.zeros((size, size))
        for i, j, v in self.entries.get((matno, blkno), []):
            M[i - 1, j - 1] = v
            M[j - 1, i - 1] = v
        return M


def read_sdpa(path):
    with open(path) as fh:
        raw = [ln.strip() for ln in fh]
    rows = [ln for ln in raw if ln and not ln.startswith(('"', "*"))]
    nvars = int(rows[0].split()[0])
    nblocks = int(rows[1].split()[0])
    struct_txt = rows[2].split("=")[0].strip().strip("(){}")
    block_struct = [int(tok) for tok in struct_txt.replace(",", " ").split()]
    if len(block_struct) != nblocks:
        raise ValueError("block structure line disagrees with nBLOCK")
    c = np.array([float(t) for t in rows[3].replace(",", " ").split()], dtype=float)
    if len(c) != nvars:
        raise ValueError("objective length disagrees with mDIM")
    entries = {}
    for ln in rows[4:]:
        mat, blk, i, j, v = ln.split()
        entries.setdefault((int(mat), int(blk)), []).append((int(i), int(j), float(v)))
    return SdpaData(nvars, block_struct, c, entries)


def solve_sdpa_data(data, solver="CLARABEL"):
    """Solve a generic LMI-form problem read from an SDPA file."""
    import cvxpy as cp

    y = cp.Variable(data.nvars)
    cons = []
    for bidx, size in enumerate(data.block_struct, start=1):
        q = abs(size)
        # gather all entries of this block into one sparse map: vec(F_m)
        rows, cols, vals = [], [], []  # row = i*q+j of the block, col = m
        f0_rows, f0_vals = [], []
        for (mat, blk), ent in data.entries.items():
            if blk != bidx:
                continue
            for i, j, v in ent:
                targets = [(i - 1) * q + (j - 1)]
                if i != j:
                    targets.append((j - 1) * q + (i - 1))
                for t in targets:
                    if mat == 0:
                        f0_rows.append(t)
                        f0_vals.append(v)
                    else:
                        rows.append(t)
                        cols.append(mat - 1)
                        vals.append(v)
        E = sp.csr_matrix((vals, (rows, cols)), shape=(q * q, data.nvars))
        f0 = np.zeros(q * q)
        if f0_rows:
            f0[f0_rows] = f0_vals
        flat = E @ y - f0
        if size > 0:
            S = cp.reshape(flat, (q, q), order="C")
            cons.append((S + S.T) / 2 >> 0)
        else:
            diag_idx = np.arange(q) * q + np.arange(q)
            cons.append(flat[diag_idx] >= 0)
    prob = cp.Problem(cp.Minimize(data.c @ y), cons)
    opts = dict(_SOLVER_OPTS.get(solver, {}))
    prob.solve(solver=solver, **opts)
    status = "optimal" if prob.status in ("optimal", "optimal_inaccurate") else prob.status
    return Solution(status, None if prob.value is None else float(prob.value),
                    None if y.value is None else np.asarray(y.value),
                    {"solver": solver, "cvxpy_status": prob.status})
