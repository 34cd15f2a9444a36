"""Convex programs over integral operators, compiled to semidefinite form.

The decision objects are operator-valued:

* :meth:`LPIProgram.posvar` -- a self-adjoint operator variable constrained
  positive by construction: ``Q = Z* M1 Z + Z* g(s) M2 Z (+ eps I)`` where
  ``Z`` stacks monomial multiplier and running-integral rows, ``M1, M2`` are
  PSD matrix variables, and ``g(s) = (s-a)(b-s)`` is nonnegative exactly on
  the interval.  Both pieces are positive operators for any PSD matrices; the
  weighted one supplies interval-specific (rather than global) positivity,
  without which several of the certificates here would be infeasible.
* :meth:`LPIProgram.freevar` -- an operator with unconstrained polynomial
  kernel coefficients (used for sign-indefinite certificates and controller
  parameters).
* :meth:`LPIProgram.scalar` -- a scalar (e.g. a squared gain level).

Affine operator expressions are sums of sandwiches ``L o V o R`` with known
outer factors.  Constraints are operator equalities or semidefiniteness
requirements; the compiler turns each into linear equations between
polynomial coefficients, introducing a fresh ``Z* W Z`` slack for each
inequality (slack basis degree = expression degree + 1, raised automatically).
Monomials are ordered lexicographically by (slot, row, column, s-power,
theta-power), rows are normalized to unit max coefficient, and exact
duplicate rows (the mirror images of self-adjoint expressions) are dropped,
so compilation is deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .polyalg import PolyMatrix, poly_block
from .piop import PIOperator, compose, injection
from .sdp import Block, ConicProgram

_SLOTS = ("P", "Q1", "Q2", "R0", "R1", "R2")


class CompileError(ValueError):
    pass


class BilinearityError(TypeError):
    """Raised when an expression would multiply two decision objects."""


# ----------------------------------------------------------------------
# decision objects
# ----------------------------------------------------------------------


@dataclass
class PosOpVar:
    name: str
    space: tuple
    domain: tuple
    rows: list  # stacked rows of the basis operator Z
    eps: float
    d0: int
    d1: int
    psatz: bool = True

    @property
    def size(self):
        return len(self.rows)

    @property
    def weighted(self):
        """Whether this variable carries the interval-weighted second block."""
        return self.psatz and self.space[1] > 0

    def expr(self):
        const = None
        if self.eps:
            const = PIOperator.identity(self.space, self.domain).scale(self.eps)
        return AffineExpr(self.space, self.space, self.domain, const,
                          (Term(None, self, None, False, 1.0),))


@dataclass
class FreeOpVar:
    name: str
    dims_in: tuple
    dims_out: tuple
    domain: tuple
    basis: list  # elementary single-monomial operators

    @property
    def size(self):
        return len(self.basis)

    def expr(self):
        return AffineExpr(self.dims_in, self.dims_out, self.domain, None,
                          (Term(None, self, None, False, 1.0),))


@dataclass
class ScalarVar:
    name: str

    def times(self, op):
        """The expression ``value * op`` for a known operator ``op``."""
        return AffineExpr(op.dims_in, op.dims_out, op.domain, None,
                          (Term(None, self, op, False, 1.0),))


@dataclass(frozen=True)
class Term:
    L: Optional[PIOperator]
    var: object
    R: Optional[PIOperator]
    adj: bool
    coef: float


# ----------------------------------------------------------------------
# affine operator expressions
# ----------------------------------------------------------------------


def _chain(L, M, R):
    out = M
    if L is not None:
        out = compose(L, out) if out is not None else None
    if R is not None and out is not None:
        out = compose(out, R)
    return out


class AffineExpr:
    """Operator-valued expression, affine in the decision objects."""

    def __init__(self, dims_in, dims_out, domain, const, terms):
        self.dims_in = tuple(dims_in)
        self.dims_out = tuple(dims_out)
        self.domain = domain
        self.const = const
        self.terms = tuple(terms)

    @classmethod
    def wrap(cls, obj):
        if isinstance(obj, AffineExpr):
            return obj
        if isinstance(obj, (PosOpVar, FreeOpVar)):
            return obj.expr()
        if isinstance(obj, PIOperator):
            return cls(obj.dims_in, obj.dims_out, obj.domain, obj, ())
        raise TypeError(f"cannot use {type(obj).__name__} in an operator expression")

    def __add__(self, other):
        other = AffineExpr.wrap(other)
        if (self.dims_in, self.dims_out) != (other.dims_in, other.dims_out):
            raise ValueError("space mismatch in expression sum")
        if self.const is None:
            const = other.const
        elif other.const is None:
            const = self.const
        else:
            const = self.const + other.const
        return AffineExpr(self.dims_in, self.dims_out, self.domain, const,
                          self.terms + other.terms)

    def __radd__(self, other):
        return AffineExpr.wrap(other) + self

    def __sub__(self, other):
        return self + AffineExpr.wrap(other).scale(-1.0)

    def __rsub__(self, other):
        return AffineExpr.wrap(other) + self.scale(-1.0)

    def __neg__(self):
        return self.scale(-1.0)

    def __matmul__(self, other):
        if isinstance(other, (AffineExpr, PosOpVar, FreeOpVar, ScalarVar)):
            raise BilinearityError("product of two decision expressions is not affine")
        return sandwich(None, self, other)

    def __rmatmul__(self, other):
        if isinstance(other, (AffineExpr, PosOpVar, FreeOpVar, ScalarVar)):
            raise BilinearityError("product of two decision expressions is not affine")
        return sandwich(other, self, None)

    def scale(self, c):
        c = float(c)
        const = None if self.const is None else self.const.scale(c)
        terms = tuple(replace(t, coef=t.coef * c) for t in self.terms)
        return AffineExpr(self.dims_in, self.dims_out, self.domain, const, terms)

    def adjoint(self):
        const = None if self.const is None else self.const.adjoint()
        terms = []
        for t in self.terms:
            newL = t.R.adjoint() if t.R is not None else None
            newR = t.L.adjoint() if t.L is not None else None
            flips = not t.adj if isinstance(t.var, FreeOpVar) else t.adj
            terms.append(Term(newL, t.var, newR, flips, t.coef))
        return AffineExpr(self.dims_out, self.dims_in, self.domain, const, tuple(terms))

    @property
    def H(self):
        return self.adjoint()


def sandwich(L, x, R):
    """The expression ``L o x o R`` with known outer operators (either None)."""
    x = AffineExpr.wrap(x)
    dims_out = x.dims_out if L is None else L.dims_out
    dims_in = x.dims_in if R is None else R.dims_in
    if L is not None and L.dims_in != x.dims_out:
        raise ValueError(f"left factor expects {L.dims_in}, expression outputs {x.dims_out}")
    if R is not None and R.dims_out != x.dims_in:
        raise ValueError(f"right factor outputs {R.dims_out}, expression expects {x.dims_in}")
    const = _chain(L, x.const, R) if x.const is not None else None
    terms = []
    for t in x.terms:
        newL = _chain(L, t.L, None) if t.L is not None else L
        newR = _chain(None, t.R, R) if t.R is not None else R
        terms.append(Term(newL, t.var, newR, t.adj, t.coef))
    return AffineExpr(dims_in, dims_out, x.domain, const, tuple(terms))


def block_expr(entries):
    """Assemble a block operator expression from a nested list.

    Entries may be expressions, known operators, or ``None`` for zero; every
    row and column must contain at least one sized entry.  Blocks concatenate
    with vector components first, matching :func:`pipeak.piop.block2x2`.
    """
    nr = len(entries)
    nc = len(entries[0])
    wrapped = [[None if e is None else AffineExpr.wrap(e) for e in row] for row in entries]
    row_dims = [None] * nr
    col_dims = [None] * nc
    domain = None
    for i in range(nr):
        for j in range(nc):
            e = wrapped[i][j]
            if e is None:
                continue
            domain = e.domain
            if row_dims[i] is None:
                row_dims[i] = e.dims_out
            elif row_dims[i] != e.dims_out:
                raise ValueError(f"row {i} mixes output spaces")
            if col_dims[j] is None:
                col_dims[j] = e.dims_in
            elif col_dims[j] != e.dims_in:
                raise ValueError(f"column {j} mixes input spaces")
    if any(d is None for d in row_dims) or any(d is None for d in col_dims):
        raise ValueError("every block row and column needs at least one entry")
    full_out = (sum(d[0] for d in row_dims), sum(d[1] for d in row_dims))
    full_in = (sum(d[0] for d in col_dims), sum(d[1] for d in col_dims))

    def offsets(dims_list):
        out, om, on = [], 0, 0
        for m, n in dims_list:
            out.append((om, on))
            om += m
            on += n
        return out

    roff, coff = offsets(row_dims), offsets(col_dims)
    total = None
    for i in range(nr):
        inj = injection(row_dims[i], full_out, roff[i], domain)
        for j in range(nc):
            e = wrapped[i][j]
            if e is None:
                continue
            proj = injection(col_dims[j], full_in, coff[j], domain).adjoint()
            piece = sandwich(inj, e, proj)
            total = piece if total is None else total + piece
    return total


# ----------------------------------------------------------------------
# monomial row bases
# ----------------------------------------------------------------------


def interval_weight(domain):
    """``(s - a)(b - s)`` as a 1x1 polynomial: nonnegative exactly on [a, b]."""
    a, b = domain
    return PolyMatrix.from_entries(
        1, 1, {(0, 0, 0, 0): -a * b, (0, 0, 1, 0): a + b, (0, 0, 2, 0): -1.0}, domain
    )


def monomial_rows(space, d0, d1, domain, families=("id", "mult", "volt")):
    """Rows of the positivity basis operator on ``R^m x L2^n``.

    For ``n > 0``: constant rows carrying the vector part, monomial
    multiplier rows ``s^i e_ch`` (i <= d0) and running-integral rows with
    bivariate monomial kernels ``s^i th^j e_ch`` (i + j <= d1), both lower
    and upper.  For a pure vector space the rows are just the coordinate
    projections.  The bivariate integral kernels matter: Gram forms over
    kernels in the integration variable alone span only a thin slice of the
    positive integral operators, and level certificates computed over that
    slice come out far too conservative.

    ``families`` restricts which row groups are produced.  A Gram form over a
    reduced basis spans fewer kernel slots, which matters when the operator
    being matched structurally lacks a slot: keeping the corresponding rows
    would force a diagonal block of the Gram matrix to zero, leaving the
    feasible set with no strictly positive point.
    """
    m, n = space
    rows = []
    if n == 0:
        for i in range(m):
            e = np.zeros((1, m))
            e[0, i] = 1.0
            rows.append(PIOperator((m, 0), (1, 0), domain, P=e))
        return rows
    if "id" in families:
        for i in range(m):
            e = np.zeros((1, m))
            e[0, i] = 1.0
            rows.append(PIOperator((m, n), (0, 1), domain, Q2=PolyMatrix.constant(e, domain)))
    if "mult" in families:
        for d in range(d0 + 1):
            for ch in range(n):
                k = PolyMatrix.from_entries(1, n, {(0, ch, d, 0): 1.0}, domain)
                rows.append(PIOperator((m, n), (0, 1), domain, R0=k))
    if "volt" in families:
        for slot in ("R1", "R2"):
            for i in range(d1 + 1):
                for j in range(d1 + 1 - i):
                    for ch in range(n):
                        k = PolyMatrix.from_entries(1, n, {(0, ch, i, j): 1.0}, domain)
                        rows.append(PIOperator((m, n), (0, 1), domain, **{slot: k}))
    return rows


def _stack_rows(rows):
    """Combine row operators into one stacked operator (for reconstruction)."""
    dims_in = rows[0].dims_in
    domain = rows[0].domain
    if all(r.dims_out == (1, 0) for r in rows):
        P = np.vstack([r.P for r in rows])
        return PIOperator(dims_in, (len(rows), 0), domain, P=P)
    stacked = {nm: poly_block([[getattr(r, nm)] for r in rows])
               for nm in ("Q2", "R0", "R1", "R2")}
    return PIOperator(dims_in, (0, len(rows)), domain, **stacked)


def _freevar_basis(dims_in, dims_out, d0, d1, domain):
    m1, n1 = dims_in
    m2, n2 = dims_out
    ops = []
    if m2 and m1:
        for r in range(m2):
            for c in range(m1):
                P = np.zeros((m2, m1))
                P[r, c] = 1.0
                ops.append(PIOperator(dims_in, dims_out, domain, P=P))
    if m2 and n1:
        for r in range(m2):
            for c in range(n1):
                for d in range(d0 + 1):
                    k = PolyMatrix.from_entries(m2, n1, {(r, c, d, 0): 1.0}, domain)
                    ops.append(PIOperator(dims_in, dims_out, domain, Q1=k))
    if n2 and m1:
        for r in range(n2):
            for c in range(m1):
                for d in range(d0 + 1):
                    k = PolyMatrix.from_entries(n2, m1, {(r, c, d, 0): 1.0}, domain)
                    ops.append(PIOperator(dims_in, dims_out, domain, Q2=k))
    if n2 and n1:
        for r in range(n2):
            for c in range(n1):
                for d in range(d0 + 1):
                    k = PolyMatrix.from_entries(n2, n1, {(r, c, d, 0): 1.0}, domain)
                    ops.append(PIOperator(dims_in, dims_out, domain, R0=k))
        for slot in ("R1", "R2"):
            for r in range(n2):
                for c in range(n1):
                    for p in range(d1 + 1):
                        for q in range(d1 + 1):
                            k = PolyMatrix.from_entries(n2, n1, {(r, c, p, q): 1.0}, domain)
                            ops.append(PIOperator(dims_in, dims_out, domain, **{slot: k}))
    return ops


# ----------------------------------------------------------------------
# the program builder and compiler
# ----------------------------------------------------------------------


@dataclass
class _Constraint:
    name: str
    kind: str  # "psd" | "eq"
    expr: AffineExpr


class LPIProgram:
    """Collects operator variables and constraints; compiles to a ConicProgram."""

    def __init__(self, domain, name="lpi"):
        self.domain = (float(domain[0]), float(domain[1]))
        self.name = name
        self.posvars = {}
        self.freevars = {}
        self.scalars = {}
        self.constraints = []
        self.objective = {}  # scalar name -> weight

    def posvar(self, name, space, d0=2, d1=2, eps=0.0, psatz=True):
        rows = monomial_rows(space, d0, d1, self.domain)
        v = PosOpVar(name, tuple(space), self.domain, rows, float(eps), d0, d1, psatz)
        self._register(name)
        self.posvars[name] = v
        return v

    def freevar(self, name, dims_in, dims_out, d0=4, d1=4):
        basis = _freevar_basis(tuple(dims_in), tuple(dims_out), d0, d1, self.domain)
        if not basis:
            raise ValueError("free operator variable has no kernel slots")
        v = FreeOpVar(name, tuple(dims_in), tuple(dims_out), self.domain, basis)
        self._register(name)
        self.freevars[name] = v
        return v

    def scalar(self, name):
        v = ScalarVar(name)
        self._register(name)
        self.scalars[name] = v
        return v

    def _register(self, name):
        if name in self.posvars or name in self.freevars or name in self.scalars:
            raise ValueError(f"duplicate variable name {name!r}")

    def require_psd(self, expr, name):
        expr = AffineExpr.wrap(expr)
        if expr.dims_in != expr.dims_out:
            raise ValueError("semidefiniteness needs a square operator expression")
        self.constraints.append(_Constraint(name, "psd", expr))

    def require_eq(self, expr, name):
        self.constraints.append(_Constraint(name, "eq", AffineExpr.wrap(expr)))

    def minimize(self, scalar, weight=1.0):
        self.objective[scalar.name if isinstance(scalar, ScalarVar) else scalar] = float(weight)

    # -- compilation ----------------------------------------------------

    def compile(self, slack_cap=12, slack_min=1):
        """Compile to a :class:`pipeak.sdp.ConicProgram`.

        ``slack_min`` raises the minimum slack basis degree: inequality
        certificates can only get tighter with a richer slack, at the cost of
        a larger program.
        """
        comp = _Compiler(self, slack_cap, slack_min)
        return comp.run()


class _Compiler:
    def __init__(self, program, slack_cap, slack_min=1):
        self.p = program
        self.slack_cap = slack_cap
        self.slack_min = slack_min
        self.blocks = []
        self.block_offsets = {}
        self.ncols = 0
        self.meta_vars = {}
        self._tri_cache = {}
        self._seen = {}  # row signature -> row index, global across constraints

    # -- column bookkeeping ---------------------------------------------

    def _add_block(self, name, kind, size, record=None):
        bl = Block(name, kind, size)
        self.block_offsets[name] = self.ncols
        self.blocks.append(bl)
        self.ncols += bl.ncols
        if record is not None:
            self.meta_vars[name] = record
        return bl

    def _tri_map(self, name, q):
        if name not in self._tri_cache:
            off = self.block_offsets[name]
            idx = {}
            k = 0
            for i in range(q):
                for j in range(i, q):
                    idx[(i, j)] = off + k
                    k += 1
            self._tri_cache[name] = idx
        return self._tri_cache[name]

    def run(self):
        p = self.p
        for name, v in p.posvars.items():
            self._add_block(name, "psd", v.size,
                            {"kind": "posop", "space": v.space, "d0": v.d0, "d1": v.d1,
                             "eps": v.eps, "psatz": v.weighted})
            if v.weighted:
                self._add_block(f"{name}::w", "psd", v.size, {"kind": "posop_weighted"})
        for name, v in p.freevars.items():
            self._add_block(name, "free", v.size, {"kind": "freeop"})
        scalar_cols = {}
        for name in p.scalars:
            self._add_block(name, "free", 1, {"kind": "scalar"})
            scalar_cols[name] = self.block_offsets[name]

        rows_A, cols_A, vals_A, bvals = [], [], [], []
        row_base = 0
        con_meta = {}
        for con in p.constraints:
            tri, const, slack_info = self._constraint_columns(con)
            r0 = row_base
            row_base = self._emit(con, tri, const, rows_A, cols_A, vals_A, bvals, row_base)
            con_meta[con.name] = {"kind": con.kind, "rows": [r0, row_base], **slack_info}

        A = sp.csr_matrix(
            (vals_A, (rows_A, cols_A)), shape=(row_base, self.ncols)
        )
        b = np.array(bvals, dtype=float)
        A, b, kept = _drop_dependent_rows(A, b)
        c = np.zeros(self.ncols)
        for name, w in p.objective.items():
            c[scalar_cols[name]] = w
        meta = {
            "name": p.name,
            "scalars": scalar_cols,
            "vars": self.meta_vars,
            "constraints": con_meta,
            "domain": p.domain,
            "rows_emitted": int(row_base),
            "rows_kept": int(kept),
        }
        return ConicProgram(self.blocks, A, b, c, meta)

    # -- per-constraint work ---------------------------------------------

    def _constraint_columns(self, con):
        expr = con.expr
        tri = {}  # global column -> {slotkey: coeff}
        const = {}
        if expr.const is not None:
            _scatter(expr.const, 1.0, const)
        for t in expr.terms:
            if isinstance(t.var, PosOpVar):
                self._posvar_term(t, tri)
            elif isinstance(t.var, FreeOpVar):
                self._freevar_term(t, tri)
            elif isinstance(t.var, ScalarVar):
                if t.L is None and t.R is None:
                    raise CompileError("scalar variable needs an operator factor")
                op = t.L if t.R is None else (t.R if t.L is None else compose(t.L, t.R))
                col = self.block_offsets[t.var.name]
                _scatter(op.scale(t.coef), 1.0, tri.setdefault(col, {}))
            else:
                raise TypeError(f"unknown variable type {type(t.var)}")

        slack_info = {}
        if con.kind == "psd":
            deg = _max_degree(tri, const)
            # Gram products of degree-d rows reach kernel degree ~2d+1, so the
            # matching basis only needs about half the expression degree.
            want = (deg + 1) // 2 + 1
            d = min(max(want, self.slack_min), self.slack_cap)
            if want > self.slack_cap:
                warnings.warn(
                    f"constraint {con.name!r}: slack degree {want} capped at {self.slack_cap}"
                )
            space = expr.dims_in
            fams = _slack_families(space, tri, const)
            rows = monomial_rows(space, d, d, self.p.domain, families=fams)
            nm = f"{con.name}::slack"
            self._add_block(nm, "psd", len(rows),
                            {"kind": "slack", "space": space, "d0": d, "d1": d,
                             "families": list(fams)})
            self._pairwise_products(rows, nm, None, None, 1.0, tri, sign=-1.0)
            if space[1] > 0 and ("mult" in fams or "volt" in fams):
                nmw = f"{nm}::w"
                self._add_block(nmw, "psd", len(rows), {"kind": "slack_weighted"})
                mid = PIOperator.multiplier(interval_weight(self.p.domain))
                self._pairwise_products(rows, nmw, None, None, 1.0, tri, sign=-1.0, mid=mid)
            slack_info = {"slack_block": nm, "slack_degree": d, "expr_degree": deg,
                          "families": list(fams)}
        return tri, const, slack_info

    def _posvar_term(self, t, tri):
        v = t.var
        Ladj = t.L.adjoint() if t.L is not None else None
        self._pairwise_products(v.rows, v.name, Ladj, t.R, t.coef, tri, sign=1.0)
        if v.weighted:
            mid = PIOperator.multiplier(interval_weight(self.p.domain))
            self._pairwise_products(v.rows, f"{v.name}::w", Ladj, t.R, t.coef, tri,
                                    sign=1.0, mid=mid)

    def _pairwise_products(self, rows, block_name, Ladj, R, coef, tri, sign, mid=None):
        """Scatter coefficients of  L o (sum_ij M_ij row_i* [mid] row_j) o R."""
        U = [compose(r, Ladj) if Ladj is not None else r for r in rows]
        V = [compose(r, R) if R is not None else r for r in rows]
        if mid is not None:
            V = [compose(mid, v) for v in V]
        Uadj = [u.adjoint() for u in U]
        cols = self._tri_map(block_name, len(rows))
        for i in range(len(rows)):
            for j in range(i, len(rows)):
                op = compose(Uadj[i], V[j])
                if i != j:
                    op = op + compose(Uadj[j], V[i])
                _scatter(op, sign * coef, tri.setdefault(cols[(i, j)], {}))

    def _freevar_term(self, t, tri):
        v = t.var
        off = self.block_offsets[v.name]
        for k, F in enumerate(v.basis):
            op = F.adjoint() if t.adj else F
            op = _chain(t.L, op, t.R)
            _scatter(op.scale(t.coef), 1.0, tri.setdefault(off + k, {}))

    # -- equation emission ------------------------------------------------

    def _emit(self, con, tri, const, rows_A, cols_A, vals_A, bvals, row_base):
        # column-relative magnitude filter
        for col, entries in tri.items():
            if not entries:
                continue
            mx = max(abs(v) for v in entries.values())
            drop = [k for k, v in entries.items() if abs(v) <= 1e-12 * mx]
            for k in drop:
                del entries[k]
        cmax = max((abs(v) for v in const.values()), default=0.0)
        const = {k: v for k, v in const.items() if abs(v) > 1e-12 * max(1.0, cmax)}

        keys = set(const)
        for entries in tri.values():
            keys.update(entries)
        keys = sorted(keys, key=lambda k: (_SLOTS.index(k[0]),) + k[1:])
        key_to_local = {k: i for i, k in enumerate(keys)}

        per_row = [dict() for _ in keys]
        for col, entries in tri.items():
            for k, v in entries.items():
                per_row[key_to_local[k]][col] = per_row[key_to_local[k]].get(col, 0.0) + v
        brow = np.zeros(len(keys))
        for k, v in const.items():
            brow[key_to_local[k]] = -v

        if con.kind == "psd":
            rows_out = self._symmetrize_rows(keys, key_to_local, per_row, brow)
        else:
            rows_out = list(zip(per_row, brow))

        emitted = row_base
        for entries, bval in rows_out:
            scale = max(max((abs(v) for v in entries.values()), default=0.0), abs(bval))
            # drop cancellation dust left by the symmetric/antisymmetric split
            entries = {c: v for c, v in entries.items() if abs(v) > 1e-11 * scale}
            if scale <= 1e-14:
                continue
            if not entries:
                if abs(bval) > 1e-11 * scale:
                    raise CompileError(
                        f"constraint {con.name!r}: constant term has coefficient support "
                        f"outside every decision variable"
                    )
                continue
            # canonical sign, so a row and its negation deduplicate together
            lead = entries[min(entries)]
            if lead < 0 or (lead == 0 and bval < 0):
                scale = -scale
            norm_entries = tuple(sorted((c, round(v / scale, 12)) for c, v in entries.items()))
            sig = (norm_entries, round(bval / scale, 12))
            if sig in self._seen:
                continue
            self._seen[sig] = emitted
            for c, v in entries.items():
                rows_A.append(emitted)
                cols_A.append(c)
                vals_A.append(v / scale)
            bvals.append(bval / scale)
            emitted += 1
        return emitted

    @staticmethod
    def _symmetrize_rows(keys, key_to_local, per_row, brow):
        """Split paired-monomial rows into symmetric and antisymmetric parts.

        The Gram form of a slack is symmetric, so its columns cancel exactly
        in the antisymmetric combination; the antisymmetric rows then involve
        only the operator variables.  Shared sub-expressions in different
        constraints produce the *same* antisymmetric rows, which the global
        deduplication can drop -- matching the raw key rows instead would
        leave those dependencies inside the equality system as hidden rank
        deficiency.
        """
        out = []
        done = set()
        for ridx, k in enumerate(keys):
            if ridx in done:
                continue
            done.add(ridx)
            km = _mirror_key(k)
            midx = key_to_local.get(km)
            if km == k or midx is None:
                out.append((per_row[ridx], brow[ridx]))
                continue
            done.add(midx)
            a, bv_a = per_row[ridx], brow[ridx]
            b, bv_b = per_row[midx], brow[midx]
            sym, anti = dict(a), dict(a)
            for c, v in b.items():
                sym[c] = sym.get(c, 0.0) + v
                anti[c] = anti.get(c, 0.0) - v
            out.append((sym, bv_a + bv_b))
            out.append((anti, bv_a - bv_b))
        return out


def _drop_dependent_rows(A, b, tol=1e-12):
    """Keep a maximal independent subset of equality rows.

    Symmetrization and deduplication remove the systematic duplicates, but
    polynomial identities among integral-kernel products still leave a few
    linearly dependent rows, and a rank-deficient equality system degrades
    interior-point solvers to the point of failure.  Rows are normalized, so
    the Gram pivots of ``A A^T`` give a reliable independence test; the
    dropped rows are implied by the kept ones (the right-hand side is
    consistent by construction), and the certificate-level checks downstream
    do not depend on the reduced system.
    """
    nrows = A.shape[0]
    if nrows == 0:
        return A, b, 0
    G = (A @ A.T).toarray()
    c, piv, rank, info = lapack.dpstrf(G, lower=1)
    if info < 0:
        raise CompileError(f"row-independence factorization failed (info={info})")
    diag = np.abs(np.diag(c))
    scale = max(diag[0], 1.0)
    while rank > 0 and diag[rank - 1] <= tol * scale:
        rank -= 1
    keep = np.sort(piv[:rank] - 1)
    if len(keep) == nrows:
        return A, b, nrows
    return A[keep], b[keep], int(len(keep))


def _mirror_key(k):
    """The monomial key of the adjoint's matching coefficient."""
    slot, r, c, i, j = k
    if slot == "P":
        return ("P", c, r, i, j)
    if slot == "Q1":
        return ("Q2", c, r, i, j)
    if slot == "Q2":
        return ("Q1", c, r, i, j)
    if slot == "R0":
        return ("R0", c, r, i, j)
    if slot == "R1":
        return ("R2", c, r, j, i)
    return ("R1", c, r, j, i)


def _slack_families(space, tri, const):
    """Slack row families justified by the expression's own slot support.

    A family enters only when its diagonal Gram contribution (id -> P,
    mult -> R0, volt -> R1/R2) appears in the expression; otherwise the
    matching equality would pin a whole diagonal block of the slack Gram
    matrix to zero and the cone would have no strict interior.
    """
    support = set()
    for entries in list(tri.values()) + [const]:
        for k in entries:
            support.add(k[0])
    fams = []
    if space[0] and "P" in support:
        fams.append("id")
    if space[1] and "R0" in support:
        fams.append("mult")
    if space[1] and ("R1" in support or "R2" in support):
        fams.append("volt")
    return tuple(fams)


def _scatter(op, coef, bucket):
    """Accumulate an operator's monomial coefficients into a slot-key map."""
    if op.P.size:
        mx = np.max(np.abs(op.P))
        if mx > 0:
            for (r, c) in zip(*np.nonzero(np.abs(op.P) > 1e-14 * mx)):
                k = ("P", int(r), int(c), 0, 0)
                bucket[k] = bucket.get(k, 0.0) + coef * op.P[r, c]
    for slot in ("Q1", "Q2", "R0", "R1", "R2"):
        arr = getattr(op, slot).coeffs
        if not arr.size:
            continue
        mx = np.max(np.abs(arr))
        if mx == 0:
            continue
        idx = np.argwhere(np.abs(arr) > 1e-14 * mx)
        for r, c, i, j in idx:
            k = (slot, int(r), int(c), int(i), int(j))
            bucket[k] = bucket.get(k, 0.0) + coef * arr[r, c, i, j]


def _max_degree(tri, const):
    """Largest total kernel degree appearing in the scattered coefficients."""
    deg = 0
    for entries in list(tri.values()) + [const]:
        for (slot, r, c, i, j) in entries:
            if slot != "P":
                deg = max(deg, i + j)
    return deg


# ----------------------------------------------------------------------
# witness reconstruction
# ----------------------------------------------------------------------


def assemble_posvar(var, M, Mw=None):
    """Numeric operator ``Z* M Z + Z* g Mw Z + eps I`` from solved matrices."""
    Z = _stack_rows(var.rows)
    K = len(var.rows)
    if Z.dims_out[1] == 0:
        mid = PIOperator.matrix(M, var.domain)
    else:
        mid = PIOperator((0, K), (0, K), var.domain, R0=PolyMatrix.constant(M, var.domain))
    Q = compose(Z.adjoint(), compose(mid, Z))
    if Mw is not None:
        g = interval_weight(var.domain)
        gM = PolyMatrix(np.einsum("uv,rc->rcuv", g.coeffs[0, 0], np.asarray(Mw)), var.domain)
        midw = PIOperator((0, K), (0, K), var.domain, R0=gM)
        Q = Q + compose(Z.adjoint(), compose(midw, Z))
    if var.eps:
        Q = Q + PIOperator.identity(var.space, var.domain).scale(var.eps)
    return Q


def assemble_freevar(var, coefs):
    """Numeric operator from a freevar's solved coefficient vector."""
    coefs = np.asarray(coefs, dtype=float)
    out = PIOperator.zero(var.dims_in, var.dims_out, var.domain)
    for k, F in enumerate(var.basis):
        if coefs[k] != 0.0:
            out = out + F.scale(coefs[k])
    return out


def solution_operator(prog, sol, var):
    """Extract a decision operator's numeric value from a solution."""
    vals = prog.block_value(sol.x, var.name)
    if isinstance(var, PosOpVar):
        Mw = prog.block_value(sol.x, f"{var.name}::w") if var.weighted else None
        return assemble_posvar(var, vals, Mw)
    return assemble_freevar(var, vals)
