"""Partial integral (4-slot) operators on mixed finite/function spaces.

An operator here acts on pairs ``(x, f)`` with ``x`` a real vector of size
``m`` and ``f`` an ``n``-vector-valued square-integrable function on ``[a, b]``:

    (A (x, f))_vec    = P x + int_a^b Q1(th) f(th) dth
    (A (x, f))_fun(s) = Q2(s) x + R0(s) f(s)
                        + int_a^s R1(s, th) f(th) dth
                        + int_s^b R2(s, th) f(th) dth

with matrix ``P`` and polynomial kernels ``Q1, Q2, R0, R1, R2``.  The class of
such operators is closed under composition, adjoint and linear combination,
which is what makes the downstream convex certificates finite-dimensional.

The module also provides collocation grids, sampled functions, and numeric
realizations of operators on grids (dense matrices acting on sample vectors,
ordered vector part first, then each function channel at all grid points).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .polyalg import (
    VAR_S,
    VAR_THETA,
    PolyMatrix,
    kernel_compose_integral,
    mul,
    poly_block,
    poly_equal,
)


class PIOperator:
    """A 4-slot integral operator between mixed spaces.

    Parameters are the matrix ``P`` and kernels ``Q1, Q2, R0, R1, R2``; any of
    them may be ``None`` for zero.  Dimensions: ``dims_in = (m1, n1)``,
    ``dims_out = (m2, n2)``; ``P`` is ``m2 x m1``, ``Q1`` is ``m2 x n1``,
    ``Q2`` is ``n2 x m1``, ``R0/R1/R2`` are ``n2 x n1``.  One-variable kernels
    are stored as polynomials in ``s``.
    """

    __slots__ = ("dims_in", "dims_out", "domain", "P", "Q1", "Q2", "R0", "R1", "R2")

    def __init__(self, dims_in, dims_out, domain, P=None, Q1=None, Q2=None, R0=None, R1=None, R2=None):
        m1, n1 = dims_in
        m2, n2 = dims_out
        a, b = float(domain[0]), float(domain[1])
        self.dims_in = (int(m1), int(n1))
        self.dims_out = (int(m2), int(n2))
        self.domain = (a, b)
        self.P = np.zeros((m2, m1)) if P is None else np.asarray(P, dtype=float).reshape(m2, m1)
        self.Q1 = _kernel_or_zero(Q1, m2, n1, (a, b))
        self.Q2 = _kernel_or_zero(Q2, n2, m1, (a, b))
        self.R0 = _kernel_or_zero(R0, n2, n1, (a, b))
        self.R1 = _kernel_or_zero(R1, n2, n1, (a, b))
        self.R2 = _kernel_or_zero(R2, n2, n1, (a, b))
        for name in ("Q1", "Q2", "R0"):
            if getattr(self, name).deg_theta > 0:
                raise ValueError(f"{name} must not depend on theta")
        self.P.flags.writeable = False

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @classmethod
    def zero(cls, dims_in, dims_out, domain):
        return cls(dims_in, dims_out, domain)

    @classmethod
    def identity(cls, dims, domain):
        m, n = dims
        return cls(dims, dims, domain, P=np.eye(m), R0=PolyMatrix.eye(n, domain))

    @classmethod
    def multiplier(cls, poly, domain=None):
        """Multiplication operator on a pure function space: f -> poly * f."""
        if not isinstance(poly, PolyMatrix):
            poly = PolyMatrix.constant(poly, domain)
        n2, n1 = poly.shape
        return cls((0, n1), (0, n2), poly.domain, R0=poly)

    @classmethod
    def matrix(cls, mat, domain):
        """A plain matrix acting between vector parts."""
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls((mat.shape[1], 0), (mat.shape[0], 0), domain, P=mat)

    @classmethod
    def integral_functional(cls, kernel):
        """f -> int_a^b kernel(th) f(th) dth, mapping functions to vectors."""
        return cls((0, kernel.shape[1]), (kernel.shape[0], 0), kernel.domain, Q1=kernel)

    @classmethod
    def lift(cls, kernel):
        """x -> kernel(s) x, mapping vectors to functions."""
        return cls((kernel.shape[1], 0), (0, kernel.shape[0]), kernel.domain, Q2=kernel)

    @classmethod
    def volterra(cls, lower=None, upper=None, domain=None):
        """Integral operator with lower kernel R1 and upper kernel R2."""
        k = lower if lower is not None else upper
        n2, n1 = k.shape
        return cls((0, n1), (0, n2), k.domain, R1=lower, R2=upper)

    # ------------------------------------------------------------------
    # structure
    # ------------------------------------------------------------------

    def __repr__(self):
        return f"PIOperator({self.dims_in} -> {self.dims_out}, domain={self.domain})"

    def degree(self):
        """Maximum polynomial degree over all kernel slots (in either variable)."""
        return max(
            max(k.deg_s, k.deg_theta)
            for k in (self.Q1, self.Q2, self.R0, self.R1, self.R2)
        )

    def kernels(self):
        return {"P": self.P, "Q1": self.Q1, "Q2": self.Q2, "R0": self.R0, "R1": self.R1, "R2": self.R2}

    # ------------------------------------------------------------------
    # algebra
    # ------------------------------------------------------------------

    def __add__(self, other):
        _check_compat(self, other)
        return PIOperator(
            self.dims_in, self.dims_out, self.domain,
            P=self.P + other.P,
            Q1=self.Q1 + other.Q1, Q2=self.Q2 + other.Q2,
            R0=self.R0 + other.R0, R1=self.R1 + other.R1, R2=self.R2 + other.R2,
        )

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self.scale(-1.0)

    def __rmul__(self, c):
        return self.scale(c)

    def scale(self, c):
        c = float(c)
        return PIOperator(
            self.dims_in, self.dims_out, self.domain,
            P=c * self.P, Q1=c * self.Q1, Q2=c * self.Q2,
            R0=c * self.R0, R1=c * self.R1, R2=c * self.R2,
        )

    def __matmul__(self, other):
        return compose(self, other)

    def adjoint(self):
        """Adjoint with respect to the natural inner product on R^m x L2^n."""
        return PIOperator(
            self.dims_out, self.dims_in, self.domain,
            P=self.P.T,
            Q1=self.Q2.T,
            Q2=self.Q1.T,
            R0=self.R0.T,
            R1=self.R2.T.swap_vars(),
            R2=self.R1.T.swap_vars(),
        )

    @property
    def H(self):
        return self.adjoint()


def _kernel_or_zero(k, rows, cols, domain):
    if k is None:
        return PolyMatrix.zeros(rows, cols, domain)
    if not isinstance(k, PolyMatrix):
        k = PolyMatrix.constant(k, domain)
    if k.shape != (rows, cols):
        raise ValueError(f"kernel shape {k.shape} != expected ({rows}, {cols})")
    if not np.allclose(k.domain, domain):
        raise ValueError("kernel domain mismatch")
    return k


def _check_compat(A, B):
    if A.dims_in != B.dims_in or A.dims_out != B.dims_out:
        raise ValueError(f"dimension mismatch: {A} vs {B}")
    if not np.allclose(A.domain, B.domain):
        raise ValueError("domain mismatch")


def compose(A, B, max_degree=None):
    """Composition ``A o B`` of 4-slot operators (exact, closed form).

    The six output slots are polynomial expressions in the slots of the two
    factors; running integrals between them are evaluated exactly by
    :func:`pipeak.polyalg.kernel_compose_integral`.
    """
    if A.dims_in != B.dims_out:
        raise ValueError(f"cannot compose {A} with {B}")
    if not np.allclose(A.domain, B.domain):
        raise ValueError("domain mismatch")
    a, b = A.domain
    dom = A.domain
    kci = kernel_compose_integral

    PA = PolyMatrix.constant(A.P, dom)
    PB = PolyMatrix.constant(B.P, dom)

    # vector -> vector
    P_C = A.P @ B.P + kci(A.Q1.swap_vars(), B.Q2, a, b).coeffs[:, :, 0, 0]

    # Q1: kernel against the function input, producing the vector output
    Q1_C = (
        mul(PA, B.Q1)
        + mul(A.Q1, B.R0)
        + kci(A.Q1.swap_vars(), B.R1, VAR_THETA, b).swap_vars()
        + kci(A.Q1.swap_vars(), B.R2, a, VAR_THETA).swap_vars()
    )

    # Q2: vector input, function output
    Q2_C = (
        mul(A.Q2, PB)
        + mul(A.R0, B.Q2)
        + kci(A.R1, B.Q2, a, VAR_S)
        + kci(A.R2, B.Q2, VAR_S, b)
    )

    R0_C = mul(A.R0, B.R0, max_degree=max_degree)

    cross = mul(A.Q2, B.Q1.swap_vars())  # Q2_A(s) Q1_B(theta), both axes active

    R1_C = (
        cross
        + mul(A.R0, B.R1, max_degree=max_degree)
        + mul(A.R1, B.R0.swap_vars(), max_degree=max_degree)
        + kci(A.R1, B.R1, VAR_THETA, VAR_S)
        + kci(A.R1, B.R2, a, VAR_THETA)
        + kci(A.R2, B.R1, VAR_S, b)
    )
    R2_C = (
        cross
        + mul(A.R0, B.R2, max_degree=max_degree)
        + mul(A.R2, B.R0.swap_vars(), max_degree=max_degree)
        + kci(A.R1, B.R2, a, VAR_S)
        + kci(A.R2, B.R1, VAR_THETA, b)
        + kci(A.R2, B.R2, VAR_S, VAR_THETA)
    )

    return PIOperator(B.dims_in, A.dims_out, dom, P=P_C, Q1=Q1_C, Q2=Q2_C, R0=R0_C, R1=R1_C, R2=R2_C)


def block2x2(A, B, C, D):
    """Block operator ``[[A, B], [C, D]]`` on concatenated spaces.

    Concatenation puts vector components of both spaces first, then the
    function channels of both spaces.
    """
    if A.dims_in != C.dims_in or B.dims_in != D.dims_in:
        raise ValueError("column spaces disagree")
    if A.dims_out != B.dims_out or C.dims_out != D.dims_out:
        raise ValueError("row spaces disagree")
    dom = A.domain
    dims_in = (A.dims_in[0] + B.dims_in[0], A.dims_in[1] + B.dims_in[1])
    dims_out = (A.dims_out[0] + C.dims_out[0], A.dims_out[1] + C.dims_out[1])
    P = np.block([[A.P, B.P], [C.P, D.P]])
    blk = lambda name: poly_block(
        [[getattr(A, name), getattr(B, name)], [getattr(C, name), getattr(D, name)]]
    )
    return PIOperator(dims_in, dims_out, dom, P=P, Q1=blk("Q1"), Q2=blk("Q2"),
                      R0=blk("R0"), R1=blk("R1"), R2=blk("R2"))


def injection(dims_sub, dims_full, offset, domain):
    """Isometry embedding a sub-space into a larger concatenated space.

    ``offset = (om, on)`` places the vector part at rows ``om:om+m`` and the
    function channels at ``on:on+n``.  Its adjoint is the matching projection.
    """
    m, n = dims_sub
    M, N = dims_full
    om, on = offset
    P = np.zeros((M, m))
    P[om : om + m, :] = np.eye(m)
    R0 = np.zeros((N, n, 1, 1))
    R0[on : on + n, :, 0, 0] = np.eye(n)
    return PIOperator((m, n), (M, N), domain, P=P, R0=PolyMatrix(R0, domain))


def op_equal(A, B, tol=1e-10):
    if A.dims_in != B.dims_in or A.dims_out != B.dims_out:
        return False
    return bool(
        np.allclose(A.P, B.P, atol=tol)
        and poly_equal(A.Q1, B.Q1, tol)
        and poly_equal(A.Q2, B.Q2, tol)
        and poly_equal(A.R0, B.R0, tol)
        and poly_equal(A.R1, B.R1, tol)
        and poly_equal(A.R2, B.R2, tol)
    )


def apply_poly(op, x_vec, f_poly):
    """Apply an operator to an input with polynomial function part, exactly.

    Returns ``(y_vec, y_poly)`` where ``y_poly`` is a PolyMatrix column.  This
    is the symbolic reference path used to validate all numeric realizations.
    """
    a, b = op.domain
    m1, n1 = op.dims_in
    x_vec = np.zeros(m1) if x_vec is None else np.asarray(x_vec, dtype=float).reshape(m1)
    if f_poly is None:
        f_poly = PolyMatrix.zeros(n1, 1, op.domain)
    if f_poly.shape != (n1, 1) or f_poly.deg_theta > 0:
        raise ValueError("function part must be an n1 x 1 polynomial in s")
    xcol = PolyMatrix.constant(x_vec[:, None], op.domain)

    y_vec = op.P @ x_vec + mul(op.Q1, f_poly).integrate(VAR_S, a, b).coeffs[:, 0, 0, 0]
    y_poly = (
        mul(op.Q2, xcol)
        + mul(op.R0, f_poly)
        + kernel_compose_integral(op.R1, f_poly, a, VAR_S)
        + kernel_compose_integral(op.R2, f_poly, VAR_S, b)
    )
    return y_vec, y_poly


# ----------------------------------------------------------------------
# grids and sampled functions
# ----------------------------------------------------------------------


class Grid:
    """Collocation grid with quadrature weights and barycentric data."""

    def __init__(self, points, weights, domain, kind="custom"):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.domain = (float(domain[0]), float(domain[1]))
        self.kind = kind
        self.n = len(self.points)
        if np.any(self.weights < 0):
            raise ValueError("quadrature weights must be nonnegative")
        self._bary = None
        self._momcache = {}

    @classmethod
    def chebyshev(cls, n, domain):
        """Chebyshev-Gauss-Lobatto points with Clenshaw-Curtis weights."""
        a, b = domain
        if n < 2:
            raise ValueError("need at least 2 points")
        m = n - 1
        k = np.arange(n)
        x = np.cos(np.pi * k / m)[::-1]  # ascending on [-1, 1]
        w = np.zeros(n)
        jj = np.arange(1, m // 2 + 1)
        bj = np.where(jj == m / 2, 1.0, 2.0)
        for i in range(n):
            ci = 1.0 if i in (0, m) else 2.0
            w[i] = ci / m * (1.0 - np.sum(bj / (4 * jj**2 - 1) * np.cos(2 * jj * i * np.pi / m)))
        w = w[::-1]
        pts = a + (x + 1) * (b - a) / 2
        return cls(pts, w * (b - a) / 2, domain, kind="chebyshev")

    @classmethod
    def gauss_legendre(cls, n, domain):
        a, b = domain
        x, w = np.polynomial.legendre.leggauss(n)
        return cls(a + (x + 1) * (b - a) / 2, w * (b - a) / 2, domain, kind="gauss_legendre")

    @classmethod
    def uniform(cls, n, domain):
        a, b = domain
        pts = np.linspace(a, b, n)
        h = (b - a) / (n - 1)
        w = np.full(n, h)
        w[[0, -1]] = h / 2
        return cls(pts, w, domain, kind="uniform")

    # -- barycentric interpolation ------------------------------------

    def bary_weights(self):
        if self._bary is None:
            x = self.points
            scale = 4.0 / (self.domain[1] - self.domain[0])
            w = np.ones(self.n)
            for j in range(self.n):
                w[j] = 1.0 / np.prod((x[j] - np.delete(x, j)) * scale)
            self._bary = w / np.max(np.abs(w))
        return self._bary

    def interp_matrix(self, z):
        """Matrix ``B`` with ``B[i, j] = L_j(z_i)`` (Lagrange basis values)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        w = self.bary_weights()
        diff = z[:, None] - self.points[None, :]
        exact = np.isclose(diff, 0.0, atol=1e-15)
        diff = np.where(exact, 1.0, diff)
        terms = w[None, :] / diff
        B = terms / np.sum(terms, axis=1, keepdims=True)
        hit_rows = np.any(exact, axis=1)
        if np.any(hit_rows):
            B[hit_rows] = exact[hit_rows].astype(float)
        return B

    # -- monomial-weighted integration matrices ------------------------

    def _moment_data(self, qmax):
        """Lower running moments J[q][i, j] = int_a^{s_i} th^q L_j(th) dth.

        Also returns full moments F[q][j] over [a, b].  Exact for the
        polynomial integrands involved (Gauss rule of sufficient order).
        """
        if qmax in self._momcache:
            return self._momcache[qmax]
        covering = [k for k in self._momcache if k >= qmax]
        if covering:
            J, F = self._momcache[min(covering)]
            out = (J[: qmax + 1], F[: qmax + 1])
            self._momcache[qmax] = out
            return out
        a, b = self.domain
        nodes = (self.n + qmax) // 2 + 2
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        J = np.zeros((qmax + 1, self.n, self.n))
        for i, si in enumerate(self.points):
            z = a + (xg + 1) * (si - a) / 2
            wz = wg * (si - a) / 2
            B = self.interp_matrix(z)  # (nodes, n)
            zq = np.vander(z, qmax + 1, increasing=True)  # (nodes, q+1)
            J[:, i, :] = (zq * wz[:, None]).T @ B
        zf = a + (xg + 1) * (b - a) / 2
        wf = wg * (b - a) / 2
        Bf = self.interp_matrix(zf)
        F = (np.vander(zf, qmax + 1, increasing=True) * wf[:, None]).T @ Bf
        self._momcache[qmax] = (J, F)
        return J, F


@dataclass
class FunctionSample:
    """A mixed-space element sampled on a grid (vector part + channel values)."""

    grid: Grid
    vec: np.ndarray
    values: np.ndarray  # shape (n_channels, n_points)

    def __post_init__(self):
        self.vec = np.atleast_1d(np.asarray(self.vec, dtype=float))
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != self.grid.n and self.values.size > 0:
            raise ValueError("values must have one column per grid point")

    @classmethod
    def from_poly(cls, grid, poly, vec=None):
        vals = poly.eval(grid.points)[:, :, 0].T  # (channels, points)
        return cls(grid, np.zeros(0) if vec is None else np.atleast_1d(vec), vals)

    @classmethod
    def from_callable(cls, grid, fn, vec=None, n_channels=1):
        vals = np.array([np.atleast_1d(fn(s)) for s in grid.points]).T
        return cls(grid, np.zeros(0) if vec is None else np.atleast_1d(vec), vals.reshape(n_channels, grid.n))

    def to_vector(self):
        return np.concatenate([self.vec, self.values.ravel()])

    @classmethod
    def from_vector(cls, grid, v, dims):
        m, n = dims
        return cls(grid, v[:m], v[m:].reshape(n, grid.n) if n else np.zeros((0, grid.n)))

    def inner(self, other):
        return float(self.vec @ other.vec + np.sum(self.grid.weights * self.values * other.values))

    def norm(self):
        return np.sqrt(max(self.inner(self), 0.0))


# ----------------------------------------------------------------------
# numeric realizations
# ----------------------------------------------------------------------


def apply(op, fs, quad_cells=16, quad_nodes=8):
    """Apply an operator to a sampled input by composite Gauss quadrature.

    Independent of :func:`discretize_on_grid`: integrals are evaluated by
    composite Gauss-Legendre panels against the barycentric interpolant of the
    input sample.  Returns a new :class:`FunctionSample` on the same grid.
    """
    m1, n1 = op.dims_in
    m2, n2 = op.dims_out
    g = fs.grid
    a, b = op.domain
    x, vals = fs.vec, fs.values

    def chunked(lo, hi, f_weight):
        # integrate kernelweight(th) @ f(th) over [lo, hi] with composite GL
        if hi - lo <= 1e-14:
            return np.zeros(f_weight(np.array([lo])).shape[1:3][0:1] or (0,))
        ncell = max(1, int(np.ceil(quad_cells * (hi - lo) / (b - a))))
        edges = np.linspace(lo, hi, ncell + 1)
        xg, wg = np.polynomial.legendre.leggauss(quad_nodes)
        total = None
        for k in range(ncell):
            z = edges[k] + (xg + 1) * (edges[k + 1] - edges[k]) / 2
            wz = wg * (edges[k + 1] - edges[k]) / 2
            contrib = f_weight(z)  # (nodes, rows)
            acc = contrib.T @ wz
            total = acc if total is None else total + acc
        return total

    fvals_at = lambda z: (g.interp_matrix(z) @ vals.T)  # (npts, n1)

    # vector output
    if m2:
        if n1:
            kern = lambda z: np.einsum("prc,pc->pr", op.Q1.eval(z), fvals_at(z))
            y_vec = op.P @ x + chunked(a, b, kern)
        else:
            y_vec = op.P @ x
    else:
        y_vec = np.zeros(0)

    # function output
    y_vals = np.zeros((n2, g.n))
    if n2:
        Q2v = op.Q2.eval(g.points) if m1 else None  # (N, n2, m1)
        R0v = op.R0.eval(g.points) if n1 else None
        for i, si in enumerate(g.points):
            acc = np.zeros(n2)
            if m1:
                acc += Q2v[i] @ x
            if n1:
                acc += R0v[i] @ vals[:, i]
                k1 = lambda z: np.einsum("prc,pc->pr", op.R1.eval(np.full_like(z, si), z), fvals_at(z))
                k2 = lambda z: np.einsum("prc,pc->pr", op.R2.eval(np.full_like(z, si), z), fvals_at(z))
                lo = chunked(a, si, k1)
                hi = chunked(si, b, k2)
                if np.ndim(lo) and len(lo):
                    acc += lo
                if np.ndim(hi) and len(hi):
                    acc += hi
            y_vals[:, i] = acc
    return FunctionSample(g, y_vec, y_vals)


def discretize_on_grid(op, grid):
    """Exact matrix realization of an operator on a grid.

    The matrix acts on sample vectors ``[vec; f_1(pts); f_2(pts); ...]``; all
    integrals of (kernel x Lagrange basis) products are computed with exact
    Gauss rules, so the only discretization error is polynomial interpolation
    of the input function itself.
    """
    m1, n1 = op.dims_in
    m2, n2 = op.dims_out
    N = grid.n
    M = np.zeros((m2 + n2 * N, m1 + n1 * N))
    M[:m2, :m1] = op.P

    qmax = max(op.Q1.deg_s, op.R1.deg_theta, op.R2.deg_theta, 0)
    J, F = grid._moment_data(qmax)

    if m2 and n1:
        # rows: int_a^b Q1(th) f(th) dth
        for r in range(m2):
            for c in range(n1):
                coefs = op.Q1.coeffs[r, c, :, 0]
                row = sum(coefs[q] * F[q] for q in range(len(coefs)))
                M[r, m1 + c * N : m1 + (c + 1) * N] = row

    if n2 and m1:
        Q2v = op.Q2.eval(grid.points)  # (N, n2, m1)
        for r in range(n2):
            M[m2 + r * N : m2 + (r + 1) * N, :m1] = Q2v[:, r, :]

    if n2 and n1:
        pts = grid.points
        for r in range(n2):
            for c in range(n1):
                blk = np.zeros((N, N))
                r0 = op.R0.coeffs[r, c, :, 0]
                if np.any(r0):
                    blk += np.diag(np.polynomial.polynomial.polyval(pts, r0))
                for kern, Jmat in ((op.R1, J), (op.R2, None)):
                    cz = kern.coeffs[r, c]
                    if not np.any(cz):
                        continue
                    for p in range(cz.shape[0]):
                        for q in range(cz.shape[1]):
                            if cz[p, q] == 0.0:
                                continue
                            base = J[q] if Jmat is not None else (F[q][None, :] - J[q])
                            blk += cz[p, q] * (pts**p)[:, None] * base
                M[m2 + r * N : m2 + (r + 1) * N, m1 + c * N : m1 + (c + 1) * N] = blk
    return M


def _weight_vector(dims, grid):
    m, n = dims
    return np.concatenate([np.ones(m), np.tile(grid.weights, n)])


def estimate_opnorm(op, grid=None, n=64):
    """L2-induced operator norm estimate via the weighted grid realization."""
    if grid is None:
        grid = Grid.chebyshev(n, op.domain)
    M = discretize_on_grid(op, grid)
    win = _weight_vector(op.dims_in, grid)
    wout = _weight_vector(op.dims_out, grid)
    S = np.sqrt(wout)[:, None] * M / np.sqrt(win)[None, :]
    return float(np.linalg.svd(S, compute_uv=False)[0])


def invert_on_grid(op, grid, cond_max=1e10, residual_tol=1e-8):
    """Invert the grid realization of a square operator.

    Returns ``(Minv, info)``; raises if the realization is too ill-conditioned
    to trust.  One or two Newton refinement steps drive the inverse residual
    below ``residual_tol`` when the condition number allows it.
    """
    if op.dims_in != op.dims_out:
        raise ValueError("inversion requires matching input/output spaces")
    M = discretize_on_grid(op, grid)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > cond_max:
        raise np.linalg.LinAlgError(
            f"grid realization condition number {cond:.3e} exceeds {cond_max:.1e}"
        )
    X = np.linalg.inv(M)
    I = np.eye(M.shape[0])
    residual = np.linalg.norm(M @ X - I, 2)
    steps = 0
    while residual > residual_tol * 0.1 and steps < 2:
        X = X @ (2 * I - M @ X)
        residual = np.linalg.norm(M @ X - I, 2)
        steps += 1
    info = {"cond": float(cond), "residual": float(residual), "refinement_steps": steps}
    if residual > residual_tol:
        info["warning"] = f"inverse residual {residual:.2e} above {residual_tol:.0e}"
    return X, info
