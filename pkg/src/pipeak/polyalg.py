"""Arithmetic on matrix-valued polynomials in one or two spatial variables.

Everything downstream (integral operators, convexity certificates) reduces to
exact manipulation of matrices whose entries are polynomials in the spatial
variable ``s`` and, for integral kernels, a second variable ``theta``.  A
:class:`PolyMatrix` stores the coefficients of all entries in a single dense
array of shape ``(rows, cols, deg_s + 1, deg_theta + 1)``; index ``[r, c, i, j]``
is the coefficient of ``s**i * theta**j`` in entry ``(r, c)``.

All operations are pure: they return new objects and never mutate inputs.
Coefficient arrays are marked read-only on construction.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

#: variables a polynomial may depend on
VAR_S = "s"
VAR_THETA = "theta"

#: default cap on polynomial degree for user-facing products
DEFAULT_MAX_DEGREE = 8

#: coefficients below this magnitude are treated as zero during canonicalization
COEFF_TOL = 1e-12


class DegreeOverflowError(ValueError):
    """Raised when an operation would exceed the requested maximum degree."""


class PolyMatrix:
    """Matrix of bivariate polynomials on a fixed interval ``[a, b]``.

    Parameters
    ----------
    coeffs : array_like
        Shape ``(rows, cols, deg_s + 1, deg_theta + 1)``.  Trailing all-zero
        degree slices are trimmed on construction.
    domain : tuple of float
        Interval ``(a, b)`` with ``a < b``.
    """

    __slots__ = ("coeffs", "domain")

    def __init__(self, coeffs, domain):
        arr = np.asarray(coeffs, dtype=float)
        if arr.ndim != 4:
            raise ValueError(f"coefficient array must be 4-D, got shape {arr.shape}")
        a, b = float(domain[0]), float(domain[1])
        if not a < b:
            raise ValueError(f"domain must satisfy a < b, got ({a}, {b})")
        arr = _trim(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)
        object.__setattr__(self, "domain", (a, b))

    def __setattr__(self, name, value):
        raise AttributeError("PolyMatrix is immutable")

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @classmethod
    def zeros(cls, rows, cols, domain):
        return cls(np.zeros((rows, cols, 1, 1)), domain)

    @classmethod
    def constant(cls, mat, domain):
        """Embed a plain numeric matrix as a degree-zero polynomial matrix."""
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls(mat[:, :, None, None], domain)

    @classmethod
    def eye(cls, n, domain):
        return cls.constant(np.eye(n), domain)

    @classmethod
    def var(cls, which, domain, rows=1, cols=1):
        """The scalar monomial ``s`` or ``theta``, replicated on the diagonal."""
        if which == VAR_S:
            c = np.zeros((rows, cols, 2, 1))
            c[:, :, 1, 0] = np.eye(rows, cols)
        elif which == VAR_THETA:
            c = np.zeros((rows, cols, 1, 2))
            c[:, :, 0, 1] = np.eye(rows, cols)
        else:
            raise ValueError(f"unknown variable {which!r}")
        return cls(c, domain)

    @classmethod
    def from_entries(cls, rows, cols, entries, domain):
        """Build from a sparse map ``{(r, c, deg_s, deg_theta): coeff}``."""
        if entries:
            ds = max(k[2] for k in entries) + 1
            dt = max(k[3] for k in entries) + 1
        else:
            ds = dt = 1
        arr = np.zeros((rows, cols, ds, dt))
        for (r, c, i, j), v in entries.items():
            arr[r, c, i, j] = v
        return cls(arr, domain)

    # ------------------------------------------------------------------
    # basic queries
    # ------------------------------------------------------------------

    @property
    def shape(self):
        return self.coeffs.shape[:2]

    @property
    def deg_s(self):
        return self.coeffs.shape[2] - 1

    @property
    def deg_theta(self):
        return self.coeffs.shape[3] - 1

    def is_zero(self, tol=COEFF_TOL):
        return bool(np.all(np.abs(self.coeffs) <= tol))

    def entry(self, r, c):
        """Extract a single entry as a 1x1 PolyMatrix."""
        return PolyMatrix(self.coeffs[r : r + 1, c : c + 1], self.domain)

    def __repr__(self):
        r, c = self.shape
        return f"PolyMatrix({r}x{c}, deg_s={self.deg_s}, deg_theta={self.deg_theta}, domain={self.domain})"

    # ------------------------------------------------------------------
    # ring operations
    # ------------------------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        _check_domain(self, other)
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        a, b = _pad_to_common(self.coeffs, other.coeffs)
        return PolyMatrix(a + b, self.domain)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __neg__(self):
        return PolyMatrix(-self.coeffs, self.domain)

    def __rmul__(self, scalar):
        return PolyMatrix(float(scalar) * self.coeffs, self.domain)

    def __mul__(self, scalar):
        return PolyMatrix(float(scalar) * self.coeffs, self.domain)

    def __matmul__(self, other):
        return mul(self, self._coerce(other))

    def _coerce(self, other):
        if isinstance(other, PolyMatrix):
            return other
        return PolyMatrix.constant(other, self.domain)

    @property
    def T(self):
        """Matrix transpose (does not touch the variables)."""
        return PolyMatrix(np.swapaxes(self.coeffs, 0, 1), self.domain)

    def swap_vars(self):
        """Exchange the roles of ``s`` and ``theta`` in every entry."""
        return PolyMatrix(np.swapaxes(self.coeffs, 2, 3), self.domain)

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def __call__(self, s=None, theta=None):
        return self.eval(s, theta)

    def eval(self, s=None, theta=None):
        """Evaluate at numeric points.

        Both arguments accept scalars or 1-D arrays (broadcast jointly).  A
        variable the polynomial actually depends on must be supplied, and the
        points must lie inside the domain (up to a 1e-9 slack).  Returns an
        array of shape ``(rows, cols)`` for scalar input or
        ``(npts, rows, cols)`` for vector input.
        """
        c = self.coeffs
        vector = (s is not None and np.ndim(s) > 0) or (
            theta is not None and np.ndim(theta) > 0
        )
        sv = _check_points(s, self.domain) if s is not None else None
        tv = _check_points(theta, self.domain) if theta is not None else None
        if sv is None:
            if self.deg_s > 0:
                raise ValueError("polynomial depends on s but no s value given")
            sv = np.zeros(1 if tv is None else len(tv))
        if tv is None:
            if self.deg_theta > 0:
                raise ValueError("polynomial depends on theta but no theta value given")
            tv = np.zeros(len(sv))
        sv, tv = np.broadcast_arrays(sv, tv)
        # Vandermonde contraction: out[p, r, c] = sum_ij c[r,c,i,j] s_p^i t_p^j
        vs = np.vander(sv, self.deg_s + 1, increasing=True)
        vt = np.vander(tv, self.deg_theta + 1, increasing=True)
        out = np.einsum("rcij,pi,pj->prc", c, vs, vt)
        return out if vector else out[0]

    # ------------------------------------------------------------------
    # calculus
    # ------------------------------------------------------------------

    def antiderivative(self, var):
        """Indefinite integral in ``var`` with zero constant term."""
        ax = _axis(var)
        c = self.coeffs
        deg = c.shape[ax]
        shape = list(c.shape)
        shape[ax] += 1
        out = np.zeros(shape)
        sl = [slice(None)] * 4
        sl[ax] = slice(1, deg + 1)
        denom_shape = [1, 1, 1, 1]
        denom_shape[ax] = deg
        out[tuple(sl)] = c / np.arange(1, deg + 1).reshape(denom_shape)
        return PolyMatrix(out, self.domain)

    def diff(self, var):
        ax = _axis(var)
        c = self.coeffs
        deg = c.shape[ax] - 1
        if deg == 0:
            return PolyMatrix.zeros(*self.shape, self.domain)
        sl = [slice(None)] * 4
        sl[ax] = slice(1, deg + 1)
        fac_shape = [1, 1, 1, 1]
        fac_shape[ax] = deg
        out = c[tuple(sl)] * np.arange(1, deg + 1).reshape(fac_shape)
        return PolyMatrix(out, self.domain)

    def substitute(self, var, bound):
        """Replace ``var`` by a bound: a number, the other variable, or itself."""
        ax = _axis(var)
        c = self.coeffs
        deg = c.shape[ax] - 1
        if isinstance(bound, str):
            if bound == var:
                return self
            # fold powers of `var` onto the other variable's axis
            other_ax = 5 - ax  # 2 <-> 3
            ds, dt = c.shape[2] - 1, c.shape[3] - 1
            if ax == 2:
                out = np.zeros((c.shape[0], c.shape[1], 1, ds + dt + 1))
                for i in range(ds + 1):
                    out[:, :, 0, i : i + dt + 1] += c[:, :, i, :]
            else:
                out = np.zeros((c.shape[0], c.shape[1], ds + dt + 1, 1))
                for j in range(dt + 1):
                    out[:, :, j : j + ds + 1, 0] += c[:, :, :, j]
            return PolyMatrix(out, self.domain)
        v = float(bound)
        powers = v ** np.arange(deg + 1)
        out = np.tensordot(c, powers, axes=([ax], [0]))
        return PolyMatrix(np.expand_dims(out, ax), self.domain)

    def integrate(self, var, lower, upper):
        """Definite integral over ``var`` between polynomial or numeric bounds.

        Bounds may be numbers (typically the endpoints) or the name of the
        other variable; e.g. ``integrate('theta', a, 's')`` computes the
        running integral that appears in lower-triangular integral operators.
        """
        F = self.antiderivative(var)
        return F.substitute(var, upper) - F.substitute(var, lower)


def _axis(var):
    if var == VAR_S:
        return 2
    if var == VAR_THETA:
        return 3
    raise ValueError(f"unknown variable {var!r}")


def _trim(arr, tol=COEFF_TOL):
    ds = arr.shape[2]
    while ds > 1 and np.all(np.abs(arr[:, :, ds - 1, :]) <= tol):
        ds -= 1
    dt = arr.shape[3]
    while dt > 1 and np.all(np.abs(arr[:, :, :, dt - 1]) <= tol):
        dt -= 1
    return np.ascontiguousarray(arr[:, :, :ds, :dt])


def _pad_to_common(a, b):
    ds = max(a.shape[2], b.shape[2])
    dt = max(a.shape[3], b.shape[3])
    return _pad(a, ds, dt), _pad(b, ds, dt)


def _pad(a, ds, dt):
    if a.shape[2] == ds and a.shape[3] == dt:
        return a
    out = np.zeros(a.shape[:2] + (ds, dt))
    out[:, :, : a.shape[2], : a.shape[3]] = a
    return out


def _check_domain(p, q):
    if not np.allclose(p.domain, q.domain):
        raise ValueError(f"domain mismatch {p.domain} vs {q.domain}")


def _check_points(pts, domain, slack=1e-9):
    arr = np.atleast_1d(np.asarray(pts, dtype=float))
    a, b = domain
    if np.any(arr < a - slack) or np.any(arr > b + slack):
        raise ValueError(f"evaluation points outside domain [{a}, {b}]")
    return arr


# ----------------------------------------------------------------------
# products
# ----------------------------------------------------------------------


def mul(p, q, max_degree=None):
    """Polynomial matrix product ``p @ q`` with optional degree cap.

    Raises :class:`DegreeOverflowError` if the exact product degree in either
    variable would exceed ``max_degree``.
    """
    _check_domain(p, q)
    if p.shape[1] != q.shape[0]:
        raise ValueError(f"inner dimension mismatch {p.shape} @ {q.shape}")
    a, b = p.coeffs, q.coeffs
    ds = a.shape[2] + b.shape[2] - 1
    dt = a.shape[3] + b.shape[3] - 1
    if max_degree is not None and max(ds, dt) - 1 > max_degree:
        raise DegreeOverflowError(
            f"product degree ({ds - 1}, {dt - 1}) exceeds max degree {max_degree}"
        )
    out = np.zeros((a.shape[0], b.shape[1], ds, dt))
    for i in range(a.shape[2]):
        for j in range(a.shape[3]):
            block = np.einsum("rk,kcuv->rcuv", a[:, :, i, j], b)
            out[:, :, i : i + b.shape[2], j : j + b.shape[3]] += block
    return PolyMatrix(out, p.domain)


def kernel_compose_integral(k1, k2, lower, upper):
    """Integral contraction of two kernels over a dummy variable.

    Computes ``K(s, theta) = int_lower^upper k1(s, z) k2(z, theta) dz`` where
    by convention the *theta* axis of ``k1`` and the *s* axis of ``k2`` play
    the role of the dummy variable ``z``.  Bounds may be numbers or the
    strings ``'s'`` / ``'theta'``.

    This single primitive covers every integral that appears when composing
    integral operators: one-variable kernels are positioned with
    :meth:`PolyMatrix.swap_vars` so that their variable sits on the correct
    axis.
    """
    _check_domain(k1, k2)
    if k1.shape[1] != k2.shape[0]:
        raise ValueError(f"inner dimension mismatch {k1.shape} vs {k2.shape}")
    a1 = k1.coeffs  # (r, m, p, q1)  q1 = z power
    a2 = k2.coeffs  # (m, c, q2, t)  q2 = z power
    r, _, p1, z1 = a1.shape
    _, c, z2, t2 = a2.shape
    # cube[r, c, sp, z, tp], z-power = z1_idx + z2_idx
    cube = np.zeros((r, c, p1, z1 + z2 - 1, t2))
    for q in range(z1):
        cube[:, :, :, q : q + z2, :] += np.einsum("rmp,mczt->rcpzt", a1[:, :, :, q], a2)
    # antiderivative in z
    nz = cube.shape[3]
    anti = np.zeros((r, c, p1, nz + 1, t2))
    anti[:, :, :, 1:, :] = cube / np.arange(1, nz + 1)[None, None, None, :, None]

    def _sub(bound):
        if isinstance(bound, str):
            if bound == VAR_S:
                out = np.zeros((r, c, p1 + nz, 1, t2))
                for i in range(p1):
                    out[:, :, i : i + nz + 1, 0, :] += anti[:, :, i, :, :]
                return out[:, :, :, 0, :]
            if bound == VAR_THETA:
                out = np.zeros((r, c, p1, 1, t2 + nz))
                for j in range(t2):
                    out[:, :, :, 0, j : j + nz + 1] += np.swapaxes(anti, 3, 4)[:, :, :, j, :]
                return out[:, :, :, 0, :]
            raise ValueError(f"unknown bound {bound!r}")
        v = float(bound)
        powers = v ** np.arange(nz + 1)
        return np.tensordot(anti, powers, axes=([3], [0]))

    hi, lo = _sub(upper), _sub(lower)
    ds = max(hi.shape[2], lo.shape[2])
    dt = max(hi.shape[3], lo.shape[3])
    out = np.zeros((r, c, ds, dt))
    out[:, :, : hi.shape[2], : hi.shape[3]] += hi
    out[:, :, : lo.shape[2], : lo.shape[3]] -= lo
    return PolyMatrix(out, k1.domain)


def poly_block(rows):
    """Assemble a block matrix from a nested list of PolyMatrix blocks.

    ``rows`` is a list of lists; blocks in a row must share row counts, blocks
    in a column must share column counts, and all must share a domain.
    """
    domain = rows[0][0].domain
    ds = max(b.coeffs.shape[2] for row in rows for b in row)
    dt = max(b.coeffs.shape[3] for row in rows for b in row)
    row_heights = [row[0].shape[0] for row in rows]
    col_widths = [b.shape[1] for b in rows[0]]
    out = np.zeros((sum(row_heights), sum(col_widths), ds, dt))
    r0 = 0
    for row, h in zip(rows, row_heights):
        if len(row) != len(col_widths):
            raise ValueError("ragged block structure")
        c0 = 0
        for blk, w in zip(row, col_widths):
            if blk.shape != (h, w):
                raise ValueError(f"block shape {blk.shape} does not fit slot ({h}, {w})")
            _check_domain(blk, rows[0][0])
            out[r0 : r0 + h, c0 : c0 + w, : blk.coeffs.shape[2], : blk.coeffs.shape[3]] = blk.coeffs
            c0 += w
        r0 += h
    return PolyMatrix(out, domain)


def poly_equal(p, q, tol=COEFF_TOL):
    """Coefficient-wise equality after padding to a common degree."""
    if p.shape != q.shape or not np.allclose(p.domain, q.domain):
        return False
    a, b = _pad_to_common(p.coeffs, q.coeffs)
    return bool(np.all(np.abs(a - b) <= tol))


# ----------------------------------------------------------------------
# textual serialization (used by the PDE/PIE config format)
# ----------------------------------------------------------------------
#
# A matrix entry is written as groups of s-coefficients separated by `|`,
# one group per theta power; `,` separates columns and `;` separates rows.
# Example: "0 1 | 2" means  (0 + 1*s) + 2*theta.


def format_poly(p):
    """Serialize to the textual entry grammar (inverse of :func:`parse_poly`)."""
    rows = []
    for r in range(p.shape[0]):
        cols = []
        for c in range(p.shape[1]):
            groups = []
            for j in range(p.deg_theta + 1):
                coeffs = p.coeffs[r, c, :, j]
                groups.append(" ".join(repr(float(v)) for v in coeffs))
            cols.append(" | ".join(groups))
        rows.append(" , ".join(cols))
    return " ; ".join(rows)


def parse_poly(text, domain):
    """Parse the textual entry grammar into a :class:`PolyMatrix`."""
    row_texts = [r.strip() for r in text.split(";")]
    parsed = []
    for row in row_texts:
        col_texts = [c.strip() for c in row.split(",")]
        cols = []
        for cell in col_texts:
            groups = [g.strip() for g in cell.split("|")]
            coeff_rows = []
            for g in groups:
                coeff_rows.append([float(tok) for tok in g.split()] if g else [0.0])
            cols.append(coeff_rows)
        parsed.append(cols)
    nrows = len(parsed)
    ncols = len(parsed[0])
    if any(len(r) != ncols for r in parsed):
        raise ValueError("ragged matrix in polynomial text")
    ds = max(len(g) for row in parsed for cell in row for g in cell)
    dt = max(len(cell) for row in parsed for cell in row)
    arr = np.zeros((nrows, ncols, ds, dt))
    for r, row in enumerate(parsed):
        for c, cell in enumerate(row):
            for j, g in enumerate(cell):
                arr[r, c, : len(g), j] = g
    return PolyMatrix(arr, domain)
