"""Coupled 1-D linear PDE models and their conversion to integral form.

A model on ``[a, b]`` has state channels grouped by smoothness:

* ``n1`` channels with no spatial derivative (L2),
* ``n2`` channels that are once differentiated (W^{1,2}),
* ``n3`` channels that are twice differentiated (W^{2,2}),

and dynamics

    dx/dt = A0(s) x + A1(s) d/ds [x2; x3] + A2(s) d2/ds2 x3
            + B21(s) w + B22(s) u
    z     = C10 [xc(a); xc(b)] + int_a^b ( Ca(s) x + Cb(s) d/ds [x2; x3] ) ds
            + D11 w + D12 u

with homogeneous boundary conditions ``B [xc(a); xc(b)] = 0`` on the core
boundary vector ``xc = [x2; x3; d/ds x3]``.

Substituting the highest spatial derivatives ``xf = [x1; d/ds x2; d2/ds2 x3]``
for the state (using the boundary conditions to eliminate the integration
constants) turns the PDE into an equivalent integral-operator system

    d/dt (T xf) = A xf + B1 w + B2 u,      z = C1 xf + D12 u

in which every operator is a 4-slot integral operator and no spatial
derivatives or boundary values remain.  That system is what the certification
and synthesis layers consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .polyalg import PolyMatrix, poly_block
from .piop import (
    FunctionSample,
    Grid,
    PIOperator,
    compose,
    discretize_on_grid,
)


@dataclass
class PDESpec:
    """Data of one coupled PDE model (see module docstring for the form)."""

    domain: tuple
    n1: int
    n2: int
    n3: int
    A0: Optional[PolyMatrix] = None
    A1: Optional[PolyMatrix] = None
    A2: Optional[PolyMatrix] = None
    B21: Optional[PolyMatrix] = None  # disturbance channel, n x n_w
    B22: Optional[PolyMatrix] = None  # control channel, n x n_u
    Ca: Optional[PolyMatrix] = None  # n_z x n integrand on the state
    Cb: Optional[PolyMatrix] = None  # n_z x (n2+n3) integrand on derivatives
    C10: Optional[np.ndarray] = None  # n_z x 2(n2+2n3) boundary output matrix
    D11: Optional[np.ndarray] = None
    D12: Optional[np.ndarray] = None
    BC: Optional[np.ndarray] = None  # (n2+2n3) x 2(n2+2n3)
    name: str = ""

    # -- derived sizes ---------------------------------------------------

    @property
    def n(self):
        return self.n1 + self.n2 + self.n3

    @property
    def nc(self):
        """Size of the core boundary vector [x2; x3; d/ds x3]."""
        return self.n2 + 2 * self.n3

    @property
    def n_w(self):
        return self.B21.shape[1] if self.B21 is not None else 0

    @property
    def n_u(self):
        return self.B22.shape[1] if self.B22 is not None else 0

    @property
    def n_z(self):
        for k in (self.Ca, self.Cb):
            if k is not None:
                return k.shape[0]
        if self.C10 is not None:
            return self.C10.shape[0]
        return 0

    def __post_init__(self):
        dom = (float(self.domain[0]), float(self.domain[1]))
        self.domain = dom
        n, nd = self.n, self.n2 + self.n3
        fill = lambda k, r, c: k if k is not None else PolyMatrix.zeros(r, c, dom)
        self.A0 = fill(self.A0, n, n)
        self.A1 = fill(self.A1, n, nd)
        self.A2 = fill(self.A2, n, self.n3)
        self.B21 = fill(self.B21, n, self.n_w)
        self.B22 = fill(self.B22, n, self.n_u)
        nz = self.n_z
        self.Ca = fill(self.Ca, nz, n)
        self.Cb = fill(self.Cb, nz, nd)
        self.C10 = np.zeros((nz, 2 * self.nc)) if self.C10 is None else np.atleast_2d(np.asarray(self.C10, dtype=float))
        self.D11 = np.zeros((nz, self.n_w)) if self.D11 is None else np.atleast_2d(np.asarray(self.D11, dtype=float))
        self.D12 = np.zeros((nz, self.n_u)) if self.D12 is None else np.atleast_2d(np.asarray(self.D12, dtype=float))
        self.BC = np.zeros((self.nc, 2 * self.nc)) if self.BC is None else np.atleast_2d(np.asarray(self.BC, dtype=float))


class IncompatibleBCError(ValueError):
    """Boundary conditions do not determine the state from its derivatives."""


def validate(pde):
    """Collect model consistency problems; empty list means usable."""
    issues = []
    n, nc, nd = pde.n, pde.nc, pde.n2 + pde.n3
    if min(pde.n1, pde.n2, pde.n3) < 0 or n == 0:
        issues.append("state channel counts must be nonnegative and not all zero")
    checks = [
        ("A0", pde.A0.shape, (n, n)),
        ("A1", pde.A1.shape, (n, nd)),
        ("A2", pde.A2.shape, (n, pde.n3)),
        ("Ca", pde.Ca.shape, (pde.n_z, n)),
        ("Cb", pde.Cb.shape, (pde.n_z, nd)),
        ("C10", pde.C10.shape, (pde.n_z, 2 * nc)),
        ("BC", pde.BC.shape, (nc, 2 * nc)),
        ("D11", pde.D11.shape, (pde.n_z, pde.n_w)),
        ("D12", pde.D12.shape, (pde.n_z, pde.n_u)),
    ]
    for name, got, want in checks:
        if got != want:
            issues.append(f"{name} has shape {got}, expected {want}")
    for name in ("A0", "A1", "A2", "B21", "B22", "Ca", "Cb"):
        k = getattr(pde, name)
        if k.deg_theta > 0:
            issues.append(f"{name} must depend on s only")
    if np.any(pde.D11 != 0.0):
        issues.append("feedthrough D11 from disturbance to output is not supported "
                      "(peak-gain analysis uses an impulse disturbance channel)")
    if nc > 0 and not issues:
        try:
            boundary_elimination(pde)
        except IncompatibleBCError as err:
            issues.append(str(err))
    return issues


def boundary_elimination(pde):
    """Express boundary values through the highest spatial derivatives.

    Returns ``(H, Kb, Gb)`` such that the core boundary vector satisfies
    ``xc(a) = int_a^b H(th) xf(th) dth`` and
    ``xc(b) = Kb xc(a) + int_a^b Gb(th) xf(th) dth``.

    Raises :class:`IncompatibleBCError` when the boundary conditions fail to
    determine the integration constants (rank-deficient elimination matrix).
    """
    a, b = pde.domain
    dom = pde.domain
    n1, n2, n3 = pde.n1, pde.n2, pde.n3
    nc, n = pde.nc, pde.n

    Kb = np.eye(nc)
    Kb[n2 : n2 + n3, n2 + n3 :] = (b - a) * np.eye(n3)

    # Gb: how xf integrates into xc(b); stored as a polynomial in s like all
    # one-variable kernels (the integration variable is positional)
    ent = {}
    for i in range(n2):  # x2(b) += int xf2
        ent[(i, n1 + i, 0, 0)] = 1.0
    for i in range(n3):  # x3(b) += int (b - th) xf3
        ent[(n2 + i, n1 + n2 + i, 0, 0)] = b
        ent[(n2 + i, n1 + n2 + i, 1, 0)] = -1.0
        ent[(n2 + n3 + i, n1 + n2 + i, 0, 0)] = 1.0  # x3'(b) += int xf3
    Gb = PolyMatrix.from_entries(nc, n, ent, dom) if nc else PolyMatrix.zeros(0, n, dom)

    Ba, Bb = pde.BC[:, :nc], pde.BC[:, nc:]
    E = Ba + Bb @ Kb
    if nc:
        sv = np.linalg.svd(E, compute_uv=False)
        if sv[0] == 0 or sv[-1] / sv[0] < 1e-12:
            raise IncompatibleBCError(
                "boundary conditions cannot be solved for the integration constants "
                f"(elimination matrix rcond {0.0 if sv[0] == 0 else sv[-1] / sv[0]:.2e})"
            )
        H = PolyMatrix.constant(-np.linalg.solve(E, Bb), dom) @ Gb
    else:
        H = PolyMatrix.zeros(0, n, dom)
    return H, Kb, Gb


def _state_maps(pde):
    """The integral operators T (xf -> x) and T1 (xf -> d/ds [x2; x3])."""
    a, b = pde.domain
    dom = pde.domain
    n1, n2, n3 = pde.n1, pde.n2, pde.n3
    n, nc, nd = pde.n, pde.nc, pde.n2 + pde.n3
    H, Kb, Gb = boundary_elimination(pde)

    # selection of [x2; x3] rows from the boundary constants, with (s - a) drift
    sel = {}
    for i in range(n2):
        sel[(n1 + i, i, 0, 0)] = 1.0
    for i in range(n3):
        sel[(n1 + n2 + i, n2 + i, 0, 0)] = 1.0
        sel[(n1 + n2 + i, n2 + n3 + i, 1, 0)] = 1.0
        sel[(n1 + n2 + i, n2 + n3 + i, 0, 0)] = -a
    Sel = PolyMatrix.from_entries(n, nc, sel, dom) if nc else PolyMatrix.zeros(n, 0, dom)
    Hth = H.swap_vars()  # H enters two-variable kernels through its theta slot

    # direct Volterra part: x2(s) <- int_a^s xf2 ; x3(s) <- int_a^s (s-th) xf3
    dd = {}
    for i in range(n2):
        dd[(n1 + i, n1 + i, 0, 0)] = 1.0
    for i in range(n3):
        dd[(n1 + n2 + i, n1 + n2 + i, 1, 0)] = 1.0
        dd[(n1 + n2 + i, n1 + n2 + i, 0, 1)] = -1.0
    D = PolyMatrix.from_entries(n, n, dd, dom) if dd else PolyMatrix.zeros(n, n, dom)

    R0 = PolyMatrix.from_entries(n, n, {(i, i, 0, 0): 1.0 for i in range(n1)}, dom) \
        if n1 else PolyMatrix.zeros(n, n, dom)
    SelH = Sel @ Hth
    T = PIOperator((0, n), (0, n), dom, R0=R0, R1=SelH + D, R2=SelH)

    # first-derivative map
    sel1 = {(n2 + i, n2 + n3 + i, 0, 0): 1.0 for i in range(n3)}
    Sel1 = PolyMatrix.from_entries(nd, nc, sel1, dom) if nc and nd else PolyMatrix.zeros(nd, nc, dom)
    r01 = {(i, n1 + i, 0, 0): 1.0 for i in range(n2)}
    R01 = PolyMatrix.from_entries(nd, n, r01, dom) if r01 else PolyMatrix.zeros(nd, n, dom)
    d1 = {(n2 + i, n1 + n2 + i, 0, 0): 1.0 for i in range(n3)}
    D1 = PolyMatrix.from_entries(nd, n, d1, dom) if d1 else PolyMatrix.zeros(nd, n, dom)
    Sel1H = Sel1 @ Hth
    T1 = PIOperator((0, n), (0, nd), dom, R0=R01, R1=Sel1H + D1, R2=Sel1H)
    return T, T1, H, Kb, Gb


@dataclass
class PIESystem:
    """Integral-operator system  d/dt (T xf) = A xf + B1 w + B2 u, z = C1 xf (+ D12 u)."""

    T: PIOperator
    A: PIOperator
    B1: PIOperator
    B2: PIOperator
    C1: PIOperator
    D12: np.ndarray
    domain: tuple
    n: int
    n_w: int
    n_u: int
    n_z: int
    name: str = ""

    def space(self):
        return (0, self.n)


def convert(pde):
    """Turn a validated PDE model into its integral-operator form."""
    issues = validate(pde)
    if issues:
        raise ValueError("invalid PDE model: " + "; ".join(issues))
    dom = pde.domain
    a, b = dom
    n, n3 = pde.n, pde.n3
    T, T1, H, Kb, Gb = _state_maps(pde)

    # second derivatives are the trailing fundamental channels
    sel2 = {(i, pde.n1 + pde.n2 + i, 0, 0): 1.0 for i in range(n3)}
    T2 = PIOperator((0, n), (0, n3), dom,
                    R0=PolyMatrix.from_entries(n3, n, sel2, dom) if sel2 else PolyMatrix.zeros(n3, n, dom))

    A = compose(PIOperator.multiplier(pde.A0), T) \
        + compose(PIOperator.multiplier(pde.A1), T1) \
        + compose(PIOperator.multiplier(pde.A2), T2)

    B1 = PIOperator.lift(pde.B21)
    B2 = PIOperator.lift(pde.B22)

    # output: interior integrals through the state maps + boundary terms
    C1 = compose(PIOperator.integral_functional(pde.Ca), T) \
        + compose(PIOperator.integral_functional(pde.Cb), T1)
    if pde.nc and np.any(pde.C10):
        KbH = PolyMatrix.constant(Kb, dom) @ H
        bigH = poly_block([[H], [KbH + Gb]])
        C1 = C1 + PIOperator.integral_functional(PolyMatrix.constant(pde.C10, dom) @ bigH)

    return PIESystem(T=T, A=A, B1=B1, B2=B2, C1=C1, D12=pde.D12.copy(),
                     domain=dom, n=n, n_w=pde.n_w, n_u=pde.n_u, n_z=pde.n_z,
                     name=pde.name)


def reconstruct_state(pde, xf, grid=None):
    """Recover the PDE state from a sampled fundamental state.

    Parameters
    ----------
    xf : FunctionSample
        Sample of the highest-derivative state on some grid.
    grid : Grid, optional
        Defaults to the sample's own grid.

    Returns
    -------
    state : FunctionSample
        The reconstructed PDE state channels.
    bc_residual : float
        Max-norm of the boundary conditions evaluated on the reconstruction.
    """
    g = grid or xf.grid
    T, T1, H, Kb, Gb = _state_maps(pde)
    M = discretize_on_grid(T, g)
    vals = (M @ xf.to_vector()).reshape(pde.n, g.n)
    state = FunctionSample(g, np.zeros(0), vals)
    if pde.nc:
        ch = discretize_on_grid(PIOperator.integral_functional(H), g)
        cgb = discretize_on_grid(PIOperator.integral_functional(Gb), g)
        xca = ch @ xf.to_vector()
        xcb = Kb @ xca + cgb @ xf.to_vector()
        bc_residual = float(np.max(np.abs(pde.BC @ np.concatenate([xca, xcb]))))
    else:
        bc_residual = 0.0
    return state, bc_residual
