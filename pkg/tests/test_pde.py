"""Tests for PDE models and their conversion to integral-operator systems.

The conversion is validated symbolically: for arbitrary polynomial
fundamental states, the reconstructed state must satisfy the boundary
conditions exactly, differentiate back to the fundamental state, and
reproduce the right-hand side and output assembled by hand.
"""

import numpy as np
import pytest

from pipeak.pde import (
    IncompatibleBCError,
    PDESpec,
    boundary_elimination,
    convert,
    reconstruct_state,
    validate,
    _state_maps,
)
from pipeak.piop import FunctionSample, Grid, PIOperator, apply_poly
from pipeak.polyalg import PolyMatrix, mul, poly_equal

DOM = (0.0, 1.0)


def transport_pde():
    # d/dt x = d/ds x + (s - s^2) w,  x(t, 1) = 0,  z = int_0^1 x
    return PDESpec(
        domain=DOM, n1=0, n2=1, n3=0,
        A1=PolyMatrix.eye(1, DOM),
        B21=PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 2, 0): -1.0}, DOM),
        Ca=PolyMatrix.eye(1, DOM),
        BC=np.array([[0.0, 1.0]]),
        name="transport",
    )


def heat_pde():
    # d/dt x = d2/ds2 x + s w,  x(0) = 0, x'(1) = 0,  z = int_0^1 x
    return PDESpec(
        domain=DOM, n1=0, n2=0, n3=1,
        A2=PolyMatrix.eye(1, DOM),
        B21=PolyMatrix.var("s", DOM),
        Ca=PolyMatrix.eye(1, DOM),
        BC=np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]),
        name="heat",
    )


def random_mixed_pde(seed):
    """A model with all three smoothness classes and a random valid BC."""
    rng = np.random.default_rng(seed)
    rp = lambda r, c, d: PolyMatrix(rng.standard_normal((r, c, d + 1, 1)), DOM)
    while True:
        BC = rng.standard_normal((3, 6))
        pde = PDESpec(
            domain=DOM, n1=1, n2=1, n3=1,
            A0=rp(3, 3, 1), A1=rp(3, 2, 1), A2=rp(3, 1, 0),
            B21=rp(3, 1, 2), Ca=rp(1, 3, 1), Cb=rp(1, 2, 0),
            C10=rng.standard_normal((1, 6)),
            BC=BC,
        )
        if not validate(pde):
            return pde, rng


def row(p, i, j=None):
    j = i + 1 if j is None else j
    return PolyMatrix(p.coeffs[i:j], p.domain)


def random_xf(rng, n, deg=3):
    return PolyMatrix(rng.standard_normal((n, 1, deg + 1, 1)), DOM)


# ----------------------------------------------------------------------
# boundary elimination and the state map
# ----------------------------------------------------------------------


def test_transport_state_map_kernels():
    sys = convert(transport_pde())
    # with x(1) = 0:  x(s) = -int_s^1 xf
    assert sys.T.R1.is_zero(tol=1e-14)
    assert poly_equal(sys.T.R2, PolyMatrix.constant([[-1.0]], DOM))
    # A is the identity on the fundamental state
    assert poly_equal(sys.A.R0, PolyMatrix.eye(1, DOM))
    assert sys.A.R1.is_zero(tol=1e-14) and sys.A.R2.is_zero(tol=1e-14)
    # z = int_0^1 x ds = -int_0^1 th * xf(th) dth
    minus_s = PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): -1.0}, DOM)
    assert poly_equal(sys.C1.Q1, minus_s, tol=1e-13)


def test_heat_state_map_kernels():
    sys = convert(heat_pde())
    # with x(0) = 0, x'(1) = 0:  R1 = -theta, R2 = -s
    assert poly_equal(sys.T.R1, PolyMatrix.from_entries(1, 1, {(0, 0, 0, 1): -1.0}, DOM), tol=1e-13)
    assert poly_equal(sys.T.R2, PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): -1.0}, DOM), tol=1e-13)
    assert poly_equal(sys.A.R0, PolyMatrix.eye(1, DOM))
    # z kernel: integrate the reconstruction:  -s + s^2/2
    expect = PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): -1.0, (0, 0, 2, 0): 0.5}, DOM)
    assert poly_equal(sys.C1.Q1, expect, tol=1e-13)


def test_reconstruction_satisfies_bc_and_derivatives():
    pde, rng = random_mixed_pde(21)
    T, T1, H, Kb, Gb = _state_maps(pde)
    for _ in range(5):
        xf = random_xf(rng, 3)
        _, x = apply_poly(T, None, xf)

        # boundary values from the reconstruction itself
        x2, x3 = row(x, 1), row(x, 2)
        x3p = x3.diff("s")
        xca = np.array([x2.eval(0.0)[0, 0], x3.eval(0.0)[0, 0], x3p.eval(0.0)[0, 0]])
        xcb = np.array([x2.eval(1.0)[0, 0], x3.eval(1.0)[0, 0], x3p.eval(1.0)[0, 0]])
        assert np.max(np.abs(pde.BC @ np.concatenate([xca, xcb]))) < 1e-10

        # the boundary kernel reproduces those values
        hval, _ = apply_poly(PIOperator.integral_functional(H), None, xf)
        assert np.allclose(hval, xca, atol=1e-10)
        gval, _ = apply_poly(PIOperator.integral_functional(Gb), None, xf)
        assert np.allclose(Kb @ xca + gval, xcb, atol=1e-10)

        # derivative structure: x1 = xf1, x2' = xf2, x3'' = xf3
        assert poly_equal(row(x, 0), row(xf, 0), tol=1e-10)
        assert poly_equal(x2.diff("s"), row(xf, 1), tol=1e-10)
        assert poly_equal(x3.diff("s").diff("s"), row(xf, 2), tol=1e-10)

        # T1 produces the first derivatives of the differentiated channels
        _, dx = apply_poly(T1, None, xf)
        assert poly_equal(row(dx, 0), x2.diff("s"), tol=1e-10)
        assert poly_equal(row(dx, 1), x3.diff("s"), tol=1e-10)


def test_dynamics_operator_matches_hand_assembly():
    pde, rng = random_mixed_pde(22)
    sys = convert(pde)
    T, T1, _, _, _ = _state_maps(pde)
    for _ in range(3):
        xf = random_xf(rng, 3)
        _, x = apply_poly(T, None, xf)
        _, dx = apply_poly(T1, None, xf)
        rhs = mul(pde.A0, x) + mul(pde.A1, dx) + mul(pde.A2, row(xf, 2))
        _, got = apply_poly(sys.A, None, xf)
        assert poly_equal(got, rhs, tol=1e-9)


def test_output_operator_matches_hand_assembly():
    pde, rng = random_mixed_pde(23)
    sys = convert(pde)
    T, T1, H, Kb, Gb = _state_maps(pde)
    xf = random_xf(rng, 3)
    _, x = apply_poly(T, None, xf)
    _, dx = apply_poly(T1, None, xf)
    interior = mul(pde.Ca, x) + mul(pde.Cb, dx)
    z = interior.integrate("s", 0.0, 1.0).coeffs[:, 0, 0, 0]
    xca, _ = apply_poly(PIOperator.integral_functional(H), None, xf)
    gval, _ = apply_poly(PIOperator.integral_functional(Gb), None, xf)
    z = z + pde.C10 @ np.concatenate([xca, Kb @ xca + gval])
    got, _ = apply_poly(sys.C1, None, xf)
    assert np.allclose(got, z, atol=1e-9)


def test_disturbance_and_control_lifts():
    pde = transport_pde()
    sys = convert(pde)
    assert sys.n_w == 1 and sys.n_u == 0
    w = np.array([2.0])
    _, f = apply_poly(sys.B1, w, None)
    assert np.allclose(f.eval(0.5)[:, 0], 2.0 * (0.5 - 0.25), atol=1e-14)


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------


def test_validate_rejects_feedthrough():
    pde = transport_pde()
    pde.D11 = np.array([[1.0]])
    assert any("D11" in s or "feedthrough" in s for s in validate(pde))


def test_validate_rejects_unsolvable_bc():
    pde = transport_pde()
    pde.BC = np.array([[1.0, -1.0]])  # periodic-type condition: constants drop out
    issues = validate(pde)
    assert issues and any("boundary" in s for s in issues)
    with pytest.raises(ValueError):
        convert(pde)


def test_validate_rejects_bad_shapes():
    pde = transport_pde()
    pde.BC = np.array([[0.0, 1.0, 0.0]])
    assert any("BC" in s for s in validate(pde))


def test_beam_style_bc_is_solvable():
    # four first-order channels, mixed-end value conditions
    BC = np.zeros((4, 8))
    BC[0, 0] = 1.0  # ch1 at a
    BC[1, 2] = 1.0  # ch3 at a
    BC[2, 3] = 1.0  # ch4 at a
    BC[3, 5] = 1.0  # ch2 at b
    pde = PDESpec(domain=DOM, n1=0, n2=4, n3=0,
                  A1=PolyMatrix.eye(4, DOM),
                  Ca=PolyMatrix.constant(np.eye(1, 4), DOM),
                  BC=BC)
    assert validate(pde) == []
    H, Kb, Gb = boundary_elimination(pde)
    assert H.shape == (4, 4)


# ----------------------------------------------------------------------
# numeric reconstruction
# ----------------------------------------------------------------------


def test_reconstruct_state_bc_residual():
    pde, rng = random_mixed_pde(24)
    g = Grid.chebyshev(32, DOM)
    for _ in range(3):
        xf_poly = random_xf(rng, 3, deg=4)
        xf = FunctionSample.from_poly(g, xf_poly)
        state, resid = reconstruct_state(pde, xf)
        assert resid <= 1e-10
        # reconstruction matches the symbolic path
        T, _, _, _, _ = _state_maps(pde)
        _, x = apply_poly(T, None, xf_poly)
        assert np.allclose(state.values, x.eval(g.points)[:, :, 0].T, atol=1e-8)


def test_transport_reconstruction_closed_form():
    pde = transport_pde()
    g = Grid.chebyshev(24, DOM)
    xf = FunctionSample(g, np.zeros(0), np.ones((1, g.n)))
    state, resid = reconstruct_state(pde, xf)
    assert resid <= 1e-12
    assert np.allclose(state.values[0], g.points - 1.0, atol=1e-10)
