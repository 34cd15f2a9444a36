"""Tests for the 4-slot integral operator algebra and its grid realizations.

The composition and adjoint formulas are verified against the symbolic
application oracle (`apply_poly`, which only relies on the polynomial layer
already tested elsewhere) and against scipy quadrature.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from pipeak.polyalg import PolyMatrix, mul, poly_equal
from pipeak.piop import (
    FunctionSample,
    Grid,
    PIOperator,
    apply,
    apply_poly,
    block2x2,
    compose,
    discretize_on_grid,
    estimate_opnorm,
    injection,
    invert_on_grid,
    op_equal,
)

DOM = (0.0, 1.0)


def random_op(rng, dims_in, dims_out, deg=2, domain=DOM):
    m1, n1 = dims_in
    m2, n2 = dims_out
    rp = lambda r, c, ds, dt: PolyMatrix(rng.standard_normal((r, c, ds + 1, dt + 1)), domain)
    return PIOperator(
        dims_in, dims_out, domain,
        P=rng.standard_normal((m2, m1)),
        Q1=rp(m2, n1, deg, 0),
        Q2=rp(n2, m1, deg, 0),
        R0=rp(n2, n1, deg, 0),
        R1=rp(n2, n1, deg, deg),
        R2=rp(n2, n1, deg, deg),
    )


def random_input(rng, dims, deg=3, domain=DOM):
    m, n = dims
    x = rng.standard_normal(m)
    p = PolyMatrix(rng.standard_normal((n, 1, deg + 1, 1)), domain)
    return x, p


def pair_inner(xa, pa, xb, pb):
    """Exact inner product of two vector+polynomial pairs."""
    val = float(xa @ xb)
    prod = mul(pa.T, pb)
    val += prod.integrate("s", *DOM).coeffs[0, 0, 0, 0]
    return val


# ----------------------------------------------------------------------
# algebra against the symbolic oracle
# ----------------------------------------------------------------------


def test_apply_poly_against_quadrature():
    rng = np.random.default_rng(10)
    A = random_op(rng, (2, 2), (1, 2))
    x, p = random_input(rng, (2, 2))
    yv, yp = apply_poly(A, x, p)

    # vector part: P x + int Q1(th) p(th) dth
    for r in range(1):
        num, _ = quad(lambda t: (A.Q1.eval(t) @ p.eval(t))[r, 0], 0, 1)
        assert abs(yv[r] - (A.P @ x)[r] - num) < 1e-10

    # function part at sample points
    for s in [0.2, 0.55, 0.9]:
        lo = np.array([quad(lambda t, rr=r: (A.R1.eval(s, t) @ p.eval(t))[rr, 0], 0, s)[0] for r in range(2)])
        hi = np.array([quad(lambda t, rr=r: (A.R2.eval(s, t) @ p.eval(t))[rr, 0], s, 1)[0] for r in range(2)])
        expect = A.Q2.eval(s) @ x + A.R0.eval(s) @ p.eval(s)[:, 0] + lo + hi
        assert np.allclose(yp.eval(s)[:, 0], expect, atol=1e-9)


def test_compose_matches_sequential_application():
    rng = np.random.default_rng(11)
    for dims in [((2, 2), (1, 3), (2, 1)), ((0, 2), (2, 2), (0, 1)), ((1, 1), (0, 2), (3, 0))]:
        din, dmid, dout = dims
        B = random_op(rng, din, dmid)
        A = random_op(rng, dmid, dout)
        C = compose(A, B)
        assert C.dims_in == din and C.dims_out == dout
        for _ in range(3):
            x, p = random_input(rng, din)
            y1v, y1p = apply_poly(B, x, p)
            y2v, y2p = apply_poly(A, y1v, y1p)
            ycv, ycp = apply_poly(C, x, p)
            assert np.allclose(ycv, y2v, atol=1e-9)
            assert poly_equal(ycp, y2p, tol=1e-9)


def test_compose_associative():
    rng = np.random.default_rng(12)
    A = random_op(rng, (1, 2), (2, 1), deg=1)
    B = random_op(rng, (2, 1), (1, 2), deg=1)
    C = random_op(rng, (2, 2), (2, 1), deg=1)
    assert op_equal(compose(compose(A, B), C), compose(A, compose(B, C)), tol=1e-9)


def test_identity_neutral():
    rng = np.random.default_rng(13)
    A = random_op(rng, (2, 1), (1, 2))
    I_in = PIOperator.identity((2, 1), DOM)
    I_out = PIOperator.identity((1, 2), DOM)
    assert op_equal(compose(A, I_in), A, tol=1e-12)
    assert op_equal(compose(I_out, A), A, tol=1e-12)


def test_adjoint_involution_and_product_rule():
    rng = np.random.default_rng(14)
    A = random_op(rng, (2, 2), (1, 2))
    B = random_op(rng, (1, 1), (2, 2))
    assert op_equal(A.adjoint().adjoint(), A, tol=1e-14)
    assert op_equal(compose(A, B).adjoint(), compose(B.adjoint(), A.adjoint()), tol=1e-9)


def test_adjoint_inner_product_identity():
    # <A u, v> == <u, A* v> computed exactly through polynomial integration
    rng = np.random.default_rng(15)
    for _ in range(10):
        A = random_op(rng, (2, 2), (1, 3))
        x, p = random_input(rng, (2, 2))
        y, q = random_input(rng, (1, 3))
        Ax_v, Ax_p = apply_poly(A, x, p)
        Aty_v, Aty_p = apply_poly(A.adjoint(), y, q)
        lhs = pair_inner(Ax_v, Ax_p, y, q)
        rhs = pair_inner(x, p, Aty_v, Aty_p)
        assert abs(lhs - rhs) < 1e-9 * max(1, abs(lhs))


def test_linear_combinations():
    rng = np.random.default_rng(16)
    A = random_op(rng, (1, 2), (2, 2))
    B = random_op(rng, (1, 2), (2, 2))
    x, p = random_input(rng, (1, 2))
    yv, yp = apply_poly(A + (-0.5) * B, x, p)
    av, ap = apply_poly(A, x, p)
    bv, bp = apply_poly(B, x, p)
    assert np.allclose(yv, av - 0.5 * bv)
    assert poly_equal(yp, ap + (-0.5) * bp, tol=1e-12)


def test_volterra_composition_kernel():
    # (int_0^s)^2 has kernel (s - theta)
    one = PolyMatrix.eye(1, DOM)
    V = PIOperator.volterra(lower=one)
    VV = compose(V, V)
    expect = PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 0, 1): -1.0}, DOM)
    assert poly_equal(VV.R1, expect, tol=1e-13)
    assert VV.R2.is_zero()


def test_adjoint_of_volterra():
    # adjoint of int_0^s is int_s^1
    one = PolyMatrix.eye(1, DOM)
    V = PIOperator.volterra(lower=one)
    Vt = V.adjoint()
    assert Vt.R1.is_zero()
    assert poly_equal(Vt.R2, one, tol=1e-14)


def test_block2x2_consistency():
    rng = np.random.default_rng(17)
    A = random_op(rng, (1, 1), (1, 1))
    B = random_op(rng, (1, 1), (1, 1))
    C = random_op(rng, (1, 1), (1, 1))
    D = random_op(rng, (1, 1), (1, 1))
    blk = block2x2(A, B, C, D)
    assert blk.dims_in == (2, 2) and blk.dims_out == (2, 2)
    xa, pa = random_input(rng, (1, 1))
    xb, pb = random_input(rng, (1, 1))
    x = np.concatenate([xa, xb])
    p = PolyMatrix(np.concatenate([_pad4(pa, pb), _pad4(pb, pa)], axis=0), DOM)
    yv, yp = apply_poly(blk, x, p)
    for (op1, op2, xi, pi) in [(A, B, 0, 0), (C, D, 1, 1)]:
        v1, q1 = apply_poly(op1, xa, pa)
        v2, q2 = apply_poly(op2, xb, pb)
        assert np.allclose(yv[xi], (v1 + v2)[0], atol=1e-10)
        assert poly_equal(PolyMatrix(yp.coeffs[pi : pi + 1, :], DOM), q1 + q2, tol=1e-9)


def _pad4(p, q):
    ds = max(p.coeffs.shape[2], q.coeffs.shape[2])
    dt = max(p.coeffs.shape[3], q.coeffs.shape[3])
    out = np.zeros((1, 1, ds, dt))
    out[:, :, : p.coeffs.shape[2], : p.coeffs.shape[3]] = p.coeffs
    return out


def test_injection_isometry():
    inj = injection((1, 1), (2, 3), (1, 2), DOM)
    proj = inj.adjoint()
    assert op_equal(compose(proj, inj), PIOperator.identity((1, 1), DOM), tol=1e-14)


# ----------------------------------------------------------------------
# grids
# ----------------------------------------------------------------------


def test_clenshaw_curtis_weights_exact_for_polynomials():
    g = Grid.chebyshev(9, DOM)
    for deg in range(9):
        vals = g.points**deg
        assert abs(np.sum(g.weights * vals) - 1.0 / (deg + 1)) < 1e-13


def test_grid_weights_smooth_function():
    g = Grid.chebyshev(32, (0.0, 2.0))
    approx = np.sum(g.weights * np.exp(-g.points))
    exact = 1.0 - np.exp(-2.0)
    assert abs(approx - exact) < 1e-12


def test_interp_matrix_reproduces_polynomials():
    g = Grid.chebyshev(12, DOM)
    z = np.linspace(0.05, 0.95, 17)
    B = g.interp_matrix(z)
    f = g.points**7 - 2 * g.points**3
    assert np.allclose(B @ f, z**7 - 2 * z**3, atol=1e-10)
    # exact hits reproduce nodal values
    Bhit = g.interp_matrix(g.points[[3, 5]])
    assert np.allclose(Bhit @ f, f[[3, 5]], atol=1e-14)


def test_moment_matrices_against_quadrature():
    g = Grid.chebyshev(10, DOM)
    J, F = g._moment_data(3)
    f = np.cos(2 * g.points)  # interpolated as degree-9 polynomial
    for q in [0, 2]:
        for i in [3, 7]:
            si = g.points[i]
            interp = lambda t: g.interp_matrix(np.atleast_1d(t))[0] @ f
            num, _ = quad(lambda t: t**q * interp(t), 0, si, limit=100)
            assert abs(J[q][i] @ f - num) < 1e-9
        num, _ = quad(lambda t: t**q * interp(t), 0, 1, limit=100)
        assert abs(F[q] @ f - num) < 1e-9


# ----------------------------------------------------------------------
# numeric realizations
# ----------------------------------------------------------------------


def test_discretize_matches_apply_poly():
    rng = np.random.default_rng(18)
    g = Grid.chebyshev(24, DOM)
    for dims_in, dims_out in [((2, 2), (1, 2)), ((0, 1), (0, 1)), ((1, 2), (2, 0))]:
        A = random_op(rng, dims_in, dims_out, deg=2)
        M = discretize_on_grid(A, g)
        x, p = random_input(rng, dims_in, deg=4)
        fs = FunctionSample.from_poly(g, p, vec=x)
        out = M @ fs.to_vector()
        yv, yp = apply_poly(A, x, p)
        m2, n2 = dims_out
        assert np.allclose(out[:m2], yv, atol=1e-9)
        if n2:
            vals = out[m2:].reshape(n2, g.n)
            expect = yp.eval(g.points)[:, :, 0].T
            assert np.allclose(vals, expect, atol=1e-8)


def test_apply_quadrature_path_matches_symbolic():
    rng = np.random.default_rng(19)
    g = Grid.chebyshev(20, DOM)
    A = random_op(rng, (1, 2), (2, 2), deg=2)
    x, p = random_input(rng, (1, 2), deg=3)
    fs = FunctionSample.from_poly(g, p, vec=x)
    out = apply(A, fs)
    yv, yp = apply_poly(A, x, p)
    assert np.allclose(out.vec, yv, atol=1e-8)
    assert np.allclose(out.values, yp.eval(g.points)[:, :, 0].T, atol=1e-7)


def test_opnorm_volterra():
    # |int_0^s| on L2(0,1) equals 2/pi
    V = PIOperator.volterra(lower=PolyMatrix.eye(1, DOM))
    nrm = estimate_opnorm(V, Grid.chebyshev(64, DOM))
    assert abs(nrm - 2 / np.pi) < 1e-4


def test_opnorm_multiplier():
    # multiplication by s has norm sup|s| = 1
    M = PIOperator.multiplier(PolyMatrix.var("s", DOM))
    nrm = estimate_opnorm(M, Grid.chebyshev(64, DOM))
    assert abs(nrm - 1.0) < 2e-2  # sup norm attained at the boundary, grid-limited


def test_volterra_resolvent_exponential():
    # (I + int_0^s)^{-1} applied to 1 equals exp(-s)
    g = Grid.chebyshev(48, DOM)
    one = PolyMatrix.eye(1, DOM)
    T = PIOperator.identity((0, 1), DOM) + PIOperator.volterra(lower=one)
    Minv, info = invert_on_grid(T, g)
    assert info["residual"] <= 1e-8
    sol = Minv @ np.ones(g.n)
    assert np.allclose(sol, np.exp(-g.points), atol=1e-10)


def test_invert_rejects_singular():
    g = Grid.chebyshev(24, DOM)
    V = PIOperator.volterra(lower=PolyMatrix.eye(1, DOM))
    with pytest.raises(np.linalg.LinAlgError):
        invert_on_grid(V, g)


def test_inner_product_weights():
    g = Grid.chebyshev(40, DOM)
    p = PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 2, 0): -1.0}, DOM)
    fs = FunctionSample.from_poly(g, p)
    # int_0^1 (s - s^2)^2 ds = 1/30
    assert abs(fs.inner(fs) - 1.0 / 30.0) < 1e-12
