"""Tests for the polynomial matrix algebra layer.

Every algebraic identity is checked against an independent oracle: either
pointwise Horner evaluation at random sample points or scipy quadrature for
integrals.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from pipeak.polyalg import (
    DegreeOverflowError,
    PolyMatrix,
    format_poly,
    kernel_compose_integral,
    mul,
    parse_poly,
    poly_equal,
)

DOMAIN = (0.0, 1.0)


def horner_entry(coeffs, s, t):
    """Evaluate one entry's coefficient table by nested Horner recursion."""
    val = 0.0
    for i in reversed(range(coeffs.shape[0])):
        inner = 0.0
        for j in reversed(range(coeffs.shape[1])):
            inner = inner * t + coeffs[i, j]
        val = val * s + inner
    return val


def horner_eval(p, s, t):
    out = np.empty(p.shape)
    for r in range(p.shape[0]):
        for c in range(p.shape[1]):
            out[r, c] = horner_entry(p.coeffs[r, c], s, t)
    return out


def random_poly(rng, rows, cols, ds, dt, domain=DOMAIN):
    return PolyMatrix(rng.standard_normal((rows, cols, ds + 1, dt + 1)), domain)


def sample_points(rng, n=20):
    return rng.uniform(DOMAIN[0], DOMAIN[1], size=(n, 2))


def test_eval_matches_horner_oracle():
    rng = np.random.default_rng(0)
    for _ in range(25):
        p = random_poly(rng, 2, 3, 4, 3)
        for s, t in sample_points(rng, 5):
            assert np.allclose(p.eval(s, t), horner_eval(p, s, t), atol=1e-12)


def test_eval_vectorized_matches_scalar():
    rng = np.random.default_rng(1)
    p = random_poly(rng, 2, 2, 3, 2)
    ss = rng.uniform(0, 1, 7)
    tt = rng.uniform(0, 1, 7)
    batch = p.eval(ss, tt)
    for k in range(7):
        assert np.allclose(batch[k], p.eval(ss[k], tt[k]))


def test_eval_rejects_out_of_domain():
    p = PolyMatrix.var("s", DOMAIN)
    with pytest.raises(ValueError):
        p.eval(1.5)


def test_eval_requires_active_variable():
    p = PolyMatrix.var("theta", DOMAIN)
    with pytest.raises(ValueError):
        p.eval(s=0.5)  # depends on theta, not supplied


def test_add_mul_match_pointwise_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = random_poly(rng, 2, 3, 3, 2)
        q = random_poly(rng, 3, 2, 2, 3)
        r = random_poly(rng, 2, 3, 2, 2)
        for s, t in sample_points(rng, 4):
            assert np.allclose((p + r).eval(s, t), p.eval(s, t) + r.eval(s, t), atol=1e-12)
            assert np.allclose((p @ q).eval(s, t), p.eval(s, t) @ q.eval(s, t), atol=1e-10)


def test_ring_laws():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = random_poly(rng, 2, 2, 2, 1)
        b = random_poly(rng, 2, 2, 1, 2)
        c = random_poly(rng, 2, 2, 2, 2)
        assert poly_equal((a @ b) @ c, a @ (b @ c), tol=1e-10)
        assert poly_equal(a @ (b + c), a @ b + a @ c, tol=1e-10)
        assert poly_equal((a @ b).T, b.T @ a.T, tol=1e-12)
        assert poly_equal(a + b, b + a)


def test_mul_degree_overflow():
    p = PolyMatrix.var("s", DOMAIN)
    q = p
    for _ in range(3):
        q = mul(q, q)  # degree 8 after three squarings
    assert q.deg_s == 8
    with pytest.raises(DegreeOverflowError):
        mul(q, p, max_degree=8)


def test_definite_integral_known_value():
    # int_0^1 (s - s^2) ds = 1/6
    p = PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 2, 0): -1.0}, DOMAIN)
    val = p.integrate("s", 0.0, 1.0)
    assert val.deg_s == 0 and val.deg_theta == 0
    assert abs(val.coeffs[0, 0, 0, 0] - 1.0 / 6.0) < 1e-14


def test_running_integral_in_theta():
    # int_0^s 1 dtheta = s
    one = PolyMatrix.eye(1, DOMAIN)
    result = one.integrate("theta", 0.0, "s")
    expected = PolyMatrix.var("s", DOMAIN)
    assert poly_equal(result, expected)


def test_integral_against_quadrature_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        p = random_poly(rng, 1, 1, 5, 0)

        def f(x):
            return p.eval(x)[0, 0]

        num, _ = quad(f, 0.0, 1.0)
        sym = p.integrate("s", 0.0, 1.0).coeffs[0, 0, 0, 0]
        assert abs(num - sym) < 1e-10


def test_running_integral_against_quadrature():
    rng = np.random.default_rng(5)
    p = random_poly(rng, 1, 1, 3, 2)
    result = p.integrate("theta", 0.0, "s")
    for s in [0.13, 0.5, 0.97]:
        num, _ = quad(lambda t: p.eval(s, t)[0, 0], 0.0, s)
        assert abs(result.eval(s)[0, 0] - num) < 1e-10


def test_integrate_then_differentiate_recovers():
    rng = np.random.default_rng(6)
    p = random_poly(rng, 2, 2, 4, 0)
    F = p.antiderivative("s")
    assert poly_equal(F.diff("s"), p, tol=1e-12)


def test_kernel_compose_integral_volterra_square():
    # int_theta^s 1 * 1 dz = s - theta : composition kernel of two running integrals
    one = PolyMatrix.eye(1, DOMAIN)
    k = kernel_compose_integral(one, one, "theta", "s")
    expected = PolyMatrix.from_entries(
        1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 0, 1): -1.0}, DOMAIN
    )
    assert poly_equal(k, expected)


def test_kernel_compose_integral_against_quadrature():
    rng = np.random.default_rng(7)
    k1 = random_poly(rng, 2, 2, 2, 2)
    k2 = random_poly(rng, 2, 2, 2, 2)
    for lo, hi in [(0.0, 1.0), ("theta", "s"), (0.0, "s"), ("s", 1.0), ("theta", 1.0)]:
        k = kernel_compose_integral(k1, k2, lo, hi)
        for s, t in [(0.7, 0.2), (0.4, 0.9)]:
            lov = t if lo == "theta" else (s if lo == "s" else lo)
            hiv = t if hi == "theta" else (s if hi == "s" else hi)

            def integrand(z, i, j):
                return sum(
                    k1.eval(s, z)[i, m] * k2.eval(z, t)[m, j] for m in range(2)
                )

            for i in range(2):
                for j in range(2):
                    num, _ = quad(integrand, lov, hiv, args=(i, j))
                    assert abs(k.eval(s, t)[i, j] - num) < 1e-9


def test_swap_vars_pointwise():
    rng = np.random.default_rng(8)
    p = random_poly(rng, 2, 2, 3, 2)
    q = p.swap_vars()
    for s, t in sample_points(rng, 6):
        assert np.allclose(q.eval(s, t), p.eval(t, s))


def test_trailing_zero_trim_and_equality():
    arr = np.zeros((1, 1, 4, 3))
    arr[0, 0, 1, 0] = 2.0
    p = PolyMatrix(arr, DOMAIN)
    assert p.deg_s == 1 and p.deg_theta == 0
    q = PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 2.0 + 1e-14}, DOMAIN)
    assert poly_equal(p, q)


def test_format_parse_round_trip():
    rng = np.random.default_rng(9)
    p = random_poly(rng, 2, 3, 2, 2)
    text = format_poly(p)
    q = parse_poly(text, DOMAIN)
    assert poly_equal(p, q, tol=0.0)  # repr-based serialization is exact


def test_parse_poly_grammar():
    # "0 1 | 2" = s + 2*theta ; matrix layout with , and ;
    p = parse_poly("0 1 | 2 , 1 ; 0 , 3 0 -1", DOMAIN)
    assert p.shape == (2, 2)
    assert np.allclose(p.eval(0.5, 0.25)[0, 0], 0.5 + 2 * 0.25)
    assert np.allclose(p.eval(0.5, 0.25)[0, 1], 1.0)
    assert np.allclose(p.eval(0.5, 0.25)[1, 1], 3.0 - 0.25)


def test_immutability():
    p = PolyMatrix.eye(2, DOMAIN)
    with pytest.raises((ValueError, AttributeError)):
        p.coeffs[0, 0, 0, 0] = 5.0
