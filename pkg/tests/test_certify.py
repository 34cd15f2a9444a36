"""Tests for impulse-to-peak certification.

Reference levels come from two independent sources: closed-form impulse
responses of the example systems (the transport response peaks at 1/6, the
heat response at 1/2) and a brute-force grid discretization of the same
storage-function program solved as an ordinary SDP, with no polynomial or
Gram-form restriction.
"""

import json

import numpy as np
import pytest

from pipeak.certify import (
    Certificate,
    deserialize_operator,
    duality_gap,
    i2p_bound,
    serialize_operator,
    verify_certificate,
)
from pipeak.pde import PDESpec, convert
from pipeak.piop import Grid, discretize_on_grid
from pipeak.polyalg import PolyMatrix

DOM = (0.0, 1.0)


def transport_pie():
    # d/dt x = d/ds x + (s - s^2) w,  x(t, 1) = 0,  z = int_0^1 x
    # impulse response z(t) = 1/6 - t^2/2 + t^3/3, peak 1/6 at t = 0
    pde = PDESpec(
        domain=DOM, n1=0, n2=1, n3=0,
        A1=PolyMatrix.eye(1, DOM),
        B21=PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 2, 0): -1.0}, DOM),
        Ca=PolyMatrix.eye(1, DOM),
        BC=np.array([[0.0, 1.0]]),
        name="transport",
    )
    return convert(pde)


def heat_pie():
    # d/dt x = d2/ds2 x + s w,  x(0) = 0, x'(1) = 0,  z = int_0^1 x
    # initial state s*v has z(0) = 1/2 and the response decays
    pde = PDESpec(
        domain=DOM, n1=0, n2=0, n3=1,
        A2=PolyMatrix.eye(1, DOM),
        B21=PolyMatrix.var("s", DOM),
        Ca=PolyMatrix.eye(1, DOM),
        BC=np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]),
        name="heat",
    )
    return convert(pde)


_CACHE = {}


def certified(pie_fn, form, coercive=False):
    key = (pie_fn.__name__, form, coercive)
    if key not in _CACHE:
        _CACHE[key] = i2p_bound(pie_fn(), form=form, coercive=coercive, method="direct")
    return _CACHE[key]


def grid_level_optimum(pie, form="dual", n=24):
    """The same storage-function program, brute-forced on a quadrature grid.

    The operator variable becomes a full matrix in the weighted geometry, so
    no Gram-form restriction applies; the optimum is a sharp reference for
    the polynomial certificates (which can only be looser).
    """
    import cvxpy as cp

    g = Grid.chebyshev(n, pie.domain)
    D = np.diag(np.tile(g.weights, pie.T.dims_in[1]))
    T = discretize_on_grid(pie.T, g)
    A = discretize_on_grid(pie.A, g)
    B = discretize_on_grid(pie.B1, g)
    C = discretize_on_grid(pie.C1, g)
    n_w, n_z = pie.n_w, pie.n_z
    N = T.shape[0]
    Q = cp.Variable((N, N))
    g2 = cp.Variable()
    if form == "dual":
        GT = D @ T @ Q
        GA = D @ A @ Q
        lvl = cp.bmat([[g2 * np.eye(n_w), B.T @ D], [D @ B, GT.T]])
        inj = cp.bmat([[GT, (C @ Q).T], [C @ Q, np.eye(n_z)]])
    else:
        GT = T.T @ D @ Q
        GA = A.T @ D @ Q
        lvl = cp.bmat([[g2 * np.eye(n_z), C], [C.T, GT.T]])
        inj = cp.bmat([[GT, Q.T @ D @ B], [(Q.T @ D @ B).T, np.eye(n_w)]])
    cons = [GT == GT.T, GT >> 0, GA + GA.T << 0, lvl >> 0, inj >> 0]
    prob = cp.Problem(cp.Minimize(g2), cons)
    prob.solve(solver="SCS", eps=1e-9, max_iters=200000)
    assert prob.status in ("optimal", "optimal_inaccurate")
    return float(np.sqrt(g2.value))


# ----------------------------------------------------------------------
# certified levels against known responses
# ----------------------------------------------------------------------


def test_transport_dual_level():
    cert = certified(transport_pie, "dual")
    assert cert.certified and cert.status == "optimal"
    assert 1.0 / 6.0 - 1e-4 <= cert.gamma <= 0.1700
    assert cert.checks["passed"]


def test_transport_primal_level():
    cert = certified(transport_pie, "primal")
    assert cert.certified
    assert cert.gamma <= 0.172
    # a certified level can never undercut the true peak 1/6
    assert cert.gamma >= 1.0 / 6.0 - 1e-4


def test_heat_primal_level():
    cert = certified(heat_pie, "primal")
    assert cert.certified
    assert 0.5 - 1e-4 <= cert.gamma <= 0.510


def test_duality_gap_transport():
    gap = duality_gap(certified(transport_pie, "primal"), certified(transport_pie, "dual"))
    assert gap is not None and gap <= 0.02


def test_dual_level_matches_grid_program():
    pie = transport_pie()
    ref = grid_level_optimum(pie, "dual")
    cert = certified(transport_pie, "dual")
    # polynomial restriction is an over-approximation of the grid optimum
    assert cert.gamma >= ref - 0.002
    assert cert.gamma <= ref * 1.05


def test_coercive_level_close_to_noncoercive():
    cert = i2p_bound(transport_pie(), form="primal", coercive=True, method="direct")
    assert cert.certified
    assert 1.0 / 6.0 - 1e-4 <= cert.gamma <= 0.172


# ----------------------------------------------------------------------
# certificate verification catches invalid witnesses
# ----------------------------------------------------------------------


def test_verify_rejects_deflated_level():
    cert = certified(transport_pie, "dual")
    Q = deserialize_operator(cert.witness["Q"])
    report = verify_certificate(transport_pie(), Q, cert.gamma_squared / 4.0, form="dual")
    assert not report["passed"]
    assert not report["level"]["ok"]


def test_verify_rejects_negated_witness():
    cert = certified(transport_pie, "dual")
    Q = deserialize_operator(cert.witness["Q"])
    report = verify_certificate(transport_pie(), Q.scale(-1.0), cert.gamma_squared, form="dual")
    assert not report["passed"]


def test_verify_passes_on_genuine_witness():
    cert = certified(transport_pie, "dual")
    checks = cert.checks
    assert checks["passed"]
    assert checks["preamble_residual"] <= 1e-4
    for name in ("storage", "decay", "level", "injection"):
        assert checks[name]["ok"], name


# ----------------------------------------------------------------------
# bookkeeping
# ----------------------------------------------------------------------


def test_witness_serialization_roundtrip():
    cert = certified(transport_pie, "dual")
    Q = deserialize_operator(cert.witness["Q"])
    packed = serialize_operator(Q)
    Q2 = deserialize_operator(json.loads(json.dumps(packed)))
    assert np.array_equal(Q.P, Q2.P)
    for name in ("Q1", "Q2", "R0", "R1", "R2"):
        assert np.array_equal(getattr(Q, name).coeffs, getattr(Q2, name).coeffs)


def test_certificate_report_shape():
    cert = certified(transport_pie, "dual")
    out = cert.to_dict()
    assert out["system"] == "transport"
    assert "witness" not in out and "metrics" not in out
    assert np.isclose(out["gamma"] ** 2, out["gamma_squared"])
    full = cert.to_dict(include_witness=True, include_metrics=True)
    assert "Q" in full["witness"] and "method" in full["metrics"]
    parsed = json.loads(cert.to_json())
    assert parsed["certified"] is True


def test_unknown_form_rejected():
    with pytest.raises(ValueError):
        i2p_bound(transport_pie(), form="sideways")
