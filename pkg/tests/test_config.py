"""Tests for the model-file format and its polynomial grammar."""

import numpy as np
import pytest

from pipeak.config import (
    ConfigError,
    builtin_models,
    load_builtin,
    loads_model,
    parse_poly,
    parse_poly_matrix,
    parse_matrix,
)
from pipeak.pde import validate


def test_parse_poly_basic():
    assert np.allclose(parse_poly("3"), [3.0])
    assert np.allclose(parse_poly("s"), [0.0, 1.0])
    assert np.allclose(parse_poly("s^2 - 2*s"), [0.0, -2.0, 1.0])
    assert np.allclose(parse_poly("1/2"), [0.5])
    assert np.allclose(parse_poly("-(s - 1)"), [1.0, -1.0])


def test_parse_poly_product_expansion():
    # 10 s (s-1)(s-1/2) = 10 s^3 - 15 s^2 + 5 s
    assert np.allclose(parse_poly("10*s*(s - 1)*(s - 1/2)"), [0.0, 5.0, -15.0, 10.0])


def test_parse_poly_power():
    assert np.allclose(parse_poly("(1 + s)^3"), [1.0, 3.0, 3.0, 1.0])
    assert np.allclose(parse_poly("2**3"), [8.0])


def test_parse_poly_rejections():
    for bad in ("t", "s^-1", "s^(1/2)", "__import__('os')", "s(1)", "1; 2", ""):
        with pytest.raises(ConfigError):
            parse_poly(bad)


def test_parse_poly_matrix_shape_and_values():
    m = parse_poly_matrix("1, s; 0, s^2", (0.0, 1.0))
    assert m.shape == (2, 2)
    vals = m.eval(np.array([0.5]))[0]
    assert np.allclose(vals, [[1.0, 0.5], [0.0, 0.25]])


def test_parse_poly_matrix_newline_rows():
    m = parse_poly_matrix("1, 0\n0, 1", (0.0, 1.0))
    assert m.shape == (2, 2)


def test_ragged_matrix_rejected():
    with pytest.raises(ConfigError):
        parse_poly_matrix("1, 2; 3", (0.0, 1.0))
    with pytest.raises(ConfigError):
        parse_matrix("1, s")


MODEL_TEXT = """
[model]
name = demo
domain = 0, 1
channels = 0, 1, 0

[dynamics]
A1 = 1

[inputs]
B21 = s - s^2

[outputs]
Ca = 1

[boundary]
BC = 0, 1
"""


def test_loads_model_fields():
    pde = loads_model(MODEL_TEXT)
    assert pde.name == "demo"
    assert (pde.n1, pde.n2, pde.n3) == (0, 1, 0)
    assert pde.n_w == 1 and pde.n_u == 0 and pde.n_z == 1
    assert validate(pde) == []
    assert np.allclose(pde.BC, [[0.0, 1.0]])


def test_loads_model_unknown_entry():
    bad = MODEL_TEXT.replace("A1 = 1", "A1 = 1\nbogus = 2")
    with pytest.raises(ConfigError):
        loads_model(bad)


def test_loads_model_unknown_section():
    with pytest.raises(ConfigError):
        loads_model(MODEL_TEXT + "\n[extra]\nx = 1\n")


def test_loads_model_missing_model_section():
    with pytest.raises(ConfigError):
        loads_model("[dynamics]\nA0 = 1\n")


def test_builtin_models_present_and_valid():
    names = builtin_models()
    for expected in ("transport", "heat", "reaction_diffusion", "beam",
                     "transport_control"):
        assert expected in names
    for name in names:
        pde = load_builtin(name)
        assert validate(pde) == [], name


def test_builtin_shapes():
    beam = load_builtin("beam")
    assert beam.n == 4 and beam.n_u == 1 and beam.n_w == 1 and beam.n_z == 1
    rd = load_builtin("reaction_diffusion")
    assert rd.n3 == 1 and rd.n_u == 1
    # reaction strength 14 on the diagonal
    assert np.allclose(rd.A0.eval(np.array([0.3]))[0], [[14.0]])


def test_load_builtin_unknown():
    with pytest.raises(ConfigError):
        load_builtin("definitely-not-a-model")
