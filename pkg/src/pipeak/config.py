"""INI-style model files for coupled 1-D PDE systems.

A model file has four to five sections::

    [model]
    name = heat
    domain = 0, 1
    channels = 0, 0, 1        # n1, n2, n3

    [dynamics]
    A2 = 1

    [inputs]
    B21 = s

    [outputs]
    Ca = 1

    [boundary]
    BC = 1, 0, 0, 0
         0, 0, 0, 1

Matrix values separate columns with ``,`` and rows with newlines (or ``;``).
Entries of the spatially varying matrices are polynomials in ``s`` written
with ``+ - * ^`` and parentheses (``**`` also works); purely numeric matrices
(``BC``, ``C10``, ``D11``, ``D12``) take constants only.  Unlisted matrices
default to zero.  A handful of ready-made models ship with the package; see
:func:`builtin_models`.
"""

from __future__ import annotations

import ast
import configparser
from importlib import resources

import numpy as np

from .pde import PDESpec
from .polyalg import PolyMatrix


class ConfigError(ValueError):
    """A model file could not be parsed or is inconsistent."""


# ----------------------------------------------------------------------
# polynomial grammar (expressions in one variable, via the ast module)
# ----------------------------------------------------------------------


def parse_poly(text, var="s"):
    """Coefficient vector (ascending powers) of a polynomial expression."""
    src = text.strip().replace("^", "**")
    if not src:
        raise ConfigError("empty polynomial entry")
    try:
        node = ast.parse(src, mode="eval").body
    except SyntaxError as err:
        raise ConfigError(f"cannot parse polynomial {text!r}: {err}") from None
    coeffs = _poly_walk(node, var, text)
    return np.trim_zeros(coeffs, "b") if coeffs.any() else np.zeros(1)


def _poly_walk(node, var, origin):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return np.array([float(node.value)])
    if isinstance(node, ast.Name):
        if node.id != var:
            raise ConfigError(f"unknown symbol {node.id!r} in {origin!r}")
        return np.array([0.0, 1.0])
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        inner = _poly_walk(node.operand, var, origin)
        return inner if isinstance(node.op, ast.UAdd) else -inner
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            base = _poly_walk(node.left, var, origin)
            if not (isinstance(node.right, ast.Constant)
                    and float(node.right.value).is_integer()
                    and node.right.value >= 0):
                raise ConfigError(f"exponents must be nonnegative integers in {origin!r}")
            out = np.array([1.0])
            for _ in range(int(node.right.value)):
                out = np.convolve(out, base)
            return out
        left = _poly_walk(node.left, var, origin)
        right = _poly_walk(node.right, var, origin)
        if isinstance(node.op, ast.Add):
            return np.polynomial.polynomial.polyadd(left, right)
        if isinstance(node.op, ast.Sub):
            return np.polynomial.polynomial.polysub(left, right)
        if isinstance(node.op, ast.Mult):
            return np.convolve(left, right)
        if isinstance(node.op, ast.Div) and isinstance(node.right, ast.Constant):
            return left / float(node.right.value)
    raise ConfigError(f"unsupported expression in polynomial {origin!r}")


def _split_rows(text):
    rows = []
    for chunk in text.replace(";", "\n").splitlines():
        chunk = chunk.strip()
        if chunk:
            rows.append([cell.strip() for cell in chunk.split(",")])
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ConfigError(f"ragged or empty matrix value {text!r}")
    return rows


def parse_poly_matrix(text, domain):
    """A :class:`PolyMatrix` from comma/newline separated polynomial entries."""
    rows = _split_rows(text)
    polys = [[parse_poly(cell) for cell in row] for row in rows]
    dmax = max(len(p) for row in polys for p in row)
    coeffs = np.zeros((len(polys), len(polys[0]), dmax, 1))
    for i, row in enumerate(polys):
        for j, p in enumerate(row):
            coeffs[i, j, : len(p), 0] = p
    return PolyMatrix(coeffs, domain)


def parse_matrix(text):
    """A float matrix from comma/newline separated numeric entries."""
    rows = _split_rows(text)
    try:
        return np.array([[float(cell) for cell in row] for row in rows])
    except ValueError:
        raise ConfigError(f"matrix value must be numeric: {text!r}") from None


# ----------------------------------------------------------------------
# model assembly
# ----------------------------------------------------------------------

_POLY_FIELDS = {
    "dynamics": ("A0", "A1", "A2"),
    "inputs": ("B21", "B22"),
    "outputs": ("Ca", "Cb"),
}
_NUMERIC_FIELDS = {
    "outputs": ("C10", "D11", "D12"),
    "boundary": ("BC",),
}


def loads_model(text):
    """Build a :class:`PDESpec` from model-file text."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"bad model file: {err}") from None
    if "model" not in cp:
        raise ConfigError("missing [model] section")
    model = cp["model"]
    try:
        domain = tuple(float(v) for v in model.get("domain", "0, 1").split(","))
        channels = tuple(int(v) for v in model.get("channels", "").split(","))
    except ValueError as err:
        raise ConfigError(f"bad [model] entry: {err}") from None
    if len(domain) != 2 or len(channels) != 3:
        raise ConfigError("domain needs two endpoints and channels three counts")

    kw = {"domain": domain, "n1": channels[0], "n2": channels[1], "n3": channels[2],
          "name": model.get("name", "model")}
    seen = {"model"}
    for section in set(_POLY_FIELDS) | set(_NUMERIC_FIELDS):
        seen.add(section)
        if section not in cp:
            continue
        poly_fields = _POLY_FIELDS.get(section, ())
        num_fields = _NUMERIC_FIELDS.get(section, ())
        for key in cp[section]:
            field = key.upper() if key.upper() in poly_fields + num_fields else key.capitalize()
            if field in poly_fields:
                kw[field] = parse_poly_matrix(cp[section][key], domain)
            elif field in num_fields:
                kw[field] = parse_matrix(cp[section][key])
            else:
                raise ConfigError(f"unknown entry {key!r} in [{section}]")
    unknown = set(cp.sections()) - seen
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")

    try:
        return PDESpec(**kw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"inconsistent model: {err}") from None


def load_model(path):
    """Read a model file from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return loads_model(fh.read())


def builtin_models():
    """Names of the models shipped with the package."""
    pkg = resources.files(__package__).joinpath("models")
    return sorted(p.name[:-4] for p in pkg.iterdir() if p.name.endswith(".cfg"))


def load_builtin(name):
    """Load one of the packaged models by name (see :func:`builtin_models`)."""
    res = resources.files(__package__).joinpath("models").joinpath(f"{name}.cfg")
    try:
        text = res.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(
            f"no packaged model {name!r}; available: {builtin_models()}") from None
    return loads_model(text)
