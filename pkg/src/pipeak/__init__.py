"""Impulse-to-peak certification and control synthesis for 1-D linear PDEs.

The pipeline: describe a coupled PDE (:mod:`pipeak.pde` or a model file via
:mod:`pipeak.config`), convert it to an equivalent integral-operator system,
bound its impulse-to-peak norm with operator-valued convex programs
(:mod:`pipeak.certify`), synthesize state feedback minimizing that bound
(:mod:`pipeak.synthesize`), and cross-check everything against independent
time-domain simulation (:mod:`pipeak.simkit`).
"""

from .certify import Certificate, duality_gap, i2p_bound, verify_certificate
from .config import builtin_models, load_builtin, load_model
from .pde import PDESpec, PIESystem, convert, validate
from .piop import Grid, PIOperator, compose
from .polyalg import PolyMatrix
from .simkit import SimResult, simulate_pde, simulate_pie, spectral_abscissa
from .synthesize import Controller, SynthesisResult, closed_loop, extract_controller, synthesize

__all__ = [
    "Certificate",
    "Controller",
    "Grid",
    "PDESpec",
    "PIESystem",
    "PIOperator",
    "PolyMatrix",
    "SimResult",
    "SynthesisResult",
    "builtin_models",
    "closed_loop",
    "compose",
    "convert",
    "duality_gap",
    "extract_controller",
    "i2p_bound",
    "load_builtin",
    "load_model",
    "simulate_pde",
    "simulate_pie",
    "spectral_abscissa",
    "synthesize",
    "validate",
    "verify_certificate",
]

__version__ = "0.1.0"
