"""Debug: full verification report for the coercive transport certificate."""
import json

import numpy as np

from pipeak.certify import i2p_bound
from pipeak.pde import PDESpec, convert
from pipeak.polyalg import PolyMatrix

DOM = (0.0, 1.0)

pde = PDESpec(
    domain=DOM, n1=0, n2=1, n3=0,
    A1=PolyMatrix.eye(1, DOM),
    B21=PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 2, 0): -1.0}, DOM),
    Ca=PolyMatrix.eye(1, DOM),
    BC=np.array([[0.0, 1.0]]),
    name="transport",
)
pie = convert(pde)
cert = i2p_bound(pie, form="dual", coercive=True)
print("gamma:", cert.gamma, "status:", cert.status, "solver:", cert.solver,
      "certified:", cert.certified)
print(json.dumps(cert.checks, indent=2, sort_keys=True))
