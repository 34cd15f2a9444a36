"""Smoke test: synthesis on the controlled transport system."""
import json

import numpy as np

from pipeak.pde import PDESpec, convert
from pipeak.polyalg import PolyMatrix
from pipeak.simkit import simulate_pie, spectral_abscissa
from pipeak.synthesize import closed_loop, synthesize

DOM = (0.0, 1.0)

# d/dt x = d/ds x + 10 s(s-1)(s-1/2) w + u(t),  x(t,1) = 0,  z = int x
tc = PDESpec(
    domain=DOM, n1=0, n2=1, n3=0,
    A1=PolyMatrix.eye(1, DOM),
    B21=PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 5.0, (0, 0, 2, 0): -15.0,
                                       (0, 0, 3, 0): 10.0}, DOM),
    B22=PolyMatrix.constant(np.ones((1, 1)), DOM),
    Ca=PolyMatrix.eye(1, DOM),
    BC=np.array([[0.0, 1.0]]),
    name="transport-control",
)
pie = convert(tc)
print("n_u:", pie.n_u, "n_w:", pie.n_w)

res = synthesize(pie, bisect_opts={"rel_tol": 0.05})
print("gamma:", res.gamma, "status:", res.status, "certified:", res.certified,
      "iterations:", res.iterations)
print("trace:", json.dumps(res.trace, indent=1))
print("controller diag:", res.controller.diagnostics if res.controller else None)
if res.gamma is not None and res.controller is not None:
    cl = closed_loop(pie, res.controller)
    sim = simulate_pie(pie, controller=res.controller.gain_matrix, grid_n=64)
    sim_fit = simulate_pie(cl, grid_n=64)
    print("closed-loop sim peak (grid gain):", sim.peak, "| (fitted op):", sim_fit.peak)
    print("closed-loop abscissa:", spectral_abscissa(pie, 64, controller=res.controller.gain_matrix))
