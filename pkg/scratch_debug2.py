import numpy as np
from pipeak.pde import PDESpec, convert
from pipeak.polyalg import PolyMatrix
from pipeak.certify import build_coercive_lpi, build_noncoercive_lpi
from pipeak.sdp import CvxpySolver

DOM = (0.0, 1.0)
transport = PDESpec(
    domain=DOM, n1=0, n2=1, n3=0,
    A1=PolyMatrix.eye(1, DOM),
    B21=PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 2, 0): -1.0}, DOM),
    Ca=PolyMatrix.eye(1, DOM),
    BC=np.array([[0.0, 1.0]]),
    name="transport",
)
pie = convert(transport)

print("=== coercive primal ===")
prog, handles = build_coercive_lpi(pie, form="primal")
compiled = prog.compile(slack_min=2)
print("stats:", compiled.stats())
for name in ("CLARABEL", "SCS"):
    sol = CvxpySolver(compiled, solver=name).solve()
    h = sol.x[compiled.meta["scalars"]["h"]] if sol.x is not None else None
    print(f"{name}: status={sol.status} h={h} gamma={1/np.sqrt(h) if h and h>0 else None}")

print("=== coercive dual ===")
prog, handles = build_coercive_lpi(pie, form="dual")
compiled = prog.compile(slack_min=2)
print("stats:", compiled.stats())
for name in ("CLARABEL", "SCS"):
    sol = CvxpySolver(compiled, solver=name).solve()
    h = sol.x[compiled.meta["scalars"]["h"]] if sol.x is not None else None
    print(f"{name}: status={sol.status} h={h} gamma={1/np.sqrt(h) if h and h>0 else None}")

print("=== noncoercive dual, CLARABEL verbose ===")
prog, handles = build_noncoercive_lpi(pie, form="dual")
compiled = prog.compile(slack_min=2)
solver = CvxpySolver(compiled, solver="CLARABEL")
try:
    solver.problem.solve(solver="CLARABEL", verbose=True, max_iter=60)
    print("status:", solver.problem.status, "value:", solver.problem.value)
except Exception as e:
    print("EXC:", e)
