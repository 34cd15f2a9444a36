import numpy as np
from pipeak.pde import PDESpec, convert
from pipeak.polyalg import PolyMatrix
from pipeak.certify import build_noncoercive_lpi
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
prog, handles = build_noncoercive_lpi(pie, form="dual")
compiled = prog.compile(slack_min=2)
print("stats:", compiled.stats())
print("meta scalars:", compiled.meta["scalars"])
for name in ("CLARABEL", "SCS", "CVXOPT"):
    try:
        sol = CvxpySolver(compiled, solver=name).solve()
        g2 = sol.x[compiled.meta["scalars"]["g2"]] if sol.x is not None else None
        print(f"{name}: status={sol.status} obj={sol.objective} g2={g2} "
              f"gamma={np.sqrt(g2) if g2 and g2 > 0 else None}")
        if sol.info.get("verify"):
            v = sol.info["verify"]
            print("   verify:", {k: v[k] for k in ('feasible', 'eq_residual', 'min_eig_rel') if k in v})
        if sol.info.get("message"):
            print("   msg:", sol.info["message"][:300])
    except Exception as e:
        print(f"{name}: EXC {e}")
