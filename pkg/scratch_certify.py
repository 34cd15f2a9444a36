import time
import numpy as np
from pipeak.pde import PDESpec, convert
from pipeak.polyalg import PolyMatrix
from pipeak.certify import i2p_bound

DOM = (0.0, 1.0)

transport = PDESpec(
    domain=DOM, n1=0, n2=1, n3=0,
    A1=PolyMatrix.eye(1, DOM),
    B21=PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 2, 0): -1.0}, DOM),
    Ca=PolyMatrix.eye(1, DOM),
    BC=np.array([[0.0, 1.0]]),
    name="transport",
)
heat = PDESpec(
    domain=DOM, n1=0, n2=0, n3=1,
    A2=PolyMatrix.eye(1, DOM),
    B21=PolyMatrix.var("s", DOM),
    Ca=PolyMatrix.eye(1, DOM),
    BC=np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]),
    name="heat",
)

for pde, targets in ((transport, {"dual": 0.1667, "primal": 0.1684}),
                     (heat, {"dual": 0.5000, "primal": 0.5000})):
    pie = convert(pde)
    for form, ref in targets.items():
        t0 = time.perf_counter()
        cert = i2p_bound(pie, form=form, method="direct")
        dt = time.perf_counter() - t0
        print(f"{pde.name:10s} {form:7s} noncoercive gamma={cert.gamma} "
              f"(ref {ref})  certified={cert.certified} status={cert.status} "
              f"solver={cert.solver} {dt:.1f}s stats={cert.program_stats}")
        if not cert.certified:
            print("   checks:", cert.checks)
