import numpy as np
from scipy.linalg import null_space
from pipeak.pde import PDESpec, convert
from pipeak.polyalg import PolyMatrix
from pipeak.certify import build_coercive_lpi, build_noncoercive_lpi

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

prog, _ = build_coercive_lpi(pie, form="primal")
compiled = prog.compile(slack_min=2)
A = compiled.A.toarray()
N = null_space(A.T, rcond=1e-10)
print("coercive primal: null dim", N.shape[1])
for k in range(N.shape[1]):
    v = N[:, k]
    idx = np.where(np.abs(v) > 1e-8)[0]
    print(f"  combo {k}: {len(idx)} rows involved")
    for name, info in compiled.meta["constraints"].items():
        r0, r1 = info["rows"]
        cnt = np.sum((idx >= r0) & (idx < r1))
        if cnt:
            print(f"    {name}: {cnt} rows (range {r0}-{r1})")

prog, _ = build_noncoercive_lpi(pie, form="dual")
compiled = prog.compile(slack_min=2)
A = compiled.A.toarray()
N = null_space(A.T, rcond=1e-10)
print("noncoercive dual: null dim", N.shape[1])
involved = {}
for k in range(N.shape[1]):
    v = N[:, k]
    idx = np.where(np.abs(v) > 1e-8)[0]
    names = []
    for name, info in compiled.meta["constraints"].items():
        r0, r1 = info["rows"]
        cnt = np.sum((idx >= r0) & (idx < r1))
        if cnt:
            names.append(f"{name}({cnt})")
    key = ",".join(names)
    involved[key] = involved.get(key, 0) + 1
for key, cnt in involved.items():
    print(f"  {cnt} null vectors across: {key}")
