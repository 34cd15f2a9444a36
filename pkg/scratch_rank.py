import numpy as np
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

for label, (prog, _) in (
    ("coercive primal", build_coercive_lpi(pie, form="primal")),
    ("coercive dual", build_coercive_lpi(pie, form="dual")),
    ("noncoercive primal", build_noncoercive_lpi(pie, form="primal")),
    ("noncoercive dual", build_noncoercive_lpi(pie, form="dual")),
):
    compiled = prog.compile(slack_min=2)
    A = compiled.A.toarray()
    rank = np.linalg.matrix_rank(A, tol=1e-9 * max(1.0, np.abs(A).max()))
    sv = np.linalg.svd(A, compute_uv=False)
    print(f"{label:20s} rows={A.shape[0]:4d} cols={A.shape[1]:5d} rank={rank:4d} "
          f"smin={sv[sv>0].min():.2e} smax={sv.max():.2e}")
    # feasibility of the affine system alone: least squares residual
    x, res, *_ = np.linalg.lstsq(A, compiled.b, rcond=None)
    r = np.linalg.norm(A @ x - compiled.b)
    print(f"{'':20s} ls-residual={r:.2e}  (b inconsistent with A if large)")
