"""Smoke test: both simulation paths on transport and heat."""
import numpy as np

from pipeak.pde import PDESpec, convert
from pipeak.polyalg import PolyMatrix
from pipeak.simkit import simulate_pde, simulate_pie, spectral_abscissa

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

for pde in (transport, heat):
    pie = convert(pde)
    ra = simulate_pie(pie, grid_n=48, nsteps=2000)
    rb = simulate_pde(pde, grid_n=48, nsteps=2000)
    print(f"{pde.name:10s} pie peak {ra.peak:.6f} @ {ra.peak_time:.4f}   "
          f"pde peak {rb.peak:.6f} @ {rb.peak_time:.4f}   "
          f"abscissa {spectral_abscissa(pie, 48):.4f}")
    # closed forms: transport z(t) = 1/6 - t^2/2 + t^3/3 on [0,1] -> peak 1/6 at 0
    #               heat peak 1/2 at 0+
