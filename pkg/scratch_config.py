"""Smoke test: load every packaged model, convert, simulate briefly."""
from pipeak.config import builtin_models, load_builtin
from pipeak.pde import convert, validate
from pipeak.simkit import simulate_pie, spectral_abscissa

for name in builtin_models():
    pde = load_builtin(name)
    issues = validate(pde)
    pie = convert(pde)
    absc = spectral_abscissa(pie, 40)
    sim = simulate_pie(pie, grid_n=40, nsteps=400)
    print(f"{name:20s} n={pde.n} n_w={pde.n_w} n_u={pde.n_u} issues={issues} "
          f"abscissa={absc:+.4f} open-loop sim peak={sim.peak:.5f}")
