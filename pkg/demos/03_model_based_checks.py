"""
Checking the data-driven pipeline against the true model
========================================================

The controller never uses (A, B, C). Here we do, to confirm that what it
estimates from data is what the model says it should be: the coupling row,
the steady-state map of the regulated loop and the decay of the mismatch
between the plant state and its filter reconstruction.

Run from the repository root::

    python demos/03_model_based_checks.py
"""
import numpy as np

from regulab.config import benchmark_config
from regulab.oracle import coupling_oracle, solve_pi, sylvester_psi, transverse_decay
from regulab.regulator import DataDrivenDesigner
from regulab.sim import collect_offline

cfg = benchmark_config()
plant, exo, fp = cfg.plant(), cfg.exosystem(), cfg.filters()
x0_data, _ = cfg.initial_states()
ds = collect_offline(plant, x0_data, cfg.excitation(), cfg.t_star, cfg.internal_h)
theta = np.array([4.0, 0.0])

# %% the plant state as a linear function of the two filter states
pi = solve_pi(plant, fp)
print("x = Pi1 zeta_y + Pi2 zeta_u, residuals of the defining equations:")
for name, val in pi.residuals(plant, fp).items():
    print(f"  {name:<28s} {val:.1e}")

# %% data-driven coupling estimate versus the model value
rc = cfg.regulator_config()
designer = DataDrivenDesigner(ds, fp, rc.tau_s, rc.Q, rc.R, shift=rc.shift)
res = designer.synthesize(theta)
gap = np.abs(res.H_hat - coupling_oracle(pi, fp, theta.size)).max()
print(f"\nlargest entry of H_hat - model coupling: {gap:.2e}")

# %% steady state of the regulated loop for the data-driven gain
psi = sylvester_psi(plant, exo, fp, theta, res.K, pi)
print("\nsteady-state map, rows (eta_e, zeta_y - zeta_r, zeta_u):")
print(np.array2string(psi.Psi, precision=4, suppress_small=True))
print("residuals:", {k: f"{v:.1e}" for k, v in psi.residuals.items()})

# %% the reconstruction error decays at the slowest filter pole
rep = transverse_decay(plant, fp, pi.Pi1, x0_data, T=20.0)
print(f"\nfitted decay rate of |x - Pi1 zeta_y - Pi2 zeta_u|: {rep.rate:.4f} (slowest filter pole at {fp.lam.max():g})")
