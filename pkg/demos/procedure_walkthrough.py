"""Choosing (H, sigma^2, beta) from a short record.

The bundled record has 31 observations on [0, 3] (simulated with beta = 0.9,
upsilon = 3.5, H = 0.9, sigma^2 = 0.26).  The loop fixes H = 0.9 and beta,
measures how far x_i = c_i^(1-beta) strays from the fitted deterministic
curve and turns that deviation into a sigma^2 budget.  Whether beta should
move is decided by the deviation ratio x / C0^(1-beta).

Run:  python demos/procedure_walkthrough.py
"""

import numpy as np

from fracbolus.estimation import ObservationSet
from fracbolus.io import example_data_path, load_observations
from fracbolus.procedure import ProcedureConfig, run_procedure

obs = load_observations(example_data_path(), beta=0.9)
print("bundled record, defaults:")
print(run_procedure(obs).format_text())
print()

print("same record, fixed radius 0.2 and the generating upsilon:")
report = run_procedure(obs, ProcedureConfig(radius=0.2, upsilon=3.5, C0=1.0, T=3.0))
print(f"sigma^2 in (0, {report.recommendation['sigma2_interval'][1]:.3f}]")
print()

# A record with bursts well above the deterministic decay: starting at
# beta = 0.5 the ratio is above the band and beta is raised.
t = np.linspace(0, 3, 31)
c = np.exp(-1.5 * t) * (1 + 3 * np.sin(4 * t) ** 2)
report = run_procedure(ObservationSet(t, c), ProcedureConfig(beta_init=0.5))
print("perturbed record, beta_init = 0.5:")
for it in report.iterations:
    print(f"  beta={it.beta:.1f} ratio={it.diagnostics['deviation_ratio']:.3f} -> {it.action}")
print(f"  recommended beta {report.recommendation['beta']:.1f}, warnings: {report.warnings}")
