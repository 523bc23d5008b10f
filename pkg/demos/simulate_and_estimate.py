"""Simulate concentration records and recover (H, sigma^2, upsilon).

Default parameters: beta = 0, upsilon = 1.5 / h, H = 0.9, sigma^2 = 0.26,
C0 = 1.  Observations are spaced delta_n = n^(-1/2) apart, so the horizon
T = n delta_n grows with n while the step shrinks.

Run:  python demos/simulate_and_estimate.py
"""

import numpy as np

from fracbolus import ModelParams, simulate_concentration
from fracbolus.estimation import ObservationSet, regression_upsilon, upsilon_hat_unknown
from fracbolus.studies import estimator_sweep

p = ModelParams.from_sigma2(0.26, beta=0.0, upsilon=1.5, H=0.9)

# One path on [0, 3]; the concentration is |X|^(gamma+1) from the explicit solution.
b = simulate_concentration(p, 300, seed=1)
print(f"one path, n=300: C(1) = {b.c.values[100]:.4f} (deterministic {np.exp(-1.5):.4f}); "
      f"first zero of the core at t = {b.tau0}")

# Short record: the log-linear regression is the sensible estimate.
obs = ObservationSet(b.t[:31], b.c.values[:31])
print(f"regression on t in [0, 0.3]: upsilon = {regression_upsilon(obs).estimate:.3f}")

# Long record: quadratic-variation estimators.
n = 1000
delta = n**-0.5
long = simulate_concentration(p.replace(T=n * delta), n, seed=2)
res = upsilon_hat_unknown(long.x.values, delta)
print(f"n={n}, T={n * delta:.1f}: H_hat {res.stats['H_hat']:.3f}, sigma_hat^2 {res.stats['sigma_hat'] ** 2:.3f}, "
      f"upsilon* {res.estimate:.3f}")

# Convergence study, 40 replicates per n.
table, _ = estimator_sweep(p, [50, 100, 300, 1000], replicates=40, seed=0)
for name, rows in table.items():
    print(name)
    for r in rows:
        print(f"  n={r.n:5d}  median {r.median:7.3f}  IQR [{r.q25:.3f}, {r.q75:.3f}]  "
              f"median |error| {r.mae:.3f}  failed {r.failed}")
