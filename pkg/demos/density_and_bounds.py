"""Density of the concentration at a few times, and the uniform deviation bound.

Run:  python demos/density_and_bounds.py
"""

import numpy as np
from scipy import integrate

from fracbolus import ModelParams
from fracbolus.analytics import borell_deviation_bound, build_gaussian_spec, deviation_radius, density_chi_n
from fracbolus.studies import exceedance_frequency

p = ModelParams.from_sigma2(0.26, beta=0.5, upsilon=1.5, H=0.9, T=2.0)

# (C_1, C_2) is a transformed Gaussian vector: the density needs only the
# mean and covariance of (X_1, X_2).
spec = build_gaussian_spec([1.0, 2.0], p)
print("mean of X:", spec.Vn, "\ncovariance of X:\n", spec.Rn, f"\ncondition number {spec.condition_number:.1f}")
for c in ([0.2, 0.05], [0.3, 0.1], [0.05, 0.01]):
    print(f"chi_2{tuple(c)} = {density_chi_n(c, spec, p.beta):.4f}")

one = build_gaussian_spec([1.0], p)
total, err = integrate.quad(lambda c: density_chi_n([c], one, p.beta), 0, np.inf)
print(f"integral of the C_1 density: {total:.8f} (+- {err:.1e})")

# The bound controls sup_t |X_t - X^det_t| through the terminal variance
# sigma^2 R_{H,theta}(T, T); it is conservative because X - X^det carries the
# extra damping factor exp(-upsilon (1-beta) t).
q = p.replace(beta=0.0)
for x in (0.5, 1.0, 1.5, deviation_radius(0.05, 2.0, q)):
    print(f"x = {x:.3f}: bound {borell_deviation_bound(x, 2.0, q, raw=True):.3g}")
freq = exceedance_frequency(q, [0.5, 1.0], n=400, seed=0, replicates=2000)
print("observed exceedance frequencies:", {k: round(v[0], 4) for k, v in freq.items()})
