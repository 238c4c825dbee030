"""The Gaussian limit problem behind the pointwise asymptotics.

A concave regression on the increments of W(t) - 4t^3 plays the role of
the estimator near the mode.  Here one path is solved both ways, its
optimality conditions are checked, and a small batch of replications is
compared with rescaled finite-sample estimates.
"""
import numpy as np
from scipy import stats

from logcave import fit_constrained
from logcave.limit import (
    check_limit_fit,
    invelope_constrained,
    invelope_unconstrained,
    limit_constants,
    limit_distribution_experiment,
    simulate_driver,
)
from logcave.simulate import get_density, replication_rng, sample_density

path = simulate_driver(half_width=5.0, delta=0.005, seed=11)
free = invelope_unconstrained(path)
fixed = invelope_constrained(path)
for label, fit in (("unconstrained", free), ("constrained", fixed)):
    rep = check_limit_fit(path, fit)
    print(f"{label:14s} g(0) = {fit.value_at_zero():+.4f}  conditions hold: {rep.passed()}")
print(f"modal interval of the constrained fit: [{check_limit_fit(path, fixed).tau_left:.3f}, "
      f"{check_limit_fit(path, fixed).tau_right:.3f}]")

truth = get_density("std_normal")
C = limit_constants(float(truth.pdf(0.0)), truth.curvature_at_mode).C_phi
n, reps = 1000, 100
finite = [
    n**0.4 * (float(fit_constrained(sample_density(truth, n, replication_rng(5, n, r)), 0.0).estimate(0.0))
              - float(truth.log_density(0.0))) / C
    for r in range(reps)
]
lim = limit_distribution_experiment(300, seed=5, constrained_only=True)
print(f"\nscale constant C = {C:.6f}")
print(f"median rescaled estimate {np.median(finite):+.3f}, median limit draw {np.median(lim.phi_con):+.3f}")
print(f"two-sample KS statistic {stats.ks_2samp(finite, lim.phi_con).statistic:.3f}")
