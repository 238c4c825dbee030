"""How fast do the estimators converge?  A small Monte Carlo run.

Errors are summarised by their median over replications and the slope of
log median error against log n is reported.  The acceptance run uses 100
replications and n up to 3000; this one is sized for a quick look.
"""
from logcave.simulate import get_density, rate_experiments

truth = get_density("std_normal")
reports = rate_experiments(
    truth, ["hellinger", "supnorm", "knot-gap", "near-mode"], n_grid=(100, 300, 1000), reps=20, seed=3
)
targets = {"hellinger": -0.4, "supnorm_K": -0.4, "knot_gap": -0.2, "near_mode_diff": -0.4}
for name, rep in reports.items():
    meds = ", ".join(f"{v:.4f}" for v in rep.median_errors)
    print(f"{name:15s} medians [{meds}]  slope {rep.slope:+.3f}  (theory {targets[name]:+.1f})")

print("\nwith the mode misspecified at 1, the Hellinger error stalls:")
wrong = rate_experiments(truth, ["hellinger"], (300, 3000), reps=10, seed=3, m=1.0)["hellinger"]
print("  medians", [round(v, 4) for v in wrong.median_errors])
