import numpy as np
import pytest

from logcave import (
    DomainMismatch,
    ModeInfeasible,
    PwlConcave,
    SortedSample,
    crossing_diagnostics,
    fit_constrained,
    fit_exact_small,
    fit_unconstrained,
    verify_constrained,
    verify_unconstrained,
)
from logcave.geometry import cdf
from logcave.simulate import get_density, sample_density

from _instances import perturb, random_instances


def sample(xs):
    return SortedSample.from_observations(xs)


def test_uniform_passes_on_symmetric_points():
    rep = verify_unconstrained(PwlConcave([0.0, 2.0], [-np.log(2)] * 2), sample([0, 1, 2]), 1e-8)
    assert rep.passed
    assert rep.as_dict()["pass"] is True


def test_uniform_impostor_fails_on_skewed_points():
    rep = verify_unconstrained(PwlConcave([0.0, 1.0], [0.0, 0.0]), sample([0, 0.1, 1]), 1e-8)
    assert not rep.passed
    assert rep.max_knot_equality_gap == pytest.approx(0.1333, abs=1e-3)


def test_domain_must_match_data_range():
    with pytest.raises(DomainMismatch):
        verify_unconstrained(PwlConcave([0.0, 3.0], [-np.log(3)] * 2), sample([0, 1, 2]), 1e-8)
    with pytest.raises(DomainMismatch):
        verify_constrained(PwlConcave([0.0, 3.0], [-np.log(3)] * 2), sample([0, 1, 2]), 1.0, 1e-8)


def test_wrong_mode_is_infeasible():
    s = sample([0.0, 0.1, 1.0])
    fu = fit_exact_small(s).best.estimate
    with pytest.raises(ModeInfeasible):
        verify_constrained(fu, s, 0.9, 1e-6)


def test_constrained_report_carries_knot_class():
    s = sample([-1.0, 0.2, 0.5, 2.0])
    rep = fit_constrained(s, 0.0).report
    assert rep.knot_class == "NK"
    assert rep.passed


def test_solver_fits_pass_and_perturbations_fail():
    rng = np.random.default_rng(12)
    for s, m, _ in random_instances(60, seed=13):
        for fit in (fit_unconstrained(s), fit_constrained(s, m)):
            assert fit.report.passed
            f = fit.estimate
            g = perturb(f, int(rng.integers(f.knots.size)), rng.choice([-1, 1]) * 1e-3)
            try:
                if fit.constrained:
                    rep = verify_constrained(g, s, m, 1e-8)
                else:
                    rep = verify_unconstrained(g, s, 1e-8)
                assert not rep.passed
            except ModeInfeasible:
                pass


def test_lowering_left_end_value_breaks_certificate():
    rng = np.random.default_rng(0)
    s = sample(rng.normal(size=120))
    m = 0.0
    f = fit_constrained(s, m).estimate
    v = f.values.copy()
    v[0] -= 1e-3
    g = PwlConcave(f.knots, v)
    base = verify_constrained(f, s, m, 1e-8)
    rep = verify_constrained(g, s, m, 1e-8)
    assert base.passed and not rep.passed


# --- crossings between constrained and unconstrained fits -------------------------
def _interlaced_windows(fu, fc, m):
    """Windows (l, r) whose four kinks alternate between the two fits on one side of m."""
    ku = [(x, "u") for x in fu.knots[fu.kinks()]]
    kc = [(x, "c") for x in fc.knots[fc.kinks()]]
    out = []
    for below in (True, False):
        pts = sorted(p for p in ku + kc if p[0] != m and (p[0] < m) == below)
        lab = "".join(p[1] for p in pts)
        for i in range(len(pts) - 3):
            if lab[i : i + 4] in ("ucuc", "cucu"):
                out.append((pts[i][0], pts[i + 3][0]))
    return out


def test_interlaced_kinks_force_cdf_crossing():
    d = get_density("std_normal")
    windows = 0
    for seed in range(30):
        s = sample_density(d, 40, seed)
        fu = fit_unconstrained(s).estimate
        fc = fit_constrained(s, 0.0).estimate
        roots = crossing_diagnostics(fu, fc, s, 0.0).of_kind("CDF_EQUAL")
        for l, r in _interlaced_windows(fu, fc, 0.0):
            windows += 1
            assert any(l < x < r for x in roots), (seed, l, r, roots)
    assert windows >= 5


def test_density_crosses_between_cdf_crossings():
    d = get_density("gumbel")
    for seed in range(20):
        s = sample_density(d, 60, seed)
        m = 0.3
        fu = fit_unconstrained(s).estimate
        fc = fit_constrained(s, m).estimate
        cr = crossing_diagnostics(fu, fc, s, m)
        c = cr.of_kind("CDF_EQUAL")
        dens = cr.of_kind("DENSITY_EQUAL")
        for a, b in zip(c[:-1], c[1:]):
            assert any(a < x < b for x in dens)
        for x in c:
            assert abs(cdf(fc, x) - cdf(fu, x)) <= 1e-9


def test_identical_fits_are_degenerate():
    s = sample(np.random.default_rng(2).normal(size=50))
    fu = fit_unconstrained(s).estimate
    m = float(fu.knots[np.argmax(fu.values)])
    fc = fit_constrained(s, m).estimate
    cr = crossing_diagnostics(fu, fc, s, m)
    assert cr.degenerate and cr.roots == []
