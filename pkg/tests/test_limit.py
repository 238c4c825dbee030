import math

import numpy as np
import pytest
from scipy import integrate, stats

from logcave.limit import (
    check_limit_fit,
    invelope_constrained,
    invelope_unconstrained,
    limit_constants,
    limit_distribution_experiment,
    objective,
    refine,
    replication_seed,
    simulate_driver,
)


def zero_noise_path(half_width=4.0, delta=0.01):
    p = simulate_driver(half_width, delta, seed=0)
    return type(p)(p.centres, p.boundaries, p.drift.copy(), p.drift, np.zeros_like(p.w_lattice),
                    p.delta, p.half_width, None)


# --- driver ---------------------------------------------------------------------------
def test_drift_sums_to_cubic():
    p = simulate_driver(5.0, 0.005, seed=1)
    i0 = np.searchsorted(p.boundaries, 0.0)  # no boundary at 0: cells are centred there
    assert not np.any(p.boundaries == 0.0) and i0 > 0
    b = p.boundaries
    for k in (p.mode_index + 10, p.mode_index + 400, p.centres.size - 1):
        total = p.drift[p.mode_index + 1 : k + 1].sum()
        lo, hi = b[p.mode_index + 1], b[k + 1]
        assert total == pytest.approx(-4 * (hi**3 - lo**3), rel=1e-12, abs=1e-12)


def test_driver_validation_and_determinism():
    a = simulate_driver(4.0, 0.01, seed=3)
    b = simulate_driver(4.0, 0.01, seed=3)
    assert np.array_equal(a.increments, b.increments)
    assert a.w_lattice[a.w_lattice.size // 2] == 0.0
    with pytest.raises(ValueError):
        simulate_driver(3.0, 0.01)
    with pytest.raises(ValueError):
        simulate_driver(5.0, 0.02)
    with pytest.raises(ValueError):
        simulate_driver(5.0, 0.005, a=-1.0)


def test_brownian_moments():
    delta = 0.01
    w1, iw = [], []
    for seed in range(10_000):
        p = simulate_driver(4.0, delta, seed=seed)
        c = p.w_lattice.size // 2
        seg = p.w_lattice[c : c + int(round(2 / delta)) + 1]
        w1.append(seg[-1])
        iw.append(integrate.trapezoid(seg, dx=delta / 2))
    w1, iw = np.array(w1), np.array(iw)
    assert np.var(w1) == pytest.approx(1.0, abs=0.05)
    assert abs(np.mean(iw)) <= 0.05 * math.sqrt(1 / 3)
    assert np.var(iw) == pytest.approx(1 / 3, rel=0.05)


# --- fits ---------------------------------------------------------------------------------
def test_zero_noise_recovers_the_drift_derivative():
    p = zero_noise_path()
    y = p.increments / p.delta
    for fit in (invelope_unconstrained(p), invelope_constrained(p)):
        assert np.sum((fit.g - y) ** 2) <= 1e-16
        assert np.allclose(fit.g, -12 * p.centres**2, atol=1e-3)
        assert int(np.argmax(fit.g)) == p.mode_index
        assert check_limit_fit(p, fit).passed()


def test_fits_are_concave_and_respect_the_mode():
    for seed in range(10):
        p = simulate_driver(seed=seed)
        fu = invelope_unconstrained(p)
        fc = invelope_constrained(p)
        for g in (fu.g, fc.g):
            assert np.all(np.diff(g, 2) <= 1e-9)
        assert fc.g[p.mode_index] >= fc.g.max() - 1e-12
        left, right = fc.slopes_at_zero(p.delta)
        assert left >= -1e-9 and right <= 1e-9


def test_objective_ordering():
    for seed in range(10):
        p = simulate_driver(seed=seed)
        fu = invelope_unconstrained(p)
        fc = invelope_constrained(p)
        assert fu.objective == pytest.approx(objective(p, fu.g), rel=1e-10, abs=1e-10)
        assert fc.objective >= fu.objective - 1e-10
        # the best constant is feasible for both problems
        const = np.full(p.centres.size, p.increments.sum() / (p.delta * p.centres.size))
        assert fu.objective <= objective(p, const) + 1e-10
        assert fc.objective <= objective(p, const) + 1e-10


def test_characterization_on_random_paths():
    for seed in range(20):
        p = simulate_driver(seed=seed)
        for fit in (invelope_unconstrained(p), invelope_constrained(p)):
            rep = check_limit_fit(p, fit)
            assert rep.passed(), (seed, fit.constrained, rep)


def test_reflected_path_reflects_the_fit():
    p = simulate_driver(seed=4)
    q = p.reflected()
    for solve in (invelope_unconstrained, invelope_constrained):
        assert np.allclose(solve(q).g, solve(p).g[::-1], atol=1e-8)


def test_refinement_moves_value_at_zero_little():
    for seed in range(10):
        p = simulate_driver(5.0, 0.005, seed=seed)
        fine = refine(p, seed=1)
        assert fine.delta == p.delta / 2
        # the refined path passes through the coarse lattice
        c, cf = p.w_lattice.size // 2, fine.w_lattice.size // 2
        k = min(c, cf // 2)
        assert np.array_equal(fine.w_lattice[cf - 2 * k : cf + 2 * k + 1 : 2], p.w_lattice[c - k : c + k + 1])
        for solve in (invelope_unconstrained, invelope_constrained):
            assert abs(solve(fine).value_at_zero() - solve(p).value_at_zero()) <= 0.1


def _crossings(d, s, lim):
    sg = np.sign(np.where(np.abs(d) < 1e-9, 0.0, d))
    idx = np.flatnonzero((sg[:-1] * sg[1:] <= 0) & (np.abs(s[:-1]) <= lim))
    return s[idx]


def test_fits_cross_regularly_on_both_sides():
    for seed in range(20):
        p = simulate_driver(seed=seed)
        fu = invelope_unconstrained(p)
        fc = invelope_constrained(p)
        x = _crossings(fu.g - fc.g, p.centres, 4.0)
        assert np.any(x < 0) and np.any(x > 0)
        assert np.diff(np.r_[-4.0, x, 4.0]).max() <= 2.0


def test_interlaced_limit_knots_enclose_a_crossing():
    windows = 0
    for seed in range(20):
        p = simulate_driver(seed=seed)
        fu = invelope_unconstrained(p)
        fc = invelope_constrained(p)
        s, mi = p.centres, p.mode_index
        x = _crossings(fu.g - fc.g, s, 5.0)
        for side in (1, -1):
            pts = sorted([(k, "u") for k in fu.touch_set if side * (k - mi) > 0]
                         + [(k, "c") for k in fc.touch_set if side * (k - mi) > 0])
            lab = "".join(t for _, t in pts)
            for i in range(len(pts) - 3):
                if lab[i : i + 4] in ("ucuc", "cucu") and len({k for k, _ in pts[i : i + 4]}) == 4:
                    windows += 1
                    lo, hi = s[pts[i][0]], s[pts[i + 3][0]]
                    assert np.any((x >= lo) & (x <= hi)), (seed, lo, hi)
    assert windows > 0


# --- constants ------------------------------------------------------------------------------
def test_limit_constants_examples():
    c = limit_constants(1.0, -24.0)
    assert c.c_f == pytest.approx(1.0) and c.C_phi == pytest.approx(1.0)
    assert c.d_f == pytest.approx(1.0) and c.D_phi == pytest.approx(1.0)
    base = limit_constants(0.3, -1.7)
    assert limit_constants(0.3, -1.7 * 2**5).D_phi == pytest.approx(base.D_phi * 2**3, rel=1e-12)
    with pytest.raises(ValueError):
        limit_constants(0.3, 0.0)
    with pytest.raises(ValueError):
        limit_constants(0.0, -1.0)


def test_standard_normal_log_density_constant():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    exact = (2 * mpmath.pi / 24) ** mpmath.mpf("0.2")
    got = limit_constants(1 / math.sqrt(2 * math.pi), -1.0).C_phi
    assert got == pytest.approx(float(exact), rel=1e-14)
    assert got == pytest.approx(0.764881, abs=1e-6)


# --- distributions ------------------------------------------------------------------------------
@pytest.fixture(scope="module")
def base_samples():
    return limit_distribution_experiment(2000, seed=0)


@pytest.mark.slow
def test_value_at_zero_is_tight(base_samples):
    assert base_samples.dropped == 0
    assert abs(np.median(base_samples.phi_unc)) <= 3
    assert abs(np.median(base_samples.phi_con)) <= 3


@pytest.mark.slow
def test_constrained_slopes_bracket_zero(base_samples):
    assert np.all(base_samples.dphi_con_left >= -1e-9)
    assert np.all(base_samples.dphi_con_right <= 1e-9)


@pytest.mark.slow
def test_reflection_leaves_the_law_unchanged(base_samples):
    refl = limit_distribution_experiment(2000, seed=1, reflect=True)
    ks = stats.ks_2samp(base_samples.phi_unc, refl.phi_unc).statistic
    assert ks <= 0.05


@pytest.mark.slow
def test_scaling_relation(base_samples):
    a, sigma = 2.0, 1.5
    direct = limit_distribution_experiment(2000, seed=0, a=a, sigma=sigma, constrained_only=True)
    scaled = sigma**0.8 * a**0.2 * base_samples.phi_con
    assert stats.ks_2samp(direct.phi_con, scaled).statistic <= 0.06


def test_quantile_table_and_seeds():
    s = limit_distribution_experiment(3, half_width=4.0, delta=0.01, seed=5)
    rows = s.quantile_table([0.5])
    assert len(rows) == 5 and rows[0][0] == "phi_unc"
    assert len(s.quantile_table()) == 15
    assert replication_seed(5, 0) != replication_seed(5, 1)
    again = limit_distribution_experiment(3, half_width=4.0, delta=0.01, seed=5)
    assert np.array_equal(s.phi_con, again.phi_con)
