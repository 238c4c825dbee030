"""Test densities, error metrics and Monte Carlo rate experiments."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats

from .augment import augment
from .errors import NonConvergence
from .geometry import (
    PwlConcave,
    SortedSample,
    _empirical_left,
    _left_integrals,
    cdf,
    exp_integral,
    quantile,
)
from .mle import Fit, SolverOptions, fit_constrained, fit_unconstrained

METRICS = ("hellinger", "supnorm_K", "knot_gap", "near_mode_diff")


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TrueDensity:
    """A known log-concave density with an exact sampler.

    ``support`` is the closed interval outside which the density vanishes.
    """

    family: str
    mode: float
    log_density: Callable = field(repr=False)
    curvature_at_mode: float
    cdf: Callable = field(repr=False)
    ppf: Callable = field(repr=False)
    draw: Callable = field(repr=False)
    support: tuple = (-math.inf, math.inf)
    breakpoints: tuple = ()

    def pdf(self, x):
        with np.errstate(under="ignore"):
            return np.exp(self.log_density(x))


def _normal_draw(rng, n):
    return rng.standard_normal(n)


def _gumbel_draw(rng, n):
    return -np.log(-np.log(rng.random(n)))


def _gamma2_draw(rng, n):
    return rng.standard_exponential(n) + rng.standard_exponential(n)


def _gamma2_log(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)) - x, -np.inf)
    return out if out.ndim else float(out)


def std_normal() -> TrueDensity:
    return TrueDensity(
        "std_normal",
        0.0,
        lambda x: -0.5 * np.square(x) - 0.5 * math.log(2 * math.pi),
        -1.0,
        stats.norm.cdf,
        stats.norm.ppf,
        _normal_draw,
    )


def _gumbel_log(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return -(x + np.exp(-x))


def gumbel() -> TrueDensity:
    """Density ``exp(-(x + exp(-x)))``."""
    return TrueDensity(
        "gumbel",
        0.0,
        _gumbel_log,
        -1.0,
        stats.gumbel_r.cdf,
        stats.gumbel_r.ppf,
        _gumbel_draw,
    )


def gamma_shape2() -> TrueDensity:
    """Density ``x exp(-x)`` on the positive half-line."""
    g = stats.gamma(2.0)
    return TrueDensity(
        "gamma_shape2", 1.0, _gamma2_log, -1.0, g.cdf, g.ppf, _gamma2_draw, support=(0.0, math.inf)
    )


def custom_pwl(f: PwlConcave, mode: float | None = None) -> TrueDensity:
    """Truth given by a piecewise-linear log-density (normalised here)."""
    g = PwlConcave(f.knots, f.values - math.log(exp_integral(f)))
    if mode is None:
        mode = float(g.knots[int(np.argmax(g.values))])

    def draw(rng, n):
        return quantile(g, rng.random(n))

    def cdf_(x):
        return np.clip(cdf(g, x), 0.0, 1.0)

    return TrueDensity(
        "custom_pwl",
        float(mode),
        g,
        0.0,
        cdf_,
        lambda p: quantile(g, p),
        draw,
        support=g.domain,
        breakpoints=tuple(g.knots),
    )


DENSITIES = {
    "std_normal": std_normal,
    "gumbel": gumbel,
    "gamma_shape2": gamma_shape2,
    "gamma2": gamma_shape2,
}


def get_density(name: str) -> TrueDensity:
    try:
        return DENSITIES[name]()
    except KeyError:
        raise ValueError(f"unknown density {name!r}; choose from {sorted(DENSITIES)}") from None


def replication_rng(seed: int, n: int, rep: int) -> np.random.Generator:
    """Independent stream for one (sample size, replication) cell."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(n), int(rep)]))


def sample_density(d: TrueDensity, n: int, seed: int | np.random.Generator) -> SortedSample:
    if n < 2:
        raise ValueError("need n >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return SortedSample.from_observations(d.draw(rng, n))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------
def hellinger(f: PwlConcave, d: TrueDensity) -> float:
    """Hellinger distance ``sqrt(1/2 int (sqrt p - sqrt q)^2)``.

    Integrated piece by piece over the fit's domain (split at every knot
    of either density); outside that domain only the truth has mass,
    which its distribution function supplies exactly.
    """
    a, b = f.domain
    br = [x for x in (*d.breakpoints, *d.support) if a < x < b]
    pts = np.unique(np.r_[f.knots, br])

    def integrand(x):
        return (math.sqrt(f.density(x)) - math.sqrt(float(d.pdf(x)))) ** 2

    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-10, limit=200)
        total += val
    total += float(d.cdf(a)) + (1.0 - float(d.cdf(b)))
    return math.sqrt(max(0.5 * total, 0.0))


def central_interval(d: TrueDensity) -> tuple[float, float]:
    """Interquartile range of the truth, used as the inner compact set."""
    return float(d.ppf(0.25)), float(d.ppf(0.75))


def supnorm_on(f: PwlConcave, d: TrueDensity, lo: float, hi: float, points: int = 2001) -> float:
    t = np.linspace(lo, hi, points)
    t = np.unique(np.r_[t, f.knots[(f.knots > lo) & (f.knots < hi)]])
    return float(np.max(np.abs(f(t) - d.log_density(t))))


def knot_gap(fit: Fit) -> float:
    """Distance between the kinks of a constrained fit that bracket its mode.

    Missing kinks on one side fall back to the end of the domain.
    """
    f, m = fit.estimate, fit.mode
    kinks = f.knots[f.kinks()]
    above = kinks[kinks > m]
    below = kinks[kinks < m]
    hi = above.min() if above.size else f.knots[-1]
    lo = below.max() if below.size else f.knots[0]
    return float(hi - lo)


def near_mode_diff(fu: Fit, fc: Fit, m: float, radius: float) -> float:
    """``max |phi_con - phi_unc|`` over ``[m - radius, m + radius]`` (exact)."""
    lo = max(m - radius, fu.estimate.knots[0], fc.estimate.knots[0])
    hi = min(m + radius, fu.estimate.knots[-1], fc.estimate.knots[-1])
    if hi < lo:
        return math.nan
    k = np.r_[fu.estimate.knots, fc.estimate.knots]
    t = np.unique(np.r_[lo, hi, k[(k > lo) & (k < hi)]])
    return float(np.max(np.abs(fc.estimate(t) - fu.estimate(t))))


# ---------------------------------------------------------------------------
# rate experiments
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RateReport:
    metric: str
    n_grid: tuple
    replications: int
    median_errors: tuple
    slope: float | None
    slope_ci_halfwidth: float | None
    skipped: int = 0
    errors: dict = field(default_factory=dict, repr=False)


def log_log_slope(n_grid, values):
    """OLS slope of ``log values`` on ``log n`` with a 95% t half-width.

    Returns ``(None, None)`` with fewer than two sizes and a NaN half-width
    with exactly two.
    """
    n_grid = np.asarray(n_grid, dtype=float)
    if n_grid.size < 2:
        return None, None
    res = stats.linregress(np.log(n_grid), np.log(values))
    if n_grid.size < 3:
        return float(res.slope), math.nan
    q = stats.t.ppf(0.975, n_grid.size - 2)
    return float(res.slope), float(q * res.stderr)


def rate_experiments(d: TrueDensity, metrics, n_grid, reps: int, seed: int, constrained: bool = True,
                     m: float | None = None, opts: SolverOptions | None = None,
                     near_mode_radius: float = 1.0, max_skip_fraction: float = 0.01) -> dict:
    """Run several metrics on shared replications.

    Each ``(n, rep)`` draws one sample from its own stream, fits whatever
    the requested metrics need, and records every metric.  ``m`` overrides
    the mode used for constrained fits (default: the true mode).
    """
    metrics = [_metric_name(x) for x in metrics]
    n_grid = tuple(int(n) for n in n_grid)
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    m = d.mode if m is None else float(m)
    need_con = constrained or any(x in ("knot_gap", "near_mode_diff") for x in metrics)
    need_unc = (not constrained) or "near_mode_diff" in metrics
    K = central_interval(d)

    raw = {x: {n: [] for n in n_grid} for x in metrics}
    skipped = 0
    for n in n_grid:
        for rep in range(reps):
            s = sample_density(d, n, replication_rng(seed, n, rep))
            try:
                fc = fit_constrained(s, m, opts) if need_con else None
                fu = fit_unconstrained(s, opts) if need_unc else None
            except NonConvergence:
                skipped += 1
                continue
            main = fc if constrained else fu
            for x in metrics:
                if x == "hellinger":
                    v = hellinger(main.estimate, d)
                elif x == "supnorm_K":
                    v = supnorm_on(main.estimate, d, *K)
                elif x == "knot_gap":
                    v = knot_gap(fc)
                else:
                    v = near_mode_diff(fu, fc, m, near_mode_radius * n ** -0.2)
                raw[x][n].append(v)
    total = len(n_grid) * reps
    if skipped > max_skip_fraction * total:
        raise NonConvergence(f"{skipped} of {total} replications failed to converge")

    out = {}
    for x in metrics:
        med = tuple(float(np.median(raw[x][n])) for n in n_grid)
        slope, half = log_log_slope(n_grid, med)
        out[x] = RateReport(x, n_grid, reps, med, slope, half, skipped,
                            {n: np.array(v) for n, v in raw[x].items()})
    return out


def rate_experiment(d: TrueDensity, metric: str, n_grid, reps: int, seed: int,
                    constrained: bool = True, **kw) -> RateReport:
    if len(tuple(n_grid)) < 2:
        warnings.warn("a slope needs at least two sample sizes", stacklevel=2)
    return rate_experiments(d, [metric], n_grid, reps, seed, constrained, **kw)[_metric_name(metric)]


_ALIASES = {"supnorm": "supnorm_K", "knot-gap": "knot_gap", "near-mode": "near_mode_diff"}


def _metric_name(x):
    x = _ALIASES.get(x, x)
    if x not in METRICS:
        raise ValueError(f"unknown metric {x!r}")
    return x


# ---------------------------------------------------------------------------
# figure panels
# ---------------------------------------------------------------------------
PANEL_COLUMNS = (
    "x", "f_true", "f_unc", "f_con", "logf_true", "logf_unc", "logf_con",
    "F_true", "F_unc", "F_con", "F_emp",
    "Y_minus_H_unc", "YL_minus_HL", "YR_minus_HR", "knot_flags",
)
FLAG_UNC_KNOT = 1
FLAG_CON_KNOT = 2
FLAG_MODE = 4
FLAG_DATUM = 8


@dataclass(frozen=True)
class Panel:
    """Plot data for one sample: columns keyed by name, equal length."""

    columns: dict
    fit_unc: Fit = field(repr=False)
    fit_con: Fit = field(repr=False)
    m: float = 0.0

    def endpoint_identities(self) -> dict:
        """Left difference at the first observation, right one at the last."""
        x = self.columns["x"]
        s = self.fit_con
        lo, hi = x[self.columns["knot_flags"] & FLAG_DATUM > 0][[0, -1]]
        i, j = np.searchsorted(x, lo), np.searchsorted(x, hi)
        return {
            "YL_minus_HL_first": float(self.columns["YL_minus_HL"][i]),
            "YR_minus_HR_last": float(self.columns["YR_minus_HR"][j]),
            "knot_class": s.report.knot_class if s.report else None,
        }

    def min_differences(self) -> dict:
        return {
            k: float(np.nanmin(self.columns[k]))
            for k in ("Y_minus_H_unc", "YL_minus_HL", "YR_minus_HR")
        }


def figure_panels(sample: SortedSample, m: float, truth: TrueDensity | None = None,
                  opts: SolverOptions | None = None, points: int = 512) -> Panel:
    """Densities, log-densities, CDFs and the difference processes.

    The grid covers the mode-augmented data range with ``points`` equally
    spaced abscissae plus every knot, the extreme observations and ``m``.
    Left (right) differences are NaN to the right (left) of ``m``; the
    unconstrained difference is NaN outside the data range.
    """
    fu = fit_unconstrained(sample, opts)
    fc = fit_constrained(sample, m, opts)
    aug = augment(sample, m)
    z0, z1 = aug.z[0], aug.z[-1]
    x = np.unique(np.r_[np.linspace(z0, z1, points), fu.estimate.knots, fc.estimate.knots,
                        sample.points[[0, -1]], aug.m])
    cols = {"x": x}

    if truth is not None:
        cols["logf_true"] = np.asarray(truth.log_density(x), dtype=float)
        cols["f_true"] = np.asarray(truth.pdf(x), dtype=float)
        cols["F_true"] = np.asarray(truth.cdf(x), dtype=float)
    else:
        for k in ("logf_true", "f_true", "F_true"):
            cols[k] = np.full(x.size, np.nan)
    for tag, f in (("unc", fu.estimate), ("con", fc.estimate)):
        cols[f"logf_{tag}"] = f(x)
        cols[f"f_{tag}"] = f.density(x)
        cols[f"F_{tag}"] = cdf(f, x)
    cols["F_emp"] = sample.ecdf(x)

    pts, w = sample.points, sample.weights
    inside = (x >= pts[0]) & (x <= pts[-1])
    _, Hu = _left_integrals(fu.estimate.knots, fu.estimate.values, x)
    _, Y = _empirical_left(pts, w, x)
    cols["Y_minus_H_unc"] = np.where(inside, Y - Hu, np.nan)

    fk = fc.estimate
    _, HL = _left_integrals(fk.knots, fk.values, x)
    _, HR = _left_integrals(-fk.knots[::-1], fk.values[::-1], -x)
    _, YR = _empirical_left(-pts[::-1], w[::-1], -x)
    cols["YL_minus_HL"] = np.where(x <= aug.m, Y - HL, np.nan)
    cols["YR_minus_HR"] = np.where(x >= aug.m, YR - HR, np.nan)

    flags = np.zeros(x.size, dtype=np.int64)
    fl_u = fu.estimate.knots[np.r_[0, fu.estimate.kinks(), fu.estimate.knots.size - 1]]
    fl_c = fk.knots[np.r_[0, fk.kinks(), fk.knots.size - 1]]
    flags[np.isin(x, fl_u)] |= FLAG_UNC_KNOT
    flags[np.isin(x, fl_c)] |= FLAG_CON_KNOT
    flags[x == aug.m] |= FLAG_MODE
    flags[np.isin(x, pts)] |= FLAG_DATUM
    cols["knot_flags"] = flags
    return Panel({k: cols[k] for k in PANEL_COLUMNS}, fu, fc, aug.m)
