"""Optimality certificates for claimed log-concave MLE fits.

A fit is certified by comparing the integrated distribution function of
the fitted density with the integrated empirical distribution function.
For the unconstrained estimator the former must stay below the latter and
touch it at every knot.  With a mode constraint the comparison splits into
a left system on ``[Z_1, m]`` and a right system on ``[m, Z_N]`` (integrals
running towards ``m`` from the respective end), with touching required at
left resp. right knots; ``m`` itself counts only when the fit kinks there
on that side.

The checks never look at solver internals: they take any ``PwlConcave``
and a sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .augment import augment
from .errors import DomainMismatch
from .geometry import (
    PwlConcave,
    SortedSample,
    _empirical_left,
    _left_integrals,
    cdf,
    exp_integral,
    knot_class,
)

CHEBYSHEV_POINTS = 64
KNOT_RTOL = 1e-9


@dataclass(frozen=True)
class CharacterizationReport:
    max_inequality_violation: float
    max_knot_equality_gap: float
    touching_violation: float
    normalization_gap: float
    tol: float
    knot_class: str | None = None

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    @property
    def max_residual(self) -> float:
        return max(
            self.max_inequality_violation,
            self.max_knot_equality_gap,
            self.touching_violation,
            self.normalization_gap,
        )

    def as_dict(self) -> dict:
        return {
            "max_inequality_violation": self.max_inequality_violation,
            "max_knot_equality_gap": self.max_knot_equality_gap,
            "touching_violation": self.touching_violation,
            "normalization_gap": self.normalization_gap,
            "tol": self.tol,
            "knot_class": self.knot_class,
            "pass": self.passed,
        }


def _check_points(breaks):
    """Breakpoints plus Chebyshev nodes inside every gap between them."""
    breaks = np.unique(breaks)
    k = np.arange(CHEBYSHEV_POINTS)
    nodes = 0.5 * (1.0 - np.cos(np.pi * (k + 0.5) / CHEBYSHEV_POINTS))
    a, b = breaks[:-1], breaks[1:]
    inner = (a[:, None] + (b - a)[:, None] * nodes[None, :]).ravel()
    return np.unique(np.r_[breaks, inner])


def _same_point(a, b):
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


SNAP_RTOL = 1e-12


def _snap(t, points):
    """Move each ``t`` onto the nearest observation when within rounding of it.

    Knots read back from text are only accurate to the printed digits; the
    empirical band at a kink must be taken at the observation it stands for.
    """
    t = np.asarray(t, dtype=float)
    i = np.clip(np.searchsorted(points, t), 1, points.size - 1)
    lo, hi = points[i - 1], points[i]
    near = np.where(np.abs(t - lo) <= np.abs(hi - t), lo, hi)
    close = np.abs(near - t) <= SNAP_RTOL * np.maximum(1.0, np.abs(t))
    return np.where(close, near, t)


def _touch_left(f, sample, t):
    """Excess of the fitted CDF outside ``[F_n(t-), F_n(t)]`` at points ``t``."""
    Fh, _ = _left_integrals(f.knots, f.values, t)
    ts = _snap(t, sample.points)
    upper = sample.ecdf(ts)
    lower = sample.ecdf_left(ts)
    return np.maximum(np.maximum(Fh - upper, lower - Fh), 0.0)


def _touch_right(f, sample, t):
    """Same band, phrased through masses of ``[t, inf)`` (computed by reflection)."""
    FRh, _ = _left_integrals(-f.knots[::-1], f.values[::-1], -t)
    ts = _snap(t, sample.points)
    closed = 1.0 - sample.ecdf_left(ts)
    opened = 1.0 - sample.ecdf(ts)
    return np.maximum(np.maximum(opened - FRh, FRh - closed), 0.0)


def verify_unconstrained(f: PwlConcave, sample: SortedSample, tol: float) -> CharacterizationReport:
    """Certificate for the unconstrained MLE.

    Parameters
    ----------
    f : PwlConcave
        Claimed log-density; must be supported on ``[X_(1), X_(n)]``.
    sample : SortedSample
    tol : float
        Pass threshold applied to every residual.
    """
    x = sample.points
    if not (_same_point(f.knots[0], x[0]) and _same_point(f.knots[-1], x[-1])):
        raise DomainMismatch("fit must be supported exactly on the data range")
    t = _check_points(np.r_[x, f.knots])
    t = np.clip(t, x[0], x[-1])
    _, H = _left_integrals(f.knots, f.values, t)
    _, Y = _empirical_left(x, sample.weights, t)
    D = H - Y
    ineq = max(float(D.max()), 0.0)

    kn = f.knots[np.r_[0, f.kinks(KNOT_RTOL), f.knots.size - 1]]
    _, Hk = _left_integrals(f.knots, f.values, kn)
    _, Yk = _empirical_left(x, sample.weights, kn)
    eq = float(np.max(np.abs(Hk - Yk)))

    interior = f.knots[f.kinks(KNOT_RTOL)]
    touch = float(_touch_left(f, sample, interior).max()) if interior.size else 0.0
    norm = abs(exp_integral(f) - 1.0)
    return CharacterizationReport(ineq, eq, touch, norm, tol)


def verify_constrained(f: PwlConcave, sample: SortedSample, m: float, tol: float) -> CharacterizationReport:
    """Certificate for the MLE with its mode fixed at ``m``.

    Raises ``ModeInfeasible`` if ``f`` does not peak at ``m`` and
    ``DomainMismatch`` unless ``f`` lives on the mode-augmented data range.
    """
    aug = augment(sample, m)
    z = aug.z
    if not (_same_point(f.knots[0], z[0]) and _same_point(f.knots[-1], z[-1])):
        raise DomainMismatch("fit must be supported exactly on the augmented data range")
    m = aug.m
    cls = knot_class(f, m, tol=KNOT_RTOL)

    x, w = sample.points, sample.weights
    t = _check_points(np.r_[z, f.knots])
    t = np.clip(t, z[0], z[-1])
    left = t[t <= m]
    right = t[t >= m]

    _, HL = _left_integrals(f.knots, f.values, left)
    _, YL = _empirical_left(x, w, left)
    _, HR = _left_integrals(-f.knots[::-1], f.values[::-1], -right)
    _, YR = _empirical_left(-x[::-1], w[::-1], -right)
    ineq = max(float((HL - YL).max(initial=0.0)), float((HR - YR).max(initial=0.0)), 0.0)

    kinks = f.knots[f.kinks(KNOT_RTOL)]
    kinks = kinks[np.array([not _same_point(k, m) for k in kinks], dtype=bool)] if kinks.size else kinks
    lk = np.r_[z[0], kinks[kinks < m]]
    rk = np.r_[kinks[kinks > m], z[-1]]
    if cls in ("LK", "BOTH"):
        lk = np.r_[lk, m]
    if cls in ("RK", "BOTH"):
        rk = np.r_[m, rk]
    lk = lk[lk <= m]
    rk = rk[rk >= m]
    _, HLk = _left_integrals(f.knots, f.values, lk)
    _, YLk = _empirical_left(x, w, lk)
    _, HRk = _left_integrals(-f.knots[::-1], f.values[::-1], -rk)
    _, YRk = _empirical_left(-x[::-1], w[::-1], -rk)
    eq = max(float(np.abs(HLk - YLk).max(initial=0.0)), float(np.abs(HRk - YRk).max(initial=0.0)))

    touch = 0.0
    tl, tr = kinks[kinks < m], kinks[kinks > m]
    if tl.size:
        touch = max(touch, float(_touch_left(f, sample, tl).max()))
    if tr.size:
        touch = max(touch, float(_touch_right(f, sample, tr).max()))
    norm = abs(float(cdf(f, z[-1])) - 1.0)
    return CharacterizationReport(ineq, eq, touch, norm, tol, knot_class=cls)


# ---------------------------------------------------------------------------
# crossings between the two estimators
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Crossings:
    """Sign changes of ``F_con - F_unc`` (``CDF_EQUAL``) and of the density
    difference (``DENSITY_EQUAL``).  ``degenerate`` means the two fits agree
    everywhere, in which case ``roots`` is empty."""

    roots: list
    degenerate: bool

    def of_kind(self, kind):
        return [x for x, k in self.roots if k == kind]


def _sign_change_roots(fun, grid, xtol):
    vals = fun(grid)
    scale = max(1.0, float(np.max(np.abs(vals))))
    nz = np.flatnonzero(np.abs(vals) > 1e-13 * scale)
    roots = []
    for i, j in zip(nz[:-1], nz[1:]):
        if np.sign(vals[i]) != np.sign(vals[j]):
            a, b = grid[i], grid[j]
            if j > i + 1:
                # exact zeros in between: report the middle of the zero run
                roots.append(float(0.5 * (grid[i + 1] + grid[j - 1])))
            else:
                roots.append(float(brentq(lambda s: float(fun(np.array([s]))[0]), a, b, xtol=xtol)))
    return roots


def crossing_diagnostics(fu: PwlConcave, fc: PwlConcave, sample: SortedSample, m: float,
                         xtol: float = 1e-10) -> Crossings:
    """Locate where the constrained and unconstrained fits cross.

    Works on the common domain of the two fits; each smooth piece between
    knots is scanned at 32 points before bracketing roots with Brent's
    method.
    """
    lo = max(fu.knots[0], fc.knots[0])
    hi = min(fu.knots[-1], fc.knots[-1])
    br = np.unique(np.r_[fu.knots, fc.knots, sample.points])
    br = br[(br >= lo) & (br <= hi)]
    br = np.unique(np.r_[lo, br, hi])
    s = np.linspace(0.0, 1.0, 33)[1:-1]
    grid = np.unique(np.r_[br, (br[:-1, None] + np.diff(br)[:, None] * s[None, :]).ravel()])

    def dcdf(t):
        return cdf(fc, t) - cdf(fu, t)

    def ddens(t):
        return fc.density(t) - fu.density(t)

    if np.max(np.abs(ddens(grid))) <= 1e-12:
        return Crossings([], True)
    roots = [(x, "CDF_EQUAL") for x in _sign_change_roots(dcdf, grid, xtol)]
    roots += [(x, "DENSITY_EQUAL") for x in _sign_change_roots(ddens, grid, xtol)]
    roots.sort()
    return Crossings(roots, False)
