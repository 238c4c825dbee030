"""Exact calculus for piecewise-linear concave log-densities.

Everything here is closed form per linear segment: on a segment of length
``h`` where the log-density runs linearly from ``r`` to ``s``, integrals of
``exp`` against polynomial weights reduce to the kernels ``j00``, ``j10``,
``j20`` below (and their mirror images ``j01 = j10(s, r)`` etc.).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSample, DomainMismatch, ModeInfeasible

__all__ = [
    "SortedSample",
    "PwlConcave",
    "LRProcesses",
    "j_value",
    "j00",
    "j10",
    "j20",
    "j11",
    "exp_integral",
    "cdf",
    "quantile",
    "lr_processes",
    "mean_var",
    "knot_class",
    "slopes_at",
]

CONCAVITY_RTOL = 1e-10
_J_TAYLOR_CUTOFF = 1e-5
_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 20

# 1/(k+1)!, 1/(k+2)!, 2/(k+3)! for k = 0.._SERIES_TERMS-1, highest order first
_fact = np.cumprod(np.r_[1.0, np.arange(1, _SERIES_TERMS + 4, dtype=float)])
_C10 = (1.0 / _fact[2 : _SERIES_TERMS + 2])[::-1]
_C20 = (2.0 / _fact[3 : _SERIES_TERMS + 3])[::-1]


# ---------------------------------------------------------------------------
# segment kernels
# ---------------------------------------------------------------------------
def j_value(r, s):
    """Segment integral ``int_0^1 exp((1-t) r + t s) dt``.

    Equals ``(e^s - e^r) / (s - r)``, or ``e^r`` when ``r == s``. Symmetric
    in its arguments and evaluated without cancellation; vectorised.
    """
    r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    d = np.abs(s - r)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        big = np.exp(np.maximum(r, s)) * (-np.expm1(-d)) / d
        # e^c sinh(x)/x with c the midpoint value, even series in x = d/2
        x2 = 0.25 * d * d
        small = np.exp(0.5 * (r + s)) * (1.0 + x2 / 6.0 + x2 * x2 / 120.0)
    out = np.where(d < _J_TAYLOR_CUTOFF, small, big)
    return out if out.ndim else float(out)


j00 = j_value


def _series(coef, d):
    acc = np.zeros_like(d)
    for c in coef:
        acc = acc * d + c
    return acc


def _pick(d, series, neg, pos):
    return np.where(np.abs(d) < _SERIES_CUTOFF, series, np.where(d < 0, neg, pos))


def j10(r, s):
    """``int_0^1 (1-t) exp((1-t) r + t s) dt``; mirror is ``j10(s, r)``."""
    r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    d = s - r
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        ser = np.exp(r) * _series(_C10, d)
        neg = np.exp(r) * (np.expm1(d) - d) / (d * d)
        pos = np.exp(s) * (-np.expm1(-d) - d * np.exp(-d)) / (d * d)
    out = _pick(d, ser, neg, pos)
    return out if out.ndim else float(out)


def j20(r, s):
    """``int_0^1 (1-t)^2 exp((1-t) r + t s) dt``; mirror is ``j20(s, r)``."""
    r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    d = s - r
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        ser = np.exp(r) * _series(_C20, d)
        neg = 2.0 * np.exp(r) * (np.expm1(d) - d - 0.5 * d * d) / d**3
        tail = np.exp(-d) * (1.0 + d + 0.5 * d * d)
        pos = 2.0 * np.exp(s) * (1.0 - tail) / d**3
    out = _pick(d, ser, neg, pos)
    return out if out.ndim else float(out)


def j11(r, s):
    """``int_0^1 t (1-t) exp((1-t) r + t s) dt``."""
    return j10(r, s) - j20(r, s)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------
def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SortedSample:
    """Weighted observation grid.

    ``points`` is strictly increasing, ``weights`` are positive and sum to
    one, and ``n_raw`` keeps the original number of observations (ties are
    collapsed into weights).
    """

    points: np.ndarray
    weights: np.ndarray
    n_raw: int

    def __post_init__(self):
        x = _frozen(self.points)
        w = _frozen(self.weights)
        if x.ndim != 1 or x.shape != w.shape:
            raise ValueError("points and weights must be 1-d arrays of equal length")
        if x.size < 2:
            raise DegenerateSample("need at least two distinct observations")
        if not np.all(np.isfinite(x)):
            raise ValueError("observations must be finite")
        if np.any(np.diff(x) <= 0):
            raise ValueError("points must be strictly increasing")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "n_raw", int(self.n_raw))

    @classmethod
    def from_observations(cls, x) -> "SortedSample":
        """Sort raw observations and collapse ties into weights."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size < 2:
            raise DegenerateSample("need at least two observations")
        if not np.all(np.isfinite(x)):
            raise ValueError("observations must be finite")
        pts, counts = np.unique(x, return_counts=True)
        if pts.size < 2:
            raise DegenerateSample("need at least two distinct observations")
        w = counts / counts.sum()
        # exact unit sum regardless of rounding in the division
        w[-1] = 1.0 - w[:-1].sum()
        return cls(pts, w, x.size)

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.points))

    @property
    def variance(self) -> float:
        c = self.points - self.mean
        return float(np.dot(self.weights, c * c))

    def ecdf(self, t):
        """Right-continuous empirical distribution function."""
        cw = np.r_[0.0, np.cumsum(self.weights)]
        return cw[np.searchsorted(self.points, t, side="right")]

    def ecdf_left(self, t):
        """Left limit of the empirical distribution function."""
        cw = np.r_[0.0, np.cumsum(self.weights)]
        return cw[np.searchsorted(self.points, t, side="left")]

    def reflected(self) -> "SortedSample":
        return SortedSample(-self.points[::-1], self.weights[::-1], self.n_raw)


def _concavity_violation(knots, values):
    """Largest relative increase between successive slopes (<= 0 if concave)."""
    s = np.diff(values) / np.diff(knots)
    if s.size < 2:
        return 0.0
    jump = s[1:] - s[:-1]
    scale = np.maximum(1.0, np.maximum(np.abs(s[1:]), np.abs(s[:-1])))
    return float(np.max(jump / scale))


@dataclass(frozen=True)
class PwlConcave:
    """Piecewise-linear concave function, ``-inf`` off ``[knots[0], knots[-1]]``."""

    knots: np.ndarray
    values: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        x = _frozen(self.knots)
        v = _frozen(self.values)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise ValueError("knots and values must be 1-d, equal length, >= 2 entries")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("knots and values must be finite")
        if self.check and _concavity_violation(x, v) > CONCAVITY_RTOL:
            raise ValueError("values are not concave in the knots")
        object.__setattr__(self, "knots", x)
        object.__setattr__(self, "values", v)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.knots, self.values)
        out = np.where((x < self.knots[0]) | (x > self.knots[-1]), -np.inf, out)
        return out if out.ndim else float(out)

    def density(self, x):
        with np.errstate(under="ignore"):
            return np.exp(self(x))

    def shifted(self, c: float) -> "PwlConcave":
        return PwlConcave(self.knots + c, self.values, check=False)

    def reflected(self) -> "PwlConcave":
        return PwlConcave(-self.knots[::-1], self.values[::-1], check=False)

    def kinks(self, rtol: float = 1e-9) -> np.ndarray:
        """Indices of interior knots where the slope genuinely changes."""
        s = self.slopes
        if s.size < 2:
            return np.zeros(0, dtype=int)
        drop = s[:-1] - s[1:]
        thr = rtol * (1.0 + np.maximum(np.abs(s[:-1]), np.abs(s[1:])))
        return np.flatnonzero(drop > thr) + 1


# ---------------------------------------------------------------------------
# integrals of exp(phi)
# ---------------------------------------------------------------------------
def _segment_masses(knots, values):
    return np.diff(knots) * j00(values[:-1], values[1:])


def exp_integral(f: PwlConcave) -> float:
    """Integral of ``exp(f)`` over the real line."""
    # same sequential summation as ``cdf`` so cdf(f, knots[-1]) matches exactly
    return float(np.cumsum(_segment_masses(f.knots, f.values))[-1])


def _left_integrals(knots, values, t):
    """``F(t) = int_{-inf}^t e^phi`` and ``H(t) = int_{-inf}^t F`` at points t.

    Exact per segment; ``t`` may lie anywhere on the line.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    h = np.diff(knots)
    mass = h * j00(values[:-1], values[1:])
    Fk = np.r_[0.0, np.cumsum(mass)]
    Hk = np.r_[0.0, np.cumsum(Fk[:-1] * h + h * h * j10(values[:-1], values[1:]))]

    idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2)
    a = knots[idx]
    dt = np.clip(t - a, 0.0, h[idx])
    slope = (values[idx + 1] - values[idx]) / h[idx]
    vt = values[idx] + slope * dt
    F = Fk[idx] + dt * j00(values[idx], vt)
    H = Hk[idx] + Fk[idx] * dt + dt * dt * j10(values[idx], vt)

    below = t < knots[0]
    above = t >= knots[-1]
    F = np.where(below, 0.0, F)
    H = np.where(below, 0.0, H)
    F = np.where(above, Fk[-1], F)
    H = np.where(above, Hk[-1] + Fk[-1] * (t - knots[-1]), H)
    return F, H


def _empirical_left(points, weights, t):
    """Right-continuous ``F_n(t)`` and ``Y(t) = int_{-inf}^t F_n``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    cw = np.r_[0.0, np.cumsum(weights)]
    Yk = np.r_[0.0, np.cumsum(cw[1:-1] * np.diff(points))]
    j = np.searchsorted(points, t, side="right")  # number of points <= t
    F = cw[j]
    jj = np.clip(j - 1, 0, points.size - 1)
    Y = np.where(j == 0, 0.0, Yk[jj] + F * (t - points[jj]))
    return F, Y


def cdf(f: PwlConcave, t):
    """``int_{-inf}^t exp(f)``; not renormalised."""
    F, _ = _left_integrals(f.knots, f.values, t)
    return F if np.ndim(t) else float(F[0])


def quantile(f: PwlConcave, p):
    """Inverse of the normalised distribution function of ``exp(f)``."""
    scalar = np.ndim(p) == 0
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    x, v = f.knots, f.values
    mass = _segment_masses(x, v)
    total = mass.sum()
    Fk = np.r_[0.0, np.cumsum(mass)] / total
    idx = np.clip(np.searchsorted(Fk, p, side="right") - 1, 0, x.size - 2)
    h = np.diff(x)[idx]
    b = (v[idx + 1] - v[idx]) / h
    need = (p - Fk[idx]) * total  # mass to accumulate inside the segment
    # solve int_0^u exp(v0 + b y) dy = need for u
    e0 = np.exp(v[idx])
    flat = np.abs(b * h) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        u_curved = np.log1p(b * need / e0) / b
    u = np.where(flat, need / e0, u_curved)
    out = x[idx] + np.clip(np.nan_to_num(u, nan=0.0), 0.0, h)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# left / right characterization processes
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LRProcesses:
    """Values of the eight left/right processes at the points ``t``.

    ``FL_n``/``FR_n`` are the empirical left (``(-inf, t]``) and right
    (``[t, inf)``) masses, ``YL``/``YR`` their integrals from ``X_(1)``
    resp. to ``X_(n)``, and ``FL_hat``/``FR_hat``/``HL``/``HR`` the same
    objects for the fitted density.
    """

    t: np.ndarray
    FL_n: np.ndarray
    FR_n: np.ndarray
    YL: np.ndarray
    YR: np.ndarray
    FL_hat: np.ndarray
    FR_hat: np.ndarray
    HL: np.ndarray
    HR: np.ndarray


def lr_processes(f: PwlConcave, sample: SortedSample, m, eval_at) -> LRProcesses:
    """Evaluate the left/right empirical and fitted processes.

    The admissible range is the data range, widened to the fit's domain
    (which differs only when a mode constraint sits outside the data).
    Right processes are computed as left processes of the reflected data
    and fit, so no subtraction from the total mass is involved.
    """
    t = np.atleast_1d(np.asarray(eval_at, dtype=float))
    lo = min(sample.points[0], f.knots[0])
    hi = max(sample.points[-1], f.knots[-1])
    if m is not None:
        lo, hi = min(lo, m), max(hi, m)
    if np.any(t < lo) or np.any(t > hi):
        raise DomainMismatch(f"evaluation points must lie in [{lo}, {hi}]")

    FLn, YL = _empirical_left(sample.points, sample.weights, t)
    FRn, YR = _empirical_left(-sample.points[::-1], sample.weights[::-1], -t)
    FLh, HL = _left_integrals(f.knots, f.values, t)
    FRh, HR = _left_integrals(-f.knots[::-1], f.values[::-1], -t)
    return LRProcesses(t, FLn, FRn, YL, YR, FLh, FRh, HL, HR)


# ---------------------------------------------------------------------------
# moments and mode classification
# ---------------------------------------------------------------------------
def mean_var(f: PwlConcave) -> tuple[float, float]:
    """Mean and variance of the density ``exp(f) / int exp(f)``."""
    x, v = f.knots, f.values
    h = np.diff(x)
    r, s = v[:-1], v[1:]
    m0 = h * j00(r, s)
    a1 = j10(s, r)  # int t e^.. dt
    a2 = j20(s, r)  # int t^2 e^.. dt
    total = m0.sum()

    def centred(c):
        off = x[:-1] - c
        first = h * (off * j00(r, s) + h * a1)
        second = h * (off * off * j00(r, s) + 2.0 * off * h * a1 + h * h * a2)
        return first.sum() / total, second.sum() / total

    c0 = 0.5 * (x[0] + x[-1])
    e1, _ = centred(c0)
    mu = c0 + e1
    e1, e2 = centred(mu)
    return float(mu + e1), float(max(e2 - e1 * e1, 0.0))


def slopes_at(f: PwlConcave, x: float) -> tuple[float, float]:
    """Left and right derivatives of ``f`` at ``x`` inside its domain.

    At a domain endpoint the missing one-sided slope is reported as 0.
    """
    k, v = f.knots, f.values
    if x < k[0] or x > k[-1]:
        raise DomainMismatch("point outside the domain of f")
    s = f.slopes
    i = int(np.searchsorted(k, x, side="left"))
    if i < k.size and k[i] == x:
        left = s[i - 1] if i > 0 else 0.0
        right = s[i] if i < s.size else 0.0
    else:
        left = right = s[i - 1]
    return float(left), float(right)


def knot_class(f: PwlConcave, m: float, tol: float = 1e-9) -> str:
    """Classify ``m`` as ``"LK"``, ``"RK"``, ``"NK"`` or ``"BOTH"``.

    Raises ModeInfeasible when ``f`` does not peak at ``m``.
    """
    left, right = slopes_at(f, m)
    thr = tol * (1.0 + max(abs(left), abs(right)))
    if left < -thr or right > thr:
        raise ModeInfeasible(
            f"f is not maximal at m={m}: left slope {left:.3e}, right slope {right:.3e}"
        )
    lk = left > thr
    rk = right < -thr
    if lk and rk:
        return "BOTH"
    if lk:
        return "LK"
    if rk:
        return "RK"
    return "NK"
