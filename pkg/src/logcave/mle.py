"""Maximum-likelihood log-concave fits, with and without a mode constraint."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import activeset
from .augment import augment
from .characterization import CharacterizationReport, verify_constrained, verify_unconstrained
from .errors import NonConvergence
from .geometry import (
    PwlConcave,
    SortedSample,
    _empirical_left,
    _left_integrals,
    exp_integral,
    j00,
    j10,
    j11,
    j20,
)


@dataclass(frozen=True)
class SolverOptions:
    tol_certificate: float = 1e-8
    max_iter: int = 500
    damping: float = 0.5
    min_step: float = 1e-12

    def __post_init__(self):
        for name in ("tol_certificate", "max_iter", "damping", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.damping < 1:
            raise ValueError("damping must be below 1")


@dataclass(frozen=True)
class Fit:
    """A solved estimator together with its optimality certificate.

    ``knot_set`` indexes the grid the fit was computed on (the data points,
    or the mode-augmented grid for a constrained fit) and lists the
    endpoints plus every point where the log-density genuinely kinks.
    """

    estimate: PwlConcave
    knot_set: np.ndarray
    loglik: float
    psi: float
    iterations: int
    max_certificate_violation: float
    constrained: bool
    mode: float | None
    converged: bool = True
    report: CharacterizationReport | None = field(default=None, repr=False)
    history: tuple = field(default=(), repr=False)

    def __call__(self, x):
        return self.estimate(x)


class LogLikObjective:
    """``sum_i w_i phi(z_i) - int exp(phi)`` for ``phi`` linear between knots.

    Knot positions are indices into the grid ``z``; ``w`` may hold zero
    weight (the inserted mode).  All derivative information is exact.
    """

    def __init__(self, z, w):
        self.z = np.asarray(z, dtype=float)
        self.w = np.asarray(w, dtype=float)
        _, self.YL = _empirical_left(self.z, self.w, self.z)
        self.below = np.cumsum(self.w)  # mass of (-inf, z_i]
        self.above = np.cumsum(self.w[::-1])[::-1]  # mass of [z_i, inf)
        _, yr = _empirical_left(-self.z[::-1], self.w[::-1], -self.z[::-1])
        self.YR = yr[::-1]

    def initial(self):
        return np.full(2, -np.log(self.z[-1] - self.z[0]))

    def prepare(self, K):
        K = np.asarray(K)
        zk = self.z[K]
        self.h = np.diff(zk)
        idx = np.arange(self.z.size)
        seg = np.clip(np.searchsorted(K, idx, side="right") - 1, 0, K.size - 2)
        lam = (self.z - zk[seg]) / self.h[seg]
        self.c = np.bincount(seg, self.w * (1.0 - lam), minlength=K.size) + np.bincount(
            seg + 1, self.w * lam, minlength=K.size
        )

    def value(self, u):
        return float(self.c @ u - np.sum(self.h * j00(u[:-1], u[1:])))

    def gradient(self, u):
        r, s = u[:-1], u[1:]
        g = self.c.copy()
        g[:-1] -= self.h * j10(r, s)
        g[1:] -= self.h * j10(s, r)
        return g

    def newton(self, u):
        r, s = u[:-1], u[1:]
        diag = np.zeros(u.size)
        diag[:-1] += self.h * j20(r, s)
        diag[1:] += self.h * j20(s, r)
        off = self.h * j11(r, s)
        return self.gradient(u), diag, off

    def directional(self, K, u):
        zk = self.z[K]
        _, HL = _left_integrals(zk, u, self.z)
        _, hr = _left_integrals(-zk[::-1], u[::-1], -self.z[::-1])
        return hr[::-1] - self.YR, HL - self.YL


    def local_slopes(self, K, u, right_anchors, left_anchors):
        """Average growth rate of each system's directional derivative over
        the single grid gap next to an anchor, with the anchor value taken
        as exactly zero.  NaN away from anchors."""
        z = self.z
        N = z.size
        zk = z[K]
        phi = np.interp(z, zk, u)
        FL, _ = _left_integrals(zk, u, z)
        fr, _ = _left_integrals(-zk[::-1], u[::-1], -z[::-1])
        FR = fr[::-1]
        out = []
        for anchors, right in ((right_anchors, True), (left_anchors, False)):
            S = np.full(N, np.nan)
            for step in (-1, 1):
                j = np.asarray(anchors, dtype=int)
                k = j + step
                ok = (k >= 0) & (k < N)
                j, k = j[ok], k[ok]
                a, b = np.minimum(j, k), np.maximum(j, k)
                h = z[b] - z[a]
                if right:
                    # D_R(a) - D_R(b) over a gap without data inside
                    dd = FR[b] - self.above[b] + h * j10(phi[b], phi[a])
                else:
                    # D_L(b) - D_L(a)
                    dd = FL[a] - self.below[a] + h * j10(phi[a], phi[b])
                rate = dd if (right and step == -1) or (not right and step == 1) else -dd
                S[k] = np.fmax(S[k], rate)
            out.append(S)
        return out[0], out[1]


def _finish(res, z, sample, m, opts, constrained):
    f = PwlConcave(z[res.K], res.u)
    kinks = res.K[f.kinks()]
    knot_set = np.unique(np.r_[0, kinks, z.size - 1])
    loglik = float(np.dot(sample.weights, f(sample.points)))
    psi = loglik - exp_integral(f)
    if constrained:
        report = verify_constrained(f, sample, m, opts.tol_certificate)
    else:
        report = verify_unconstrained(f, sample, opts.tol_certificate)
    fit = Fit(
        estimate=f,
        knot_set=knot_set,
        loglik=loglik,
        psi=psi,
        iterations=res.iterations,
        max_certificate_violation=report.max_residual,
        constrained=constrained,
        mode=float(m) if constrained else None,
        converged=bool(res.converged and report.passed),
        report=report,
        history=tuple(res.history),
    )
    if not fit.converged:
        raise NonConvergence(
            f"stopped after {res.iterations} iterations with certificate residual "
            f"{report.max_residual:.3e} (tolerance {opts.tol_certificate:.1e})",
            fit=fit,
        )
    return fit


def _run(z, w, mode_index, opts):
    obj = LogLikObjective(z, w)
    return activeset.maximize(
        obj,
        z,
        mode_index,
        max_iter=opts.max_iter,
        damping=opts.damping,
        min_step=opts.min_step,
        insert_tol=min(1e-11, 1e-3 * opts.tol_certificate),
        slope_tol=min(1e-9, 0.1 * opts.tol_certificate),
    )


def fit_unconstrained(sample: SortedSample, opts: SolverOptions | None = None) -> Fit:
    """Log-concave MLE of ``sample``; supported on the data range.

    Raises
    ------
    NonConvergence
        When the iteration budget runs out or the optimality certificate
        exceeds ``opts.tol_certificate``; the best iterate is attached.
    """
    opts = opts or SolverOptions()
    res = _run(sample.points, sample.weights, None, opts)
    return _finish(res, sample.points, sample, None, opts, constrained=False)


def fit_constrained(sample: SortedSample, m: float, opts: SolverOptions | None = None) -> Fit:
    """Log-concave MLE whose log-density peaks at ``m``.

    The fit lives on the data range extended to include ``m`` and kinks
    only at observations or at ``m``.  ``knot_set`` indexes the grid of
    observations with ``m`` inserted.
    """
    opts = opts or SolverOptions()
    aug = augment(sample, m)
    res = _run(aug.z, aug.weights, aug.mode_index, opts)
    return _finish(res, aug.z, sample, aug.m, opts, constrained=True)


def lr_statistic(sample: SortedSample, m: float, opts: SolverOptions | None = None) -> float:
    """Twice the log likelihood ratio for the hypothesis that the mode is ``m``."""
    fu = fit_unconstrained(sample, opts)
    fc = fit_constrained(sample, m, opts)
    return lr_from_fits(fu, fc, sample)


def lr_from_fits(fu: Fit, fc: Fit, sample: SortedSample) -> float:
    diff = fu.estimate(sample.points) - fc.estimate(sample.points)
    return float(2.0 * sample.n_raw * np.dot(sample.weights, diff))
