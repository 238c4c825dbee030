"""Discretised Gaussian limit problem.

The driver is ``X(t) = sigma W(t) - 4 a t^3`` on a symmetric window split
into cells of width ``delta`` centred at ``j delta``.  A concave function
``g`` on the cell centres is fitted by minimising

    1/2 sum_j g_j^2 delta - sum_j g_j dX_j,

the least-squares concave regression of ``dX / delta``.  With the mode
constraint the maximum of ``g`` must sit at the cell centred at 0.  The
fit solves the same cone problem as the density estimator, so the shared
active-set engine does the work; only the objective differs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import activeset
from .errors import NonConvergence

EDGE_FRACTION = 0.1


@dataclass(frozen=True)
class DriverPath:
    """Cell increments of the driver plus the Brownian path they came from.

    ``w_lattice`` holds ``W`` at every multiple of ``delta / 2`` inside the
    window, with ``W(0) = 0``; cell boundaries and centres are on it.
    """

    centres: np.ndarray
    boundaries: np.ndarray
    increments: np.ndarray
    drift: np.ndarray
    w_lattice: np.ndarray = field(repr=False)
    delta: float
    half_width: float
    seed: int | None
    a: float = 1.0
    sigma: float = 1.0

    @property
    def mode_index(self) -> int:
        return self.centres.size // 2

    def reflected(self) -> "DriverPath":
        """Path of ``t -> X(-t)``-driven data (same law)."""
        return DriverPath(
            self.centres, self.boundaries, self.increments[::-1].copy(), self.drift[::-1].copy(),
            -self.w_lattice[::-1], self.delta, self.half_width, self.seed, self.a, self.sigma,
        )


def _cells(half_width, delta):
    M = int(round(half_width / delta))
    j = np.arange(-M, M + 1)
    centres = j * delta
    boundaries = (np.arange(-M, M + 2) - 0.5) * delta
    return M, centres, boundaries


def _assemble(M, centres, boundaries, w, delta, half_width, seed, a, sigma):
    # lattice index of boundary k is 2k - 1 - 2M + (2M + 1) = 2k
    wb = w[0::2]
    drift = -4.0 * a * np.diff(boundaries**3)
    inc = sigma * np.diff(wb) + drift
    return DriverPath(centres, boundaries, inc, drift, w, delta, half_width, seed, a, sigma)


def simulate_driver(half_width: float = 5.0, delta: float = 0.005, seed: int | None = 0,
                    a: float = 1.0, sigma: float = 1.0, rng: np.random.Generator | None = None) -> DriverPath:
    """Two-sided Brownian driver with cubic drift, anchored at ``W(0) = 0``."""
    if half_width < 4:
        raise ValueError("half_width must be at least 4")
    if not 0 < delta <= 0.01:
        raise ValueError("delta must lie in (0, 0.01]")
    if a <= 0 or sigma <= 0:
        raise ValueError("a and sigma must be positive")
    rng = rng if rng is not None else np.random.default_rng(seed)
    M, centres, boundaries = _cells(half_width, delta)
    L = 2 * M + 1  # lattice points on each side of 0
    steps = rng.standard_normal((2, L)) * math.sqrt(delta / 2)
    right = np.cumsum(steps[0])
    left = np.cumsum(steps[1])
    w = np.r_[left[::-1], 0.0, right]
    return _assemble(M, centres, boundaries, w, delta, half_width, seed, a, sigma)


def refine(path: DriverPath, seed: int = 0) -> DriverPath:
    """Halve ``delta`` by Brownian-bridge midpoints of the same path."""
    rng = np.random.default_rng(np.random.SeedSequence([0 if path.seed is None else path.seed, seed, 7]))
    w = path.w_lattice
    h = path.delta / 2
    mids = 0.5 * (w[:-1] + w[1:]) + rng.standard_normal(w.size - 1) * math.sqrt(h / 4)
    fine = np.empty(2 * w.size - 1)
    fine[0::2] = w
    fine[1::2] = mids
    delta = path.delta / 2
    M, centres, boundaries = _cells(path.half_width, delta)
    # new boundaries are odd multiples of delta/2 = h/2; keep lattice points out to them
    extra = fine.size // 2 - (2 * M + 1)
    fine = fine[extra: fine.size - extra] if extra > 0 else fine
    return _assemble(M, centres, boundaries, fine, delta, path.half_width, path.seed, path.a, path.sigma)


# ---------------------------------------------------------------------------
# concave regression on the cells
# ---------------------------------------------------------------------------
class _QuadraticObjective:
    """``sum g dX - 1/2 delta sum g^2`` with ``g`` piecewise linear in the knots."""

    def __init__(self, centres, increments, delta):
        self.s = centres
        self.dx = increments
        self.delta = delta

    def initial(self):
        level = self.dx.sum() / (self.delta * self.dx.size)
        return np.array([level, level])

    def prepare(self, K):
        K = np.asarray(K)
        sk = self.s[K]
        h = np.diff(sk)
        idx = np.arange(self.s.size)
        seg = np.clip(np.searchsorted(K, idx, side="right") - 1, 0, K.size - 2)
        lam = (self.s - sk[seg]) / h[seg]
        n = K.size
        self.c = np.bincount(seg, self.dx * (1 - lam), minlength=n) + np.bincount(
            seg + 1, self.dx * lam, minlength=n)
        d = self.delta
        self.diag = d * (np.bincount(seg, (1 - lam) ** 2, minlength=n)
                         + np.bincount(seg + 1, lam**2, minlength=n))
        self.off = d * np.bincount(seg, lam * (1 - lam), minlength=n - 1)[: n - 1]

    def _Qu(self, u):
        q = self.diag * u
        q[:-1] += self.off * u[1:]
        q[1:] += self.off * u[:-1]
        return q

    def value(self, u):
        return float(self.c @ u - 0.5 * u @ self._Qu(u))

    def newton(self, u):
        return self.c - self._Qu(u), self.diag, self.off

    def directional(self, K, u):
        g = np.interp(self.s, self.s[K], u)
        return _hinge_derivatives(self.s, self.dx - self.delta * g)


def _hinge_derivatives(s, r):
    """Derivatives of the fit criterion along right and left hinges at each centre.

    Right: ``-sum_j (s_j - s_k)_+ r_j``; left: ``-sum_j (s_k - s_j)_+ r_j``.
    """
    h = np.diff(s)
    tail = np.cumsum(r[::-1])[::-1]  # sum_{j >= i} r_j
    A = h * tail[1:]
    right = np.r_[np.cumsum(A[::-1])[::-1], 0.0]
    head = np.cumsum(r)  # sum_{j <= i} r_j
    B = h * head[:-1]
    left = np.r_[0.0, np.cumsum(B)]
    return -right, -left


@dataclass(frozen=True)
class LimitFit:
    """Fitted concave ``g`` on the cell centres.

    ``touch_set`` lists the cells where the fit kinks (the contact points of
    the integrated processes); ``objective`` is the minimised criterion.
    """

    g: np.ndarray
    touch_set: np.ndarray
    objective: float
    constrained: bool
    knots: np.ndarray
    mode_left: bool = False
    mode_right: bool = False
    iterations: int = 0

    def value_at_zero(self) -> float:
        return float(self.g[self.g.size // 2])

    def slopes_at_zero(self, delta: float) -> tuple[float, float]:
        i = self.g.size // 2
        return float((self.g[i] - self.g[i - 1]) / delta), float((self.g[i + 1] - self.g[i]) / delta)


def _solve(path: DriverPath, constrained: bool, max_iter: int | None = None) -> LimitFit:
    obj = _QuadraticObjective(path.centres, path.increments, path.delta)
    N = path.centres.size
    mi = path.mode_index if constrained else None
    Y = _integrated_driver(path)
    scale = max(1.0, float(np.max(np.abs(Y))))
    res = activeset.maximize(
        obj, path.centres, mi,
        max_iter=max_iter or max(500, 4 * N),
        insert_tol=1e-13 * scale,
        newton_tol=1e-26,
    )
    g = np.interp(path.centres, path.centres[res.K], res.u)
    kinks = res.K[(res.K > 0) & (res.K < N - 1)]
    if constrained:
        slopes = np.diff(res.u) / np.diff(path.centres[res.K])
        keep = []
        for k in kinks:
            p = int(np.searchsorted(res.K, k))
            if k != mi or abs(slopes[p - 1]) > 0 or abs(slopes[p]) > 0:
                keep.append(k)
        kinks = np.array(keep, dtype=int)
    fit = LimitFit(g, kinks, -res.value, constrained, res.K, res.mode_left, res.mode_right,
                   res.iterations)
    if not res.converged:
        raise NonConvergence(
            f"limit regression stopped after {res.iterations} iterations "
            f"(largest hinge derivative {res.max_violation:.3e})",
            fit=fit,
        )
    return fit


def invelope_unconstrained(path: DriverPath, max_iter: int | None = None) -> LimitFit:
    """Concave least-squares fit of the driver increments."""
    return _solve(path, False, max_iter)


def invelope_constrained(path: DriverPath, max_iter: int | None = None) -> LimitFit:
    """Concave least-squares fit whose maximum sits in the cell at 0."""
    return _solve(path, True, max_iter)


def objective(path: DriverPath, g) -> float:
    g = np.asarray(g, dtype=float)
    return float(0.5 * path.delta * g @ g - g @ path.increments)


# ---------------------------------------------------------------------------
# discrete characterization
# ---------------------------------------------------------------------------
def _integrated_driver(path: DriverPath):
    """Discrete double integral of ``dX`` from the left end of the window."""
    return -_hinge_derivatives(path.centres, path.increments)[1]


@dataclass(frozen=True)
class LimitReport:
    """Residuals of the discrete optimality conditions, relative to ``scale``.

    ``inequality`` is the worst excess of the discrete ``H`` over ``Y``,
    ``touch`` the worst gap at the contact cells, ``affine`` the mismatch in
    the free directions, ``mid`` the mid-interval balance of a constrained
    fit and ``plateau_slope`` the largest increment of ``g`` strictly inside
    its modal interval.
    """

    inequality: float
    touch: float
    affine: float
    mid: float
    plateau_slope: float
    scale: float
    tau_left: float | None = None
    tau_right: float | None = None

    def passed(self, tol: float = 1e-6, slope_tol: float = 1e-10) -> bool:
        return max(self.inequality, self.touch, self.affine, self.mid) <= tol and self.plateau_slope <= slope_tol


def _hull_gap(a, b):
    lo, hi = min(a, b), max(a, b)
    return max(lo, -hi, 0.0)


def check_limit_fit(path: DriverPath, fit: LimitFit, edge_fraction: float = EDGE_FRACTION) -> LimitReport:
    """Evaluate the discrete characterization of a limit fit.

    Contact and inequality checks skip the outer ``edge_fraction`` of the
    cells on each side, where truncation of the window dominates.
    """
    s = path.centres
    N = s.size
    r = path.increments - path.delta * fit.g
    DR, DL = _hinge_derivatives(s, r)
    Y = _integrated_driver(path)
    scale = max(1.0, float(np.max(np.abs(Y))))
    cut = int(edge_fraction * N)
    inner = np.zeros(N, dtype=bool)
    inner[cut: N - cut] = True
    touch = fit.touch_set[inner[fit.touch_set]] if fit.touch_set.size else fit.touch_set

    if not fit.constrained:
        ineq = max(float(DL[inner].max()), 0.0)
        gap = float(np.abs(DL[touch]).max()) if touch.size else 0.0
        affine = max(abs(float(r.sum())), abs(float(s @ r)))
        return LimitReport(ineq / scale, gap / scale, affine / scale, 0.0, 0.0, scale)

    mi = path.mode_index
    left = inner & (np.arange(N) <= mi)
    right = inner & (np.arange(N) >= mi)
    ineq = max(float(DL[left].max(initial=0.0)), float(DR[right].max(initial=0.0)), 0.0)
    lt = touch[touch < mi]
    rt = touch[touch > mi]
    gap = 0.0
    if lt.size:
        gap = max(gap, float(np.abs(DL[lt]).max()))
    if rt.size:
        gap = max(gap, float(np.abs(DR[rt]).max()))
    if fit.mode_left:
        gap = max(gap, abs(float(DL[mi])))
    if fit.mode_right:
        gap = max(gap, abs(float(DR[mi])))
    affine = abs(float(r.sum()))

    # modal interval: last left contact to first right contact
    tl = mi if fit.mode_left else (int(fit.touch_set[fit.touch_set < mi].max()) if np.any(fit.touch_set < mi) else 0)
    tr = mi if fit.mode_right else (int(fit.touch_set[fit.touch_set > mi].min()) if np.any(fit.touch_set > mi) else N - 1)
    R = np.cumsum(r)
    mid = 0.0
    # at a contact strictly left (right) of the modal cell the running
    # residual sum must change sign across it
    if 0 < tl < mi:
        mid = max(mid, _hull_gap(R[tl - 1], R[tl]))
    if mi < tr < N - 1:
        mid = max(mid, _hull_gap(R[tr - 1], R[tr]))
    plateau = float(np.abs(np.diff(fit.g[tl: tr + 1])).max()) if tr > tl else 0.0
    return LimitReport(ineq / scale, gap / scale, affine / scale, mid / scale, plateau, scale,
                       float(s[tl]), float(s[tr]))


# ---------------------------------------------------------------------------
# constants and experiments
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LimitConstants:
    c_f: float
    d_f: float
    C_phi: float
    D_phi: float


def limit_constants(f0_at_mode: float, curvature: float) -> LimitConstants:
    """Scale factors linking the limit process to density and log-density errors.

    Parameters
    ----------
    f0_at_mode : float
        Density value at the point of interest (positive).
    curvature : float
        Second derivative of the log-density there (negative).
    """
    if not f0_at_mode > 0:
        raise ValueError("density value must be positive")
    if not curvature < 0:
        raise ValueError("log-density curvature must be negative")
    k = abs(curvature)
    f = f0_at_mode
    return LimitConstants(
        (f**3 * k / 24.0) ** 0.2,
        (f**4 * k**3 / 24.0**3) ** 0.2,
        (k / (f**2 * 24.0)) ** 0.2,
        (k**3 / (f * 24.0**3)) ** 0.2,
    )


@dataclass(frozen=True)
class LimitSamples:
    """Per-replication statistics at 0 of both limit fits."""

    phi_unc: np.ndarray
    dphi_unc: np.ndarray
    phi_con: np.ndarray
    dphi_con_left: np.ndarray
    dphi_con_right: np.ndarray
    dropped: int
    reps: int

    QUANTITIES = ("phi_unc", "dphi_unc", "phi_con", "dphi_con_left", "dphi_con_right")

    def quantile_table(self, probs=None):
        """Rows ``(quantity, probability, value)``; raw values when ``probs`` is None."""
        rows = []
        for q in self.QUANTITIES:
            v = np.sort(getattr(self, q))
            if probs is None:
                p = (np.arange(v.size) + 0.5) / v.size
                rows.extend((q, float(pi), float(vi)) for pi, vi in zip(p, v))
            else:
                rows.extend((q, float(pi), float(np.quantile(v, pi))) for pi in probs)
        return rows


def replication_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1)[0])


def limit_distribution_experiment(reps: int, half_width: float = 5.0, delta: float = 0.005,
                                  seed: int = 0, a: float = 1.0, sigma: float = 1.0,
                                  reflect: bool = False, constrained_only: bool = False,
                                  max_drop_fraction: float = 0.02) -> LimitSamples:
    """Simulate both limit fits ``reps`` times and record their behaviour at 0."""
    out = {k: [] for k in LimitSamples.QUANTITIES}
    dropped = 0
    for rep in range(reps):
        path = simulate_driver(half_width, delta, replication_seed(seed, rep), a, sigma)
        if reflect:
            path = path.reflected()
        try:
            fc = invelope_constrained(path)
            fu = None if constrained_only else invelope_unconstrained(path)
        except NonConvergence:
            dropped += 1
            continue
        i = path.mode_index
        if fu is not None:
            out["phi_unc"].append(fu.value_at_zero())
            out["dphi_unc"].append(float((fu.g[i + 1] - fu.g[i - 1]) / (2 * delta)))
        else:
            out["phi_unc"].append(math.nan)
            out["dphi_unc"].append(math.nan)
        out["phi_con"].append(fc.value_at_zero())
        lsl, rsl = fc.slopes_at_zero(delta)
        out["dphi_con_left"].append(lsl)
        out["dphi_con_right"].append(rsl)
    if dropped > max_drop_fraction * reps:
        raise NonConvergence(f"{dropped} of {reps} limit replications failed")
    return LimitSamples(*(np.array(out[k]) for k in LimitSamples.QUANTITIES), dropped, reps)
