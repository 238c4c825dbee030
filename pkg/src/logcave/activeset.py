"""Active-set ascent over piecewise-linear concave functions on a grid.

The feasible set is the cone of concave functions on the grid ``z``
(optionally with their maximum at grid index ``mode``).  Such a function
is written as a free part plus nonnegative multiples of hinge generators

* right hinge at ``z_k``: ``-(x - z_k)_+``   (unconstrained, or ``z_k >= m``)
* left hinge at ``z_k``:  ``-(z_k - x)_+``   (``z_k <= m`` only)

with free part ``a + b x`` (unconstrained) or ``a`` (mode-constrained).
The iterate is stored as its values ``u`` at the active knots ``K``; the
hinge coefficient of an active generator is the slope drop across its
knot, so feasibility is a set of linear inequalities in ``u``.  With a
mode constraint the segment between the innermost left and right hinges
is flat; its two end values share one coordinate.

Each outer step runs damped Newton on the current knot set, stepping back
to the boundary of the cone when a coefficient would turn negative (the
corresponding knot is then deleted), and once the restricted problem is
solved inserts the generator with the largest directional derivative.
Those directional derivatives are exactly the characterization residuals,
so they also serve as the stopping rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded


@dataclass
class EngineResult:
    K: np.ndarray
    u: np.ndarray
    mode_left: bool
    mode_right: bool
    value: float
    history: list
    iterations: int
    converged: bool
    max_violation: float
    newton_decrement: float


class _State:
    """Knot set, knot values and the two hinge flags at the mode."""

    def __init__(self, z, mode, K, u):
        self.z = z
        self.mode = mode
        self.K = np.asarray(K, dtype=int)
        self.u = np.asarray(u, dtype=float)
        self.mL = False
        self.mR = False

    @property
    def last(self):
        return self.z.size - 1

    # --- generator bookkeeping ------------------------------------------
    def generators(self):
        """Active generators as ``(position in K, kind)``, kind in 'LR'."""
        gens = []
        mi = self.mode
        for p, k in enumerate(self.K):
            if mi is None:
                if 0 < k < self.last:
                    gens.append((p, "R"))
            elif k == mi:
                if self.mL:
                    gens.append((p, "L"))
                if self.mR:
                    gens.append((p, "R"))
            elif 0 < k < mi:
                gens.append((p, "L"))
            elif mi < k < self.last:
                gens.append((p, "R"))
        return gens

    def plateau(self):
        """Position ``p`` such that segment ``K[p]..K[p+1]`` is held flat."""
        mi = self.mode
        if mi is None or (self.mL and self.mR):
            return None
        K = self.K
        if self.mL:
            lo = mi
        else:
            left = K[(K > 0) & (K < mi)]
            lo = int(left.max()) if left.size else 0
        if self.mR:
            hi = mi
        else:
            right = K[(K > mi) & (K < self.last)]
            hi = int(right.min()) if right.size else self.last
        if lo == hi:
            # mode at a grid end with its only hinge active
            return None
        p = int(np.searchsorted(K, lo))
        assert K[p + 1] == hi, "plateau ends must be adjacent knots"
        return p

    def anchors(self):
        """Grid indices where each system's directional derivative must vanish
        at a restricted optimum: the active knots of that system."""
        K, mi = self.K, self.mode
        if mi is None:
            return K, K
        right = np.r_[K[K > mi], [mi] if self.mR else []].astype(int)
        left = np.r_[K[K < mi], [mi] if self.mL else []].astype(int)
        return right, left

    def coefficients(self, u):
        """Hinge coefficients (linear in ``u``) for the active generators."""
        zk = self.z[self.K]
        s = np.diff(u) / np.diff(zk)
        out = []
        mi = self.mode
        for p, kind in self.generators():
            k = self.K[p]
            if mi is not None and k == mi:
                out.append(s[p - 1] if kind == "L" else -s[p])
            else:
                out.append(s[p - 1] - s[p])
        return np.array(out)

    # --- edits -----------------------------------------------------------
    def insert(self, k, kind):
        K, u = self.K, self.u
        if self.mode is not None and k == self.mode:
            if kind == "L":
                self.mL = True
            else:
                self.mR = True
        if k in K:
            return
        p = int(np.searchsorted(K, k))
        zk = self.z[K]
        val = np.interp(self.z[k], zk, u)
        self.K = np.insert(K, p, k)
        self.u = np.insert(u, p, val)

    def remove(self, p, kind):
        k = self.K[p]
        if self.mode is not None and k == self.mode:
            if kind == "L":
                self.mL = False
            else:
                self.mR = False
            if self.mL or self.mR or k in (0, self.last):
                return
        self.K = np.delete(self.K, p)
        self.u = np.delete(self.u, p)


def _reduce(p, g, diag, off):
    """Collapse coordinates ``p`` and ``p+1`` (shared plateau value)."""
    if p is None:
        return g, diag, off
    g2 = np.delete(g, p + 1)
    g2[p] = g[p] + g[p + 1]
    d2 = np.delete(diag, p + 1)
    d2[p] = diag[p] + diag[p + 1] + 2.0 * off[p]
    o2 = np.delete(off, p)
    return g2, d2, o2


def _expand(p, v):
    if p is None:
        return v
    return np.insert(v, p + 1, v[p])


def _solve_tridiag(diag, off, g):
    n = diag.size
    if n == 1:
        return g / diag
    ab = np.zeros((2, n))
    ab[0, 1:] = off
    ab[1] = diag
    try:
        return solveh_banded(ab, g, check_finite=False)
    except (LinAlgError, ValueError):
        H = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        return np.linalg.lstsq(H, g, rcond=None)[0]


def maximize(objective, z, mode=None, *, max_iter=500, damping=0.5, min_step=1e-12,
             insert_tol=1e-12, newton_tol=1e-24, check_ascent=True, slope_tol=None):
    """Maximise a smooth concave objective over the (mode-)concave cone.

    ``objective`` provides ``initial()`` (starting knot values at the two
    grid ends, feasible for the cone), ``prepare(K)``, ``value(u)``,
    ``newton(u) -> (grad, diag, off)`` with the tridiagonal Hessian of
    the *negated* objective, and ``directional(K, u) -> (DR, DL)``: the
    derivatives along every right / left hinge on the grid.
    """
    N = z.size
    st = _State(z, mode, [0, N - 1], objective.initial())
    objective.prepare(st.K)
    F = objective.value(st.u)
    history = [F]
    converged = False
    violation = np.inf
    lam2 = np.inf
    blocked = set()
    polished = set()
    polish = slope_tol is not None and hasattr(objective, "local_slopes")
    it = 0
    while it < max_iter:
        it += 1
        g, diag, off = objective.newton(st.u)
        p = st.plateau()
        gv, dv, ov = _reduce(p, g, diag, off)
        dvec = _solve_tridiag(dv, ov, gv)
        lam2 = float(gv @ dvec)
        scale = max(1.0, abs(F))
        if lam2 <= newton_tol * scale:
            DR, DL = objective.directional(st.K, st.u)
            cand_idx, cand_kind, cand_val = _candidates(st, DR, DL, blocked)
            if cand_val.size == 0:
                violation = 0.0
                converged = True
                break
            j = int(np.argmax(cand_val))
            violation = max(float(cand_val[j]), 0.0)
            if cand_val[j] <= insert_tol:
                k = _steep_neighbour(objective, st, cand_idx, cand_kind, slope_tol, polished) if polish else None
                if k is None:
                    converged = True
                    break
                j = k
                polished.add((int(cand_idx[j]), cand_kind[j]))
            st.insert(int(cand_idx[j]), cand_kind[j])
            objective.prepare(st.K)
            continue

        d = _expand(p, dvec)
        gens = st.generators()
        tmax = 1.0
        blocking = []
        if gens:
            th = st.coefficients(st.u)
            dth = st.coefficients(d)
            neg = dth < 0
            if np.any(neg):
                ratios = np.full(th.size, np.inf)
                ratios[neg] = np.maximum(th[neg], 0.0) / -dth[neg]
                tmax = min(1.0, float(ratios.min()))
                if tmax < 1.0:
                    blocking = [gens[i] for i in np.flatnonzero(ratios <= tmax * (1 + 1e-12))]
        if tmax <= 0.0:
            # a generator sitting at zero wants to go negative: drop it
            for pos, kind in sorted(blocking, key=lambda x: -x[0]):
                blocked.add((int(st.K[pos]), kind))
                st.remove(pos, kind)
            objective.prepare(st.K)
            F = objective.value(st.u)
            continue

        t = tmax
        accepted = False
        if lam2 <= 1e-12 * scale:
            # predicted gain is below the resolution of F: trust the local
            # quadratic model and only guard against a genuine decrease
            u_new = st.u + t * d
            F_new = objective.value(u_new)
            accepted = F_new >= F - 1e-13 * scale
        else:
            while t >= min_step:
                u_new = st.u + t * d
                F_new = objective.value(u_new)
                if F_new >= F + 1e-4 * t * lam2:
                    accepted = True
                    break
                t *= damping
        if not accepted:
            DR, DL = objective.directional(st.K, st.u)
            _, _, cand_val = _candidates(st, DR, DL, set())
            violation = max(float(cand_val.max()), 0.0) if cand_val.size else 0.0
            converged = lam2 <= 1e-12 * scale and violation <= insert_tol
            break
        if check_ascent:
            assert F_new >= F - 1e-12 * scale, "ascent violated"
        st.u = u_new
        F = F_new
        history.append(F)
        blocked.clear()
        if t == tmax and blocking:
            for pos, kind in sorted(blocking, key=lambda x: -x[0]):
                st.remove(pos, kind)
            objective.prepare(st.K)
            F = objective.value(st.u)

    return EngineResult(st.K, st.u, st.mL, st.mR, F, history, it, converged, violation, lam2)


def _steep_neighbour(objective, st, cand_idx, cand_kind, slope_tol, done):
    """Position in the candidate list of the steepest neighbour, or None."""
    SR, SL = objective.local_slopes(st.K, st.u, *st.anchors())
    slopes = np.where(cand_kind == "R", SR[cand_idx], SL[cand_idx])
    for i, (k, kind) in enumerate(zip(cand_idx, cand_kind)):
        if (int(k), kind) in done:
            slopes[i] = np.nan
    if np.all(np.isnan(slopes)):
        return None
    i = int(np.nanargmax(slopes))
    return i if slopes[i] > slope_tol else None


def _candidates(st, DR, DL, blocked):
    """Inactive generators with their directional derivatives, by grid index."""
    N = st.z.size
    mi = st.mode
    inK = np.zeros(N, dtype=bool)
    inK[st.K] = True
    idx, kinds, vals = [], [], []
    if mi is None:
        r = np.arange(1, N - 1)
        r = r[~inK[r]]
        idx.append(r)
        kinds.append(np.full(r.size, "R"))
        vals.append(DR[r])
    else:
        if mi >= 1:
            lft = np.arange(1, mi + 1)
            act = inK[lft].copy()
            if lft.size and lft[-1] == mi:
                act[-1] = st.mL
            lft = lft[~act]
            idx.append(lft)
            kinds.append(np.full(lft.size, "L"))
            vals.append(DL[lft])
        if mi <= N - 2:
            rgt = np.arange(mi, N - 1)
            act = inK[rgt].copy()
            if rgt.size and rgt[0] == mi:
                act[0] = st.mR
            rgt = rgt[~act]
            idx.append(rgt)
            kinds.append(np.full(rgt.size, "R"))
            vals.append(DR[rgt])
    if not idx:
        return np.zeros(0, dtype=int), np.zeros(0, dtype="<U1"), np.zeros(0)
    idx = np.concatenate(idx)
    kinds = np.concatenate(kinds)
    vals = np.concatenate(vals)
    if blocked:
        keep = np.array([(int(i), k) not in blocked for i, k in zip(idx, kinds)], dtype=bool)
        idx, kinds, vals = idx[keep], kinds[keep], vals[keep]
    order = np.argsort(idx, kind="stable")
    return idx[order], kinds[order], vals[order]
