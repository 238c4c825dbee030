"""Brute-force reference solver for very small samples.

Every candidate knot structure on the (mode-augmented) grid is solved
with plain Newton in the free knot values; infeasible or unbounded
candidates are discarded and the best remaining one is returned.  The
result is cross-checked with the optimality certificate, so a wrong
answer is reported rather than returned.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .augment import augment
from .characterization import verify_constrained, verify_unconstrained
from .errors import Inconsistent, TooLarge
from .geometry import PwlConcave, SortedSample, exp_integral, j00, j10, j11, j20
from .mle import Fit

MAX_GRID = 8
GRAD_TOL = 1e-12
CERT_TOL = 1e-6


@dataclass(frozen=True)
class OracleResult:
    best: Fit
    subsets_tried: int
    feasible_count: int


def _objective_pieces(z, w, K, groups):
    """Linear term and a map from reduced variables to knot values.

    ``groups`` assigns each knot position a reduced variable index.
    """
    zk = z[K]
    h = np.diff(zk)
    seg = np.clip(np.searchsorted(zk, z, side="right") - 1, 0, K.size - 2)
    lam = (z - zk[seg]) / h[seg]
    c = np.zeros(K.size)
    np.add.at(c, seg, w * (1 - lam))
    np.add.at(c, seg + 1, w * lam)
    E = np.zeros((K.size, groups.max() + 1))
    E[np.arange(K.size), groups] = 1.0
    return h, c, E


def _newton(z, w, K, groups, max_iter=200):
    h, c, E = _objective_pieces(z, w, K, groups)
    if np.any(E.T @ c <= 0):
        # a variable carrying no data mass runs off to -inf
        return None

    def value(u):
        return c @ u - np.sum(h * j00(u[:-1], u[1:]))

    v = np.full(E.shape[1], -np.log(z[-1] - z[0]))
    u = E @ v
    F = value(u)
    for _ in range(max_iter):
        r, s = u[:-1], u[1:]
        g = c.copy()
        g[:-1] -= h * j10(r, s)
        g[1:] -= h * j10(s, r)
        Hm = np.zeros((u.size, u.size))
        i = np.arange(u.size - 1)
        Hm[i, i] += h * j20(r, s)
        Hm[i + 1, i + 1] += h * j20(s, r)
        Hm[i, i + 1] = Hm[i + 1, i] = h * j11(r, s)
        gv = E.T @ g
        if np.max(np.abs(gv)) <= GRAD_TOL:
            return u, F
        d = np.linalg.solve(E.T @ Hm @ E, gv)
        t = 1.0
        scale = max(1.0, abs(F))
        if gv @ d <= 1e-12 * scale:
            # predicted gain below the resolution of F: take the Newton step
            u_new = E @ (v + d)
            F_new = value(u_new)
            if F_new < F - 1e-13 * scale:
                return None
        else:
            while True:
                u_new = E @ (v + t * d)
                F_new = value(u_new)
                if F_new >= F + 1e-4 * t * (gv @ d) or t < 1e-14:
                    break
                t *= 0.5
        v = v + t * d
        u, F = u_new, F_new
        if np.min(u) < -700:
            return None  # unbounded restricted problem
    g = c.copy()
    g[:-1] -= h * j10(u[:-1], u[1:])
    g[1:] -= h * j10(u[1:], u[:-1])
    return (u, F) if np.max(np.abs(E.T @ g)) <= 1e-9 else None


def _feasible(zk, u, mode_pos, mode_x):
    s = np.diff(u) / np.diff(zk)
    if np.any(s[1:] - s[:-1] > 1e-9 * (1 + np.abs(s[1:]) + np.abs(s[:-1]))):
        return False
    if mode_x is None:
        return True
    f = PwlConcave(zk, u, check=False)
    v = f(mode_x)
    return bool(np.all(u <= v + 1e-9 * (1 + abs(v))))


def _structures(N, mode_index):
    """Yield ``(K, groups)`` for every candidate knot structure."""
    interior = range(1, N - 1)
    for r in range(N - 1):
        for S in itertools.combinations(interior, r):
            K = np.array((0, *S, N - 1))
            base = np.arange(K.size)
            if mode_index is None:
                yield K, base
                continue
            pos = np.flatnonzero(K == mode_index)
            if pos.size:
                p = int(pos[0])
                yield K, base
                if p > 0:  # segment left of m flat
                    g = base.copy()
                    g[p:] -= 1
                    yield K, g
                if p < K.size - 1:  # segment right of m flat
                    g = base.copy()
                    g[p + 1 :] -= 1
                    yield K, g
            else:
                p = int(np.searchsorted(K, mode_index)) - 1
                g = base.copy()
                g[p + 1 :] -= 1
                yield K, g


def fit_exact_small(sample: SortedSample, m: float | None = None) -> OracleResult:
    """Exact MLE (constrained at ``m`` when given) by exhaustive enumeration.

    Raises
    ------
    TooLarge
        When the grid has more than eight points.
    Inconsistent
        When the best candidate fails the optimality certificate at 1e-6.
    """
    if m is None:
        z, w, mode_index = sample.points, sample.weights, None
    else:
        aug = augment(sample, m)
        z, w, mode_index = aug.z, aug.weights, aug.mode_index
        m = aug.m
    N = z.size
    if N > MAX_GRID:
        raise TooLarge(f"oracle handles at most {MAX_GRID} grid points, got {N}")

    best = None
    tried = feasible = 0
    for K, groups in _structures(N, mode_index):
        tried += 1
        out = _newton(z, w, K, groups)
        if out is None:
            continue
        u, F = out
        if not _feasible(z[K], u, None, m):
            continue
        feasible += 1
        if best is None or F > best[2]:
            best = (K, u, F)
    if best is None:
        raise Inconsistent("no feasible candidate structure found")

    K, u, F = best
    f = PwlConcave(z[K], u, check=False)
    if m is None:
        rep = verify_unconstrained(f, sample, CERT_TOL)
    else:
        rep = verify_constrained(f, sample, m, CERT_TOL)
    if not rep.passed:
        raise Inconsistent(f"best enumerated candidate fails its certificate: {rep}")
    loglik = float(np.dot(sample.weights, f(sample.points)))
    kinks = K[f.kinks()]
    fit = Fit(
        estimate=f,
        knot_set=np.unique(np.r_[0, kinks, N - 1]),
        loglik=loglik,
        psi=loglik - exp_integral(f),
        iterations=0,
        max_certificate_violation=rep.max_residual,
        constrained=m is not None,
        mode=m,
        report=rep,
    )
    return OracleResult(fit, tried, feasible)
