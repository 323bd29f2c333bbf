"""Preliminary regimes from weighted hinge classification.

The contrast weights may be negative, so each row is relabelled by the sign
of its weight and carries ``|weight|`` as a cost. The resulting objective

    (1/n) sum_i |D_i| max(0, 1 - s_i beta'f_i) + rho |beta|^2

is a weighted linear SVM without a free intercept. It is solved through its
box-constrained dual by an interior-point method, then polished on the free
support vectors. With rho = 0 the problem is a linear program.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .bridges import BridgeFitError, TreatmentBridge, refit_with_penalty
from .data import Dataset
from .regimes import LinearRegime, linear_features, sign
from .rng import make_rng

log = logging.getLogger(__name__)


class PolicyError(ValueError):
    pass


# ---------------------------------------------------------------- weights

def build_weights_z(ds: Dataset, h) -> np.ndarray:
    """h(W, 1, X) - h(W, -1, X) per row."""
    return np.asarray(h(ds.w, np.ones(ds.n), ds.x) - h(ds.w, -np.ones(ds.n), ds.x), dtype=float)


def build_weights_w(ds: Dataset, q_pos, q_neg=None) -> np.ndarray:
    """Y q(Z, 1, X) I(A=1) - Y q(Z, -1, X) I(A=-1) per row.

    ``q_pos`` may instead be a two-arm callable q(z, a, x), with ``q_neg`` omitted.
    """
    if q_neg is None:
        q = q_pos
    else:
        q = TreatmentBridge(q_pos, q_neg)
    qa = np.asarray(q(ds.z, ds.a, ds.x), dtype=float)
    return ds.a * ds.y * qa


def features(ds: Dataset, proxy: str) -> np.ndarray:
    return linear_features(ds.x, ds.z if proxy == "z" else ds.w)


# ---------------------------------------------------------------- hinge solver

@dataclass(frozen=True)
class HingeResult:
    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool


def hinge_objective(beta, f, weights, rho) -> float:
    """(1/n) sum |D| max(0, 1 - s beta'f) + rho |beta|^2 with s = sign(D)."""
    s = sign(weights)
    margins = s * (f @ beta)
    return float(np.mean(np.abs(weights) * np.maximum(0.0, 1.0 - margins)) + rho * beta @ beta)


def _dual_ipm(m, cap, k, max_iter, tol):
    """Primal-dual interior point for  min 1/2 k |M'l|^2 - 1'l  subject to 0 <= l <= cap.

    The Hessian k M M' has rank p, so each Newton system is solved with the
    Woodbury identity in O(n p^2).
    """
    n, p = m.shape
    lam = 0.5 * cap
    gap_lo = 0.5 * cap
    s = np.ones(n)
    t = np.ones(n)
    sqk = np.sqrt(k)
    u = sqk * m
    best = (np.inf, lam)
    for it in range(1, max_iter + 1):
        # cap - lam is carried separately so both stay strictly positive in floating point
        hl = k * (m @ (m.T @ lam))
        r_d = hl - 1.0 - s + t
        mu = (lam @ s + gap_lo @ t) / (2 * n)
        res = float(np.abs(r_d).max()) / max(1.0, float(np.abs(hl).max()))
        if max(res, mu) < best[0]:
            best = (max(res, mu), lam)
        if mu < tol and res < 1e-9:
            return lam, it - 1, True
        sigma = 0.1
        dg = s / lam + t / gap_lo
        rhs = -hl + 1.0 + sigma * mu / lam - sigma * mu / gap_lo
        dinv_rhs = rhs / dg
        dinv_u = u / dg[:, None]
        small = np.eye(p) + u.T @ dinv_u
        try:
            dl = dinv_rhs - dinv_u @ np.linalg.solve(small, u.T @ dinv_rhs)
        except np.linalg.LinAlgError:
            break
        ds = (sigma * mu - lam * s - s * dl) / lam
        dt = (sigma * mu - gap_lo * t + t * dl) / gap_lo
        step = 1.0
        for v, dv in ((lam, dl), (gap_lo, -dl), (s, ds), (t, dt)):
            neg = dv < 0
            if neg.any():
                step = min(step, 0.99 * float(np.min(-v[neg] / dv[neg])))
        if step < 1e-10:
            break
        lam = lam + step * dl
        gap_lo = gap_lo - step * dl
        s = s + step * ds
        t = t + step * dt
    # stalled: accept the best iterate if it is accurate to working precision
    return best[1], it, best[0] < 1e-6


def _polish(f, y, cap, beta, eps=1e-6):
    """Refine beta by solving the KKT system on the rows whose margin is 1.

    Rows are classified by their margin under the approximate beta; the
    refined point is kept only if it satisfies every KKT condition.
    """
    p = f.shape[1]
    margins = y * (f @ beta)
    free = np.abs(margins - 1.0) <= eps
    bound = (margins < 1.0) & ~free
    if free.sum() > 2 * p:
        return beta
    base = (cap[bound] * y[bound]) @ f[bound]
    if not free.any():
        cand = base
    else:
        ff = f[free]
        # beta = base + ff' c with ff beta = y_F; dual variables are c * y_F
        coef, *_ = np.linalg.lstsq(ff @ ff.T, y[free] - ff @ base, rcond=None)
        a_new = coef * y[free]
        if np.any(a_new < -1e-10 * cap[free]) or np.any(a_new > cap[free] * (1 + 1e-10)):
            return beta
        cand = base + ff.T @ coef
    m_new = y * (f @ cand)
    tol = 1e-9
    if (np.all(m_new[bound] <= 1 + tol) and np.all(m_new[~bound & ~free] >= 1 - tol)
            and np.all(np.abs(m_new[free] - 1) <= tol)):
        return cand
    return beta


def solve_weighted_hinge(f, weights, rho: float, max_iter: int = 200, tol: float = 1e-12) -> HingeResult:
    """Minimise (1/n) sum |D_i| hinge(s_i beta'f_i) + rho |beta|^2, s_i = sign(D_i), sign(0) = +1."""
    f = np.ascontiguousarray(f, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, p = f.shape
    if w.shape != (n,) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(f)):
        raise PolicyError("weights and features must be finite and aligned")
    if rho < 0:
        raise PolicyError("rho must be nonnegative")
    y = sign(w).astype(float)
    c = np.abs(w)
    if n == 0 or not np.any(c > 0):
        beta = np.zeros(p)
        return HingeResult(beta, hinge_objective(beta, f, w, rho), 0, True)
    if rho == 0:
        return _solve_lp(f, y, c, w)
    # dual of rho |beta|^2 + (1/n) sum_i |D_i| hinge_i:  beta = M'l / (2 rho), 0 <= l_i <= |D_i|/n
    # rows with negligible weight are dropped; the dual is rescaled so the largest cap is 1
    active = c > 1e-13 * c.max()
    cap = c[active] / n
    scale = cap.max()
    m = y[active, None] * f[active]
    lam, iters, ok = _dual_ipm(m, cap / scale, scale / (2.0 * rho), max_iter, tol)
    beta = m.T @ lam * scale / (2.0 * rho)
    beta = _polish(f[active], y[active], cap / (2.0 * rho), beta)
    obj = hinge_objective(beta, f, w, rho)
    if not ok:
        # the rho = 0 optimum is within rho |beta_lp|^2 of the rho > 0 optimum
        lp = _solve_lp(f, y, c, w)
        obj_lp = hinge_objective(lp.beta, f, w, rho)
        if obj_lp < obj:
            beta, obj = lp.beta, obj_lp
        ok = rho * float(lp.beta @ lp.beta) <= 1e-9 * max(1.0, obj)
        if not ok:
            log.warning("hinge solver stopped after %d iterations", iters)
    return HingeResult(beta, obj, iters, ok)


def _solve_lp(f, y, c, w):
    n, p = f.shape
    # variables (beta, xi); xi_i >= 1 - y_i f_i'beta, xi >= 0
    cost = np.concatenate([np.zeros(p), c / n])
    a_ub = sparse.hstack([sparse.csr_matrix(-(y[:, None] * f)), -sparse.identity(n)], format="csr")
    bounds = [(None, None)] * p + [(0, None)] * n
    res = linprog(cost, A_ub=a_ub, b_ub=-np.ones(n), bounds=bounds, method="highs")
    if res.status != 0:
        raise PolicyError(f"hinge linear program failed: {res.message}")
    beta = res.x[:p]
    return HingeResult(beta, hinge_objective(beta, f, w, 0.0), int(res.nit), True)


# ---------------------------------------------------------------- cross-validated learning

def fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold label per row: a seeded permutation cut into contiguous blocks."""
    if folds < 2:
        raise PolicyError("folds must be >= 2")
    if n < 2 * folds:
        raise PolicyError(f"{n} rows cannot fill {folds} folds with at least 2 rows each")
    perm = make_rng(seed, "folds").permutation(n)
    ids = np.empty(n, dtype=int)
    for k, block in enumerate(np.array_split(perm, folds)):
        ids[block] = k
    return ids


def _value_z(ds, h, regime):
    d = regime.decide(ds.x, z=ds.z)
    return float(np.mean(h(ds.w, d, ds.x)))


def _value_w(ds, q, regime):
    d = regime.decide(ds.x, w=ds.w)
    return float(np.mean(ds.y * q(ds.z, ds.a, ds.x) * (d == ds.a)))


def _refit(ds, bridge, proxy):
    if proxy == "z":
        if not hasattr(bridge, "meta"):
            return bridge
        return refit_with_penalty(ds, bridge)
    if not isinstance(bridge, TreatmentBridge):
        return bridge
    return TreatmentBridge(refit_with_penalty(ds, bridge.pos), refit_with_penalty(ds, bridge.neg))


def _learn(ds, bridge, proxy, rho_grid, folds, seed, refit_per_fold):
    rho_grid = sorted(float(r) for r in rho_grid)
    if not rho_grid:
        raise PolicyError("rho grid is empty")
    weigh = (lambda d, b: build_weights_z(d, b)) if proxy == "z" else (lambda d, b: build_weights_w(d, b))
    value = _value_z if proxy == "z" else _value_w
    f_all = features(ds, proxy)
    if len(rho_grid) == 1:
        table = [(rho_grid[0], float("nan"))]
        best = rho_grid[0]
    else:
        ids = fold_ids(ds.n, folds, seed)
        scores = np.zeros((len(rho_grid), folds))
        for k in range(folds):
            tr, te = np.flatnonzero(ids != k), np.flatnonzero(ids == k)
            d_tr, d_te = ds.take(tr), ds.take(te)
            b = bridge
            if refit_per_fold:
                try:
                    b = _refit(d_tr, bridge, proxy)
                except BridgeFitError as exc:
                    log.warning("fold %d bridge refit failed (%s); using the full-data bridge", k, exc)
            wts = weigh(d_tr, b)
            for r, rho in enumerate(rho_grid):
                res = solve_weighted_hinge(f_all[tr], wts, rho)
                scores[r, k] = value(d_te, b, LinearRegime(proxy, res.beta, rho))
        means = scores.mean(axis=1)
        # first maximiser in ascending order is the smallest rho among ties
        best = rho_grid[int(np.argmax(means))]
        table = list(zip(rho_grid, means.tolist()))
    res = solve_weighted_hinge(f_all, weigh(ds, bridge), best)
    return LinearRegime(proxy, res.beta, best, tuple(tuple(t) for t in table))


def learn_dz(ds: Dataset, h, rho_grid=(1e-4, 1e-3, 1e-2, 1e-1), folds: int = 5, seed: int = 0,
             refit_per_fold: bool = True) -> LinearRegime:
    """Linear regime over (1, X, Z) with rho chosen by K-fold held-out value of h."""
    return _learn(ds, h, "z", rho_grid, folds, seed, refit_per_fold)


def learn_dw(ds: Dataset, q, rho_grid=(1e-4, 1e-3, 1e-2, 1e-1), folds: int = 5, seed: int = 0,
             refit_per_fold: bool = True) -> LinearRegime:
    """Linear regime over (1, X, W) with rho chosen by K-fold held-out weighted value.

    ``q`` is a two-arm callable q(z, a, x), e.g. a ``TreatmentBridge``.
    """
    return _learn(ds, q, "w", rho_grid, folds, seed, refit_per_fold)
