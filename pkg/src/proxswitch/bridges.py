"""Confounding-bridge estimation by kernel maximum-moment-restriction risks.

Both bridges are finite basis expansions. The outcome bridge
``h(w, a, x) = theta' phi(w, a, x)`` makes the risk quadratic, so it is
solved in closed form. The treatment bridge is fitted separately for each
arm, either linearly or through ``q = 1 + exp(eta' psi(z, x))`` with
gradient descent.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist

from .data import Dataset
from .rng import make_rng

log = logging.getLogger(__name__)

H_BASIS_LINEAR = ("1", "w", "x1", "x2", "t", "w*t", "x1*t", "x2*t")
H_BASIS_QUADRATIC = H_BASIS_LINEAR + (
    "x1^2", "x2^2", "x1*x2", "x1^2*t", "x2^2*t", "x1*x2*t", "w*a*x1", "w*a*x2",
)
Q_BASIS = ("1", "z", "x1", "x2")
H_BASES = {"linear": H_BASIS_LINEAR, "quadratic": H_BASIS_QUADRATIC}

KINDS = ("outcome_h", "treatment_q")
LINKS = ("linear", "one_plus_exp")
STATISTICS = ("U", "V")
DEFAULT_LAMBDAS = (1e-7, 1e-6, 1e-5, 1e-4)

LAMBDA_CAP = 1e3
MAX_LINEAR_PREDICTOR = 30.0


class BridgeFitError(RuntimeError):
    pass


class SingularSystemError(BridgeFitError):
    pass


class ConvergenceError(BridgeFitError):
    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm


# ---------------------------------------------------------------- basis

def _factor(name: str, v, a, x):
    if name == "1":
        return 1.0
    if name in ("w", "z"):
        return v
    if name == "x1":
        return x[..., 0]
    if name == "x2":
        return x[..., 1]
    if name == "t":
        return (1 + a) / 2
    if name == "a":
        return a
    raise ValueError(f"unknown basis factor {name!r}")


def design(basis, v, a, x) -> np.ndarray:
    """Evaluate basis descriptors such as ``"w*t"`` or ``"x1^2"``; features on the last axis.

    ``v`` is the proxy argument of the bridge (w for h, z for q) and ``t`` is (1+a)/2.
    """
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (2,):
        raise ValueError("covariates must have a trailing axis of length 2")
    shape = np.broadcast_shapes(v.shape, a.shape, x.shape[:-1])
    cols = []
    for desc in basis:
        col = np.ones(shape)
        for factor in desc.split("*"):
            name, _, power = factor.partition("^")
            col = col * _factor(name.strip(), v, a, x) ** (int(power) if power else 1)
        cols.append(np.broadcast_to(col, shape))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------- bridge functions

@dataclass(frozen=True, eq=False)
class BridgeFn:
    """A fitted bridge: basis descriptors, coefficients and link."""

    kind: str
    link: str
    basis: tuple
    coef: np.ndarray
    arm: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        coef = np.array(self.coef, dtype=float).reshape(-1)
        if coef.size != len(self.basis):
            raise ValueError("coefficient length does not match basis length")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "basis", tuple(self.basis))
        if self.kind == "treatment_q" and self.arm not in (-1, 1):
            raise ValueError("treatment bridges need arm -1 or 1")

    def linear_predictor(self, v, a, x):
        return design(self.basis, v, a, x) @ self.coef

    def __call__(self, v, a, x):
        if self.kind == "treatment_q":
            a = self.arm
        lin = self.linear_predictor(v, a, x)
        if self.link == "one_plus_exp":
            return 1.0 + np.exp(lin)
        return lin

    def to_dict(self) -> dict:
        return {"kind": self.kind, "link": self.link, "basis": list(self.basis),
                "coef": self.coef.tolist(), "arm": self.arm, "meta": _jsonable(self.meta)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def bridge_from_dict(d: dict) -> BridgeFn:
    return BridgeFn(d["kind"], d["link"], tuple(d["basis"]), np.asarray(d["coef"]),
                    d.get("arm"), d.get("meta", {}))


def save_bridge(bridge: BridgeFn, path) -> None:
    Path(path).write_text(json.dumps(bridge.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_bridge(path) -> BridgeFn:
    return bridge_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True, eq=False)
class TreatmentBridge:
    """q(z, a, x) assembled from the two per-arm fits."""

    pos: BridgeFn
    neg: BridgeFn

    def __call__(self, z, a, x):
        a = np.asarray(a)
        return np.where(a == 1, self.pos(z, 1, x), self.neg(z, -1, x))

    def to_dict(self) -> dict:
        return {"pos": self.pos.to_dict(), "neg": self.neg.to_dict()}


def evaluate_bridge(bridge, v, a, x) -> np.ndarray:
    """Evaluate any bridge callable after checking input arity."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (2,):
        raise ValueError("covariates must have a trailing axis of length 2")
    try:
        np.broadcast_shapes(np.shape(v), np.shape(a), x.shape[:-1])
    except ValueError:
        raise ValueError("bridge inputs have incompatible shapes") from None
    return np.asarray(bridge(v, a, x))


def oracle_bridges(config):
    """The design's true (h, q) as picklable callables."""
    from . import dgp

    return partial(dgp.true_h, config), partial(dgp.true_q, config)


# ---------------------------------------------------------------- moment-restriction problems

@dataclass(frozen=True, eq=False)
class MmrProblem:
    """Kernel moment-restriction risk for one bridge.

    The instrument kernel is Gaussian, exp(-|s - s'|^2 / (2 l^2)), on inputs
    divided coordinate-wise by ``scale``: (z, a, x1, x2) for h and (w, x1, x2)
    for q.
    """

    kind: str
    lengthscale: float
    scale: np.ndarray
    penalty: float = 0.0
    statistic: str = "U"
    arm: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        if self.penalty < 0:
            raise ValueError("penalty must be nonnegative")
        if self.statistic not in STATISTICS:
            raise ValueError(f"statistic must be one of {STATISTICS}")
        if self.kind == "treatment_q" and self.arm not in (-1, 1):
            raise ValueError("treatment problems need arm -1 or 1")
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))

    def with_penalty(self, penalty: float) -> "MmrProblem":
        return MmrProblem(self.kind, self.lengthscale, self.scale, penalty, self.statistic, self.arm)


def _raw_kernel_inputs(kind: str, ds: Dataset) -> np.ndarray:
    if kind == "outcome_h":
        return np.column_stack([ds.z, ds.a.astype(float), ds.x])
    return np.column_stack([ds.w, ds.x])


def kernel_inputs(problem: MmrProblem, ds: Dataset) -> np.ndarray:
    return _raw_kernel_inputs(problem.kind, ds) / problem.scale


def median_heuristic(points: np.ndarray) -> float:
    if points.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    med = float(np.median(pdist(points)))
    if not med > 0:
        raise ValueError("kernel inputs are all identical")
    return med


def make_problem(ds: Dataset, kind: str, arm: int | None = None, penalty: float = 0.0,
                 statistic: str = "U", lengthscale: float | None = None) -> MmrProblem:
    """Moment problem whose input scaling and median-heuristic lengthscale come from ``ds``."""
    raw = _raw_kernel_inputs(kind, ds)
    scale = raw.std(axis=0)
    scale[~(scale > 0)] = 1.0
    if lengthscale is None:
        lengthscale = median_heuristic(raw / scale)
    return MmrProblem(kind, lengthscale, scale, penalty, statistic, arm)


def gram(problem: MmrProblem, ds: Dataset, other: Dataset | None = None) -> np.ndarray:
    s = kernel_inputs(problem, ds)
    t = s if other is None else kernel_inputs(problem, other)
    sq = (s * s).sum(1)[:, None] + (t * t).sum(1)[None, :] - 2.0 * s @ t.T
    np.maximum(sq, 0.0, out=sq)
    k = np.exp(-sq / (2.0 * problem.lengthscale**2))
    if other is None:
        np.fill_diagonal(k, 1.0)
    return k


def _norm(n: int, statistic: str) -> float:
    if statistic == "U":
        if n < 2:
            raise ValueError("the U-statistic risk needs n >= 2")
        return float(n * (n - 1))
    return float(n * n)


def risk_from_residuals(r: np.ndarray, k: np.ndarray, statistic: str = "U") -> float:
    """(1/n(n-1)) sum_{i != j} r_i r_j k_ij, or (1/n^2) sum_{i,j} for the V-statistic."""
    r = np.asarray(r, dtype=float)
    total = float(r @ (k @ r))
    if statistic == "U":
        total -= float((r * r) @ np.diag(k))
    return total / _norm(r.size, statistic)


def residuals(problem: MmrProblem, bridge, ds: Dataset) -> np.ndarray:
    if problem.kind == "outcome_h":
        return ds.y - np.asarray(bridge(ds.w, ds.a, ds.x))
    ind = (ds.a == problem.arm).astype(float)
    return 1.0 - ind * np.asarray(bridge(ds.z, np.full(ds.n, problem.arm), ds.x))


def empirical_risk(problem: MmrProblem, bridge, ds: Dataset, k: np.ndarray | None = None) -> float:
    if k is None:
        k = gram(problem, ds)
    return risk_from_residuals(residuals(problem, bridge, ds), k, problem.statistic)


def _quadratic_system(b_mat, target, k, statistic):
    # risk(theta) = (target - B theta)' K0 (target - B theta) / norm
    n = b_mat.shape[0]
    kb = k @ b_mat
    m = b_mat.T @ kb
    v = kb.T @ target
    if statistic == "U":
        d = np.diag(k)
        m = m - (b_mat * d[:, None]).T @ b_mat
        v = v - (b_mat * d[:, None]).T @ target
    nrm = _norm(n, statistic)
    return m / nrm, v / nrm


def _solve_ridge(m, v, penalty):
    """Solve (M + lam I) theta = v, escalating lam by decades until positive definite."""
    p = m.shape[0]
    lam = penalty
    escalations = 0
    scale = max(float(np.abs(np.diag(m)).max()), 1e-300)
    while True:
        try:
            c = linalg.cho_factor(m + lam * np.eye(p), lower=True, check_finite=True)
            # reject numerically indefinite systems
            if np.min(np.diag(c[0])) ** 2 <= 1e-13 * scale:
                raise linalg.LinAlgError("near singular")
            return linalg.cho_solve(c, v), lam, escalations
        except linalg.LinAlgError:
            lam = 1e-10 if lam <= 0 else lam * 10.0
            escalations += 1
            if lam > LAMBDA_CAP:
                raise SingularSystemError(
                    f"normal equations not positive definite up to lambda={LAMBDA_CAP:g}") from None


def _linear_fit(kind, ds, basis, problem, k, arm=None):
    if k is None:
        k = gram(problem, ds)
    if kind == "outcome_h":
        b_mat = design(basis, ds.w, ds.a, ds.x)
        target = ds.y
    else:
        ind = (ds.a == arm).astype(float)
        b_mat = ind[:, None] * design(basis, ds.z, np.full(ds.n, arm), ds.x)
        target = np.ones(ds.n)
    m, v = _quadratic_system(b_mat, target, k, problem.statistic)
    theta, lam, esc = _solve_ridge(m, v, problem.penalty)
    if esc:
        log.warning("%s fit: penalty escalated %d time(s) to %g", kind, esc, lam)
    fo = (m + lam * np.eye(len(theta))) @ theta - v
    meta = {"penalty": problem.penalty, "penalty_used": lam, "escalations": esc,
            "lengthscale": problem.lengthscale, "statistic": problem.statistic,
            "first_order_residual": float(np.linalg.norm(fo))}
    return theta, meta, k


def fit_h(ds: Dataset, basis=H_BASIS_LINEAR, problem: MmrProblem | None = None,
          k: np.ndarray | None = None) -> BridgeFn:
    """Minimise R(h) + lam |theta|^2 over h = theta' phi(w, a, x) in closed form."""
    if problem is None:
        problem = make_problem(ds, "outcome_h")
    if problem.kind != "outcome_h":
        raise ValueError("fit_h needs an outcome_h problem")
    theta, meta, k = _linear_fit("outcome_h", ds, basis, problem, k)
    bridge = BridgeFn("outcome_h", "linear", tuple(basis), theta)
    meta["risk"] = empirical_risk(problem, bridge, ds, k)
    return BridgeFn("outcome_h", "linear", tuple(basis), theta, meta=meta)


@dataclass
class GDOptions:
    """Stopping and line-search settings for the exponential-link q fit."""

    max_iter: int = 200
    tol: float = 1e-6
    armijo: float = 1e-4
    backtrack: float = 0.5


class _ExpLinkRisk:
    """Penalised risk of q = 1 + exp(eta' psi) with gradient and Hessian.

    Off-arm rows have residual 1 whatever eta is, so only the on-arm block of
    the Gram matrix is touched per evaluation.
    """

    def __init__(self, psi, ind, k, statistic, lam):
        on = ind > 0
        off = ~on
        k11 = k[np.ix_(on, on)].copy()
        k10 = k[np.ix_(on, off)]
        k00 = k[np.ix_(off, off)]
        self.psi = psi[on]
        self.nrm = _norm(ind.size, statistic)
        self.v = k10.sum(axis=1)
        self.const = float(k00.sum())
        if statistic == "U":
            np.fill_diagonal(k11, 0.0)
            self.const -= float(np.trace(k00))
        self.k11 = k11
        self.lam = lam

    def value_grad(self, eta, hessian=False):
        lin = np.clip(self.psi @ eta, -700.0, 700.0)
        e = np.exp(lin)
        ke = self.k11 @ e
        val = (float(e @ ke) - 2.0 * float(e @ self.v) + self.const) / self.nrm \
            + self.lam * float(eta @ eta)
        s = ke - self.v
        grad = 2.0 / self.nrm * (self.psi.T @ (e * s)) + 2.0 * self.lam * eta
        if not hessian:
            return val, grad
        ep = e[:, None] * self.psi
        hess = 2.0 / self.nrm * (ep.T @ (self.k11 @ ep) + (self.psi * (e * s)[:, None]).T @ self.psi)
        hess += 2.0 * self.lam * np.eye(eta.size)
        return val, grad, hess


def _exp_link_objective(eta, psi, ind, k0, nrm, lam):
    lin = np.clip(psi @ eta, -700.0, 700.0)
    e = np.exp(lin)
    r = 1.0 - ind * (1.0 + e)
    kr = k0 @ r
    val = float(r @ kr) / nrm + lam * float(eta @ eta)
    grad = -2.0 / nrm * (psi.T @ (ind * e * kr)) + 2.0 * lam * eta
    return val, grad


def exp_link_risk_and_grad(eta, ds: Dataset, basis, problem: MmrProblem, k: np.ndarray | None = None):
    """Penalised risk of q = 1 + exp(eta' psi) for ``problem.arm`` and its analytic gradient.

    This is the direct O(n^2) formula, kept as a reference for the fitter.
    """
    if k is None:
        k = gram(problem, ds)
    k0 = k.copy()
    if problem.statistic == "U":
        np.fill_diagonal(k0, 0.0)
    psi = design(basis, ds.z, np.full(ds.n, problem.arm), ds.x)
    ind = (ds.a == problem.arm).astype(float)
    return _exp_link_objective(np.asarray(eta, dtype=float), psi, ind, k0,
                               _norm(ds.n, problem.statistic), problem.penalty)


class _Diverged(Exception):
    pass


def _newton(obj: _ExpLinkRisk, x0, opts: GDOptions, guard):
    """Damped Newton with Armijo backtracking.

    The Hessian's eigenvalues are floored in absolute value, so every step is
    a descent direction even where the U-statistic risk is not convex.
    """
    x = np.array(x0, dtype=float)
    for it in range(opts.max_iter + 1):
        f, g, hess = obj.value_grad(x, hessian=True)
        if float(np.abs(g).max()) < opts.tol:
            return x, f, g, it, True
        if it == opts.max_iter:
            break
        vals, vecs = np.linalg.eigh(hess)
        floor = max(1e-8 * float(np.abs(vals).max()), 1e-12)
        d = -vecs @ ((vecs.T @ g) / np.maximum(np.abs(vals), floor))
        slope = float(g @ d)
        step = 1.0
        while True:
            x_new = x + step * d
            if not guard(x_new):
                f_new, _ = obj.value_grad(x_new)
                if np.isfinite(f_new) and f_new <= f + opts.armijo * step * slope:
                    break
            step *= opts.backtrack
            if step < 1e-20:
                return x, f, g, it, False
        x = x_new
        if guard(x, strict=True):
            raise _Diverged
    return x, f, g, opts.max_iter, False


def fit_q(ds: Dataset, basis=Q_BASIS, problem: MmrProblem | None = None, arm: int = 1,
          link: str = "one_plus_exp", k: np.ndarray | None = None,
          gd: GDOptions | None = None) -> BridgeFn:
    """Fit the treatment bridge for one arm by minimising R(q, arm) + lam |coef|^2.

    With the exponential link the U-statistic risk can decrease without bound
    along directions that blow up a few fitted weights. An iterate whose
    linear predictor exceeds ``MAX_LINEAR_PREDICTOR`` in absolute value is
    treated as divergence and the penalty is raised by a decade, as in
    ``fit_h``.
    """
    if arm not in (-1, 1):
        raise ValueError("arm must be -1 or 1")
    if problem is None:
        problem = make_problem(ds, "treatment_q", arm=arm)
    if problem.kind != "treatment_q" or problem.arm != arm:
        raise ValueError("fit_q needs a treatment_q problem for the same arm")
    if link == "linear":
        theta, meta, k = _linear_fit("treatment_q", ds, basis, problem, k, arm)
        bridge = BridgeFn("treatment_q", "linear", tuple(basis), theta, arm)
        meta["risk"] = empirical_risk(problem, bridge, ds, k)
        return BridgeFn("treatment_q", "linear", tuple(basis), theta, arm, meta)
    if link != "one_plus_exp":
        raise ValueError(f"link must be one of {LINKS}")
    gd = gd or GDOptions()
    if k is None:
        k = gram(problem, ds)
    psi = design(basis, ds.z, np.full(ds.n, arm), ds.x)
    ind = (ds.a == arm).astype(float)
    if not ind.any():
        raise BridgeFitError(f"no rows with treatment {arm}")
    psi_on = psi[ind > 0]

    def guard(eta, strict=False):
        return float(np.abs(psi_on @ eta).max()) > MAX_LINEAR_PREDICTOR * (1.0 if strict else 2.0)

    obj = _ExpLinkRisk(psi, ind, k, problem.statistic, problem.penalty)
    lam = problem.penalty
    escalations = 0
    while True:
        obj.lam = lam
        try:
            eta, f, g, iters, ok = _newton(obj, np.zeros(len(basis)), gd, guard)
            break
        except _Diverged:
            lam = 1e-10 if lam <= 0 else lam * 10.0
            escalations += 1
            if lam > LAMBDA_CAP:
                raise BridgeFitError(f"q fit (arm {arm}) diverges for every penalty up to {LAMBDA_CAP:g}")
    if escalations:
        log.warning("q fit (arm %d): penalty escalated %d time(s) to %g", arm, escalations, lam)
    gnorm = float(np.abs(g).max())
    if not ok:
        raise ConvergenceError(
            f"q fit (arm {arm}, lambda {lam:g}) stopped after {iters} iterations "
            f"with gradient norm {gnorm:.3g}", gnorm)
    meta = {"penalty": problem.penalty, "penalty_used": lam, "escalations": escalations,
            "lengthscale": problem.lengthscale, "statistic": problem.statistic,
            "iterations": iters, "grad_norm": gnorm, "objective": f}
    bridge = BridgeFn("treatment_q", "one_plus_exp", tuple(basis), eta, arm)
    meta["risk"] = empirical_risk(problem, bridge, ds, k)
    return BridgeFn("treatment_q", "one_plus_exp", tuple(basis), eta, arm, meta)


# ---------------------------------------------------------------- penalty selection

def _holdout_split(n, fraction, seed):
    perm = make_rng(seed, "holdout").permutation(n)
    n_hold = min(max(2, int(round(fraction * n))), n - 2)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def _select_penalty(ds, kind, fit_one, lambdas, seed, holdout_fraction, statistic, arm=None):
    train_idx, hold_idx = _holdout_split(ds.n, holdout_fraction, seed)
    train, hold = ds.take(train_idx), ds.take(hold_idx)
    prob = make_problem(train, kind, arm=arm, statistic=statistic)
    k_train = gram(prob, train)
    k_hold = gram(prob, hold)
    table = []
    for lam in lambdas:
        try:
            b = fit_one(train, prob.with_penalty(lam), k_train)
        except BridgeFitError as exc:
            log.info("penalty %g skipped: %s", lam, exc)
            table.append((lam, float("nan")))
            continue
        table.append((lam, empirical_risk(prob, b, hold, k_hold)))
    risks = np.array([r for _, r in table])
    if np.all(np.isnan(risks)):
        raise BridgeFitError(f"{kind} fit failed for every penalty")
    best = float(lambdas[int(np.nanargmin(risks))])
    return best, table


def fit_h_cv(ds: Dataset, basis=H_BASIS_LINEAR, lambdas=DEFAULT_LAMBDAS,
             seed: int = 0, holdout_fraction: float = 0.2, statistic: str = "U") -> BridgeFn:
    """Pick the penalty by held-out risk on a seeded split, then refit on all rows."""
    def fit_one(d, prob, k):
        return fit_h(d, basis, prob, k)

    best, table = _select_penalty(ds, "outcome_h", fit_one, list(lambdas), seed,
                                  holdout_fraction, statistic)
    prob = make_problem(ds, "outcome_h", penalty=best, statistic=statistic)
    b = fit_h(ds, basis, prob)
    return BridgeFn(b.kind, b.link, b.basis, b.coef, meta={**b.meta, "cv": table})


def fit_q_cv(ds: Dataset, arm: int, basis=Q_BASIS, lambdas=DEFAULT_LAMBDAS,
             seed: int = 0, holdout_fraction: float = 0.2, statistic: str = "U",
             link: str = "one_plus_exp") -> BridgeFn:
    def fit_one(d, prob, k):
        return fit_q(d, basis, prob, arm, link, k)

    best, table = _select_penalty(ds, "treatment_q", fit_one, list(lambdas), seed,
                                  holdout_fraction, statistic, arm=arm)
    prob = make_problem(ds, "treatment_q", arm=arm, penalty=best, statistic=statistic)
    b = fit_q(ds, basis, prob, arm, link)
    return BridgeFn(b.kind, b.link, b.basis, b.coef, arm, {**b.meta, "cv": table})


def refit_with_penalty(ds: Dataset, bridge: BridgeFn, statistic: str = "U") -> BridgeFn:
    """Refit ``bridge``'s specification on new rows, reusing its selected penalty."""
    lam = float(bridge.meta.get("penalty_used", bridge.meta.get("penalty", 0.0)))
    if bridge.kind == "outcome_h":
        return fit_h(ds, bridge.basis, make_problem(ds, "outcome_h", penalty=lam, statistic=statistic))
    prob = make_problem(ds, "treatment_q", arm=bridge.arm, penalty=lam, statistic=statistic)
    return fit_q(ds, bridge.basis, prob, bridge.arm, bridge.link)
