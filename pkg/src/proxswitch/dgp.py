"""The simulation design: sampling, true bridges, oracle rules and Monte Carlo oracles."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .config import ScenarioConfig
from .data import Dataset, TestSet
from .regimes import sign
from .rng import make_rng

TEST_LAWS = ("paper", "training")


def propensity(config: ScenarioConfig, x) -> np.ndarray:
    """P(A = 1 | X = x)."""
    x = np.asarray(x, dtype=float)
    return 1.0 / (1.0 + np.exp(x @ config.propensity_coef))


def _proxy_means(config: ScenarioConfig, x, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # t is (1+A)/2 under the training law, P(A=1|X) under the paper's test law
    x = np.asarray(x, dtype=float)
    base = config.zwu_intercepts + x[..., None, :] @ config.zwu_slopes.T
    base = base[..., 0, :]
    t = np.asarray(t, dtype=float)
    mz = base[..., 0] + config.zwu_treat[0] * t
    mw = base[..., 1] + config.zwu_treat[1] * t
    mu = base[..., 2] + config.zwu_treat[2] * t
    return mz, mw, mu


def w_given_u(config: ScenarioConfig, x, u) -> np.ndarray:
    """E(W | U, X) as used in the outcome mean (no treatment shift)."""
    x = np.asarray(x, dtype=float)
    s = config.zwu_cov
    mu_x = config.zwu_slopes[1]
    kappa_x = config.zwu_slopes[2]
    lin_w = config.mu0 + x[..., 0] * mu_x[0] + x[..., 1] * mu_x[1]
    lin_u = config.kappa0 + x[..., 0] * kappa_x[0] + x[..., 1] * kappa_x[1]
    return lin_w + s[1, 2] / s[2, 2] * (np.asarray(u) - lin_u)


def outcome_mean(config: ScenarioConfig, x, a, w, u) -> np.ndarray:
    """E(Y | X, A, Z, W, U)."""
    a = np.asarray(a)
    t = (1 + a) / 2
    coef = config.b_w + config.b_a * t + config.b3(x) * a - config.omega
    return (config.b0 + config.b1(x) * t + config.b2x(x)
            + coef * w_given_u(config, x, u) + config.omega * np.asarray(w))


def true_h(config: ScenarioConfig, w, a, x) -> np.ndarray:
    """Outcome bridge solving E[Y | Z, A, X] = E[h(W, A, X) | Z, A, X] for this design.

    The b3 term enters as b3(X) * A * W, matching the outcome mean; it is
    absent in scenarios 1, 2, 4 and 6.
    """
    a = np.asarray(a)
    t = (1 + a) / 2
    w = np.asarray(w, dtype=float)
    return (config.b0 + config.b1(x) * t + config.b2x(x)
            + (config.b_w + config.b_a * t + config.b3(x) * a) * w)


def true_q(config: ScenarioConfig, z, a, x) -> np.ndarray:
    """Treatment bridge 1 + exp{A t0 + A tz Z + ta (1+A)/2 + A tx'X}; always > 1."""
    a = np.asarray(a)
    x = np.asarray(x, dtype=float)
    lin = (a * config.t0 + a * config.tz * np.asarray(z, dtype=float) + config.ta * (1 + a) / 2
           + a * (config.tx[0] * x[..., 0] + config.tx[1] * x[..., 1]))
    return 1.0 + np.exp(lin)


def _star_core(config: ScenarioConfig, x, proxy_val, which: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = config.zwu_cov
    pa = propensity(config, x)
    mz, mw, mu = _proxy_means(config, x, pa)
    if which == "z":
        e_u = mu + s[0, 2] / s[0, 0] * (np.asarray(proxy_val) - mz)
    else:
        e_u = mu + s[1, 2] / s[1, 1] * (np.asarray(proxy_val) - mw)
    return config.b1(x) + (config.b_a + 2 * config.b3(x)) * w_given_u(config, x, e_u)


def dz_star_score(config: ScenarioConfig, x, z) -> np.ndarray:
    """E[h(W,1,X) - h(W,-1,X) | X, Z] in closed form."""
    return _star_core(config, x, z, "z")


def dw_star_score(config: ScenarioConfig, x, w) -> np.ndarray:
    """E[Y q(Z,1,X) I(A=1) - Y q(Z,-1,X) I(A=-1) | X, W] in closed form."""
    return _star_core(config, x, w, "w")


def oracle_dz_star(config: ScenarioConfig, x, z) -> np.ndarray:
    return sign(dz_star_score(config, x, z))


def oracle_dw_star(config: ScenarioConfig, x, w) -> np.ndarray:
    return sign(dw_star_score(config, x, w))


def _draw_x(config: ScenarioConfig, rng, n):
    return config.covariate_mean + rng.standard_normal((n, 2)) @ config.covariate_chol.T


def sample_training(config: ScenarioConfig, n: int, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, "train", config.scenario_id)
    x = _draw_x(config, rng, n)
    a = np.where(rng.random(n) < propensity(config, x), 1, -1)
    mz, mw, mu = _proxy_means(config, x, (1 + a) / 2)
    e = rng.standard_normal((n, 3)) @ config.zwu_chol.T
    z, w, u = mz + e[:, 0], mw + e[:, 1], mu + e[:, 2]
    y = outcome_mean(config, x, a, w, u) + config.sigma_y * rng.standard_normal(n)
    return Dataset(x, a, z, w, y, u)


def sample_testing(config: ScenarioConfig, m: int, seed: int, law: str = "paper") -> TestSet:
    """Covariates, proxies and both potential outcomes with one shared noise draw per row.

    ``law="paper"`` centres (Z, W, U) | X at P(A=1|X); ``law="training"``
    draws a latent treatment and uses the training conditionals, so the
    test population matches the training population exactly.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if law not in TEST_LAWS:
        raise ValueError(f"law must be one of {TEST_LAWS}")
    rng = make_rng(seed, "test", law, config.scenario_id)
    x = _draw_x(config, rng, m)
    if law == "paper":
        t = propensity(config, x)
    else:
        t = (1 + np.where(rng.random(m) < propensity(config, x), 1, -1)) / 2
    mz, mw, mu = _proxy_means(config, x, t)
    e = rng.standard_normal((m, 3)) @ config.zwu_chol.T
    z, w, u = mz + e[:, 0], mw + e[:, 1], mu + e[:, 2]
    eps = config.sigma_y * rng.standard_normal(m)
    y_pos = outcome_mean(config, x, 1, w, u) + eps
    y_neg = outcome_mean(config, x, -1, w, u) + eps
    return TestSet(x, z, w, u, y_pos, y_neg)


class ValueEstimate(NamedTuple):
    value: float
    se: float


def value_of_decisions(decisions, testset: TestSet) -> ValueEstimate:
    d = np.asarray(decisions)
    if len(testset) == 0:
        raise ValueError("empty test set")
    per_row = np.where(d == 1, testset.y_pos, testset.y_neg)
    se = per_row.std(ddof=1) / np.sqrt(per_row.size) if per_row.size > 1 else 0.0
    return ValueEstimate(float(per_row.mean()), float(se))


def empirical_value(regime, testset: TestSet) -> ValueEstimate:
    """Mean realised potential outcome under the regime, with its MC standard error."""
    if len(testset) == 0:
        raise ValueError("empty test set")
    return value_of_decisions(regime.decide(testset.x, z=testset.z, w=testset.w), testset)


class BranchMeans(NamedTuple):
    h_mean: np.ndarray
    h_se: np.ndarray
    q_mean: np.ndarray
    q_se: np.ndarray
    diff_se: np.ndarray


def mc_branch_means(config: ScenarioConfig, x, regime_z, regime_w, n_mc: int, seed: int,
                    chunk: int | None = None) -> BranchMeans:
    """Monte Carlo E[h(W, d_z(x,Z), x) | X=x] and E[Y q(Z,A,x) I(d_w(x,W)=A) | X=x].

    (A, Z, W, U, Y) are drawn from the exact training-law conditionals given
    X = x. The same underlying draws serve every query point and both
    branches, so branch differences are paired. Either regime may be None,
    in which case that branch is returned as NaN.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rng = make_rng(seed, "mc", config.scenario_id)
    ua = rng.random(n_mc)
    e = rng.standard_normal((n_mc, 3)) @ config.zwu_chol.T
    eps = config.sigma_y * rng.standard_normal(n_mc)
    m = x.shape[0]
    if chunk is None:
        chunk = max(1, int(2_000_000 // n_mc))
    out = np.full((5, m), np.nan)
    for start in range(0, m, chunk):
        xb = x[start:start + chunk][:, None, :]
        a = np.where(ua[None, :] < propensity(config, xb), 1, -1)
        mz, mw, mu = _proxy_means(config, xb, (1 + a) / 2)
        z = mz + e[:, 0]
        w = mw + e[:, 1]
        u = mu + e[:, 2]
        sl = slice(start, start + xb.shape[0])
        hb = qb = None
        if regime_z is not None:
            dz = regime_z.decide(xb, z=z, w=w)
            hb = true_h(config, w, dz, xb)
            out[0, sl] = hb.mean(axis=1)
            out[1, sl] = hb.std(axis=1, ddof=1) / np.sqrt(n_mc) if n_mc > 1 else 0.0
        if regime_w is not None:
            y = outcome_mean(config, xb, a, w, u) + eps
            dw = regime_w.decide(xb, z=z, w=w)
            qb = y * true_q(config, z, a, xb) * (dw == a)
            out[2, sl] = qb.mean(axis=1)
            out[3, sl] = qb.std(axis=1, ddof=1) / np.sqrt(n_mc) if n_mc > 1 else 0.0
        if hb is not None and qb is not None:
            out[4, sl] = (hb - qb).std(axis=1, ddof=1) / np.sqrt(n_mc) if n_mc > 1 else 0.0
    return BranchMeans(*out)


MC_QUANTITIES = ("h", "q")


def mc_conditional(config: ScenarioConfig, x, quantity: str, regime, n_mc: int, seed: int) -> ValueEstimate:
    """One conditional branch expectation at covariate value(s) ``x``.

    ``quantity="h"`` gives E[h(W, d(x,Z), x) | X=x]; ``quantity="q"`` gives
    E[Y q(Z,A,x) I(d(x,W)=A) | X=x]. Returns arrays when ``x`` holds several rows.
    """
    if quantity not in MC_QUANTITIES:
        raise ValueError(f"quantity must be one of {MC_QUANTITIES}")
    single = np.ndim(x) == 1
    if quantity == "h":
        res = mc_branch_means(config, x, regime, None, n_mc, seed)
        mean, se = res.h_mean, res.h_se
    else:
        res = mc_branch_means(config, x, None, regime, n_mc, seed)
        mean, se = res.q_mean, res.q_se
    if single:
        return ValueEstimate(float(mean[0]), float(se[0]))
    return ValueEstimate(mean, se)


def oracle_pi_bar(config: ScenarioConfig, x, regime_z, regime_w, n_mc: int, seed: int) -> np.ndarray:
    """Indicator that the h-branch conditional mean is at least the q-branch one."""
    res = mc_branch_means(config, x, regime_z, regime_w, n_mc, seed)
    pi = (res.h_mean >= res.q_mean).astype(int)
    return int(pi[0]) if np.ndim(x) == 1 else pi


class OraclePi:
    """Switching rule x -> pi_bar(x; d_z, d_w) evaluated by Monte Carlo on demand."""

    def __init__(self, config: ScenarioConfig, regime_z, regime_w, n_mc: int = 100_000, seed: int = 0):
        self.config = config
        self.regime_z = regime_z
        self.regime_w = regime_w
        self.n_mc = n_mc
        self.seed = seed

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        return np.asarray(oracle_pi_bar(self.config, flat, self.regime_z, self.regime_w,
                                        self.n_mc, self.seed)).reshape(x.shape[:-1])

    def to_dict(self) -> dict:
        return {"kind": "oracle_pi_bar", "n_mc": self.n_mc, "seed": self.seed}
