"""Switching between the z- and w-based regimes.

The branch contrast delta(x) is estimated by Nadaraya-Watson regression in
which the query covariate x is paired with every training (Z_i, W_i, A_i, Y_i):

    delta(x) = sum_i c_i(x) K(|x - X_i| / gamma) / sum_i K(|x - X_i| / gamma),
    c_i(x)   = h(W_i, d_z(x, Z_i), x) - Y_i q(Z_i, A_i, x) I{d_w(x, W_i) = A_i}.
"""
from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .regimes import CombinedRegime, ConstantRegime, LinearRegime, OracleRegime

log = logging.getLogger(__name__)

KERNEL_ID = "gaussian"
UNDERFLOW = 1e-300


class BandwidthError(ValueError):
    pass


def scott_bandwidth(x, per_coordinate: bool = False):
    """1.06 sigma n^(-1/5), with sigma the mean per-coordinate SD of X.

    With ``per_coordinate=True`` a vector of per-coordinate bandwidths is
    returned instead, one for each column of X.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise BandwidthError("bandwidth needs at least two covariate rows")
    sd = x.std(axis=0, ddof=1)
    if np.any(~(sd > 0)):
        raise BandwidthError("covariates have zero variance")
    factor = 1.06 * x.shape[0] ** (-0.2)
    if per_coordinate:
        return factor * sd
    return float(factor * sd.mean())


class DeltaEstimate(NamedTuple):
    delta: np.ndarray
    fallback: np.ndarray


def branch_contributions(x_query, ds: Dataset, h, q, regime_z, regime_w) -> np.ndarray:
    """c_i(x) for each query row (axis 0) and training row (axis 1)."""
    xq = np.asarray(x_query, dtype=float)[:, None, :]
    z, w, a, y = ds.z[None, :], ds.w[None, :], ds.a[None, :], ds.y[None, :]
    dz = regime_z.decide(xq, z=z, w=w)
    dw = regime_w.decide(xq, z=z, w=w)
    hb = h(w, dz, xq)
    qb = y * q(z, a, xq) * (dw == a)
    return hb - qb


def kernel_weights(x_query, x_train, gamma) -> np.ndarray:
    """Unnormalised Gaussian weights exp(-|x - X_i|^2 / 2) on the gamma-scaled distance."""
    diff = (np.asarray(x_query, dtype=float)[:, None, :] - np.asarray(x_train)[None, :, :]) / gamma
    return np.exp(-0.5 * np.sum(diff * diff, axis=-1))


def estimate_delta(x, ds: Dataset, h, q, regime_z, regime_w, gamma, chunk: int | None = None) -> DeltaEstimate:
    """Nadaraya-Watson estimate of delta at each query row of ``x``.

    A query whose kernel weights all fall below 1e-300 uses its single nearest
    training row instead; such rows are flagged in ``fallback``.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(~(gamma > 0)):
        raise BandwidthError("bandwidth must be positive")
    if ds.n < 1:
        raise ValueError("delta needs at least one training row")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xq = np.atleast_2d(x)
    m = xq.shape[0]
    if chunk is None:
        chunk = max(1, 500_000 // ds.n)
    delta = np.empty(m)
    fallback = np.zeros(m, dtype=bool)
    for start in range(0, m, chunk):
        xb = xq[start:start + chunk]
        kw = kernel_weights(xb, ds.x, gamma)
        contrib = branch_contributions(xb, ds, h, q, regime_z, regime_w)
        under = np.all(kw < UNDERFLOW, axis=1)
        if under.any():
            d2 = np.sum(((xb[under][:, None, :] - ds.x[None]) / gamma) ** 2, axis=-1)
            kw[under] = 0.0
            kw[np.flatnonzero(under), np.argmin(d2, axis=1)] = 1.0
        sl = slice(start, start + xb.shape[0])
        delta[sl] = np.sum(kw * contrib, axis=1) / np.sum(kw, axis=1)
        fallback[sl] = under
    if fallback.any():
        log.warning("nearest-neighbour fallback used at %d query point(s)", int(fallback.sum()))
    if single:
        return DeltaEstimate(delta[:1], fallback[:1])
    return DeltaEstimate(delta, fallback)


class PiEstimator:
    """pi_hat(x) = I{delta_hat(x) >= 0}, recomputed from the training rows per query."""

    def __init__(self, ds: Dataset, h, q, regime_z, regime_w, gamma):
        gamma = np.asarray(gamma, dtype=float)
        if np.any(~(gamma > 0)):
            raise BandwidthError("bandwidth must be positive")
        self.ds = ds
        self.h = h
        self.q = q
        self.regime_z = regime_z
        self.regime_w = regime_w
        self.gamma = gamma if gamma.ndim else float(gamma)

    def delta(self, x) -> DeltaEstimate:
        return estimate_delta(x, self.ds, self.h, self.q, self.regime_z, self.regime_w, self.gamma)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        pi = (self.delta(flat).delta >= 0).astype(int)
        return pi.reshape(x.shape[:-1])

    def to_dict(self) -> dict:
        g = self.gamma
        return {"kind": "nadaraya_watson", "kernel": KERNEL_ID,
                "bandwidth": g.tolist() if isinstance(g, np.ndarray) else g, "n_train": self.ds.n}


def make_pi_hat(ds: Dataset, h, q, regime_z, regime_w, gamma=None, per_coordinate: bool = False) -> PiEstimator:
    """Switching rule from the training data; gamma defaults to Scott's rule."""
    if gamma is None:
        gamma = scott_bandwidth(ds.x, per_coordinate)
    return PiEstimator(ds, h, q, regime_z, regime_w, gamma)


def combine(regime_z, regime_w, pi) -> CombinedRegime:
    return CombinedRegime(regime_z, regime_w, pi)


# ---------------------------------------------------------------- identified values

class IdentifiedValue(NamedTuple):
    value: float
    se: float


def _mean_se(v) -> IdentifiedValue:
    v = np.asarray(v, dtype=float)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return IdentifiedValue(float(v.mean()), se)


def h_branch(ds: Dataset, h, regime) -> np.ndarray:
    """h(W_i, d(X_i, Z_i), X_i) per row."""
    return np.asarray(h(ds.w, regime.decide(ds.x, z=ds.z, w=ds.w), ds.x), dtype=float)


def q_branch(ds: Dataset, q, regime) -> np.ndarray:
    """Y_i q(Z_i, A_i, X_i) I{d(X_i, W_i) = A_i} per row."""
    d = regime.decide(ds.x, z=ds.z, w=ds.w)
    return ds.y * np.asarray(q(ds.z, ds.a, ds.x), dtype=float) * (d == ds.a)


def _uses(regime) -> str:
    if isinstance(regime, CombinedRegime):
        return "combined"
    if isinstance(regime, (LinearRegime, OracleRegime)):
        return regime.proxy
    if isinstance(regime, ConstantRegime):
        return "z"
    raise TypeError(f"no identification formula for {type(regime).__name__}")


def identified_value(regime, ds: Dataset, h, q, pi_values=None) -> IdentifiedValue:
    """Sample mean of the identifying integrand and its standard error.

    z-regimes and constant regimes use the h-branch, w-regimes the q-branch,
    and combined regimes the pi-selected mixture of the two. ``pi_values``
    may carry precomputed pi(X_i) for a combined regime.
    """
    kind = _uses(regime)
    if kind == "z":
        return _mean_se(h_branch(ds, h, regime))
    if kind == "w":
        return _mean_se(q_branch(ds, q, regime))
    pi = regime.pi(ds.x) if pi_values is None else np.asarray(pi_values)
    hb = h_branch(ds, h, regime.regime_z)
    qb = q_branch(ds, q, regime.regime_w)
    return _mean_se(np.where(pi == 1, hb, qb))


def union_choice(regime_z, regime_w, ds: Dataset, h, q) -> tuple[str, IdentifiedValue, IdentifiedValue]:
    """The better single-proxy regime by identified value; ties go to z."""
    vz = identified_value(regime_z, ds, h, q)
    vw = identified_value(regime_w, ds, h, q)
    return ("z" if vz.value >= vw.value else "w"), vz, vw
