"""Decision rules mapping (x, z, w) to an arm in {-1, +1}.

Every rule exposes ``decide(x, z=None, w=None)`` with numpy broadcasting over
leading dimensions of ``x`` (last axis of length 2) and the proxy arrays.
Scores of exactly zero map to +1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FEATURE_ORDER = ("1", "x1", "x2", "proxy")


def sign(v) -> np.ndarray:
    return np.where(np.asarray(v) >= 0, 1, -1)


def linear_features(x, p) -> np.ndarray:
    """(1, x1, x2, p) stacked on a trailing axis."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], p.shape)
    return np.stack([np.ones(shape), np.broadcast_to(x[..., 0], shape),
                     np.broadcast_to(x[..., 1], shape), np.broadcast_to(p, shape)], axis=-1)


def _proxy(proxy, z, w):
    v = z if proxy == "z" else w
    if v is None:
        raise ValueError(f"regime over {proxy!r} needs the {proxy} argument")
    return np.asarray(v, dtype=float)


@dataclass(frozen=True, eq=False)
class LinearRegime:
    """sign(beta' (1, x1, x2, proxy)) with proxy z or w."""

    proxy: str
    beta: np.ndarray
    rho: float | None = None
    cv_table: tuple = ()

    def __post_init__(self):
        if self.proxy not in ("z", "w"):
            raise ValueError("proxy must be 'z' or 'w'")
        beta = np.array(self.beta, dtype=float).reshape(4)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def variant(self) -> str:
        return f"linear_{self.proxy}"

    def score(self, x, z=None, w=None):
        x = np.asarray(x, dtype=float)
        p = _proxy(self.proxy, z, w)
        b = self.beta
        return b[0] + b[1] * x[..., 0] + b[2] * x[..., 1] + b[3] * p

    def decide(self, x, z=None, w=None):
        return sign(self.score(x, z, w))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "beta": self.beta.tolist(),
                "feature_order": list(FEATURE_ORDER), "rho": self.rho,
                "cv_table": [list(r) for r in self.cv_table]}


@dataclass(frozen=True, eq=False)
class OracleRegime:
    """Closed-form in-class optimal rule of the simulation design."""

    config: object
    proxy: str

    @property
    def variant(self) -> str:
        return f"oracle_{self.proxy}"

    def score(self, x, z=None, w=None):
        from . import dgp

        if self.proxy == "z":
            return dgp.dz_star_score(self.config, x, _proxy("z", z, w))
        return dgp.dw_star_score(self.config, x, _proxy("w", z, w))

    def decide(self, x, z=None, w=None):
        return sign(self.score(x, z, w))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "scenario_id": self.config.scenario_id,
                "config_hash": self.config.source_hash}


@dataclass(frozen=True)
class ConstantRegime:
    arm: int

    def __post_init__(self):
        if self.arm not in (-1, 1):
            raise ValueError("arm must be -1 or 1")

    variant = "constant"
    proxy = None

    def decide(self, x, z=None, w=None):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        for v in (z, w):
            if v is not None:
                shape = np.broadcast_shapes(shape, np.shape(v))
        return np.full(shape, self.arm, dtype=int)

    def to_dict(self) -> dict:
        return {"variant": "constant", "arm": self.arm}


@dataclass(frozen=True)
class FixedPi:
    """A switching rule that picks the same branch everywhere."""

    value: int

    def __call__(self, x):
        return np.full(np.asarray(x).shape[:-1], int(self.value), dtype=int)


@dataclass(frozen=True, eq=False)
class CombinedRegime:
    """pi(x) d_z(x, z) + (1 - pi(x)) d_w(x, w), with pi in {0, 1}."""

    regime_z: object
    regime_w: object
    pi: Callable = field(default=FixedPi(1))

    variant = "combined"
    proxy = "zw"

    def decide(self, x, z=None, w=None, pi_values=None):
        pi = self.pi(x) if pi_values is None else np.asarray(pi_values)
        dz = self.regime_z.decide(x, z=z, w=w)
        dw = self.regime_w.decide(x, z=z, w=w)
        pi = np.broadcast_to(pi, np.broadcast_shapes(np.shape(pi), np.shape(dz)))
        return np.where(pi == 1, dz, dw)

    def to_dict(self) -> dict:
        pi = self.pi.to_dict() if hasattr(self.pi, "to_dict") else {"kind": type(self.pi).__name__}
        return {"variant": "combined", "regime_z": self.regime_z.to_dict(),
                "regime_w": self.regime_w.to_dict(), "pi": pi}


def regime_from_dict(d: dict, config=None):
    """Rebuild a non-combined regime from ``to_dict`` output."""
    variant = d["variant"]
    if variant in ("linear_z", "linear_w"):
        return LinearRegime(variant[-1], np.asarray(d["beta"]), d.get("rho"),
                            tuple(tuple(r) for r in d.get("cv_table", [])))
    if variant == "constant":
        return ConstantRegime(int(d["arm"]))
    if variant in ("oracle_z", "oracle_w"):
        if config is None:
            raise ValueError("oracle regimes need the scenario config to be rebuilt")
        return OracleRegime(config, variant[-1])
    raise ValueError(f"cannot rebuild regime variant {variant!r} without its switching rule")
