"""Scenario configuration: loading, validation and the per-scenario outcome forms."""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIO_IDS = (1, 2, 3, 4, 5, 6)


class ConfigError(ValueError):
    """Raised for unreadable or invalid scenario files."""


# b1(X), b2(X)'X and b3(X) for each scenario. X has shape (..., 2).
def _b1_linear(x):
    return 0.5 + 3.0 * x[..., 0] - 5.0 * x[..., 1]


def _b2x_const(x):
    return 0.25 * x[..., 0] + 0.25 * x[..., 1]


def _b2x_norm(x):
    return x[..., 0] ** 2 + x[..., 1] ** 2


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


_OUTCOME_FORMS: dict[int, tuple[Callable, Callable, Callable]] = {
    1: (_b1_linear, _b2x_const, _zero),
    2: (_b1_linear, _b2x_const, _zero),
    3: (
        lambda x: 2.3 + np.abs(x[..., 0] - 1.0) - np.abs(x[..., 1] + 1.0),
        _b2x_norm,
        lambda x: np.sin(x[..., 0]) - 2.0 * np.cos(x[..., 1]),
    ),
    4: (lambda x: 0.25 - 6.0 * x[..., 0] * x[..., 1], _b2x_norm, _zero),
    5: (lambda x: 0.1 - 2.0 * x[..., 0] ** 2, _b2x_norm, lambda x: 4.0 * x[..., 1] ** 2),
    6: (lambda x: -0.5 + np.exp(x[..., 0]) - 3.0 * x[..., 1], _b2x_const, _zero),
}


@dataclass(frozen=True)
class Tuning:
    rho_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1)
    folds: int = 5
    lambda_grid: tuple[float, ...] = (1e-7, 1e-6, 1e-5, 1e-4)
    holdout_fraction: float = 0.2
    refit_bridges_per_fold: bool = True
    h_basis: str = "linear"
    bandwidth: float | None = None


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Every constant of the simulation design for one scenario.

    Arrays are stored read-only. Proxy-block vectors are ordered (z, w, u).
    """

    scenario_id: int
    covariate_mean: np.ndarray
    covariate_cov: np.ndarray
    propensity_coef: np.ndarray
    zwu_intercepts: np.ndarray
    zwu_treat: np.ndarray
    zwu_slopes: np.ndarray
    zwu_cov: np.ndarray
    b0: float
    b_a: float
    b_w: float
    omega: float
    sigma_y: float
    t0: float
    tz: float
    ta: float
    tx: np.ndarray
    tuning: Tuning = field(default_factory=Tuning)
    source_hash: str = ""

    def __post_init__(self):
        for name in ("covariate_mean", "covariate_cov", "propensity_coef", "zwu_intercepts",
                     "zwu_treat", "zwu_slopes", "zwu_cov", "tx"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        _validate(self)
        object.__setattr__(self, "_zwu_chol", _readonly(np.linalg.cholesky(self.zwu_cov)))
        object.__setattr__(self, "_x_chol", _readonly(np.linalg.cholesky(self.covariate_cov)))

    # scenario-varying outcome pieces
    def b1(self, x):
        return _OUTCOME_FORMS[self.scenario_id][0](np.asarray(x, dtype=float))

    def b2x(self, x):
        return _OUTCOME_FORMS[self.scenario_id][1](np.asarray(x, dtype=float))

    def b3(self, x):
        return _OUTCOME_FORMS[self.scenario_id][2](np.asarray(x, dtype=float))

    @property
    def zwu_chol(self) -> np.ndarray:
        return self._zwu_chol

    @property
    def covariate_chol(self) -> np.ndarray:
        return self._x_chol

    @property
    def alpha0(self) -> float:
        return float(self.zwu_intercepts[0])

    @property
    def mu0(self) -> float:
        return float(self.zwu_intercepts[1])

    @property
    def kappa0(self) -> float:
        return float(self.zwu_intercepts[2])

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            if isinstance(val, np.ndarray):
                val = val.tolist()
            elif isinstance(val, Tuning):
                val = {k: (list(v) if isinstance(v, tuple) else v) for k, v in val.__dict__.items()}
            out[name] = val
        return out

    def with_tuning(self, **changes) -> "ScenarioConfig":
        tuning = Tuning(**{**self.tuning.__dict__, **changes})
        kwargs = {name: getattr(self, name) for name in self.__dataclass_fields__}
        kwargs["tuning"] = tuning
        return ScenarioConfig(**kwargs)


def _readonly(a):
    a.setflags(write=False)
    return a


def _validate(cfg: ScenarioConfig) -> None:
    if cfg.scenario_id not in SCENARIO_IDS:
        raise ConfigError(f"unknown scenario id {cfg.scenario_id}")
    shapes = {
        "covariate_mean": (2,), "covariate_cov": (2, 2), "propensity_coef": (2,),
        "zwu_intercepts": (3,), "zwu_treat": (3,), "zwu_slopes": (3, 2), "zwu_cov": (3, 3),
        "tx": (2,),
    }
    for name, shape in shapes.items():
        if getattr(cfg, name).shape != shape:
            raise ConfigError(f"{name} must have shape {shape}")
    for name in ("covariate_cov", "zwu_cov"):
        mat = getattr(cfg, name)
        if not np.allclose(mat, mat.T):
            raise ConfigError(f"{name} is not symmetric")
        try:
            np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            raise ConfigError(f"{name} is not positive definite") from None
    if not cfg.sigma_y > 0:
        raise ConfigError("sigma_y must be positive")
    t = cfg.tuning
    if not t.rho_grid or any(r < 0 for r in t.rho_grid):
        raise ConfigError("rho_grid must be a nonempty list of nonnegative values")
    if t.folds < 2:
        raise ConfigError("folds must be >= 2")
    if t.bandwidth is not None and not t.bandwidth > 0:
        raise ConfigError("bandwidth override must be positive")


def default_scenario_path() -> Path:
    return Path(str(resources.files("proxswitch").joinpath("scenarios.toml")))


def load_scenario(path: str | Path | None = None, scenario_id: int = 1) -> ScenarioConfig:
    """Read a scenario file and merge its fixed design with one scenario row."""
    path = default_scenario_path() if path is None else Path(path)
    raw_bytes = path.read_bytes()
    try:
        doc = tomllib.loads(raw_bytes.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if scenario_id not in SCENARIO_IDS:
        raise ConfigError(f"unknown scenario id {scenario_id}")
    try:
        row = doc["scenarios"][str(scenario_id)]
        prox = doc["proxies"]
        sd = np.asarray(prox["sd"], dtype=float)
        if sd.shape != (3,) or np.any(sd <= 0):
            raise ConfigError("proxy standard deviations must be three positive numbers")
        cov = np.diag(sd**2)
        cov[0, 1] = cov[1, 0] = prox["cov_zw"]
        cov[0, 2] = cov[2, 0] = prox["cov_zu"]
        cov[1, 2] = cov[2, 1] = prox["cov_wu"]
        tb = doc["treatment_bridge"]
        tuning_raw = dict(doc.get("tuning", {}))
        for key in ("rho_grid", "lambda_grid"):
            if key in tuning_raw:
                tuning_raw[key] = tuple(float(v) for v in tuning_raw[key])
        return ScenarioConfig(
            scenario_id=scenario_id,
            covariate_mean=doc["covariates"]["mean"],
            covariate_cov=doc["covariates"]["cov"],
            propensity_coef=doc["treatment"]["propensity_coef"],
            zwu_intercepts=prox["intercepts"],
            zwu_treat=prox["treat"],
            zwu_slopes=prox["slopes"],
            zwu_cov=cov,
            b0=float(doc["outcome"]["b0"]),
            b_a=float(row["b_a"]),
            b_w=float(row["b_w"]),
            omega=float(doc["outcome"]["omega"]),
            sigma_y=float(doc["outcome"]["sigma_y"]),
            t0=float(tb["t0"]),
            tz=float(tb["tz"]),
            ta=float(tb["ta"]),
            tx=tb["tx"],
            tuning=Tuning(**tuning_raw),
            source_hash=hashlib.sha256(raw_bytes).hexdigest(),
        )
    except KeyError as exc:
        raise ConfigError(f"missing key {exc} in {path}") from None
    except TypeError as exc:
        raise ConfigError(f"bad value in {path}: {exc}") from None
