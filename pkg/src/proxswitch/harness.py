"""Replications, experiments and oracle diagnostics for the simulation study."""
from __future__ import annotations

import csv
import io
import json
import logging
import platform
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, dgp
from .bridges import (H_BASES, BridgeFitError, TreatmentBridge, fit_h_cv, fit_q_cv, oracle_bridges,
                      save_bridge)
from .combination import identified_value, make_pi_hat, union_choice
from .config import ScenarioConfig
from .data import Dataset, TestSet
from .policy import learn_dw, learn_dz
from .regimes import CombinedRegime, ConstantRegime, OracleRegime
from .rng import GENERATOR, derive_seed

log = logging.getLogger(__name__)

REGIMES = ("d_z", "d_w", "d_zuw", "d_zw", "const_pos", "const_neg")
PROXIMAL = ("d_z", "d_w", "d_zuw", "d_zw")
VALUE_FIELDS = ("scenario", "replication", "regime", "value", "stderr")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, f"{exc_type.__name__}: {exc}") from exc
        return False


# ---------------------------------------------------------------- pipeline

@dataclass
class FittedPipeline:
    """Everything Algorithm 1 produces from one training sample."""

    config: ScenarioConfig
    train: Dataset
    h: object
    q: object
    regime_z: object
    regime_w: object
    pi_hat: object
    combined: CombinedRegime
    union: str
    identified: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def regime_union(self):
        return self.regime_z if self.union == "z" else self.regime_w

    def regimes(self) -> dict:
        return {"d_z": self.regime_z, "d_w": self.regime_w, "d_zuw": self.regime_union,
                "d_zw": self.combined, "const_pos": ConstantRegime(1), "const_neg": ConstantRegime(-1)}


def fit_bridges(config: ScenarioConfig, train: Dataset, seed: int):
    """Penalty-selected h and per-arm q for one training sample."""
    t = config.tuning
    with _Stage("fit_h"):
        h = fit_h_cv(train, H_BASES[t.h_basis], t.lambda_grid, derive_seed(seed, "h"),
                     t.holdout_fraction)
    with _Stage("fit_q"):
        q = TreatmentBridge(
            fit_q_cv(train, 1, lambdas=t.lambda_grid, seed=derive_seed(seed, "q", 1),
                     holdout_fraction=t.holdout_fraction),
            fit_q_cv(train, -1, lambdas=t.lambda_grid, seed=derive_seed(seed, "q", -1),
                     holdout_fraction=t.holdout_fraction))
    return h, q


def fit_pipeline(config: ScenarioConfig, train: Dataset, seed: int,
                 use_oracle_bridges: bool = False) -> FittedPipeline:
    """Bridges, preliminary regimes, switching rule and combined regime."""
    t = config.tuning
    if use_oracle_bridges:
        h, q = oracle_bridges(config)
        refit = False
    else:
        h, q = fit_bridges(config, train, seed)
        refit = t.refit_bridges_per_fold
    with _Stage("learn_dz"):
        rz = learn_dz(train, h, t.rho_grid, t.folds, derive_seed(seed, "folds", "z"), refit)
    with _Stage("learn_dw"):
        rw = learn_dw(train, q, t.rho_grid, t.folds, derive_seed(seed, "folds", "w"), refit)
    with _Stage("pi_hat"):
        pi = make_pi_hat(train, h, q, rz, rw, t.bandwidth)
        combined = CombinedRegime(rz, rw, pi)
    with _Stage("identified_value"):
        union, vz, vw = union_choice(rz, rw, train, h, q)
        vzw = identified_value(combined, train, h, q)
    meta = {"rho_z": rz.rho, "rho_w": rw.rho, "bandwidth": pi.to_dict()["bandwidth"],
            "oracle_bridges": use_oracle_bridges}
    if not use_oracle_bridges:
        meta.update(lambda_h=h.meta.get("penalty"), lambda_q_pos=q.pos.meta.get("penalty"),
                    lambda_q_neg=q.neg.meta.get("penalty"))
    ident = {"d_z": vz._asdict(), "d_w": vw._asdict(), "d_zw": vzw._asdict()}
    return FittedPipeline(config, train, h, q, rz, rw, pi, combined, union, ident, meta)


# ---------------------------------------------------------------- replications

@dataclass
class ReplicationResult:
    scenario: int
    replication: int
    seed: int
    values: dict = field(default_factory=dict)
    identified: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    error: dict | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def evaluate_regimes(regimes: dict, testset: TestSet, pi_values=None) -> dict:
    """Empirical value and standard error of each named regime on the test set."""
    out = {}
    for name, reg in regimes.items():
        if isinstance(reg, CombinedRegime) and pi_values is not None:
            d = reg.decide(testset.x, z=testset.z, w=testset.w, pi_values=pi_values)
        else:
            d = reg.decide(testset.x, z=testset.z, w=testset.w)
        out[name] = dgp.value_of_decisions(d, testset)
    return out


def run_replication(config: ScenarioConfig, n_train: int, n_test: int, seed: int,
                    replication: int = 0, use_oracle_bridges: bool = False,
                    test_law: str = "paper") -> ReplicationResult:
    """One pass of the estimation pipeline plus test-set evaluation.

    Failures are caught and recorded with the stage that raised them.
    """
    res = ReplicationResult(config.scenario_id, replication, seed)
    try:
        with _Stage("sample"):
            train = dgp.sample_training(config, n_train, seed)
            test = dgp.sample_testing(config, n_test, seed, law=test_law)
        pipe = fit_pipeline(config, train, seed, use_oracle_bridges)
        with _Stage("evaluate"):
            pi_test = pipe.pi_hat(test.x)
            vals = evaluate_regimes(pipe.regimes(), test, pi_values=pi_test)
        res.values = {k: {"value": v.value, "stderr": v.se} for k, v in vals.items()}
        res.identified = pipe.identified
        res.meta = {**pipe.meta, "union": pipe.union,
                    "pi_hat_share_z": float(np.mean(pi_test))}
    except StageError as exc:
        res.error = {"stage": exc.stage, "message": exc.message,
                     "traceback": traceback.format_exc(limit=3)}
        log.warning("replication %d failed in %s: %s", replication, exc.stage, exc.message)
    return res


def _replication_task(args):
    config, n_train, n_test, seed, rep, oracle, law = args
    return run_replication(config, n_train, n_test, seed, rep, oracle, law)


@dataclass
class ExperimentResult:
    config: ScenarioConfig
    replications: list
    settings: dict

    @property
    def failures(self) -> list:
        return [r for r in self.replications if not r.ok]

    def value_rows(self) -> list[dict]:
        rows = []
        for r in self.replications:
            if not r.ok:
                continue
            for name in REGIMES:
                v = r.values[name]
                rows.append({"scenario": r.scenario, "replication": r.replication, "regime": name,
                             "value": v["value"], "stderr": v["stderr"]})
        return rows

    def values_by_regime(self) -> dict[str, np.ndarray]:
        ok = [r for r in self.replications if r.ok]
        return {name: np.array([r.values[name]["value"] for r in ok]) for name in REGIMES}

    def summary_rows(self) -> list[dict]:
        rows = []
        for name, v in self.values_by_regime().items():
            if v.size == 0:
                q25 = med = q75 = mean = float("nan")
            else:
                q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75])
                mean = v.mean()
            rows.append({"scenario": self.config.scenario_id, "regime": name, "n_ok": int(v.size),
                         "n_failed": len(self.failures), "median": float(med), "q25": float(q25),
                         "q75": float(q75), "mean": float(mean)})
        return rows


def run_experiment(config: ScenarioConfig, reps: int, n_train: int = 1000, n_test: int = 10_000,
                   base_seed: int = 0, parallelism: int = 1, use_oracle_bridges: bool = False,
                   test_law: str = "paper") -> ExperimentResult:
    """``reps`` independent replications seeded base_seed + 1, ..., base_seed + reps."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    tasks = [(config, n_train, n_test, base_seed + r, r, use_oracle_bridges, test_law)
             for r in range(1, reps + 1)]
    if parallelism > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_replication_task, tasks))
    else:
        results = [_replication_task(t) for t in tasks]
    results.sort(key=lambda r: r.replication)
    settings = {"reps": reps, "n_train": n_train, "n_test": n_test, "base_seed": base_seed,
                "seeds": [t[3] for t in tasks], "use_oracle_bridges": use_oracle_bridges,
                "test_law": test_law}
    return ExperimentResult(config, results, settings)


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(rows: list[dict], fields) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row[f]) for f in fields])
    return buf.getvalue()


def provenance(config: ScenarioConfig, settings: dict, extra: dict | None = None) -> dict:
    return {
        "package": "proxswitch", "version": __version__,
        "python": sys.version.split()[0], "platform": platform.platform(),
        "numpy": np.__version__, "scipy": scipy.__version__, "generator": GENERATOR,
        "config_hash": config.source_hash, "config": config.to_dict(),
        **settings, **(extra or {}),
    }


def write_experiment(result: ExperimentResult, out_dir, extra: dict | None = None) -> Path:
    """values.csv, summary.csv, failures.csv and run.json under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "values.csv").write_text(csv_text(result.value_rows(), VALUE_FIELDS), encoding="utf-8")
    sfields = ("scenario", "regime", "n_ok", "n_failed", "median", "q25", "q75", "mean")
    (out / "summary.csv").write_text(csv_text(result.summary_rows(), sfields), encoding="utf-8")
    frows = [{"replication": r.replication, "seed": r.seed, "stage": r.error["stage"],
              "message": r.error["message"]} for r in result.failures]
    (out / "failures.csv").write_text(csv_text(frows, ("replication", "seed", "stage", "message")),
                                      encoding="utf-8")
    reps = [{"replication": r.replication, "seed": r.seed, "identified": r.identified,
             "meta": r.meta, "error": r.error} for r in result.replications]
    run = provenance(result.config, result.settings,
                     {"replications_ok": len(result.replications) - len(result.failures),
                      "replications_failed": len(result.failures), "details": reps, **(extra or {})})
    (out / "run.json").write_text(json.dumps(run, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return out


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def save_pipeline(pipe: FittedPipeline, out_dir) -> Path:
    """Serialized bridges and regimes under ``out_dir``/regimes."""
    out = Path(out_dir) / "regimes"
    out.mkdir(parents=True, exist_ok=True)
    if hasattr(pipe.h, "to_dict"):
        save_bridge(pipe.h, out / "h.json")
        save_bridge(pipe.q.pos, out / "q_pos.json")
        save_bridge(pipe.q.neg, out / "q_neg.json")
    for name, reg in (("d_z", pipe.regime_z), ("d_w", pipe.regime_w), ("d_zw", pipe.combined)):
        (out / f"{name}.json").write_text(json.dumps(reg.to_dict(), indent=2, default=_json_default) + "\n",
                                          encoding="utf-8")
    return out


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class Decomposition:
    v_pi_hat: float
    v_pi_bar: float
    v_z: float
    v_w: float
    k_hat: float
    k_se: float
    g_bar: float
    g_se: float
    residual: float
    residual_se: float
    pi_agreement: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _paired_se(a, b) -> float:
    d = np.asarray(a) - np.asarray(b)
    return float(d.std(ddof=1) / np.sqrt(d.size))


def excess_value_decomposition(pipe: FittedPipeline, n_test: int = 20_000, n_mc: int = 20_000,
                               seed: int = 0) -> Decomposition:
    """K(pi_hat) and G(pi_bar) for a fitted pipeline, from one shared test sample.

    Values are realised potential outcomes on a training-law test sample;
    pi_bar is the Monte Carlo oracle built on the fitted d_z and d_w.
    """
    cfg = pipe.config
    test = dgp.sample_testing(cfg, n_test, derive_seed(seed, "decompose"), law="training")
    pi_bar = dgp.OraclePi(cfg, pipe.regime_z, pipe.regime_w, n_mc, derive_seed(seed, "pi_bar"))(test.x)
    pi_hat = pipe.pi_hat(test.x)

    def rows(reg, pi=None):
        if pi is not None:
            d = reg.decide(test.x, z=test.z, w=test.w, pi_values=pi)
        else:
            d = reg.decide(test.x, z=test.z, w=test.w)
        return np.where(d == 1, test.y_pos, test.y_neg)

    r_hat = rows(pipe.combined, pi_hat)
    r_bar = rows(pipe.combined, pi_bar)
    r_z = rows(pipe.regime_z)
    r_w = rows(pipe.regime_w)
    v_hat, v_bar, v_z, v_w = (float(r.mean()) for r in (r_hat, r_bar, r_z, r_w))
    r_best = r_z if v_z >= v_w else r_w
    k_hat = v_bar - v_hat
    g_bar = min(v_bar - v_z, v_bar - v_w)
    residual = v_hat - (max(v_z, v_w) - k_hat + g_bar)
    k_se = _paired_se(r_bar, r_hat)
    g_se = _paired_se(r_bar, r_best)
    res_se = float(np.sqrt(k_se**2 + g_se**2 + _paired_se(r_hat, r_best) ** 2))
    return Decomposition(v_hat, v_bar, v_z, v_w, k_hat, k_se, g_bar, g_se, residual, res_se,
                         float(np.mean(pi_hat == pi_bar)))


def star_regime(config: ScenarioConfig, n_mc: int = 100_000, seed: int = 0) -> CombinedRegime:
    """The in-class optimal combined rule: oracle d_z*, d_w* switched by the oracle pi_bar."""
    rz, rw = OracleRegime(config, "z"), OracleRegime(config, "w")
    return CombinedRegime(rz, rw, dgp.OraclePi(config, rz, rw, n_mc, seed))


@dataclass
class SweepResult:
    n_list: list
    gaps: np.ndarray  # shape (len(n_list), R)
    star_value: float
    failures: int

    def trend_rows(self) -> list[dict]:
        rows = []
        for n, g in zip(self.n_list, self.gaps):
            g = g[np.isfinite(g)]
            se = float(g.std(ddof=1) / np.sqrt(g.size)) if g.size > 1 else float("nan")
            rows.append({"n": n, "reps": int(g.size), "mean_gap": float(g.mean()) if g.size else float("nan"),
                         "se": se})
        return rows

    @property
    def decreasing(self) -> bool:
        rows = self.trend_rows()
        return rows[-1]["mean_gap"] < rows[0]["mean_gap"]


def consistency_sweep(config: ScenarioConfig, n_list, reps: int, base_seed: int = 0,
                      n_test: int = 20_000, n_mc: int = 20_000, parallelism: int = 1) -> SweepResult:
    """Mean of V(star) - V(d_zw with pi_hat) over ``reps`` fits at each training size.

    All fits are scored on one training-law test sample with paired rows.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or sorted(n_list) != n_list:
        raise ValueError("n_list must be ascending with at least three sizes")
    test = dgp.sample_testing(config, n_test, derive_seed(base_seed, "sweep-test"), law="training")
    star = star_regime(config, n_mc, derive_seed(base_seed, "sweep-star"))
    star_rows = np.where(star.decide(test.x, z=test.z, w=test.w) == 1, test.y_pos, test.y_neg)
    tasks = [(config, n, base_seed + r, test) for n in n_list for r in range(1, reps + 1)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            vals = list(pool.map(_sweep_task, tasks))
    else:
        vals = [_sweep_task(t) for t in tasks]
    v = np.array(vals, dtype=float).reshape(len(n_list), reps)
    star_value = float(star_rows.mean())
    return SweepResult(n_list, star_value - v, star_value, int(np.sum(~np.isfinite(v))))


def _sweep_task(args):
    config, n, seed, test = args
    train = dgp.sample_training(config, n, derive_seed(seed, "sweep", n))
    try:
        pipe = fit_pipeline(config, train, derive_seed(seed, "sweep-fit", n))
    except (StageError, BridgeFitError) as exc:
        log.warning("sweep fit n=%d seed=%d failed: %s", n, seed, exc)
        return float("nan")
    d = pipe.combined.decide(test.x, z=test.z, w=test.w)
    return float(np.where(d == 1, test.y_pos, test.y_neg).mean())


def bridge_recovery_pilot(config: ScenarioConfig, n: int = 4000, seed: int = 0) -> dict:
    """Error of fitted bridges against the design's true bridges.

    Reports the largest absolute error of h(w,1,x) - h(w,-1,x) against
    b1(x) + b_a w on a 5 x 5 grid of (x1, w) with x2 = 0.25, and the largest
    coefficient error of each q arm.
    """
    train = dgp.sample_training(config, n, seed)
    h, q = fit_bridges(config, train, seed)
    g1, gw = np.meshgrid(np.linspace(0.0, 0.5, 5), np.linspace(-0.5, 1.5, 5))
    x = np.stack([g1, np.full_like(g1, 0.25)], axis=-1)
    contrast = h(gw, 1, x) - h(gw, -1, x)
    target = config.b1(x) + config.b_a * gw
    out = {"n": n, "seed": seed, "h_contrast_max_abs_error": float(np.abs(contrast - target).max())}
    for arm, b in ((1, q.pos), (-1, q.neg)):
        true = np.array([arm * config.t0 + config.ta * (1 + arm) / 2, arm * config.tz,
                         arm * config.tx[0], arm * config.tx[1]])
        out[f"q_{'pos' if arm == 1 else 'neg'}_max_abs_coef_error"] = float(np.abs(b.coef - true).max())
    return out
