import csv
import dataclasses
import json

import numpy as np
import pytest

from proxswitch import dgp, harness
from proxswitch.cli import main
from proxswitch.config import load_scenario
from proxswitch.regimes import CombinedRegime
from proxswitch.rng import derive_seed


@pytest.fixture(scope="module")
def small_pipe(cfg1):
    train = dgp.sample_training(cfg1, 300, 3)
    return harness.fit_pipeline(cfg1, train, 3)


def test_replication_is_deterministic(cfg1):
    a = harness.run_replication(cfg1, 300, 2000, 5)
    b = harness.run_replication(cfg1, 300, 2000, 5)
    assert a.ok and a.values == b.values
    assert set(a.values) == set(harness.REGIMES)


def test_single_replication_experiment(cfg1):
    res = harness.run_experiment(cfg1, 1, 300, 2000, base_seed=4)
    direct = harness.run_replication(cfg1, 300, 2000, 5, replication=1)
    assert res.replications[0].values == direct.values
    assert res.settings["seeds"] == [5]


def test_failures_are_recorded(cfg1):
    res = harness.run_experiment(cfg1, 2, 6, 100, base_seed=0)
    assert len(res.failures) + len(res.value_rows()) // len(harness.REGIMES) == 2
    assert all(f.error["stage"] for f in res.failures)
    assert res.failures, "six training rows cannot fill five folds"


def test_values_respect_pointwise_bounds():
    cfg = load_scenario(None, 2)
    rep = harness.run_replication(cfg, 300, 5000, 6)
    ts = dgp.sample_testing(cfg, 5000, 6)
    lo = min(rep.values["const_pos"]["value"], rep.values["const_neg"]["value"])
    hi = np.maximum(ts.y_pos, ts.y_neg).mean()
    for name in harness.PROXIMAL:
        v = rep.values[name]
        assert lo - 4 * v["stderr"] <= v["value"] <= hi + 1e-12


def test_test_size_scales_standard_error(cfg1):
    se = [dgp.value_of_decisions(np.ones(m), dgp.sample_testing(cfg1, m, 7)).se for m in (25_000, 100_000)]
    assert se[1] / se[0] == pytest.approx(0.5, rel=0.2)


def test_parallel_runs_match_serial(cfg1, tmp_path):
    serial = harness.run_experiment(cfg1, 3, 250, 1000, base_seed=9, parallelism=1)
    par = harness.run_experiment(cfg1, 3, 250, 1000, base_seed=9, parallelism=2)
    harness.write_experiment(serial, tmp_path / "a")
    harness.write_experiment(par, tmp_path / "b")
    for name in ("values.csv", "summary.csv", "failures.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.DictReader((tmp_path / "a" / "values.csv").open()))
    assert len(rows) == 3 * len(harness.REGIMES)
    assert set(rows[0]) == set(harness.VALUE_FIELDS)
    run = json.loads((tmp_path / "a" / "run.json").read_text())
    assert run["generator"] == "numpy.random.Philox"
    assert run["replications_ok"] + run["replications_failed"] == 3


def test_pipeline_contents(small_pipe):
    regs = small_pipe.regimes()
    assert set(regs) == set(harness.REGIMES)
    assert small_pipe.union in ("z", "w")
    vz, vw = small_pipe.identified["d_z"]["value"], small_pipe.identified["d_w"]["value"]
    assert regs["d_zuw"] is (small_pipe.regime_z if vz >= vw else small_pipe.regime_w)
    assert small_pipe.meta["lambda_h"] in small_pipe.config.tuning.lambda_grid


def test_decomposition_with_exact_switch(small_pipe):
    seed, n_mc = 2, 2000
    pi_bar = dgp.OraclePi(small_pipe.config, small_pipe.regime_z, small_pipe.regime_w, n_mc,
                          derive_seed(seed, "pi_bar"))
    exact = dataclasses.replace(small_pipe, pi_hat=pi_bar,
                                combined=CombinedRegime(small_pipe.regime_z, small_pipe.regime_w, pi_bar))
    dec = harness.excess_value_decomposition(exact, n_test=1500, n_mc=n_mc, seed=seed)
    assert dec.k_hat == 0.0 and dec.pi_agreement == 1.0
    assert abs(dec.residual) < 1e-12


def test_decomposition_identity(small_pipe):
    dec = harness.excess_value_decomposition(small_pipe, n_test=1500, n_mc=2000, seed=1)
    assert abs(dec.residual) < 4 * dec.residual_se
    assert dec.g_bar >= -4 * dec.g_se
    assert dec.v_pi_hat == pytest.approx(max(dec.v_z, dec.v_w) - dec.k_hat + dec.g_bar, abs=1e-12)


def test_sweep_argument_checks(cfg1):
    with pytest.raises(ValueError):
        harness.consistency_sweep(cfg1, [1000, 500, 4000], 2)
    with pytest.raises(ValueError):
        harness.consistency_sweep(cfg1, [500, 1000], 2)


def test_small_sweep(cfg1):
    sweep = harness.consistency_sweep(cfg1, [150, 200, 300], reps=2, base_seed=1, n_test=1000, n_mc=500)
    rows = sweep.trend_rows()
    assert [r["n"] for r in rows] == [150, 200, 300]
    assert sweep.gaps.shape == (3, 2)
    for r, g in zip(rows, sweep.gaps):
        assert r["mean_gap"] == pytest.approx(np.mean(g))


@pytest.mark.slow
def test_scenario5_switch_is_comparable():
    cfg = load_scenario(None, 5)
    v = harness.run_experiment(cfg, 20, 1000, 10_000, base_seed=100).values_by_regime()
    for name in ("d_z", "d_w"):
        q25, q75 = np.quantile(v[name], [0.25, 0.75])
        assert np.median(v["d_zw"]) >= np.median(v[name]) - 2 * (q75 - q25) / np.sqrt(20)


# ---------------------------------------------------------------- CLI

def test_cli_simulate_and_fit(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--n-train", "200", "--n-test", "50", "--seed", "3", "--out", str(out)]) == 0
    assert (out / "train.csv").exists() and (out / "test.csv").exists()
    ds = dgp.sample_training(load_scenario(None, 1), 200, 3)
    from proxswitch.data import read_dataset

    np.testing.assert_array_equal(read_dataset(out / "train.csv").y, ds.y)
    fit = tmp_path / "fit"
    assert main(["fit-bridges", "--data", str(out / "train.csv"), "--out", str(fit)]) == 0
    h = json.loads((fit / "regimes" / "h.json").read_text())
    assert h["kind"] == "outcome_h" and len(h["coef"]) == len(h["basis"])
    assert (fit / "regimes" / "q_neg.json").exists()


def test_cli_learn_and_evaluate(tmp_path, capsys):
    assert main(["learn", "--n-train", "250", "--out", str(tmp_path / "l")]) == 0
    for name in ("d_z", "d_w", "d_zw"):
        assert (tmp_path / "l" / "regimes" / f"{name}.json").exists()
    d_zw = json.loads((tmp_path / "l" / "regimes" / "d_zw.json").read_text())
    assert d_zw["pi"]["kind"] == "nadaraya_watson"
    assert main(["evaluate", "--n-train", "250", "--n-test", "500", "--out", str(tmp_path / "e")]) == 0
    assert "d_zw" in capsys.readouterr().out


def test_cli_decompose_and_consistency(tmp_path, capsys):
    assert main(["decompose", "--n-train", "250", "--n-test", "800", "--n-mc", "500",
                 "--out", str(tmp_path / "d")]) == 0
    dec = json.loads((tmp_path / "d" / "decomposition.json").read_text())
    assert {"k_hat", "g_bar", "residual"} <= set(dec)
    assert main(["consistency", "--n-list", "150", "200", "250", "--reps", "2", "--n-test", "500",
                 "--n-mc", "300", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "consistency.csv").read_text().startswith("n,reps,mean_gap,se\n")


def test_cli_experiment_with_oracle_bridges(tmp_path):
    out = tmp_path / "x"
    assert main(["experiment", "--reps", "2", "--n-train", "250", "--n-test", "500",
                 "--use-oracle-bridges", "--out", str(out)]) == 0
    run = json.loads((out / "run.json").read_text())
    assert run["use_oracle_bridges"] is True and run["replications_ok"] == 2


def test_cli_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,x2,a,z,w,y\n0,0,0,0,0,0\n")
    assert main(["learn", "--data", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["experiment", "--scenario", "9"])
