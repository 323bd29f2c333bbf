import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from proxswitch import bridges as B
from proxswitch import dgp
from proxswitch.data import Dataset


def _small(cfg, n=300, seed=0):
    return dgp.sample_training(cfg, n, seed)


def test_zero_residuals_give_zero_risk():
    k = np.random.default_rng(0).random((5, 5))
    assert B.risk_from_residuals(np.zeros(5), k + k.T) == 0.0


@given(r1=st.floats(-10, 10), r2=st.floats(-10, 10), k12=st.floats(0, 1))
def test_two_point_u_statistic(r1, r2, k12):
    k = np.array([[1.0, k12], [k12, 1.0]])
    assert B.risk_from_residuals(np.array([r1, r2]), k, "U") == pytest.approx(r1 * r2 * k12, abs=1e-12)


@given(hnp.arrays(float, 12, elements=st.floats(-100, 100)))
def test_v_statistic_risk_is_nonnegative(cfg1, r):
    ds = _small(cfg1, 12, 1)
    prob = B.make_problem(ds, "outcome_h", statistic="V")
    k = B.gram(prob, ds)
    assert B.risk_from_residuals(r, k, "V") >= -1e-9 * max(1.0, float(r @ r))


def test_gram_is_symmetric_psd(cfg1):
    ds = _small(cfg1, 200)
    for kind, arm in (("outcome_h", None), ("treatment_q", 1)):
        k = B.gram(B.make_problem(ds, kind, arm=arm), ds)
        np.testing.assert_allclose(k, k.T, atol=0)
        assert np.linalg.eigvalsh(k).min() > -1e-8
        assert np.all(np.diag(k) == 1.0)


def test_constant_outcome_gives_zero_risk(cfg1):
    ds = _small(cfg1, 100)
    flat = Dataset(ds.x, ds.a, ds.z, ds.w, np.full(ds.n, 3.5))
    h = B.fit_h(flat, ("1",), B.make_problem(flat, "outcome_h"))
    assert h.coef[0] == pytest.approx(3.5, abs=1e-9)
    assert B.empirical_risk(B.make_problem(flat, "outcome_h"), h, flat) == pytest.approx(0.0, abs=1e-18)


def test_duplicate_column_with_penalty(cfg1):
    ds = _small(cfg1)
    basis = B.H_BASIS_LINEAR + ("w",)
    h = B.fit_h(ds, basis, B.make_problem(ds, "outcome_h", penalty=1e-3))
    assert np.all(np.isfinite(h.coef))
    # the two copies of the w column share their weight equally
    assert h.coef[1] == pytest.approx(h.coef[-1], rel=1e-8)


def test_singular_system_without_penalty_escalates(cfg1):
    ds = _small(cfg1)
    h = B.fit_h(ds, B.H_BASIS_LINEAR + ("w",), B.make_problem(ds, "outcome_h", penalty=0.0))
    assert h.meta["escalations"] >= 1 and h.meta["penalty_used"] > 0


def test_linear_q_on_single_arm_is_one(cfg1):
    ds = _small(cfg1, 80)
    all_pos = Dataset(ds.x, np.ones(ds.n, dtype=int), ds.z, ds.w, ds.y)
    prob = B.make_problem(all_pos, "treatment_q", arm=1, statistic="V")
    q = B.fit_q(all_pos, ("1",), prob, arm=1, link="linear")
    assert q.coef[0] == pytest.approx(1.0, abs=1e-10)


def test_fit_h_first_order_condition(cfg1):
    ds = _small(cfg1, 500)
    for lam in (0.0, 1e-6, 1e-3):
        h = B.fit_h(ds, problem=B.make_problem(ds, "outcome_h", penalty=lam))
        assert h.meta["first_order_residual"] < 1e-8 * max(1.0, np.linalg.norm(h.coef))


@given(seed=st.integers(0, 1000))
def test_ridge_shrinkage(cfg1, seed):
    ds = _small(cfg1, 120, seed)
    prob = B.make_problem(ds, "outcome_h")
    k = B.gram(prob, ds)
    norms = [np.linalg.norm(B.fit_h(ds, problem=prob.with_penalty(lam), k=k).coef)
             for lam in (1e-4, 1e-3, 1e-2, 1e-1)]
    assert all(a >= b - 1e-10 for a, b in zip(norms, norms[1:]))


def test_u_and_v_risks_converge(cfg1):
    h = lambda w, a, x: dgp.true_h(cfg1, w, a, x)  # noqa: E731
    gaps = []
    for n in (500, 1000, 2000):
        vals = []
        for seed in range(8):
            ds = _small(cfg1, n, 100 + seed)
            prob = B.make_problem(ds, "outcome_h")
            k = B.gram(prob, ds)
            r = B.residuals(prob, h, ds)
            vals.append(B.risk_from_residuals(r, k, "V") - B.risk_from_residuals(r, k, "U"))
        gaps.append(np.mean(vals))
    for a, b in zip(gaps, gaps[1:]):
        assert b / a == pytest.approx(0.5, rel=0.5)


def test_permutation_invariance(cfg1):
    ds = _small(cfg1, 300)
    perm = np.random.default_rng(3).permutation(ds.n)
    shuffled = ds.take(perm)
    a = B.fit_h(ds, problem=B.make_problem(ds, "outcome_h", penalty=1e-5))
    b = B.fit_h(shuffled, problem=B.make_problem(shuffled, "outcome_h", penalty=1e-5))
    np.testing.assert_allclose(a.coef, b.coef, atol=1e-10, rtol=0)
    qa = B.fit_q(ds, problem=B.make_problem(ds, "treatment_q", arm=-1, penalty=1e-3), arm=-1)
    qb = B.fit_q(shuffled, problem=B.make_problem(shuffled, "treatment_q", arm=-1, penalty=1e-3), arm=-1)
    np.testing.assert_allclose(qa.coef, qb.coef, atol=1e-10, rtol=0)


def test_block_objective_matches_direct_formula(cfg1):
    ds = _small(cfg1, 200)
    rng = np.random.default_rng(4)
    for stat in ("U", "V"):
        prob = B.make_problem(ds, "treatment_q", arm=1, penalty=1e-3, statistic=stat)
        k = B.gram(prob, ds)
        psi = B.design(B.Q_BASIS, ds.z, np.ones(ds.n), ds.x)
        obj = B._ExpLinkRisk(psi, (ds.a == 1).astype(float), k, stat, 1e-3)
        for _ in range(3):
            eta = rng.normal(0, 0.5, 4)
            v1, g1 = obj.value_grad(eta)
            v2, g2 = B.exp_link_risk_and_grad(eta, ds, B.Q_BASIS, prob, k)
            assert v1 == pytest.approx(v2, rel=1e-12)
            np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-14)


def test_hessian_matches_gradient_differences(cfg1):
    ds = _small(cfg1, 200)
    prob = B.make_problem(ds, "treatment_q", arm=1, penalty=1e-3)
    psi = B.design(B.Q_BASIS, ds.z, np.ones(ds.n), ds.x)
    obj = B._ExpLinkRisk(psi, (ds.a == 1).astype(float), B.gram(prob, ds), "U", 1e-3)
    eta = np.array([0.1, -0.3, 0.2, 0.1])
    _, _, hess = obj.value_grad(eta, hessian=True)
    fd = np.empty((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = 1e-6
        fd[:, j] = (obj.value_grad(eta + e)[1] - obj.value_grad(eta - e)[1]) / 2e-6
    np.testing.assert_allclose(hess, fd, rtol=1e-5, atol=1e-8)


def test_fit_q_reaches_stationarity(cfg1):
    ds = _small(cfg1, 800, 5)
    q = B.fit_q_cv(ds, 1, seed=1)
    assert q.meta["grad_norm"] < 1e-6
    assert np.all(q(ds.z, 1, ds.x) > 1)


def test_bridge_function_evaluation():
    x = np.random.default_rng(0).normal(size=(7, 2))
    v = np.arange(7.0)
    zero_lin = B.BridgeFn("outcome_h", "linear", B.H_BASIS_LINEAR, np.zeros(8))
    assert np.all(zero_lin(v, 1, x) == 0)
    zero_exp = B.BridgeFn("treatment_q", "one_plus_exp", B.Q_BASIS, np.zeros(4), arm=1)
    assert np.all(zero_exp(v, 1, x) == 2)
    coef = np.arange(1.0, 9.0)
    h = B.BridgeFn("outcome_h", "linear", B.H_BASIS_LINEAR, coef)
    for a in (-1, 1):
        t = (1 + a) / 2
        cols = [np.ones(7), v, x[:, 0], x[:, 1], np.full(7, t), v * t, x[:, 0] * t, x[:, 1] * t]
        np.testing.assert_allclose(h(v, a, x), np.column_stack(cols) @ coef, rtol=1e-14)
    np.testing.assert_array_equal(h(v, 1, x), h(v, 1, x))
    with pytest.raises(ValueError):
        B.BridgeFn("outcome_h", "linear", B.H_BASIS_LINEAR, np.zeros(3))


@given(hnp.arrays(float, 4, elements=st.floats(-5, 5)), st.floats(-50, 50))
def test_exp_link_exceeds_one(coef, z):
    q = B.BridgeFn("treatment_q", "one_plus_exp", B.Q_BASIS, coef, arm=-1)
    val = q(z, -1, np.array([0.2, 0.3]))
    eta = coef @ [1.0, z, 0.2, 0.3]
    # 1 + exp(eta) rounds to 1 once exp(eta) is below machine epsilon
    assert val >= 1 and (val > 1 or eta < np.log(np.finfo(float).eps))


def test_bridge_json_round_trip(tmp_path, cfg1):
    ds = _small(cfg1, 200)
    h = B.fit_h_cv(ds, seed=2)
    B.save_bridge(h, tmp_path / "h.json")
    back = B.load_bridge(tmp_path / "h.json")
    np.testing.assert_array_equal(back.coef, h.coef)
    assert back.basis == h.basis
    assert json.loads((tmp_path / "h.json").read_text())["meta"]["penalty"] == h.meta["penalty"]


def test_penalty_selection_is_seeded(cfg1):
    ds = _small(cfg1, 400, 6)
    a, b = B.fit_h_cv(ds, seed=3), B.fit_h_cv(ds, seed=3)
    np.testing.assert_array_equal(a.coef, b.coef)
    assert a.meta["penalty"] in B.DEFAULT_LAMBDAS
    assert len(a.meta["cv"]) == len(B.DEFAULT_LAMBDAS)


def test_bad_problem_arguments(cfg1):
    ds = _small(cfg1, 20)
    with pytest.raises(ValueError):
        B.make_problem(ds, "treatment_q")  # arm missing
    with pytest.raises(ValueError):
        B.fit_q(ds, arm=0)
    with pytest.raises(ValueError):
        B.evaluate_bridge(lambda v, a, x: v, np.zeros(3), 1, np.zeros((3, 3)))
