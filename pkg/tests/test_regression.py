import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendonscore.errors import DomainError, ShapeError, SingularDesignError
from tendonscore.regression import (
    RegressionModel, evaluate, leave_one_out, load_model, ols_fit, predict, save_model,
    write_report_csv,
)


def pinv_oracle(x, y):
    design = np.column_stack([np.ones(len(y)), x])
    return np.linalg.pinv(design) @ y


def well_posed(rng, n, p=2):
    while True:
        x = rng.standard_normal((n, p)) * rng.uniform(0.1, 10, p)
        if np.linalg.cond(np.column_stack([np.ones(n), x])) < 1e6:
            return x


def test_hand_example():
    m = ols_fit([0.0, 1.0, 2.0], [1.0, 2.0, 4.0])
    assert m.coefficients[0] == pytest.approx(1.5, abs=1e-12)
    assert m.intercept == pytest.approx(5 / 6, abs=1e-12)
    assert round(m.intercept, 4) == 0.8333


def test_exact_affine_recovery(rng):
    x = rng.standard_normal((10, 2))
    y = 2.5 - 1.25 * x[:, 0] + 0.75 * x[:, 1]
    m = ols_fit(x, y, "STE", ("PD", "T2STARGRE"))
    np.testing.assert_allclose([m.intercept, *m.coefficients], [2.5, -1.25, 0.75], atol=1e-12)
    assert np.abs(predict(m, x) - y).max() < 1e-8
    rep = evaluate(m, x, y)
    assert rep.mse < 1e-20 and rep.max_abs_error < 1e-8
    assert m.predictor_protocols == ("PD", "T2STARGRE")


def test_rank_deficiency_and_size():
    x = np.arange(6.0)
    with pytest.raises(SingularDesignError):
        ols_fit(np.column_stack([x, x]), x ** 2)
    with pytest.raises(SingularDesignError):
        ols_fit(np.column_stack([x, 3 * x + 1]), x ** 2)
    with pytest.raises(DomainError):
        ols_fit(np.ones((2, 2)), [1.0, 2.0])
    with pytest.raises(ShapeError):
        ols_fit(np.ones((4, 2)), [1.0, 2.0])


def test_predict_examples():
    m = RegressionModel("TE", 1.0, (0.5, -0.25), ("PD", "T2STARGRE"))
    assert predict(m, [2.0, 4.0]) == 1.0
    assert predict(RegressionModel("TE", 3.0, (0.0, 0.0), ("PD", "T1")), [9.0, -9.0]) == 3.0
    assert predict(RegressionModel("TE", 9.0, (0.0,), ("PD",)), [0.0], clamp=True) == 5.0
    with pytest.raises(ShapeError):
        predict(m, [1.0])
    with pytest.raises(ShapeError):
        RegressionModel("TE", 0.0, (1.0,), ("PD", "T1"))


def test_evaluate_arithmetic():
    m = RegressionModel("TE", 2.0, (0.0,), ("PD",))
    rep = evaluate(m, [[0.0], [0.0]], [1.5, 2.5])
    assert rep.mse == 0.25 and rep.max_abs_error == 0.5
    with pytest.raises(DomainError):
        evaluate(m, np.empty((0, 1)), [])


@pytest.mark.parametrize("seed", range(5))
def test_noise_level_recovered(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((100, 2))
    sigma = 0.3
    y = 3 + x @ [0.6, -0.4] + sigma * rng.standard_normal(100)
    rep = evaluate(ols_fit(x, y), x, y)
    assert 0.5 * sigma ** 2 <= rep.mse <= 2 * sigma ** 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 10))
def test_matches_pinv_oracle(seed, n):
    rng = np.random.default_rng(seed)
    x = well_posed(rng, n)
    y = rng.standard_normal(n) * 2 + 3
    m = ols_fit(x, y)
    np.testing.assert_allclose([m.intercept, *m.coefficients], pinv_oracle(x, y), rtol=1e-6, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 10), st.floats(-50, 50),
       st.floats(0.1, 20) | st.floats(-20, -0.1))
def test_invariants(seed, n, c, s):
    rng = np.random.default_rng(seed)
    x = well_posed(rng, n)
    y = rng.standard_normal(n)
    m = ols_fit(x, y)
    resid = y - predict(m, x)
    assert abs(resid.sum()) < 1e-8
    assert np.abs(x.T @ resid).max() < 1e-8
    shifted = ols_fit(x, y + c)
    assert shifted.intercept == pytest.approx(m.intercept + c, abs=1e-8)
    np.testing.assert_allclose(shifted.coefficients, m.coefficients, atol=1e-8)
    xs = x.copy()
    xs[:, 0] *= s
    scaled = ols_fit(xs, y)
    assert scaled.coefficients[0] == pytest.approx(m.coefficients[0] / s, abs=1e-8)
    np.testing.assert_allclose(predict(scaled, xs), predict(m, x), atol=1e-8)


def test_leave_one_out_by_hand(rng):
    x = rng.standard_normal((6, 1))
    y = rng.standard_normal(6)
    rep = leave_one_out(x, y, labels=range(6))
    for i in range(6):
        keep = np.arange(6) != i
        beta = pinv_oracle(x[keep], y[keep])
        assert rep.predicted[i] == pytest.approx(beta[0] + beta[1] * x[i, 0], abs=1e-10)


def test_model_and_report_files(tmp_path):
    m = ols_fit([0.0, 1.0, 2.0], [1.0, 2.0, 4.0], "TisE", ("PD",))
    save_model(tmp_path / "m.json", m)
    assert load_model(tmp_path / "m.json") == m
    rep = evaluate(m, [[0.0], [1.0], [2.0]], [1.0, 2.0, 4.0], labels=(0, 1, 2))
    write_report_csv(tmp_path / "r.csv", rep)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "timestep,actual,predicted,absolute_error" and len(lines) == 4
