import json

import numpy as np
import pytest

import hbl


def test_kron_and_vec():
    a = np.arange(6.0).reshape(2, 3)
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(hbl.kron(a, b), np.kron(a, b))
    np.testing.assert_array_equal(hbl.vec_row(a), a.reshape(-1))
    np.testing.assert_array_equal(hbl.unvec_row(hbl.vec_row(a), 2, 3), a)


def test_scalar_step_and_bound():
    assert hbl.lambda_step(0.5, 0.1, 2) == pytest.approx(0.5375, rel=1e-15)
    assert hbl.max_step_size(2, 1.0) == pytest.approx(0.5)
    values, report = hbl.run_scalar_dynamics(np.array([0.5, 0.3]), 0.4, 2, 200)
    assert values.shape == (201, 2)
    assert report["converged_at"] is not None
    assert np.all(np.diff(values, axis=0) >= 0)


def test_uniform_hessian_ratio():
    dims = hbl.NetworkDims([6, 8, 8, 5], 3)
    w = hbl.balanced_init(dims, np.array([0.6**3] * 3 + [0.0] * 2), seed=4)
    data = hbl.whitened_data(dims, w)
    h = hbl.assemble_hessian(w, data)
    assert h["h_total"].shape == (dims.parameter_count,) * 2
    eig = np.sort(np.linalg.eigvalsh(h["h_o"]))[::-1]
    assert eig[0] / 0.6**4 == pytest.approx(3.0, rel=1e-10)
    pred = hbl.predict_spectrum(np.array([0.6] * 3), dims)
    assert pred["dominant_count"] == 9
    assert pred["bulk_count"] == 3 * 2 + 3 * 2


def test_run_experiment_and_errors():
    cfg = {
        "name": "py_smoke",
        "network": {"depth": 2, "input": 5, "hidden": 6, "output": 4, "rank": 2},
        "init": {"mode": "usi", "mu": 0.6},
        "train": {"eta_fraction": 0.8, "steps": 40},
    }
    out = hbl.run_experiment(json.dumps(cfg))
    assert out["passed"]
    assert out["summary"]["final"]["counts"]["dominant"] == 4
    assert len(out["loss_curve"]) == 41

    cfg["train"]["eta"] = 10.0
    with pytest.raises(hbl.ConfigError):
        hbl.run_experiment(json.dumps(cfg))
    with pytest.raises(hbl.Error):
        hbl.predict_spectrum(np.array([0.5] * 6), hbl.NetworkDims([5, 6, 4], 2))


def test_parse_config_defaults():
    parsed = hbl.parse_config('{"name": "x", "network": {"widths": [3, 4, 2], "rank": 1}}')
    assert parsed["network"]["widths"] == [3, 4, 2]
    assert "train" in parsed
