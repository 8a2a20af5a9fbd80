import json

import numpy as np
import pytest

from robustgp.data import gen_function
from robustgp.errors import InputError
from robustgp.gp import compute_state, posterior_predict
from robustgp.model import RobustGPModel
from robustgp.pursuit import Schedule, SizePrior, forward_pursuit


def test_fit_predict_roundtrip(tmp_path):
    ds, latent = gen_function("sine", 30, noise_sigma=0.05, seed=2)
    model = RobustGPModel.fit(ds)
    path = tmp_path / "m.json"
    model.save(path)
    back = RobustGPModel.load(path)
    Xs = np.linspace(0, 1, 7)[:, None]
    a, b = model.predict(Xs), back.predict(Xs)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.variance, b.variance)
    assert np.max(np.abs(model.predict(ds.X).mean - latent)) < 0.2
    d = json.loads(path.read_text())
    for key in ("library_version", "kernel", "hyperparameters", "rho", "support", "standardization"):
        assert key in d


def test_predictions_are_destandardized():
    ds, _ = gen_function("sine", 25, noise_sigma=0.05, seed=1)
    shifted = ds.with_y(100.0 + 50.0 * ds.y)
    m1 = RobustGPModel.fit(ds)
    m2 = RobustGPModel.fit(shifted)
    Xs = np.array([[0.3], [0.8]])
    assert np.allclose(m2.predict(Xs).mean, 100 + 50 * m1.predict(Xs).mean, rtol=1e-4)
    assert np.allclose(m2.predict(Xs).variance, 2500 * m1.predict(Xs).variance, rtol=1e-3)


def test_fixed_rho_downweights_point():
    ds, _ = gen_function("sine", 20, noise_sigma=0.05, seed=3)
    y = ds.y.copy()
    y[5] += 5.0
    ds = ds.with_y(y)
    rho = np.zeros(20)
    rho[5] = 1e3
    plain = RobustGPModel.fit(ds)
    robust = RobustGPModel.fit(ds, rho=rho)
    x5 = ds.X[5:6]
    assert abs(robust.predict(x5).mean[0] - np.sin(2 * np.pi * x5[0, 0])) < abs(
        plain.predict(x5).mean[0] - np.sin(2 * np.pi * x5[0, 0]))
    assert list(robust.support) == [5]


def test_model_from_pursuit_matches_state():
    ds, _ = gen_function("sine", 20, noise_sigma=0.05, seed=4)
    res = forward_pursuit(ds, schedule=Schedule((1, 1)), prior=SizePrior("uniform"))
    model = RobustGPModel.from_pursuit(ds, res)
    sel = res.selected
    z = ds.with_y(res.standardizer.transform(ds.y))
    st = compute_state(z, sel.hyper, sel.rho)
    Xs = np.array([[0.25]])
    want = res.standardizer.inverse_mean(posterior_predict(st, Xs).mean)
    assert np.allclose(model.predict(Xs).mean, want)
    assert model.nmll() == pytest.approx(sel.nmll)


def test_bad_rho_length():
    ds, _ = gen_function("sine", 5, seed=0)
    with pytest.raises(InputError):
        RobustGPModel.fit(ds, rho=np.zeros(4))
