import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize
from scipy.stats import binom

from robustgp.data import (
    CORRUPTIONS,
    CorruptionSpec,
    corrupt,
    friedman1,
    gen_function,
    hartmann6,
    load_csv,
    load_inputs,
    save_csv,
)
from robustgp.errors import InputError, ParseError
from robustgp.kernels import Dataset


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_minimal(tmp_path):
    ds = load_csv(write(tmp_path, "x1,y\n0.5,1.25\n"))
    assert (ds.n, ds.d) == (1, 1) and ds.y.tolist() == [1.25]


@pytest.mark.parametrize(
    "text,row,column",
    [
        ("x1,y\n0.5,NaN\n", 1, "y"),
        ("x1,y\n0.5,inf\n", 1, "y"),
        ("x1,y\n0.5,1\n0.7,abc\n", 2, "y"),
        ("x1,x2,y\n1,2\n", 1, "y"),
        ("x1,z\n1,2\n", 0, "z"),
        ("x2,y\n1,2\n", 0, "x2"),
    ],
)
def test_parse_errors_have_coordinates(tmp_path, text, row, column):
    with pytest.raises(ParseError) as e:
        load_csv(write(tmp_path, text))
    assert (e.value.row, e.value.column) == (row, column)


def test_empty_and_missing(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, ""))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "x1,y\n"))
    with pytest.raises(InputError):
        load_csv(tmp_path / "absent.csv")


def test_load_inputs_optional_y(tmp_path):
    X, y = load_inputs(write(tmp_path, "x1,x2\n1,2\n3,4\n"))
    assert X.shape == (2, 2) and y is None
    X, y = load_inputs(write(tmp_path, "x1,y\n1,2\n"))
    assert y.tolist() == [2.0]


@settings(max_examples=40, deadline=None)
@given(
    X=arrays(np.float64, (5, 2), elements=st.floats(-1e6, 1e6)),
    y=arrays(np.float64, 5, elements=st.floats(-1e6, 1e6)),
)
def test_csv_roundtrip(tmp_path_factory, X, y):
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    save_csv(p, Dataset(X, y))
    back = load_csv(p)
    assert np.array_equal(back.X, X) and np.array_equal(back.y, y)
    assert b"\r" not in p.read_bytes()


def test_friedman_center():
    x = np.full((1, 10), 0.5)
    assert friedman1(x)[0] == pytest.approx(10 * math.sin(math.pi / 4) + 0 + 5 + 2.5, rel=1e-15)


def test_hartmann_minimum():
    res = minimize(lambda x: hartmann6(x[None])[0], [0.2, 0.15, 0.48, 0.28, 0.31, 0.66],
                   bounds=[(0, 1)] * 6, method="L-BFGS-B", options={"ftol": 1e-14, "gtol": 1e-10})
    assert res.fun == pytest.approx(-3.32237, abs=1e-4)
    assert hartmann6(np.array([[0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573]]))[0] == pytest.approx(
        -3.3224, abs=1e-4)


@pytest.mark.parametrize("name,d", [("sine", 1), ("neal", 1), ("friedman5", 5), ("friedman10", 10), ("hartmann6", 6)])
def test_gen_function_shapes_and_noise(name, d):
    ds, latent = gen_function(name, 30, seed=4)
    assert ds.X.shape == (30, d) and np.all((ds.X >= 0) & (ds.X <= 1))
    assert np.array_equal(ds.y, latent)
    noisy, lat2 = gen_function(name, 30, noise_sigma=0.1, seed=4)
    assert np.array_equal(lat2, latent) and not np.array_equal(noisy.y, latent)


def test_friedman10_extra_inputs_inert():
    ds, latent = gen_function("friedman10", 20, seed=1)
    assert np.allclose(latent, friedman1(ds.X[:, :5]))


def test_gen_function_errors():
    with pytest.raises(InputError):
        gen_function("rosenbrock", 5)
    with pytest.raises(InputError):
        gen_function("hartmann6", 5, d=3)


def _base(n=1000, seed=0):
    return gen_function("sine", n, noise_sigma=0.05, seed=seed)


def test_corrupt_examples():
    ds, latent = _base(50)
    out, idx = corrupt(ds, latent, CorruptionSpec("constant", 0.0, {"value": 100.0}))
    assert out is ds and idx.size == 0
    out, idx = corrupt(ds, latent, CorruptionSpec("constant", 1.0, {"value": 100.0}))
    assert np.all(out.y == 100.0) and idx.tolist() == list(range(50))
    with pytest.raises(InputError):
        CorruptionSpec("uniform_in_range", 1.5)
    with pytest.raises(InputError):
        CorruptionSpec("gamma", 0.1)


def test_corrupt_count_binomial():
    lo, hi = binom.interval(0.999, 1000, 0.1)
    ds, latent = _base()
    for seed in range(5):
        _, idx = corrupt(ds, latent, CorruptionSpec("uniform_in_range", 0.1, seed=seed))
        assert lo <= idx.size <= hi


@pytest.mark.parametrize("kind", [k for k in CORRUPTIONS if k != "none"])
def test_corruption_kinds(kind):
    ds, latent = _base(400)
    out, idx = corrupt(ds, latent, CorruptionSpec(kind, 0.2, seed=3))
    untouched = np.setdiff1d(np.arange(400), idx)
    assert np.array_equal(out.y[untouched], ds.y[untouched])
    assert out.meta["corrupted"] == idx.tolist()
    shift = out.y[idx] - latent[idx]
    if kind == "asymmetric":
        assert np.all(shift < 0)
    if kind == "uniform_in_range":
        assert np.all((out.y[idx] >= ds.y.min()) & (out.y[idx] <= ds.y.max()))
    if kind == "focused":
        spread = np.ptp(out.X[idx, 0])
        assert spread < 0.5


def test_constant_value_in_std():
    ds, latent = _base(100)
    out, idx = corrupt(ds, latent, CorruptionSpec("constant", 0.2, {"value_in_std": 10}, seed=1))
    assert np.allclose(out.y[idx], 10 * np.std(ds.y))


def test_spec_roundtrip():
    spec = CorruptionSpec("student_t", 0.1, {"df": 3}, seed=7)
    assert CorruptionSpec.from_dict(spec.to_dict()) == spec
