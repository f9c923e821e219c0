import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from bamforge import BbpMemory, BsraMemory, End


@pytest.fixture(scope="module")
def rows():
    rng = np.random.default_rng(0)
    X = np.sign(rng.normal(size=(10, 32)))
    Y = np.sign(rng.normal(size=(10, 32)))
    X[X == 0] = 1.0
    Y[Y == 0] = 1.0
    return X, Y


def test_get_params_round_trip():
    est = BsraMemory(epochs=7, seed=3)
    params = est.get_params()
    assert params["epochs"] == 7 and params["seed"] == 3
    clone = BsraMemory(**params)
    assert clone.get_params() == params


def test_bbp_get_set_params():
    est = BbpMemory(strategy="ORTH", lr=0.5)
    est.set_params(lr=0.25)
    assert est.get_params()["lr"] == 0.25
    assert est.get_params()["strategy"] == "ORTH"


def test_sra_fit_predict_recall(rows):
    X, Y = rows
    est = BsraMemory(epochs=60, seed=1).fit(X, Y)
    assert np.array_equal(est.predict(X), Y)
    assert np.array_equal(est.predict(Y, end=End.B), X)


def test_bbp_fit_predict_shapes(rows):
    X, Y = rows
    est = BbpMemory(strategy="BP", lr=1e-2, epochs=40, seed=2).fit(X, Y)
    pred = est.predict(X)
    assert pred.shape == Y.shape
    assert set(np.unique(pred)) <= {-1.0, 1.0}
    assert est.model_.depth >= 2
    assert len(est.history_) == 40


def test_fit_returns_self_and_determinism(rows):
    X, Y = rows
    a = BsraMemory(epochs=20, seed=5)
    assert a.fit(X, Y) is a
    b = BsraMemory(epochs=20, seed=5).fit(X, Y)
    for wa, wb in zip(a.model_.weights, b.model_.weights):
        assert np.array_equal(wa, wb)


def test_predict_before_fit_raises(rows):
    X, _ = rows
    with pytest.raises(NotFittedError):
        BsraMemory().predict(X)
    with pytest.raises(NotFittedError):
        BbpMemory().predict(X)


def test_mismatched_rows_rejected(rows):
    X, Y = rows
    with pytest.raises(ValueError, match="row"):
        BsraMemory().fit(X, Y[:-1])


def test_hidden_dims_respected(rows):
    X, Y = rows
    est = BsraMemory(hidden_dims=[16], epochs=5,
                     stop_on_perfect_recall=False).fit(X, Y)
    assert list(est.model_.layer_dims) == [32, 16, 32]
