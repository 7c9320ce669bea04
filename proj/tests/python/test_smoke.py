"""Smoke tests for the python module built from the C++ core."""

import math

import numpy as np
import pytest

import vand

SMOKE_CONFIG = {
    "mode": "vand",
    "layers": 2,
    "hidden": 8,
    "batch_size": 6,
    "epochs": 4,
    "eval_every": 0,
    "seed": 1,
    "task": "periodic",
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("vand_smoke")
    train = str(root / "train.jsonl")
    test = str(root / "test.jsonl")
    vand.gen_data("periodic", n=4, steps=120, seed=3, out=train)
    vand.gen_data("periodic", n=2, steps=120, seed=4, out=test)
    return {"root": root, "train": train, "test": test}


def test_generate_shapes():
    trajs = vand.generate("periodic", n=2, steps=120, seed=7)
    assert len(trajs) == 2
    x = trajs[0]["x"]
    y = trajs[0]["y"]
    assert isinstance(x, np.ndarray)
    assert x.shape == (120, 2)
    assert y.shape == (120, 2)
    assert np.isfinite(x).all()

    again = vand.generate("periodic", n=2, steps=120, seed=7)
    np.testing.assert_array_equal(x, again[0]["x"])


def test_generate_rejects_bad_task():
    with pytest.raises(vand.VandError):
        vand.generate("robot", n=1, steps=120, seed=0)


def test_load_dataset_round_trip(workspace):
    trajs = vand.load_dataset(workspace["train"])
    assert len(trajs) == 4
    assert trajs[0]["x"].shape == (120, 2)


def test_train_eval_analyze_rollout(workspace):
    model_path = str(workspace["root"] / "model.json")
    result = vand.train(SMOKE_CONFIG, workspace["train"], workspace["test"], model_path)
    assert result["diverged"] is False
    assert math.isfinite(result["mse_norm"])
    assert len(result["nll"]) == SMOKE_CONFIG["epochs"]

    mse_norm, mse_raw = vand.evaluate(model_path, workspace["test"])
    assert mse_norm == pytest.approx(result["mse_norm"])
    assert mse_raw >= 0.0

    layers = vand.analyze(model_path)
    assert len(layers) == SMOKE_CONFIG["layers"]
    for layer in layers:
        sigma = np.asarray(layer["sigma"])
        beta = np.asarray(layer["beta"])
        assert sigma.shape == (SMOKE_CONFIG["hidden"],)
        assert (sigma > 0).all()
        assert ((beta > 0) & (beta < 1)).all()

    ro = vand.rollout(model_path, "periodic", workspace["test"], horizon=50, prefix=10)
    assert ro["recorded"] <= 50
    assert ro["states"].shape[1] == 2


def test_sweep(workspace):
    out_csv = str(workspace["root"] / "results.csv")
    cfg = dict(SMOKE_CONFIG)
    cfg["epochs"] = 2
    rows = vand.sweep(
        cfg,
        ["vanilla", "vand"],
        [0, 1],
        workspace["train"],
        workspace["test"],
        out_csv,
        workers=2,
    )
    assert len(rows) == 4
    assert {r["mode"] for r in rows} == {"vanilla", "vand"}
    header = open(out_csv).readline().strip()
    assert header == "task,mode,seed,mse_norm,mse_raw,diverged,wall_s"
