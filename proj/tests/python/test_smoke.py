import numpy as np
import pytest

import fino

TINY = "epochs = 2\nbatch_size = 2\nwidths = 4,8,12,16\n"


def test_generate_pair_shapes_and_ranges():
    p = fino.generate_pair(size=64, index=3, seed=1)
    assert p["image_a"].shape == (3, 64, 64)
    assert p["mask"].shape == (1, 64, 64)
    assert set(np.unique(p["mask"])) <= {0.0, 1.0}
    assert 0.0 <= p["image_b"].min() and p["image_b"].max() <= 1.0
    again = fino.generate_pair(size=64, index=3, seed=1)
    np.testing.assert_array_equal(p["image_a"], again["image_a"])


def test_metrics_match_numpy_counts():
    rng = np.random.default_rng(0)
    pred = (rng.random((16, 16)) < 0.3).astype(float)
    gt = (rng.random((16, 16)) < 0.4).astype(float)
    r = fino.confusion(pred, gt)
    assert r["tp"] == int(((pred == 1) & (gt == 1)).sum())
    assert r["fp"] == int(((pred == 1) & (gt == 0)).sum())
    assert r["fn"] == int(((pred == 0) & (gt == 1)).sum())
    assert r["f1"] == pytest.approx(2 * r["iou"] / (1 + r["iou"]), abs=1e-12)
    assert fino.metrics(0, 0, 0, 10)["f1"] == 1.0


def test_poly_lr_and_config():
    assert fino.poly_lr(0, 100) == 0.001
    assert fino.poly_lr(100, 100) == 0.0
    with pytest.raises(ValueError):
        fino.poly_lr(101, 100)
    text = fino.canonical_config("lambda = 0.2\n")
    assert "lambda = 0.2" in text
    assert fino.canonical_config(text) == text
    with pytest.raises(ValueError, match="bogus"):
        fino.canonical_config("bogus = 1")


def test_train_evaluate_predict_roundtrip(tmp_path):
    data = tmp_path / "data"
    fino.write_dataset(str(data), count=2, size=64, seed=4)
    ckpt = tmp_path / "m.ckpt"
    log = fino.train(str(data), TINY, str(ckpt))
    assert [s["step"] for s in log] == [0, 1]
    assert all(np.isfinite(s["total"]) for s in log)
    assert fino.train(str(data), TINY) == log

    report = fino.evaluate(str(ckpt), str(data))
    assert report["tp"] + report["fp"] + report["fn"] + report["tn"] == 2 * 64 * 64

    p = fino.generate_pair(size=64, index=0, seed=4)
    prob = fino.predict(str(ckpt), p["image_a"], p["image_b"])
    assert prob.shape == (64, 64)
    assert ((prob > 0) & (prob < 1)).all()


def test_gradcheck_head_passes():
    assert "full" in fino.gradcheck_modules
    cases = fino.gradcheck("head")
    assert cases and all(c["passed"] for c in cases)
    with pytest.raises(ValueError):
        fino.gradcheck("nope")
