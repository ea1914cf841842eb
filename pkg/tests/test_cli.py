import csv
import json

import numpy as np
import pytest

from prtree.cli import main
from prtree.data import load_csv
from prtree.tree import PRTree


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 2))
    y = 2.0 * X[:, 0] - X[:, 1] + 0.3 * rng.normal(size=80)
    path = tmp_path / "train.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "y"])
        for row, t in zip(X, y):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(t))])
    return path


def test_fit_writes_model(tmp_path, data_csv):
    out = tmp_path / "model.json"
    rc = main(["fit", "--model", "tree", "--data", str(data_csv), "--target", "y",
               "--sigma", "0", "--out", str(out)])
    assert rc == 0
    obj = json.loads(out.read_text())
    assert "nodes" in obj


def test_fit_predict_roundtrip(tmp_path, data_csv):
    model_path = tmp_path / "model.json"
    pred_path = tmp_path / "preds.csv"
    assert main(["fit", "--data", str(data_csv), "--target", "y", "--seed", "3",
                 "--out", str(model_path)]) == 0
    assert main(["predict", "--model-file", str(model_path), "--data", str(data_csv),
                 "--target", "y", "--out", str(pred_path)]) == 0
    d = load_csv(data_csv, "y")
    model = PRTree.from_json(model_path.read_text())
    expected = model.predict(d.features)
    rows = list(csv.reader(open(pred_path)))
    assert rows[0] == ["row", "prediction"]
    got = np.array([float(r[1]) for r in rows[1:]])
    assert np.array_equal(got, expected)  # repr round-trips float64 exactly


def test_cv_writes_ten_rows(tmp_path, data_csv):
    out = tmp_path / "cv.csv"
    rc = main(["cv", "--model", "tree", "--data", str(data_csv), "--target", "y",
               "--seed", "7", "--sigma", "0", "--out", str(out)])
    assert rc == 0
    rows = list(csv.reader(open(out)))
    assert len(rows) == 11  # header + one row per fold
    assert {r[1] for r in rows[1:]} == {"tree"}


def test_biasvar_sweep(tmp_path, data_csv):
    out = tmp_path / "bv.csv"
    rc = main(["biasvar", "--model", "rf", "--data", str(data_csv), "--target", "y",
               "--trees", "1,5", "--trials", "3", "--sigma", "0", "--seed", "1",
               "--out", str(out)])
    assert rc == 0
    rows = list(csv.reader(open(out)))
    assert len(rows) == 3
    assert [r[1] for r in rows[1:]] == ["1", "5"]


def test_byte_identical_reruns(tmp_path, data_csv):
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        assert main(["cv", "--model", "tree", "--data", str(data_csv), "--target", "y",
                     "--seed", "5", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_and_flag_precedence(tmp_path, data_csv):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "gbt", "trees": 2, "sigma": "0", "seed": 4}))
    out = tmp_path / "model.json"
    rc = main(["fit", "--data", str(data_csv), "--target", "y", "--config", str(cfg),
               "--out", str(out)])
    assert rc == 0
    assert json.loads(out.read_text())["kind"] == "gbt"
    # flag overrides config
    rc = main(["fit", "--data", str(data_csv), "--target", "y", "--config", str(cfg),
               "--model", "tree", "--out", str(out)])
    assert rc == 0
    assert "kind" not in json.loads(out.read_text())


def test_validation_errors_exit_1(tmp_path, data_csv):
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--target", "y"]) == 1
    assert main(["fit", "--data", str(data_csv), "--target", "nope"]) == 1
    assert main(["cv", "--data", str(data_csv), "--target", "y", "--model", "tree",
                 "--sigma", "-1"]) == 1
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text("{not json")
    assert main(["fit", "--data", str(data_csv), "--target", "y",
                 "--config", str(bad_cfg)]) == 1
    bad_cfg.write_text(json.dumps({"mystery_knob": 1}))
    assert main(["fit", "--data", str(data_csv), "--target", "y",
                 "--config", str(bad_cfg)]) == 1


def test_missing_data_flag():
    assert main(["fit", "--target", "y"]) == 1


def test_pbart_cli_fit(tmp_path, data_csv):
    out = tmp_path / "chain.json"
    rc = main(["fit", "--model", "pbart", "--data", str(data_csv), "--target", "y",
               "--trees", "2", "--iters", "6", "--burn", "2", "--sigma", "0.5",
               "--seed", "2", "--out", str(out)])
    assert rc == 0
    obj = json.loads(out.read_text())
    assert obj["kind"] == "pbart"
    assert len(obj["snapshots"]) == 4
