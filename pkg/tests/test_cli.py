import io
import json

import numpy as np
import pytest

from bcscf.cli import main
from bcscf.dataset import parse_movielens
from bcscf.modelio import load_model

FAST = ["--rank", "4", "--lambda-u", "1", "--max-iters", "10"]


def run(argv):
    buf = io.StringIO()
    code = main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


def test_inspect(small_file):
    code, text = run(["inspect", "--dataset", small_file])
    ds = parse_movielens(small_file)
    assert code == 0
    assert f"users:    {ds.num_users}" in text and f"ratings:  {len(ds)}" in text


def test_empty_file_names_file(tmp_path, capsys):
    p = tmp_path / "empty.data"
    p.write_text("")
    code, _ = run(["inspect", "--dataset", p])
    assert code == 3
    assert "empty.data" in capsys.readouterr().err


def test_bad_line_exit(tmp_path, capsys):
    p = tmp_path / "bad.data"
    p.write_text("1\t2\t3\t4\n1\tx\t3\t4\n")
    assert run(["inspect", "--dataset", p])[0] == 3
    assert "bad.data:2" in capsys.readouterr().err


def test_missing_file_is_io_error(tmp_path):
    assert run(["inspect", "--dataset", tmp_path / "nope"])[0] == 5


def test_train_then_predict_matches_library(small_file, tmp_path):
    model_path = tmp_path / "m.bin"
    report = tmp_path / "fit.json"
    code, text = run(["train", "--dataset", small_file, *FAST, "--model", model_path,
                      "--out", report])
    assert code == 0 and "iterations:   10" in text
    model = load_model(model_path)
    m, n = model.index_of(3, 5)
    expected = f"{model.predict_many([m], [n])[0]:.4f}"
    code, text = run(["predict", "--model", model_path, "--user", 3, "--item", 5])
    assert code == 0 and text.strip() == expected
    assert len(json.loads(report.read_text())["objective_trace"]) == 10


def test_train_dense_has_no_zeros(small_file, tmp_path):
    code, text = run(["train", "--dataset", small_file, *FAST, "--variant", "dense",
                      "--model", tmp_path / "m.bin"])
    assert code == 0 and "v_sparsity:   0.0000" in text


def test_zero_iterations_not_converged(small_file, tmp_path):
    code, text = run(["train", "--dataset", small_file, "--rank", "3", "--max-iters", "0",
                      "--model", tmp_path / "m.bin"])
    assert code == 0 and "converged:    false" in text


def test_unknown_id_exit(small_file, tmp_path, capsys):
    model_path = tmp_path / "m.bin"
    run(["train", "--dataset", small_file, *FAST, "--model", model_path])
    assert run(["predict", "--model", model_path, "--user", 99999, "--item", 1])[0] == 6
    assert "99999" in capsys.readouterr().err


def test_corrupt_model_exit(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"junk")
    assert run(["predict", "--model", p, "--user", 1, "--item", 1])[0] == 3


def test_folds_one_rejected(small_file):
    assert run(["cross-validate", "--dataset", small_file, *FAST, "--folds", 1])[0] == 2


@pytest.mark.parametrize("k", [3, 10])
def test_fold_counts_accepted(small_file, tmp_path, k):
    out = tmp_path / "r.json"
    code, text = run(["cross-validate", "--dataset", small_file, *FAST, "--folds", k,
                      "--out", out])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["n_folds"] == k and len(report["per_fold"]) == k
    assert np.isclose(report["mean_mae"], np.mean([f["mae"] for f in report["per_fold"]]))


def test_config_file_precedence(small_file, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"rank": 3, "lambda-u": 2.0, "max_iters": 4}))
    out = tmp_path / "r.json"
    code, _ = run(["cross-validate", "--dataset", small_file, "--config", cfg,
                   "--rank", 2, "--folds", 2, "--out", out])
    assert code == 0
    conf = json.loads(out.read_text())["config"]
    assert conf["rank"] == 2 and conf["lambda_u"] == 2.0 and conf["max_outer_iters"] == 4


def test_config_unknown_key(small_file, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["cross-validate", "--dataset", small_file, "--config", cfg])[0] == 2


def test_lambda_u_default_for_1m(tmp_path):
    p = tmp_path / "ratings.dat"
    p.write_text("\n".join(f"{u}::{i}::{1 + (u * i) % 5}::97830{u}{i}"
                           for u in range(1, 7) for i in range(1, 6)) + "\n")
    out = tmp_path / "r.json"
    code, _ = run(["cross-validate", "--dataset", p, "--rank", 2, "--max-iters", 3,
                   "--folds", 2, "--out", out])
    assert code == 0
    assert json.loads(out.read_text())["config"]["lambda_u"] == 1e4


def test_compare_reports_identical_folds(small_file, tmp_path):
    code, text = run(["compare", "--dataset", small_file, *FAST, "--folds", 3])
    assert code == 0
    assert "folds identical: True" in text
    assert "SGD (reference)" in text and "dense (measured)" in text


def test_module_entry_point(small_file):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "bcscf", "inspect", "--dataset", str(small_file)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "users:" in res.stdout
