import csv
import json

import numpy as np
import pytest

from ctmboost.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_OK, main
from ctmboost.data import read_table, write_table
from ctmboost.model import deserialize
from ctmboost.sim import simulate_hvc


def config(**over):
    doc = {
        "version": 1,
        "response": "y",
        "link": "probit",
        "loss": "bin",
        "max_iterations": 30,
        "step_size": 0.3,
        "grid": {"n": 25},
        "response_basis": {"kind": "bspline", "degree": 3, "num_interior_knots": 6},
        "learners": [
            {"covariate": "x1", "basis": {"kind": "bspline", "degree": 3, "num_interior_knots": 6,
                                          "domain": [0, 1]},
             "penalty": {"kind": "difference", "order": 2}},
            {"covariate": "x2", "basis": {"kind": "bspline", "degree": 3, "num_interior_knots": 6,
                                          "domain": [-2, 2]},
             "penalty": {"kind": "difference", "order": 2}},
        ],
    }
    doc.update(over)
    return doc


@pytest.fixture
def files(tmp_path):
    d = simulate_hvc(80, seed=1)
    data = tmp_path / "data.csv"
    write_table(data, {"y": d.y, "x1": d.column("x1"), "x2": d.column("x2")})
    new = tmp_path / "new.csv"
    write_table(new, {"x1": [0.1, 0.5, 0.9], "x2": [-1.0, 0.0, 1.0]})
    return tmp_path, data, new


def write_config(path, doc):
    path.write_text(json.dumps(doc, indent=2))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fit_predict_quantile_diagnose(files, capsys):
    tmp, data, new = files
    cfg = write_config(tmp / "cfg.json", config(resampling={"kind": "bootstrap", "replications": 3}, seed=2))
    model_path = tmp / "m.json"
    assert main(["fit", str(data), str(cfg), str(model_path)]) == EXIT_OK
    assert "selected mstop" in capsys.readouterr().out
    assert len(rows(tmp / "m.trace.csv")) == 31

    model = deserialize(model_path.read_text())
    assert main(["predict", str(model_path), str(new), "-o", str(tmp / "p.csv")]) == EXIT_OK
    t = read_table(tmp / "p.csv")
    assert t["cdf"].size == 3 * model.grid.size
    X = {"x1": np.array([0.1, 0.5, 0.9]), "x2": np.array([-1.0, 0.0, 1.0])}
    np.testing.assert_array_equal(t["cdf"], model.cdf_lattice(X, model.grid).T.ravel())

    assert main(["quantile", str(model_path), str(new), "-o", str(tmp / "q.csv"), "--taus", "0.25,0.5"]) == EXIT_OK
    q = rows(tmp / "q.csv")
    assert [r["status"] for r in q] == ["ok"] * 3
    assert float(q[0]["q_0.25"]) <= float(q[0]["q_0.5"])

    assert main(["quantile", str(model_path), str(new), "-o", str(tmp / "i.csv"), "--interval", "0.1",
                 "--tails", "clip"]) == EXIT_OK
    assert set(rows(tmp / "i.csv")[0]) == {"row", "lower_0.1", "upper_0.9", "status"}

    assert main(["diagnose", str(model_path), str(data)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "KS" in out and "rank correlation" in out
    assert len(rows(tmp / "m.residuals.csv")) == 80


def test_predict_grid_override(files):
    tmp, data, new = files
    cfg = write_config(tmp / "cfg.json", config())
    main(["fit", str(data), str(cfg), str(tmp / "m.json")])
    assert main(["predict", str(tmp / "m.json"), str(new), "-o", str(tmp / "p.csv"), "--grid", "0,1"]) == 0
    assert read_table(tmp / "p.csv")["v"].tolist() == [0.0, 1.0] * 3


def test_zero_iterations_constant_model(files):
    tmp, data, new = files
    cfg = write_config(tmp / "cfg.json", config(max_iterations=0))
    assert main(["fit", str(data), str(cfg), str(tmp / "m.json")]) == EXIT_OK
    main(["predict", str(tmp / "m.json"), str(new), "-o", str(tmp / "p.csv")])
    np.testing.assert_array_equal(read_table(tmp / "p.csv")["cdf"], 0.5)


def test_absent_column(files, capsys):
    tmp, data, _ = files
    doc = config()
    doc["learners"][0]["covariate"] = "age"
    cfg = write_config(tmp / "cfg.json", doc)
    assert main(["fit", str(data), str(cfg), str(tmp / "m.json")]) == EXIT_CONFIG
    assert "age" in capsys.readouterr().err


def test_config_parse_error_names_line(files, capsys):
    tmp, data, _ = files
    cfg = tmp / "cfg.json"
    cfg.write_text('{\n  "version": 1,\n  "response": "y"\n  "learners": []\n}\n')
    assert main(["fit", str(data), str(cfg), str(tmp / "m.json")]) == EXIT_CONFIG
    assert "line 4" in capsys.readouterr().err


def test_out_of_domain_rows(files, capsys):
    tmp, data, _ = files
    cfg = write_config(tmp / "cfg.json", config())
    main(["fit", str(data), str(cfg), str(tmp / "m.json")])
    bad = tmp / "bad.csv"
    write_table(bad, {"x1": [0.5, 3.0], "x2": [0.0, 0.0]})
    assert main(["predict", str(tmp / "m.json"), str(bad), "-o", str(tmp / "p.csv")]) == EXIT_DATA
    assert "row 2" in capsys.readouterr().err
    assert main(["predict", str(tmp / "m.json"), str(bad), "-o", str(tmp / "p.csv"), "--skip-bad"]) == EXIT_OK
    assert set(read_table(tmp / "p.csv")["row"]) == {1.0}


def test_missing_files(tmp_path):
    assert main(["predict", str(tmp_path / "none.json"), str(tmp_path / "x.csv"), "-o", "o.csv"]) == EXIT_IO


def test_simulate_writes_tables(tmp_path, capsys):
    out = tmp_path / "sim"
    args = ["simulate", "--out-dir", str(out), "--n", "50", "--replications", "2", "--noise", "0,1",
            "--max-iterations", "20", "--bootstrap", "2", "--grid-points", "3"]
    assert main(args) == EXIT_OK
    assert "p=1" in capsys.readouterr().out
    assert len(rows(out / "mad.csv")) == 4
    assert len(rows(out / "quantiles.csv")) == 4 * 9 * 3
    first = (out / "mad.csv").read_bytes()
    assert main(args) == EXIT_OK
    assert (out / "mad.csv").read_bytes() == first
