import json

import numpy as np
import pytest

from convgp import cli
from convgp.data import RawTable, read_csv, table_to_csv
from convgp.errors import NotPositiveDefinite

SYNTH = """\
[synth]
outputs = 2
points = 30
test_fraction = 0.2
seed = 3
[engine]
name = dtcvar
inducing = 8
[optimizer]
max_iters = 30
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "run.ini").write_text(SYNTH)
    return tmp_path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_synth_is_byte_identical(workdir):
    cfg = workdir / "run.ini"
    for tag in "ab":
        assert run("synth", "--config", cfg, "--out", workdir / f"{tag}.csv",
                   "--test-out", workdir / f"{tag}_test.csv") == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    assert (workdir / "a_test.csv").read_bytes() == (workdir / "b_test.csv").read_bytes()
    assert len(read_csv(workdir / "a.csv")) == 48
    assert run("synth", "--config", cfg, "--out", workdir / "c.csv", "--test-out",
               workdir / "c_test.csv", "--seed", 4) == 0
    assert (workdir / "a.csv").read_bytes() != (workdir / "c.csv").read_bytes()


@pytest.mark.parametrize("engine", ["dtcvar", "pitc", "exact", "icm-baseline", "independent-gp"])
def test_fit_evaluate_predict(workdir, engine):
    cfg = workdir / "run.ini"
    text = SYNTH + "[kernel]\nlatents = se\n" if engine in ("pitc", "icm-baseline") else SYNTH
    cfg.write_text(text)
    assert run("synth", "--config", cfg, "--out", workdir / "tr.csv",
               "--test-out", workdir / "te.csv") == 0
    model = workdir / "m.txt"
    assert run("fit", "--config", cfg, "--data", workdir / "tr.csv", "--model", model,
               "--engine", engine) == 0
    assert run("evaluate", "--config", cfg, "--data", workdir / "te.csv", "--model", model,
               "--out", workdir / "met.json") == 0
    met = json.loads((workdir / "met.json").read_text())
    assert set(met) == {"overall", "per_output", "standardized", "engine"}
    assert met["engine"] == engine and met["standardized"] is False
    assert met["overall"]["smse"] >= 0 and len(met["per_output"]) == 2
    assert run("predict", "--config", cfg, "--data", workdir / "te.csv", "--model", model,
               "--out", workdir / "p.csv") == 0
    lines = (workdir / "p.csv").read_text().splitlines()
    assert lines[0] == "output_id,x_0,mean,variance"
    assert len(lines) == 1 + 12
    assert all(float(r.split(",")[3]) >= 0 for r in lines[1:])


def test_fit_then_predict_interpolates(tmp_path):
    x = np.linspace(-1, 1, 15)
    t = RawTable(np.repeat([0, 1], 15), {"x_0": np.tile(x, 2)},
                 np.concatenate([np.sin(2 * x), np.cos(2 * x)]))
    table_to_csv(t, tmp_path / "tr.csv")
    cfg = tmp_path / "c.ini"
    cfg.write_text("[kernel]\nlatents = se, se\n[optimizer]\nmax_iters = 200\n")
    assert run("fit", "--config", cfg, "--data", tmp_path / "tr.csv", "--model",
               tmp_path / "m.txt", "--engine", "exact") == 0
    assert run("predict", "--config", cfg, "--data", tmp_path / "tr.csv", "--model",
               tmp_path / "m.txt", "--out", tmp_path / "p.csv") == 0
    pred = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(pred[:, 2], t.target, atol=1e-2)


def test_categorical_pipeline(tmp_path, rng):
    n = 40
    t = RawTable(rng.integers(0, 2, n), {"year": rng.choice(["1985", "1986", "1987"], n),
                                         "x": rng.normal(size=n)}, rng.normal(size=n))
    table_to_csv(t, tmp_path / "tr.csv")
    cfg = tmp_path / "c.ini"
    cfg.write_text("[data]\ncategorical = year\naggregate = true\n"
                   "[engine]\nname = exact\n[optimizer]\nmax_iters = 5\n")
    assert run("fit", "--config", cfg, "--data", tmp_path / "tr.csv",
               "--model", tmp_path / "m.txt") == 0
    assert run("predict", "--config", cfg, "--data", tmp_path / "tr.csv", "--model",
               tmp_path / "m.txt", "--out", tmp_path / "p.csv") == 0
    header = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert header == "output_id,year=1985,year=1986,year=1987,x,mean,variance"
    # an unseen level is a data error
    bad = RawTable([0], {"year": np.array(["1990"]), "x": [0.0]})
    table_to_csv(bad, tmp_path / "bad.csv")
    assert run("predict", "--config", cfg, "--data", tmp_path / "bad.csv", "--model",
               tmp_path / "m.txt", "--out", tmp_path / "p2.csv") == 3


def test_config_errors(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[engine]\ncolour = red\n")
    assert run("synth", "--config", cfg, "--out", tmp_path / "x.csv") == 2
    cfg.write_text("[extras]\na = 1\n")
    assert run("synth", "--config", cfg, "--out", tmp_path / "x.csv") == 2
    cfg.write_text("[engine]\ninducing = many\n")
    assert run("synth", "--config", cfg, "--out", tmp_path / "x.csv") == 2
    assert run("synth") == 2
    assert run("bogus-command") == 2
    assert run("gradcheck", "--engine", "nonsense") == 2


def test_data_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("output_id,x_0\n0,1.0\n")
    assert run("fit", "--data", tmp_path / "bad.csv", "--model", tmp_path / "m.txt") == 3
    assert run("fit", "--data", tmp_path / "absent.csv", "--model", tmp_path / "m.txt") == 3
    assert run("predict", "--data", tmp_path / "bad.csv", "--model", tmp_path / "absent.txt",
               "--out", tmp_path / "p.csv") == 3


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise NotPositiveDefinite("forced")

    monkeypatch.setattr(cli, "fit_model", broken)
    (tmp_path / "tr.csv").write_text("output_id,x_0,y\n0,0.0,1.0\n0,1.0,2.0\n")
    assert run("fit", "--data", tmp_path / "tr.csv", "--model", tmp_path / "m.txt") == 4


def test_gradcheck_command(capsys, monkeypatch):
    assert run("gradcheck", "--instances", 2) == 0
    out = capsys.readouterr().out
    assert out.count(": ok") == 4

    class Failing:
        ok = False
        worst = ("sensitivity[d=0,q=0]", 1.0, 1.0)

    monkeypatch.setattr(cli, "fd_check", lambda *a, **k: Failing())
    assert run("gradcheck", "--instances", 1, "--engine", "dtcvar") == 4


def test_oracle_check_command(capsys):
    assert run("oracle-check", "--draws", 1) == 0
    assert capsys.readouterr().out.count(": ok") == 14
