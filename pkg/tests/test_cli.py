import csv
import io
import json

import pytest

from lamicur import cli


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_catalog_lists_everything(capsys):
    code, out, _ = _run(capsys, "catalog")
    doc = json.loads(out)
    assert code == 0
    assert "product:u=v" in doc["currents"]
    assert doc["config"]["seed"] == 42
    assert doc["lamicur_version"] == cli.__version__
    assert len(doc["verify"]) == 16


def test_intersect_csv_is_reproducible(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert cli.main(["intersect", "--eps", "1e-1..1e-2", "--grid", "4", "--out", str(p)]) == 0
    rows = [list(csv.DictReader(io.StringIO(p.read_text()))) for p in paths]
    for r in rows:
        for row in r:
            row["config"] = json.loads(row["config"])
            row["config"].pop("out")
    assert rows[0] == rows[1]
    assert [r["eps"] for r in rows[0]] == ["0.1", "0.01"]
    assert rows[0][0]["lamicur_version"] == cli.__version__
    assert rows[0][0]["config"]["grid"] == "4"


def test_grid_resolution_sweep(capsys):
    code, out, _ = _run(capsys, "sweep", "intersect", "--eps", "0.1", "--grid", "3,5")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert [r["grid"] for r in rows] == ["3", "5"]
    assert all(r["max_count"] == "1" for r in rows)


def test_unknown_config_key_is_rejected(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 3\ncolour: blue\n")
    code, _, err = _run(capsys, "catalog", "--config", str(cfg))
    assert code == cli.EXIT_CONFIG
    assert "colour" in err


def test_config_file_values_and_flag_override(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 3\nquad: {rel_tol: 1e-4}\n")
    code, out, _ = _run(capsys, "catalog", "--config", str(cfg), "--seed", "9", "--quad", "max_boxes=100")
    conf = json.loads(out)["config"]
    assert code == 0
    assert conf["seed"] == 9
    assert conf["quad"] == {"rel_tol": 1e-4, "max_boxes": 100}


@pytest.mark.parametrize("argv", [["catalog", "--quad", "bogus=1"], ["catalog", "--quad", "rel_tol"],
                                  ["catalog", "--quad", "rel_tol=-1"], ["intersect", "--motion", "nope"],
                                  ["intersect", "--eps", "2.0"], ["intersect", "--grid", "0"], ["verify", "--only", "99"],
                                  ["report", "--current", "nothing"], ["ahlfors", "--leaf", "moon"]])
def test_bad_arguments_exit_with_config_error(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == cli.EXIT_CONFIG
    assert "config error" in err


def test_parse_quad_types():
    q = cli.parse_quad(["rel_tol=1e-3,max_depth=12", "rule=15", "method=tensor"])
    assert q == {"rel_tol": 1e-3, "max_depth": 12, "rule": 15, "method": "tensor"}


def test_eps_range_parsing():
    assert cli._eps_list("1e-1..1e-3") == pytest.approx([1e-1, 1e-2, 1e-3])
    assert cli._eps_list("0.5,0.25") == [0.5, 0.25]


def test_threads_env(monkeypatch):
    monkeypatch.setenv("LAMICUR_THREADS", "0")
    with pytest.raises(cli.ConfigError):
        cli._threads()
    monkeypatch.setenv("LAMICUR_THREADS", "2")
    assert cli._threads() == 2


def test_verify_single_criterion(capsys):
    code, out, err = _run(capsys, "verify", "--only", "monge-ampere")
    doc = json.loads(out)
    assert code == 0 and doc["all_must_pass"]
    assert doc["criteria"][0]["status"] == "PASS"
    assert "[PASS] 13 monge-ampere" in err


def test_sweep_wedge(capsys):
    code, out, _ = _run(capsys, "sweep", "wedge-decay", "--eps", "0.1,0.01", "--n-atoms", "30")
    rows = out.splitlines()
    assert code == 0
    assert rows[0].startswith("eps,value,envelope")
    assert rows[0].endswith("lamicur_version,config")
    assert "np.float64" not in out


def test_version(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--version"])
    assert cli.__version__ in capsys.readouterr().out


def test_global_options_before_command(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 5\n")
    code, out, _ = _run(capsys, "--config", str(cfg), "catalog")
    assert code == 0 and json.loads(out)["config"]["seed"] == 5
