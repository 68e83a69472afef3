import json
import math
import shutil
import subprocess

import pytest

from gmtk import __version__
from gmtk.cli import run
from gmtk.cubes import AxiomReport


@pytest.fixture
def cloud_file(tmp_path):
    def make(*flags):
        out = tmp_path / ("_".join(f.strip("-") for f in flags) + ".json")
        assert run(["gen", *flags, "--out", str(out)]) == 0
        return str(out)
    return make


def _json(path):
    return json.loads(open(path).read())


def test_gen_and_counterexample(cloud_file, tmp_path, capsys):
    e10 = cloud_file("--kind", "en", "--n", "10")
    out = tmp_path / "scan.json"
    assert run(["carleson", "counterexample", "--in", e10, "--out", str(out)]) == 0
    (row,) = _json(out)["result"]["rows"]
    assert row["n"] == 10 and row["all_flagged"]
    assert row["exact"] == pytest.approx(0.5 * math.log(2**9))
    assert row["sampled"] == pytest.approx(3.1192, rel=0.05)


def test_counterexample_table_csv(capsys):
    assert run(["counterexample", "--n", "4,8", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "n,exact,sampled,all_flagged,pairs"
    exact = {int(l.split(",")[0]): float(l.split(",")[1]) for l in lines[1:]}
    assert exact[8] - exact[4] == pytest.approx(2 * math.log(2), abs=1e-12)


def test_thm_main_keys(cloud_file, tmp_path):
    c = cloud_file("--kind", "cantor", "--depth", "5")
    out = tmp_path / "thm.json"
    assert run(["thm-main", "--in", c, "--eps", "0.5", "--rho", "0.25", "--A", "1", "--out", str(out)]) == 0
    res = _json(out)["result"]
    assert {"lhs", "mass", "ratio", "N", "J"} <= set(res)
    assert res["lhs"] == 0.0 and res["mass"] == pytest.approx(1.0)


@pytest.mark.parametrize("argv, flag", [
    (["thm-main", "--in", "x.json", "--eps", "1.5", "--rho", "0.25"], "--eps"),
    (["thm-main", "--in", "x.json", "--eps", "0.5", "--rho", "0"], "--rho"),
    (["classify", "--in", "x.json", "--eps", "0.5", "--rho", "0.5", "--A", "0.5"], "--A"),
])
def test_range_errors_name_flag(argv, flag, capsys):
    assert run(argv) == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and flag in err


def test_unknown_flag_and_missing_input(capsys):
    assert run(["gen", "--kind", "en", "--n", "3", "--bogus"]) == 1
    assert run(["thm-main", "--in", "/nonexistent.json", "--eps", "0.5", "--rho", "0.5"]) == 1
    err = capsys.readouterr().err
    assert "--bogus" in err and "--in" in err


def test_invalid_fractal_exit1(capsys):
    assert run(["gen", "--kind", "cantor", "--depth", "3", "--lam", "3/4"]) == 1
    assert "lam" in capsys.readouterr().err


def test_invariant_failure_exit2(cloud_file, monkeypatch, capsys):
    c = cloud_file("--kind", "en", "--n", "3")
    monkeypatch.setattr("gmtk.cli.cubes.verify_cube_axioms",
                        lambda tree: AxiomReport(["overlap of cubes 0 and 1"], 1, 2))
    assert run(["cubes", "--in", c]) == 2
    assert "invariant" in capsys.readouterr().err


def test_deterministic_bytes(cloud_file, tmp_path):
    c = cloud_file("--kind", "parallel_segments", "--h", "0.015625", "--depth", "6")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.json"
        assert run(["thm-main", "--in", c, "--eps", "0.5", "--rho", "0.0625", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_envelope_params_and_version(cloud_file, tmp_path, monkeypatch):
    monkeypatch.setenv("GMT_THREADS", "3")
    c = cloud_file("--kind", "en", "--n", "4")
    out = tmp_path / "reg.json"
    assert run(["regularity", "--in", c, "--radii", "0.5,0.25", "--out", str(out)]) == 0
    doc = _json(out)
    assert doc["version"] == __version__ and doc["command"] == "regularity"
    assert doc["params"]["radii"] == "0.5,0.25" and doc["params"]["threads"] == 3
    assert doc["result"]["C0"] <= 4


def test_dat_and_plot(cloud_file, tmp_path):
    c = cloud_file("--kind", "en", "--n", "4")
    stem = tmp_path / "plots" / "e4"
    assert run(["net", "--in", c, "--dat", str(stem), "--plot", "--out", str(tmp_path / "n.json")]) == 0
    dat = (tmp_path / "plots" / "e4_net_size.dat").read_text().splitlines()
    assert dat[0].startswith("#")
    assert all(len(line.split()) == 2 for line in dat[1:])
    png = tmp_path / "plots" / "e4_net.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_other_commands(cloud_file, tmp_path):
    seg = cloud_file("--kind", "parallel_segments", "--h", "0.015625", "--depth", "6")
    e4 = cloud_file("--kind", "en", "--n", "4")
    csv_path = tmp_path / "w.csv"
    assert run(["weights", "--in", seg, "--eps", "0.5", "--rho", "0.0625", "--csv", str(csv_path),
                "--out", str(tmp_path / "w.json")]) == 0
    assert csv_path.read_text().startswith("cube_id,stage,cell_id,cell_mass,value")
    assert _json(tmp_path / "w.json")["result"]["ok"]
    assert run(["cubes", "--in", e4, "--kind", "christ-david", "--out", str(tmp_path / "c.json")]) == 0
    assert _json(tmp_path / "c.json")["result"]["axioms"]["ok"]
    assert run(["classify", "--in", e4, "--eps", "0.2", "--rho", "0.5", "--out", str(tmp_path / "k.json")]) == 0
    assert run(["carleson", "--in", e4, "--out", str(tmp_path / "cn.json")]) == 0
    f = json.dumps({"levels": [1, 1], "carriers": [[0], [7]]})
    assert run(["choquet-check", "--in", e4, "--f", f, "--g", f, "--rho", "0.1",
                "--out", str(tmp_path / "q.json")]) == 0
    res = _json(tmp_path / "q.json")["result"]
    assert res["separated_additivity"]["integral"] == pytest.approx(2 / 16)


@pytest.mark.skipif(shutil.which("gmtk") is None, reason="console script not installed")
def test_console_script(tmp_path):
    p = subprocess.run(["gmtk", "thm-main", "--in", "x", "--eps", "1.5", "--rho", "0.5"],
                       capture_output=True, text=True)
    assert p.returncode == 1 and "--eps" in p.stderr
