import csv
import os
import stat
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from spectrum_imitation.cli import main
from spectrum_imitation.experiment import SCHEMAS, run_experiment, sweep
from spectrum_imitation.graph import cluster_topology, write_edge_list
from spectrum_imitation.scenario import (Scenario, ScenarioError, build, parse_scenario, parse_scenario_text,
                                         serialize_scenario)

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = """
[graph]
sizes = 50, 50, 50
"""

SMALL = """
[channels]
theta = 2/3, 1/2, 4/5
rate = 15, 40, 100
[users]
count = 12
[graph]
source = topology
topology = chain
sizes = 4, 4, 4
[engine]
periods = 30
[analysis]
window = 10
meanfield = true
[run]
seed = 5
"""


def test_minimal_file_gets_defaults():
    s = parse_scenario_text(MINIMAL)
    assert s == Scenario(sizes=(50, 50, 50))
    assert s.theta[1] == pytest.approx(4 / 7)
    assert (s.slots, s.lambda_max, s.periods, s.count) == (100, 50, 500, 150)


def test_fractions_and_booleans():
    s = parse_scenario_text(SMALL)
    assert s.theta == pytest.approx((2 / 3, 0.5, 0.8))
    assert s.meanfield is True and s.window == 10


@pytest.mark.parametrize("text,key,line", [
    ("[channels]\ntheta = 1.3, 0.5, 0.5, 0.5, 0.5\n[graph]\nsizes = 150\n", "theta", 2),
    ("[graph]\nsizes = 150\ncolour = red\n", "colour", 3),
    ("[graph]\nsizes = 10, 10\n", "sizes", 2),
    ("[graph]\nsizes = 150\n[engine]\nmode = both\n", "mode", 4),
    ("[graph]\nsizes = 150\n[engine]\nperiods = 0\n", "periods", 4),
    ("[graph]\nsource = file\nfile = nowhere.txt\n", "file", 3),
    ("[graph]\nsizes = 150\n[engine]\nslots = ten\n", "slots", 4),
])
def test_errors_name_key_and_line(text, key, line):
    with pytest.raises(ScenarioError) as err:
        parse_scenario_text(text)
    assert err.value.key == key
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_structural_errors():
    for text in ("theta = 0.5\n", "[nope]\n", "[graph]\nsizes\n", "[graph]\nsizes = 1\nsizes = 2\n"):
        with pytest.raises(ScenarioError):
            parse_scenario_text(text)


def test_round_trip(tmp_path):
    for text in (MINIMAL, SMALL):
        s = parse_scenario_text(text)
        again = parse_scenario_text(serialize_scenario(s))
        assert again == s
    for path in sorted((ROOT / "scenarios").glob("*.scn")):
        s = parse_scenario(path)
        assert parse_scenario_text(serialize_scenario(s), base_dir=path.parent) == s


def test_heterogeneous_rates():
    s = replace(parse_scenario_text(MINIMAL), heterogeneous=50)
    b = build(s)
    het = b.heterogeneous_users
    assert len(het) == 50
    hom = np.setdiff1d(np.arange(150), het)
    assert np.allclose(b.rates[hom], s.rate)
    assert b.rates[het].min() >= 100 and b.rates[het].max() <= 200
    assert np.allclose(b.system.mean_rate, b.rates, rtol=1e-9)


def test_geometric_radius_recorded():
    s = replace(parse_scenario_text(MINIMAL), source="geometric", count=40)
    b = build(s)
    assert b.metadata["radius_auto"] and b.metadata["radius"] > 0


def test_file_graph(tmp_path):
    write_edge_list(cluster_topology("full", [12]), tmp_path / "g.txt")
    text = SMALL.replace("source = topology", "source = file\nfile = g.txt")
    (tmp_path / "s.scn").write_text(text)
    s = parse_scenario(tmp_path / "s.scn")
    assert build(s).graph.n_users == 12


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_experiment_outputs(tmp_path):
    s = parse_scenario_text(SMALL)
    row = run_experiment(s, tmp_path / "a")
    run_experiment(s, tmp_path / "b")
    for name, header in SCHEMAS.items():
        if name == "sweep.csv":
            continue
        a = tmp_path / "a" / name
        assert read_csv(a)[0] == list(header)
        assert a.read_bytes() == (tmp_path / "b" / name).read_bytes()
    trace = read_csv(tmp_path / "a" / "trace.csv")
    assert len(trace) == 1 + 30 * 12
    mfield = read_csv(tmp_path / "a" / "meanfield.csv")
    assert len(mfield) == 1 + 31 * 3 * 3
    assert 0 < row["jain"] <= 1


def test_unwritable_directory_fails_first(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_experiment(parse_scenario_text(SMALL), blocker / "out")
    if os.geteuid() != 0:
        locked = tmp_path / "locked"
        locked.mkdir()
        locked.chmod(stat.S_IRUSR | stat.S_IXUSR)
        with pytest.raises(OSError):
            run_experiment(parse_scenario_text(SMALL), locked)


def test_sweep_aggregates(tmp_path):
    s = replace(parse_scenario_text(SMALL), meanfield=False, periods=15)
    rows = sweep(s, tmp_path, delays=[0, 2], seeds=[1, 2], workers=1)
    assert len(rows) == 4
    table = read_csv(tmp_path / "sweep.csv")
    assert len(table) == 5
    assert (tmp_path / "n12_d2_s1" / "metrics.csv").exists()


def test_cli_commands(tmp_path, capsys):
    assert main(["gtable", "--lambda-max", "50", "--kmax", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "k,g,k_g" and out[2] == "2,0.49,0.98"

    write_edge_list(cluster_topology("chain", [3, 2, 4]), tmp_path / "g.txt")
    assert main(["cluster", str(tmp_path / "g.txt")]) == 0
    assert "clusters 3" in capsys.readouterr().out

    scn = tmp_path / "s.scn"
    scn.write_text(SMALL)
    assert main(["run", str(scn), "--out", str(tmp_path / "o"), "--seed", "7", "--periods", "12",
                 "--delay", "1", "--meanfield"]) == 0
    metrics = read_csv(tmp_path / "o" / "metrics.csv")
    assert metrics[1][:4] == ["7", "hom", "1", "12"]

    scn.write_text(SMALL.replace("2/3, 1/2", "1.3, 1/2"))
    assert main(["run", str(scn), "--out", str(tmp_path / "p"), "--seed", "1"]) == 1
    assert "theta" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", str(scn), "--out", str(tmp_path / "p"), "--seed", "-1"])
