import csv
import json
import subprocess
import sys

import pytest

from bestofn.cli import load_spec, main
from bestofn.errors import ParseError, UnknownKey, ValidationError

SYM = {"n": 2, "quality": [1, 1], "cost": [1, 1], "interaction": "na"}


def write_spec(tmp_path, name="spec.json", **fields):
    body = {"instance": SYM, **fields}
    p = tmp_path / name
    p.write_text(json.dumps(body))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_defaults(tmp_path):
    spec = load_spec(write_spec(tmp_path))
    c = spec.config
    assert (c.N, c.g, c.G, c.tau, c.sigma) == (100, 10, 3, 1.0, 0)
    assert spec.repetitions == 100 and spec.command == "simulate"
    assert c.rule.kind == "voter" and c.initial_opinions == (0.5, 0.5)


def test_tau_below_half_names_the_field(tmp_path):
    with pytest.raises(ValidationError) as err:
        load_spec(write_spec(tmp_path, tau=0.4))
    assert err.value.field == "tau"


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(UnknownKey) as err:
        load_spec(write_spec(tmp_path, speling=1))
    assert err.value.field == "speling"


def test_unknown_sweep_parameter(tmp_path):
    with pytest.raises(ValidationError):
        load_spec(write_spec(tmp_path, command="sweep", sweep={"parameter": "q_3", "values": [1]}))
    with pytest.raises(ValidationError):
        load_spec(write_spec(tmp_path, command="sweep", sweep={"parameter": "N", "values": []}))


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "instance": {,\n}')
    with pytest.raises(ParseError) as err:
        load_spec(p)
    assert err.value.line == 2 and err.value.column == 16


def test_instance_or_scenario_required(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"N": 10}))
    with pytest.raises(ValidationError):
        load_spec(p)


def test_simulate_writes_one_row_per_run(tmp_path):
    out = tmp_path / "out"
    assert main(["--spec", str(write_spec(tmp_path, N=10)), "--out", str(out)]) == 0
    rows = read_csv(out / "runs.csv")
    assert len(rows) == 100
    assert [int(r["seed"]) for r in rows] == list(range(100))
    summary = json.loads((out / "summary.json").read_text())
    assert summary["resolved"]["config"]["G"] == 3
    assert summary["results"]["repetitions"] == 100
    assert set(summary["results"]) >= {"exit_probability", "exit_probability_se", "mean_decision_time",
                                       "non_decision_rate"}
    assert summary["seed"] == 0 and summary["version"]


def test_identical_spec_gives_identical_bytes(tmp_path):
    spec = write_spec(tmp_path, N=10, trajectory=True, repetitions=20, sigma=0.05)
    for d in ("a", "b"):
        assert main(["--spec", str(spec), "--out", str(tmp_path / d)]) == 0
    for name in ("runs.csv", "trajectory.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override(tmp_path):
    spec = write_spec(tmp_path, N=10, repetitions=5)
    main(["--spec", str(spec), "--out", str(tmp_path / "a"), "--seed", "1000"])
    rows = read_csv(tmp_path / "a" / "runs.csv")
    assert [int(r["seed"]) for r in rows] == [1000, 1001, 1002, 1003, 1004]
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["seed"] == 1000


def test_sweep_over_quality(tmp_path):
    spec = write_spec(tmp_path, N=10, repetitions=20, command="sweep",
                      sweep={"parameter": "q_2", "values": [0.5, 0.75, 1.0]})
    assert main(["--spec", str(spec), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert [float(r["value"]) for r in rows] == [0.5, 0.75, 1.0]
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert len(summary["results"]) == 3


def test_absorb_over_limit_fails(tmp_path, capsys):
    spec = write_spec(tmp_path, N=200, command="absorb")
    assert main(["--spec", str(spec), "--out", str(tmp_path / "o")]) != 0
    assert "StateSpaceTooLarge" in capsys.readouterr().err


def test_absorb_writes_probabilities(tmp_path):
    spec = write_spec(tmp_path, N=10, command="absorb")
    assert main(["--spec", str(spec), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "absorption.csv")
    assert [float(r["probability"]) for r in rows] == pytest.approx([0.5, 0.5], abs=1e-12)


def test_meanfield_trajectory_columns(tmp_path):
    spec = write_spec(tmp_path, command="meanfield", horizon=5, dt=0.5)
    assert main(["--spec", str(spec), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "trajectory.csv")
    assert list(rows[0]) == ["time", "e_1", "e_2", "d_1", "d_2"]
    assert len(rows) == 11


def test_scenario_file_relative_to_spec(tmp_path):
    (tmp_path / "paths.json").write_text(json.dumps({"type": "shortest_path", "lengths": [1, 2]}))
    p = tmp_path / "spec.json"
    p.write_text(json.dumps({"scenario": "paths.json", "N": 10, "repetitions": 3}))
    spec = load_spec(p)
    assert spec.instance.cost == (1, 2)
    assert main(["--spec", str(p), "--out", str(tmp_path / "o")]) == 0
    assert "scenario" in json.loads((tmp_path / "o" / "summary.json").read_text())["resolved"]["problem"]


def test_missing_spec_file_is_io_error(tmp_path):
    assert main(["--spec", str(tmp_path / "nope.json")]) == 2


def test_console_entry_point(tmp_path):
    spec = write_spec(tmp_path, N=10, command="absorb")
    done = subprocess.run([sys.executable, "-m", "bestofn.cli", "--spec", str(spec),
                           "--out", str(tmp_path / "o"), "--quiet"], capture_output=True)
    assert done.returncode == 0 and done.stdout == b""
