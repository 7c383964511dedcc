import csv
import hashlib
import json

import pytest

from relaxsim.cli import EXIT_CONFIG, main

MODE = """
[[modes]]
id = "a"
mass = 1.0
omega = 1.0
beta = {beta}
gamma_p = {gp}
gamma_q = {gq}
"""

CONFIGS = {
    "run-classical": ('scenario = "classical"\nseed = 3\n[classical]\nn_trajectories = 400\nduration = 1.0\n'
                      "output_trajectories = 2\n", dict(beta=1.0, gp=0.5, gq=0.0)),
    "run-kramers": ('scenario = "kramers"\n[kramers]\nn_q = 128\nn_p = 128\nduration = 0.1\n'
                    "diagnostics_every = 5\nsnapshots = 2\n", dict(beta=1.0, gp=0.5, gq=0.2)),
    "run-quantum": ('scenario = "quantum"\n[quantum]\nduration = 1.0\nn_records = 11\n',
                    dict(beta=2.0, gp=0.1, gq=0.0)),
    "run-fermion": ('scenario = "fermion"\n[quantum]\ninitial = "random"\nduration = 1.0\n',
                    dict(beta=1.0, gp=0.2, gq=0.2)),
    "check-cptp": ('scenario = "cptp-check"\n[cptp]\nn_max = 12\n', dict(beta=50.0, gp=0.1, gq=0.0)),
}


def write_config(tmp_path, command, **override):
    head, mode = CONFIGS[command]
    text = head + MODE.format(**{**mode, **override})
    path = tmp_path / f"{command}.toml"
    path.write_text(text)
    return str(path)


def run(tmp_path, command, name="out", **override):
    out = tmp_path / name
    code = main([command, "--config", write_config(tmp_path, command, **override), "--out", str(out)])
    return code, out


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    done = {}
    for command in CONFIGS:
        code, out = run(base, command, name=command)
        assert code == 0, (out / "error.json").read_text()
        done[command] = out
    return done


@pytest.mark.parametrize("command", list(CONFIGS))
def test_manifest_lists_hashed_artifacts(runs, command):
    out = runs[command]
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == command
    assert {"config", "seed", "versions", "started", "wall_time_s", "config_source"} <= set(man)
    for name, digest in man["artifacts"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert json.loads((out / "config.resolved.json").read_text()) == man["config"]


def test_csv_headers(runs):
    assert header(runs["run-classical"] / "thermo.csv") == ["t", "E", "Q_a", "W", "S", "entropy_production", "stderr"]
    assert header(runs["run-classical"] / "trajectories.csv")[:3] == ["trajectory", "t", "q_a"]
    assert header(runs["run-kramers"] / "diagnostics.csv")[:3] == ["t", "mass", "E"]
    assert header(runs["run-kramers"] / "fields/f_0000.csv") == ["t", "q", "p", "f"]
    assert header(runs["run-quantum"] / "rho_diag.csv")[:2] == ["t", "p_0"]
    assert header(runs["run-fermion"] / "rho_diag.csv") == ["t", "p_0", "p_1"]


@pytest.mark.parametrize("command", ["run-classical", "run-kramers", "run-quantum", "run-fermion"])
def test_report_passes_both_laws(runs, tmp_path, command):
    dest = tmp_path / "report.json"
    assert main(["report", "--in", str(runs[command]), "--out", str(dest)]) == 0
    laws = json.loads(dest.read_text())["laws"]
    assert laws["first_law"]["satisfied"]
    assert laws["clausius"]["satisfied"]


def test_cptp_verdict_reported(runs, tmp_path):
    cp = json.loads((runs["check-cptp"] / "cptp.json").read_text())
    assert cp["verdict"] == "CPTP: false" and cp["consistent"]
    dest = tmp_path / "report.json"
    assert main(["report", "--in", str(runs["check-cptp"]), "--out", str(dest)]) == 0
    assert json.loads(dest.read_text())["laws"]["complete_positivity"]["verdict"] == "CPTP: false"


def test_cptp_true_at_zero_delta(tmp_path):
    code, out = run(tmp_path, "check-cptp", beta=5.0, gq=0.1)
    assert code == 0 and json.loads((out / "cptp.json").read_text())["verdict"] == "CPTP: true"


@pytest.mark.parametrize("command", ["run-classical", "run-quantum"])
def test_reruns_are_byte_identical(runs, tmp_path, command):
    code, out = run(tmp_path, command)
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    for name in man["artifacts"]:
        assert (out / name).read_bytes() == (runs[command] / name).read_bytes(), name


def test_seed_override_changes_noise(runs, tmp_path):
    out = tmp_path / "seeded"
    cfg = write_config(tmp_path, "run-classical")
    assert main(["run-classical", "--config", cfg, "--out", str(out), "--seed", "11"]) == 0
    assert json.loads((out / "manifest.json").read_text())["seed"] == 11
    assert (out / "thermo.csv").read_bytes() != (runs["run-classical"] / "thermo.csv").read_bytes()


def test_wrong_scenario_is_config_error(tmp_path, capsys):
    out = tmp_path / "bad"
    code = main(["run-kramers", "--config", write_config(tmp_path, "run-classical"), "--out", str(out)])
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["key"] == "scenario"
    assert json.loads((out / "error.json").read_text()) == err


def test_invalid_value_names_key(tmp_path, capsys):
    code, _ = run(tmp_path, "run-quantum", gp="-1.0")
    assert code == EXIT_CONFIG
    assert json.loads(capsys.readouterr().err)["key"] == "modes[0].gamma_p"


def test_missing_config_file(tmp_path, capsys):
    code = main(["run-quantum", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "not found" in json.loads(capsys.readouterr().err)["message"]


def test_report_on_missing_run_fails(tmp_path):
    assert main(["report", "--in", str(tmp_path / "none"), "--out", str(tmp_path / "r.json")]) != 0
