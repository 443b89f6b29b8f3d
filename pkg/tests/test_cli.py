"""Command line behaviour: outputs, exit codes, manifests, determinism."""

import hashlib
import json
import math
import subprocess
import sys

import pytest

from proxtrace.cli import main
from proxtrace.core import SimClock, Stage, write_contact_graph
from proxtrace.protocol import Registry, write_event_log
from proxtrace.tracing import trace_co_contacts

from conftest import contacts, device


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -------------------------------------------------------------------------
# risk
# -------------------------------------------------------------------------

def test_risk_scores_a_file(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("category,distance\nB,4.0\n")
    assert main(["risk", "--observations", str(obs)]) == 0
    assert capsys.readouterr().out.strip() == "0.285714 B"


def test_risk_accepts_letters_and_indices(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("a,2.0\n0,3.0\nA,4.0\n")
    assert main(["risk", "--observations", str(obs)]) == 0
    assert capsys.readouterr().out.strip() == "1.000000 E"


def test_risk_empty_input_is_no_data(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("category,distance\n")
    assert main(["risk", "--observations", str(obs)]) == 2
    assert "no observations" in capsys.readouterr().err


def test_risk_malformed_row_names_the_line(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("A,2.0\nB,not-a-number\n")
    assert main(["risk", "--observations", str(obs)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "line 2" in err


def test_risk_custom_weights(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("B,5.0\n")
    assert main(["risk", "--observations", str(obs), "--weights", "0.5,0.25"]) == 0
    assert capsys.readouterr().out.strip() == "0.500000 C"


def test_risk_distance_beyond_radius_fails(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("A,9.0\n")
    assert main(["risk", "--observations", str(obs), "--radius", "5"]) == 1
    assert "radius" in capsys.readouterr().err


# -------------------------------------------------------------------------
# curve and surface
# -------------------------------------------------------------------------

def test_curve_csv_and_manifest(tmp_path):
    out = tmp_path / "curve.csv"
    rc = main(["curve", "--n", "4", "--k", "4", "--repeats", "5", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "index,n_1,n_2,n_3,n_4,mean_score,risk_class"
    assert len(lines) == 1 + math.comb(8, 4)

    manifest = json.loads((tmp_path / "curve.csv.manifest.json").read_text())
    assert manifest["command"] == "curve"
    assert manifest["seed"] == 0
    assert manifest["outputs"][0]["sha256"] == sha256(out)


def test_curve_bytes_are_reproducible_and_job_independent(tmp_path):
    args = ["curve", "--n", "5", "--k", "3", "--weights", "0.7,0.2,0.1",
            "--repeats", "6", "--seed", "9"]
    outs = [tmp_path / f"c{i}.csv" for i in range(3)]
    main(args + ["--out", str(outs[0])])
    main(args + ["--out", str(outs[1])])
    main(args + ["--jobs", "3", "--out", str(outs[2])])
    assert outs[0].read_bytes() == outs[1].read_bytes() == outs[2].read_bytes()


def test_surface_csv(tmp_path):
    out = tmp_path / "surface.csv"
    assert main(["surface", "--n-max", "5", "--repeats", "4", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n_a,n_b,mean_score,risk_class"
    assert len(lines) == 1 + math.comb(7, 2)


# -------------------------------------------------------------------------
# trace
# -------------------------------------------------------------------------

def trace_fixture(tmp_path):
    a, b, c, x = (device(t) for t in "abcx")
    graph = {
        a: contacts(a, (b, 3, 1.0), (c, 3, 2.0)),
        b: contacts(b, (x, 5, 1.5)),
        c: contacts(c, (a, 5, 1.0)),
    }
    path = tmp_path / "graph.csv"
    write_contact_graph(graph, path)
    return graph, path, a


def test_trace_prints_co_contacts(tmp_path, capsys):
    graph, path, a = trace_fixture(tmp_path)
    assert main(["trace", "--graph", str(path), "--case", a.hex, "--day", "5"]) == 0
    got = capsys.readouterr().out.split()
    want = [d.hex for d in trace_co_contacts(a, graph, SimClock(5))]
    assert got == want
    assert len(got) == 3  # x via b, then b, then c


def test_trace_out_file_and_manifest(tmp_path):
    graph, path, a = trace_fixture(tmp_path)
    out = tmp_path / "traced.txt"
    args = ["trace", "--graph", str(path), "--case", a.hex, "--day", "5", "--out", str(out)]
    assert main(args + ["--seed", "4"]) == 0
    assert len(out.read_text().splitlines()) == 3
    manifest = json.loads((tmp_path / "traced.txt.manifest.json").read_text())
    assert manifest["seed"] == 4


def test_trace_unknown_case_fails(tmp_path, capsys):
    _, path, _ = trace_fixture(tmp_path)
    ghost = device("ghost")
    assert main(["trace", "--graph", str(path), "--case", ghost.hex, "--day", "5"]) == 1
    assert "error:" in capsys.readouterr().err


def test_trace_missing_graph_file(tmp_path, capsys):
    assert main(["trace", "--graph", str(tmp_path / "nope.csv"), "--case", "00" * 16, "--day", "1"]) == 1


# -------------------------------------------------------------------------
# simulate
# -------------------------------------------------------------------------

SIM_ARGS = ["simulate", "--population", "60", "--days", "8", "--seed", "3"]


def test_simulate_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    assert main(SIM_ARGS + ["--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "day,new_infections,cumulative,quarantined,susceptible,arm"
    arms = {line.split(",")[-1] for line in lines[1:]}
    assert arms == {"baseline", "app"}
    summary = capsys.readouterr().out
    assert summary.startswith("seed 3: baseline ")
    assert "ratio" in summary

    manifest = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 3
    assert manifest["outputs"][0]["sha256"] == sha256(out)


def test_simulate_bytes_reproducible_and_job_independent(tmp_path):
    outs = [tmp_path / f"s{i}.csv" for i in range(3)]
    base = SIM_ARGS + ["--replicates", "2"]
    main(base + ["--out", str(outs[0])])
    main(base + ["--out", str(outs[1])])
    main(base + ["--jobs", "2", "--out", str(outs[2])])
    assert outs[0].read_bytes() == outs[1].read_bytes() == outs[2].read_bytes()
    header = outs[0].read_text().splitlines()[0]
    assert header.endswith(",seed")  # replicated runs tag every row


def test_simulate_single_arm(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    assert main(SIM_ARGS + ["--arm", "baseline", "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("seed 3: baseline ")
    arms = {line.split(",")[-1] for line in out.read_text().splitlines()[1:]}
    assert arms == {"baseline"}


def test_simulate_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# engine settings\n"
        "population = 50\n"
        "max_days = 6\n"
        "infection_probability = 0.4\n"
        "app_enabled = true\n"
    )
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--config", str(cfg), "--arm", "app", "--out", str(out)]) == 0
    summary = capsys.readouterr().out
    assert summary.startswith("seed 0: app ")
    assert "/50" in summary  # population came from the file


def test_simulate_config_file_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("velocity = 9\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 1
    assert "unknown config field" in capsys.readouterr().err


def test_simulate_cli_overrides_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("population = 50\nseed = 1\nmax_days = 6\n")
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--config", str(cfg), "--population", "40", "--out", str(out)]) == 0
    assert "/40" in capsys.readouterr().out


# -------------------------------------------------------------------------
# replay
# -------------------------------------------------------------------------

def test_replay_matches_live_digest(tmp_path, capsys):
    reg = Registry(["clinic"], seed=2)
    ids = []
    for tag in "abc":
        otc = reg.issue_otc("clinic")
        ids.append(reg.register_user(otc.code, f"cli-user-{tag}").device)
    reg.record_encounter(ids[0], ids[1], 2.0, clock=SimClock(0))
    reg.update_status(reg.issue_otc("clinic").code, ids[0], Stage.INFECTED, clock=SimClock(2))
    log = tmp_path / "events.csv"
    write_event_log(reg.events, log)

    assert main(["replay", "--log", str(log), "--credential", "clinic"]) == 0
    assert capsys.readouterr().out.strip() == reg.state_digest()

    out = tmp_path / "digest.txt"
    assert main(["replay", "--log", str(log), "--credential", "clinic", "--out", str(out)]) == 0
    capsys.readouterr()
    assert out.read_text().strip() == reg.state_digest()
    manifest = json.loads((tmp_path / "digest.txt.manifest.json").read_text())
    assert manifest["command"] == "replay"
    assert manifest["outputs"][0]["sha256"] == sha256(out)


# -------------------------------------------------------------------------
# harness
# -------------------------------------------------------------------------

def test_version_flag():
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0


def test_bad_arguments_exit_one(tmp_path, capsys):
    assert main(["bogus-command"]) == 1
    assert main(["curve", "--n", "3"]) == 1  # --out is required
    assert "error:" in capsys.readouterr().err


def test_console_script_is_installed():
    proc = subprocess.run(
        [sys.executable, "-c", "from proxtrace.cli import main; raise SystemExit(main(['--version']))"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip().startswith("proxtrace ")
