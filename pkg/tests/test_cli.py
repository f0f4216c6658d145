import json
import os

import pytest

from whyplan.cli import main, parse_query
from whyplan.errors import QueryParseError

FAST = ["--iterations", "40", "--max-depth", "2"]


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def plan_run(mini_scenario_path, tmp_path, capsys, name="run", seed="3"):
    out = str(tmp_path / name)
    code, stdout, _ = run_cli(["plan", "--scenario", mini_scenario_path, "--seed", seed,
                               *FAST, "--out", out], capsys)
    assert code == 0
    return out, stdout


def test_plan_writes_run_directory(mini_scenario_path, tmp_path, capsys):
    out, stdout = plan_run(mini_scenario_path, tmp_path, capsys)
    assert "plan:" in stdout
    for name in ("run.json", "tracelog.json", "predictions.json", "bn.json"):
        assert os.path.exists(os.path.join(out, name))
    meta = json.load(open(os.path.join(out, "run.json")))
    assert meta["seed"] == 3
    assert meta["iterations"] == 40
    assert len(meta["scenario_sha256"]) == 64


def test_plan_is_deterministic_byte_for_byte(mini_scenario_path, tmp_path, capsys):
    out1, _ = plan_run(mini_scenario_path, tmp_path, capsys, name="a")
    out2, _ = plan_run(mini_scenario_path, tmp_path, capsys, name="b")
    for name in ("run.json", "tracelog.json", "predictions.json", "bn.json"):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b, name


def test_plan_dump_bn_prints_json(mini_scenario_path, tmp_path, capsys):
    out = str(tmp_path / "dump")
    code, stdout, _ = run_cli(["plan", "--scenario", mini_scenario_path, "--seed", "3",
                               *FAST, "--out", out, "--dump-bn"], capsys)
    assert code == 0
    payload = json.loads(stdout[:stdout.rindex("}") + 1])
    assert "action_cpds" in payload


def test_bad_scenario_path_exits_with_parse_code(tmp_path, capsys):
    code, _, err = run_cli(["plan", "--scenario", str(tmp_path / "missing.json"),
                            "--out", str(tmp_path / "x")], capsys)
    assert code == 2
    assert "not found" in err


def test_zero_iterations_exits_with_validation_code(mini_scenario_path, tmp_path, capsys):
    code, _, err = run_cli(["plan", "--scenario", mini_scenario_path, "--iterations", "0",
                            "--out", str(tmp_path / "x")], capsys)
    assert code == 3
    assert "iterations" in err


def test_explain_from_run_directory(mini_scenario_path, tmp_path, capsys):
    out, _ = plan_run(mini_scenario_path, tmp_path, capsys)
    code, stdout, _ = run_cli(["explain", "--run", out, "--query", "omega1=Continue"],
                              capsys)
    assert code == 0
    assert stdout.strip().startswith("If ego had")

    code, raw_out, _ = run_cli(["explain", "--run", out, "--query", "omega1=Continue",
                                "--raw"], capsys)
    assert code == 0

    code, json_out, _ = run_cli(["explain", "--run", out, "--query", "omega1=Continue",
                                 "--json"], capsys)
    assert code == 0
    payload = json.loads(json_out)
    assert payload["s"]["omega"] == ["Continue"]
    assert 0.0 <= payload["s"]["p"] <= 1.0


def test_explain_is_reproducible_without_replanning(mini_scenario_path, tmp_path, capsys):
    out, _ = plan_run(mini_scenario_path, tmp_path, capsys)
    runs = [run_cli(["explain", "--run", out, "--query", "omega1=Continue"], capsys)[1]
            for _ in range(2)]
    assert runs[0] == runs[1]


def test_explain_dump_causal(mini_scenario_path, tmp_path, capsys):
    out, _ = plan_run(mini_scenario_path, tmp_path, capsys)
    target = str(tmp_path / "summary.json")
    code, _, _ = run_cli(["explain", "--run", out, "--query", "omega1=Continue",
                          "--dump-causal", target], capsys)
    assert code == 0
    assert json.load(open(target))["s"]["omega"] == ["Continue"]


def test_malformed_query_exits_with_parse_code(mini_scenario_path, tmp_path, capsys):
    out, _ = plan_run(mini_scenario_path, tmp_path, capsys)
    code, _, err = run_cli(["explain", "--run", out, "--query", "omega9=Fly"], capsys)
    assert code == 2
    assert "valid" in err  # names valid depths or actions


def test_unexplored_counterfactual_exits_distinctly(mini_scenario_path, tmp_path, capsys):
    out, _ = plan_run(mini_scenario_path, tmp_path, capsys)
    code, _, err = run_cli(["explain", "--run", out, "--query", "omega1=Continue-next-exit"],
                           capsys)
    assert code == 6
    assert "never explored" in err
    assert "Continue-next-exit" in err


def test_query_parser():
    q = parse_query("omega1=Continue,omega2=Exit-right", n_causes=2, n_effects=3)
    assert q.indices == (1, 2)
    assert q.actions == ("Continue", "Exit-right")
    assert q.n_causes == 2 and q.n_effects == 3
    with pytest.raises(QueryParseError):
        parse_query("omega=Continue")
    with pytest.raises(QueryParseError):
        parse_query("sigma1=Continue")
    with pytest.raises(QueryParseError):
        parse_query("")
    with pytest.raises(QueryParseError):
        parse_query("omega1")


def test_batch_produces_stable_csv(mini_scenario_path, tmp_path, capsys):
    out_csv = str(tmp_path / "batch.csv")
    args = ["batch", "--scenario", mini_scenario_path, "--runs", "2",
            "--queries", "omega1=Continue;omega1=Exit-right", *FAST,
            "--out", out_csv, "--seed", "3"]
    code, _, _ = run_cli(args, capsys)
    assert code == 0
    lines = open(out_csv).read().splitlines()
    assert len(lines) == 1 + 2 * 2
    assert lines[0].startswith("run,seed,plan,query,outcome")
    first = open(out_csv, "rb").read()
    code, _, _ = run_cli(args, capsys)
    assert code == 0
    assert open(out_csv, "rb").read() == first


def test_batch_workers_match_serial(mini_scenario_path, tmp_path, capsys):
    serial = str(tmp_path / "serial.csv")
    parallel = str(tmp_path / "parallel.csv")
    base = ["batch", "--scenario", mini_scenario_path, "--runs", "2",
            "--queries", "omega1=Continue", *FAST, "--seed", "3"]
    assert run_cli([*base, "--out", serial], capsys)[0] == 0
    assert run_cli([*base, "--out", parallel, "--workers", "2"], capsys)[0] == 0
    assert open(serial, "rb").read() == open(parallel, "rb").read()


def test_explain_matches_batch_wording(mini_scenario_path, tmp_path, capsys):
    # The run-directory path (persisted factors) and the in-memory batch path
    # must verbalize identically.
    out, _ = plan_run(mini_scenario_path, tmp_path, capsys, seed="5")
    _, explain_text, _ = run_cli(["explain", "--run", out, "--query", "omega1=Continue"],
                                 capsys)
    csv_path = str(tmp_path / "one.csv")
    code, _, _ = run_cli(["batch", "--scenario", mini_scenario_path, "--runs", "1",
                          "--queries", "omega1=Continue", *FAST, "--seed", "5",
                          "--out", csv_path], capsys)
    assert code == 0
    import csv as csv_mod
    with open(csv_path) as fh:
        row = list(csv_mod.DictReader(fh))[0]
    assert row["explanation"] == explain_text.strip()


def test_batch_rejects_zero_runs(mini_scenario_path, tmp_path, capsys):
    code, _, _ = run_cli(["batch", "--scenario", mini_scenario_path, "--runs", "0",
                          "--queries", "omega1=Continue"], capsys)
    assert code == 3


def test_style_flag_changes_wording(mini_scenario_path, tmp_path, capsys):
    out, _ = plan_run(mini_scenario_path, tmp_path, capsys)
    code, default_text, _ = run_cli(["explain", "--run", out, "--query", "omega1=Continue"],
                                    capsys)
    code, styled_text, _ = run_cli(["explain", "--run", out, "--query", "omega1=Continue",
                                    "--style", "scenarios/present_style.json"], capsys)
    assert code == 0
    assert "continued ahead" in default_text
    assert "gone straight" in styled_text
