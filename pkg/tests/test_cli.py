import json

import numpy as np
import pytest

import ccgm.suite as suite_mod
from ccgm import cli


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    code = cli.main(["gen", "--dataset", "checkmark", "--n", "400", "--seed", "5",
                     "--out", str(tmp / "ck.csv")])
    assert code == 0
    code = cli.main(["train", "--data", str(tmp / "ck.csv"), "--model", "cgm",
                     "--epochs", "30", "--seed", "5", "--out", str(tmp / "cgm.ckpt")])
    assert code == 0
    return tmp


def test_gen_writes_csv_and_sidecar(tmp_path, capsys):
    out = tmp_path / "d.csv"
    code, printed = run_cli(capsys, "gen", "--dataset", "dsprites-lite", "--n", "50",
                            "--seed", "2", "--out", str(out))
    assert code == 0
    assert json.loads(printed)["k"] == 6
    assert out.exists() and out.with_suffix(".csv.meta.json").exists()


def test_eval_reports_accuracy(workspace, capsys):
    code, printed = run_cli(capsys, "eval", "--checkpoint", str(workspace / "cgm.ckpt"),
                            "--data", str(workspace / "ck.csv"))
    assert code == 0
    assert 0.0 <= json.loads(printed)["joint_accuracy"] <= 1.0


def test_eval_sample_matches_service_payload_shape(workspace, capsys):
    code, printed = run_cli(capsys, "eval", "--checkpoint", str(workspace / "cgm.ckpt"),
                            "--data", str(workspace / "ck.csv"), "--sample", "1")
    assert code == 0
    body = json.loads(printed)
    assert body["nodes"] == ["a", "b", "c", "d"]
    assert len(body["probs"]) == 4


def test_graph_dot_parses(workspace, capsys):
    code, printed = run_cli(capsys, "graph", "--checkpoint", str(workspace / "cgm.ckpt"),
                            "--format", "dot")
    assert code == 0
    assert printed.startswith("digraph") and printed.rstrip().endswith("}")


def test_graph_structured_round_trips(workspace, capsys):
    code, printed = run_cli(capsys, "graph", "--checkpoint", str(workspace / "cgm.ckpt"),
                            "--format", "structured")
    body = json.loads(printed)
    assert {n["name"] for n in body["nodes"]} == {"a", "b", "c", "d"}
    assert all(set(e) >= {"src", "dst", "weight"} for e in body["edges"])


def test_intervene_do_flag(workspace, capsys):
    code, printed = run_cli(capsys, "intervene", "--checkpoint", str(workspace / "cgm.ckpt"),
                            "--data", str(workspace / "ck.csv"), "--sample", "0",
                            "--do", "b=1")
    body = json.loads(printed)
    assert body["after"]["probs"][1] == 1.0
    assert body["spec"] == [{"node": "b", "kind": "do", "value": 1.0}]


def test_counterfactual_empty_is_consistent(workspace, capsys):
    code, printed = run_cli(capsys, "counterfactual", "--checkpoint",
                            str(workspace / "cgm.ckpt"), "--data", str(workspace / "ck.csv"),
                            "--sample", "3")
    body = json.loads(printed)
    assert body["factual"] == body["counterfactual"]


def test_cace_and_pns_tables(workspace, capsys):
    code, printed = run_cli(capsys, "cace", "--checkpoint", str(workspace / "cgm.ckpt"),
                            "--data", str(workspace / "ck.csv"))
    lines = printed.strip().splitlines()
    assert lines[0] == "cause,effect,value"
    assert len(lines) == 1 + 12
    code, printed = run_cli(capsys, "pns", "--checkpoint", str(workspace / "cgm.ckpt"),
                            "--data", str(workspace / "ck.csv"))
    assert printed.splitlines()[0] == "cause,effect,value,lower,upper"


def test_error_line_is_machine_parsable(capsys):
    code = cli.main(["eval", "--checkpoint", "/nonexistent.ckpt", "--data", "/none.csv"])
    err = capsys.readouterr().err
    assert code == 1
    parsed = json.loads(err.strip().splitlines()[-1])
    assert parsed["command"] == "eval" and "message" in parsed


def test_suite_smoke_byte_identical(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(suite_mod, "CHECKMARK_N", 400)
    monkeypatch.setattr(suite_mod, "CHECKMARK_EPOCHS", 15)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    for out in (out1, out2):
        code = cli.main(["suite", "--out", str(out), "--seeds", "1", "2",
                         "--lambda3-grid", "0.05", "--datasets", "checkmark",
                         "--workers", "2"])
        assert code == 0
        capsys.readouterr()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    m1.pop("summary.json"), m2.pop("summary.json")  # contains wall-clock timings
    assert m1 == m2
    for name in ("accuracy.csv", "lambda3_ablation.csv", "residual_cace.csv",
                 "intervention_curve.csv", "pns.csv", "learned_graphs.csv",
                 "logic_rules.csv", "manifest.json"):
        assert (out1 / name).exists()


def test_suite_never_mutates_input_dataset(tmp_path, capsys, monkeypatch):
    # generators are pure; the suite writes only under --out
    monkeypatch.setattr(suite_mod, "CHECKMARK_N", 200)
    monkeypatch.setattr(suite_mod, "CHECKMARK_EPOCHS", 4)
    before = suite_mod.checkmark_splits(1)[0].features.copy()
    cli.main(["suite", "--out", str(tmp_path / "s"), "--seeds", "1",
              "--lambda3-grid", "0.05", "--datasets", "checkmark"])
    capsys.readouterr()
    after = suite_mod.checkmark_splits(1)[0].features
    assert np.array_equal(before, after)
