import json
import subprocess
import sys

import pytest

from modelift.cli import main
from modelift.dataset import save_dataset
from modelift.fixtures import blobs_classifier, blobs_dataset, conv_relu_graph, l2_normalization_graph
from modelift.graph import load_mgf, save_mgf


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_mgf(blobs_classifier(), d / "fixture.json")
    save_mgf(l2_normalization_graph(), d / "custom.json")
    save_mgf(conv_relu_graph(), d / "conv.json")
    save_dataset(blobs_dataset(per_class=25), d / "blobs.json")
    assert main(["-q", "transform", str(d / "fixture.json"), str(d / "debug.json")]) == 0
    return d


def run(capsys, *argv):
    code = main(["-q", *map(str, argv)])
    doc = json.loads(capsys.readouterr().out)
    assert doc["exit_code"] == code
    return code, doc


def test_transform_success_writes_graph_and_report(files, capsys, tmp_path):
    code, doc = run(capsys, "transform", files / "fixture.json", tmp_path / "out.json", "--report", tmp_path / "r.json")
    assert code == 0
    assert doc["payload"]["success"] and all(i["resolved_by"] for i in doc["payload"]["issues"])
    assert json.loads((tmp_path / "r.json").read_text()) == doc["payload"]
    assert load_mgf(tmp_path / "out.json") == load_mgf(files / "debug.json")


def test_transform_alpha_zero_custom_op(files, capsys, tmp_path):
    code, doc = run(capsys, "transform", files / "custom.json", tmp_path / "out.json", "--alpha", "0")
    assert code == 3
    assert (tmp_path / "out.json").exists()
    code, doc = run(capsys, "transform", files / "custom.json", tmp_path / "out.json")
    assert code == 0 and doc["payload"]["substitutions"][0]["new_op_type"] == "LpNormalization"


def test_transform_missing_input(capsys, tmp_path):
    code, doc = run(capsys, "transform", tmp_path / "nope.json", tmp_path / "out.json")
    assert code == 2 and "error" in doc


def test_transform_invalid_graph(capsys, tmp_path):
    (tmp_path / "bad.json").write_text('{"format_version": 1}')
    assert run(capsys, "transform", tmp_path / "bad.json", tmp_path / "o.json")[0] == 2


def test_diff(files, capsys):
    code, doc = run(capsys, "diff", files / "fixture.json", files / "fixture.json", "--probes", "5")
    assert code == 0 and doc["payload"]["mean_scaled"] == 0.0
    code, doc = run(capsys, "diff", files / "fixture.json", files / "debug.json")
    assert code == 0 and doc["payload"]["mean_scaled"] <= 0.01
    assert run(capsys, "diff", files / "fixture.json", files / "conv.json")[0] == 2


def test_attack(files, capsys):
    code, doc = run(capsys, "attack", files / "debug.json", files / "blobs.json",
                    "--l2", "1.0", "--steps", "400", "--step-size", "0.04")
    assert code == 0 and doc["payload"]["fooling_rate"] >= 0.9
    low = run(capsys, "attack", files / "debug.json", files / "blobs.json", "--l2", "0.01")[1]
    assert low["payload"]["fooling_rate"] < doc["payload"]["fooling_rate"]
    code, doc = run(capsys, "attack", files / "fixture.json", files / "blobs.json")
    assert code == 2 and "QuantizeLinear" in doc["error"]


def test_inspect(files, capsys):
    assert run(capsys, "inspect", files / "conv.json")[1]["payload"] == []
    cats = {r["category"] for r in run(capsys, "inspect", files / "fixture.json")[1]["payload"]}
    assert cats == {"STRUCTURE_MISMATCH", "OPERATOR_MISMATCH"}
    cats = [r["category"] for r in run(capsys, "inspect", files / "custom.json")[1]["payload"]]
    assert cats == ["OPERATOR_NOT_SUPPORTED"]


def test_inspect_parse_failure(capsys, tmp_path):
    (tmp_path / "x.json").write_text("not json")
    assert run(capsys, "inspect", tmp_path / "x.json")[0] == 2


def test_rules_env_var(files, capsys, tmp_path, monkeypatch):
    from importlib import resources
    doc = json.loads(resources.files("modelift").joinpath("data/rules.json").read_text())
    doc["supported"] = [op for op in doc["supported"] if op != "LpNormalization"]
    (tmp_path / "rules.json").write_text(json.dumps(doc))
    monkeypatch.setenv("MODELIFT_RULES", str(tmp_path))
    code, out = run(capsys, "transform", files / "custom.json", tmp_path / "o.json")
    assert code == 3 and out["payload"]["substitutions"] == []


def _subprocess(*argv):
    return subprocess.run([sys.executable, "-m", "modelift", "-q", *map(str, argv)],
                          capture_output=True, check=False)


def test_subprocess_runs_are_byte_identical(files, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    first = _subprocess("transform", files / "fixture.json", a, "--seed", "3")
    second = _subprocess("transform", files / "fixture.json", b, "--seed", "3")
    assert first.returncode == 0 and first.stdout == second.stdout
    assert a.read_bytes() == b.read_bytes()
