import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from finslerdet.cli import emit_report, load_config, main
from finslerdet.cli.output import dumps
from finslerdet.errors import (CheckFailedError, ConfigError, DimensionError, ExpressionParseError,
                               FieldEvaluationError, MissingArtifactsError, RandersConditionError)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(verb, config, out, *extra):
    return main([verb, "--config", str(config), "--out", str(out), *extra])


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_validate_example(tmp_path):
    assert run("validate", CONFIGS / "constant2d.ini", tmp_path) == 0
    doc = json.loads((tmp_path / "validate.json").read_text())
    assert doc["pass"] is True and doc["result"]["norm"] == 0.5
    assert doc["schema_version"] == 1
    assert (tmp_path / "validate.meta.json").is_file()


def test_flow_csv_final_row(tmp_path):
    assert run("flow", CONFIGS / "constant2d.ini", tmp_path) == 0
    rows = list(csv.reader((tmp_path / "flow.csv").open()))
    assert rows[0] == ["t", "x1", "x2", "v1", "v2"]
    t, x1, x2 = map(float, rows[-1][:3])
    assert abs(t - 1.0) <= 1e-9 and abs(x1 - 1.0) <= 1e-9 and abs(x2) <= 1e-9


def test_spectrum_csv(tmp_path):
    assert run("spectrum", CONFIGS / "spectrum.ini", tmp_path) == 0
    rows = list(csv.reader((tmp_path / "spectrum.csv").open()))
    assert rows[0] == ["index", "eigenvalue"]
    ev = np.array([float(r[1]) for r in rows[1:]])
    assert len(ev) == 128
    assert np.max(np.abs(ev - np.arange(-64, 64))) <= 1e-8


@pytest.mark.parametrize("config,verbs", [
    ("constant2d.ini", ["eval", "tensors", "connections", "average"]),
    ("curved2d.ini", ["validate", "eval", "tensors", "connections", "average", "flow"]),
    ("circle1d.ini", ["validate", "flow"]),
    ("compose.ini", ["compose"]),
    ("tabulated2d.ini", ["validate", "tensors", "connections"]),
])
def test_sample_configs_pass(tmp_path, config, verbs):
    for verb in verbs:
        assert run(verb, CONFIGS / config, tmp_path) == 0, verb
        assert json.loads((tmp_path / f"{verb}.json").read_text())["pass"]


def test_report_empty(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == MissingArtifactsError.exit_code
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["entries"] == [] and doc["pass"] is False and doc["missing"]


def test_report_one_entry(tmp_path):
    run("validate", CONFIGS / "constant2d.ini", tmp_path)
    summary, status = emit_report(tmp_path)
    assert status == 0 and summary["entry_count"] == 1
    entry = summary["entries"][0]
    assert entry["verb"] == "validate" and entry["pass"]
    assert {c["name"] for c in entry["checks"]} == {"metric_positive_definite", "randers_condition"}
    assert summary["provenance"]["seeds"] == [0]
    assert set(summary["provenance"]["versions"]) == {"finslerdet", "numpy", "scipy", "python"}


def test_report_lists_missing(tmp_path):
    run("flow", CONFIGS / "constant2d.ini", tmp_path)
    (tmp_path / "flow.csv").unlink()
    (tmp_path / "broken.json").write_text("{not json")
    summary, status = emit_report(tmp_path, require=("spectrum",))
    assert status == MissingArtifactsError.exit_code
    missing = {m["artifact"] for m in summary["missing"]}
    assert missing == {"flow.csv", "broken.json", "spectrum.json"}
    assert summary["entry_count"] == 1


def test_determinism_and_worker_independence(tmp_path):
    cfg = CONFIGS / "curved2d.ini"
    for out, workers in ((tmp_path / "a", "1"), (tmp_path / "b", "4")):
        for verb in ("average", "connections"):
            assert run(verb, cfg, out, "--workers", workers, "--no-cache") == 0
    for verb in ("average", "connections"):
        assert (tmp_path / "a" / f"{verb}.json").read_bytes() == (tmp_path / "b" / f"{verb}.json").read_bytes()


def test_cache_hit_reuses_and_rechecks(tmp_path):
    cfg = CONFIGS / "curved2d.ini"
    assert run("tensors", cfg, tmp_path) == 0
    first = (tmp_path / "tensors.json").read_bytes()
    assert json.loads((tmp_path / "tensors.meta.json").read_text())["cache"] == "miss"
    assert run("tensors", cfg, tmp_path) == 0
    meta = json.loads((tmp_path / "tensors.meta.json").read_text())
    assert meta["cache"] == "hit" and meta["cache_recheck"]
    assert (tmp_path / "tensors.json").read_bytes() == first


def test_cache_key_tracks_seed_and_params(tmp_path):
    cfg = CONFIGS / "curved2d.ini"
    run("validate", cfg, tmp_path)
    h0 = json.loads((tmp_path / "validate.json").read_text())["config_hash"]
    run("validate", cfg, tmp_path, "--seed", "9")
    doc = json.loads((tmp_path / "validate.json").read_text())
    assert doc["config_hash"] != h0 and doc["seed"] == 9
    assert json.loads((tmp_path / "validate.meta.json").read_text())["cache"] == "miss"


def test_samples_flag(tmp_path):
    run("validate", CONFIGS / "constant2d.ini", tmp_path, "--samples", "7")
    assert json.loads((tmp_path / "validate.json").read_text())["result"]["sample_count"] == 7


def test_no_temp_files_left(tmp_path):
    run("flow", CONFIGS / "constant2d.ini", tmp_path)
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


def test_json_format():
    text = dumps({"b": 0.1, "a": [1, 2.5, float("nan")], "c": {"z": True, "y": None}})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert "0.10000000000000001" in text and "null" in text
    assert json.loads(text)["c"] == {"y": None, "z": True}


@pytest.mark.parametrize("text,code", [
    ("[metric]\ndim = 2\nb1 = 0.5 + foo\n", ExpressionParseError.exit_code),
    ("[metric]\ndim = 2\nb1 = 0.5\n[eval]\ny = 1 0 0\n", DimensionError.exit_code),
    ("[metric]\ndim = 2\nb1 = 1.5\n", RandersConditionError.exit_code),
    ("[metric]\ndim = 1\nb1 = sqrt(x1)\n[eval]\nx = -0.5\ny = 1\n", FieldEvaluationError.exit_code),
    ("[metric]\ndim = 1\nb1 = @nope.txt\n", ConfigError.exit_code),
    ("[metric]\ndim = 2\nb3 = 0.1\n", DimensionError.exit_code),
    ("not an ini file", ConfigError.exit_code),
])
def test_error_exit_codes(tmp_path, text, code):
    path = write(tmp_path, text)
    verb = "eval" if "[eval]" in text else "validate"
    assert run(verb, path, tmp_path / "out") == code


def test_exit_codes_are_distinct():
    from finslerdet import errors
    classes = [c for c in vars(errors).values()
               if isinstance(c, type) and issubclass(c, errors.FinslerError)]
    codes = [c.exit_code for c in classes]
    assert len(codes) == len(set(codes)) == 11


def test_parse_error_position():
    cfg = load_config(text="[run]\nseed = 1\n\n[metric]\ndim = 1\nb1 = 0.1 * q\n")
    with pytest.raises(ExpressionParseError) as info:
        cfg.field()
    assert info.value.line == 6
    assert info.value.column == len("b1 = 0.1 * ") + 1


def test_failed_checks_exit_nonzero(tmp_path):
    path = write(tmp_path, "[metric]\ndim = 1\nlo = 0\nhi = 6.283185307179586\nperiodic = yes\n"
                           "b1 = 0.25\n[flow]\nx0 = 0\nt_final = 13\ndt = 1e-3\nperiod_axis = 1\n"
                           "expected_period = 12\n")
    assert run("flow", path, tmp_path / "out") == CheckFailedError.exit_code
    assert json.loads((tmp_path / "out" / "flow.json").read_text())["pass"] is False


def test_compose_over_norm_rejected(tmp_path):
    path = write(tmp_path, "[metric]\ndim = 2\nb1 = 0.8\n[metric2]\ndim = 2\nb1 = 0.8\n"
                           "[compose]\nmode = interacting\n")
    assert run("compose", path, tmp_path / "out") == RandersConditionError.exit_code


def test_compose_direct_sum(tmp_path):
    path = write(tmp_path, "[metric]\ndim = 1\nb1 = 0.3*sin(x1)\n[metric2]\ndim = 1\nb1 = 0.4\n"
                           "[compose]\nmode = direct_sum\n")
    assert run("compose", path, tmp_path / "out") == 0
    doc = json.loads((tmp_path / "out" / "compose.json").read_text())
    assert doc["result"]["cross_coupling"] == 0.0


def test_average_weight_expression(tmp_path):
    path = write(tmp_path, "[metric]\ndim = 2\nb1 = 0.5\n[average]\nweight = 1 + y1^2\n")
    assert run("average", path, tmp_path / "out") == 0
    path = write(tmp_path, "[metric]\ndim = 2\nb1 = 0.5\n[average]\nweight = 1 + p1\n", "bad.ini")
    assert run("average", path, tmp_path / "out2") == ExpressionParseError.exit_code


def test_entry_point(tmp_path):
    exe = shutil.which("finslerdet")
    cmd = [exe] if exe else [sys.executable, "-m", "finslerdet.cli"]
    res = subprocess.run(cmd + ["validate", "--config", str(CONFIGS / "constant2d.ini"),
                                "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run(cmd + ["report", "--out", str(tmp_path / "empty")], capture_output=True)
    assert res.returncode == MissingArtifactsError.exit_code
