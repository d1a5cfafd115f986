import json

import jsonschema
import pytest
import yaml

from slowpoints.errors import NumericalError
from slowpoints.harness import cli, io, pipelines
from slowpoints.harness.config import ConfigError, build_config, load_config

SMALL = {
    "exponent": ["--theta", "[1.4, 2.0]", "--trials", "4000", "--sub-densities", "[]"],
    "slowset": ["--dx", "0.0625", "--t-min", "0.00390625", "--t-max", "0.015625",
                "--replicas", "1", "--per-octave", "2", "--lambda-hat", "0.2",
                "--lambda-se", "0.01"],
}


def run(args, out):
    code = cli.main([*args, "--out", str(out)])
    return code


def test_cov_prints_value(tmp_path, capsys):
    assert run(["cov", "--t", "1", "--s", "1", "--x", "0", "--y", "0"], tmp_path) == 0
    assert capsys.readouterr().out.strip() == "0.398942"
    meta, cols, rows = io.read_csv(tmp_path / "cov.csv")
    assert cols[-1] == "cov" and float(rows[0][-1]) == pytest.approx(0.3989422804014327)
    assert meta["seed"] and meta["config_digest"]


def test_stability_violation_is_invalid_input(tmp_path, capsys):
    code = run(["simulate", "--dx", "0.01", "--dt", "0.001"], tmp_path)
    assert code == 2
    err = capsys.readouterr().err
    assert "stability" in err and "parameters.dt" in err
    assert not list(tmp_path.glob("*.csv"))


def test_unknown_key_rejected(tmp_path, capsys):
    assert run(["cov", "--set", "bogus=1"], tmp_path) == 2
    assert "bogus" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        build_config("cov", {"sigma": {}}, {}, None, None)


def test_unknown_sigma_key(tmp_path, capsys):
    assert run(["simulate", "--set", "sigma={kind: linear, p1: 1, zz: 2}"], tmp_path) == 2
    assert "zz" in capsys.readouterr().err


def test_bad_flag_is_exit_2(tmp_path):
    assert run(["cov", "--nope", "1"], tmp_path) == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch, capsys):
    def boom(cfg, out, manifest):
        raise NumericalError("factorization failed", {"min_eig": -1.0})
    monkeypatch.setitem(pipelines.RUNNERS, "sample-h", boom)
    monkeypatch.setitem(cli.RUNNERS, "sample-h", boom)
    assert run(["sample-h"], tmp_path) == 3
    assert "min_eig" in capsys.readouterr().err


def test_exponent_bytes_reproducible_and_thread_independent(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run(["exponent", *SMALL["exponent"], "--seed", "5"], a) == 0
    assert run(["exponent", *SMALL["exponent"], "--seed", "5"], b) == 0
    assert run(["exponent", *SMALL["exponent"], "--seed", "5", "--threads", "3"], c) == 0
    for name in ("survival.csv", "exponent.json", "survival.svg", "lambda.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
        assert (a / name).read_bytes() == (c / name).read_bytes()
    d = tmp_path / "d"
    assert run(["exponent", *SMALL["exponent"], "--seed", "6"], d) == 0
    assert (a / "survival.csv").read_bytes() != (d / "survival.csv").read_bytes()


def test_json_outputs_match_schemas(tmp_path):
    assert run(["exponent", *SMALL["exponent"]], tmp_path) == 0
    for name, schema in (("exponent.json", "exponent"), ("manifest-exponent.json", "manifest")):
        doc = json.loads((tmp_path / name).read_text())
        jsonschema.validate(doc, io.load_schema(schema))
    man = json.loads((tmp_path / "manifest-exponent.json").read_text())
    assert set(man["outputs"]) >= {"survival.csv", "exponent.json"}
    assert man["config"]["parameters"]["trials"] == 4000


def test_schema_rejects_malformed(tmp_path):
    with pytest.raises(jsonschema.ValidationError):
        io.write_json(tmp_path / "x.json", {"experiment": 3}, "manifest")


def test_csv_roundtrip_full_precision(tmp_path):
    x = 0.1 + 0.2
    io.write_csv(tmp_path / "r.csv", ["v"], [[x], [True], [None]], {"k": "v"})
    meta, cols, rows = io.read_csv(tmp_path / "r.csv")
    assert meta == {"k": "v"} and cols == ["v"]
    assert float(rows[0][0]) == x and rows[1][0] == "true" and rows[2][0] == ""


def test_config_digest_ignores_threads():
    a = build_config("cov", None, {}, 1, 1)
    b = build_config("cov", None, {}, 1, 4)
    c = build_config("cov", None, {"t": 2.0}, 1, 1)
    assert a.digest() == b.digest() != c.digest()


def test_run_config_yaml_and_env_out(tmp_path, monkeypatch, capsys):
    cfgp = tmp_path / "c.yaml"
    cfgp.write_text(yaml.safe_dump({"experiment": "cov", "seed": 3,
                                    "parameters": {"t": 2.0, "s": 1.0}}))
    monkeypatch.setenv("SLOWPOINTS_OUT", str(tmp_path / "env"))
    assert cli.main(["run", str(cfgp)]) == 0
    assert capsys.readouterr().out.strip() == "0.206508"  # (sqrt(3) - 1) / (2 sqrt(pi))
    assert (tmp_path / "env" / "cov.csv").exists()
    cfg = load_config(cfgp, {"x": 0.5}, None, None)
    assert cfg.seed == 3 and cfg.parameters["x"] == 0.5


def test_run_by_name(tmp_path, capsys):
    assert run(["run", "cov", "--t", "0.5"], tmp_path) == 0
    assert (tmp_path / "manifest-cov.json").exists()


def test_report_after_cov_only(tmp_path, capsys):
    assert run(["cov"], tmp_path) == 0
    capsys.readouterr()
    assert cli.main(["report", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "cov" in text and "Not run" in text and "slowset" in text
    assert (tmp_path / "report.md").exists()


def test_report_empty_directory(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path)]) == 2


def test_slowset_small_run(tmp_path):
    assert run(["slowset", *SMALL["slowset"]], tmp_path) == 0
    doc = json.loads((tmp_path / "slowset.json").read_text())
    assert doc["lambda_hat"] == 0.2
    meta, cols, rows = io.read_csv(tmp_path / "census.csv")
    assert cols == ["replica", "level", "count"] and int(rows[0][2]) <= 1
