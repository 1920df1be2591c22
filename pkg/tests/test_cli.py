import json
import os
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from causal_kit import cli
from causal_kit.sampling import Dataset, ancestral_sample

MODEL = str(resources.files("causal_kit") / "models" / "vaccine_toy.scm.txt")


def _schema(name):
    return json.loads((resources.files("causal_kit") / "schemas" / f"{name}.schema.json").read_text())


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory, vaccine):
    path = tmp_path_factory.mktemp("cli") / "data.csv"
    ancestral_sample(vaccine, 5000, 3).write_csv(path)
    return path


def test_validate_ok(capsys):
    code, out, _ = run(capsys, "validate", MODEL)
    assert code == 0 and out == "OK\n"
    code, out, _ = run(capsys, "validate", MODEL, "--format", "json")
    doc = json.loads(out)
    jsonschema.validate(doc, _schema("validate"))
    assert doc["valid"] and doc["errors"] == []


def test_validate_reports_spans(capsys, tmp_path):
    bad = tmp_path / "bad.scm.txt"
    bad.write_text("var a : {0,1} ~ bernoulli(0.5);\nvar y := b + ;\n")
    code, out, _ = run(capsys, "validate", bad, "--format", "json")
    doc = json.loads(out)
    jsonschema.validate(doc, _schema("validate"))
    assert code == 1 and not doc["valid"]
    assert doc["errors"][0]["line"] == 2


def test_ate(capsys):
    code, out, _ = run(capsys, "ate", MODEL, "--action", "a", "--outcome", "y")
    doc = json.loads(out)
    jsonschema.validate(doc, _schema("ate"))
    assert code == 0 and doc["estimate"] == pytest.approx(0.30, abs=1e-12)
    code, out, _ = run(capsys, "ate", MODEL, "--action", "a", "--outcome", "y", "--given", "x=1")
    assert json.loads(out)["condition"] == {"x": 1.0}


def test_exact(capsys):
    code, out, _ = run(capsys, "exact", MODEL, "--target", "y", "--do", "a=1")
    doc = json.loads(out)
    jsonschema.validate(doc, _schema("dist_table"))
    assert doc["probabilities"]["1"] == pytest.approx(0.65, abs=1e-12)
    code, out, _ = run(capsys, "exact", MODEL, "--target", "y", "--given", "a=1", "--format", "csv")
    assert code == 0 and out.startswith("y,prob\n")


def test_sample_is_reproducible(capsys, tmp_path):
    _, first, _ = run(capsys, "sample", MODEL, "-n", 20, "--seed", 5)
    _, again, _ = run(capsys, "sample", MODEL, "-n", 20, "--seed", 5)
    _, other, _ = run(capsys, "sample", MODEL, "-n", 20, "--seed", 6)
    assert first == again and first != other
    assert Dataset.from_csv(first).n_rows == 20
    out = tmp_path / "s.csv"
    run(capsys, "sample", MODEL, "-n", 20, "--seed", 5, "-o", out)
    assert out.read_text() == first


@pytest.mark.parametrize("method, extra", [
    ("naive", []), ("ols", ["--covariates", "x"]), ("regression", ["--covariates", "x"]),
    ("ipw", ["--covariates", "x"]), ("dr", ["--covariates", "x"]), ("matching", ["--covariates", "x"]),
    ("dml", ["--covariates", "x"]),
])
def test_estimate_reports_match_schema(capsys, data_csv, method, extra):
    argv = ["estimate", method, data_csv, "--action", "a", "--outcome", "y", "--bootstrap", 20, *extra]
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    doc = json.loads(out)
    jsonschema.validate(doc, _schema("estimate_report"))
    assert doc["method"] == method
    assert run(capsys, *argv)[1] == out


def test_ipw_estimate_example(capsys, data_csv):
    code, out, _ = run(capsys, "estimate", "ipw", data_csv, "--action", "a", "--outcome", "y", "--covariates", "x")
    doc = json.loads(out)
    assert doc["method"] == "ipw" and doc["estimate"] == pytest.approx(0.30, abs=0.05)


def test_trial(capsys, tmp_path):
    log = tmp_path / "log.csv"
    argv = ["trial", MODEL, "--steps", 500, "--schedule-eps", "geom:1,0.99,0.1", "--schedule-beta", "const:0.5",
            "--covariates", "x", "--conditional", "--log", log, "--seed", 4]
    code, out, _ = run(capsys, *argv)
    doc = json.loads(out)
    jsonschema.validate(doc, _schema("trial_report"))
    assert code == 0 and doc["steps"] == 500
    text = log.read_text()
    assert text.startswith("t,e,a,y,x\n") and len(text.splitlines()) == 501
    assert run(capsys, *argv)[1] == out and log.read_text() == text


def test_repro(capsys):
    code, out, _ = run(capsys, "repro", "do-surgery", "--format", "json")
    doc = json.loads(out)
    jsonschema.validate(doc, _schema("repro"))
    assert code == 0 and doc["passed"]
    code, out, _ = run(capsys, "repro", "--list")
    assert code == 0 and "rct-equivalence" in out


def test_usage_errors(capsys):
    code, _, err = run(capsys, "estimate", "ipv", "x.csv", "--action", "a", "--outcome", "y")
    assert code == 2 and "ipw" in err
    code, _, err = run(capsys, "repro", "do-surgry")
    assert code == 2 and "do-surgery" in err
    with pytest.raises(SystemExit) as exc:
        cli.main(["ate", MODEL, "--acton", "a"])
    assert exc.value.code == 2
    assert "--action" in capsys.readouterr().err


def test_domain_errors(capsys, tmp_path):
    code, _, err = run(capsys, "ate", MODEL, "--action", "q", "--outcome", "y")
    assert code == 1
    code, _, err = run(capsys, "validate", tmp_path / "missing.txt")
    assert code == 1 and "missing.txt" in err
    code, _, err = run(capsys, "trial", MODEL, "--steps", 10, "--schedule-eps", "const:2")
    assert code == 1


def test_module_entry_and_seed_env(tmp_path):
    env = dict(os.environ, CAUSAL_KIT_SEED="77")
    argv = [sys.executable, "-m", "causal_kit", "sample", MODEL, "-n", "5"]
    by_env = subprocess.run(argv, capture_output=True, text=True, env=env, check=True).stdout
    by_flag = subprocess.run(argv + ["--seed", "77"], capture_output=True, text=True, check=True).stdout
    assert by_env == by_flag


def test_estimate_iv_did_rdd(capsys, tmp_path):
    import numpy as np

    gen = np.random.default_rng(1)
    z = gen.normal(size=300)
    a = z + gen.normal(size=300)
    pre = gen.normal(size=300)
    g = (gen.random(300) < 0.5).astype(float)
    x = gen.uniform(-1, 1, 300)
    cols = {"z": z, "a": a, "y": 2 * a, "g": g, "pre": pre, "post": pre + g, "x": x, "r": x + (x >= 0)}
    path = tmp_path / "d.csv"
    Dataset(list(cols), cols).write_csv(path)
    runs = {
        "iv": ["--action", "a", "--outcome", "y", "--instrument", "z"],
        "did": ["--action", "g", "--y-pre", "pre", "--y-post", "post"],
        "rdd": ["--running", "x", "--outcome", "r"],
    }
    for method, extra in runs.items():
        code, out, err = run(capsys, "estimate", method, path, "--bootstrap", 0, *extra)
        assert code == 0, err
        doc = json.loads(out)
        jsonschema.validate(doc, _schema("estimate_report"))
        assert doc["method"] == method
        assert doc["estimate"] == pytest.approx({"iv": 2.0, "did": 1.0, "rdd": 1.0}[method], abs=1e-6)
    code, _, err = run(capsys, "estimate", "iv", path, "--action", "a", "--outcome", "y")
    assert code == 2 and "--instrument" in err
