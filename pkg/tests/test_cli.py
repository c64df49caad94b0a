import hashlib
import importlib.resources
import json
import os
import subprocess
import sys
import xml.etree.ElementTree as ET

import jsonschema
import numpy as np
import pytest

from nctest import cli
from nctest.data import load_csv
from nctest.localfdr import cdf_threshold
from nctest.procedures import bh
from nctest.ranc import ranc_pvalues
from nctest.stepup import stepup_threshold


def _schema(name):
    ref = importlib.resources.files("nctest.schemas").joinpath(f"{name}.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def _run(capsys, args):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _payload(capsys, args, schema=None):
    code, out, err = _run(capsys, args)
    assert code == 0, err
    payload = json.loads(out)
    if schema is not None:
        jsonschema.validate(payload, _schema(schema))
    return payload


@pytest.fixture
def toy_csv(tmp_path):
    rng = np.random.default_rng(5)
    values = rng.normal(size=12)
    values[:4] -= 50.0
    controls = rng.normal(size=15)
    lines = ["id,value,role"]
    lines += [f"t{k},{float(v)!r},test" for k, v in enumerate(values)]
    lines += [f"c{k},{float(v)!r},nc" for k, v in enumerate(controls)]
    path = tmp_path / "toy.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def rich_csv(tmp_path):
    # subgroups and paired columns so null-fit and falsify have inputs
    rng = np.random.default_rng(9)
    lines = ["id,value,role,subgroup,treatment,control"]
    for k in range(120):
        t = rng.normal()
        c = rng.normal()
        lines.append(f"t{k},{float(t - c)!r},test,,{float(t)!r},{float(c)!r}")
    for k in range(60):
        t = rng.normal()
        c = rng.normal()
        label = "east" if k % 2 else "west"
        lines.append(f"c{k},{float(t - c)!r},nc,{label},{float(t)!r},{float(c)!r}")
    path = tmp_path / "rich.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_analyze_bh_matches_library(capsys, toy_csv):
    payload = _payload(
        capsys,
        ["analyze", "--in", toy_csv, "--procedure", "bh", "--q", "0.2"],
        schema="analyze",
    )
    expected = bh(ranc_pvalues(load_csv(toy_csv)), 0.2)
    assert expected.n_rejected > 0
    assert sorted(payload["result"]["rejected_ids"]) == sorted(expected.rejected)
    assert payload["result"]["n_rejected"] == expected.n_rejected
    assert payload["pvalue_kind"] == "ranc"


def test_analyze_manifest_traces_invocation(capsys, toy_csv):
    payload = _payload(capsys, ["analyze", "--in", toy_csv, "--q", "0.2"])
    manifest = payload["manifest"]
    assert manifest["subcommand"] == "analyze"
    assert manifest["flags"]["q"] == 0.2
    assert manifest["flags"]["procedure"] == "bh"
    digest = hashlib.sha256(open(toy_csv, "rb").read()).hexdigest()
    assert manifest["input_sha256"] == digest
    assert manifest["seed"] == 0
    assert "created_utc" in manifest


def test_analyze_direction_flips_orientation(capsys, toy_csv, tmp_path):
    flipped = tmp_path / "flipped.csv"
    rows = open(toy_csv).read().splitlines()
    out = [rows[0]]
    for line in rows[1:]:
        rid, value, role = line.split(",")
        out.append(f"{rid},{-float(value)!r},{role}")
    flipped.write_text("\n".join(out) + "\n")
    small = _payload(capsys, ["analyze", "--in", toy_csv])
    large = _payload(capsys, ["analyze", "--in", str(flipped), "--direction", "large"])
    assert small["pvalues"] == large["pvalues"]


def test_analyze_global_test(capsys, toy_csv):
    # four signals at p = 1/16 put the Simes statistic at 12/16/4 = 0.1875
    payload = _payload(
        capsys,
        ["analyze", "--in", toy_csv, "--procedure", "simes", "--alpha", "0.2"],
        schema="analyze",
    )
    assert payload["result"]["reject_global"] is True
    assert payload["result"]["parameters"]["alpha"] == 0.2
    strict = _payload(
        capsys,
        ["analyze", "--in", toy_csv, "--procedure", "simes", "--alpha", "0.1"],
        schema="analyze",
    )
    assert strict["result"]["reject_global"] is False


def test_analyze_stepup_alias(capsys, toy_csv):
    payload = _payload(
        capsys,
        ["analyze", "--in", toy_csv, "--procedure", "stepup", "--q", "0.2"],
        schema="stepup",
    )
    expected = stepup_threshold(load_csv(toy_csv), lam=1.0, q=0.2)
    assert payload["result"]["n_rejected"] == expected.n_rejected


def test_stepup_bundle(capsys, toy_csv, tmp_path):
    out = tmp_path / "bundle"
    code, _, err = _run(
        capsys,
        ["stepup", "--in", toy_csv, "--q", "0.2", "--out", str(out), "--plots", "svg"],
    )
    assert code == 0, err
    names = sorted(os.listdir(out))
    assert names == ["manifest.json", "plot.svg", "result.csv", "result.json"]
    payload = json.loads((out / "result.json").read_text())
    jsonschema.validate(payload, _schema("stepup"))
    expected = stepup_threshold(load_csv(toy_csv), lam=1.0, q=0.2)
    assert sorted(payload["result"]["rejected_ids"]) == sorted(expected.rejected)
    first = (out / "result.csv").read_text().splitlines()[0]
    assert first.startswith("# manifest: ")
    stable = json.loads(first[len("# manifest: "):])
    assert stable["subcommand"] == "stepup"
    assert "created_utc" not in stable
    assert "out" not in stable["flags"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "stepup"
    ET.fromstring((out / "plot.svg").read_text())


def test_localfdr_requires_parameters(capsys, toy_csv):
    code, _, err = _run(capsys, ["localfdr", "--in", toy_csv])
    assert code == 1
    assert "lambda" in err


def test_localfdr_matches_library(capsys, toy_csv):
    payload = _payload(
        capsys, ["localfdr", "--in", toy_csv, "--lambda", "1.0"], schema="localfdr"
    )
    expected = cdf_threshold(load_csv(toy_csv), 1.0)
    assert sorted(payload["threshold"]["rejected_ids"]) == sorted(expected.rejected)
    assert payload["threshold"]["tau_hat"] == expected.tau_hat
    assert "curve" not in payload


def test_localfdr_level_over_pi(capsys, toy_csv):
    payload = _payload(
        capsys,
        ["localfdr", "--in", toy_csv, "--q", "0.2", "--pi", "0.8"],
        schema="localfdr",
    )
    assert payload["threshold"]["lambda"] == pytest.approx(0.25)
    assert payload["curve"]["pi"] == 0.8


def test_null_fit_table(capsys, rich_csv, tmp_path):
    out = tmp_path / "nf"
    code, _, err = _run(capsys, ["null-fit", "--in", rich_csv, "--out", str(out)])
    assert code == 0, err
    payload = json.loads((out / "result.json").read_text())
    jsonschema.validate(payload, _schema("null-fit"))
    assert len(payload["table"]) == 12
    csv_lines = (out / "result.csv").read_text().splitlines()
    assert len(csv_lines) == 2 + 12


def test_null_fit_source_aliases(capsys, rich_csv):
    payload = _payload(
        capsys,
        ["null-fit", "--in", rich_csv, "--sources", "nc", "--methods", "mad2,ecdf"],
        schema="null-fit",
    )
    assert [row["source"] for row in payload["table"]] == ["negative_controls"] * 2
    assert [row["method"] for row in payload["table"]] == ["mad2", "ecdf"]
    code, _, err = _run(capsys, ["null-fit", "--in", rich_csv, "--sources", "bogus"])
    assert code == 1 and "bogus" in err


def test_falsify_output(capsys, rich_csv, tmp_path):
    out = tmp_path / "fal"
    code, _, err = _run(
        capsys, ["falsify", "--in", rich_csv, "--out", str(out), "--plots", "svg"]
    )
    assert code == 0, err
    payload = json.loads((out / "result.json").read_text())
    jsonschema.validate(payload, _schema("falsify"))
    assert payload["subgroups"] == ["east", "west"]
    assert payload["pvalues"][0][1] == payload["pvalues"][1][0]
    assert "east|west" in payload["qq"]
    ET.fromstring((out / "plot.svg").read_text())


def test_permtest_deterministic(capsys, toy_csv):
    args = ["permtest", "--in", toy_csv, "--reps", "200", "--seed", "3"]
    first = _payload(capsys, args, schema="permtest")
    second = _payload(capsys, args)
    assert first["p_value"] == second["p_value"]
    assert 0 < first["p_value"] <= 1
    assert first["statistic"] == "simes_min_ratio"
    assert first["null_summary"]["q05"] <= first["null_summary"]["q95"]


def test_simulate_table1_byte_identical(capsys, tmp_path):
    # identical computation written to two places must match exactly
    out = tmp_path / "report.csv"
    other = tmp_path / "elsewhere" / "report.csv"
    base = ["simulate", "--preset", "table1", "--reps", "50", "--seed", "7"]
    code, _, err = _run(capsys, base + ["--out", str(out)])
    assert code == 0, err
    first = out.read_bytes()
    code, _, _ = _run(capsys, base + ["--out", str(other)])
    assert code == 0
    assert other.read_bytes() == first
    assert b"created_utc" not in first
    assert (tmp_path / "report.json").exists()
    payload = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(payload, _schema("simulate"))
    assert len(payload["cells"]) == 6


def test_simulate_b1(capsys):
    payload = _payload(
        capsys, ["simulate", "--preset", "b1", "--reps", "20000"], schema="simulate"
    )
    assert payload["exact"]["p_a"] == pytest.approx(4 / 9, abs=1e-9)
    assert payload["exact"]["p_b"] == pytest.approx(5 / 12, abs=1e-9)
    assert payload["monte_carlo"]["p_a"] > payload["monte_carlo"]["p_b"]


def test_simulate_simes_perm(capsys):
    payload = _payload(
        capsys, ["simulate", "--preset", "simes-perm", "--reps", "2000"],
        schema="simulate",
    )
    assert set(payload["reject_rates"]) == {"25", "500"}


def test_simulate_b2(capsys):
    payload = _payload(
        capsys, ["simulate", "--preset", "b2", "--reps", "20"], schema="simulate"
    )
    assert 0 <= payload["chi2_reject_rate"] <= 1
    assert 0 <= payload["perm_reject_rate"] <= 1


def test_simulate_power_curve(capsys, tmp_path):
    out = tmp_path / "power"
    code, _, err = _run(
        capsys,
        ["simulate", "--preset", "power-vs-m", "--reps", "20", "--out", str(out),
         "--plots", "svg"],
    )
    assert code == 0, err
    payload = json.loads((out / "result.json").read_text())
    jsonschema.validate(payload, _schema("simulate"))
    assert payload["m"] == [25, 50, 100, 200, 400]
    assert set(payload["power"]) == {"bh_raw", "bh_ranc", "bh_oracle"}
    ET.fromstring((out / "plot.svg").read_text())


def test_exit_codes():
    cases = [
        (["analyze", "--nope"], 1),
        (["analyze"], 1),
        ([], 1),
        (["simulate", "--preset", "bogus"], 1),
        (["simulate", "--preset", "table1", "--reps", "0"], 1),
        (["analyze", "--in", "/nonexistent/x.csv"], 2),
    ]
    for args, want in cases:
        assert cli.main(args) == want, args


def test_plots_require_out(capsys, toy_csv):
    code, _, err = _run(capsys, ["analyze", "--in", toy_csv, "--plots", "svg"])
    assert code == 1
    assert "--out" in err


def test_missing_controls_exit_2(capsys, tmp_path):
    path = tmp_path / "nonc.csv"
    path.write_text("id,value,role\na,1.0,test\nb,2.0,test\n")
    code, _, err = _run(capsys, ["analyze", "--in", str(path)])
    assert code == 2
    assert "negative controls" in err


def test_threads_env_validated(capsys, monkeypatch):
    monkeypatch.setenv("NCTEST_THREADS", "zero")
    code, _, err = _run(capsys, ["simulate", "--preset", "simes-perm", "--reps", "50"])
    assert code == 1
    assert "NCTEST_THREADS" in err


def test_console_script_runs():
    result = subprocess.run(
        [sys.executable, "-c",
         "import sys; from nctest.cli import run; sys.argv = ['nctest', '--version']; sys.exit(run())"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "nctest 0.1.0" in result.stdout
