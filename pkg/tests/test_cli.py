import csv
import json
import xml.etree.ElementTree as ET

import pytest

from zicount import cli, data_path, harness
from zicount.calibration import GeneratorParams, marginal_zero_rate
from zicount.errors import UnreachableZeroRate

SVG = "{http://www.w3.org/2000/svg}"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- general

def test_exit_codes_distinct_and_documented(capsys):
    codes = [v for k, v in vars(cli).items() if k.startswith("EXIT_") and isinstance(v, int)]
    assert len(codes) == len(set(codes))
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    text = capsys.readouterr().out
    for code in codes:
        assert f"\n  {code} " in text


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        cli.main(["fit", "--data", "x.csv"])
    assert info.value.code == cli.EXIT_USAGE


# ---------------------------------------------------------------- fit

def test_fit_tiny_poisson(capsys, in_tmp):
    code, out, _ = run(capsys, "fit", "--data", data_path("tiny.csv"), "--model", "poisson", "--outcome", "y",
                       "--json", "fit.json")
    assert code == 0
    doc = json.loads((in_tmp / "fit.json").read_text())
    assert doc["coefficients"][0]["estimate"] == pytest.approx(0.693147, abs=1e-6)
    assert "(Intercept)" in out and "log-likelihood" in out


def test_fit_default_json_name(capsys, in_tmp):
    code, _, _ = run(capsys, "fit", "--data", data_path("trial.csv"), "--model", "nb", "--outcome", "days",
                     "--treatment", "arm", "--covariates", "baseline")
    assert code == 0
    doc = json.loads((in_tmp / "trial_nb_fit.json").read_text())
    assert [c["name"] for c in doc["coefficients"]] == ["(Intercept)", "arm", "baseline", "ln_k"]
    assert doc["effects"][0]["kind"] == "RR"


def test_fit_zip_reports_effects(capsys, in_tmp):
    code, out, _ = run(capsys, "fit", "--data", data_path("trial.csv"), "--model", "zip", "--outcome", "days",
                       "--treatment", "arm", "--covariates", "baseline", "--json", "z.json")
    assert code == 0
    for label in ("RR (arm)", "OR (zero:arm)", "IRR (arm)", "estimate", "std.err", " z ", " p"):
        assert label in out


def test_fit_zip_all_positive_boundary(capsys, in_tmp):
    code, out, err = run(capsys, "fit", "--data", data_path("tiny.csv"), "--model", "zip", "--outcome", "y",
                         "--json", "b.json")
    assert code == cli.EXIT_BOUNDARY
    assert "BoundaryZeroPart" in err
    doc = json.loads((in_tmp / "b.json").read_text())  # strict JSON, no Infinity
    assert doc["flags"] == ["BoundaryZeroPart"]


def test_fit_intercept_only_zip_equals_mzip(capsys, in_tmp):
    ll = {}
    for model in ("mzip", "zip"):
        code, _, _ = run(capsys, "fit", "--data", data_path("trial.csv"), "--model", model, "--outcome", "days",
                         "--json", f"{model}.json")
        assert code == 0
        ll[model] = json.loads((in_tmp / f"{model}.json").read_text())["loglik"]
    assert ll["zip"] == pytest.approx(ll["mzip"], abs=1e-6)


@pytest.mark.parametrize("text, match", [
    ("y,t\n1,0\nbad,1\n", "line 3, column 'y'"),
    ("y,t\n1,0\n2.5,1\n", "line 3, column 'y'"),
    ("z,t\n1,0\n", "unknown column"),
])
def test_fit_input_errors(capsys, in_tmp, text, match):
    (in_tmp / "d.csv").write_text(text)
    code, _, err = run(capsys, "fit", "--data", "d.csv", "--model", "poisson", "--outcome", "y", "--treatment", "t")
    assert code == cli.EXIT_INPUT
    assert match in err


# ---------------------------------------------------------------- calibrate

def test_calibrate_json(capsys):
    code, out, _ = run(capsys, "calibrate", "--zero-rate", 0.5, "--beta1", -0.2, "--gamma1", 0.5)
    assert code == 0
    doc = json.loads(out)
    assert doc["gamma0"] == 2 * doc["gamma2"]
    assert doc["beta0"] == pytest.approx(1.0, abs=1e-15)
    g = GeneratorParams(*(doc[k] for k in ("beta0", "beta1", "beta2", "gamma0", "gamma1", "gamma2")))
    assert marginal_zero_rate(g) == pytest.approx(0.5, abs=1e-8)


def test_calibrate_unreachable(capsys):
    code, _, err = run(capsys, "calibrate", "--zero-rate", 0.01, "--beta1", -0.2, "--gamma1", 0.5)
    assert code == cli.EXIT_UNREACHABLE
    assert "achievable interval is [0.1" in err


# ---------------------------------------------------------------- simulate

def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return path


def test_simulate_small_grid_and_rerun(capsys, in_tmp):
    cfg = write_config(in_tmp / "c.json", conditions=["C3", "C4"], ns=[100], zero_rates=[0.3], replications=12)
    code, _, err = run(capsys, "simulate", "--config", cfg, "--out", "a", "--seed", 5)
    assert code == 0
    assert "[2/2]" in err
    text = (in_tmp / "a" / "results.csv").read_text()
    assert text.splitlines()[0] == ",".join(cli.RESULT_COLUMNS)
    rows = read_rows(in_tmp / "a" / "results.csv")
    assert len(rows) == 14
    keys = [(r["condition"], float(r["beta1"]), int(r["n"]), float(r["zero_rate"]), r["test_name"]) for r in rows]
    assert keys == sorted(keys)
    assert {r["test_name"] for r in rows} == set(harness.TEST_NAMES)
    assert all(r["seed"] == "5" and r["replications"] == "12" for r in rows)
    scen = sorted((in_tmp / "a" / "scenarios").iterdir())
    assert len(scen) == 2 and json.loads(scen[0].read_text())["replications_completed"] == 12

    run(capsys, "simulate", "--config", cfg, "--out", "b", "--seed", 5)
    assert (in_tmp / "b" / "results.csv").read_text() == text


def test_simulate_worker_count_invariance(capsys, in_tmp):
    cfg = write_config(in_tmp / "c.json", conditions=["C1", "C4"], beta1_values=[-0.3, 0.0], ns=[100],
                       zero_rates=[0.2, 0.8], replications=10)
    outputs = []
    for threads in (1, 4, 8):
        assert run(capsys, "simulate", "--config", cfg, "--out", f"w{threads}", "--threads", threads)[0] == 0
        outputs.append((in_tmp / f"w{threads}" / "results.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_simulate_full_default_grid_rows(capsys, in_tmp):
    cfg = write_config(in_tmp / "c.json", replications=1)
    assert run(capsys, "simulate", "--config", cfg, "--out", "full", "--threads", 4)[0] == 0
    rows = read_rows(in_tmp / "full" / "results.csv")
    assert len(rows) == 224 * 7 == 1568
    # full-grid report: four figures, the null condition with its reference line
    assert run(capsys, "report", "--results", in_tmp / "full" / "results.csv", "--out", "figs")[0] == 0
    svgs = sorted(p.name for p in (in_tmp / "figs").iterdir())
    assert svgs == [f"rejection_rates_C{i}.svg" for i in range(1, 5)]
    c4 = (in_tmp / "figs" / "rejection_rates_C4.svg").read_text()
    assert 'class="reference-line"' in c4
    assert 'class="reference-line"' not in (in_tmp / "figs" / "rejection_rates_C1.svg").read_text()
    root = ET.fromstring((in_tmp / "figs" / "rejection_rates_C1.svg").read_text().split("?>", 1)[1])
    assert root.get("width") == "2880" and root.get("height") == "1440"  # 4 n-columns x 3 b1-rows


@pytest.mark.slow
def test_simulate_condition4_single_cell(capsys, in_tmp):
    cfg = write_config(in_tmp / "c.json", conditions=["C4"], ns=[100], zero_rates=[0.5])
    assert run(capsys, "simulate", "--config", cfg, "--out", "o", "--threads", 4)[0] == 0
    rows = {r["test_name"]: r for r in read_rows(in_tmp / "o" / "results.csv")}
    assert len(rows) == 7
    assert rows["mzip_b1"]["replications"] == "1000"
    assert 0.03 <= float(rows["mzip_b1"]["rejection_rate"]) <= 0.07


def test_simulate_calibration_failure_aborts(capsys, in_tmp, monkeypatch):
    def boom(target, *args, **kwargs):
        raise UnreachableZeroRate(target, 0.3, 0.9)

    called = []
    monkeypatch.setattr(harness, "solve_gamma2", boom)
    monkeypatch.setattr(cli, "run_grid", lambda *a, **k: called.append(1))
    cfg = write_config(in_tmp / "c.json", conditions=["C4"], ns=[100], zero_rates=[0.2])
    code, _, err = run(capsys, "simulate", "--config", cfg, "--out", "o")
    assert code == cli.EXIT_UNREACHABLE
    assert "nothing was run" in err and "C4" in err
    assert not called
    assert not (in_tmp / "o" / "results.csv").exists()


@pytest.mark.parametrize("config", [
    "{not json",
    '{"ns": [150]}',
    '{"zero_rates": [0.25]}',
    '{"conditions": ["C7"]}',
    '{"replications": 0}',
    '{"alpha": 1.5}',
    '{"speed": "fast"}',
    '{"zero_rate_reference": "treated"}',
    '[]',
])
def test_simulate_bad_config(capsys, in_tmp, config):
    (in_tmp / "c.json").write_text(config)
    code, _, err = run(capsys, "simulate", "--config", "c.json", "--out", "o")
    assert code == cli.EXIT_CONFIG
    assert "config" in err


def test_simulate_missing_config(capsys, in_tmp):
    assert run(capsys, "simulate", "--config", "nope.json", "--out", "o")[0] == cli.EXIT_CONFIG


def test_simulate_unwritable_output(capsys, in_tmp):
    (in_tmp / "blocker").write_text("")
    cfg = write_config(in_tmp / "c.json", conditions=["C4"], ns=[100], zero_rates=[0.2], replications=1)
    assert run(capsys, "simulate", "--config", cfg, "--out", in_tmp / "blocker" / "x")[0] == cli.EXIT_OUTPUT


# ---------------------------------------------------------------- report

HEADER = ",".join(cli.RESULT_COLUMNS)


def test_report_empty_csv(capsys, in_tmp):
    for name, text in (("none.csv", ""), ("header.csv", HEADER + "\n")):
        (in_tmp / name).write_text(text)
        code, _, _ = run(capsys, "report", "--results", name, "--out", "figs")
        assert code == cli.EXIT_EMPTY_RESULTS
        assert not (in_tmp / "figs").exists() or not any((in_tmp / "figs").iterdir())


def test_report_missing_column(capsys, in_tmp):
    cols = [c for c in cli.RESULT_COLUMNS if c != "failures"]
    (in_tmp / "r.csv").write_text(",".join(cols) + "\n")
    code, _, err = run(capsys, "report", "--results", "r.csv", "--out", "figs")
    assert code == cli.EXIT_SCHEMA
    assert "'failures'" in err


def test_report_single_scenario(capsys, in_tmp):
    lines = [HEADER] + [f"C4,0,0,100,0.5,{t},0.05,0,1000,1" for t in harness.TEST_NAMES]
    (in_tmp / "r.csv").write_text("\n".join(lines) + "\n")
    assert run(capsys, "report", "--results", "r.csv", "--out", "figs")[0] == 0
    files = list((in_tmp / "figs").iterdir())
    assert [f.name for f in files] == ["rejection_rates_C4.svg"]
    root = ET.parse(files[0]).getroot()
    assert root.get("width") == "720" and root.get("height") == "480"
    xs = {c.get("cx") for c in root.iter(f"{SVG}circle")}
    assert len(xs) == 1
    texts = [t.text for t in root.iter(f"{SVG}text")]
    assert "Zero rate" in texts and "Rejection rate" in texts
    for t in harness.TEST_NAMES:
        assert t in texts
    ref = [e for e in root.iter(f"{SVG}line") if e.get("class") == "reference-line"]
    assert len(ref) == 1 and ref[0].get("data-value") == "0.05"


def test_report_bad_value(capsys, in_tmp):
    (in_tmp / "r.csv").write_text(HEADER + "\nC4,0,0,abc,0.5,nb_b1,0.05,0,1000,1\n")
    assert run(capsys, "report", "--results", "r.csv", "--out", "figs")[0] == cli.EXIT_INPUT
