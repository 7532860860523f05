import csv
import json
from pathlib import Path

import numpy as np
import pytest
from scipy import special

from zabs.cli import main, refit_without
from zabs.estimation import fit, wald_inference
from zabs.io import Dataset, RunConfig, read_csv
from zabs.synthetic import SIMPLE

ROOT = Path(__file__).resolve().parents[1]
BIAXIAL_CONFIG = ROOT / "configs" / "biaxial.toml"

SIMPLE_TOML = """
response = "y"
data = "data.csv"

[model]
mean = "log ~ x"
precision = "log ~ z"
zeroprob = "probit ~ x"

[fit]
{fit}

[diagnostics]
replicates = 39
seed = 5
"""


def write_csv(path, data: dict):
    names = list(data)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(data[n] for n in names)):
            w.writerow([repr(float(v)) for v in row])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def simple_run(tmp_path):
    def make(data=None, fit_section="", model=None):
        data = SIMPLE.simulate(250, np.random.default_rng(31)) if data is None else data
        write_csv(tmp_path / "data.csv", data)
        text = SIMPLE_TOML.format(fit=fit_section)
        if model is not None:
            text = text.replace('mean = "log ~ x"\nprecision = "log ~ z"\nzeroprob = "probit ~ x"', model)
        (tmp_path / "run.toml").write_text(text)
        return tmp_path, data
    return make


def test_biaxial_fit_report(tmp_path, capsys):
    assert main(["fit", "--config", str(BIAXIAL_CONFIG), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "1.276" in out and "47.955" in out and "9.817" in out
    doc = json.loads((tmp_path / "o" / "fit.json").read_text())
    np.testing.assert_allclose(doc["theta"], [1.276, 47.954, 9.817], rtol=5e-3)
    assert doc["aic"] == pytest.approx(-2 * doc["loglik"] + 6)
    for name in ("inference.csv", "trace.csv", "report.txt"):
        assert (tmp_path / "o" / name).exists()


def test_machine_output_matches_library(simple_run):
    d, data = simple_run()
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 0
    rows = read_rows(d / "o" / "inference.csv")
    ds = read_csv(d / "data.csv", ["x", "z", "y"], "y")
    table = wald_inference(fit(SIMPLE.model, ds))
    assert [float(r["estimate"]) for r in rows] == list(table.estimate)
    assert [float(r["se"]) for r in rows] == list(table.se)
    report = (d / "o" / "report.txt").read_text()
    assert f"{table.estimate[0]:.3f}" in report


def test_intercept_only_zero_model_reports_fraction(simple_run):
    d, data = simple_run(model='mean = "log ~ x"\nprecision = "log ~ z"\nzeroprob = "logit ~ 1"')
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 0
    doc = json.loads((d / "o" / "fit.json").read_text())
    nu_hat = special.expit(doc["theta"][-1])
    assert nu_hat == pytest.approx(doc["n0"] / doc["n"], abs=1e-12)


def test_malformed_cell_exit_2(simple_run, capsys):
    d, _ = simple_run()
    lines = (d / "data.csv").read_text().splitlines()
    cells = lines[3].split(",")
    cells[1] = "abc"
    lines[3] = ",".join(cells)
    (d / "data.csv").write_text("\n".join(lines) + "\n")
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 2
    err = capsys.readouterr().err
    assert "row 3" in err and "'z'" in err


def test_missing_value_exit_2(simple_run, capsys):
    d, _ = simple_run()
    lines = (d / "data.csv").read_text().splitlines()
    lines[5] = "NA," + lines[5].split(",", 1)[1]
    (d / "data.csv").write_text("\n".join(lines) + "\n")
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 2
    assert "row 5" in capsys.readouterr().err


@pytest.mark.parametrize("mutation", [
    lambda t: t.replace('mean = "log ~ x"', 'mean = "log x"'),
    lambda t: t.replace('mean = "log ~ x"', 'mean = "logit ~ x"'),
    lambda t: t.replace("[fit]", "[fit]\nmax_iter = 'ten'"),
    lambda t: t.replace("[fit]", "[fit]\nbogus = 1"),
    lambda t: t.replace('mean = "log ~ x"', 'mean = "log ~ missing_column"'),
    lambda t: t + "\n[[broken",
])
def test_config_errors_exit_1(simple_run, mutation):
    d, _ = simple_run()
    cfg = d / "run.toml"
    cfg.write_text(mutation(cfg.read_text()))
    assert main(["fit", "--config", str(cfg), "--out", str(d / "o")]) == 1


def test_zeros_without_zero_model_exit_1(simple_run):
    d, _ = simple_run(model='mean = "log ~ x"\nprecision = "log ~ z"')
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 1


def test_nonconvergence_exit_3_writes_trace(simple_run):
    d, _ = simple_run(fit_section="max_iter = 2")
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 3
    assert len(read_rows(d / "o" / "trace.csv")) == 2


def test_diagnose_outputs_and_determinism(simple_run):
    d, _ = simple_run()
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 0
    for sub in ("a", "b"):
        assert main(["diagnose", "--fit", str(d / "o" / "fit.json"), "--out", str(d / sub)]) == 0
    for name in ("residuals.csv", "envelope.csv", "influence.csv", "dmax.csv",
                 "diagnostics.json", "flagged.json", "qq_envelope.svg",
                 "residuals_vs_fitted.svg", "ci_index.svg", "dmax_index.svg"):
        assert (d / "a" / name).read_bytes() == (d / "b" / name).read_bytes(), name
    infl = read_rows(d / "a" / "influence.csv")
    flagged = json.loads((d / "a" / "flagged.json").read_text())
    for block in ("beta", "alpha", "gamma", "theta"):
        C = np.array([float(r[f"C_{block}"]) for r in infl])
        assert flagged[block] == [int(i) + 1 for i in np.flatnonzero(C > 2 * C.mean())]


def test_diagnose_needs_seed(simple_run):
    d, _ = simple_run()
    cfg = d / "run.toml"
    cfg.write_text(cfg.read_text().replace("seed = 5", ""))
    assert main(["fit", "--config", str(cfg), "--out", str(d / "o")]) == 0
    assert main(["diagnose", "--fit", str(d / "o" / "fit.json"), "--out", str(d / "a")]) == 1
    assert main(["diagnose", "--fit", str(d / "o" / "fit.json"), "--out", str(d / "a"),
                 "--seed", "3"]) == 0


def test_injected_outlier_in_flagged_list(simple_run):
    data = SIMPLE.simulate(250, np.random.default_rng(32))
    k = int(np.flatnonzero(data["y"] > 0)[10])
    data["y"][k] *= 40
    d, _ = simple_run(data=data)
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 0
    assert main(["diagnose", "--fit", str(d / "o" / "fit.json"), "--out", str(d / "a")]) == 0
    assert k + 1 in json.loads((d / "a" / "flagged.json").read_text())["theta"]


def test_refit_without_cli(simple_run):
    d, _ = simple_run()
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 0
    fitj = str(d / "o" / "fit.json")
    assert main(["refit-without", "--fit", fitj, "--drop", "", "--out", str(d / "r0")]) == 0
    same = json.loads((d / "r0" / "comparison.json").read_text())
    assert all(r["estimate_full"] == r["estimate_reduced"] for r in same["parameters"])
    assert main(["refit-without", "--fit", fitj, "--drop", "2,20", "--out", str(d / "r")]) == 0
    comp = json.loads((d / "r" / "comparison.json").read_text())
    assert comp["n_reduced"] == 248 and comp["dropped"] == [2, 20]
    assert comp["inferential_change"] is False
    everything = ",".join(str(i) for i in range(1, 251))
    assert main(["refit-without", "--fit", fitj, "--drop", everything, "--out", str(d / "x")]) == 2
    assert main(["refit-without", "--fit", fitj, "--drop", "0", "--out", str(d / "x")]) == 1


def test_quadrature_tolerance_env_is_validated(simple_run, monkeypatch):
    d, _ = simple_run(fit_section='lambda_method = "quadrature"',
                      model='mean = "log ~ x"\nprecision = "log ~ 1"\nzeroprob = "probit ~ x"')
    monkeypatch.setenv("ZABS_QUAD_TOL", "-1")
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 1
    monkeypatch.setenv("ZABS_QUAD_TOL", "1e-10")
    assert main(["fit", "--config", str(d / "run.toml"), "--out", str(d / "o")]) == 0


@pytest.mark.slow
def test_removing_duplicated_influential_point():
    hits = 0
    for rep in range(100):
        rng = np.random.default_rng([rep, 900])
        data = SIMPLE.simulate(200, rng)
        # a high-leverage, outlying positive response, entered twice
        data = {k: np.append(v, [0.0, 0.0]) for k, v in data.items()}
        data["x"][-2:] = 1.0
        data["y"][-2:] = 15 * np.exp(SIMPLE.theta[0] + SIMPLE.theta[1])
        ds = Dataset(data, "y")
        base = fit(SIMPLE.model, ds)

        cfg = RunConfig(SIMPLE.model, base.options)
        influential = refit_without(base, cfg, ds, [201, 202])
        random_pt = refit_without(base, cfg, ds, [int(rng.integers(1, 201))])
        change = lambda c: abs(c["parameters"][1]["estimate_reduced"] - c["parameters"][1]["estimate_full"])
        hits += change(influential) > change(random_pt)
    assert hits >= 90


def test_clean_removal_keeps_significance():
    rng = np.random.default_rng(41)
    ds = Dataset(SIMPLE.simulate(600, rng), "y")
    base = fit(SIMPLE.model, ds)

    drop = sorted(rng.choice(600, 3, replace=False) + 1)
    assert refit_without(base, RunConfig(SIMPLE.model, base.options), ds, [int(i) for i in drop])["inferential_change"] is False
