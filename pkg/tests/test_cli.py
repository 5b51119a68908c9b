import json
import logging
import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from robflogit.cli import fit_to_dict, load_fit, main, read_curves, read_sample
from robflogit.diagnostics import flag_outliers, predict_probs
from robflogit.fit import FitConfig, FitResult, select_k
from robflogit.funcbasis import Grid, make_basis
from robflogit.weights import WeightSpec

DATA = Path(__file__).parent / "data"
CURVES, RESPONSES = str(DATA / "curves.csv"), str(DATA / "responses.csv")


def run(*argv):
    return main([str(a) for a in argv])


def write_curves(path, grid, values):
    lines = [",".join(format(v, ".17g") for v in grid)]
    lines += [",".join(format(v, ".17g") for v in row) for row in values]
    path.write_text("\n".join(lines) + "\n")


def write_responses(path, y):
    path.write_text("".join(f"{int(v)}\n" for v in y))


def test_classical_fit_matches_oracle_and_golden_files(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--loss", "classical",
               "--weights", "unit", "--k", 5, "--out", tmp_path) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    oracle = json.loads((DATA / "oracle_classical_k5.json").read_text())
    assert fit["alpha"] == pytest.approx(oracle["alpha"], abs=1e-6)
    assert np.max(np.abs(np.array(fit["coeffs"]) - oracle["coeffs"])) <= 1e-6
    for name in ("fit.json", "beta_hat.csv"):
        assert (tmp_path / name).read_bytes() == (DATA / "golden_fit" / name).read_bytes()


def test_every_output_carries_hash_and_seed(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--k", 5, "--seed", 3, "--out", tmp_path) == 0
    meta = json.loads((tmp_path / "fit.json").read_text())
    first = (tmp_path / "beta_hat.csv").read_text().splitlines()[0]
    assert first == f"# config_sha256={meta['config_sha256']} seed=3"
    grid = read_curves(CURVES).grid.points
    rows = np.loadtxt(tmp_path / "beta_hat.csv", delimiter=",", skiprows=2)
    assert np.array_equal(rows[:, 0], grid)


def test_fixed_k_overrides_scan(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--k", 7, "--out", tmp_path) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    assert fit["k"] == 7 and list(fit["rbic_trace"]) == ["7"]
    assert fit["basis"] == {"family": "bspline", "k": 7, "order": 4}


def test_rbic_scan_and_fourier_basis(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--basis", "fourier",
               "--k-min", 2, "--k-max", 6, "--out", tmp_path) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    assert fit["basis"]["family"] == "fourier"
    assert int(min(fit["rbic_trace"], key=int)) == 2
    assert fit["k"] in [int(k) for k in fit["rbic_trace"]]


def test_intercept_only_fixture(tmp_path):
    grid = np.linspace(0, 1, 12)
    y = np.array([1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0])
    write_curves(tmp_path / "x.csv", grid, np.zeros((y.size, grid.size)))
    write_responses(tmp_path / "y.csv", y)
    assert run("fit", "--curves", tmp_path / "x.csv", "--responses", tmp_path / "y.csv",
               "--weights", "unit", "--k", 4, "--out", tmp_path / "o") == 0
    fit = json.loads((tmp_path / "o" / "fit.json").read_text())["fit"]
    assert fit["alpha"] == pytest.approx(math.log(y.mean() / (1 - y.mean())), abs=1e-8)
    assert fit["coeffs"] == [0.0] * 4


def test_round_trip_reproduces_predictions(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--out", tmp_path) == 0
    fit = load_fit(tmp_path / "fit.json")
    sample = read_sample(CURVES, RESPONSES)
    live = select_k(sample, FitConfig(weights=WeightSpec.mahalanobis_hr()))
    diff = predict_probs(fit, None, sample.curves) - predict_probs(live, None, sample.curves)
    assert np.max(np.abs(diff)) <= 1e-12


@pytest.mark.parametrize("content, where", [
    ("0,0.5,1\n1,2,x\n", ":2:"),
    ("0,0.5,1\n1,2\n", ":2:"),
    ("# header\n0,0.7,0.5\n1,2,3\n", ":2:"),
    ("0,0.5,1\n", "need a grid row"),
])
def test_malformed_curves_exit_2_with_line_number(tmp_path, caplog, content, where):
    (tmp_path / "x.csv").write_text(content)
    write_responses(tmp_path / "y.csv", [1])
    with caplog.at_level(logging.ERROR):
        code = run("fit", "--curves", tmp_path / "x.csv", "--responses", tmp_path / "y.csv", "--out", tmp_path)
    assert code == 2
    assert where in caplog.text


def test_bad_responses_exit_2(tmp_path, caplog):
    shutil.copy(CURVES, tmp_path / "x.csv")
    (tmp_path / "y.csv").write_text("1\n0\n2\n")
    with caplog.at_level(logging.ERROR):
        assert run("fit", "--curves", tmp_path / "x.csv", "--responses", tmp_path / "y.csv", "--out", tmp_path) == 2
    assert "y.csv:3:" in caplog.text
    write_responses(tmp_path / "y.csv", [1, 0, 1])
    assert run("fit", "--curves", tmp_path / "x.csv", "--responses", tmp_path / "y.csv", "--out", tmp_path) == 2
    assert run("fit", "--curves", tmp_path / "missing.csv", "--responses", RESPONSES, "--out", tmp_path) == 2


def test_separation_exit_3(tmp_path):
    grid = np.linspace(0, 1, 10)
    level = np.linspace(-1, 1, 30)
    shape = np.random.default_rng(0).standard_normal((30, 3)) @ np.array([grid, grid**2, grid**3])
    write_curves(tmp_path / "x.csv", grid, np.outer(level, np.ones(10)) + shape)
    write_responses(tmp_path / "y.csv", level > 0)
    assert run("fit", "--curves", tmp_path / "x.csv", "--responses", tmp_path / "y.csv",
               "--loss", "classical", "--weights", "unit", "--k", 4, "--out", tmp_path / "o") == 3


def test_nonconvergence_exit_4_writes_best_iterate(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--k", 6,
               "--max-iter", 1, "--out", tmp_path) == 4
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    assert fit["converged"] is False and fit["gradient_norm"] > 1e-8
    assert (tmp_path / "beta_hat.csv").exists()


def test_argument_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--curves", CURVES])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--curves", CURVES, "--responses", RESPONSES, "--out", "o", "--loss", "huber"])
    assert exc.value.code == 2


def test_simulate_identical_bytes_and_manifest(tmp_path):
    args = ["simulate", "--scenario", "C0", "--n", 300, "--n-reps", 5, "--seed", 1]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["alpha.csv", "beta_trimmed.csv", "manifest.json", "pmse.csv", "summary.csv"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "pmse.csv").read_text().splitlines()[2:]
    assert [r.split(",")[1] for r in rows] == ["CL", "M", "WCL-HR", "WM-HR", "WCL-FBB", "WM-FBB"]


def test_simulate_parallel_bytes_and_defaults(tmp_path):
    args = ["simulate", "--scenario", "C2", "--epsilon", 0.1, "--n", 150, "--n-reps", 3, "--seed", 2,
            "--estimators", "CL,WM-HR"]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--jobs", 2, "--out", tmp_path / "b") == 0
    for name in ("alpha.csv", "pmse.csv", "beta_trimmed.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["scenarios"][0]["m"] == 4.0
    assert manifest["config"]["scenarios"][0]["epsilon"] == 0.1


def test_simulate_input_errors(tmp_path):
    assert run("simulate", "--scenario", "C9", "--seed", 1, "--out", tmp_path) == 2
    assert run("simulate", "--scenario", "C1", "--seed", 1, "--estimators", "XX", "--out", tmp_path) == 2
    with pytest.raises(SystemExit):
        main(["simulate", "--scenario", "C0", "--out", str(tmp_path)])


def test_diagnose_matches_in_process(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--out", tmp_path) == 0
    assert run("diagnose", "--fit", tmp_path / "fit.json", "--curves", CURVES, "--responses", RESPONSES,
               "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "diagnose.json").read_text())
    assert summary["levels"] == [0.005, 0.995]
    sample = read_sample(CURVES, RESPONSES)
    rep = flag_outliers(sample.responses, predict_probs(load_fit(tmp_path / "fit.json"), None, sample.curves))
    assert summary["n_flagged"] == int(rep.outlier_flags.sum())
    assert summary["cutoff_low"] == rep.cutoff_low and summary["cutoff_high"] == rep.cutoff_high
    res = np.loadtxt(tmp_path / "residuals.csv", delimiter=",", skiprows=2)
    assert np.array_equal(res[:, 3], rep.residuals)
    qq = np.loadtxt(tmp_path / "qq.csv", delimiter=",", skiprows=2)
    assert np.array_equal(qq, rep.qq_pairs)


def test_diagnose_separated_fixture_flags_clamped_points(tmp_path):
    grid = Grid(np.array([0.0, 1.0]))
    basis = make_basis(grid, 2, "bspline", 2)
    fit = FitResult(0.0, np.array([100.0, 100.0]), 2, 0.0, np.ones(6), 0.0, 0, True, 0.0, basis=basis)
    (tmp_path / "fit.json").write_text(json.dumps({"seed": 0, "config_sha256": "x", "fit": fit_to_dict(fit)}))
    write_curves(tmp_path / "x.csv", grid.points, [[0, 0]] * 4 + [[1, 1]] * 2)
    write_responses(tmp_path / "y.csv", [1, 0, 1, 0, 0, 0])
    with pytest.warns(UserWarning):
        code = run("diagnose", "--fit", tmp_path / "fit.json", "--curves", tmp_path / "x.csv",
                   "--responses", tmp_path / "y.csv", "--out", tmp_path / "o")
    assert code == 0
    summary = json.loads((tmp_path / "o" / "diagnose.json").read_text())
    assert summary["flagged"] == [4, 5] and summary["n_clamped"] == 2


def test_diagnose_grid_mismatch_exit_2(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--k", 5, "--out", tmp_path) == 0
    write_curves(tmp_path / "x.csv", np.linspace(0, 1, 7), np.zeros((100, 7)))
    assert run("diagnose", "--fit", tmp_path / "fit.json", "--curves", tmp_path / "x.csv",
               "--responses", RESPONSES, "--out", tmp_path) == 2
    assert run("diagnose", "--fit", tmp_path / "nope.json", "--curves", CURVES,
               "--responses", RESPONSES, "--out", tmp_path) == 2


def test_json_format_tables(tmp_path):
    assert run("fit", "--curves", CURVES, "--responses", RESPONSES, "--k", 5, "--format", "json",
               "--out", tmp_path) == 0
    table = json.loads((tmp_path / "beta_hat.json").read_text())
    assert table["stamp"].startswith("config_sha256=") and len(table["rows"]) == 30
