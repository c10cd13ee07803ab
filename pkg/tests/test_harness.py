import json
import math

import numpy as np
import pytest

from augrkhs.cli import main
from augrkhs.exceptions import ValidationError
from augrkhs.harness import (
    HEADERS,
    cell_seed,
    figure_4a_data,
    fit_loglog_slope,
    resolve_config,
    run,
    tracegap_rate_experiment,
)


def kappa_config(tmp_path, **overrides):
    cfg = {
        "command": "kappa",
        "grid": {"scheme": ["random_mask", "block_mask"], "d_x": [3],
                 "alpha": [0.25, 0.5]},
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    return cfg


def test_resolve_config_validation(tmp_path):
    with pytest.raises(ValidationError, match="command"):
        resolve_config({"grid": {}, "seeds": [0], "output_dir": "x"})
    with pytest.raises(ValidationError, match="axes"):
        resolve_config({"command": "kappa", "grid": {"scheme": ["random_mask"]},
                        "seeds": [0], "output_dir": "x"})
    with pytest.raises(ValidationError, match="nonempty"):
        resolve_config({"command": "kappa",
                        "grid": {"scheme": [], "d_x": [3], "alpha": [0.5]},
                        "seeds": [0], "output_dir": "x"})
    with pytest.raises(ValidationError, match="seeds"):
        resolve_config(kappa_config(tmp_path, seeds=[]))
    with pytest.raises(ValidationError, match="scheme"):
        resolve_config(kappa_config(
            tmp_path, grid={"scheme": ["mystery"], "d_x": [3],
                            "alpha": [0.5]}))


def test_cell_seed_stable_and_distinct():
    a = cell_seed(0, scheme="random_mask", d_x=3, alpha=0.5)
    b = cell_seed(0, scheme="random_mask", d_x=3, alpha=0.5)
    c = cell_seed(0, scheme="random_mask", d_x=3, alpha=0.25)
    d = cell_seed(1, scheme="random_mask", d_x=3, alpha=0.5)
    assert a == b
    assert len({a, c, d}) == 3
    assert a == 7844895342657697870  # pinned: reproducibility across versions


def test_figure_4a_exact_curves():
    header, rows = figure_4a_data()
    assert header == HEADERS["figure_4a"]
    assert len(rows) == 101
    assert rows[0]["alpha"] == 0.0
    for value in (rows[0]["random_mask"], rows[0]["block_mask"],
                  rows[0]["block_mask_flip"]):
        assert value == pytest.approx(2.0, abs=1e-15)
    for value in (rows[100]["random_mask"], rows[100]["block_mask"],
                  rows[100]["block_mask_flip"]):
        assert value == pytest.approx(1.0, abs=1e-15)
    mid = rows[50]
    assert mid["random_mask"] == pytest.approx(1.5, abs=1e-15)
    assert mid["block_mask"] == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert mid["block_mask_flip"] == pytest.approx(1.25**0.75, abs=1e-12)
    assert mid["block_mask_flip"] == pytest.approx(1.18217701, abs=1e-8)
    # independent evaluation at every grid point
    for i, row in enumerate(rows):
        a = i / 100.0
        assert row["random_mask"] == pytest.approx(2.0 - a, abs=1e-12)
        assert row["block_mask"] == pytest.approx(2.0 ** (1.0 - a), abs=1e-12)
        assert row["block_mask_flip"] == pytest.approx(
            (a * a - 2 * a + 2.0) ** (1.0 - a / 2.0), abs=1e-12)


def test_kappa_run_and_determinism(tmp_path):
    cfg = resolve_config(kappa_config(tmp_path))
    outcome = run(cfg)
    assert outcome.exit_code == 0
    path = outcome.files["kappa"]
    body = open(path).read()
    header = body.splitlines()[0].split(",")
    assert header == HEADERS["kappa"]
    outcome2 = run(cfg)
    assert open(outcome2.files["kappa"]).read() == body


def test_kappa_closed_form_column(tmp_path):
    cfg = resolve_config({
        "command": "kappa",
        "grid": {"scheme": ["random_mask"], "d_x": [4],
                 "alpha": [0.05, 0.2, 0.8]},
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
    })
    outcome = run(cfg)
    for row in outcome.records:
        assert row["closed_form"] == pytest.approx(
            (2.0 - row["alpha"]) ** 4, rel=1e-15)
        assert row["bound_kind"] == "exact"


def test_cell_isolation_rerun_single_cell(tmp_path):
    full = resolve_config(kappa_config(tmp_path))
    rows = {(r["scheme"], r["alpha"]): r for r in run(full).records}
    single = resolve_config(kappa_config(
        tmp_path, grid={"scheme": ["block_mask"], "d_x": [3],
                        "alpha": [0.5]},
        output_dir=str(tmp_path / "cell")))
    only = run(single).records[0]
    matching = rows[("block_mask", 0.5)]
    assert only == matching


def test_partial_failure_exit_code(tmp_path):
    cfg = resolve_config(kappa_config(
        tmp_path,
        grid={"scheme": ["random_mask"], "d_x": [3, 40], "alpha": [0.5]},
        budget=10**6))
    outcome = run(cfg)
    assert outcome.exit_code == 2
    assert outcome.failures == 1
    errors = [r for r in outcome.records if r.get("error")]
    assert len(errors) == 1
    assert "BudgetExceededError" in errors[0]["error"]
    clean = [r for r in outcome.records if not r.get("error")]
    assert len(clean) == 1


def test_parallel_jobs_identical_output(tmp_path):
    serial = run(resolve_config(kappa_config(tmp_path)))
    parallel = run(resolve_config(kappa_config(
        tmp_path, output_dir=str(tmp_path / "par"), jobs=4)))
    assert open(serial.files["kappa"]).read().splitlines()[1:] == \
        open(parallel.files["kappa"]).read().splitlines()[1:]


def test_spectrum_run_exports(tmp_path):
    cfg = resolve_config({
        "command": "spectrum",
        "grid": {"scheme": ["random_mask"], "d_x": [2], "alpha": [0.5]},
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
    })
    outcome = run(cfg)
    assert outcome.exit_code == 0
    row = outcome.records[0]
    assert row["rank"] == 4
    assert row["duality_residual"] <= 1e-8
    assert row["reconstruction_residual"] <= 1e-10
    lam_files = list((tmp_path / "out").glob("*_lambdas.csv"))
    assert len(lam_files) == 1
    lam = np.loadtxt(lam_files[0], skiprows=1)
    np.testing.assert_allclose(sorted(lam, reverse=True),
                               [1.0, 0.5, 0.5, 0.25], atol=1e-10)


def test_pretrain_run_emits_records_and_traces(tmp_path):
    cfg = resolve_config({
        "command": "pretrain",
        "grid": {"scheme": ["random_mask"], "d_x": [2], "alpha": [0.5],
                 "objective": ["scl"], "d": [1]},
        "seeds": [1],
        "output_dir": str(tmp_path / "out"),
        "options": {"max_iters": 4000, "learning_rate": 0.3,
                    "grad_tol": 1e-9},
    })
    outcome = run(cfg)
    assert outcome.exit_code == 0
    record = outcome.records[0]
    assert record["final_loss"] == pytest.approx(record["target_loss"],
                                                 abs=1e-4)
    assert record["principal_angle"] <= 1e-2
    lines = open(outcome.files["pretrain"]).read().splitlines()
    parsed = json.loads(lines[0])
    assert parsed["objective"] == "scl"
    traces = list((tmp_path / "out").glob("pretrain_scl_*.csv"))
    assert len(traces) == 1
    losses = np.loadtxt(traces[0], delimiter=",", skiprows=1)[:, 1]
    assert np.all(np.diff(losses) <= 0)


def test_regress_run_schema(tmp_path):
    cfg = resolve_config({
        "command": "regress",
        "grid": {"scheme": ["random_mask"], "d_x": [2], "alpha": [0.5],
                 "d": [2], "n": [64], "sigma": [0.1], "B": [1.0],
                 "epsilon": [0.2]},
        "seeds": [0, 1],
        "output_dir": str(tmp_path / "out"),
    })
    outcome = run(cfg)
    assert outcome.exit_code == 0
    header = open(outcome.files["regress"]).read().splitlines()[0]
    assert header == ",".join(HEADERS["regress"])
    for row in outcome.records:
        assert row["pred_err"] >= 0
        assert row["approx_err"] <= row["lemma32_rhs"] + 1e-9
        assert row["constraint_active"] in (0, 1)


def test_tracegap_experiment_grid_validation(tmp_path):
    with pytest.raises(ValidationError, match="factor of 16"):
        tracegap_rate_experiment(resolve_config({
            "command": "tracegap",
            "grid": {"scheme": ["random_mask"], "d_x": [2], "alpha": [0.5],
                     "d": [1], "N": [8, 16, 24, 30]},
            "seeds": [0],
            "output_dir": str(tmp_path / "out"),
        }))


def test_tracegap_run_outputs(tmp_path):
    cfg = resolve_config({
        "command": "tracegap",
        "grid": {"scheme": ["random_mask"], "d_x": [2], "alpha": [0.5],
                 "d": [1], "N": [16, 32, 64, 256]},
        "seeds": [0, 1, 2],
        "output_dir": str(tmp_path / "out"),
    })
    outcome = run(cfg)
    assert outcome.exit_code == 0
    lines = open(outcome.files["tracegap"]).read().splitlines()
    assert lines[0] == ",".join(HEADERS["tracegap"])
    median_rows = [ln for ln in lines[1:] if ",median," in ln]
    assert len(median_rows) == 4
    fit = json.loads(open(outcome.files["fit"]).read())
    assert "slope" in fit
    empirical = [json.loads(ln) for ln in
                 open(outcome.files["empirical"]).read().splitlines()]
    assert len(empirical) == 12
    assert all("lambdas_bar" in e for e in empirical)


def test_sweep_bundle(tmp_path):
    cfg = resolve_config({
        "command": "sweep",
        "grid": {"scheme": ["random_mask", "block_mask", "block_mask_flip"],
                 "d_x": [3], "alpha": [0.2, 0.4, 0.6, 0.8]},
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
    })
    outcome = run(cfg)
    assert outcome.exit_code == 0
    assert set(outcome.files) == {"figure_4a", "kappa"}
    fig_lines = open(outcome.files["figure_4a"]).read().splitlines()
    assert len(fig_lines) == 102
    # monotone complexity per scheme along the sweep
    by_scheme = {}
    for row in outcome.records:
        by_scheme.setdefault(row["scheme"], []).append(
            (row["alpha"], row["kappa_sq_exact"]))
    for scheme, pairs in by_scheme.items():
        values = [v for _, v in sorted(pairs)]
        assert np.all(np.diff(values) <= 1e-9), scheme


def test_fit_loglog_slope_exact_powers():
    ns = [16, 32, 64, 128]
    values = [10.0 * n**-0.5 for n in ns]
    assert fit_loglog_slope(ns, values) == pytest.approx(-0.5, abs=1e-12)


def test_cli_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(kappa_config(tmp_path)))
    assert main(["kappa", "--config", str(cfg_path)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["kappa", "--config", str(bad)]) == 1
    missing_axis = tmp_path / "missing.json"
    missing_axis.write_text(json.dumps({
        "command": "kappa", "grid": {"scheme": ["random_mask"]},
        "seeds": [0], "output_dir": str(tmp_path / "o")}))
    assert main(["kappa", "--config", str(missing_axis)]) == 1
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps(kappa_config(
        tmp_path, grid={"scheme": ["random_mask"], "d_x": [3, 40],
                        "alpha": [0.5]}, budget=10**6)))
    assert main(["kappa", "--config", str(partial)]) == 2
    capsys.readouterr()


def test_cli_print_config(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(kappa_config(tmp_path)))
    assert main(["kappa", "--config", str(cfg_path), "--print-config",
                 "--seed", "7", "--jobs", "2"]) == 0
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["seeds"] == [7]
    assert resolved["jobs"] == 2
    assert resolved["command"] == "kappa"
