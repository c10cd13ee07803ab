"""Declarative experiment runner: grids, deterministic seeding, CSV/JSON.

A run is described by a config (JSON file or dict): a command, per-axis
value lists, a seed list, an output directory, and an enumeration budget.
Every cell of the grid-times-seeds cross product executes independently
with a seed derived from the master seed and the cell's axis values, so any
cell can be reproduced in isolation; failures are recorded per cell without
aborting the sweep.  Floats are written with 17 significant digits and rows
are merged in grid order, so identical configs produce byte-identical files.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import itertools
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import complexity, encoders, objectives, regression, spectral
from .exceptions import ValidationError
from .processes import DEFAULT_BUDGET, SCHEMES, HypercubeConfig, build_hypercube

SCHEMA_VERSION = "1"

COMMANDS = ("kappa", "spectrum", "pretrain", "regress", "tracegap", "sweep")

_AXIS_ORDER = ("scheme", "d_x", "alpha", "objective", "d", "N", "n", "sigma",
               "B", "epsilon")

_REQUIRED_AXES = {
    "kappa": ("scheme", "d_x", "alpha"),
    "spectrum": ("scheme", "d_x", "alpha"),
    "pretrain": ("scheme", "d_x", "alpha", "objective", "d"),
    "regress": ("scheme", "d_x", "alpha", "d", "n", "sigma", "B", "epsilon"),
    "tracegap": ("scheme", "d_x", "alpha", "d", "N"),
    "sweep": ("scheme", "d_x", "alpha"),
}

HEADERS = {
    "kappa": ["schema", "scheme", "d_x", "alpha", "seed", "kappa_sq_exact",
              "kappa_sq_p99", "closed_form", "bound_kind", "s_lambda",
              "error"],
    "spectrum": ["schema", "scheme", "d_x", "alpha", "seed", "rank",
                 "lambda_top", "s_lambda", "duality_residual",
                 "reconstruction_residual", "error"],
    "regress": ["schema", "scheme", "d_x", "alpha", "seed", "n", "sigma", "d",
                "B", "epsilon", "tau_sq", "pred_err", "approx_err", "est_err",
                "lemma32_rhs", "thm31_rhs", "constraint_active", "error"],
    "tracegap": ["schema", "scheme", "d_x", "alpha", "d", "N", "seed", "gap",
                 "error"],
    "figure_4a": ["alpha", "random_mask", "block_mask", "block_mask_flip"],
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated description of one sweep."""

    command: str
    grid: dict
    seeds: tuple[int, ...]
    output_dir: str
    budget: int = DEFAULT_BUDGET
    master_seed: int = 0
    jobs: int = 1
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunOutcome:
    records: list
    failures: int
    files: dict

    @property
    def exit_code(self) -> int:
        return 2 if self.failures else 0


def fmt(value) -> str:
    """Canonical field formatting: 17 significant digits for floats."""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def cell_seed(master_seed: int, **axes) -> int:
    """Stable per-cell seed: SHA-256 of the master seed and axis values.

    Independent of grid shape, so a cell rerun in isolation reproduces its
    row exactly.
    """
    payload = f"{master_seed}|" + "|".join(
        f"{k}={fmt(axes[k])}" for k in sorted(axes)
    )
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    return raw


def resolve_config(raw: dict, command: str | None = None,
                   seed: int | None = None, out: str | None = None,
                   budget: int | None = None,
                   jobs: int | None = None) -> ExperimentConfig:
    """Merge a raw config dict with command-line overrides and validate."""
    cmd = command or raw.get("command")
    if cmd not in COMMANDS:
        raise ValidationError(f"command must be one of {COMMANDS}, got {cmd!r}")
    grid = dict(raw.get("grid") or {})
    for axis, values in grid.items():
        if not isinstance(values, (list, tuple)) or not values:
            raise ValidationError(f"grid axis {axis!r} must be a nonempty list")
    missing = [a for a in _REQUIRED_AXES[cmd] if not grid.get(a)]
    if missing:
        raise ValidationError(f"command {cmd!r} needs grid axes {missing}")
    for scheme in grid.get("scheme", ()):
        if scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {scheme!r}")
    seeds = raw.get("seeds") or []
    if seed is not None:
        seeds = [seed]
    if not seeds:
        raise ValidationError("seeds must be a nonempty list")
    output_dir = out or raw.get("output_dir")
    if not output_dir:
        raise ValidationError("output_dir is required")
    return ExperimentConfig(
        command=cmd,
        grid=grid,
        seeds=tuple(int(s) for s in seeds),
        output_dir=str(output_dir),
        budget=int(budget if budget is not None
                   else raw.get("budget", DEFAULT_BUDGET)),
        master_seed=int(raw.get("master_seed", 0)),
        jobs=int(jobs if jobs is not None else raw.get("jobs", 1)),
        options=dict(raw.get("options") or {}),
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "command": config.command,
        "grid": config.grid,
        "seeds": list(config.seeds),
        "output_dir": config.output_dir,
        "budget": config.budget,
        "master_seed": config.master_seed,
        "jobs": config.jobs,
        "options": config.options,
    }


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: list[str], rows: list[dict]) -> None:
    lines = [",".join(header)]
    for row in rows:
        if not row.get("error"):
            bad = [col for col in header
                   if isinstance(row.get(col), float)
                   and not math.isfinite(row[col])]
            if bad:
                raise ValidationError(f"non-finite fields {bad} in {row}")
        lines.append(",".join(fmt(row.get(col)) for col in header))
    _write_atomic(path, "\n".join(lines) + "\n")


def write_jsonl(path: str, records: list[dict]) -> None:
    _write_atomic(path, "".join(json.dumps(r, sort_keys=True) + "\n"
                                for r in records))


def figure_4a_data() -> tuple[list[str], list[dict]]:
    """Exact base curves of the three closed-form complexities on [0, 1].

    101 rows at step 0.01: ``2 - a``, ``2^(1-a)``, and
    ``(a^2 - 2a + 2)^(1 - a/2)``.
    """
    rows = []
    for i in range(101):
        a = i / 100.0
        rows.append({
            "alpha": a,
            "random_mask": 2.0 - a,
            "block_mask": 2.0 ** (1.0 - a),
            "block_mask_flip": (a * a - 2.0 * a + 2.0) ** (1.0 - a / 2.0),
        })
    return HEADERS["figure_4a"], rows


def _cells(config: ExperimentConfig) -> list[dict]:
    axes = [a for a in _AXIS_ORDER if a in config.grid]
    cells = []
    for combo in itertools.product(*(config.grid[a] for a in axes)):
        for seed_val in config.seeds:
            cell = dict(zip(axes, combo))
            cell["seed"] = cell_seed(config.master_seed, master=seed_val,
                                     **cell)
            cell["master"] = seed_val
            cells.append(cell)
    return cells


def _base_row(cell: dict) -> dict:
    row = {"schema": SCHEMA_VERSION, "seed": cell["master"]}
    for key in ("scheme", "d_x", "alpha", "objective", "d", "N", "n", "sigma",
                "B", "epsilon"):
        if key in cell:
            row[key] = cell[key]
    return row


def _kappa_cell(cell, config: ExperimentConfig) -> dict:
    row = _base_row(cell)
    hc = HypercubeConfig(cell["d_x"], cell["alpha"], cell["scheme"])
    process = build_hypercube(hc, budget=config.budget)
    beta = float(config.options.get("beta", 99.0))
    report = complexity.kappa_exact(process, beta=beta)
    row["kappa_sq_exact"] = report.kappa_sq_max
    row["kappa_sq_p99"] = report.kappa_sq_percentile
    try:
        closed = complexity.closed_form_kappa(hc)
        row["closed_form"] = closed.value
        row["bound_kind"] = closed.kind
    except ValidationError:
        row["closed_form"] = None
        row["bound_kind"] = None
    row["s_lambda"] = report.s_lambda_total
    return row


def _spectrum_cell(cell, config: ExperimentConfig) -> dict:
    row = _base_row(cell)
    hc = HypercubeConfig(cell["d_x"], cell["alpha"], cell["scheme"])
    process = build_hypercube(hc, budget=config.budget)
    dec = spectral.decompose(process)
    row["rank"] = dec.rank
    row["lambda_top"] = float(dec.lambdas[0])
    row["s_lambda"] = float(dec.lambdas.sum())
    certified = dec.lambdas > 1e-6
    back = spectral.apply_gamma_star(process, dec.phi[:, certified])
    back = back / np.sqrt(dec.lambdas[certified])[None, :]
    diff = back - dec.psi[:, certified]
    row["duality_residual"] = float(np.sqrt(np.max(
        np.sum(diff * diff * process.p_x.mass[:, None], axis=0))))
    row["reconstruction_residual"] = spectral.verify_integral_identity(
        process, dec)
    stem = (f"{cell['scheme']}_dx{cell['d_x']}_a{cell['alpha']!r}"
            .replace(".", "p"))
    spectral.export_decomposition(dec, config.output_dir, stem=stem)
    return row


def _pretrain_cell(cell, config: ExperimentConfig) -> dict:
    row = _base_row(cell)
    hc = HypercubeConfig(cell["d_x"], cell["alpha"], cell["scheme"])
    process = build_hypercube(hc, budget=config.budget)
    dec = spectral.decompose(process)
    d = int(cell["d"])
    opts = config.options
    opt = objectives.OptimizerConfig(
        learning_rate=float(opts.get("learning_rate", 0.2)),
        max_iters=int(opts.get("max_iters", 20000)),
        grad_tol=float(opts.get("grad_tol", 1e-8)),
        seed=cell["seed"],
        init_scale=float(opts.get("init_scale", 0.5)),
    )
    kind = cell["objective"]
    spec = objectives.ObjectiveSpec(
        kind=kind, d=d,
        alpha_w=float(opts.get("alpha_w", 1.0)) if kind == "rbt" else None,
        beta_w=float(opts.get("beta_w", 1.0)) if kind in ("rbt", "vicreg")
        else None,
    )
    result = objectives.minimize(spec, process, dec, opt)
    lam = dec.lambdas[:d]
    if kind == "scl":
        target = float(-(lam ** 2).sum())
    elif kind == "sclip":
        target = float(-lam.sum())
    elif kind == "vicreg" and spec.beta_w == 1.0:
        target = float(d - (lam ** 2).sum())
    else:
        target = None
    row["final_loss"] = result.final_loss
    row["target_loss"] = target
    row["principal_angle"] = objectives.subspace_angle(result.phi_hat, dec, d)
    row["iterations"] = result.iterations
    row["trace"] = [float(v) for v in result.losses]
    return row


def _regress_cell(cell, config: ExperimentConfig) -> dict:
    row = _base_row(cell)
    hc = HypercubeConfig(cell["d_x"], cell["alpha"], cell["scheme"])
    process = build_hypercube(hc, budget=config.budget)
    dec = spectral.decompose(process)
    d = int(cell["d"])
    encoder = encoders.optimal_encoder(dec, d)
    B, eps = float(cell["B"]), float(cell["epsilon"])
    target = regression.sample_target(dec, B, eps, seed=cell["seed"])
    samples = regression.generate_labels(
        target, process, int(cell["n"]), float(cell["sigma"]),
        seed=cell["seed"] + 1)
    fit = regression.fit_least_squares(encoder, samples, B, eps, target=target)
    f_psi, approx_err = regression.project_fpsi(target, encoder)
    est = fit.f_hat_values - f_psi
    tau_sq = encoders.trace_gap(encoder)
    report = complexity.kappa_exact(dec)
    ctx = regression.BoundContext(
        tau_sq=tau_sq, epsilon=eps, B=B,
        kappa=math.sqrt(report.kappa_sq_max),
        s_lambda_dplus1=complexity.partial_trace(dec, d + 1),
        n=int(cell["n"]), sigma=float(cell["sigma"]),
        c0=float(config.options.get("c0", 1.0)),
        lambda_dplus1=dec.eigenvalue(d + 1),
    )
    bounds = regression.evaluate_bounds(ctx)
    row["tau_sq"] = tau_sq
    row["pred_err"] = fit.prediction_error
    row["approx_err"] = approx_err
    row["est_err"] = float(np.sum(est * est * process.p_x.mass))
    row["lemma32_rhs"] = bounds.lemma32_rhs
    row["thm31_rhs"] = bounds.thm31_rhs
    row["constraint_active"] = int(fit.lagrange_mu > 0)
    return row


def _tracegap_cell(cell, config: ExperimentConfig) -> dict:
    row = _base_row(cell)
    hc = HypercubeConfig(cell["d_x"], cell["alpha"], cell["scheme"])
    process = build_hypercube(hc, budget=config.budget)
    dec = spectral.decompose(process)
    d, N = int(cell["d"]), int(cell["N"])
    empirical = encoders.empirical_decomposition(process, N, seed=cell["seed"])
    encoder = encoders.near_optimal_encoder(empirical, d, dec)
    cov = encoders.covariances(encoder)
    rt = encoders.ratio_trace(cov)
    gap = complexity.partial_trace(dec, d + 1) - rt - dec.eigenvalue(d + 1)
    row["gap"] = gap
    row["lambdas_bar"] = [float(v) for v in empirical.lambdas_bar[:d]]
    row["gamma_g"] = cov.gamma_g  # reported so its growth in N is observable
    return row


_CELL_FN = {
    "kappa": _kappa_cell,
    "spectrum": _spectrum_cell,
    "pretrain": _pretrain_cell,
    "regress": _regress_cell,
    "tracegap": _tracegap_cell,
}


def _execute_cells(config: ExperimentConfig, cells, fn):
    def guarded(cell):
        try:
            return fn(cell, config)
        except Exception as exc:  # cell isolation: record, never abort
            row = _base_row(cell)
            row["error"] = f"{type(exc).__name__}: {exc}".replace(",", ";")
            return row

    if config.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(config.jobs) as pool:
            return list(pool.map(guarded, cells))
    return [guarded(c) for c in cells]


def fit_loglog_slope(ns, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(ns)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    x = x - x.mean()
    return float((x @ (y - y.mean())) / (x @ x))


def tracegap_rate_experiment(config: ExperimentConfig) -> dict:
    """Near-optimal-encoder excess gap against sample count.

    Runs the tracegap grid, appends one median row per (axes, N) group, and
    fits the log-log slope of the median gap in N.  The N axis must hold at
    least four points spanning at least two octaves.
    """
    ns = sorted(set(config.grid["N"]))
    if len(ns) < 4 or ns[-1] < 16 * ns[0]:
        raise ValidationError(
            "the N grid needs >= 4 points spanning at least a factor of 16"
        )
    cells = _cells(config)
    rows = _execute_cells(config, cells, _tracegap_cell)
    groups: dict[tuple, list] = {}
    for row in rows:
        if row.get("error"):
            continue
        key = (row.get("scheme"), row.get("d_x"), row.get("alpha"),
               row.get("d"), row.get("N"))
        groups.setdefault(key, []).append(row["gap"])
    median_rows = []
    medians: dict[int, list] = {}
    for key, gaps in sorted(groups.items(), key=lambda kv: str(kv[0])):
        med = float(np.median(gaps))
        median_rows.append({
            "schema": SCHEMA_VERSION, "scheme": key[0], "d_x": key[1],
            "alpha": key[2], "d": key[3], "N": key[4], "seed": "median",
            "gap": med,
        })
        medians.setdefault(key[4], []).append(med)
    # the gap is nonnegative up to rounding; only positive medians carry
    # log-scale information
    points = [(n, float(np.mean(medians[n]))) for n in sorted(medians)]
    points = [(n, v) for n, v in points if v > 0.0]
    slope = (fit_loglog_slope([n for n, _ in points], [v for _, v in points])
             if len(points) >= 2 else None)
    return {"rows": rows, "median_rows": median_rows, "slope": slope}


def run(config: ExperimentConfig) -> RunOutcome:
    """Execute a config and write its output files.

    Cells run independently (optionally in parallel) and deterministically;
    failed cells contribute an error row.  Returns the records plus the
    failure count, which drives the process exit code.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    files = {}
    if config.command == "sweep":
        header, rows = figure_4a_data()
        fig_path = os.path.join(config.output_dir, "figure_4a.csv")
        write_csv(fig_path, header, rows)
        files["figure_4a"] = fig_path
        kappa_rows = _execute_cells(config, _cells(config), _kappa_cell)
        kappa_path = os.path.join(config.output_dir, "kappa.csv")
        write_csv(kappa_path, HEADERS["kappa"], kappa_rows)
        files["kappa"] = kappa_path
        records = kappa_rows
        if config.grid.get("N") and config.grid.get("d"):
            outcome = tracegap_rate_experiment(config)
            path = os.path.join(config.output_dir, "tracegap.csv")
            write_csv(path, HEADERS["tracegap"],
                      outcome["rows"] + outcome["median_rows"])
            files["tracegap"] = path
            _write_atomic(os.path.join(config.output_dir, "tracegap_fit.json"),
                          json.dumps({"slope": outcome["slope"]}) + "\n")
            records = records + outcome["rows"]
        failures = sum(1 for r in records if r.get("error"))
        return RunOutcome(records=records, failures=failures, files=files)

    if config.command == "tracegap":
        outcome = tracegap_rate_experiment(config)
        rows = outcome["rows"] + outcome["median_rows"]
        path = os.path.join(config.output_dir, "tracegap.csv")
        write_csv(path, HEADERS["tracegap"], rows)
        files["tracegap"] = path
        fit_path = os.path.join(config.output_dir, "tracegap_fit.json")
        _write_atomic(fit_path, json.dumps({"slope": outcome["slope"]}) + "\n")
        files["fit"] = fit_path
        empirical_path = os.path.join(config.output_dir, "empirical.jsonl")
        write_jsonl(empirical_path, [
            {"seed": r["seed"], "N": r["N"], "lambdas_bar": r["lambdas_bar"],
             "gamma_g": r["gamma_g"]}
            for r in outcome["rows"] if not r.get("error")
        ])
        files["empirical"] = empirical_path
        failures = sum(1 for r in outcome["rows"] if r.get("error"))
        return RunOutcome(records=rows, failures=failures, files=files)

    rows = _execute_cells(config, _cells(config), _CELL_FN[config.command])
    failures = sum(1 for r in rows if r.get("error"))
    if config.command == "pretrain":
        records = []
        for row in rows:
            rec = {k: v for k, v in row.items() if k != "trace"}
            records.append(rec)
            if "trace" in row:
                stem = (f"pretrain_{row['objective']}_{row['scheme']}"
                        f"_dx{row['d_x']}_a{row['alpha']!r}"
                        f"_d{row['d']}_s{row['seed']}").replace(".", "p")
                trace_path = os.path.join(config.output_dir, stem + ".csv")
                write_csv(trace_path, ["iteration", "loss"],
                          [{"iteration": i, "loss": v}
                           for i, v in enumerate(row["trace"])])
        path = os.path.join(config.output_dir, "pretrain.jsonl")
        write_jsonl(path, records)
        files["pretrain"] = path
        return RunOutcome(records=records, failures=failures, files=files)
    path = os.path.join(config.output_dir, f"{config.command}.csv")
    write_csv(path, HEADERS[config.command], rows)
    files[config.command] = path
    return RunOutcome(records=rows, failures=failures, files=files)
