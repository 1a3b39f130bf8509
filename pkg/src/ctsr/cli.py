"""Command-line pipeline runner.

Subcommands cover the whole workflow: dataset generation, candidate
library construction, sparse discovery, tolerance sweeps with a knee
suggestion, rotation/reflection checks, timing benchmarks, and a
self-test mode.

Settings come from (in increasing precedence) per-case defaults, a JSON
config file, and command-line flags; every run writes its effective
config next to its outputs.  Exit codes: 0 success, 1 user/config
error, 2 numerical failure, 3 failed self-test.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ctsr.assembly import (
    TimeDerivativeLhs,
    assemble_problem,
    assemble_scalar_problem,
    case_lhs_spec,
)
from ctsr.cases import CASES, CasePreset
from ctsr.datasets import (
    DatasetFormatError,
    GridDataset,
    load_dataset,
    sample_points,
    save_dataset,
)
from ctsr.invariance import (
    AnalyticFieldSource,
    equivariance_report,
    identity_transform,
    lattice_symmetries,
    random_reflection,
    random_rotation,
    summarize_report,
    write_equivariance_csv,
)
from ctsr.library import (
    InputTensorSpec,
    LibrarySpec,
    build_scalar_library,
    build_tensor_entries,
    independent_components,
    library_report,
)
from ctsr.reports import render_bench_errors, render_equivariance, render_sweep
from ctsr.selection import (
    GroundTruth,
    dtol_grid,
    knee_point,
    pareto_front,
    prediction_error,
    redundancy_count,
    suggested_dtol,
    sweep_dtol,
    write_sweep_csv,
)
from ctsr.solver import (
    Hyperparams,
    solution_csv,
    solution_diagnostics,
    train_stridge,
)
from ctsr.synth import (
    CONSTANT_CHANNELS,
    KIND_TO_CASE,
    BurgersConfig,
    ManufacturedSpec,
    burgers2d_simulate,
    manufactured_dataset,
)

CASE_TO_KIND = {case: kind for kind, case in KIND_TO_CASE.items()}

OUTPUT_DIR_ENV = "CTSR_OUTPUT_DIR"


class ConfigError(Exception):
    """User-facing configuration problem (exit code 1)."""


@dataclass
class RunConfig:
    """Effective settings of one command invocation.

    Every field may come from the JSON config file; flags override file
    values, which override per-case defaults.
    """

    case: str = "burgers2d"
    mode: str = "tensor"
    # data generation
    source: str = "auto"            # simulation | manufactured | auto
    grid_n: int = 64                # simulation grid points per axis
    epsilon: float = 0.1
    saved_steps: int = 200          # simulation snapshots after the initial state
    snapshot_dt: float = 0.02
    shape: tuple[int, ...] | None = None   # manufactured grid
    times: int = 1                  # manufactured snapshots (1 = steady)
    n_modes: int = 8
    max_wavenumber: int = 5
    amplitude: float = 12.0
    richness: tuple[float, ...] | None = None
    derivative_mode: str = "analytic"
    data_seed: int = 0
    # sampling
    n_space: int = 50
    n_time: int = 0
    sample_seed: int = 1
    # regression
    d_tol: float | None = None      # None -> case default
    lam: float = 1e-5
    n_train: int = 25
    n_stridge: int = 10
    split_ratio: float = 0.8
    solver_seed: int = 0
    tol_schedule: str = "multiplicative"
    normalize_columns: bool = True
    truth: bool = True              # report error metrics vs the case truth
    # tolerance sweep
    grid_lo: float = 1e-5
    grid_hi: float = 1e3
    grid_points: int = 60
    # equivariance checks
    n_rotations: int = 5
    n_reflections: int = 5
    threshold: float = 1e-8
    # benchmark
    n_seeds: int = 5
    # io
    dataset: str | None = None
    output_dir: str | None = None
    jobs: int = 1                   # reserved; execution is serial
    library: dict | None = None     # custom library block (case == "custom")


CASE_DEFAULTS: dict[str, dict] = {
    "burgers2d": {"source": "simulation", "n_space": 50, "n_time": 20},
    "convection2d": {"source": "manufactured", "shape": (32, 32),
                     "n_space": 700, "n_time": 0},
    "ns3d": {"source": "manufactured", "shape": (12, 12, 12),
             "n_space": 400, "n_time": 0},
    "giesekus3d": {"source": "manufactured", "shape": (10, 10, 10),
                   "n_space": 200, "n_time": 0},
    "custom": {"source": "manufactured"},
}

_TUPLE_KEYS = ("shape", "richness")


# ---------------------------------------------------------------------------
# configuration plumbing

def _load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("the config file must hold a JSON object")
    allowed = {f.name for f in fields(RunConfig)} | {"command"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    data.pop("command", None)
    return data


def build_config(args) -> RunConfig:
    file_cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    case = getattr(args, "case", None) or file_cfg.get("case") or RunConfig.case
    known = sorted(CASES) + ["custom"]
    if case not in known:
        raise ConfigError(f"unknown case {case!r}; expected one of {known}")

    merged: dict = dict(CASE_DEFAULTS.get(case, {}))
    merged.update(file_cfg)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            merged[f.name] = v
    merged["case"] = case
    for key in _TUPLE_KEYS:
        if merged.get(key) is not None:
            merged[key] = tuple(merged[key])

    cfg = RunConfig(**merged)
    if cfg.mode not in ("tensor", "scalar"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return cfg


def resolve_output_dir(cfg: RunConfig) -> Path:
    out = cfg.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "ctsr_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    cfg.output_dir = str(path)
    return path


def write_effective_config(cfg: RunConfig, command: str, outdir: Path) -> Path:
    path = outdir / f"{command.replace('-', '_')}_config.json"
    record = {"command": command, **asdict(cfg)}
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def _require_preset(cfg: RunConfig) -> CasePreset:
    if cfg.case not in CASES:
        raise ConfigError(
            "this command needs a named case preset; 'custom' only supports "
            "build-library")
    return CASES[cfg.case]


def _hyperparams(cfg: RunConfig, preset: CasePreset) -> Hyperparams:
    d_tol = cfg.d_tol if cfg.d_tol is not None else preset.d_tol
    return Hyperparams(d_tol=d_tol, lam=cfg.lam, n_train=cfg.n_train,
                       n_stridge=cfg.n_stridge, split_ratio=cfg.split_ratio,
                       seed=cfg.solver_seed, tol_schedule=cfg.tol_schedule,
                       normalize_columns=cfg.normalize_columns)


def _library_spec(cfg: RunConfig) -> tuple[LibrarySpec, CasePreset | None]:
    if cfg.case != "custom":
        preset = CASES[cfg.case]
        return preset.library_spec(cfg.mode), preset
    if not cfg.library:
        raise ConfigError(
            "case 'custom' needs a 'library' block in the config file with "
            "keys inputs/P/target_order/spatial_dim")
    lib = dict(cfg.library)
    try:
        inputs = []
        for raw in lib["inputs"]:
            kw = {k: tuple(v) if isinstance(v, list) else v
                  for k, v in raw.items()}
            inputs.append(InputTensorSpec(**kw))
        spec = LibrarySpec(tuple(inputs), int(lib["P"]),
                           int(lib["target_order"]), cfg.mode,
                           int(lib.get("spatial_dim", 2)))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad custom library block: {e}") from None
    return spec, None


# ---------------------------------------------------------------------------
# dataset handling

def dataset_path(cfg: RunConfig, outdir: Path) -> Path:
    if cfg.dataset:
        return Path(cfg.dataset)
    return outdir / f"{cfg.case}.dat"


def generate_dataset(cfg: RunConfig) -> GridDataset:
    preset = _require_preset(cfg)
    source = cfg.source
    if source == "auto":
        source = "simulation" if cfg.case == "burgers2d" else "manufactured"
    if source == "simulation":
        if cfg.case != "burgers2d":
            raise ConfigError(
                f"{cfg.case} has no time-stepping generator; use "
                f"--source manufactured")
        bc = BurgersConfig(n=cfg.grid_n, epsilon=cfg.epsilon,
                           dt=cfg.snapshot_dt / 2.0,
                           steps=2 * cfg.saved_steps, save_every=2,
                           seed=cfg.data_seed)
        return burgers2d_simulate(bc)
    if source != "manufactured":
        raise ConfigError(f"unknown source {cfg.source!r}")
    shape = cfg.shape if cfg.shape else (32,) * preset.spatial_dim
    spec = ManufacturedSpec(
        kind=CASE_TO_KIND[cfg.case], shape=tuple(shape), times=cfg.times,
        dt=cfg.snapshot_dt, seed=cfg.data_seed, n_modes=cfg.n_modes,
        max_wavenumber=cfg.max_wavenumber, amplitude=cfg.amplitude,
        richness=tuple(cfg.richness) if cfg.richness else None,
        derivative_mode=cfg.derivative_mode)
    return manufactured_dataset(spec)


def _load_or_generate(cfg: RunConfig, outdir: Path) -> tuple[GridDataset, Path]:
    path = dataset_path(cfg, outdir)
    if path.exists():
        return load_dataset(path), path
    if cfg.dataset:
        raise ConfigError(f"dataset file {path} does not exist; "
                          f"run gen-data first")
    ds = generate_dataset(cfg)
    save_dataset(ds, path)
    return ds, path


def _effective_n_time(cfg: RunConfig, ds: GridDataset) -> int:
    if ds.times == 1:
        return 0
    if cfg.n_time <= 0:
        return min(20, ds.times - 2)
    return cfg.n_time


def _lhs_spec(ds: GridDataset, preset: CasePreset):
    q = ds.provenance.get("lhs_quantity")
    if q:
        return TimeDerivativeLhs(q)
    return case_lhs_spec(preset)


def _lhs_label(preset: CasePreset) -> str:
    if preset.lhs[0] == "time_derivative":
        q = preset.lhs[1]
        order = next(i.base_order for i in preset.inputs if i.name == q)
        return f"d{q}{['', '[i]', '[i,j]'][order]}/dt"
    return case_lhs_spec(preset).label


def _target_channels(ds: GridDataset, preset: CasePreset) -> list[str]:
    name = ds.provenance.get("lhs_quantity")
    if name is None:
        name = preset.lhs[1] if preset.lhs[0] == "time_derivative" else "tau"
    inp = next((i for i in preset.inputs if i.name == name), None)
    if inp is None:
        raise ConfigError(f"dataset targets unknown quantity {name!r}")
    return independent_components(inp, preset.spatial_dim)


def equation_text(label: str, coefficients, terms) -> str:
    parts = [f"{c:+.6g} {getattr(t, 'text', str(t))}"
             for c, t in zip(coefficients, terms) if c != 0.0]
    return f"{label} = " + (" ".join(parts) if parts else "0")


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(cfg: RunConfig, outdir: Path, args) -> int:
    ds = generate_dataset(cfg)
    path = dataset_path(cfg, outdir)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, path)
    meta = {
        "file": path.name,
        "spatial_dim": ds.spatial_dim,
        "shape": list(ds.shape),
        "times": ds.times,
        "dt": ds.dt,
        "boundary": list(ds.boundary),
        "fields": sorted(ds.fields),
        "provenance": ds.provenance,
    }
    prov = path.with_suffix(".json")
    prov.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    size = "x".join(str(n) for n in ds.shape)
    print(f"wrote {path} ({size} grid, {ds.times} snapshots, dt {ds.dt:g})")
    print(f"wrote {prov}")
    return 0


def cmd_build_library(cfg: RunConfig, outdir: Path, args) -> int:
    spec, preset = _library_spec(cfg)
    if cfg.mode == "tensor":
        entries = build_tensor_entries(spec)
        reported = preset.reported_tensor_count if preset else None
    else:
        entries = build_scalar_library(spec)
        reported = preset.reported_scalar_count if preset else None
    text, rows = library_report(entries)

    listing = outdir / f"library_{cfg.mode}.txt"
    listing.write_text(text + "\n")
    table = outdir / f"library_{cfg.mode}.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "term", "template"])
        for r in rows:
            writer.writerow([r["index"], r["term"], r["template"]])

    line = f"{cfg.mode} candidates: {len(rows)}"
    if reported is not None:
        line += f" (previously reported: {reported})"
    print(line)
    print(f"wrote {listing}")
    print(f"wrote {table}")
    return 0


def _discover_tensor(cfg, outdir, preset, ds, table, hyper) -> int:
    spec = preset.library_spec()
    terms = [e.term for e in build_tensor_entries(spec)]
    problem = assemble_problem(terms, table, spec, _lhs_spec(ds, preset))
    sol = train_stridge(problem, hyper)

    eq = equation_text(_lhs_label(preset), sol.coefficients, terms)
    print(eq)
    record = {
        "case": cfg.case,
        "mode": "tensor",
        "equation": eq,
        "coefficients": {t.text: float(c)
                         for t, c in zip(terms, sol.coefficients) if c != 0.0},
        **solution_diagnostics(sol),
    }
    if cfg.truth:
        truth = GroundTruth(preset.truth)
        err = prediction_error(sol, truth, terms)
        red = redundancy_count(sol, truth, terms)
        print(f"coefficient error vs configured truth: {err:.5f}%")
        print(f"redundant terms: {red}")
        record["metrics"] = {"coefficient_error_percent": err,
                             "redundant_terms": red}

    coeff_path = outdir / "discover_coefficients.csv"
    solution_csv(sol, terms, coeff_path)
    diag_path = outdir / "discover_diagnostics.json"
    diag_path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"wrote {coeff_path}")
    print(f"wrote {diag_path}")
    return 0


def _discover_scalar(cfg, outdir, preset, ds, table, hyper) -> int:
    spec = preset.library_spec("scalar")
    cands = build_scalar_library(spec)
    channels = _target_channels(ds, preset)
    time_target = preset.lhs[0] == "time_derivative"

    components = {}
    coeff_path = outdir / "discover_coefficients.csv"
    with open(coeff_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "column", "term", "coefficient"])
        for ch in channels:
            problem = assemble_scalar_problem(cands, table, ch)
            sol = train_stridge(problem, hyper)
            label = f"d{ch}/dt" if time_target else f"target[{ch}]"
            eq = equation_text(label, sol.coefficients, cands)
            print(eq)
            components[ch] = {"equation": eq, **solution_diagnostics(sol)}
            for i, c in enumerate(sol.coefficients):
                if c != 0.0:
                    writer.writerow([ch, i, cands[i].text, repr(float(c))])

    record = {"case": cfg.case, "mode": "scalar", "components": components}
    diag_path = outdir / "discover_diagnostics.json"
    diag_path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"wrote {coeff_path}")
    print(f"wrote {diag_path}")
    return 0


def cmd_discover(cfg: RunConfig, outdir: Path, args) -> int:
    preset = _require_preset(cfg)
    ds, path = _load_or_generate(cfg, outdir)
    table = sample_points(ds, cfg.n_space, _effective_n_time(cfg, ds),
                          cfg.sample_seed)
    hyper = _hyperparams(cfg, preset)
    print(f"case {cfg.case}, {cfg.mode} mode, dataset {path.name}, "
          f"{table.n_rows} sample rows, d_tol {hyper.d_tol:g}")
    if cfg.mode == "tensor":
        return _discover_tensor(cfg, outdir, preset, ds, table, hyper)
    return _discover_scalar(cfg, outdir, preset, ds, table, hyper)


def cmd_pareto(cfg: RunConfig, outdir: Path, args) -> int:
    if cfg.mode != "tensor":
        raise ConfigError("the tolerance sweep runs on the tensor library")
    preset = _require_preset(cfg)
    ds, path = _load_or_generate(cfg, outdir)
    table = sample_points(ds, cfg.n_space, _effective_n_time(cfg, ds),
                          cfg.sample_seed)
    spec = preset.library_spec()
    terms = [e.term for e in build_tensor_entries(spec)]
    problem = assemble_problem(terms, table, spec, _lhs_spec(ds, preset))

    grid = dtol_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_points)
    points = sweep_dtol(problem, _hyperparams(cfg, preset), grid)
    front = pareto_front(points)
    knee = knee_point(front)

    csv_path = outdir / "pareto_sweep.csv"
    svg_path = outdir / "pareto_sweep.svg"
    write_sweep_csv(points, front, knee, csv_path)
    render_sweep(points, front, knee, svg_path)

    print(f"swept {len(points)} tolerances in [{cfg.grid_lo:g}, {cfg.grid_hi:g}] "
          f"on dataset {path.name}")
    print("front: " + "; ".join(f"{p.sparsity} terms @ residual {p.residual:.4g}"
                                for p in front))
    if knee is not None:
        print(f"knee at {knee.sparsity} terms; suggested d_tol "
              f"{suggested_dtol(knee):.6g} (suggestion only, never auto-applied)")
    else:
        print("front has fewer than two points; no knee suggestion")
    print(f"wrote {csv_path}")
    print(f"wrote {svg_path}")
    return 0


def cmd_equiv_check(cfg: RunConfig, outdir: Path, args) -> int:
    preset = _require_preset(cfg)
    dim = preset.spatial_dim
    rng = np.random.default_rng(cfg.data_seed)
    source = AnalyticFieldSource.for_case(
        preset, rng, constants=CONSTANT_CHANNELS.get(cfg.case))
    transforms = [identity_transform(dim)]
    transforms += [random_rotation(rng, dim, f"rotation-{k}")
                   for k in range(cfg.n_rotations)]
    transforms += [random_reflection(rng, dim, f"reflection-{k}")
                   for k in range(cfg.n_reflections)]
    transforms += lattice_symmetries(dim)
    points = rng.uniform(0.0, 2.0 * np.pi, size=(dim, 48))

    terms = [e.term for e in build_tensor_entries(preset.library_spec())]
    rows = equivariance_report(terms, source, transforms, points)
    summary = summarize_report(rows, cfg.threshold)

    csv_path = outdir / "equivariance.csv"
    svg_path = outdir / "equivariance.svg"
    write_equivariance_csv(rows, csv_path)
    render_equivariance(rows, svg_path)
    (outdir / "equivariance_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")

    print(f"{summary['n_checks']} checks ({len(terms)} candidates x "
          f"{len(transforms)} transforms)")
    print(f"max deviation {summary['max_deviation']:.3e} on "
          f"'{summary['worst_term']}' (threshold {cfg.threshold:g})")
    print(f"wrote {csv_path}")
    print(f"wrote {svg_path}")
    if summary["passed"]:
        print("PASS")
        return 0
    print(f"FAIL: {summary['failures']} checks above threshold")
    return 2


def cmd_bench(cfg: RunConfig, outdir: Path, args) -> int:
    preset = _require_preset(cfg)
    ds, path = _load_or_generate(cfg, outdir)
    hyper = _hyperparams(cfg, preset)
    spec_t = preset.library_spec("tensor")
    spec_s = preset.library_spec("scalar")
    channels = _target_channels(ds, preset)
    truth = GroundTruth(preset.truth) if cfg.truth else None

    runs = []
    for k in range(cfg.n_seeds):
        seed = cfg.sample_seed + k
        table = sample_points(ds, cfg.n_space, _effective_n_time(cfg, ds),
                              seed)

        t0 = time.perf_counter()
        terms = [e.term for e in build_tensor_entries(spec_t)]
        problem = assemble_problem(terms, table, spec_t, _lhs_spec(ds, preset))
        build_t = time.perf_counter() - t0
        t0 = time.perf_counter()
        sol = train_stridge(problem, hyper)
        reg_t = time.perf_counter() - t0
        runs.append({
            "seed": seed, "mode": "tensor",
            "build_s": build_t, "regression_s": reg_t,
            "error_percent": prediction_error(sol, truth, terms) if truth else None,
            "redundant": redundancy_count(sol, truth, terms) if truth else None,
            "sparsity": sol.sparsity,
            "residual": float(np.linalg.norm(
                problem.theta @ sol.coefficients - problem.lhs)),
        })

        t0 = time.perf_counter()
        cands = build_scalar_library(spec_s)
        problems = {ch: assemble_scalar_problem(cands, table, ch)
                    for ch in channels}
        build_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        sols = {ch: train_stridge(p, hyper) for ch, p in problems.items()}
        reg_s = time.perf_counter() - t0
        sq = sum(float(np.linalg.norm(
            problems[ch].theta @ sols[ch].coefficients
            - problems[ch].lhs)) ** 2 for ch in channels)
        runs.append({
            "seed": seed, "mode": "scalar",
            "build_s": build_s, "regression_s": reg_s,
            "error_percent": None, "redundant": None,
            "sparsity": sum(s.sparsity for s in sols.values()),
            "residual": float(np.sqrt(sq)),
        })

    runs_path = outdir / "bench_runs.csv"
    with open(runs_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "mode", "build_s", "regression_s",
                         "error_percent", "redundant", "sparsity",
                         "residual"])
        for r in runs:
            writer.writerow([r["seed"], r["mode"],
                             f"{r['build_s']:.6f}", f"{r['regression_s']:.6f}",
                             "" if r["error_percent"] is None
                             else repr(r["error_percent"]),
                             "" if r["redundant"] is None else r["redundant"],
                             r["sparsity"], repr(r["residual"])])

    def stage_mean(mode, key):
        vals = [r[key] for r in runs if r["mode"] == mode]
        return float(np.mean(vals))

    summary_path = outdir / "bench_summary.csv"
    errors = [r["error_percent"] for r in runs
              if r["mode"] == "tensor" and r["error_percent"] is not None]
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "n_seeds", "build_s_mean",
                         "regression_s_mean", "error_percent_mean",
                         "error_percent_median", "error_percent_q1",
                         "error_percent_q3"])
        for mode in ("tensor", "scalar"):
            stats = ["", "", "", ""]
            if mode == "tensor" and errors:
                stats = [repr(float(np.mean(errors))),
                         repr(float(np.median(errors))),
                         repr(float(np.quantile(errors, 0.25))),
                         repr(float(np.quantile(errors, 0.75)))]
            writer.writerow([mode, cfg.n_seeds,
                             f"{stage_mean(mode, 'build_s'):.6f}",
                             f"{stage_mean(mode, 'regression_s'):.6f}",
                             *stats])

    print(f"benchmark on {path.name}: {cfg.n_seeds} sampling seeds, "
          f"both modes")
    print(f"Candidate library construction: tensor "
          f"{stage_mean('tensor', 'build_s'):.4f} s, scalar "
          f"{stage_mean('scalar', 'build_s'):.4f} s (mean)")
    tr = stage_mean("tensor", "regression_s")
    sr = stage_mean("scalar", "regression_s")
    print(f"Sparse regression: tensor {tr:.4f} s, scalar {sr:.4f} s (mean); "
          f"scalar/tensor ratio {sr / tr:.1f}x")
    if errors:
        print(f"tensor coefficient error [%]: mean {np.mean(errors):.4f}, "
              f"median {np.median(errors):.4f}, quartiles "
              f"[{np.quantile(errors, 0.25):.4f}, "
              f"{np.quantile(errors, 0.75):.4f}]")
        svg_path = outdir / "bench_errors.svg"
        render_bench_errors(
            {r["seed"]: r["error_percent"] for r in runs
             if r["mode"] == "tensor"}, svg_path)
        print(f"wrote {svg_path}")
    print(f"wrote {runs_path}")
    print(f"wrote {summary_path}")
    return 0


def cmd_selftest(cfg: RunConfig, outdir: Path, args) -> int:
    from ctsr.acceptance import run_selftest

    results = run_selftest(full=getattr(args, "full", False))
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name}  ({r.elapsed:.2f}s)")
        if r.details:
            print(f"      {r.details}")
    failed = sum(1 for r in results if not r.passed)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 3


COMMANDS = {
    "gen-data": cmd_gen_data,
    "build-library": cmd_build_library,
    "discover": cmd_discover,
    "pareto": cmd_pareto,
    "equiv-check": cmd_equiv_check,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
}


# ---------------------------------------------------------------------------
# argument parsing

def _tuple_of_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _tuple_of_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


# argparse builds its "invalid ... value" message from the type's __name__
_tuple_of_ints.__name__ = "comma-separated ints"
_tuple_of_floats.__name__ = "comma-separated floats"


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; remap to the documented 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--case", choices=sorted(CASES) + ["custom"])
    p.add_argument("--mode", choices=("tensor", "scalar"))
    p.add_argument("--output-dir",
                   help=f"output directory (default ${OUTPUT_DIR_ENV} "
                        f"or ./ctsr_out)")
    p.add_argument("--dataset", help="dataset file (default <output>/<case>.dat)")
    p.add_argument("--jobs", type=int,
                   help="worker cap (accepted; execution is serial)")

    g = p.add_argument_group("data generation")
    g.add_argument("--source", choices=("auto", "simulation", "manufactured"))
    g.add_argument("--grid-n", type=int, help="simulation grid points per axis")
    g.add_argument("--epsilon", type=float, help="simulation viscosity")
    g.add_argument("--saved-steps", type=int,
                   help="simulation snapshots after the initial state")
    g.add_argument("--snapshot-dt", type=float)
    g.add_argument("--shape", type=_tuple_of_ints,
                   help="manufactured grid shape, e.g. 32,32")
    g.add_argument("--times", type=int,
                   help="manufactured snapshot count (1 = steady)")
    g.add_argument("--n-modes", type=int)
    g.add_argument("--max-wavenumber", type=int)
    g.add_argument("--amplitude", type=float)
    g.add_argument("--richness", type=_tuple_of_floats,
                   help="per-axis richness weights, e.g. 1,1,0.01")
    g.add_argument("--derivative-mode", choices=("analytic", "stencil"))
    g.add_argument("--data-seed", type=int)

    g = p.add_argument_group("sampling")
    g.add_argument("--n-space", type=int)
    g.add_argument("--n-time", type=int)
    g.add_argument("--sample-seed", type=int)

    g = p.add_argument_group("regression")
    g.add_argument("--d-tol", type=float)
    g.add_argument("--lam", type=float)
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-stridge", type=int)
    g.add_argument("--split-ratio", type=float)
    g.add_argument("--solver-seed", type=int)
    g.add_argument("--tol-schedule", choices=("multiplicative", "additive"))
    g.add_argument("--normalize-columns", action=argparse.BooleanOptionalAction,
                   default=None)
    g.add_argument("--no-truth", dest="truth", action="store_false",
                   default=None,
                   help="skip error metrics against the configured truth")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ctsr",
        description="Invariant equation discovery from field data.",
        epilog="exit codes: 0 success, 1 config error, 2 numerical "
               "failure, 3 failed self-test")
    sub = parser.add_subparsers(dest="command", metavar="command")

    specs = [
        ("gen-data", "generate and save a dataset for a case preset", None),
        ("build-library", "enumerate the candidate library", None),
        ("discover", "run sparse regression and print the equation", None),
        ("pareto", "sweep d_tol and suggest a knee", _add_pareto),
        ("equiv-check", "check candidates under rotations/reflections",
         _add_equiv),
        ("bench", "multi-seed timings and error statistics", _add_bench),
        ("selftest", "run the built-in acceptance checks", _add_selftest),
    ]
    for name, help_text, extra in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if extra:
            extra(p)
    return parser


def _add_pareto(p):
    g = p.add_argument_group("sweep")
    g.add_argument("--grid-lo", type=float)
    g.add_argument("--grid-hi", type=float)
    g.add_argument("--grid-points", type=int)


def _add_equiv(p):
    g = p.add_argument_group("transforms")
    g.add_argument("--n-rotations", type=int)
    g.add_argument("--n-reflections", type=int)
    g.add_argument("--threshold", type=float)


def _add_bench(p):
    p.add_argument("--n-seeds", type=int)


def _add_selftest(p):
    p.add_argument("--full", action="store_true",
                   help="run every check, not just the fast subset")


# ---------------------------------------------------------------------------

_NUMERIC_MARKERS = ("non-finite", "nan", "singular", "stability bound")


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (np.linalg.LinAlgError, FloatingPointError,
                        ZeroDivisionError, OverflowError)):
        return 2
    if isinstance(exc, ValueError) and any(
            marker in str(exc).lower() for marker in _NUMERIC_MARKERS):
        return 2
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        cfg = build_config(args)
        outdir = resolve_output_dir(cfg)
        write_effective_config(cfg, args.command, outdir)
        return COMMANDS[args.command](cfg, outdir, args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DatasetFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, np.linalg.LinAlgError, FloatingPointError,
            ZeroDivisionError, OverflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return _exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
