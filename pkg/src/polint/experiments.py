"""Experiment configs, presets, run drivers and artifact writers.

Every run writes a per-step CSV with a fixed header, a schema-versioned
JSON summary and a final-profile CSV; linearly implicit runs also dump
their polarisation. All output is deterministic for a fixed config:
floats are written with repr (shortest round trip) and JSON keys are
sorted.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .density import DensityPoly, gkdv_density, hamiltonian_d, parse_density
from .grid import Grid1D, GridFunction, default_realisation, make_standard_ops
from .integrators import (
    FullyImplicitStepper,
    MidpointStepper,
    NaiveLIStepper,
    NewtonDivergenceError,
    PavfStepper,
    SingularSystemError,
    SkewOp,
    bootstrap,
)
from .polarisation import (
    PolarisedDensity,
    eval_polarised,
    polarisation_json,
    polarise,
    polarise_gkdv,
)

STEPS_CSV_HEADER = (
    "step,t,H_d,polarised_H_d,sup_norm,solve_count,shape_err,distance_err"
)

SCHEMES = ("fi_cons", "li_cons", "fi_midpoint", "li_naive")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    equation: str = "kdv"  # kdv | gkdv | airy | custom
    scheme: str = "fi_cons"
    n_points: int = 32
    length: float = 10.0
    x0: float = -5.0
    dt: float = 0.1
    t_end: float = 100.0
    theta: float = 0.5
    k: int | None = None
    p: int | None = None               # gkdv only
    density: str | None = None         # custom only (DSL text)
    c: float = 1.0                     # wave speed of the soliton data
    initial: str | None = None         # soliton | sin | discrete_tw
    amplitude_scale: float = 1.0
    x_realisation: str = "forward"
    blowup_factor: float = 1e3

    def __post_init__(self):
        if self.equation not in ("kdv", "gkdv", "airy", "custom"):
            raise ConfigError(f"unknown equation {self.equation!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_end < self.dt:
            raise ConfigError("t_end must be at least dt")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")
        if self.equation == "gkdv" and (self.p is None or self.p < 3):
            raise ConfigError("gkdv requires integer p >= 3")
        if self.equation == "custom" and not self.density:
            raise ConfigError("custom equation requires a density string")
        if self.initial is None:
            self.initial = "sin" if self.equation == "airy" else "soliton"

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return ExperimentConfig(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix == ".toml":
            try:
                import tomllib
            except ImportError:  # Python < 3.11
                import tomli as tomllib

            try:
                data = tomllib.loads(text)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a table/object")
        return ExperimentConfig.from_dict(data)


PRESETS: dict[str, dict] = {
    "kdv-soliton-fi-cons": dict(
        equation="kdv", scheme="fi_cons", n_points=32, length=10.0, x0=-5.0,
        dt=0.1, t_end=100.0,
    ),
    "kdv-soliton-li-cons": dict(
        equation="kdv", scheme="li_cons", n_points=32, length=10.0, x0=-5.0,
        dt=0.1, t_end=1000.0, theta=0.5,
    ),
    "kdv-soliton-fi": dict(
        equation="kdv", scheme="fi_midpoint", n_points=32, length=10.0,
        x0=-5.0, dt=0.1, t_end=100.0,
    ),
    "kdv-soliton-li": dict(
        equation="kdv", scheme="li_naive", n_points=32, length=10.0, x0=-5.0,
        dt=0.1, t_end=100.0,
    ),
    "airy-stable": dict(
        equation="airy", scheme="li_cons", n_points=64, length=2.0 * math.pi,
        x0=0.0, dt=0.1, t_end=10000.0, theta=0.5,
    ),
    "airy-unstable": dict(
        equation="airy", scheme="li_cons", n_points=64, length=2.0 * math.pi,
        x0=0.0, dt=0.1, t_end=100.0, theta=0.49,
    ),
    "gkdv-p4": dict(
        equation="gkdv", p=4, scheme="li_cons", n_points=32, length=10.0,
        x0=-5.0, dt=0.05, t_end=50.0, theta=0.5,
    ),
    "gkdv-p6": dict(
        equation="gkdv", p=6, scheme="li_cons", n_points=32, length=10.0,
        x0=-5.0, dt=0.05, t_end=50.0, amplitude_scale=0.5, theta=0.5,
    ),
}


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    data = dict(PRESETS[name])
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class Problem:
    config: ExperimentConfig
    grid: Grid1D
    real: dict
    D: SkewOp
    density: DensityPoly
    pd: PolarisedDensity | None
    k: int
    u0: GridFunction
    track_soliton: bool


def build_problem(config: ExperimentConfig) -> Problem:
    grid = Grid1D(config.n_points, config.length / config.n_points)
    real = default_realisation(grid, config.x_realisation)
    D = SkewOp(make_standard_ops(grid)["d1"])

    if config.equation == "airy":
        density = analysis.airy_density()
        p_degree = 2
    elif config.equation == "custom":
        density = parse_density(config.density)
        p_degree = density.degree
    else:
        p = 3 if config.equation == "kdv" else config.p
        density = gkdv_density(p)
        p_degree = p

    pd = None
    k = 1
    if config.scheme == "li_cons":
        k = config.k if config.k is not None else max(2, math.ceil(p_degree / 2))
        if config.equation in ("kdv", "gkdv"):
            p = 3 if config.equation == "kdv" else config.p
            if k == math.ceil(p / 2):
                pd = polarise_gkdv(p, config.theta)
            else:
                pd = polarise(density, k, config.theta)
        else:
            pd = polarise(density, k, config.theta)

    xs = grid.points(config.x0)
    if config.initial == "sin":
        values = np.sin(xs)
    elif config.initial == "soliton":
        values = config.amplitude_scale * analysis.soliton_values(
            grid, config.x0, config.c, 0.0
        )
    elif config.initial == "discrete_tw":
        values = analysis.discrete_traveling_wave(
            grid, config.x0, config.c, real, D
        ).values
    else:
        raise ConfigError(f"unknown initial data {config.initial!r}")

    track = (
        config.equation == "kdv"
        and config.initial in ("soliton", "discrete_tw")
    )
    return Problem(
        config, grid, real, D, density, pd, k, GridFunction(grid, values), track
    )


# ---------------------------------------------------------------------------
# run driver


@dataclass
class StepRecord:
    step: int
    t: float
    h_d: float
    polarised_h_d: float | None
    sup_norm: float
    solve_count: int
    shape_err: float | None
    distance_err: float | None


@dataclass
class RunResult:
    config: ExperimentConfig
    status: str  # completed | blowup | failed
    rows: list[StepRecord]
    error: str | None = None
    failed_step: int | None = None
    bootstrap_solves: int = 0
    stepping_solves: int = 0
    blowup_step: int | None = None
    final_values: np.ndarray | None = None
    pd: PolarisedDensity | None = None

    @property
    def total_solves(self) -> int:
        return self.bootstrap_solves + self.stepping_solves


def run_experiment(config: ExperimentConfig) -> RunResult:
    problem = build_problem(config)
    cfg, grid, real = config, problem.grid, problem.real
    n_steps = int(round(cfg.t_end / cfg.dt))
    newton_cfg = analysis.newton_config_for(cfg.dt)

    rows: list[StepRecord] = []
    solves = {"bootstrap": 0, "stepping": 0}

    def record(step: int, values: np.ndarray, pol_window: list[np.ndarray] | None):
        gf = GridFunction(grid, values)
        pol = None
        if problem.pd is not None and pol_window is not None:
            pol = eval_polarised(
                problem.pd, [GridFunction(grid, v) for v in pol_window], real
            )
        shape = dist = None
        if problem.track_soliton:
            errs = analysis.shape_distance_errors(gf, step * cfg.dt, cfg.c, cfg.x0)
            shape, dist = errs.shape_err, errs.distance_err
        rows.append(
            StepRecord(
                step,
                step * cfg.dt,
                hamiltonian_d(problem.density, gf, real),
                pol,
                gf.sup_norm(),
                solves["bootstrap"] + solves["stepping"],
                shape,
                dist,
            )
        )

    sup0 = problem.u0.sup_norm()
    status = "completed"
    error = None
    failed_step = None
    blowup_step = None
    final = None

    try:
        if cfg.scheme == "li_cons":
            history, boot = bootstrap(
                problem.density, problem.D, problem.u0, cfg.dt, problem.k,
                newton_cfg=newton_cfg, real=real,
            )
            solves["bootstrap"] = boot
            stepper = PavfStepper(problem.pd, problem.D, grid, cfg.dt, real)
            hist_vals = [h.values for h in history]
            for j, v in enumerate(hist_vals):
                record(j, v, hist_vals if j == problem.k - 1 else None)
            step = problem.k - 1
            while step < n_steps:
                new = stepper.step_values(hist_vals)
                hist_vals = hist_vals[1:] + [new]
                solves["stepping"] = stepper.solve_count
                step += 1
                record(step, new, hist_vals)
                if float(np.max(np.abs(new))) > cfg.blowup_factor * sup0:
                    status = "blowup"
                    blowup_step = step
                    break
            final = hist_vals[-1]
        else:
            if cfg.scheme == "fi_cons":
                stepper = FullyImplicitStepper(
                    problem.density, problem.D, grid, cfg.dt, real, newton_cfg
                )
            elif cfg.scheme == "fi_midpoint":
                stepper = MidpointStepper(
                    problem.density, problem.D, grid, cfg.dt, real, newton_cfg
                )
            else:
                stepper = NaiveLIStepper(
                    problem.density, problem.D, grid, cfg.dt, real
                )
            values = problem.u0.values
            record(0, values, None)
            for step in range(1, n_steps + 1):
                if cfg.scheme == "li_naive":
                    values = stepper.step_values(values)
                else:
                    values, _ = stepper.step_values(values)
                solves["stepping"] = stepper.solve_count
                record(step, values, None)
                if float(np.max(np.abs(values))) > cfg.blowup_factor * sup0:
                    status = "blowup"
                    blowup_step = step
                    break
            final = values
    except (NewtonDivergenceError, SingularSystemError) as exc:
        status = "failed"
        error = str(exc)
        failed_step = len(rows)
        final = None

    return RunResult(
        config=cfg,
        status=status,
        rows=rows,
        error=error,
        failed_step=failed_step,
        bootstrap_solves=solves["bootstrap"],
        stepping_solves=solves["stepping"],
        blowup_step=blowup_step,
        final_values=final if status != "failed" else None,
        pd=problem.pd,
    )


# ---------------------------------------------------------------------------
# artifact writers


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_steps_csv(path: Path, rows: list[StepRecord]) -> None:
    lines = [STEPS_CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.step,
                    r.t,
                    r.h_d,
                    r.polarised_h_d,
                    r.sup_norm,
                    r.solve_count,
                    r.shape_err,
                    r.distance_err,
                )
            )
        )
    path.write_text("\n".join(lines) + "\n")


def write_profile_csv(path: Path, grid: Grid1D, x0: float, values) -> None:
    lines = ["x,u"]
    xs = grid.points(x0)
    for x, u in zip(xs, values):
        lines.append(f"{_fmt(float(x))},{_fmt(float(u))}")
    path.write_text("\n".join(lines) + "\n")


def _json_dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _rel_max_dev(values: list[float]) -> float | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    ref = vals[0]
    scale = max(abs(ref), 1e-300)
    return max(abs(v - ref) for v in vals) / scale


def run_summary(result: RunResult, preset: str | None, artifacts: dict) -> dict:
    rows = result.rows
    last = rows[-1] if rows else None
    return {
        "schema": 1,
        "kind": "run",
        "preset": preset,
        "config": asdict(result.config),
        "status": result.status,
        "error": result.error,
        "failed_step": result.failed_step,
        "steps_completed": last.step if last else 0,
        "t_final": last.t if last else 0.0,
        "solves": {
            "bootstrap": result.bootstrap_solves,
            "stepping": result.stepping_solves,
            "total": result.total_solves,
        },
        "conservation": {
            "H_rel_max_dev": _rel_max_dev([r.h_d for r in rows]),
            "polarised_H_rel_max_dev": _rel_max_dev(
                [r.polarised_h_d for r in rows]
            ),
        },
        "final": {
            "sup_norm": last.sup_norm if last else None,
            "shape_err": last.shape_err if last else None,
            "distance_err": last.distance_err if last else None,
        },
        "blowup": {
            "flagged": result.status == "blowup",
            "step": result.blowup_step,
        },
        "artifacts": artifacts,
    }


def execute_run(
    config: ExperimentConfig, out_dir: str | Path, preset: str | None = None
) -> dict:
    """Run one experiment and write steps.csv/summary.json/profile.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config)
    artifacts = {"steps_csv": "steps.csv", "profile_csv": None, "polarisation_json": None}
    write_steps_csv(out / "steps.csv", result.rows)
    if result.final_values is not None:
        grid = Grid1D(config.n_points, config.length / config.n_points)
        write_profile_csv(
            out / "profile.csv", grid, config.x0, result.final_values
        )
        artifacts["profile_csv"] = "profile.csv"
    if result.pd is not None:
        _json_dump(out / "polarisation.json", polarisation_json(result.pd))
        artifacts["polarisation_json"] = "polarisation.json"
    summary = run_summary(result, preset, artifacts)
    _json_dump(out / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# sweeps


SWEEP_CSV_HEADER = (
    "scheme,param,value,steps,status,solve_count,H_rel_max_dev,"
    "polarised_H_rel_max_dev,endpoint_energy_error,final_sup_norm,blowup"
)


def _max_workers(n_jobs: int) -> int:
    env = os.environ.get("POLINT_THREADS", "").strip()
    if env:
        return max(1, min(int(env), n_jobs))
    return max(1, min(4, n_jobs))


def execute_sweep(
    base: ExperimentConfig,
    param: str,
    values: list[float],
    out_dir: str | Path,
    preset: str | None = None,
) -> dict:
    """One run per parameter value; rows in input order, partial failures kept."""
    if param not in ("dt", "theta"):
        raise ConfigError(f"sweep parameter must be dt or theta, not {param!r}")
    if not values:
        raise ConfigError("sweep needs a non-empty value list")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    configs = []
    for v in values:
        data = asdict(base)
        data[param] = v
        configs.append(ExperimentConfig.from_dict(data))

    def one(cfg: ExperimentConfig) -> RunResult:
        try:
            return run_experiment(cfg)
        except Exception as exc:  # config-independent failures become rows
            return RunResult(cfg, "failed", [], error=str(exc))

    with ThreadPoolExecutor(max_workers=_max_workers(len(configs))) as pool:
        results = list(pool.map(one, configs))

    lines = [SWEEP_CSV_HEADER]
    h_series = []
    for v, res in zip(values, results):
        rows = res.rows
        h0 = rows[0].h_d if rows else None
        endpoint = abs(rows[-1].h_d - h0) if rows else None
        lines.append(
            ",".join(
                _fmt(x)
                for x in (
                    res.config.scheme,
                    param,
                    v,
                    rows[-1].step if rows else 0,
                    res.status,
                    res.total_solves,
                    _rel_max_dev([r.h_d for r in rows]),
                    _rel_max_dev([r.polarised_h_d for r in rows]),
                    endpoint,
                    rows[-1].sup_norm if rows else None,
                    res.status == "blowup",
                )
            )
        )
        if param == "dt" and res.status == "completed" and rows:
            h_series.append(
                (v, [r.t for r in rows], [r.h_d for r in rows])
            )
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")

    slope = None
    if len(h_series) >= 3:
        try:
            slope = analysis.energy_drift_study(h_series).slope
        except (ValueError, FloatingPointError):
            slope = None
    summary = {
        "schema": 1,
        "kind": "sweep",
        "preset": preset,
        "param": param,
        "values": list(values),
        "statuses": [r.status for r in results],
        "endpoint_energy_slope": slope,
        "artifacts": {"sweep_csv": "sweep.csv"},
    }
    _json_dump(out / "summary.json", summary)
    summary["_all_failed"] = all(r.status == "failed" for r in results)
    return summary


# ---------------------------------------------------------------------------
# the bundled study consumed by the figure renderer


CONVERGENCE_CSV_HEADER = (
    "scheme,dt,global_error,solve_count,endpoint_energy_error,status,note"
)
ENERGY_CSV_HEADER = "dt,endpoint_error,endpoint_sample,trailing_drift"


def execute_study(out_dir: str | Path, fast: bool = False) -> dict:
    """Run the full experiment bundle and emit one manifest (study.json).

    ``fast`` scales every run down for fixture generation and smoke tests.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs").mkdir(exist_ok=True)
    (out / "sweeps").mkdir(exist_ok=True)

    manifest: dict = {"schema": 1, "kind": "study", "fast": fast, "runs": {}, "sweeps": {}}

    run_specs: dict[str, dict] = {
        "kdv-soliton-fi-cons": {"t_end": 20.0 if fast else 100.0},
        "kdv-soliton-li-cons": {"t_end": 50.0 if fast else 1000.0},
        "kdv-soliton-fi": {"t_end": 20.0 if fast else 100.0},
        "kdv-soliton-li": {"t_end": 20.0 if fast else 100.0},
        "airy-stable": {"t_end": 200.0 if fast else 10000.0},
        "airy-unstable": {},
    }
    for name, overrides in run_specs.items():
        cfg = preset_config(name, **overrides)
        run_dir = out / "runs" / name
        execute_run(cfg, run_dir, preset=name)
        entry = {
            "dir": f"runs/{name}",
            "summary": f"runs/{name}/summary.json",
            "steps_csv": f"runs/{name}/steps.csv",
        }
        if (run_dir / "profile.csv").exists():
            entry["profile_csv"] = f"runs/{name}/profile.csv"
        manifest["runs"][name] = entry

    # convergence + cost sweep (time order measured from the semidiscrete
    # relative equilibrium, so the dt error is not floored by radiation)
    dts = [0.1, 0.05, 0.025] if fast else [0.1, 0.05, 0.025, 0.0125]
    t_end = 4.0 if fast else 8.0
    divisor = 16 if fast else 64
    setup = analysis.GkdvSetup.make(initial="discrete_tw")
    rows, _ = analysis.cost_accuracy_sweep(
        setup, list(SCHEMES), dts, t_end, reference_divisor=divisor
    )
    lines = [CONVERGENCE_CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                _fmt(x)
                for x in (
                    r.scheme, r.dt, r.global_error, r.solve_count,
                    r.endpoint_energy_error, r.status, r.note,
                )
            )
        )
    (out / "sweeps" / "convergence.csv").write_text("\n".join(lines) + "\n")
    slopes = {}
    for scheme in SCHEMES:
        pairs = [
            (r.dt, r.global_error)
            for r in rows
            if r.scheme == scheme and r.status == "ok"
        ]
        if len(pairs) >= 2:
            slopes[scheme] = analysis.fit_loglog_slope(
                [p[0] for p in pairs], [p[1] for p in pairs]
            )
    manifest["sweeps"]["convergence"] = {
        "csv": "sweeps/convergence.csv",
        "t_end": t_end,
        "slopes": slopes,
    }

    # energy drift of the polarised scheme in the plain Hamiltonian
    drift_setup = analysis.GkdvSetup.make()
    drift_t_end = 50.0 if fast else 200.0
    drift_runs = []
    for dt in dts:
        _, _, hd = analysis.run_scheme_to(
            drift_setup, "li_cons", dt, drift_t_end, collect_hd=True
        )
        drift_runs.append((dt, [i * dt for i in range(len(hd))], hd))
    report = analysis.energy_drift_study(drift_runs)
    lines = [ENERGY_CSV_HEADER]
    for e in report.entries:
        lines.append(
            ",".join(
                _fmt(x)
                for x in (e.dt, e.endpoint_error, e.endpoint_sample, e.trailing_drift)
            )
        )
    (out / "sweeps" / "energy.csv").write_text("\n".join(lines) + "\n")
    manifest["sweeps"]["energy"] = {
        "csv": "sweeps/energy.csv",
        "t_end": drift_t_end,
        "slope": report.slope,
    }

    _json_dump(out / "study.json", manifest)
    return manifest
