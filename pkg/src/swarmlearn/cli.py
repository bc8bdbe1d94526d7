"""``swarmlearn`` command line: simulate, learn, benchmark and sample kernels.

Every command reads a strict JSON config (unknown keys are rejected),
accepts ``--seed``/``--out``/``--threads`` overrides and writes CSV/JSON
artifacts into the output directory.  Exit codes: 0 success, 2 config or
validation error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .bench import crossover_report, loglog_slope, method_agreement, run_bench, write_bench_csv
from .domain import Domain, StateField, make_grid
from .kernels import (
    CuckerSmale,
    ScreenedPoisson1D,
    ScreenedPoisson2DSeries,
    SingularityError,
    kernel_from_dict,
)
from .learning import LearnConfig, fit_report, newton_learn
from .macro import (
    DensitySeries,
    MacroConfig,
    SimulationAborted,
    initial_conditions_1d,
    initial_conditions_2d,
    simulate_macro,
    simulate_macro_general_kernel,
)
from .micro import (
    add_observation_noise,
    empirical_density,
    empirical_momentum,
    flocking_diagnostics,
    sample_from_density,
    simulate_micro,
    to_fluctuation_frame,
)

log = logging.getLogger("swarmlearn")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


class ConfigError(ValueError):
    pass


COMMON = {"seed": 0, "out_dir": "out", "threads": 1}

MICRO_KEYS = {
    "dim": 1,
    "n_particles": 20000,
    "dt": 0.01,
    "n_steps": 200,
    "save_every": 10,
    "cells": 101,
    "half_width": math.pi,
    "kernel": {"type": "screened_poisson_1d", "k": 4.0, "lambda": 1.0, "L": 2 * math.pi},
    "noise_sigma2": 0.0,
    "stratified": False,
    "write_trajectory": True,
}

MACRO_KEYS = {
    "dim": 1,
    "cells": 101,
    "half_width": math.pi,
    "kernel": {"type": "screened_poisson_1d", "k": 4.0, "lambda": 1.0, "L": 2 * math.pi},
    "t0": 0.0,
    "tf": 2.0,
    "dt": 0.01,
    "cfl": 0.45,
    "save_every": 10,
    "symbol": None,
}

LEARN_KEYS = {
    "observations": None,
    "theta0": [1.0, 0.5],
    "fd_step": 1e-4,
    "max_iters": 20,
    "grad_tol": 1e-6,
    "hessian_floor": None,
    "dt": 0.01,
    "symbol": None,
    "truncation": 256,
    "initial": "observed",
    "true_kernel": None,
    "x_fixed": 0.0,
    "multistart": 1,
}

BENCH_KEYS = {
    "dims": [1, 2],
    "methods": ["direct", "spectral", "fft_conv"],
    "Ns": {"1": [256, 512, 1024, 2048, 4096, 8192], "2": [16, 32, 64, 128]},
    "repeats": 5,
}

KERNEL_EVAL_KEYS = {
    "kernel": {"type": "screened_poisson_1d", "k": 4.0, "lambda": 1.0, "L": 2 * math.pi},
    "cells": 101,
    "half_width": None,
    "x_fixed": [0.0],
}


def _strict(raw: dict, schema: dict, what: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{what} config must be a JSON object")
    unknown = sorted(set(raw) - set(schema) - set(COMMON))
    if unknown:
        raise ConfigError(f"unknown {what} config keys: {', '.join(unknown)}")
    cfg = {**COMMON, **schema}
    cfg.update(raw)
    return cfg


def _positive_int(cfg, key, minimum=1):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {v!r}")
    return v


def _positive(cfg, key):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(f"{key} must be a positive number, got {v!r}")
    return float(v)


def _kernel(data):
    try:
        return kernel_from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad kernel spec: {exc}") from exc


def _grid(cfg):
    dim = cfg["dim"]
    if dim not in (1, 2):
        raise ConfigError(f"dim must be 1 or 2, got {dim!r}")
    return make_grid(Domain(dim, _positive(cfg, "half_width")), _positive_int(cfg, "cells", 3))


def _cosine_density_1d(L):
    return lambda x: np.pi / (2 * L) * np.cos(np.pi * x / L), lambda x: -np.sin(np.pi * x / L)


def _out(cfg) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _micro_run(cfg):
    """Particle run from the cosine initial profile; returns (grid, kernel, times, frames)."""
    _positive_int(cfg, "n_particles")
    _positive_int(cfg, "n_steps")
    _positive_int(cfg, "save_every")
    dt = _positive(cfg, "dt")
    if cfg["noise_sigma2"] < 0:
        raise ConfigError("noise_sigma2 must be nonnegative")
    grid = _grid(cfg)
    kernel = _kernel(cfg["kernel"])
    L = grid.length
    if grid.dim == 1:
        rho0, u0 = _cosine_density_1d(L)
    else:
        f = lambda x: np.pi / (2 * L) * np.cos(np.pi * x / L)  # noqa: E731
        rho0, u0 = (f, f), lambda X: -0.25 * np.sin(np.pi * X / L)
    ens = sample_from_density(rho0, u0, cfg["n_particles"], cfg["seed"], grid.domain.half_width,
                              grid.dim, stratified=bool(cfg["stratified"]))
    # the bounded-domain kernel is not translation invariant, so integrate in the lab frame
    times, frames = simulate_micro(ens, kernel, dt, cfg["n_steps"], cfg["save_every"])
    return grid, kernel, times, frames


def _observed_series(grid, times, frames, sigma2, seed) -> DensitySeries:
    states = []
    for i, e in enumerate(frames):
        e = add_observation_noise(e, sigma2, seed + 1 + i)
        states.append(StateField(grid, empirical_density(e, grid), tuple(empirical_momentum(e, grid))))
    return DensitySeries([float(t) for t in times], states)


def cmd_simulate_micro(cfg) -> int:
    cfg = _strict(cfg, MICRO_KEYS, "simulate-micro")
    grid, kernel, times, frames = _micro_run(cfg)
    out = _out(cfg)
    if cfg["write_trajectory"]:
        io.write_trajectory(out / "trajectory.csv", times, frames)
    series = _observed_series(grid, times, frames, cfg["noise_sigma2"], cfg["seed"])
    io.write_density_series(out / "density.csv", series)
    checker = kernel if isinstance(kernel, ScreenedPoisson1D) else None
    report = flocking_diagnostics(times, [to_fluctuation_frame(f) for f in frames], checker)
    io.write_json(out / "flocking.json", report.to_dict())
    return EXIT_OK


def _macro_config(cfg, grid, kernel):
    dt = None if cfg["dt"] is None else _positive(cfg, "dt")
    try:
        return MacroConfig(grid, kernel, float(cfg["t0"]), float(cfg["tf"]), dt, float(cfg["cfl"]),
                           _positive_int(cfg, "save_every"), cfg["symbol"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _macro_run(cfg):
    grid = _grid(cfg)
    kernel = _kernel(cfg["kernel"])
    mc = _macro_config(cfg, grid, kernel)
    init = initial_conditions_1d(grid) if grid.dim == 1 else initial_conditions_2d(grid)
    if isinstance(kernel, (ScreenedPoisson1D, ScreenedPoisson2DSeries)):
        return mc, init, simulate_macro(mc, init)
    if not getattr(kernel, "translation_invariant", False):
        raise ConfigError(f"kernel {kernel.tag} has no macro solver path")
    return mc, init, simulate_macro_general_kernel(mc, init)


def cmd_simulate_macro(cfg) -> int:
    cfg = _strict(cfg, MACRO_KEYS, "simulate-macro")
    _, _, (series, report) = _macro_run(cfg)
    out = _out(cfg)
    io.write_density_series(out / "density.csv", series)
    io.write_json(out / "conservation.json", report)
    return EXIT_OK


def _load_observations(cfg, config_dir: Path):
    """Observations are a DensitySeries CSV path or an inline generator config."""
    obs = cfg["observations"]
    if obs is None:
        raise ConfigError("learn needs 'observations'")
    if isinstance(obs, str):
        path = Path(obs)
        if not path.is_absolute():
            path = config_dir / path
        if not path.exists():
            raise ConfigError(f"observation file not found: {path}")
        return io.read_density_series(path), None
    if not isinstance(obs, dict) or "source" not in obs:
        raise ConfigError("inline observations need a 'source' of 'micro' or 'macro'")
    gen = dict(obs)
    source = gen.pop("source")
    gen.setdefault("seed", cfg["seed"])
    if source == "micro":
        g = _strict(gen, MICRO_KEYS, "micro observation")
        grid, _, times, frames = _micro_run(g)
        series = _observed_series(grid, times, frames, g["noise_sigma2"], g["seed"])
        init = initial_conditions_1d(grid) if grid.dim == 1 else initial_conditions_2d(grid)
        return series, init
    if source == "macro":
        g = _strict(gen, MACRO_KEYS, "macro observation")
        _, init, (series, _) = _macro_run(g)
        return series, init
    raise ConfigError(f"unknown observation source {source!r}")


def _starts(theta0, n):
    return [(theta0[0] * 2.0**i, theta0[1] * 2.0 ** (i / 2)) for i in range(n)]


def cmd_learn(cfg, config_dir: Path = Path(".")) -> int:
    cfg = _strict(cfg, LEARN_KEYS, "learn")
    obs, analytic_init = _load_observations(cfg, config_dir)
    grid = obs.grid
    theta0 = cfg["theta0"]
    if not (isinstance(theta0, list) and len(theta0) == 2 and min(theta0) > 0):
        raise ConfigError(f"theta0 must be two positive numbers, got {theta0!r}")
    if cfg["initial"] not in ("observed", "analytic"):
        raise ConfigError("initial must be 'observed' or 'analytic'")
    init = analytic_init if cfg["initial"] == "analytic" else None
    if cfg["initial"] == "analytic" and init is None:
        init = initial_conditions_1d(grid) if grid.dim == 1 else initial_conditions_2d(grid)
    if grid.dim == 1:
        kernel = ScreenedPoisson1D(theta0[0], theta0[1], grid.length)
    else:
        kernel = ScreenedPoisson2DSeries(theta0[0], theta0[1], grid.length, cfg["truncation"])
    forward = MacroConfig(grid, kernel, obs.times[0], obs.times[-1], cfg["dt"], symbol=cfg["symbol"])
    best = None
    for start in _starts(theta0, _positive_int(cfg, "multistart")):
        try:
            lc = LearnConfig(obs, forward, tuple(start), cfg["fd_step"], cfg["max_iters"], cfg["grad_tol"],
                             cfg["hessian_floor"], init, threads=cfg["threads"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        state = newton_learn(lc)
        if best is None or state.objective < best[0].objective:
            best = (state, lc)
    state, lc = best
    true_kernel = _kernel(cfg["true_kernel"]) if cfg["true_kernel"] else None
    report = fit_report(state, lc, true_kernel, float(cfg["x_fixed"]))
    out = _out(cfg)
    io.write_json(out / "fit.json", {
        "theta": report["theta"],
        "k": report["theta"][0],
        "lambda": report["theta"][1],
        "iterations": report["iterations"],
        "final_objective": report["final_objective"],
        "initial_objective": report["training"][0]["objective"],
        "status": report["status"],
        "frame_times": report["frame_times"],
        "frame_kl": report["frame_kl"],
    })
    io.write_rows(out / "training_error.csv", ("iter", "objective_log2"),
                  [(r["iter"], r["objective_log2"]) for r in report["training"]])
    cols = ["s", "psi_fit"] + (["psi_true"] if true_kernel is not None and grid.dim == 1 else [])
    io.write_rows(out / "kernel_profile.csv", cols, [[row[c] for c in cols] for row in report["kernel_profile"]])
    return EXIT_OK


def cmd_bench(cfg) -> int:
    cfg = _strict(cfg, BENCH_KEYS, "bench")
    try:
        sizes = {int(k): list(v) for k, v in cfg["Ns"].items()}
        results = run_bench(tuple(cfg["dims"]), tuple(cfg["methods"]), sizes, cfg["repeats"], cfg["threads"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    out = _out(cfg)
    write_bench_csv(results, out / "bench.csv")
    summary = {"slopes": {}, "crossover": {}, "agreement": {}}
    for dim in cfg["dims"]:
        for m in cfg["methods"]:
            summary["slopes"][f"{dim}d_{m}"] = loglog_slope(results, dim, m)
        summary["agreement"][f"{dim}d"] = method_agreement(dim, sizes[dim][0])
    if {"direct", "spectral"} <= set(cfg["methods"]):
        summary["crossover"] = {f"{d}d": v for d, v in crossover_report(results).items()}
    io.write_json(out / "bench_summary.json", summary)
    return EXIT_OK


def cmd_kernel_eval(cfg) -> int:
    cfg = _strict(cfg, KERNEL_EVAL_KEYS, "kernel-eval")
    kernel = _kernel(cfg["kernel"])
    L = getattr(kernel, "L", None)
    half = cfg["half_width"] if cfg["half_width"] is not None else (L / 2 if L else math.pi)
    dim = kernel.dim or 1
    grid = make_grid(Domain(dim, float(half)), _positive_int(cfg, "cells", 3))
    rows = []
    for xf in cfg["x_fixed"]:
        if dim == 1:
            for s in grid.centers:
                rows.append((xf, s, _safe_eval(kernel, xf, s)))
        else:
            anchor = np.asarray(xf, dtype=float)
            for p in grid.points():
                rows.append((anchor[0], anchor[1], p[0], p[1], _safe_eval(kernel, anchor, p)))
    header = ("x_fixed", "s", "psi") if dim == 1 else ("x_fixed", "y_fixed", "s_x", "s_y", "psi")
    io.write_rows(_out(cfg) / "kernel_profile.csv", header, rows)
    return EXIT_OK


def _safe_eval(kernel, x, s):
    try:
        if isinstance(kernel, CuckerSmale):
            return float(kernel.radial(np.linalg.norm(np.atleast_1d(np.asarray(x) - np.asarray(s)))))
        return float(kernel.evaluate(x, s))
    except SingularityError:
        warnings.warn(f"kernel is singular at x={x}, s={s}; writing nan")
        return float("nan")


COMMANDS = {
    "simulate-micro": cmd_simulate_micro,
    "simulate-macro": cmd_simulate_macro,
    "learn": cmd_learn,
    "bench": cmd_bench,
    "kernel-eval": cmd_kernel_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmlearn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--threads", type=int, help="worker threads for parallel inner loops")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        path = Path(args.config)
        try:
            cfg = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out_dir"] = args.out
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            cfg["threads"] = args.threads
        if args.command == "learn":
            return cmd_learn(cfg, path.parent)
        return COMMANDS[args.command](cfg)
    except (ConfigError, TypeError, ValueError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (RuntimeError, FloatingPointError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
