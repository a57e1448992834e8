"""Command-line front end: ``delayconv {fundamental,mild,simulate,moments,verify}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import tomli

from . import artifacts
from .config import ConfigError, RunConfig
from .fundamental import SolverError, fit_estimate, solve_all
from .mild import InitialDatum, mild_solve, residual_check
from .regularity import verify_dashboard
from .spectral import DomainError
from .stochastic import CovarianceError, increment_lattice, second_moment, simulate_paths

log = logging.getLogger("delayconv")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _path_gamma(cfg: RunConfig) -> float:
    positive = [g for g in cfg.noise_gammas if g > 0]
    return positive[0] if positive else 0.25


def cmd_fundamental(cfg: RunConfig, workers: int = 1) -> int:
    model, grid = cfg.model(), cfg.grid()
    fs = solve_all(model, grid, workers=workers)
    out = _out_dir(cfg)
    artifacts.write_fundamental(out / "fundamental.csv", fs)
    reports = []
    ns = [n for n in cfg.ns if n < grid.N]
    for n in ns:
        for g in cfg.gammas:
            reports.append(fit_estimate("thm21a", fs, {"n": n, "gamma": g}))
            reports.append(fit_estimate("thm21a_int", fs, {"n": n, "gamma": g}))
            for b in cfg.betas:
                reports.append(fit_estimate("thm21b", fs, {"n": n, "gamma": g, "beta": b}))
        for k in cfg.kappas:
            reports.append(fit_estimate("lem31", fs, {"n": n, "kappa": k}))
    if not model.kernel.is_zero:
        for g in cfg.gammas:
            for b in cfg.betas:
                reports.append(fit_estimate("prop43", fs, {"gamma": g, "beta": b}))
    artifacts.write_fits(out / "fits.csv", reports)
    log.info("wrote %d fits", len(reports))
    return EXIT_OK


def load_datum(path: str | Path | None, cfg: RunConfig) -> tuple[InitialDatum, np.ndarray | None, float]:
    """Datum file (TOML)::

        phi0.decay = 6.0       # phi0_k = scale * k^-decay, or phi0.values = [...]
        phi0.scale = 1.0
        phi1.form = "cosine"   # zero | stationary | cosine
        forcing.scale = 0.0    # f_k(t) = scale * phi0_k
        trajectory.gamma = 0.25
    """
    data: dict = {}
    if path is not None:
        try:
            data = tomli.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read datum file: {exc}") from exc
    allowed = {"phi0": {"decay", "scale", "values"}, "phi1": {"form"}, "forcing": {"scale"}, "trajectory": {"gamma"}}
    for key, block in data.items():
        if key not in allowed or not isinstance(block, dict) or not set(block) <= allowed[key]:
            raise ConfigError(f"unknown datum key {key!r}")
    grid, K = cfg.grid(), cfg.modes
    p0 = data.get("phi0", {})
    if "values" in p0:
        phi0 = np.asarray(p0["values"], dtype=float)
        if phi0.shape != (K,):
            raise ConfigError(f"phi0.values must have {K} entries")
    else:
        k = np.arange(1, K + 1, dtype=float)
        phi0 = float(p0.get("scale", 1.0)) * k ** -float(p0.get("decay", 6.0))
    form = data.get("phi1", {}).get("form", "cosine")
    if form == "zero":
        datum = InitialDatum(phi0, np.zeros((K, grid.m + 1)))
    elif form == "stationary":
        datum = InitialDatum.stationary(phi0, grid)
    elif form == "cosine":
        datum = InitialDatum.cosine(phi0, grid)
    else:
        raise ConfigError(f"unknown phi1.form {form!r}")
    scale = float(data.get("forcing", {}).get("scale", 0.0))
    forcing = np.repeat((scale * phi0)[:, None], grid.size, axis=1) if scale else None
    gamma = float(data.get("trajectory", {}).get("gamma", 0.25))
    return datum, forcing, gamma


def cmd_mild(cfg: RunConfig, datum_path: str | None = None, workers: int = 1, dump_modes: bool = False) -> int:
    datum, forcing, gamma = load_datum(datum_path, cfg)
    model, grid = cfg.model(), cfg.grid()
    fs = solve_all(model, grid, workers=workers)
    traj = mild_solve(fs, datum, forcing)
    if not np.all(np.isfinite(traj.values)):
        raise SolverError("non-finite trajectory")
    artifacts.write_trajectory(_out_dir(cfg) / "trajectory.csv", traj, gamma, dump_modes)
    res = residual_check(traj, model, grid, datum, forcing)
    print(f"max residual {res:.6e}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, workers: int = 1) -> int:
    fs = solve_all(cfg.model(), cfg.grid(), workers=workers)
    ens = simulate_paths(fs, cfg.noise(), cfg.seed, cfg.paths, workers)
    artifacts.write_paths(_out_dir(cfg) / "paths.csv", fs.grid.nodes, ens.sq_norms(0.0), ens.sq_norms(_path_gamma(cfg)))
    return EXIT_OK


def cmd_moments(cfg: RunConfig, workers: int = 1) -> int:
    fs = solve_all(cfg.model(), cfg.grid(), workers=workers)
    noise = cfg.noise()
    grid = fs.grid
    s0 = float(grid.nodes[(grid.size - 1) // 2])
    pairs = [(s0, s0)] + increment_lattice(fs, s0, count=10)
    idx = [(grid.index_of(s), grid.index_of(t)) for s, t in pairs]
    ens = simulate_paths(fs, noise, cfg.seed, cfg.paths, workers)
    rows = []
    for g in cfg.noise_gammas or (0.0,):
        mc = ens.increment_sq_norms(idx, g)
        mean = mc.mean(axis=0)
        se = mc.std(axis=0, ddof=1) / np.sqrt(cfg.paths) if cfg.paths > 1 else np.full(len(idx), np.nan)
        for c, (s, t) in enumerate(pairs):
            rows.append((s, t, g, second_moment(fs, noise, g, s, t), mean[c], se[c], cfg.paths))
    artifacts.write_moments(_out_dir(cfg) / "moments.csv", rows)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, workers: int = 1, bound_scale: float = 1.0) -> int:
    """``bound_scale`` < 1 tightens every upper reference bound; tests use it as a negative control."""
    noise = cfg.noise()
    bundle = verify_dashboard(cfg.model(), cfg.grid(), noise, cfg.matrix(), seed=cfg.seed,
                              paths=cfg.paths, workers=workers, bound_scale=bound_scale,
                              holder_levels=cfg.holder_levels)
    out = _out_dir(cfg)
    artifacts.write_report(out / "report.csv", bundle)
    artifacts.write_summary(out / "summary.txt", bundle, noise.q_tail)
    print(bundle.summary())
    return EXIT_OK if bundle.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration (defaults: delay heat model)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides run.seed)")
    common.add_argument("--workers", type=int, metavar="N", default=os.cpu_count() or 1,
                        help="parallel workers; outputs do not depend on it (default: all cores)")
    common.add_argument("--dump-modes", action="store_true", help="add per-mode columns to trajectory.csv")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="delayconv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fundamental", parents=[common], help="solve G; write fundamental.csv and fits.csv")
    mild = sub.add_parser("mild", parents=[common], help="variation-of-constants solution; write trajectory.csv")
    mild.add_argument("--datum", metavar="PATH", help="TOML initial datum and forcing")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo stochastic convolution; write paths.csv")
    sub.add_parser("moments", parents=[common], help="quadrature vs Monte Carlo second moments; write moments.csv")
    sub.add_parser("verify", parents=[common], help="regularity dashboard; write report.csv and summary.txt")
    return parser


def main(argv: Sequence[str] | None = None, bound_scale: float = 1.0) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        changes = {}
        if args.out is not None:
            changes["out_dir"] = args.out
        if args.seed is not None:
            changes["seed"] = args.seed
        if changes:
            cfg = cfg.replace(**changes)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        workers = args.workers
        if args.command == "fundamental":
            return cmd_fundamental(cfg, workers)
        if args.command == "mild":
            return cmd_mild(cfg, args.datum, workers, args.dump_modes)
        if args.command == "simulate":
            return cmd_simulate(cfg, workers)
        if args.command == "moments":
            return cmd_moments(cfg, workers)
        return cmd_verify(cfg, workers, bound_scale)
    except (ConfigError, DomainError) as exc:
        print(f"delayconv: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, CovarianceError, FloatingPointError, OverflowError) as exc:
        print(f"delayconv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
