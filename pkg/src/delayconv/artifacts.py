"""CSV and text artifacts. Floats are written with 17 significant digits so files
are byte-identical for identical inputs, independent of locale."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fundamental import FundamentalSolution
from .mild import Trajectory
from .regularity import ReportBundle
from .report import FitReport


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def write_fundamental(path: Path, fs: FundamentalSolution) -> Path:
    t = fs.grid.nodes
    lam = fs.model.lam

    def rows():
        for k in range(fs.values.shape[0]):
            for i in range(t.size):
                yield (k + 1, lam[k], t[i], fs.values[k, i])

    return write_rows(path, ("mode_index", "lambda", "t", "g"), rows())


def write_fits(path: Path, reports: Sequence[FitReport]) -> Path:
    def rows():
        for rep in reports:
            p = rep.params
            beta = p.get("beta", p.get("kappa"))
            s, t = rep.argmax if rep.argmax is not None else (None, None)
            n = int(p["n"]) if "n" in p else None
            yield (rep.name, n, p.get("gamma"), beta, rep.value, s, t, rep.refine_ratio, rep.diverged)

    header = ("estimate_name", "n", "gamma", "beta", "constant", "argmax_s", "argmax_t", "refine_ratio", "diverged")
    return write_rows(path, header, rows())


def write_trajectory(path: Path, traj: Trajectory, gamma: float, dump_modes: bool = False) -> Path:
    hn, gn = traj.h_norm, traj.gamma_norm(gamma)
    header = ["t", "h_norm", "gamma_norm"]
    if dump_modes:
        header += [f"y_{k + 1}" for k in range(traj.values.shape[0])]

    def rows():
        for i, t in enumerate(traj.nodes):
            row = [t, hn[i], gn[i]]
            if dump_modes:
                row.extend(traj.values[:, i])
            yield row

    return write_rows(path, header, rows())


def write_moments(path: Path, rows: Iterable[Sequence]) -> Path:
    header = ("s", "t", "gamma", "quadrature_value", "mc_mean", "mc_stderr", "paths")
    return write_rows(path, header, rows)


def write_paths(path: Path, nodes: np.ndarray, h_sq: np.ndarray, g_sq: np.ndarray) -> Path:
    """Per-path norms; ``h_sq`` and ``g_sq`` have shape (P, n) and hold squared norms."""

    def rows():
        for p in range(h_sq.shape[0]):
            hn, gn = np.sqrt(h_sq[p]), np.sqrt(g_sq[p])
            for i, t in enumerate(nodes):
                yield (t, p, hn[i], gn[i])

    return write_rows(path, ("t", "path_id", "h_norm", "gamma_norm"), rows())


def write_report(path: Path, bundle: ReportBundle) -> Path:
    def rows():
        for c in bundle.cells:
            rep = c.report
            params = ";".join(f"{k}={_fmt(v)}" for k, v in sorted(rep.params.items()))
            yield (c.check, params, rep.value, rep.interval[0], rep.interval[1], rep.refine_ratio,
                   rep.truncation_ratio, rep.diverged, "|".join(rep.tags), c.in_range, c.passed, c.criterion)

    header = ("check", "params", "value", "low", "high", "refine_ratio", "truncation_ratio",
              "diverged", "tags", "in_range", "passed", "criterion")
    return write_rows(path, header, rows())


def write_summary(path: Path, bundle: ReportBundle, q_tail: float | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = bundle.summary()
    if q_tail is not None:
        text = f"noise truncation: trace of Q beyond retained modes = {q_tail:.3e}\n" + text
    if bundle.calibration is not None:
        cal = bundle.calibration
        text = (f"holder calibration on exact OU paths: estimate={cal.estimate:.4f} "
                f"bias={cal.bias:.4f} levels={list(cal.levels)}\n") + text
    path.write_text(text + "\n", encoding="utf-8")
    return path
