"""Variation-of-constants solution for a given initial history and forcing.

Per mode,

    y(t) = g(t) phi0 + int_{-r}^0 U_t(th) phi1(th) dth + int_0^t g(t-s) f(s) ds,
    U_t(th) = c1 l^mu g(t-th-r) + c2 l^nu int_{-r}^th g(t-th+tau) a(tau) dtau.

g vanishes for negative arguments and jumps to 1 at zero, so every integral is
a trapezoid sum over the support of its integrand only (half weights at both
ends of the support). Written that way, all three terms are causal
convolutions of g with fixed sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .fundamental import FundamentalSolution, StepGrid
from .spectral import DomainError, SpectralModel


@dataclass(frozen=True, eq=False)
class InitialDatum:
    """phi0 has shape (K,); phi1 has shape (K, m + 1) sampled on the theta grid."""

    phi0: np.ndarray
    phi1: np.ndarray

    def __post_init__(self) -> None:
        phi0 = np.asarray(self.phi0, dtype=float)
        phi1 = np.asarray(self.phi1, dtype=float)
        if phi0.ndim != 1 or phi1.ndim != 2 or phi1.shape[0] != phi0.size:
            raise DomainError("phi0 must be (K,) and phi1 (K, m+1)")
        if not (np.all(np.isfinite(phi0)) and np.all(np.isfinite(phi1))):
            raise DomainError("initial datum must be finite")
        object.__setattr__(self, "phi0", phi0)
        object.__setattr__(self, "phi1", phi1)

    @classmethod
    def zero(cls, modes: int, grid: StepGrid) -> InitialDatum:
        return cls(np.zeros(modes), np.zeros((modes, grid.m + 1)))

    @classmethod
    def stationary(cls, phi0: np.ndarray, grid: StepGrid) -> InitialDatum:
        """History equal to phi0 on all of [-r, 0]."""
        phi0 = np.asarray(phi0, dtype=float)
        return cls(phi0, np.repeat(phi0[:, None], grid.m + 1, axis=1))

    @classmethod
    def cosine(cls, phi0: np.ndarray, grid: StepGrid) -> InitialDatum:
        """Smooth history phi1_k(th) = phi0_k cos(pi th / r), continuous at th = 0."""
        phi0 = np.asarray(phi0, dtype=float)
        return cls(phi0, phi0[:, None] * np.cos(np.pi * grid.theta / grid.r)[None, :])

    @property
    def modes(self) -> int:
        return self.phi0.size

    def scaled(self, alpha: float) -> InitialDatum:
        return InitialDatum(alpha * self.phi0, alpha * self.phi1)

    def __add__(self, other: InitialDatum) -> InitialDatum:
        return InitialDatum(self.phi0 + other.phi0, self.phi1 + other.phi1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    nodes: np.ndarray
    lam: np.ndarray
    values: np.ndarray  # (K, n)

    @property
    def h_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=0))

    def gamma_norm(self, gamma: float) -> np.ndarray:
        w = self.lam ** (2 * gamma)
        return np.sqrt(w @ self.values**2)


def _support_trapezoid(values: np.ndarray, h: float) -> float:
    if values.size < 2:
        return 0.0
    return h * (values.sum() - 0.5 * (values[0] + values[-1]))


def structural_kernel(fs: FundamentalSolution, t: float, theta: float, k: int) -> float:
    """U_t(theta) for mode k at grid node t and history node theta."""
    grid, model = fs.grid, fs.model
    i = grid.index_of(t)
    j = int(round((theta + grid.r) / grid.h))
    if not 0 <= j <= grid.m or abs(grid.theta[j] - theta) > 1e-8 * grid.r:
        raise DomainError("theta must be a node of [-r, 0]")
    g = fs.values[k]
    lam = model.lam[k]
    out = 0.0
    if i - j >= 0:
        out += model.c1 * lam**model.mu * g[i - j]
    if model.c2 != 0.0 and not model.kernel.is_zero:
        # tau_l = -r + l h, argument index i - j + l, support l >= j - i
        lo = max(0, j - i)
        ls = np.arange(lo, j + 1)
        a = model.kernel(grid.theta[ls])
        out += model.c2 * lam**model.nu * _support_trapezoid(g[i - j + ls] * a, grid.h)
    return float(out)


def _causal(kernel: np.ndarray, seq: np.ndarray, n: int) -> np.ndarray:
    """out[:, i] = sum_{d <= i} seq[:, d] kernel[:, i - d] for i < n."""
    if seq.shape[1] == 0:
        return np.zeros((kernel.shape[0], n))
    return signal.fftconvolve(kernel, seq, axes=1)[:, :n]


def _history_term(fs: FundamentalSolution, phi1: np.ndarray) -> np.ndarray:
    grid, model = fs.grid, fs.model
    m, n, h = grid.m, grid.size, grid.h
    g = fs.values
    idx = np.arange(n)
    w = np.full(m + 1, h)
    w[0] = w[-1] = 0.5 * h
    out = np.zeros_like(g)

    if model.c1 != 0.0:
        # sum_{j <= J} phi1_j g[i-j], J = min(i, m), half weights at j = 0 and j = J
        full = _causal(g, phi1, n)
        last = np.minimum(idx, m)
        ends = phi1[:, [0]] * g + phi1[:, last] * g[:, idx - last]
        part = h * (full - 0.5 * ends)
        part[:, 0] = 0.0
        out += model.a1_diag[:, None] * part

    if model.c2 != 0.0 and not model.kernel.is_zero:
        a = model.kernel(grid.theta)
        wp = w * phi1  # (K, m+1)
        # c_d = sum_{j >= d} wp_j a_{j-d}
        c = signal.fftconvolve(wp[:, ::-1], a[None, :], axes=1)[:, m::-1]
        main = h * _causal(g, c, n)
        # lower end of the tau support: a_0 g[i-j] when j <= i, a_{j-i} g[0] when j > i
        low = a[0] * _causal(g, wp, n)
        tail = np.zeros_like(g)
        span = min(m, n)
        tail[:, :span] = (c - a[0] * wp)[:, :span]
        low += tail * g[:, [0]]
        upper = g * (wp @ a)[:, None]
        part = main - 0.5 * h * (low + upper)
        out += model.a2_diag[:, None] * part
    return out


def _check(fs: FundamentalSolution, datum: InitialDatum, forcing: np.ndarray | None) -> None:
    if datum.modes != fs.model.modes or datum.phi1.shape[1] != fs.grid.m + 1:
        raise DomainError("initial datum does not match the fundamental solution's modes or grid")
    if forcing is not None and np.shape(forcing) != fs.values.shape:
        raise DomainError(f"forcing must have shape {fs.values.shape}")


def mild_solve(fs: FundamentalSolution, datum: InitialDatum, forcing: np.ndarray | None = None) -> Trajectory:
    _check(fs, datum, forcing)
    g, h, n = fs.values, fs.grid.h, fs.grid.size
    y = g * datum.phi0[:, None]
    if np.any(datum.phi1):
        y = y + _history_term(fs, datum.phi1)
    if forcing is not None and np.any(forcing):
        f = np.asarray(forcing, dtype=float)
        conv = _causal(g, f, n)
        conv = h * (conv - 0.5 * (g * f[:, [0]] + g[:, [0]] * f))
        conv[:, 0] = 0.0
        y = y + conv
    return Trajectory(fs.grid.nodes, fs.model.lam, y)


def residual_check(traj: Trajectory, model: SpectralModel, grid: StepGrid, datum: InitialDatum,
                   forcing: np.ndarray | None = None) -> float:
    """Largest defect of the integrated equation

        y(t) - phi0 - int_0^t [-l y + c1 l^mu y(s-r) + c2 l^nu int a(th) y(s+th) dth + f] ds

    over nodes and modes, all integrals by trapezoid. The history point y(0)
    is two-valued (phi1(0) from the left, phi0 from the right), so the delayed
    term uses one-sided values per cell and the theta-integral splits at -s.
    """
    y = traj.values
    m, n, h = grid.m, grid.size, grid.h
    K = y.shape[0]
    phi0, phi1 = datum.phi0, datum.phi1

    def delayed(idx: np.ndarray, from_right: bool) -> np.ndarray:
        out = np.empty((K, idx.size))
        past = idx < 0
        out[:, past] = phi1[:, idx[past] + m]
        out[:, ~past] = y[:, idx[~past]]
        if not from_right:
            out[:, idx == 0] = phi1[:, [m]]
        return out

    cells = np.arange(1, n)
    rate = -model.lam[:, None] * y
    left = rate[:, :-1].copy()
    right = rate[:, 1:].copy()
    if model.c1 != 0.0:
        left += model.a1_diag[:, None] * delayed(cells - 1 - m, True)
        right += model.a1_diag[:, None] * delayed(cells - m, False)
    if model.c2 != 0.0 and not model.kernel.is_zero:
        a = model.kernel(grid.theta)
        dist = np.empty((K, n))
        for i in range(n):
            split = max(0, m - i)  # theta index of -s
            past = phi1[:, i : i + split + 1] if split > 0 else phi1[:, :0]
            now = y[:, max(0, i - m) : i + 1]
            val = np.zeros(K)
            if split > 0:
                seg = past * a[: split + 1]
                val += h * (seg.sum(axis=1) - 0.5 * (seg[:, 0] + seg[:, -1]))
            seg = now * a[split:]
            if seg.shape[1] > 1:
                val += h * (seg.sum(axis=1) - 0.5 * (seg[:, 0] + seg[:, -1]))
            dist[:, i] = val
        dist *= model.a2_diag[:, None]
        left += dist[:, :-1]
        right += dist[:, 1:]
    if forcing is not None:
        f = np.asarray(forcing, dtype=float)
        left += f[:, :-1]
        right += f[:, 1:]
    integral = np.zeros((K, n))
    integral[:, 1:] = np.cumsum(0.5 * h * (left + right), axis=1)
    resid = y - phi0[:, None] - integral
    return float(np.max(np.abs(resid)))
