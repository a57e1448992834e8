"""Stochastic convolution W_G(t) = int_0^t G(t-s) B dW(s) for a truncated Q-Wiener process.

Q and B are diagonal in the eigenbasis of A, so mode j of W_G is the scalar
Ito integral b_j sqrt(q_j) int_0^t g_j(t-s) dw_j(s). Second moments follow
from the Ito isometry and are computed by quadrature; Monte Carlo paths use
the left-point sum W_j(t_i) = sum_{l<i} g_j(t_i - t_l) b_j dW_l.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.fft
from scipy.special import zeta

from .fundamental import FundamentalSolution, cell_integrals
from .spectral import DomainError

_SEED_MASK = (1 << 64) - 1
_EXACT_STREAM = 1 << 63


class CovarianceError(ArithmeticError):
    """Covariance matrix is not positive semidefinite within tolerance."""


@dataclass(frozen=True)
class NoiseModel:
    """Diagonal Q (eigenvalues q_j) and diagonal B (entries b_j), J modes."""

    q_eigenvalues: tuple[float, ...]
    b_diagonal: tuple[float, ...]
    q_tail: float = 0.0

    def __post_init__(self) -> None:
        q = tuple(float(x) for x in self.q_eigenvalues)
        b = tuple(float(x) for x in self.b_diagonal)
        object.__setattr__(self, "q_eigenvalues", q)
        object.__setattr__(self, "b_diagonal", b)
        if not q:
            raise DomainError("noise needs at least one mode")
        if len(b) != len(q):
            raise DomainError("q_eigenvalues and b_diagonal must have equal length")
        if not all(math.isfinite(x) and x > 0 for x in q):
            raise DomainError("Q eigenvalues must be positive and finite")
        if not all(math.isfinite(x) for x in b):
            raise DomainError("B must be bounded")

    @classmethod
    def power_law(cls, modes: int, decay: float = 2.0, b: float | Sequence[float] = 1.0) -> NoiseModel:
        """q_j = j^-decay / zeta(decay), so the untruncated trace is 1."""
        if not decay > 1.0:
            raise DomainError("decay must exceed 1 for a trace-class Q")
        if modes < 1:
            raise DomainError("modes must be >= 1")
        j = np.arange(1, modes + 1, dtype=float)
        q = j**-decay / zeta(decay)
        bvals = np.broadcast_to(np.asarray(b, dtype=float), q.shape)
        return cls(tuple(q), tuple(bvals), q_tail=max(0.0, 1.0 - float(q.sum())))

    @property
    def modes(self) -> int:
        return len(self.q_eigenvalues)

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.q_eigenvalues)

    @property
    def b(self) -> np.ndarray:
        return np.asarray(self.b_diagonal)

    @property
    def trace(self) -> float:
        return float(self.q.sum())

    @property
    def hilbert_schmidt_sq(self) -> float:
        """||B||^2 in L2(K_Q, H) = sum_j q_j b_j^2."""
        return float(np.sum(self.q * self.b**2))

    @property
    def b_sup(self) -> float:
        return float(np.max(np.abs(self.b)))

    def scaled(self, factor: float) -> NoiseModel:
        return NoiseModel(self.q_eigenvalues, tuple(factor * self.b), self.q_tail)


def _check_modes(fs: FundamentalSolution, noise: NoiseModel) -> None:
    if noise.modes > fs.model.modes:
        raise DomainError(f"noise has {noise.modes} modes but the model retains {fs.model.modes}")


# -- random streams ---------------------------------------------------------------


def normal_stream(seed: int, path: int, mode: int, count: int, exact: bool = False) -> np.ndarray:
    """``count`` standard normals from the counter-based stream (seed, path, mode).

    Philox is keyed by (seed, mode) and the path index occupies the third
    counter word, so any block can be regenerated independently of others.
    """
    if not 0 <= seed <= _SEED_MASK:
        raise DomainError("seed must be an unsigned 64-bit integer")
    key = [seed, mode | (_EXACT_STREAM if exact else 0)]
    gen = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, path, 0]))
    return gen.standard_normal(count)


def normal_block(seed: int, paths: Iterable[int], mode: int, count: int) -> np.ndarray:
    return np.stack([normal_stream(seed, p, mode, count) for p in paths])


# -- path simulation ---------------------------------------------------------------


def _causal_convolve(kernel: np.ndarray, signal: np.ndarray) -> np.ndarray:
    """out[..., i] = sum_{l <= i} kernel[i - l] signal[..., l]."""
    n = signal.shape[-1]
    size = scipy.fft.next_fast_len(2 * n, real=True)
    fk = scipy.fft.rfft(kernel, size)
    fs = scipy.fft.rfft(signal, size, axis=-1)
    return scipy.fft.irfft(fs * fk, size, axis=-1)[..., :n]


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Monte Carlo paths of W_G on the fundamental-solution grid.

    Mode blocks of shape (P, n) are generated on demand from the counter-based
    streams; every reduction over modes runs in mode order, so results do not
    depend on ``workers``.
    """

    fs: FundamentalSolution
    noise: NoiseModel
    seed: int
    paths: int
    workers: int = 1

    @property
    def grid(self):
        return self.fs.grid

    def increments(self, mode: int) -> np.ndarray:
        """Brownian increments dW_l ~ N(0, q_j h), shape (P, n - 1)."""
        n = self.grid.size
        z = normal_block(self.seed, range(self.paths), mode, n - 1)
        return math.sqrt(self.noise.q[mode] * self.grid.h) * z

    def mode_paths(self, mode: int) -> np.ndarray:
        """W_j at every node, shape (P, n)."""
        n = self.grid.size
        b = self.noise.b[mode]
        out = np.zeros((self.paths, n))
        if b == 0.0 or n == 1:
            return out
        kernel = self.fs.values[mode, 1:]  # kernel[d] = g(t_{d+1})
        out[:, 1:] = b * _causal_convolve(kernel, self.increments(mode))
        return out

    def iter_modes(self) -> Iterator[tuple[int, np.ndarray]]:
        modes = range(self.noise.modes)
        if self.workers <= 1:
            for j in modes:
                yield j, self.mode_paths(j)
            return
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            for start in range(0, self.noise.modes, self.workers):
                batch = list(modes[start : start + self.workers])
                for j, block in zip(batch, pool.map(self.mode_paths, batch)):
                    yield j, block

    @property
    def values(self) -> np.ndarray:
        """All paths, shape (P, J, n); materialises the whole ensemble."""
        out = np.empty((self.paths, self.noise.modes, self.grid.size))
        for j, block in self.iter_modes():
            out[:, j, :] = block
        return out

    def _weights(self, gamma: float) -> np.ndarray:
        if gamma < 0:
            raise DomainError("gamma must be nonnegative")
        return self.fs.model.lam[: self.noise.modes] ** (2 * gamma)

    def increment_sq_norms(self, index_pairs: Sequence[tuple[int, int]], gamma: float = 0.0) -> np.ndarray:
        """||(-A)^gamma (W(t) - W(s))||^2 per path for node-index pairs, shape (P, len)."""
        pairs = np.asarray(index_pairs, dtype=int).reshape(-1, 2)
        w = self._weights(gamma)
        acc = np.zeros((self.paths, len(pairs)))
        for j, block in self.iter_modes():
            acc += w[j] * (block[:, pairs[:, 1]] - block[:, pairs[:, 0]]) ** 2
        return acc

    def sq_norms(self, gamma: float = 0.0) -> np.ndarray:
        """||(-A)^gamma W(t_i)||^2 per path and node, shape (P, n)."""
        w = self._weights(gamma)
        acc = np.zeros((self.paths, self.grid.size))
        for j, block in self.iter_modes():
            acc += w[j] * block**2
        return acc

    def level_increments(self, levels: Sequence[int], gamma: float = 0.0) -> dict[int, np.ndarray]:
        """Norms of the increments over the 2^l dyadic cells of [0, T] for each level l,
        as arrays of shape (P, 2^l)."""
        cells = self.grid.size - 1
        steps = {}
        for lev in levels:
            if cells % (2**lev):
                raise DomainError(f"grid with {cells} cells does not support dyadic level {lev}")
            steps[lev] = cells // 2**lev
        w = self._weights(gamma)
        acc = {lev: np.zeros((self.paths, 2**lev)) for lev in levels}
        for j, block in self.iter_modes():
            for lev, step in steps.items():
                coarse = block[:, ::step]
                acc[lev] += w[j] * np.diff(coarse, axis=1) ** 2
        return {lev: np.sqrt(a) for lev, a in acc.items()}


def simulate_paths(
    fs: FundamentalSolution, noise: NoiseModel, seed: int, paths: int, workers: int = 1
) -> PathEnsemble:
    """Monte Carlo ensemble of the stochastic convolution (left-point Ito sums)."""
    _check_modes(fs, noise)
    if paths < 1:
        raise DomainError("need at least one path")
    if not 0 <= seed <= _SEED_MASK:
        raise DomainError("seed must be an unsigned 64-bit integer")
    return PathEnsemble(fs, noise, int(seed), int(paths), max(1, int(workers)))


# -- second moments -----------------------------------------------------------------


def _integral_to(values: np.ndarray, h: float, count: int) -> np.ndarray:
    """int over the first ``count`` cells of each row."""
    if count <= 0:
        return np.zeros(values.shape[:-1])
    return cell_integrals(values[..., : count + 1], h).sum(axis=-1)


def mode_second_moments(fs: FundamentalSolution, noise: NoiseModel, gamma: float, s: float, t: float) -> np.ndarray:
    """Per-mode contributions q_j b_j^2 lambda_j^(2 gamma) (I1_j + I2_j)."""
    _check_modes(fs, noise)
    if gamma < 0:
        raise DomainError("gamma must be nonnegative")
    i, k = fs.grid.index_of(s), fs.grid.index_of(t)
    if k < i:
        raise DomainError("need s <= t")
    J = noise.modes
    h = fs.grid.h
    g = fs.values[:J]
    d = k - i
    # I1 = int_0^{t-s} g(v)^2 dv, I2 = int_0^s (g(v + t - s) - g(v))^2 dv
    first = _integral_to(g**2, h, d)
    if i > 0 and d > 0:
        second = _integral_to((g[:, d : d + i + 1] - g[:, : i + 1]) ** 2, h, i)
    else:
        second = np.zeros(J)
    scale = noise.q * noise.b**2 * fs.model.lam[:J] ** (2 * gamma)
    return scale * (first + second)


def second_moment(fs: FundamentalSolution, noise: NoiseModel, gamma: float, s: float, t: float) -> float:
    """E||(-A)^gamma (W_G(t) - W_G(s))||^2 from the Ito isometry (gamma = 0: H-norm)."""
    return float(np.sum(mode_second_moments(fs, noise, gamma, s, t)))


@dataclass(frozen=True)
class MomentCurve:
    """Deterministic E||(-A)^gamma (W_G(t) - W_G(s))||^2 over an increment lattice."""

    pairs: tuple[tuple[float, float], ...]
    gamma: float
    values: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        p = np.asarray(self.pairs)
        return p[:, 1] - p[:, 0]


def moment_curve(
    fs: FundamentalSolution, noise: NoiseModel, gamma: float, pairs: Iterable[tuple[float, float]]
) -> MomentCurve:
    pairs = tuple((float(s), float(t)) for s, t in pairs)
    vals = np.array([second_moment(fs, noise, gamma, s, t) for s, t in pairs])
    return MomentCurve(pairs, float(gamma), vals)


def increment_lattice(fs: FundamentalSolution, s: float, count: int = 16,
                      window: tuple[float, float] | None = None) -> list[tuple[float, float]]:
    """Pairs (s, s + delta) with delta log-spaced over grid multiples in ``window``
    (default [4h, r/4])."""
    grid = fs.grid
    lo, hi = window if window is not None else (4 * grid.h, grid.r / 4)
    steps = np.unique(np.rint(np.geomspace(lo / grid.h, hi / grid.h, count)).astype(int))
    i = grid.index_of(s)
    steps = steps[(steps >= 1) & (i + steps < grid.size)]
    return [(float(grid.nodes[i]), float(grid.nodes[i + d])) for d in steps]


# -- exact Gaussian sampling ------------------------------------------------------------


def mode_covariance(fs: FundamentalSolution, noise: NoiseModel, mode: int, indices: Sequence[int]) -> np.ndarray:
    """Cov(W_j(t_a), W_j(t_b)) = q_j b_j^2 int_0^{min} g_j(t_a - u) g_j(t_b - u) du."""
    g = fs.values[mode]
    h = fs.grid.h
    idx = list(indices)
    cov = np.zeros((len(idx), len(idx)))
    for a, ia in enumerate(idx):
        for c in range(a, len(idx)):
            ib = idx[c]
            lo, hi = min(ia, ib), max(ia, ib)
            d = hi - lo
            val = _integral_to(g[d : d + lo + 1] * g[: lo + 1], h, lo) if lo > 0 else 0.0
            cov[a, c] = cov[c, a] = val
    return noise.q[mode] * noise.b[mode] ** 2 * cov


def _psd_factor(cov: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    w, v = np.linalg.eigh(cov)
    scale = max(float(np.max(np.abs(w))), 1e-300)
    if np.min(w) < -tol * scale:
        raise CovarianceError(f"covariance has eigenvalue {np.min(w):.3e} (scale {scale:.3e})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def exact_gaussian_sample(
    fs: FundamentalSolution,
    noise: NoiseModel,
    times: Sequence[float],
    seed: int,
    size: int | None = None,
) -> np.ndarray:
    """Sample (W_j(t_1), ..., W_j(t_n)) exactly from its Gaussian law, every mode j.

    Returns shape (J, n), or (size, J, n) when ``size`` is given. Draws come from
    a stream family disjoint from the Monte Carlo one.
    """
    _check_modes(fs, noise)
    if len(times) > 128:
        raise DomainError("exact sampling is limited to 128 time points")
    idx = [fs.grid.index_of(t) for t in times]
    count = 1 if size is None else int(size)
    out = np.empty((count, noise.modes, len(idx)))
    for j in range(noise.modes):
        factor = _psd_factor(mode_covariance(fs, noise, j, idx))
        z = np.stack([normal_stream(seed, p, j, len(idx), exact=True) for p in range(count)])
        out[:, j, :] = z @ factor.T
    return out[0] if size is None else out
