"""Diagonal operator setting: spectrum of A, symbols of A1 and A2, delay kernel.

Everything lives in coefficient space. A acts on mode k as multiplication by
-lambda_k, (-A)^gamma as lambda_k**gamma, A1 as c1 * lambda_k**mu and A2 as
c2 * lambda_k**nu. Operator norms are sups over the retained modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .report import FitReport, grew_without_bound

KERNEL_FORMS = ("zero", "constant", "linear", "sampled")
EIGEN_KINDS = ("square", "custom-list")


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class DelayKernel:
    """Distributed-delay weight a(theta) on [-r, 0].

    ``params`` holds (a0,) for ``constant``, (a0, a1) for ``linear`` with
    a(theta) = a0 + a1*theta, and equispaced samples from -r to 0 for
    ``sampled`` (evaluated by linear interpolation). ``rho`` is the declared
    Hoelder order of a sampled kernel; closed forms are Lipschitz.
    """

    form: str = "zero"
    params: tuple[float, ...] = ()
    r: float = 1.0
    rho: float | None = None

    def __post_init__(self) -> None:
        if self.form not in KERNEL_FORMS:
            raise DomainError(f"unknown kernel form {self.form!r}")
        if not self.r > 0:
            raise DomainError("kernel delay r must be positive")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        expected = {"zero": (0, 0), "constant": (1, 1), "linear": (2, 2)}
        if self.form in expected:
            lo, hi = expected[self.form]
            if not lo <= len(self.params) <= hi:
                raise DomainError(f"{self.form} kernel takes {lo} parameter(s)")
        elif len(self.params) < 2:
            raise DomainError("sampled kernel needs at least two samples")
        if not all(math.isfinite(p) for p in self.params):
            raise DomainError("kernel parameters must be finite")
        if self.rho is not None and not 0.0 < self.rho <= 1.0:
            raise DomainError("Hoelder order must lie in (0, 1]")

    @classmethod
    def zero(cls, r: float = 1.0) -> DelayKernel:
        return cls("zero", (), r)

    @classmethod
    def constant(cls, a0: float, r: float = 1.0) -> DelayKernel:
        return cls("constant", (a0,), r)

    @classmethod
    def linear(cls, a0: float, a1: float, r: float = 1.0) -> DelayKernel:
        return cls("linear", (a0, a1), r)

    @classmethod
    def sampled(cls, values: Sequence[float], r: float = 1.0, rho: float | None = None) -> DelayKernel:
        return cls("sampled", tuple(values), r, rho)

    def with_delay(self, r: float) -> DelayKernel:
        return replace(self, r=r)

    def __call__(self, theta: np.ndarray | float) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.form == "zero":
            return np.zeros_like(theta)
        if self.form == "constant":
            return np.full_like(theta, self.params[0])
        if self.form == "linear":
            return self.params[0] + self.params[1] * theta
        nodes = np.linspace(-self.r, 0.0, len(self.params))
        return np.interp(theta, nodes, self.params)

    @property
    def is_zero(self) -> bool:
        return self.form == "zero" or all(p == 0.0 for p in self.params)

    @property
    def sup_norm(self) -> float:
        if self.form == "zero":
            return 0.0
        if self.form == "constant":
            return abs(self.params[0])
        if self.form == "linear":
            a0, a1 = self.params
            return max(abs(a0), abs(a0 - a1 * self.r))
        return float(np.max(np.abs(self.params)))

    @property
    def holder(self) -> tuple[float, float] | None:
        """(order, constant) such that |a(x) - a(y)| <= constant * |x - y|**order."""
        if self.form in ("zero", "constant"):
            return (1.0, 0.0)
        if self.form == "linear":
            return (1.0, abs(self.params[1]))
        if self.rho is None:
            return None
        vals = np.asarray(self.params)
        nodes = np.linspace(-self.r, 0.0, len(vals))
        step = nodes[1] - nodes[0]
        diff = np.abs(vals[:, None] - vals[None, :])
        dist = np.abs(nodes[:, None] - nodes[None, :])
        off = dist > 0
        pair_const = float(np.max(diff[off] / dist[off] ** self.rho))
        # inside one interpolation cell the slope bound is the binding one
        slope = float(np.max(np.abs(np.diff(vals)))) / step
        return (self.rho, max(pair_const, slope * step ** (1.0 - self.rho)))


@dataclass(frozen=True)
class SpectralModel:
    """Truncated diagonal model of A, A1 = c1 (-A)^mu, A2 = c2 (-A)^nu and a(.)."""

    eigenvalues: tuple[float, ...]
    c1: float = 0.0
    mu: float = 0.5
    c2: float = 0.0
    nu: float = 0.5
    r: float = 1.0
    kernel: DelayKernel = field(default_factory=DelayKernel)
    eigen_kind: str = "custom-list"

    def __post_init__(self) -> None:
        lam = tuple(float(x) for x in self.eigenvalues)
        object.__setattr__(self, "eigenvalues", lam)
        if not lam:
            raise DomainError("at least one eigenvalue is required")
        if not all(math.isfinite(x) and x > 0 for x in lam):
            raise DomainError("eigenvalues must be finite and strictly positive")
        if any(b < a for a, b in zip(lam, lam[1:])):
            raise DomainError("eigenvalues must be nondecreasing")
        if not (0.0 < self.mu < 1.0 and 0.0 < self.nu < 1.0):
            raise DomainError("condition (H) needs 0 < mu, nu < 1")
        if not (math.isfinite(self.r) and self.r > 0):
            raise DomainError("delay r must be positive")
        if not (math.isfinite(self.c1) and math.isfinite(self.c2)):
            raise DomainError("coefficients c1, c2 must be finite")
        if self.eigen_kind not in EIGEN_KINDS:
            raise DomainError(f"unknown eigenvalue kind {self.eigen_kind!r}")
        if self.kernel.r != self.r:
            object.__setattr__(self, "kernel", self.kernel.with_delay(self.r))

    @classmethod
    def square(cls, modes: int = 64, **kwargs) -> SpectralModel:
        """Dirichlet Laplacian on (0, pi): lambda_k = k**2."""
        if modes < 1:
            raise DomainError("modes must be >= 1")
        lam = tuple(float(k * k) for k in range(1, modes + 1))
        return cls(lam, eigen_kind="square", **kwargs)

    @classmethod
    def heat(cls, modes: int = 64) -> SpectralModel:
        """Default delay heat model: dy = (Delta y + 0.5 (-Delta)^(1/2) y(t-r)
        + 0.25 (-Delta)^(1/4) int a y(t+theta) dtheta) dt, a = 1, r = 1."""
        return cls.square(
            modes, c1=0.5, mu=0.5, c2=0.25, nu=0.25, r=1.0, kernel=DelayKernel.constant(1.0)
        )

    @property
    def modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def lam(self) -> np.ndarray:
        return np.asarray(self.eigenvalues)

    @property
    def a1_diag(self) -> np.ndarray:
        return self.c1 * self.lam**self.mu

    @property
    def a2_diag(self) -> np.ndarray:
        return self.c2 * self.lam**self.nu

    @property
    def is_semigroup_only(self) -> bool:
        return self.c1 == 0.0 and (self.c2 == 0.0 or self.kernel.is_zero)

    def with_modes(self, modes: int) -> SpectralModel:
        if self.eigen_kind == "square":
            lam = tuple(float(k * k) for k in range(1, modes + 1))
        elif modes <= self.modes:
            lam = self.eigenvalues[:modes]
        else:
            raise DomainError("a custom eigenvalue list cannot be extended")
        return replace(self, eigenvalues=lam)

    def can_double(self) -> bool:
        return self.eigen_kind == "square"


def semigroup_factor(lam: float, t: float) -> float:
    """Diagonal entry e^{-lam t} of the semigroup."""
    if not lam > 0:
        raise DomainError("eigenvalue must be positive")
    if not t >= 0:
        raise DomainError("time must be nonnegative")
    return math.exp(-lam * t)


def frac_power_semigroup_norm(model: SpectralModel, gamma: float, t: float) -> float:
    """||(-A)^gamma e^{tA}|| = max_k lambda_k^gamma e^{-lambda_k t}."""
    if not 0.0 < gamma < 1.0:
        raise DomainError("gamma must lie in (0, 1)")
    if not t > 0:
        raise DomainError("t must be positive")
    lam = model.lam
    return float(np.max(lam**gamma * np.exp(-lam * t)))


def semigroup_norm_bound(gamma: float) -> float:
    """max_{x>0} x^gamma e^{-x} = (gamma/e)^gamma, i.e. M_gamma for the diagonal case."""
    return (gamma / math.e) ** gamma


def _pairs_array(pairs: Iterable[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise DomainError("empty lattice")
    s, t = arr[:, 0], arr[:, 1]
    if np.any(s <= 0) or np.any(t <= s):
        raise DomainError("lattice pairs must satisfy 0 < s < t")
    return s, t


def _semigroup_gap(lam: np.ndarray, gamma: float, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    # sup_k lambda^gamma |e^{-lambda t} - e^{-lambda s}|, written to avoid cancellation
    lam = lam[:, None]
    gap = -np.exp(-lam * s) * np.expm1(-lam * (t - s))
    return np.max(lam**gamma * gap, axis=0)


def _constant_fit(
    name: str,
    params: dict[str, float],
    lhs_of_model,
    model: SpectralModel,
    rhs: np.ndarray,
    s: np.ndarray,
    t: np.ndarray,
) -> FitReport:
    ratio = lhs_of_model(model) / rhs
    idx = int(np.argmax(ratio))
    value = float(ratio[idx])
    trunc = math.nan
    diverged = not math.isfinite(value)
    if model.can_double():
        doubled = float(np.max(lhs_of_model(model.with_modes(2 * model.modes)) / rhs))
        trunc = doubled / value if value > 0 else (1.0 if doubled == 0 else math.inf)
        diverged = diverged or grew_without_bound(value, doubled)
        hi = max(value, doubled)
    else:
        hi = value
    return FitReport(
        name=name,
        params=params,
        value=value,
        interval=(value, hi),
        argmax=(float(s[idx]), float(t[idx])),
        truncation_ratio=trunc,
        diverged=diverged,
    )


def semigroup_difference_constant(
    model: SpectralModel,
    gamma: float,
    beta: float,
    pairs: Iterable[tuple[float, float]],
) -> tuple[FitReport, FitReport]:
    """Smallest constants M, C with, on every lattice pair 0 < s < t,

        ||(-A)^g (e^{tA} - e^{sA})|| <= M (s^-g - t^-g)
                                     <= C (t - s)^beta s^(-beta-g).

    Returns the two fits (first the s^-g - t^-g form, then the (t-s)^beta form).
    """
    if not 0.0 < gamma < 1.0:
        raise DomainError("gamma must lie in (0, 1)")
    if not beta > 0:
        raise DomainError("beta must be positive")
    s, t = _pairs_array(pairs)

    def lhs(m: SpectralModel) -> np.ndarray:
        return _semigroup_gap(m.lam, gamma, s, t)

    params = {"gamma": gamma, "beta": beta}
    lemma = _constant_fit("semigroup_power_gap", params, lhs, model, s**-gamma - t**-gamma, s, t)
    corollary = _constant_fit(
        "semigroup_holder_gap", params, lhs, model, (t - s) ** beta * s ** (-beta - gamma), s, t
    )
    return lemma, corollary


def semigroup_holder_constant(
    model: SpectralModel, alpha: float, pairs: Iterable[tuple[float, float]]
) -> FitReport:
    """Smallest C with ||e^{tA} - e^{sA}|| <= C (t - s)^alpha s^-alpha; the
    diagonal theory gives C <= 1/alpha."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError("alpha must lie in (0, 1]")
    s, t = _pairs_array(pairs)

    def lhs(m: SpectralModel) -> np.ndarray:
        lam = m.lam[:, None]
        return np.max(-np.exp(-lam * s) * np.expm1(-lam * (t - s)), axis=0)

    rep = _constant_fit(
        "semigroup_log_gap", {"alpha": alpha}, lhs, model, ((t - s) / s) ** alpha, s, t
    )
    return replace(rep, extras={"reference": 1.0 / alpha})
