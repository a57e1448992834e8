from __future__ import annotations

import numpy as np
import pytest

from delayconv.fundamental import StepGrid, solve_all
from delayconv.regularity import (
    ParameterMatrix,
    calibrate_holder_estimator,
    dyadic_levels,
    estimate_path_holder,
    fit_moment_exponent,
    holder_from_increments,
    holder_theory,
    verify_dashboard,
)
from delayconv.spectral import DelayKernel, DomainError, SpectralModel
from delayconv.stochastic import NoiseModel, increment_lattice, moment_curve, simulate_paths


def window(fs):
    return (4 * fs.grid.h, fs.grid.r / 4)


def test_moment_slope_single_mode_ou():
    fs = solve_all(SpectralModel((1.0,)), StepGrid(1.0, 512, 2))
    noise = NoiseModel((1.0,), (1.0,))
    curve = moment_curve(fs, noise, 0.0, increment_lattice(fs, 1.0, window=(4 * fs.grid.h, 0.05)))
    rep = fit_moment_exponent(curve, (4 * fs.grid.h, 0.05))
    assert rep.value == pytest.approx(1.0, abs=0.05)
    assert rep.interval[0] <= rep.value <= rep.interval[1]


def test_moment_slope_gamma_quarter_rough_noise(heat_fs):
    noise = NoiseModel.power_law(64, 1.1)
    curve = moment_curve(heat_fs, noise, 0.25, increment_lattice(heat_fs, 1.5, window=window(heat_fs)))
    assert fit_moment_exponent(curve, window(heat_fs)).value == pytest.approx(0.5, abs=0.1)


def test_moment_slope_invariant_under_b_scaling(heat_fs, default_noise):
    pairs = increment_lattice(heat_fs, 1.5, window=window(heat_fs))
    a = fit_moment_exponent(moment_curve(heat_fs, default_noise, 0.0, pairs), window(heat_fs))
    b = fit_moment_exponent(moment_curve(heat_fs, default_noise.scaled(7.0), 0.0, pairs), window(heat_fs))
    assert b.value == pytest.approx(a.value, abs=1e-12)


def test_moment_fit_degenerate_and_errors(heat_fs):
    zero = NoiseModel.power_law(64, b=0.0)
    pairs = increment_lattice(heat_fs, 1.5, window=window(heat_fs))
    rep = fit_moment_exponent(moment_curve(heat_fs, zero, 0.0, pairs), window(heat_fs))
    assert rep.diverged and "degenerate" in rep.tags
    with pytest.raises(DomainError):
        fit_moment_exponent(moment_curve(heat_fs, zero, 0.0, pairs[:5]))
    with pytest.raises(DomainError):
        fit_moment_exponent(moment_curve(heat_fs, zero, 0.0, pairs), (0.1, 0.05))


def test_holder_levels_and_degenerate(small_fs):
    assert dyadic_levels(StepGrid(1.0, 512, 2), 7) == list(range(4, 11))
    with pytest.raises(DomainError):
        dyadic_levels(StepGrid(1.0, 512, 2), 3)
    with pytest.raises(DomainError):
        dyadic_levels(StepGrid(1.0, 6, 1), 4)
    frozen = simulate_paths(solve_all(small_fs.model, StepGrid(1.0, 64, 2)), NoiseModel.power_law(8, b=0.0), 0, 4)
    rep = estimate_path_holder(frozen, 0.0, 5)
    assert rep.diverged and "degenerate" in rep.tags


def test_holder_from_increments_recovers_power_law():
    levels = range(3, 10)
    norms = {lev: np.full((5, 2**lev), 2.0 ** (-0.3 * lev)) for lev in levels}
    rep = holder_from_increments(norms)
    assert rep.value == pytest.approx(0.3)
    with pytest.raises(DomainError):
        holder_from_increments({1: norms[3], 2: norms[4]})


def test_ou_calibration_approaches_half_from_below():
    ests = [calibrate_holder_estimator(StepGrid(1.0, m, 2), 7, paths=400).estimate for m in (256, 1024, 4096)]
    assert all(e < 0.5 for e in ests)
    assert ests[0] < ests[1] < ests[2]


def test_holder_theory_branches():
    assert holder_theory(0.25, 1.0) == 0.25
    assert holder_theory(0.0, 1.0) == 0.5
    assert holder_theory(0.0, 0.3) == 0.3
    assert holder_theory(0.0, None) == 0.5


def test_dashboard_empty_matrix(heat):
    bundle = verify_dashboard(heat, StepGrid(1.0, 64, 3), NoiseModel.power_law(64),
                              ParameterMatrix((), (), (), (), ()))
    assert bundle.cells == [] and bundle.passed


def test_dashboard_semigroup_only_passes():
    model = SpectralModel.square(64)
    bundle = verify_dashboard(model, StepGrid(1.0, 512, 2), NoiseModel.power_law(64),
                              ParameterMatrix(ns=(0, 1)), seed=1, paths=100)
    assert bundle.passed, bundle.summary()


@pytest.mark.slow
def test_dashboard_heat_model_passes_and_negative_control_fails(heat):
    grid = StepGrid(1.0, 512, 3)
    noise = NoiseModel.power_law(64)
    matrix = ParameterMatrix(gammas=(0.1, 0.5, 0.75))
    bundle = verify_dashboard(heat, grid, noise, matrix, seed=3)
    assert bundle.passed, bundle.summary()
    tagged = [c for c in bundle.cells if not c.in_range]
    assert tagged and all("outside-theorem-range" in c.report.tags for c in tagged)
    holder = [c for c in bundle.cells if c.check == "path_holder"]
    assert all(c.report.value <= c.report.extras["cap"] for c in holder)
    bad = verify_dashboard(heat, grid, noise, ParameterMatrix(noise_gammas=()), seed=3, bound_scale=0.5)
    assert not bad.passed
    assert {c.check for c in bad.failures} >= {"semigroup_power", "prop43_bound"}


def test_dashboard_sampled_kernel_rho_recorded():
    kern = DelayKernel.sampled(np.sqrt(np.linspace(0, 1, 17)), rho=0.5)
    model = SpectralModel.square(16, c1=0.2, mu=0.5, c2=0.2, nu=0.5, kernel=kern)
    bundle = verify_dashboard(model, StepGrid(1.0, 128, 1), NoiseModel.power_law(16),
                              ParameterMatrix(ns=(0,), gammas=(0.5,), betas=(0.2,), kappas=(0.25, 0.75),
                                              noise_gammas=()))
    lem = {c.report.params["kappa"]: c for c in bundle.cells if c.check == "lem31"}
    assert lem[0.25].in_range and not lem[0.75].in_range
    assert bundle.passed, bundle.summary()
