import math

import numpy as np
import pytest

from models.simulation import CouplingConfig, DecaySeries
from services.bounds_service import BoundsService
from services.curvature_service import CurvatureService
from services.distance_builder import DistanceBuilder
from services.errors import DomainError, FitError
from services.model_registry import ModelRegistry
from services.montecarlo_service import MonteCarloService


def identity(r):
    return r


@pytest.fixture
def service():
    return MonteCarloService(workers=2, chunk_size=64)


@pytest.fixture(scope="module")
def ou():
    return ModelRegistry().build("ou")


def series(times, mean, stderr=None) -> DecaySeries:
    mean = np.asarray(mean, dtype=float)
    return DecaySeries(
        times=np.asarray(times, dtype=float),
        mean=mean,
        stderr=np.zeros_like(mean) if stderr is None else np.asarray(stderr, dtype=float),
        n_paths=1000,
    )


def small_coupling(**overrides) -> CouplingConfig:
    settings = {"kind": "reflection", "T": 1.0, "h": 1e-2, "save_times": (0.0, 0.5, 1.0), "n_paths": 150, "seed": 9}
    settings.update(overrides)
    return CouplingConfig(**settings)


# --- estimate_mean_distance ---

def test_equal_start_gives_zero_series_with_note(service, ou):
    """Test X0 = Y0 gives a zero series and the coupled-paths note"""
    result = service.estimate_mean_distance(ou.model, small_coupling(n_paths=100), [identity], [1.0], ou.x0, ou.x0)
    assert np.all(result.mean == 0.0)
    assert np.all(result.stderr == 0.0)
    assert result.note == "all paths coupled before the first save time"


def test_too_few_paths(service, ou):
    """Test fewer than 100 paths is a domain error"""
    with pytest.raises(DomainError, match="at least 100"):
        service.estimate_mean_distance(ou.model, small_coupling(n_paths=50), [identity], [1.0], ou.x0, ou.y0)


def test_estimate_independent_of_chunking(ou):
    """Test chunk size and worker count leave the estimate bit-identical"""
    coupling = small_coupling()
    one = MonteCarloService(workers=1, chunk_size=1000).estimate_mean_distance(ou.model, coupling, [identity], [1.0], ou.x0, ou.y0)
    many = MonteCarloService(workers=3, chunk_size=37).estimate_mean_distance(ou.model, coupling, [identity], [1.0], ou.x0, ou.y0)
    np.testing.assert_array_equal(one.mean, many.mean)
    np.testing.assert_array_equal(one.stderr, many.stderr)


async def test_estimate_async_matches_sync(ou):
    """Test the coroutine and the synchronous wrapper agree"""
    coupling = small_coupling()
    service = MonteCarloService(workers=2, chunk_size=50)
    awaited = await service.estimate_mean_distance_async(ou.model, coupling, [identity], [1.0], ou.x0, ou.y0)
    reference = MonteCarloService(workers=1, chunk_size=150)
    expected = await reference.estimate_mean_distance_async(ou.model, coupling, [identity], [1.0], ou.x0, ou.y0)
    np.testing.assert_array_equal(awaited.mean, expected.mean)
    assert awaited.config_echo["n_paths"] == 150
    assert awaited.mean[0] == pytest.approx(1.0)


def test_service_rejects_zero_workers():
    """Test workers below 1 is rejected"""
    with pytest.raises(DomainError, match="at least 1"):
        MonteCarloService(workers=0)


# --- fit_decay_rate ---

def test_fit_exact_exponential(service):
    """Test 5 e^{-2t} gives rate 2 and r^2 = 1"""
    t = np.linspace(0.0, 3.0, 7)
    fit = service.fit_decay_rate(series(t, 5.0 * np.exp(-2.0 * t)))
    assert fit.rate == pytest.approx(2.0)
    assert fit.intercept == pytest.approx(math.log(5.0))
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.window == (0, 6)


def test_fit_needs_three_points(service):
    """Test fewer than 3 usable points is a fit failure"""
    with pytest.raises(FitError, match="at least 3 usable points"):
        service.fit_decay_rate(series([0.0, 1.0, 2.0, 3.0], [1.0, 0.5, 0.0, 0.0]))


def test_fit_ignores_points_below_noise(service):
    """Test points with mean under 5 stderr are left out"""
    t = np.arange(5.0)
    mean = np.exp(-t)
    stderr = np.array([0.0, 0.0, 0.0, 0.1, 0.0])
    fit = service.fit_decay_rate(series(t, mean, stderr))
    assert fit.window == (0, 2)
    assert fit.n_points == 3
    assert fit.rate == pytest.approx(1.0)


# --- check_contraction ---

def test_contraction_zero_series_passes(service):
    """Test a zero series passes"""
    report = service.check_contraction(series([0.0, 1.0, 2.0], [0.0, 0.0, 0.0]), 0.25)
    assert report.passed


def test_contraction_exact_rate_passes(service):
    """Test e^{-ct} passes against c with zero slack"""
    t = np.linspace(0.0, 10.0, 21)
    report = service.check_contraction(series(t, np.exp(-0.25 * t)), 0.25)
    assert report.passed


def test_contraction_slower_decay_fails(service):
    """Test e^{-t/10} fails against c = 1/4 with the worst pair reported"""
    t = np.linspace(0.0, 10.0, 11)
    report = service.check_contraction(series(t, np.exp(-0.1 * t)), 0.25)
    assert not report.passed
    assert report.worst_violation > 0
    assert report.worst_pair == (0, 10)


def test_contraction_within_stderr_passes(service):
    """Test an increase smaller than the doubled standard errors is tolerated"""
    report = service.check_contraction(series([0.0, 1.0], [1.0, 0.8], [0.05, 0.05]), 0.25)
    # e^{0.25} 0.8 = 1.027 against 1 + 2 (0.05 + 0.064)
    assert report.passed


def test_contraction_unscaled_stderr_is_stricter(service):
    """Test the reported standard errors alone do not cover an increase the scaled ones do"""
    # e^{0.25} 0.8 = 1.0272; slack 2 (0.0065 + 0.0065) = 0.026 unscaled, 2 (0.0065 + 0.0083) = 0.0297 scaled
    data = series([0.0, 1.0], [1.0, 0.8], [0.0065, 0.0065])
    assert service.check_contraction(data, 0.25).passed
    assert not service.check_contraction(data, 0.25, scale_stderr=False).passed


def test_contraction_rejects_nonpositive_c(service):
    """Test c <= 0 is a domain error"""
    with pytest.raises(DomainError, match="c must be positive"):
        service.check_contraction(series([0.0, 1.0], [1.0, 0.5]), 0.0)


# --- check_floor ---

def test_floor_below_threshold(service):
    """Test a final value under m(delta)/c + 3 stderr passes"""
    report = service.check_floor(series([0.0, 1.0], [1.0, 0.002], [0.0, 1e-4]), 7.5e-4, 0.25)
    assert report.passed
    assert report.threshold == pytest.approx(3e-3 + 3e-4)


def test_floor_above_threshold(service):
    """Test a final value over the threshold fails"""
    assert not service.check_floor(series([0.0, 1.0], [1.0, 0.01], [0.0, 1e-4]), 7.5e-4, 0.25).passed


# --- ergodic_average_stats ---

def test_ergodic_constant_observable(service, ou):
    """Test a constant g has zero variance and stays within the bounds"""
    report = service.ergodic_average_stats(
        ou.model,
        lambda x: np.ones(x.shape[0]),
        1.0,
        20,
        small_coupling(),
        0.25,
        0.0,
        [identity],
        [1.0],
        ou.x0,
    )
    assert report.variance_estimate == 0.0
    assert report.bias_estimate == 0.0
    assert report.burn_in == pytest.approx(40.0)
    assert not report.burn_in_warning
    assert report.within_bounds


def test_ergodic_short_burn_in_flagged(service, ou):
    """Test a burn-in shorter than 5/c raises the warning flag"""
    report = service.ergodic_average_stats(
        ou.model, lambda x: x[:, 0], 1.0, 20, small_coupling(), 0.25, 1.0, [identity], [1.0], ou.x0, burn_in=1.0
    )
    assert report.burn_in_warning


def test_ergodic_ou_variance_below_bound(service, ou):
    """Test the time average of g(x) = x for OU stays within the variance bound"""
    builder = DistanceBuilder()
    df = builder.build_distance(CurvatureService().constant_profile(1.0))
    lip_g = BoundsService(builder).lipschitz_seminorm_1d(lambda x: x, df, np.linspace(-4.0, 4.0, 81))
    report = service.ergodic_average_stats(
        ou.model, lambda x: x[:, 0], 100.0, 200, small_coupling(), df.c, lip_g, [df], [1.0], ou.x0
    )
    assert report.variance_estimate <= report.variance_bound
    assert report.within_bounds


# --- acceptance run ---

@pytest.mark.slow
def test_ou_reflection_acceptance(ou):
    """Test the OU reflection ensemble contracts at c = 1/4 with fitted rate between 1/4 and 1/2"""
    builder = DistanceBuilder()
    df = builder.build_distance(CurvatureService().constant_profile(1.0))
    coupling = CouplingConfig(kind="reflection", T=10.0, h=1e-3, n_paths=10000, seed=2024)
    service = MonteCarloService()
    result = service.estimate_mean_distance(ou.model, coupling, [df], [1.0], ou.x0, ou.y0)
    assert service.check_contraction(result, df.c).passed
    fit = service.fit_decay_rate(result)
    assert 0.25 - 2 * fit.rate_stderr <= fit.rate <= 0.5 + 2 * fit.rate_stderr


@pytest.mark.slow
def test_double_well_reflection_fit_above_certified_rate():
    """Test the double-well L = 1, R = 4 decays at least at its quadrature rate"""
    double_well = ModelRegistry().build("double-well")
    df = DistanceBuilder().build_distance(double_well.profiles[0])
    coupling = CouplingConfig(kind="reflection", T=10.0, h=1e-3, n_paths=10000, seed=7)
    service = MonteCarloService()
    result = service.estimate_mean_distance(double_well.model, coupling, [df], [1.0], double_well.x0, double_well.y0)
    fit = service.fit_decay_rate(result)
    assert fit.rate >= df.c - 2 * fit.rate_stderr


@pytest.mark.slow
def test_product_ou_componentwise_acceptance():
    """Test product-ou under componentwise coupling contracts at min c_i and settles under the m(delta)/c floor"""
    product = ModelRegistry().build("product-ou")
    builder = DistanceBuilder()
    distances = [builder.build_distance(profile) for profile in product.profiles]
    rates = [df.c for df in distances]
    c = min(rates)
    assert c == pytest.approx(0.25, rel=1e-6)
    coupling = CouplingConfig(kind="componentwise", delta=1e-3, T=10.0, h=1e-3, n_paths=10000, seed=11)
    service = MonteCarloService()
    result = service.estimate_mean_distance(product.model, coupling, distances, product.weights, product.x0, product.y0)
    assert service.check_contraction(result, c).passed
    penalty = BoundsService().componentwise_penalty(product.profiles, rates, coupling.delta)
    assert service.check_floor(result, penalty.m_delta, c).passed


@pytest.mark.slow
def test_mean_field_componentwise_against_interacting_rate():
    """Test a weak mean-field interaction contracts at the interacting rate c_bar"""
    builder = DistanceBuilder()
    base = builder.build_distance(CurvatureService().constant_profile(1.0))
    strength = 0.1 * base.phi_R0 * base.c / 4.0
    model = ModelRegistry().build("mean-field", n=4, coupling=strength)
    interacting = BoundsService().interacting_rate(base.c, base.phi_R0, model.M, model.interaction)
    assert interacting.certified
    assert interacting.rate == pytest.approx(base.c - 4.0 * strength / base.phi_R0)

    coupling = CouplingConfig(kind="componentwise", delta=1e-3, T=10.0, h=1e-3, n_paths=10000, seed=13)
    service = MonteCarloService()
    result = service.estimate_mean_distance(model.model, coupling, [base] * 4, model.weights, model.x0, model.y0)
    assert service.check_contraction(result, interacting.rate).passed
