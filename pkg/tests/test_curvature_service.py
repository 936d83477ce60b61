import numpy as np
import pytest

from models.curvature import CurvatureProfile, MetricSpec
from services.curvature_service import CurvatureService, heat_eq_constant, integrate_r_kappa_minus
from services.errors import DomainError, ProfileError


@pytest.fixture
def service():
    return CurvatureService()


@pytest.fixture
def minorant(service):
    """kappa = -1 on (0, 1], kappa = 1 beyond"""
    return service.profile_from_bounds(R=1.0, L=1.0, K=1.0)


def test_eval_kappa_constant_profile(service):
    """Test a constant profile evaluates to its value everywhere"""
    profile = service.constant_profile(1.0)
    assert service.eval_kappa(profile, 0.5) == 1.0
    assert service.eval_kappa(profile, 50.0) == 1.0


def test_eval_kappa_minorant_inside(service, minorant):
    """Test the minorant is -L inside the nonconvex region"""
    assert service.eval_kappa(minorant, 0.5) == -1.0
    assert service.eval_kappa(minorant, 2.0) == 1.0


def test_eval_kappa_linear_between_knots(service):
    """Test linear interpolation at the midpoint between two knots"""
    profile = CurvatureProfile(radii=(1.0, 2.0), kappa=(-1.0, 3.0), tail_value=3.0)
    assert service.eval_kappa(profile, 1.5) == pytest.approx(1.0)


def test_eval_kappa_below_first_knot_is_constant(service):
    """Test kappa below the first knot equals kappa at the first knot"""
    profile = CurvatureProfile(radii=(1.0, 2.0), kappa=(-1.0, 3.0), tail_value=3.0)
    assert service.eval_kappa(profile, 0.01) == -1.0


def test_eval_kappa_rejects_nonpositive_radius(service):
    """Test r <= 0 is a domain error"""
    profile = service.constant_profile(1.0)
    with pytest.raises(DomainError, match="r > 0"):
        service.eval_kappa(profile, 0.0)


def test_profile_from_bounds_degenerate_convex(service):
    """Test R = 0 gives the constant profile K"""
    profile = service.profile_from_bounds(R=0.0, L=0.0, K=1.0)
    r = np.array([0.1, 1.0, 7.0])
    np.testing.assert_array_equal(service.eval_kappa(profile, r), np.ones(3))


def test_profile_from_bounds_rejects_nonpositive_tail(service):
    """Test K <= 0 violates tail positivity"""
    with pytest.raises(ProfileError, match="tail value K must be positive"):
        service.profile_from_bounds(R=1.0, L=1.0, K=0.0)


def test_profile_from_potential_linear_drift(service):
    """Test U' = Kx gives kappa identically K"""
    profile = service.profile_from_potential_1d(lambda x: 2.0 * x, -5.0, 5.0, 101, [0.5, 1.0, 2.0])
    np.testing.assert_allclose(profile.kappa, [2.0, 2.0, 2.0])
    assert profile.tail_value == pytest.approx(2.0)


def test_profile_from_potential_matches_profile_from_bounds(service):
    """Test the linear-drift estimate agrees with the constant minorant"""
    estimated = service.profile_from_potential_1d(lambda x: x, -5.0, 5.0, 51, [0.5, 1.0, 2.0])
    exact = service.profile_from_bounds(0.0, 0.0, 1.0)
    r = np.linspace(0.1, 4.0, 40)
    np.testing.assert_allclose(service.eval_kappa(estimated, r), service.eval_kappa(exact, r))


def test_profile_from_potential_quartic_double_well(service):
    """Test U' = x^3 - x at r = 0.1 gives the grid minimum of 3x^2 + 0.3x - 0.99"""
    # spacing 0.001 puts x = -0.05 on the grid
    profile = service.profile_from_potential_1d(lambda x: x**3 - x, -3.0, 3.0, 5901, [0.1, 1.0, 3.0])
    assert profile.kappa[0] == pytest.approx(-0.9975, abs=1e-9)
    assert profile.tail_value > 0


def test_profile_from_potential_no_convexity_at_r_max(service):
    """Test a nonpositive kappa at the last radius is reported"""
    with pytest.raises(ProfileError, match="no strict convexity detected at r_max; enlarge r_grid"):
        service.profile_from_potential_1d(lambda x: x**3 - x, -3.0, 3.0, 601, [0.1, 1.0])


def test_validate_profile_constant(service):
    """Test kappa = 1 is valid with a zero negative-part integral"""
    diagnostics = service.validate_profile(service.constant_profile(1.0))
    assert diagnostics.valid
    assert diagnostics.integral_r_kappa_minus == 0.0


def test_validate_profile_negative_tail(service):
    """Test a negative tail is named as the violated assumption"""
    profile = CurvatureProfile(radii=(1.0,), kappa=(1.0,), tail_value=-0.5)
    diagnostics = service.validate_profile(profile)
    assert not diagnostics.valid
    assert not diagnostics.tail_positive
    assert "tail value must be positive" in diagnostics.violations[0]


def test_validate_profile_minorant_integral(service, minorant):
    """Test int_0^1 r kappa^- dr = 1/2 for the minorant (1, 1, 1)"""
    diagnostics = service.validate_profile(minorant)
    assert diagnostics.valid
    assert diagnostics.integral_r_kappa_minus == pytest.approx(0.5)


def test_validate_profile_unordered_knots(service):
    """Test knots out of order are reported"""
    profile = CurvatureProfile(radii=(2.0, 1.0), kappa=(0.0, 1.0), tail_value=1.0)
    with pytest.raises(ProfileError, match="strictly increasing"):
        service.require_valid(profile)


def test_integral_with_zero_crossing(service):
    """Test the exact integral across a sign change of kappa"""
    profile = CurvatureProfile(radii=(1.0, 2.0), kappa=(-1.0, 1.0), tail_value=1.0)
    # on (1, 1.5) kappa = 2r - 3, so int r (3 - 2r) dr = [1.5 r^2 - 2 r^3 / 3] from 1 to 1.5
    inner = 0.5
    middle = (1.5 * 1.5**2 - 2 * 1.5**3 / 3) - (1.5 - 2.0 / 3)
    assert integrate_r_kappa_minus(profile, 2.0) == pytest.approx(inner + middle)


def test_heat_eq_profile_is_twice_K_d(service):
    """Test the heat-equation profile is the constant 2 K_d"""
    profile = service.heat_eq_profile(2, 0.0)
    assert profile.tail_value == pytest.approx(16.0)
    assert heat_eq_constant(2, 0.0) == pytest.approx(8.0)


def test_heat_eq_constant_rejects_small_d():
    """Test d < 2 is a domain error"""
    with pytest.raises(DomainError, match="d >= 2"):
        heat_eq_constant(1, 0.0)


def test_perturbed_profile_lipschitz_drop(service):
    """Test a Lipschitz perturbation lowers kappa by 2 L inside R and keeps it outside"""
    base = service.constant_profile(1.0)
    perturbed = service.perturbed_profile(base, R=2.0, L_pert=0.5)
    assert service.eval_kappa(perturbed, 1.0) == pytest.approx(0.0)
    assert service.eval_kappa(perturbed, 3.0) == pytest.approx(1.0)


def test_perturbed_profile_bounded_below_exact_minorant(service):
    """Test the bounded-perturbation profile stays below kappa0 - 4 sup|gamma| / r"""
    base = service.constant_profile(1.0)
    perturbed = service.perturbed_profile(base, R=1.0, sup_gamma=0.25)
    r = np.linspace(0.01, 1.0, 200)
    assert np.all(service.eval_kappa(perturbed, r) <= 1.0 - 1.0 / r + 1e-12)


def test_perturbed_profile_needs_exactly_one_kind(service):
    """Test passing both perturbation kinds is rejected"""
    with pytest.raises(DomainError, match="exactly one"):
        service.perturbed_profile(service.constant_profile(1.0), R=1.0, L_pert=1.0, sup_gamma=1.0)


def test_csv_round_trip(service, tmp_path):
    """Test a written profile re-parses to an identical profile"""
    profile = CurvatureProfile(radii=(0.3, 1.0 / 3.0 + 1.0, 2.5), kappa=(-0.1, 0.7, 1.9), tail_value=2.0)
    path = tmp_path / "profile.csv"
    service.write_csv(profile, path)
    assert service.read_csv(path) == profile


def test_csv_requires_header(service):
    """Test a CSV without the r,kappa header is rejected"""
    with pytest.raises(DomainError, match="r,kappa"):
        service.from_csv("1.0,2.0\ntail=1.0,alpha=1.0,norm=intrinsic\n")


def test_metric_euclidean_alpha():
    """Test alpha is the top eigenvalue of (sigma sigma^T)^-1"""
    metric = MetricSpec.from_sigma([[2.0, 0.0], [0.0, 0.5]], norm_kind="euclidean")
    assert metric.alpha == pytest.approx(4.0)
    assert MetricSpec.from_sigma([[2.0, 0.0], [0.0, 0.5]]).alpha == 1.0
