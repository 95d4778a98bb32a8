import math

import numpy as np
import pytest

from ratchet.models.profile import ProfileWeights, ShapeKind
from ratchet.schemas.params import Params
from ratchet.services.analytic_profile import (
    ProfileDomainError,
    classify_shape,
    click_exponent,
    equilibrium_masses,
    exponent_coefficient,
    finite_exponent_coefficient,
    fixed_point_residual,
    g_map,
    point_mass_constant,
    profile_moments,
    profile_recursion,
    systeq_residual,
    tail_constant,
    tail_iterate,
    tail_sequence,
    y0_rates,
    z0_rates,
)

RHOS = [0.1, 0.3, 0.5, 2.0 / 3.0, 0.8, 0.9]


class TestProfileRecursion:
    def test_half_first_weights(self):
        p = profile_recursion(0.5, 2).weights
        assert p == pytest.approx([0.5, 0.309017, 0.124363], abs=1e-5)

    def test_plateau_weights(self):
        p = profile_recursion(2.0 / 3.0, 1).weights
        assert p == pytest.approx([1.0 / 3.0, 1.0 / 3.0], abs=1e-12)

    def test_vanishing_mutation(self):
        p = profile_recursion(1e-12, 3).weights
        assert p == pytest.approx([1.0, 0.0, 0.0, 0.0], abs=1e-9)

    @pytest.mark.parametrize("rho", RHOS)
    def test_identities(self, rho):
        weights = profile_recursion(rho, 60)
        p = weights.weights
        assert abs(p[0] - (1.0 - rho)) <= 1e-14
        assert np.all(p > 0)
        assert np.all(np.diff(weights.partial_sums) > 0)
        for ell in range(61):
            assert abs((1.0 - weights.partial_sums[ell]) - tail_iterate(rho, ell)) <= 1e-10
        assert systeq_residual(weights) <= 1e-9
        assert fixed_point_residual(weights) <= 1e-10

    @pytest.mark.parametrize("rho", RHOS)
    def test_geometric_tail(self, rho):
        p = profile_recursion(rho, 81).weights
        q = rho / (1.0 + rho)
        assert abs(p[81] / p[80] - q) <= 1e-6

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.2, 1.5])
    def test_domain(self, rho):
        with pytest.raises(ProfileDomainError):
            profile_recursion(rho, 5)

    def test_negative_kmax(self):
        with pytest.raises(ProfileDomainError):
            profile_recursion(0.5, -1)

    def test_tail_ratio(self):
        weights = profile_recursion(0.5, 60)
        assert weights.tail_ratio == pytest.approx(1.0 / 3.0, abs=1e-6)


class TestGMap:
    def test_values(self):
        assert g_map(0.5, 0.0) == 0.0
        assert g_map(0.5, 1.0) == pytest.approx(0.5, abs=1e-15)
        assert g_map(0.5, 0.5) == pytest.approx(0.190983, abs=1e-6)

    def test_monotone(self):
        u = np.linspace(0.0, 1.0, 201)
        assert np.all(np.diff(g_map(0.7, u)) > 0)

    @pytest.mark.parametrize("rho", RHOS)
    def test_lipschitz(self, rho):
        # the constant rho holds up to u = (2 + rho)/4, on all of [0, 1] it is G'(1) = rho/(1 - rho)
        inner = np.linspace(0.0, min(1.0, (2.0 + rho) / 4.0), 400)
        slopes = np.abs(np.diff(g_map(rho, inner)) / np.diff(inner))
        assert slopes.max() <= rho * (1.0 + 1e-9)
        full = np.linspace(0.0, 1.0, 400)
        slopes = np.abs(np.diff(g_map(rho, full)) / np.diff(full))
        assert slopes.max() <= rho / (1.0 - rho) * (1.0 + 1e-9)

    def test_outside_unit_interval(self):
        with pytest.raises(ProfileDomainError):
            g_map(0.5, 1.2)

    def test_tail_iterates(self):
        assert tail_iterate(0.5, 0) == 0.5
        assert tail_iterate(0.5, 1) == pytest.approx(0.190983, abs=1e-6)
        assert tail_iterate(0.5, 2) == pytest.approx(0.066620, abs=1e-6)
        assert tail_sequence(0.5, 3) == pytest.approx([0.5, 0.190983, 0.066620], abs=1e-6)


class TestShape:
    def test_strictly_decreasing(self):
        assert classify_shape(profile_recursion(0.5, 20)).kind == ShapeKind.strictly_decreasing

    def test_plateau(self):
        weights = profile_recursion(2.0 / 3.0, 20)
        assert classify_shape(weights).kind == ShapeKind.plateau_at_zero_one
        assert weights.weights[0] == pytest.approx(1.0 / 3.0, abs=1e-9)
        assert weights.weights[1] == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_unimodal(self):
        weights = profile_recursion(0.8, 20)
        shape = classify_shape(weights)
        assert str(shape) == "Unimodal(1,1)"
        assert weights.weights[:3] == pytest.approx([0.2, 0.312311, 0.235647], abs=1e-6)

    def test_transition_at_two_thirds(self):
        below = classify_shape(profile_recursion(2.0 / 3.0 - 1e-6, 20))
        above = classify_shape(profile_recursion(2.0 / 3.0 + 1e-6, 20))
        assert below.kind == ShapeKind.strictly_decreasing
        assert above.kind == ShapeKind.unimodal

    def test_needs_four_weights(self):
        with pytest.raises(ProfileDomainError):
            classify_shape(profile_recursion(0.5, 2))


class TestEquilibrium:
    def test_first_masses(self):
        masses = equilibrium_masses(1.0, 0.5, 5).masses
        assert masses[0] == 1.0
        assert masses[1] == pytest.approx(0.618034, abs=1e-6)

    def test_total(self):
        assert equilibrium_masses(1.0, 0.5, 200).total == pytest.approx(2.0, abs=1e-9)
        assert equilibrium_masses(1.0, 0.5, 5).total < equilibrium_masses(1.0, 0.5, 10).total

    @pytest.mark.parametrize("rho", RHOS)
    def test_matches_profile(self, rho):
        masses = equilibrium_masses(1.0, rho, 60).masses
        p = profile_recursion(rho, 60).weights
        assert np.max(np.abs(masses - 2.0 * p)) <= 1e-12

    def test_scaled_alpha(self):
        masses = equilibrium_masses(2.0, 1.0, 30).masses
        p = profile_recursion(0.5, 30).weights
        assert masses == pytest.approx(4.0 * p, abs=1e-12)

    def test_requires_subcritical(self):
        with pytest.raises(ProfileDomainError):
            equilibrium_masses(1.0, 1.0, 5)


class TestExponent:
    def test_values(self):
        assert click_exponent(Params(N=1000, alpha=1.0, mu=0.5, f_of_N=50.0)) == pytest.approx(6.1371, abs=1e-4)
        assert click_exponent(Params(N=2000, alpha=1.0, mu=0.5, f_of_N=50.0)) == pytest.approx(12.2741, abs=1e-4)

    def test_vanishes_at_criticality(self):
        assert exponent_coefficient(1.0, 1.0 - 1e-6) < 1e-9

    def test_domain(self):
        with pytest.raises(ProfileDomainError):
            click_exponent(Params(N=100, alpha=1.0, mu=1.0, f_of_N=5.0))
        with pytest.raises(ProfileDomainError):
            finite_exponent_coefficient(1.0, 0.5, 0.5)
        with pytest.raises(ProfileDomainError):
            finite_exponent_coefficient(1.0, 1.5, 5.0)

    def test_finite_capacity(self):
        # closed form of the integral at f = 5
        assert finite_exponent_coefficient(1.0, 0.5, 5.0) == pytest.approx(0.23176, abs=2e-4)
        values = [finite_exponent_coefficient(1.0, 0.5, f) for f in (2.0, 5.0, 50.0, 1e7)]
        assert values == sorted(values)
        assert values[-1] == pytest.approx(exponent_coefficient(1.0, 0.5), rel=1e-5)


class TestResiduals:
    def test_perturbed_weights(self):
        p = profile_recursion(0.5, 60).weights.copy()
        p[1] += 1e-3
        assert systeq_residual(ProfileWeights.from_weights(0.5, p)) >= 1e-4

    def test_tail_constant(self):
        C = tail_constant(0.5)
        q = 1.0 / 3.0
        assert C > 0
        assert tail_iterate(0.5, 40) / q ** 40 == pytest.approx(C, rel=1e-8)

    def test_point_mass_constant(self):
        q = 1.0 / 3.0
        C = point_mass_constant(0.5)
        assert C == pytest.approx(tail_constant(0.5) * (1.0 - q) / q, rel=1e-12)
        assert profile_recursion(0.5, 80).weights[80] / q ** 80 == pytest.approx(C, rel=1e-5)

    def test_moments(self):
        mean, variance = profile_moments(0.5)
        p = profile_recursion(0.5, 200).weights
        k = np.arange(len(p))
        assert mean == pytest.approx(float(np.sum(k * p)), abs=1e-10)
        assert variance == pytest.approx(float(np.sum(k * k * p)) - mean ** 2, abs=1e-10)
        assert mean == pytest.approx(0.7915, abs=1e-3)


class TestRates:
    def test_z0(self):
        params = Params(N=100, alpha=1.0, mu=0.5, f_of_N=10.0)
        birth, death = z0_rates(params, 10)
        assert birth == pytest.approx(10 * 0.1 * 0.9)
        assert death == pytest.approx(10 * (0.05 + 9 / 200))

    def test_y0(self):
        params = Params(N=100, alpha=1.0, mu=0.5, f_of_N=10.0)
        birth, death = y0_rates(params, 10)
        assert birth == pytest.approx(10 * 0.6 * 0.9)
        assert death == pytest.approx(10 * (0.45 + 0.05))
        assert math.isclose(y0_rates(params, 100)[0], 0.0, abs_tol=1e-15)
