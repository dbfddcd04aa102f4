import cmath
import math

import numpy as np
import pytest
from scipy.special import erf

from optstop.core import SignedMeasure, StateInterval, whole_line
from optstop.errors import AliasingDetected, BadParams, MomentDiverges
from optstop.jumps import (JumpThresholdResult, KernelRow, LevyOUSpec,
                           LevyTriplet, find_threshold_jump, green_ratio_check,
                           invert_green_dft, levy_exponent,
                           ou_green_hat, ou_green_hat_ode_residual,
                           ou_inversion_density, put_generator_density,
                           value_function_jump)


def exp_jump_measure(lam, beta):
    return SignedMeasure(StateInterval(0.0, math.inf),
                         lambda x: lam * beta * np.exp(-beta * np.asarray(x, dtype=float)))


def neg_exp_jump_measure(lam, beta):
    return SignedMeasure(StateInterval(-math.inf, 0.0),
                         lambda x: lam * beta * np.exp(beta * np.asarray(x, dtype=float)))


def zero_measure():
    return SignedMeasure(StateInterval(-2.0, -1.0), lambda x: np.zeros_like(np.asarray(x, dtype=float)))


OU_UNIT = LevyOUSpec(gamma=1.0, sigma=1.0, lam=1.0, beta=1.0, alpha=1.0)
OU_NOJUMP = LevyOUSpec(gamma=1.0, sigma=1.0, lam=0.0, beta=1.0, alpha=1.0)


class TestLevyExponent:
    def test_pure_bm(self):
        trip = LevyTriplet(0.0, 1.0, zero_measure())
        assert levy_exponent(trip, 2.0) == pytest.approx(2.0, rel=1e-10)
        assert levy_exponent(trip, 1j) == pytest.approx(-0.5, rel=1e-10)

    def test_zero_is_zero(self):
        trip = LevyTriplet(0.4, 0.7, exp_jump_measure(2.0, 3.0), "positive")
        assert abs(levy_exponent(trip, 0.0)) < 1e-12

    def test_compound_poisson_closed_form(self):
        lam, beta = 2.0, 3.0
        comp = lam * beta * (1.0 / beta - (1.0 - math.exp(-beta)) / beta)  # drift absorber
        trip = LevyTriplet(0.5, 0.0, exp_jump_measure(lam, beta), "positive")
        for u in (0.5, 1.3, -0.7):
            z = 1j * u
            # closed form of int (e^{zx} - 1 - zx 1_{|x|<1}) lam beta e^{-beta x} dx
            jump = lam * (beta / (beta - z) - 1.0) - z * lam * beta * (
                (1.0 - math.exp(-beta) * (beta + 1.0)) / beta ** 2)
            expected = 0.5 * z + jump
            assert levy_exponent(trip, z) == pytest.approx(expected, rel=1e-8)

    def test_moment_diverges(self):
        trip = LevyTriplet(0.0, 0.0, exp_jump_measure(1.0, 1.0), "positive")
        with pytest.raises(MomentDiverges):
            levy_exponent(trip, 2.0)  # needs z < beta = 1

    def test_spectral_side_validation(self):
        with pytest.raises(BadParams):
            LevyTriplet(0.0, 1.0, exp_jump_measure(1.0, 1.0), "negative")


class TestPutGeneratorDensity:
    def test_risk_neutral_constant(self):
        trip = LevyTriplet(0.0, 1.0, zero_measure(), "negative")
        alpha = float(levy_exponent(trip, 1.0).real)  # alpha = Psi(1) = 1/2
        K = 2.0
        for x in (-1.0, 0.0, 0.5):
            assert put_generator_density(trip, K, alpha, x) == pytest.approx(alpha * K)

    def test_diffusive_closed_form(self):
        mu, sigma, alpha, K = 0.1, 0.6, 0.4, 3.0
        trip = LevyTriplet(mu, sigma, zero_measure(), "negative")
        psi1 = mu + sigma ** 2 / 2
        x = -0.3
        assert put_generator_density(trip, K, alpha, x) == pytest.approx(
            alpha * K - (alpha - psi1) * math.exp(x), rel=1e-10)

    def test_far_left_limit(self):
        trip = LevyTriplet(0.0, 1.0, neg_exp_jump_measure(0.5, 2.0), "negative")
        alpha, K = 0.3, 2.0
        assert put_generator_density(trip, K, alpha, -30.0) == pytest.approx(alpha * K, rel=1e-9)


class TestOuGreenHat:
    def test_mass_at_zero(self):
        for spec in (OU_UNIT, OU_NOJUMP, LevyOUSpec(2.0, 1.0, 0.5, 2.0, 0.7)):
            assert ou_green_hat(spec, 0.3, 0.0) == pytest.approx(1.0 / spec.alpha)

    def test_continuity_at_zero(self):
        prev = None
        for eps in (0.1, 0.05, 0.01):
            gap = abs(ou_green_hat(OU_UNIT, 0.5, eps) - 1.0 / OU_UNIT.alpha)
            if prev is not None:
                assert gap < prev
            prev = gap
        assert prev < 0.05

    def test_nojump_closed_form(self):
        # i sqrt(pi) e^{-z^2/4} z^{-1} e^{x^2} (erf(x - iz/2) - erf(x))
        for x, z in ((0.0, 2.0), (0.7, 1.0), (-0.4, 3.0)):
            closed = (1j * math.sqrt(math.pi) * cmath.exp(-z * z / 4.0) / z
                      * cmath.exp(x * x) * (erf(x - 1j * z / 2.0) - erf(x)))
            got = ou_green_hat(OU_NOJUMP, x, z)
            assert got == pytest.approx(closed, rel=1e-9)

    def test_unit_jump_closed_form(self):
        beta = 1.0
        for x, z in ((0.0, 1.0), (0.5, 2.0)):
            E = cmath.exp(x * x) * (erf(x - 1j * z / 2.0) - erf(x))
            total = (1j * math.sqrt(math.pi) * (beta - 2.0 * x) * E
                     - 2j * (cmath.exp(1j * z * x + z * z / 4.0) - 1.0))
            closed = cmath.exp(-z * z / 4.0) / (z * (beta - 1j * z)) * total
            got = ou_green_hat(OU_UNIT, x, z)
            assert got == pytest.approx(closed, rel=1e-9)

    def test_conjugate_symmetry(self):
        g1 = ou_green_hat(OU_UNIT, 0.3, 1.7)
        g2 = ou_green_hat(OU_UNIT, 0.3, -1.7)
        assert g2 == pytest.approx(g1.conjugate(), rel=1e-12)

    @pytest.mark.parametrize("spec", [OU_UNIT, OU_NOJUMP])
    def test_ode_residual(self, spec):
        for z in (0.5, 1.0, 3.0, 7.0):
            assert ou_green_hat_ode_residual(spec, 0.4, z) < 1e-4


class TestInvertGreenDft:
    def test_row_mass_identity(self):
        for spec in (OU_UNIT, OU_NOJUMP):
            row = invert_green_dft(spec, 0.0)
            assert row.mass() == pytest.approx(1.0 / spec.alpha, rel=0.01)

    def test_row_nonnegative(self):
        row = invert_green_dft(OU_UNIT, 0.0)
        assert float(np.min(row.values)) > -1e-6

    def test_aliasing_guard(self):
        with pytest.raises((AliasingDetected, BadParams)):
            invert_green_dft(OU_UNIT, 0.0, A=64.0, n=1000)  # not a power of two

    def test_gaussian_stationary_case_density_shape(self):
        # lam = 0: kernel concentrates near the mean-reverting origin
        row = invert_green_dft(OU_NOJUMP, 0.0)
        peak = row.y[int(np.argmax(row.values))]
        assert abs(peak) < 0.3


class TestThreshold:
    def test_unit_parameters(self):
        res = find_threshold_jump(OU_UNIT, (0.6, 1.8))
        assert res.x_star == pytest.approx(1.1442, abs=0.01)
        f = ou_inversion_density(OU_UNIT)
        assert f(res.x_star) > 0  # 2 * 1.1442 - 1

    def test_nojump_parameters(self):
        res = find_threshold_jump(OU_NOJUMP, (0.3, 1.2))
        assert res.x_star == pytest.approx(0.5939, abs=0.005)

    def test_value_function_majorant_and_identity(self):
        res = find_threshold_jump(OU_UNIT, (0.6, 1.8))
        xs = np.linspace(-1.0, res.x_star, 8)
        vals = value_function_jump(OU_UNIT, res.x_star, xs)
        assert np.all(vals >= np.maximum(xs, 0.0) - 1e-3)
        # at and beyond the threshold the value equals the reward within grid error
        past = np.array([res.x_star, res.x_star + 0.5])
        vpast = value_function_jump(OU_UNIT, res.x_star, past)
        assert vpast[0] == pytest.approx(res.x_star, abs=5e-3)
        assert vpast[1] == pytest.approx(past[1], abs=5e-3)
        # monotone growth toward the boundary from below
        assert vals[0] < vals[-1]


class TestGreenRatio:
    def test_ratio_invariance_below_z(self):
        row_x = invert_green_dft(OU_UNIT, 1.0)
        row_z = invert_green_dft(OU_UNIT, 0.0)
        report = green_ratio_check(row_x, row_z, [(-3.0, -2.4), (-2.4, -1.7), (-1.7, -1.0)])
        assert report["ok"], report

    def test_identical_rows_ratio_one(self):
        row = invert_green_dft(OU_UNIT, 0.5)
        report = green_ratio_check(row, row, [(-3.0, -2.0), (-2.0, -1.0)])
        assert report["mean"] == pytest.approx(1.0, rel=1e-12)
        assert report["spread"] < 1e-12
