import math

import numpy as np
import pytest

from optstop import (StateInterval, catalog, expand_interval, find_threshold,
                     green, hitting_transform, make_bundle, merge_regions,
                     negative_set, reward_form, solve_general, solve_two_sided)
from optstop.core import Tolerances, integrate
from optstop.diffusion import sigma_measure
from optstop.errors import PreconditionFailed
from optstop.regions import _sigma_J, piece_coefficients

QUINTIC = [-1.0, 0.0, 5.0, 0.0, -4.0, 0.0]  # -(x-2)(x-1)x(x+1)(x+2), descending


def quintic_setup(alpha):
    spec = catalog("bm", alpha)
    bundle = make_bundle(spec, reward_form("poly", coeffs=QUINTIC))
    return spec, bundle


def piecewise_setup(alpha=1.0):
    # x / -x+2 / x-2 reward with kinks at 1 and 2
    spec = catalog("bm", alpha)
    bundle = make_bundle(spec, reward_form(
        "piecewise_linear", breakpoints=[(-1, -1), (1, 1), (2, 0), (4, 2)]))
    return spec, bundle


class TestNegativeSet:
    def test_quintic_alpha2(self):
        spec, bundle = quintic_setup(2.0)
        regions = negative_set(spec, bundle, np.linspace(-6, 6, 1201))
        ivs = regions.intervals
        assert len(ivs) == 3
        # analytic roots of x(2x^4 - 20x^2 + 23) sign structure
        r1 = math.sqrt(5 - math.sqrt(13.5))
        r2 = math.sqrt(5 + math.sqrt(13.5))
        assert ivs[0].left == pytest.approx(-r2, abs=1e-8)
        assert ivs[0].right == pytest.approx(-r1, abs=1e-8)
        assert ivs[1].left == pytest.approx(0.0, abs=1e-8)
        assert ivs[1].right == pytest.approx(r1, abs=1e-8)
        assert ivs[2].left == pytest.approx(r2, abs=1e-8)
        assert math.isinf(ivs[2].right)

    def test_abs_reward_degenerate_atom_seed(self):
        # |x| with zero drift: density positive on both sides, negative atom at 0
        spec = catalog("bm_drift", 1.0, mu=0.0)
        bundle = make_bundle(spec, reward_form("abs"))
        regions = negative_set(spec, bundle, np.linspace(-5, 5, 801))
        assert len(regions.intervals) == 1
        seed = regions.intervals[0]
        assert seed.contains(0.0)
        assert seed.right - seed.left <= 2.1e-3  # 2 * grid_step seed

    def test_piecewise_negative_parts(self):
        spec, bundle = piecewise_setup(1.0)
        regions = negative_set(spec, bundle, np.linspace(-6, 6, 1201))
        # density negative on (-inf, 0); atom -2 at 2 seeds a degenerate entry
        assert len(regions.intervals) == 2
        assert math.isinf(regions.intervals[0].left)
        assert regions.intervals[0].right == pytest.approx(0.0, abs=1e-8)
        assert regions.intervals[1].contains(2.0)
        atoms = dict(bundle.nu.atoms)
        assert atoms[1.0] == pytest.approx(2.0)
        assert atoms[2.0] == pytest.approx(-2.0)


class TestExpandInterval:
    def test_quintic_alpha2_first_interval(self):
        spec, bundle = quintic_setup(2.0)
        regions = negative_set(spec, bundle, np.linspace(-6, 6, 1201))
        pair = expand_interval(spec, bundle, regions.intervals[0])
        assert pair.outer.left == pytest.approx(-3.23, abs=0.02)
        assert pair.outer.right == pytest.approx(-0.50, abs=0.02)

    def test_quintic_alpha2_unbounded_interval(self):
        spec, bundle = quintic_setup(2.0)
        regions = negative_set(spec, bundle, np.linspace(-6, 6, 1201))
        pair = expand_interval(spec, bundle, regions.intervals[2])
        assert pair.outer.left == pytest.approx(1.78, abs=0.02)
        assert math.isinf(pair.outer.right)
        # the waived psi condition at r, the active phi condition near zero
        assert abs(pair.int_phi) < 1e-7

    def test_symmetric_reward_symmetric_expansion(self):
        # even negative hump: expansion must stay symmetric about 0
        spec = catalog("bm", 1.0)
        form = reward_form("poly", coeffs=[1.0, 0.0, -2.0])  # x^2 - 2, hump of alg < 0
        bundle = make_bundle(spec, form)
        regions = negative_set(spec, bundle, np.linspace(-8, 8, 1601))
        assert len(regions.intervals) == 1
        J = regions.intervals[0]
        assert J.left == pytest.approx(-J.right, abs=1e-7)
        pair = expand_interval(spec, bundle, J)
        assert pair.outer.left == pytest.approx(-pair.outer.right, abs=1e-6)

    def test_zero_integral_certificates(self):
        spec, bundle = quintic_setup(2.0)
        regions = negative_set(spec, bundle, np.linspace(-6, 6, 1201))
        for J in regions.intervals:
            pair = expand_interval(spec, bundle, J)
            if pair.outer.left > spec.state.left:
                assert abs(pair.int_phi) < 1e-6
            if pair.outer.right < spec.state.right:
                assert abs(pair.int_psi) < 1e-6

    def test_precondition_rejected(self):
        spec, bundle = quintic_setup(2.0)
        with pytest.raises(PreconditionFailed):
            expand_interval(spec, bundle, StateInterval(1.9, 2.6))  # alg > 0 here


class TestMergeRegions:
    def test_alpha2_disjoint_pass_through(self):
        spec, bundle = quintic_setup(2.0)
        regions = negative_set(spec, bundle, np.linspace(-6, 6, 1201))
        pairs = [expand_interval(spec, bundle, J) for J in regions.intervals]
        merged = merge_regions(spec, bundle, pairs)
        assert len(merged) == 3
        assert [(p.inner, p.outer) for p in merged] == [(p.inner, p.outer) for p in pairs]

    def test_alpha15_overlap_merges(self):
        spec, bundle = quintic_setup(1.5)
        regions = negative_set(spec, bundle, np.linspace(-6, 6, 1201))
        pairs = [expand_interval(spec, bundle, J) for J in regions.intervals]
        # first two outers overlap at this discount
        assert pairs[0].outer.right >= pairs[1].outer.left
        merged = merge_regions(spec, bundle, pairs)
        assert len(merged) == 2
        assert merged[0].outer.left == pytest.approx(-3.53, abs=0.02)
        assert merged[0].outer.right == pytest.approx(1.46, abs=0.02)
        assert merged[1].outer.left == pytest.approx(1.76, abs=0.02)


class TestSolveGeneral:
    def test_quintic_alpha2(self):
        spec, bundle = quintic_setup(2.0)
        sol = solve_general(spec, bundle)
        ivs = sol.continuation.intervals
        assert len(ivs) == 3
        expected = [(-3.23, -0.50), (-0.36, 1.43), (1.78, math.inf)]
        for iv, (a, b) in zip(ivs, expected):
            assert iv.left == pytest.approx(a, abs=0.02)
            if math.isfinite(b):
                assert iv.right == pytest.approx(b, abs=0.02)
            else:
                assert math.isinf(iv.right)

    def test_quintic_alpha2_smooth_fit_at_contacts(self):
        spec, bundle = quintic_setup(2.0)
        sol = solve_general(spec, bundle)
        h = 1e-6
        for iv in sol.continuation.intervals:
            for b in (iv.left, iv.right):
                if not math.isfinite(b):
                    continue
                dv = (sol.value_at(b + h) - sol.value_at(b - h)) / (2 * h)
                dg = float(bundle.g_deriv(b))
                assert dv == pytest.approx(dg, abs=5e-4)

    def test_quintic_alpha15(self):
        spec, bundle = quintic_setup(1.5)
        sol = solve_general(spec, bundle)
        ivs = sol.continuation.intervals
        assert len(ivs) == 2
        assert ivs[0].left == pytest.approx(-3.53, abs=0.02)
        assert ivs[0].right == pytest.approx(1.46, abs=0.02)
        assert ivs[1].left == pytest.approx(1.76, abs=0.02)

    def test_piecewise_reward(self):
        spec, bundle = piecewise_setup(1.0)
        sol = solve_general(spec, bundle)
        ivs = sol.continuation.intervals
        assert len(ivs) == 2
        assert math.isinf(ivs[0].left)
        assert ivs[0].right == pytest.approx(1.0 / math.sqrt(2.0), abs=0.02)
        assert ivs[1].left == pytest.approx(1.15, abs=0.02)
        assert ivs[1].right == pytest.approx(2.85, abs=0.02)
        k2_1 = sol.pieces[0][1]
        assert k2_1 == pytest.approx(1.0 / (math.e * math.sqrt(2.0)), rel=1e-6)
        assert sol.pieces[1][0] == pytest.approx(3.96, abs=0.05)
        assert sol.pieces[1][1] == pytest.approx(0.013, abs=0.002)

    def test_one_sided_fallback_matches_threshold_solver(self):
        alpha = 0.5
        spec = catalog("bm", alpha)
        bundle = make_bundle(spec, reward_form("x_plus"))
        sol = solve_general(spec, bundle)
        assert len(sol.continuation.intervals) == 1
        iv = sol.continuation.intervals[0]
        assert math.isinf(iv.left)
        assert iv.right == pytest.approx(1.0 / math.sqrt(2 * alpha), abs=1e-6)
        res = find_threshold(spec, bundle, "right", (0.05, 8.0))
        assert iv.right == pytest.approx(res.x_star, abs=1e-6)

    def test_abs_reward_through_general_path(self):
        spec = catalog("bm_drift", 1.0, mu=0.0)
        bundle = make_bundle(spec, reward_form("abs"))
        sol = solve_general(spec, bundle)
        assert len(sol.continuation.intervals) == 1
        iv = sol.continuation.intervals[0]
        # gamma*b*tanh(gamma*b) = 1 at gamma = sqrt(2)
        gb = 1.1996786402577338
        b = gb / math.sqrt(2.0)
        assert iv.left == pytest.approx(-b, abs=1e-4)
        assert iv.right == pytest.approx(b, abs=1e-4)

    def test_everywhere_positive_measure_stops_everywhere(self):
        spec = catalog("bm", 1.0)
        bundle = make_bundle(spec, reward_form("exp", sigma=0.5))  # alg > 0 always
        sol = solve_general(spec, bundle)
        assert sol.continuation.empty
        assert sol.value_at(0.3) == float(bundle.g(0.3))

    def test_value_harmonic_inside_continuation(self):
        # V(x) = E_x[e^{-a tau_ab} V(X_tau)] reconstructed from psi/phi algebra
        spec, bundle = quintic_setup(2.0)
        sol = solve_general(spec, bundle)
        iv = sol.continuation.intervals[0]
        a, b = iv.left, iv.right
        for x in np.linspace(a + 0.1, b - 0.1, 7):
            pa, pb = float(spec.phi(a)), float(spec.phi(b))
            qa, qb = float(spec.psi(a)), float(spec.psi(b))
            den = qa * pb - qb * pa
            u_a = (float(spec.psi(x)) * pb - float(spec.phi(x)) * qb) / den
            u_b = (float(spec.phi(x)) * qa - float(spec.psi(x)) * pa) / den
            recon = u_a * sol.value_at(a) + u_b * sol.value_at(b)
            assert sol.value_at(float(x)) == pytest.approx(recon, rel=1e-8)

    def test_idempotence_on_own_stopping_sigma(self):
        # re-solving with sigma restricted to the stopping region reproduces V
        spec, bundle = quintic_setup(2.0)
        sol = solve_general(spec, bundle)
        mu = sigma_measure(spec, bundle)
        for x in (-3.0, 0.5, 2.0, 4.0):
            direct = 0.0
            for iv in sol.stopping.intervals:
                direct += integrate(lambda y: _green_row(spec, float(x), y), mu, iv,
                                    extra_breakpoints=(float(x),))
            assert direct == pytest.approx(sol.value_at(float(x)), abs=1e-6)


def _green_row(spec, x, y):
    y = np.asarray(y, dtype=float)
    return np.where(y <= x, spec.psi(y) * spec.phi(x), spec.psi(x) * spec.phi(y)) / spec.wronskian


class TestSolveTwoSided:
    @pytest.mark.parametrize("mu,alpha,xl_exp,xr_exp,tol", [
        (0.0, 1.5, -0.69264, 0.69264, 5e-3),
        (1.0, 1.0, -0.737, 1.373, 5e-3),
        (-3.0, 1.0, -3.158, 1.037, 5e-3),
    ])
    def test_abs_reward_thresholds(self, mu, alpha, xl_exp, xr_exp, tol):
        spec = catalog("bm_drift", alpha, mu=mu)
        bundle = make_bundle(spec, reward_form("abs"))
        sol = solve_two_sided(spec, bundle, init=(-0.5, 0.5))
        iv = sol.continuation.intervals[0]
        assert iv.left == pytest.approx(xl_exp, abs=tol)
        assert iv.right == pytest.approx(xr_exp, abs=tol)

    def test_boundary_continuity_and_majorant(self):
        spec = catalog("bm_drift", 1.0, mu=1.0)
        bundle = make_bundle(spec, reward_form("abs"))
        sol = solve_two_sided(spec, bundle, init=(-0.5, 0.5))
        iv = sol.continuation.intervals[0]
        for b in (iv.left, iv.right):
            assert sol.value_at(b - 1e-9) == pytest.approx(abs(b), abs=1e-6)
        xs = np.linspace(iv.left, iv.right, 101)[1:-1]
        assert np.all(sol.value(xs) >= np.abs(xs) - 1e-9)

    def test_agrees_with_general_path(self):
        spec = catalog("bm_drift", 1.0, mu=1.0)
        bundle = make_bundle(spec, reward_form("abs"))
        two = solve_two_sided(spec, bundle, init=(-0.5, 0.5))
        gen = solve_general(spec, bundle)
        iv_two = two.continuation.intervals[0]
        iv_gen = gen.continuation.intervals[0]
        assert iv_two.left == pytest.approx(iv_gen.left, abs=2e-4)
        assert iv_two.right == pytest.approx(iv_gen.right, abs=2e-4)


class TestPieceCoefficients:
    def test_interior_interval_matches_boundary_values(self):
        spec, bundle = quintic_setup(2.0)
        iv = StateInterval(-1.0, 1.0)
        k1, k2 = piece_coefficients(spec, bundle, iv)
        for b in (-1.0, 1.0):
            v = k1 * float(spec.phi(b)) + k2 * float(spec.psi(b))
            assert v == pytest.approx(float(bundle.g(b)), rel=1e-12)
