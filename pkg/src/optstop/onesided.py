"""Right- and left-sided threshold problems: locate x*, verify the theorem
hypotheses, build the value function, and classify smooth fit.

The threshold is found from the cheap derivative equation g/psi = g'/psi'
and cross-validated against the authoritative integral equation
g(x) = w^-1 psi(x) int_{(x,r)} phi dsigma; disagreement beyond tolerance is
an error, not a warning. Left-sided problems run through the same code with
psi and phi swapped and the orientation reversed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (DEFAULT_TOL, RegionSet, SignedMeasure, StateInterval,
                   Tolerances, find_root, integrate)
from .diffusion import ProcessSpec, RewardBundle, green, sigma_measure
from .errors import (EquationMismatch, MajorantViolated, NoSignChange,
                     NonConvergent, NotFound, NotSingleCrossing)
from .regions import Solution

__all__ = [
    "ThresholdResult",
    "SmoothFitReport",
    "HypothesisRecord",
    "find_threshold",
    "find_threshold_inequality",
    "verify_hypotheses",
    "value_function",
    "smooth_fit",
    "sufficient_b_scan",
]


@dataclass(frozen=True)
class HypothesisRecord:
    """Verification-theorem hypotheses with worst margins and locations."""

    alg_nonneg_beyond: bool
    alg_worst_margin: float
    alg_worst_at: float
    psi_majorant_before: bool
    majorant_worst_margin: float
    majorant_worst_at: float

    @property
    def ok(self) -> bool:
        return self.alg_nonneg_beyond and self.psi_majorant_before


@dataclass(frozen=True)
class ThresholdResult:
    x_star: float
    equation_kind: str  # 'equality' | 'strict-inequality'
    side: str  # 'right' | 'left'
    atom_mass_k: float
    residual: float
    hypotheses: HypothesisRecord


@dataclass(frozen=True)
class SmoothFitReport:
    psi_sf: bool
    scale_sf: bool
    classic_sf: bool
    atom_mass_k: float
    left_right_derivs: dict


class _Orientation:
    """Right/left adapter: 'fund' is psi for right-sided problems, phi for left.

    tail_interval(x) is the candidate stopping side; before_interval(x) the
    continuation side.
    """

    def __init__(self, spec: ProcessSpec, side: str):
        if side not in ("right", "left"):
            raise ValueError("side must be 'right' or 'left'")
        self.spec = spec
        self.side = side
        if side == "right":
            self.fund = spec.psi
            self.fund_deriv = spec.psi_deriv
            self.cofund = spec.phi
        else:
            self.fund = spec.phi
            self.fund_deriv = spec.phi_deriv
            self.cofund = spec.psi

    def tail_interval(self, x: float) -> StateInterval:
        st = self.spec.state
        if self.side == "right":
            return StateInterval(x, st.right, False, st.right_closed)
        return StateInterval(st.left, x, st.left_closed, False)

    def before_points(self, x: float, lo: float, hi: float, n: int) -> np.ndarray:
        if self.side == "right":
            return np.linspace(lo, x, n, endpoint=False)
        return np.linspace(x, hi, n + 1)[1:]

    def beyond_points(self, x: float, lo: float, hi: float, n: int) -> np.ndarray:
        if self.side == "right":
            return np.linspace(x, hi, n + 1)[1:]
        return np.linspace(lo, x, n, endpoint=False)


def _tail_integral(spec: ProcessSpec, mu: SignedMeasure, orient: _Orientation,
                   x: float, tol: Tolerances) -> float:
    """w^-1 fund(x) * int over the stopping tail of cofund dsigma."""
    J = orient.tail_interval(x)
    val = integrate(orient.cofund, mu, J, tol)
    return float(orient.fund(x)) * val / spec.wronskian


def _equation_deficit(spec, bundle, mu, orient, x, tol) -> float:
    """g(x) - tail integral; zero at an equality threshold, positive beyond."""
    return float(bundle.g(x)) - _tail_integral(spec, mu, orient, x, tol)


def find_threshold(spec: ProcessSpec, bundle: RewardBundle, side: str,
                   bracket: tuple[float, float],
                   tol: Tolerances = DEFAULT_TOL, grid_n: int = 400) -> ThresholdResult:
    """Largest root in ``bracket`` of g/fund = g'/fund', cross-validated.

    The derivative form is scanned from the right (per the largest-root
    rule); the root is then checked against the integral equation. A nonzero
    representing-measure mass at the root means the equality equation does
    not actually hold there (e.g. an atom of the speed measure): that raises
    EquationMismatch and the caller should try find_threshold_inequality.
    """
    orient = _Orientation(spec, side)
    lo, hi = bracket

    def delta(x):
        return float(bundle.g_deriv(x)) * float(orient.fund(x)) - float(bundle.g(x)) * float(orient.fund_deriv(x))

    xs = np.linspace(lo, hi, grid_n)
    xs = _insert_points(xs, bundle.kinks, lo, hi)
    vals = np.array([delta(float(x)) for x in xs])
    root = None
    for i in range(len(xs) - 1, 0, -1):
        if vals[i] == 0.0:
            root = float(xs[i])
            break
        if vals[i - 1] * vals[i] < 0.0:
            root = find_root(delta, (float(xs[i - 1]), float(xs[i])), tol)
            break
    if root is None:
        raise NoSignChange(f"no sign change of the threshold equation in {bracket}")

    mu = sigma_measure(spec, bundle)
    # snap onto atoms/kinks: a root at machine distance below an atom would
    # silently pull the atom into the tail integral
    specials = sorted(set(bundle.kinks) | set(bundle.discontinuities)
                      | {p for p, _ in mu.atoms})
    for s in specials:
        if abs(root - s) <= 100.0 * tol.root_abs * max(1.0, abs(s)):
            root = s
            break
    residual = _equation_deficit(spec, bundle, mu, orient, root, tol)
    k = residual / green(spec, root, root)
    gscale = max(1.0, abs(float(bundle.g(root))))
    if abs(residual) > 1e-6 * gscale:
        raise EquationMismatch(
            f"derivative equation root x*={root:.10g} fails the integral "
            f"equation (residual {residual:.3g}); likely an atom at the "
            f"boundary - try find_threshold_inequality")
    hyp = verify_hypotheses(spec, bundle, root, side)
    return ThresholdResult(root, "equality", side, k, residual, hyp)


def find_threshold_inequality(spec: ProcessSpec, bundle: RewardBundle, side: str,
                              search_lo: float, search_hi: float | None = None,
                              tol: Tolerances = DEFAULT_TOL) -> ThresholdResult:
    """Smallest x past ``search_lo`` where g strictly exceeds the tail integral.

    Covers thresholds at which the equality equation has no root: jumps of g
    or atoms of the measure make the deficit D(x) = g(x) - int_{tail} G dsigma
    jump through zero. The scan grid includes every declared discontinuity,
    kink and atom; the boundary of {D > 0} is bisected and snapped onto the
    nearest special abscissa.
    """
    orient = _Orientation(spec, side)
    mu = sigma_measure(spec, bundle)
    if search_hi is None:
        search_hi = search_lo + max(4.0, 4000.0 * tol.grid_step)
    step = tol.grid_step * max(1.0, abs(search_lo), abs(search_hi))
    n = max(8, int(math.ceil((search_hi - search_lo) / step)))
    xs = np.linspace(search_lo, search_hi, n + 1)
    specials = sorted(set(bundle.discontinuities) | set(bundle.kinks)
                      | {p for p, _ in mu.atoms})
    xs = _insert_points(xs, specials, search_lo, search_hi)
    if side == "left":
        xs = xs[::-1]  # mirror: scan downward for the largest x

    def deficit(x):
        return _equation_deficit(spec, bundle, mu, orient, float(x), tol)

    prev = None
    hit = None
    for x in xs:
        d = deficit(x)
        if d > 0.0 and _alg_ok_beyond(spec, bundle, orient, float(x)):
            hit = (float(x), d)
            break
        prev = float(x)
    if hit is None:
        raise NotFound(f"no point with a strict threshold inequality in "
                       f"({search_lo}, {search_hi})")
    x_hit, _ = hit
    if prev is not None and prev != x_hit:
        lo_b, hi_b = (prev, x_hit) if prev < x_hit else (x_hit, prev)
        x_hit = _boundary_bisect(deficit, lo_b, hi_b, want_positive_at=x_hit, tol=tol)
    for s in specials:
        if abs(x_hit - s) <= 10.0 * max(tol.root_abs, 1e-12) * max(1.0, abs(s)) + tol.root_abs:
            x_hit = s
            break
    d = deficit(x_hit)
    if d <= 0.0:
        raise NotFound("scan landed on a point without a strict inequality")
    k = d / green(spec, x_hit, x_hit)
    hyp = verify_hypotheses(spec, bundle, x_hit, side)
    return ThresholdResult(x_hit, "strict-inequality", side, k, d, hyp)


def _boundary_bisect(deficit, lo, hi, want_positive_at, tol) -> float:
    """Bisect the indicator boundary of {deficit > 0} between lo and hi."""
    pos_right = want_positive_at >= hi
    for _ in range(200):
        if hi - lo <= tol.root_abs:
            break
        mid = 0.5 * (lo + hi)
        if (deficit(mid) > 0.0) == pos_right:
            hi = mid
        else:
            lo = mid
    return hi if pos_right else lo


def _alg_ok_beyond(spec, bundle, orient, x, n=60) -> bool:
    lo, hi = _default_window(spec)
    pts = orient.beyond_points(x, lo, hi, n)
    pts = _drop_kinks(pts, bundle.kinks)
    vals = bundle.alg_array(pts)
    return bool(np.all(vals >= -1e-9 * max(1.0, float(np.max(np.abs(vals))))))


def verify_hypotheses(spec: ProcessSpec, bundle: RewardBundle, x_star: float,
                      side: str, grid: np.ndarray | None = None) -> HypothesisRecord:
    """Grid check of the two verification hypotheses; report-only.

    Beyond the threshold (the stopping side) (alpha-L)g must be >= 0; before
    it, fund(x) g(x*)/fund(x*) must dominate g.
    """
    orient = _Orientation(spec, side)
    lo, hi = _default_window(spec)
    if grid is None:
        beyond = orient.beyond_points(x_star, lo, hi, 200)
        before = orient.before_points(x_star, lo, hi, 200)
    else:
        grid = np.asarray(grid, dtype=float)
        if side == "right":
            beyond, before = grid[grid > x_star], grid[grid < x_star]
        else:
            beyond, before = grid[grid < x_star], grid[grid > x_star]

    beyond = _drop_kinks(beyond, bundle.kinks)
    alg_vals = bundle.alg_array(beyond)
    i = int(np.argmin(alg_vals)) if len(alg_vals) else 0
    alg_margin = float(alg_vals[i]) if len(alg_vals) else 0.0
    alg_at = float(beyond[i]) if len(alg_vals) else x_star

    ratio = float(bundle.g(x_star)) / float(orient.fund(x_star))
    maj_vals = ratio * np.asarray(orient.fund(before), dtype=float) - np.asarray(
        bundle.g(before), dtype=float)
    j = int(np.argmin(maj_vals)) if len(maj_vals) else 0
    maj_margin = float(maj_vals[j]) if len(maj_vals) else 0.0
    maj_at = float(before[j]) if len(maj_vals) else x_star

    scale = max(1.0, abs(float(bundle.g(x_star))))
    return HypothesisRecord(
        alg_nonneg_beyond=alg_margin >= -1e-9 * scale,
        alg_worst_margin=alg_margin,
        alg_worst_at=alg_at,
        psi_majorant_before=maj_margin >= -1e-9 * scale,
        majorant_worst_margin=maj_margin,
        majorant_worst_at=maj_at,
    )


def value_function(spec: ProcessSpec, bundle: RewardBundle,
                   result: ThresholdResult, tol: Tolerances = DEFAULT_TOL) -> Solution:
    """Piecewise value function for a verified one-sided threshold."""
    st = spec.state
    x = result.x_star
    if result.side == "right":
        cont = StateInterval(st.left, x, st.left_closed, False)
        stop = StateInterval(x, st.right, True, st.right_closed)
        pieces = ((0.0, float(bundle.g(x)) / float(spec.psi(x))),)
    else:
        cont = StateInterval(x, st.right, False, st.right_closed)
        stop = StateInterval(st.left, x, st.left_closed, True)
        pieces = ((float(bundle.g(x)) / float(spec.phi(x)), 0.0),)
    sol = Solution(
        spec=spec, bundle=bundle,
        continuation=RegionSet((cont,)),
        stopping=RegionSet((stop,)),
        pieces=pieces,
    )
    _check_majorant(sol, tol)
    return sol


def _check_majorant(sol: Solution, tol: Tolerances, n: int = 600):
    lo, hi = _default_window(sol.spec)
    xs = np.linspace(lo, hi, n)
    gap = sol.value(xs) - np.asarray(sol.bundle.g(xs), dtype=float)
    scale = max(1.0, float(np.max(np.abs(sol.bundle.g(xs)))))
    if float(np.min(gap)) < -1e-7 * scale:
        i = int(np.argmin(gap))
        raise MajorantViolated(
            f"V(x) < g(x) at x={xs[i]:.6g} (gap {gap[i]:.3g}): wrong threshold")


def smooth_fit(spec: ProcessSpec, bundle: RewardBundle,
               result: ThresholdResult, tol: Tolerances = DEFAULT_TOL) -> SmoothFitReport:
    """Smooth-fit classification at the threshold.

    psi-fit holds iff the representing measure puts no mass at x* (k = 0);
    scale and classic fit are decided by one-sided numerical derivatives of
    the value function and the reward, divided by the one-sided derivatives
    of the scale function where appropriate.
    """
    x = result.x_star
    orient = _Orientation(spec, result.side)
    c = float(bundle.g(x)) / float(orient.fund(x))

    # V equals c*fund on the continuation side and g on the stopping side.
    if result.side == "right":
        f_cont = lambda t: c * float(spec.psi(t))
        cont_dir, stop_dir = -1, +1
    else:
        f_cont = lambda t: c * float(spec.phi(t))
        cont_dir, stop_dir = +1, -1
    f_stop = lambda t: float(bundle.g(t))

    dV_cont = _one_sided(f_cont, x, cont_dir)
    dV_stop = _one_sided(f_stop, x, stop_dir)
    ds_cont = _one_sided(lambda t: float(spec.scale(t)), x, cont_dir)
    ds_stop = _one_sided(lambda t: float(spec.scale(t)), x, stop_dir)
    dfund_cont = _one_sided(lambda t: float(orient.fund(t)), x, cont_dir)
    dfund_stop = _one_sided(lambda t: float(orient.fund(t)), x, stop_dir)

    gscale = max(1.0, abs(float(bundle.g(x))))
    psi_sf = abs(result.atom_mass_k) * green(spec, x, x) <= 1e-6 * gscale
    classic_sf = _match(dV_cont, dV_stop)
    scale_sf = _match(dV_cont / ds_cont, dV_stop / ds_stop)
    derivs = {
        "V_cont": dV_cont, "V_stop": dV_stop,
        "g_cont": _one_sided(f_stop, x, cont_dir), "g_stop": dV_stop,
        "dV_dscale_cont": dV_cont / ds_cont, "dV_dscale_stop": dV_stop / ds_stop,
        "dV_dfund_cont": dV_cont / dfund_cont, "dV_dfund_stop": dV_stop / dfund_stop,
    }
    return SmoothFitReport(psi_sf, scale_sf, classic_sf, result.atom_mass_k, derivs)


def _match(a: float, b: float, rel: float = 1e-4) -> bool:
    scale = max(abs(a), abs(b), 1e-12)
    return abs(a - b) <= rel * scale


def _one_sided(f: Callable[[float], float], x: float, direction: int) -> float:
    """One-sided derivative by shrinking steps with Richardson extrapolation."""
    base = 1e-3 * max(1.0, abs(x))
    f0 = f(x)
    ests = []
    for k in range(4):
        h = base / 4.0 ** k
        d1 = (f(x + direction * h) - f0) / (direction * h)
        d2 = (f(x + direction * h / 2.0) - f0) / (direction * h / 2.0)
        ests.append(2.0 * d2 - d1)
    return ests[-1]


def sufficient_b_scan(spec: ProcessSpec, bundle: RewardBundle,
                      tol: Tolerances = DEFAULT_TOL) -> float:
    """Threshold as inf{x : b(x) >= 0} with b(x) the psi-weighted head integral.

    Requires the measure sigma(dx) to be single-crossing: nonpositive (with
    some negative mass, density or atom) up to a point c and nonnegative
    beyond it; b is then decreasing before c and increasing after, so a scan
    plus bisection locates inf{b >= 0}.
    """
    mu = sigma_measure(spec, bundle)
    st = spec.state
    lo, hi = _default_window(spec)
    xs = _drop_kinks(np.linspace(lo, hi, 400), bundle.kinks)

    marks = [(float(x), float(s)) for x, s in zip(xs, np.sign(mu.density_array(xs)))]
    marks += [(p, math.copysign(1.0, m)) for p, m in mu.atoms if m != 0.0]
    marks.sort()
    signed = [(x, s) for x, s in marks if s != 0.0]
    if not any(s < 0 for _, s in signed):
        return float(st.left)  # nothing to wait out: stop everywhere
    last_neg = max(x for x, s in signed if s < 0)
    first_pos = min((x for x, s in signed if s > 0), default=math.inf)
    if first_pos < last_neg - 10 * tol.root_abs:
        raise NotSingleCrossing("sigma is not single-crossing on the scan window")

    c = last_neg

    def b(x):
        return integrate(spec.psi, mu, StateInterval(st.left, x, st.left_closed, False), tol)

    c_plus = c + max(tol.root_abs, 1e-9 * max(1.0, abs(c)))
    if b(c_plus) >= 0.0:
        # the head integral is already balanced at the crossing point
        return float(c) if b(c) < 0.0 else float(st.left)
    x1 = c_plus
    step = max(0.25, 0.25 * abs(c))
    for _ in range(60):
        x2 = x1 + step
        if b(x2) >= 0.0:
            return find_root(b, (x1, x2), tol)
        x1 = x2
        step *= 2.0
    raise NonConvergent("b(x) never reached zero")


# ---------------------------------------------------------------------------


def _default_window(spec: ProcessSpec, width: float = 10.0) -> tuple[float, float]:
    st = spec.state
    lo = st.left if math.isfinite(st.left) else -width
    hi = st.right if math.isfinite(st.right) else width
    if math.isfinite(st.left) and not st.left_closed:
        lo = st.left + 1e-9 * max(1.0, abs(st.left)) + 1e-12
    if math.isfinite(st.left) and math.isinf(st.right):
        hi = max(lo + width, width)
    return float(lo), float(hi)


def _insert_points(xs: np.ndarray, points: Sequence[float], lo: float, hi: float) -> np.ndarray:
    extra = [p for p in points if lo < p < hi]
    if not extra:
        return xs
    return np.unique(np.concatenate([xs, np.asarray(extra, dtype=float)]))


def _drop_kinks(xs: np.ndarray, kinks: Sequence[float]) -> np.ndarray:
    if not len(kinks):
        return xs
    keep = np.ones(len(xs), dtype=bool)
    for k in kinks:
        keep &= np.abs(xs - k) > 1e-12 * max(1.0, abs(k))
    return xs[keep]
