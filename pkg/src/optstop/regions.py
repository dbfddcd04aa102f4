"""General (multi-interval) continuation regions.

The pipeline follows the expansion-and-merge construction: locate the set
where the representing measure is negative, grow each component into an
expansion pair (J, Jbar) whose phi- and psi-integrals vanish at finite
endpoints, merge overlapping outers by re-expanding their inner hull, and
assemble the piecewise value function phi/psi coefficients per continuation
interval. A two-sided Newton solver handles the classic two-threshold case
directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (DEFAULT_TOL, RegionSet, SignedMeasure, StateInterval,
                   Tolerances, find_root, integrate)
from .diffusion import ProcessSpec, RewardBundle, sigma_measure
from .errors import (MajorantViolated, NonConvergent, NonTermination,
                     PreconditionFailed, UnresolvedSign)

__all__ = [
    "ExpansionPair",
    "Solution",
    "negative_set",
    "expand_interval",
    "merge_regions",
    "solve_general",
    "solve_two_sided",
]


@dataclass(frozen=True)
class ExpansionPair:
    """Inner interval J and its expansion Jbar, with the certificate integrals."""

    inner: StateInterval
    outer: StateInterval
    int_phi: float
    int_psi: float


@dataclass(frozen=True)
class Solution:
    """Stopping/continuation split plus the piecewise value representation.

    ``pieces[i] = (k1, k2)`` gives V = k1*phi + k2*psi on the i-th
    continuation interval; V = g on the stopping region.
    """

    spec: ProcessSpec
    bundle: RewardBundle
    continuation: RegionSet
    stopping: RegionSet
    pieces: tuple[tuple[float, float], ...]

    def value(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        out = np.asarray(self.bundle.g(xs), dtype=float).copy()
        if out.ndim == 0:
            out = out.reshape(1)
            xs = xs.reshape(1)
        for iv, (k1, k2) in zip(self.continuation.intervals, self.pieces):
            mask = iv.contains_array(xs)
            if np.any(mask):
                out[mask] = k1 * np.asarray(self.spec.phi(xs[mask]), dtype=float) \
                    + k2 * np.asarray(self.spec.psi(xs[mask]), dtype=float)
        return out

    def value_at(self, x: float) -> float:
        return float(self.value(np.array([x]))[0])


# ---------------------------------------------------------------------------
# negative set


def negative_set(spec: ProcessSpec, bundle: RewardBundle,
                 scan_grid: np.ndarray | Sequence[float],
                 tol: Tolerances = DEFAULT_TOL) -> RegionSet:
    """Components of {x : sigma(dx) < 0}, endpoints refined by bisection.

    Negative atoms of the generalized measure enter as degenerate seeds of
    width 2*grid_step around the atom, ready for expansion. The scan is
    re-run at double resolution; if the component structure moves by more
    than a grid step the grid was too coarse.
    """
    mu = sigma_measure(spec, bundle)
    grid = np.asarray(scan_grid, dtype=float)
    coarse = _negative_components(spec, bundle, mu, grid, tol)
    fine_grid = np.unique(np.concatenate([grid, 0.5 * (grid[:-1] + grid[1:])]))
    fine = _negative_components(spec, bundle, mu, fine_grid, tol)
    if len(coarse) != len(fine):
        raise UnresolvedSign("sign scan unstable under refinement; use a finer grid")
    for a, b in zip(coarse, fine):
        if abs(a.left - b.left) > tol.grid_step or abs(a.right - b.right) > tol.grid_step:
            raise UnresolvedSign("component endpoints moved under refinement")

    seeds = [iv for iv in fine]
    eps = tol.grid_step
    for p, mass in mu.atoms:
        if mass < 0.0 and not any(iv.contains(p) for iv in seeds):
            seeds.append(StateInterval(p - eps, p + eps))
    seeds.sort(key=lambda iv: iv.left)
    merged: list[StateInterval] = []
    for iv in seeds:
        if merged and iv.left <= merged[-1].right:
            last = merged[-1]
            merged[-1] = StateInterval(last.left, max(last.right, iv.right))
        else:
            merged.append(iv)
    return RegionSet(tuple(merged))


def _negative_components(spec, bundle, mu, grid, tol) -> list[StateInterval]:
    dens = mu.density_array(grid)
    dens = np.where(np.isfinite(dens), dens, 0.0)
    neg = dens < 0.0
    comps: list[StateInterval] = []
    i = 0
    n = len(grid)

    def refine(a, b):
        f = lambda t: float(mu.density(t))
        return find_root(f, (a, b), tol)

    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        left = spec.state.left if i == 0 else refine(float(grid[i - 1]), float(grid[i]))
        right = spec.state.right if j == n - 1 else refine(float(grid[j]), float(grid[j + 1]))
        comps.append(StateInterval(left, right))
        i = j + 1
    return comps


# ---------------------------------------------------------------------------
# expansion


def _sigma_J(mu: SignedMeasure, J: StateInterval) -> SignedMeasure:
    """sigma restricted per the expansion rule: full inside J, positive part outside."""

    def density(y):
        y = np.asarray(y, dtype=float)
        d = mu.density_array(y)
        inside = J.contains_array(y)
        return np.where(inside | (d > 0.0), d, 0.0)

    atoms = tuple((p, m) for (p, m) in mu.atoms if J.contains(p) or m > 0.0)
    bps = tuple(mu.breakpoints) + tuple(
        b for b in (J.left, J.right) if math.isfinite(b))
    return SignedMeasure(mu.support, density, atoms, bps)


def expand_interval(spec: ProcessSpec, bundle: RewardBundle, J: StateInterval,
                    tol: Tolerances = DEFAULT_TOL,
                    check_green: bool = True) -> ExpansionPair:
    """Grow J into Jbar by the alternating zero-integral iteration.

    Alternately pushes the left endpoint until the phi-integral of sigma_J
    over the current interval vanishes, then the right endpoint until the
    psi-integral vanishes; endpoints clamp at the state boundary, where the
    corresponding condition is waived. Terminates when a full sweep moves
    both endpoints by less than root_abs twice in a row.
    """
    mu = sigma_measure(spec, bundle)
    muJ = _sigma_J(mu, J)
    st = spec.state

    int_phi = _signed_integral(spec.phi, muJ, J, tol)
    int_psi = _signed_integral(spec.psi, muJ, J, tol)
    slack = 1e-9 * (1.0 + min(abs(int_phi), 1e300) + min(abs(int_psi), 1e300))
    if int_phi > slack or int_psi > slack:
        raise PreconditionFailed(
            f"interval {J} has positive phi/psi integrals ({int_phi:.3g}, {int_psi:.3g})")

    x, y = J.left, J.right
    prev_y = y
    for sweep in range(120):
        newx = x if x <= st.left else _solve_left(spec, muJ, x, y, J.left, st.left, tol)
        newy = y if y >= st.right else _solve_right(spec, muJ, newx, y, J.right, st.right, tol)
        # the right endpoint never retreats; the left one may pull back
        # toward J.left after its first outward jump
        if sweep > 0 and newy < prev_y - tol.root_abs:
            raise NonConvergent("expansion lost monotonicity")
        moved = _movement(newx, x) + _movement(newy, y)
        x, y, prev_y = newx, newy, newy
        if moved <= tol.root_abs:
            break
    else:
        raise NonConvergent(f"expansion of {J} did not stabilise")

    outer = StateInterval(x, y)
    ip = _signed_integral(spec.phi, muJ, outer, tol)
    iq = _signed_integral(spec.psi, muJ, outer, tol)
    if check_green:
        _check_green_condition(spec, muJ, outer, tol)
    return ExpansionPair(J, outer, ip, iq)


def _signed_integral(weight, muJ, window, tol):
    """Integral that may diverge to -inf against an exploding weight.

    A divergent integral with an eventually-nonpositive integrand is -inf
    (fine wherever only '<= 0' matters); eventually-positive divergence is a
    real error and re-raises.
    """
    try:
        return integrate(weight, muJ, window, tol)
    except NonConvergent:
        lo, hi = window.left, window.right
        if math.isinf(hi):
            probes = [max(1.0, abs(lo) if math.isfinite(lo) else 1.0) * 2.0 ** k
                      for k in range(4, 10)]
        else:
            probes = [-max(1.0, abs(hi)) * 2.0 ** k for k in range(4, 10)]
        with np.errstate(over="ignore", invalid="ignore"):
            vals = [float(weight(p)) * float(muJ.density(p)) for p in probes]
        if all(v <= 0.0 or v == -math.inf for v in vals if not math.isnan(v)):
            return -math.inf
        raise


def _movement(a, b):
    if a == b:
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return abs(a - b)


def _solve_left(spec, muJ, x, y, a_cap, ell, tol) -> float:
    """Left endpoint solving int_{(t, y)} phi dsigma_J = 0 within [ell, a_cap].

    The integral is non-increasing in t (mass outside J is nonnegative), so
    the zero is bracketed by walking outward or pulled back toward a_cap.
    Clamps at ell when the mass toward the boundary never balances; the
    condition is waived there.
    """
    def h(t):
        if t == y:
            return 0.0
        return integrate(spec.phi, muJ, StateInterval(t, y), tol)

    hx = h(x)
    if abs(hx) <= _ztol(hx, tol):
        return x
    if hx > 0.0:
        # too much mass added on the left: pull back toward a_cap
        if x >= a_cap:
            raise NonConvergent("left endpoint cannot retreat past the inner interval")
        h_cap = h(a_cap)
        if h_cap > 0.0:
            return a_cap
        return find_root(h, (x, a_cap), tol)
    # extend outward (h < 0): walk toward ell doubling the step
    step = max(1.0, 0.25 * abs(x)) if math.isfinite(x) else 1.0
    t_prev, f_prev = x, hx
    t = x - step
    for _ in range(70):
        if t <= ell:
            if math.isfinite(ell):
                f_ell = h(ell + _edge(ell))
                if f_ell >= 0.0:
                    return find_root(h, (ell + _edge(ell), t_prev), tol)
            return ell
        f = h(t)
        if f >= 0.0:
            return find_root(h, (t, t_prev), tol)
        if abs(f - f_prev) <= 1e-14 * (1.0 + abs(f)) and _no_mass_toward(
                spec.phi, muJ, t, -1, ell, tol):
            return ell
        t_prev, f_prev = t, f
        step *= 2.0
        t = t - step
    raise NonConvergent("left extension did not terminate")


def _solve_right(spec, muJ, x, y, b_cap, r, tol) -> float:
    """Right endpoint solving int_{(x, t)} psi dsigma_J = 0 within [b_cap, r]."""
    def h(t):
        if t == x:
            return 0.0
        return integrate(spec.psi, muJ, StateInterval(x, t), tol)

    hy = h(y)
    if abs(hy) <= _ztol(hy, tol):
        return y
    if hy > 0.0:
        if y <= b_cap:
            raise NonConvergent("right endpoint cannot retreat past the inner interval")
        h_cap = h(b_cap)
        if h_cap > 0.0:
            return b_cap
        return find_root(h, (b_cap, y), tol)
    step = max(1.0, 0.25 * abs(y)) if math.isfinite(y) else 1.0
    t_prev, g_prev = y, hy
    t = y + step
    for _ in range(70):
        if t >= r:
            if math.isfinite(r):
                g_r = h(r - _edge(r))
                if g_r >= 0.0:
                    return find_root(h, (t_prev, r - _edge(r)), tol)
            return r
        g = h(t)
        if g >= 0.0:
            return find_root(h, (t_prev, t), tol)
        if abs(g - g_prev) <= 1e-14 * (1.0 + abs(g)) and _no_mass_toward(
                spec.psi, muJ, t, +1, r, tol):
            return r
        t_prev, g_prev = t, g
        step *= 2.0
        t = t + step
    raise NonConvergent("right extension did not terminate")


def _ztol(value, tol):
    return 1e-12 * (1.0 + abs(value))


def _edge(endpoint):
    return 1e-9 * max(1.0, abs(endpoint))


def _no_mass_toward(weight, mu, t, direction, endpoint, tol) -> bool:
    """True when the weighted measure beyond t is negligible (clamp condition)."""
    probe_end = endpoint if math.isfinite(endpoint) else t + direction * 1e6
    lo, hi = (probe_end, t) if direction < 0 else (t, probe_end)
    try:
        rest = integrate(weight, mu, StateInterval(lo, hi), tol)
    except NonConvergent:
        return False
    return abs(rest) < 1e-12


def _check_green_condition(spec, muJ, outer, tol, n: int = 7):
    """Condition (iv): the Green-weighted integral of sigma_J is <= 0 on Jbar."""
    lo = outer.left if math.isfinite(outer.left) else min(-8.0, outer.right - 8.0)
    hi = outer.right if math.isfinite(outer.right) else max(8.0, outer.left + 8.0)
    lo += _edge(lo)
    hi -= _edge(hi)
    for x in np.linspace(lo, hi, n):
        def kern(y, x=float(x)):
            y = np.asarray(y, dtype=float)
            return np.where(y <= x, spec.psi(y) * spec.phi(x), spec.psi(x) * spec.phi(y)) / spec.wronskian
        val = integrate(kern, muJ, outer, tol, extra_breakpoints=(float(x),))
        if val > 1e-7 * (1.0 + abs(val)):
            raise PreconditionFailed(
                f"Green-kernel condition fails at x={x:.6g} on {outer} (value {val:.3g})")


# ---------------------------------------------------------------------------
# merge


def merge_regions(spec: ProcessSpec, bundle: RewardBundle,
                  pairs: list[ExpansionPair],
                  tol: Tolerances = DEFAULT_TOL) -> list[ExpansionPair]:
    """Iterative step: absorb outers that reach the boundary, merge overlaps.

    Every merge re-runs the expansion on the inner hull of the offending
    pairs, exactly as in the construction; the result is a pairwise-disjoint
    family (possibly a single whole-space pair, or empty).
    """
    st = spec.state
    pairs = sorted(pairs, key=lambda p: p.inner.left)
    guard = 4 * max(4, len(pairs))
    for _ in range(guard):
        if not pairs:
            return []
        if any(p.outer.left <= st.left and p.outer.right >= st.right for p in pairs):
            hull = StateInterval(st.left, st.right)
            keep = ExpansionPair(hull, hull, 0.0, 0.0)
            return [keep]

        j_ell = next((j for j in range(1, len(pairs)) if pairs[j].outer.left <= st.left), None)
        if j_ell is not None:
            inner = StateInterval(st.left, pairs[j_ell].inner.right)
            merged = expand_interval(spec, bundle, inner, tol, check_green=False)
            pairs = [merged] + pairs[j_ell + 1:]
            continue

        j_r = next((j for j in range(len(pairs) - 1) if pairs[j].outer.right >= st.right), None)
        if j_r is not None:
            inner = StateInterval(pairs[j_r].inner.left, st.right)
            merged = expand_interval(spec, bundle, inner, tol, check_green=False)
            pairs = pairs[:j_r] + [merged]
            continue

        overlap = next(
            (j for j in range(len(pairs) - 1)
             if pairs[j].outer.right >= pairs[j + 1].outer.left), None)
        if overlap is None:
            return pairs
        j = overlap
        inner = StateInterval(pairs[j].inner.left, pairs[j + 1].inner.right)
        merged = expand_interval(spec, bundle, inner, tol, check_green=False)
        pairs = pairs[:j] + [merged] + pairs[j + 2:]
    raise NonTermination("merge loop exceeded its iteration guard")


# ---------------------------------------------------------------------------
# full pipeline


def piece_coefficients(spec: ProcessSpec, bundle: RewardBundle,
                       iv: StateInterval) -> tuple[float, float]:
    """k1 (phi) and k2 (psi) coefficients on a continuation interval."""
    st = spec.state
    a, b = iv.left, iv.right
    at_ell = a <= st.left
    at_r = b >= st.right
    if at_ell and at_r:
        return 0.0, 0.0
    if at_ell:
        return 0.0, float(bundle.g(b)) / float(spec.psi(b))
    if at_r:
        return float(bundle.g(a)) / float(spec.phi(a)), 0.0
    pa, pb = float(spec.psi(a)), float(spec.psi(b))
    fa, fb = float(spec.phi(a)), float(spec.phi(b))
    ga, gb = float(bundle.g(a)), float(bundle.g(b))
    den = pa * fb - pb * fa
    k1 = (gb * pa - ga * pb) / den
    k2 = (ga * fb - gb * fa) / den
    return k1, k2


def solve_general(spec: ProcessSpec, bundle: RewardBundle,
                  scan_grid: np.ndarray | Sequence[float] | None = None,
                  tol: Tolerances = DEFAULT_TOL,
                  check_green: bool = False) -> Solution:
    """Full pipeline: negative set, expansion, merge, value assembly.

    The final solution is checked for continuity at every finite boundary
    and for the majorant property V >= g on a grid; a violation means the
    region is wrong and raises MajorantViolated.
    """
    if scan_grid is None:
        lo, hi = _window(spec)
        scan_grid = np.linspace(lo, hi, 2001)
    seeds = negative_set(spec, bundle, scan_grid, tol)
    st = spec.state
    if seeds.empty:
        return Solution(spec, bundle, RegionSet(()),
                        RegionSet((st,)), ())
    pairs = [expand_interval(spec, bundle, J, tol, check_green=check_green)
             for J in seeds.intervals]
    merged = merge_regions(spec, bundle, pairs, tol)
    outers = [p.outer for p in merged]
    cont = RegionSet(tuple(StateInterval(iv.left, iv.right) for iv in outers))
    stop = cont.complement(st)
    pieces = tuple(piece_coefficients(spec, bundle, iv) for iv in cont.intervals)
    sol = Solution(spec, bundle, cont, stop, pieces)
    _validate_solution(sol, tol)
    return sol


def _validate_solution(sol: Solution, tol: Tolerances, n: int = 1000):
    spec, bundle = sol.spec, sol.bundle
    for iv, (k1, k2) in zip(sol.continuation.intervals, sol.pieces):
        for b in (iv.left, iv.right):
            if math.isfinite(b):
                v = k1 * float(spec.phi(b)) + k2 * float(spec.psi(b))
                if abs(v - float(bundle.g(b))) > 1e-6 * max(1.0, abs(float(bundle.g(b)))):
                    raise MajorantViolated(
                        f"value not continuous at boundary {b:.8g}: V={v:.8g} g={float(bundle.g(b)):.8g}")
    lo, hi = _window(spec)
    xs = np.linspace(lo, hi, n)
    gap = sol.value(xs) - np.asarray(bundle.g(xs), dtype=float)
    scale = max(1.0, float(np.max(np.abs(np.asarray(bundle.g(xs), dtype=float)))))
    if float(np.min(gap)) < -1e-6 * scale:
        i = int(np.argmin(gap))
        raise MajorantViolated(f"V < g at x={xs[i]:.6g} (gap {gap[i]:.3g})")


def _window(spec: ProcessSpec, width: float = 10.0) -> tuple[float, float]:
    st = spec.state
    lo = st.left if math.isfinite(st.left) else -width
    hi = st.right if math.isfinite(st.right) else width
    if math.isfinite(st.left):
        lo = st.left + 1e-6 * max(1.0, abs(st.left))
        if math.isinf(st.right):
            hi = max(width, lo + width)
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# two-sided solver


def solve_two_sided(spec: ProcessSpec, bundle: RewardBundle,
                    init: tuple[float, float],
                    tol: Tolerances = DEFAULT_TOL) -> Solution:
    """Two thresholds from the 2x2 value-matching system by damped Newton.

    k_ell and k_r are the psi-weighted head and phi-weighted tail integrals
    of sigma (atoms included); the residuals impose V = g at both candidate
    boundaries. Falls back to alternating coordinate bisection when the
    finite-difference Jacobian degenerates.
    """
    mu = sigma_measure(spec, bundle)
    st = spec.state
    w = spec.wronskian

    def k_ell(xl):
        return integrate(spec.psi, mu, StateInterval(st.left, xl, st.left_closed, False), tol) / w

    def k_r(xr):
        return integrate(spec.phi, mu, StateInterval(xr, st.right, False, st.right_closed), tol) / w

    def residuals(xl, xr):
        kl, kr = k_ell(xl), k_r(xr)
        r1 = kl * float(spec.phi(xl)) + kr * float(spec.psi(xl)) - float(bundle.g(xl))
        r2 = kl * float(spec.phi(xr)) + kr * float(spec.psi(xr)) - float(bundle.g(xr))
        return np.array([r1, r2]), kl, kr

    xl, xr = float(init[0]), float(init[1])
    if not xl < xr:
        raise ValueError("init must satisfy x_l < x_r")
    r, kl, kr = residuals(xl, xr)
    fd = 1e-6
    for _ in range(60):
        if float(np.max(np.abs(r))) < 1e-11 * (1.0 + abs(float(bundle.g(xl)))):
            break
        J = np.empty((2, 2))
        J[:, 0] = (residuals(xl + fd, xr)[0] - r) / fd
        J[:, 1] = (residuals(xl, xr + fd)[0] - r) / fd
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if abs(det) < 1e-14 * (1.0 + float(np.sum(np.abs(J)))):
            xl, xr = _coordinate_fallback(residuals, xl, xr, tol)
            r, kl, kr = residuals(xl, xr)
            continue
        dx = np.linalg.solve(J, -r)
        lam = 1.0
        norm0 = float(np.linalg.norm(r))
        for _ in range(10):
            xl_n, xr_n = xl + lam * dx[0], xr + lam * dx[1]
            if xl_n < xr_n and st.left < xl_n and xr_n < st.right:
                r_n, kl, kr = residuals(xl_n, xr_n)
                if float(np.linalg.norm(r_n)) < norm0:
                    xl, xr, r = xl_n, xr_n, r_n
                    break
            lam *= 0.5
        else:
            raise NonConvergent("damped Newton stalled on the two-sided system")
    else:
        raise NonConvergent("two-sided system did not converge")

    cont = RegionSet((StateInterval(xl, xr),))
    stop = cont.complement(st)
    sol = Solution(spec, bundle, cont, stop, ((kl, kr),))
    xs = np.linspace(xl, xr, 400)[1:-1]
    gap = sol.value(xs) - np.asarray(bundle.g(xs), dtype=float)
    if float(np.min(gap)) < -1e-7 * max(1.0, abs(float(bundle.g(xl)))):
        i = int(np.argmin(gap))
        raise MajorantViolated(f"V < g inside ({xl:.6g}, {xr:.6g}) at x={xs[i]:.6g}")
    return sol


def _coordinate_fallback(residuals, xl, xr, tol):
    """Alternate brentq sweeps on each residual holding the other coordinate."""
    for _ in range(8):
        f1 = lambda t: residuals(t, xr)[0][0]
        try:
            xl = find_root(f1, (xl - 2.0, min(xr - 1e-9, xl + 2.0)), tol)
        except Exception:
            pass
        f2 = lambda t: residuals(xl, t)[0][1]
        try:
            xr = find_root(f2, (max(xl + 1e-9, xr - 2.0), xr + 2.0), tol)
        except Exception:
            pass
    return xl, xr
