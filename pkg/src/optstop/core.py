"""Foundational numeric types: intervals, regions, signed measures, quadrature,
bracketed root-finding.

Everything here is immutable and purely functional; the solver layers above
funnel every integral and scalar equation through :func:`integrate` and
:func:`find_root`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate as _sciint
from scipy import optimize as _sciopt

from .errors import NonConvergent, NoSignChange

__all__ = [
    "StateInterval",
    "RegionSet",
    "SignedMeasure",
    "Tolerances",
    "integrate",
    "find_root",
    "whole_line",
]

_INF = math.inf


@dataclass(frozen=True)
class Tolerances:
    """Numeric tolerances shared across the solvers.

    grid_step is example-dependent (scan resolution for sign searches and
    inequality-threshold scans); the others rarely need changing.
    """

    root_abs: float = 1e-10
    quad_rel: float = 1e-9
    tail_cutoff: float = 1e-12
    grid_step: float = 1e-3

    def __post_init__(self):
        for name in ("root_abs", "quad_rel", "tail_cutoff", "grid_step"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class StateInterval:
    """An interval of the real line with open/closed endpoint flags.

    Infinite endpoints are always open; ``left < right`` strictly.
    """

    left: float
    right: float
    left_closed: bool = False
    right_closed: bool = False

    def __post_init__(self):
        if not self.left < self.right:
            raise ValueError(f"need left < right, got [{self.left}, {self.right}]")
        if math.isinf(self.left) and self.left_closed:
            raise ValueError("infinite left endpoint cannot be closed")
        if math.isinf(self.right) and self.right_closed:
            raise ValueError("infinite right endpoint cannot be closed")

    def contains(self, x: float) -> bool:
        if x < self.left or x > self.right:
            return False
        if x == self.left:
            return self.left_closed
        if x == self.right:
            return self.right_closed
        return True

    def contains_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs)
        inside = (xs > self.left) & (xs < self.right)
        if self.left_closed:
            inside |= xs == self.left
        if self.right_closed:
            inside |= xs == self.right
        return inside

    def intersect(self, other: "StateInterval") -> "StateInterval | None":
        lo = max(self.left, other.left)
        hi = min(self.right, other.right)
        if lo > hi:
            return None
        lo_closed = (self.contains(lo) and other.contains(lo))
        hi_closed = (self.contains(hi) and other.contains(hi))
        if lo == hi:
            return None  # degenerate overlap carries no length
        return StateInterval(lo, hi, lo_closed, hi_closed)

    def is_finite(self) -> bool:
        return math.isfinite(self.left) and math.isfinite(self.right)

    def __str__(self):
        lb = "[" if self.left_closed else "("
        rb = "]" if self.right_closed else ")"
        return f"{lb}{self.left:g}, {self.right:g}{rb}"


def whole_line() -> StateInterval:
    return StateInterval(-_INF, _INF)


@dataclass(frozen=True)
class RegionSet:
    """A finite disjoint union of intervals, sorted by left endpoint."""

    intervals: tuple[StateInterval, ...] = ()

    def __post_init__(self):
        ivs = tuple(self.intervals)
        object.__setattr__(self, "intervals", ivs)
        for a, b in zip(ivs, ivs[1:]):
            if not (a.left <= b.left):
                raise ValueError("intervals must be sorted by left endpoint")
            if b.left < a.right or (b.left == a.right and a.right_closed and b.left_closed):
                raise ValueError(f"intervals overlap: {a} and {b}")

    @property
    def empty(self) -> bool:
        return len(self.intervals) == 0

    def contains(self, x: float) -> bool:
        return any(iv.contains(x) for iv in self.intervals)

    def contains_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs)
        out = np.zeros(xs.shape, dtype=bool)
        for iv in self.intervals:
            out |= iv.contains_array(xs)
        return out

    def complement(self, ambient: StateInterval) -> "RegionSet":
        """Complement within ``ambient``, again a RegionSet.

        Closure flags flip: the complement picks up every boundary point the
        region leaves open (and vice versa).
        """
        pieces: list[StateInterval] = []
        cursor = ambient.left
        cursor_closed = ambient.left_closed
        for iv in self.intervals:
            clipped = iv.intersect(ambient)
            if clipped is None:
                continue
            if cursor < clipped.left or (
                cursor == clipped.left and cursor_closed and not clipped.left_closed
            ):
                if cursor < clipped.left:
                    pieces.append(
                        StateInterval(cursor, clipped.left, cursor_closed, not clipped.left_closed)
                    )
            cursor = clipped.right
            cursor_closed = not clipped.right_closed
        if cursor < ambient.right:
            pieces.append(StateInterval(cursor, ambient.right, cursor_closed, ambient.right_closed))
        return RegionSet(tuple(pieces))

    def __str__(self):
        if self.empty:
            return "{}"
        return " U ".join(str(iv) for iv in self.intervals)


@dataclass(frozen=True)
class SignedMeasure:
    """Density plus finitely many weighted atoms on a support interval.

    ``breakpoints`` lists abscissae where the density is allowed to kink or
    jump; the quadrature splits panels there.
    """

    support: StateInterval
    density: Callable[[float], float]
    atoms: tuple[tuple[float, float], ...] = ()
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        locs = [a[0] for a in self.atoms]
        if len(set(locs)) != len(locs):
            raise ValueError("atom locations must be pairwise distinct")
        for loc in locs:
            if not self.support.contains(loc):
                raise ValueError(f"atom at {loc} outside support {self.support}")

    def atoms_in(self, J: StateInterval) -> list[tuple[float, float]]:
        return [(p, m) for (p, m) in self.atoms if J.contains(p)]

    def density_array(self, xs: np.ndarray) -> np.ndarray:
        return np.asarray(self.density(np.asarray(xs, dtype=float)), dtype=float)


def lebesgue(weight: float = 1.0, support: StateInterval | None = None) -> SignedMeasure:
    """Constant-density measure, mostly for tests."""
    return SignedMeasure(support or whole_line(), lambda y: weight * np.ones_like(np.asarray(y, dtype=float)))


def stable_product(a, b):
    """a * b with overflow-times-dead-factor resolved to zero.

    Product densities like (alpha-L)g * speed can pair an overflowing factor
    with an underflowed or zero one; the true product is dead there.
    """
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = a * b
        bad = ~np.isfinite(out)
        if np.any(bad):
            dead = bad & ((a == 0.0) | (b == 0.0)
                          | (np.isfinite(a) & (np.abs(a) < 1e-200))
                          | (np.isfinite(b) & (np.abs(b) < 1e-200)))
            out = np.where(dead, 0.0, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# quadrature


def _truncate_tail(fn: Callable[[float], float], anchor: float, direction: int,
                   tol: Tolerances) -> float:
    """Truncation abscissa: first point past the ladder maximum where |fn|
    stays below tail_cutoff times that maximum.

    Probes a geometric ladder away from ``anchor`` (direction +1 toward +inf,
    -1 toward -inf); a flat-zero start does not fool the cutoff because the
    maximum is taken over the whole ladder.
    """
    step = max(1.0, 0.1 * abs(anchor))
    t = anchor
    fmax = 0.0
    quiet = 0
    for _ in range(64):
        t = t + direction * step
        with np.errstate(over="ignore", invalid="ignore"):
            v = abs(fn(t))
        if not math.isfinite(v):
            if quiet >= 1:
                return t - direction * step  # factor overflow in a dead region
            raise NonConvergent("integrand blows up toward the improper endpoint")
        fmax = max(fmax, v)
        if fmax > 0.0 and v <= tol.tail_cutoff * fmax:
            quiet += 1
            if quiet >= 3:
                return t
        else:
            quiet = 0
        step *= 1.7
        if abs(t) > 3e13:
            if fmax == 0.0:
                # ladder saw no mass; keep a modest window so panel
                # quadrature can still pick up support near the anchor
                return anchor + direction * 8.0 * max(1.0, abs(anchor))
            break
    raise NonConvergent("integrand does not decay toward the improper endpoint")


def _quad(fn, lo, hi, tol: Tolerances, points=None) -> float:
    if hi <= lo:
        return 0.0
    pts = None
    if points:
        pts = sorted(p for p in points if lo < p < hi)
        if not pts:
            pts = None
    with warnings.catch_warnings():
        warnings.simplefilter("error", _sciint.IntegrationWarning)
        try:
            val, _ = _sciint.quad(fn, lo, hi, epsrel=tol.quad_rel, epsabs=1e-13,
                                  limit=300, points=pts)
        except _sciint.IntegrationWarning:
            # one retry with a subdivided range before giving up
            try:
                mids = np.linspace(lo, hi, 9)
                val = 0.0
                warnings.simplefilter("ignore", _sciint.IntegrationWarning)
                for a, b in zip(mids[:-1], mids[1:]):
                    v, _ = _sciint.quad(fn, a, b, epsrel=tol.quad_rel,
                                        epsabs=1e-13, limit=300)
                    val += v
            except Exception as exc:  # pragma: no cover - defensive
                raise NonConvergent(f"quadrature failed on ({lo}, {hi})") from exc
    if not math.isfinite(val):
        raise NonConvergent(f"non-finite integral on ({lo}, {hi})")
    return val


def integrate(f: Callable, mu: SignedMeasure, J: StateInterval,
              tol: Tolerances = DEFAULT_TOL,
              extra_breakpoints: Iterable[float] = ()) -> float:
    """Integral of ``f`` against ``mu`` over ``J``.

    Density part by adaptive panel quadrature with tail truncation for
    improper endpoints; atoms by exact summation (endpoint open/closed flags
    decide atom inclusion, and carry no weight otherwise).
    """
    window = J.intersect(mu.support)
    if window is None:
        return 0.0

    def integrand(y):
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            d = mu.density(y)
            if np.ndim(d) == 0:
                # quad probes scalars; never evaluate f where the measure is dead
                if d == 0.0:
                    return 0.0
                fv = f(y)
                out = fv * d
                if not math.isfinite(out):
                    # one factor vanishingly small against the other's overflow:
                    # the true product is dead, not divergent
                    if (math.isfinite(fv) and abs(fv) < 1e-200) or (
                            math.isfinite(d) and abs(d) < 1e-200):
                        return 0.0
                return out
            d = np.asarray(d, dtype=float)
            out = np.zeros_like(d)
            mask = d != 0.0
            if np.any(mask):
                fv = np.asarray(f(np.asarray(y)[mask]), dtype=float)
                prod = fv * d[mask]
                dead = ~np.isfinite(prod) & (
                    (np.isfinite(fv) & (np.abs(fv) < 1e-200))
                    | (np.isfinite(d[mask]) & (np.abs(d[mask]) < 1e-200)))
                prod[dead] = 0.0
                out[mask] = prod
        return out

    lo, hi = window.left, window.right
    lo_truncated = hi_truncated = False
    if math.isinf(lo):
        anchor = min(0.0, hi) if math.isfinite(hi) else 0.0
        lo = _truncate_tail(integrand, anchor, -1, tol)
        lo_truncated = True
    if math.isinf(hi):
        anchor = max(0.0, window.left) if math.isfinite(window.left) else 0.0
        hi = _truncate_tail(integrand, anchor, +1, tol)
        hi_truncated = True

    points = list(mu.breakpoints) + list(extra_breakpoints)
    total = 0.0
    for a, b in _segments(lo, hi):
        total += _quad(integrand, a, b, tol, points=points)
    # slowly decaying tails: extend until the segment mass itself is negligible
    if hi_truncated:
        total += _tail_extension(integrand, hi, +1, total, tol)
    if lo_truncated:
        total += _tail_extension(integrand, lo, -1, total, tol)
    for p, mass in mu.atoms_in(window):
        total += f(p) * mass
    return total


def _tail_extension(fn, edge: float, direction: int, running: float,
                    tol: Tolerances) -> float:
    """Geometric continuation past the truncation point for power-law tails.

    Exponentially dead tails show up as non-representable or zero probes and
    end the extension immediately.
    """
    extra = 0.0
    t = edge
    width = max(abs(edge), 1.0)
    for _ in range(40):
        t2 = t + direction * width * 15.0
        with np.errstate(over="ignore", invalid="ignore"):
            probes = (fn(t + direction * width), fn(0.5 * (t + t2)), fn(t2))
        if not all(math.isfinite(v) for v in probes):
            return extra
        if all(v == 0.0 for v in probes):
            return extra
        a, b = (t, t2) if direction > 0 else (t2, t)
        seg = _quad(fn, a, b, tol)
        extra += seg
        if abs(seg) <= max(1e-13, 0.1 * tol.quad_rel * abs(running + extra)):
            return extra
        t = t2
        width *= 16.0
    raise NonConvergent("tail extension did not converge")


def _segments(lo: float, hi: float, ratio: float = 16.0) -> list[tuple[float, float]]:
    """Split a very wide range into geometric panels (kind to power-law tails)."""
    if hi - lo <= 1e4 * max(1.0, min(abs(lo), abs(hi))):
        return [(lo, hi)]
    pts = {lo, hi}
    if lo < 0.0 < hi:
        pts.add(0.0)
    t = 1.0
    top = max(abs(lo), abs(hi))
    while t < top:
        if lo < t < hi:
            pts.add(t)
        if lo < -t < hi:
            pts.add(-t)
        t *= ratio
    cuts = sorted(pts)
    return list(zip(cuts[:-1], cuts[1:]))


# ---------------------------------------------------------------------------
# root finding


def find_root(h: Callable[[float], float], bracket: tuple[float, float],
              tol: Tolerances = DEFAULT_TOL) -> float:
    """Deterministic bracketed root of a continuous scalar function.

    Bisection refined by secant/inverse-quadratic steps, always safeguarded
    by the bracket (Brent). Raises :class:`NoSignChange` when the bracket is
    invalid.
    """
    lo, hi = bracket
    if not lo < hi:
        raise NoSignChange(f"invalid bracket ({lo}, {hi})")
    flo, fhi = h(lo), h(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise NoSignChange(f"h({lo})={flo:g} and h({hi})={fhi:g} have the same sign")
    return float(_sciopt.brentq(h, lo, hi, xtol=tol.root_abs, rtol=8.9e-16, maxiter=200))
