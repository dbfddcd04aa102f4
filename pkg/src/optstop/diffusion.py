"""Regular one-dimensional diffusions described by their analytic data.

A :class:`ProcessSpec` bundles the increasing/decreasing fundamental solutions
psi/phi of ``alpha*u = Lu``, scale and speed, the Wronskian, and the closed
form of the generator. :func:`catalog` ships the worked process zoo: standard
and drifted Brownian motion, geometric BM, reflected BM with drift, skew BM,
sticky BM and the Bessel(3) process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (SignedMeasure, StateInterval, Tolerances, DEFAULT_TOL,
                   integrate, stable_product, whole_line)
from .errors import AtKink, BadParams, NonConvergent, OutOfDomain, UnknownProcess

__all__ = [
    "ProcessSpec",
    "RewardBundle",
    "green",
    "hitting_transform",
    "apply_generator",
    "check_inversion",
    "catalog",
    "sigma_measure",
]


@dataclass(frozen=True)
class ProcessSpec:
    """Analytic description of a regular one-dimensional diffusion.

    ``drift``/``diffusion`` give the SDE coefficients where the generator has
    the classical form ``Lf = diffusion^2/2 f'' + drift f'`` (valid off
    ``special_points``); skew and sticky BM carry their special point at 0.
    """

    name: str
    state: StateInterval
    alpha: float
    psi: Callable
    phi: Callable
    psi_deriv: Callable
    phi_deriv: Callable
    scale: Callable
    scale_deriv: Callable
    speed_density: Callable
    speed_atoms: tuple[tuple[float, float], ...]
    wronskian: float
    drift: Callable
    diffusion: Callable
    special_points: tuple[float, ...] = ()
    params: dict = field(default_factory=dict)

    def generator_apply(self, bundle: "RewardBundle", x: float) -> float:
        """(alpha - L)g(x) in closed form; errors at declared kinks of g."""
        if any(abs(x - k) < 1e-14 for k in bundle.kinks):
            raise AtKink(f"generator applied at kink x={x}")
        gxx = bundle.g_second(x)
        return (self.alpha * bundle.g(x)
                - 0.5 * self.diffusion(x) ** 2 * gxx
                - self.drift(x) * bundle.g_deriv(x))

    def require_interior(self, *xs: float):
        for x in xs:
            if not (self.state.left < x < self.state.right) and not self.state.contains(x):
                raise OutOfDomain(f"x={x} outside state interval {self.state}")


@dataclass(frozen=True)
class RewardBundle:
    """A reward together with its derivatives, generator image and kinks.

    ``alg`` is (alpha - L)g off kinks. ``nu`` is the generalized representing
    measure (density ``alg * speed`` plus kink and speed-atom masses); it is
    None when g is discontinuous and no such measure exists.
    """

    g: Callable
    g_deriv: Callable
    g_second: Callable
    alg: Callable
    kinks: tuple[float, ...] = ()
    nu: SignedMeasure | None = None
    discontinuities: tuple[float, ...] = ()

    def alg_array(self, xs: np.ndarray) -> np.ndarray:
        return np.asarray(self.alg(np.asarray(xs, dtype=float)), dtype=float)


def green(spec: ProcessSpec, x: float, y: float) -> float:
    """Green function w^-1 psi(min) phi(max); symmetric and positive."""
    spec.require_interior(x, y)
    lo, hi = (x, y) if x <= y else (y, x)
    return spec.psi(lo) * spec.phi(hi) / spec.wronskian


def hitting_transform(spec: ProcessSpec, x: float, z: float) -> float:
    """E_x[e^{-alpha tau_z}] via the psi/phi ratios; in (0, 1], =1 iff x=z."""
    spec.require_interior(x, z)
    if x <= z:
        return spec.psi(x) / spec.psi(z)
    return spec.phi(x) / spec.phi(z)


def apply_generator(spec: ProcessSpec, bundle: RewardBundle, x: float) -> float:
    return spec.generator_apply(bundle, x)


def sigma_measure(spec: ProcessSpec, bundle: RewardBundle) -> SignedMeasure:
    """The measure sigma(dy) = (alpha - L)g(y) m(dy), with atoms.

    Uses the bundle's generalized measure when available (kink atoms
    included); otherwise assembles density ``alg * speed_density`` plus the
    speed-measure atoms weighted by (alpha - L)g.
    """
    if bundle.nu is not None:
        return bundle.nu
    atoms = []
    for p, mass in spec.speed_atoms:
        atoms.append((p, _alg_limit(spec, bundle, p) * mass))
    breakpoints = tuple(bundle.kinks) + tuple(bundle.discontinuities) + tuple(spec.special_points)

    def density(y):
        return stable_product(bundle.alg(y), spec.speed_density(y))

    return SignedMeasure(spec.state, density, tuple(atoms), breakpoints)


def _alg_limit(spec: ProcessSpec, bundle: RewardBundle, p: float) -> float:
    """(alpha - L)g at a speed-atom point, as the two-sided limit."""
    try:
        return spec.generator_apply(bundle, p)
    except AtKink:
        h = 1e-6 * max(1.0, abs(p))
        return 0.5 * (spec.generator_apply(bundle, p - h) + spec.generator_apply(bundle, p + h))


@dataclass(frozen=True)
class InversionReport:
    """Residuals of g(x) = int G(x,y) sigma(dy) plus boundary-limit flags."""

    xs: tuple[float, ...]
    residuals: tuple[float, ...]
    limit_ok_right: bool
    limit_ok_left: bool
    ratio_right: float
    ratio_left: float

    @property
    def max_residual(self) -> float:
        return max(abs(r) for r in self.residuals) if self.residuals else 0.0

    @property
    def ok(self) -> bool:
        return self.limit_ok_left and self.limit_ok_right


def check_inversion(spec: ProcessSpec, bundle: RewardBundle, xs: Sequence[float],
                    tol: Tolerances = DEFAULT_TOL) -> InversionReport:
    """Verify the Green-kernel inversion of g and its boundary growth limits.

    For each x, compares g(x) against the full-line integral of
    G(x, y) against sigma(dy). The growth conditions g/psi -> 0 at the right
    endpoint and g/phi -> 0 at the left endpoint are probed numerically at
    the quadrature truncation frontier.
    """
    ok_r, ratio_r = _limit_ok(spec, bundle, side=+1)
    ok_l, ratio_l = _limit_ok(spec, bundle, side=-1)

    mu = sigma_measure(spec, bundle)
    residuals = []
    for x in xs:
        spec.require_interior(x)
        if not (ok_r and ok_l):
            residuals.append(math.nan)
            continue
        val = integrate(lambda y: _green_vec(spec, x, y), mu, spec.state, tol,
                        extra_breakpoints=(x,))
        residuals.append(val - bundle.g(x))
    return InversionReport(tuple(xs), tuple(residuals), ok_r, ok_l, ratio_r, ratio_l)


def _green_vec(spec: ProcessSpec, x: float, y):
    y = np.asarray(y, dtype=float)
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    return spec.psi(lo) * spec.phi(hi) / spec.wronskian


def _limit_ok(spec: ProcessSpec, bundle: RewardBundle, side: int) -> tuple[bool, float]:
    """Probe g/psi (right) or g/phi (left) along a geometric walk to the endpoint.

    Probes shrink back toward the interior until both g and the fundamental
    solution are representable, so exponential overflow reads as decay of the
    ratio rather than as nan.
    """
    st = spec.state
    endpoint = st.right if side > 0 else st.left
    denom = spec.psi if side > 0 else spec.phi
    if math.isfinite(endpoint):
        if (side > 0 and st.right_closed) or (side < 0 and st.left_closed):
            return True, 0.0
        offsets = [16.0 ** (-k) * max(1.0, abs(endpoint)) for k in range(1, 9)]
        probes = [endpoint - side * d for d in offsets]
        probes = [p for p in probes if st.left < p < st.right]
    else:
        anchor = 0.0 if side > 0 or not math.isfinite(st.left) else st.left + 1.0
        probes = [anchor + side * 2.0 ** k for k in (14, 12, 10, 8, 6, 4, 2)]

    def ratio(p):
        with np.errstate(over="ignore", invalid="ignore"):
            num = abs(float(bundle.g(p)))
            den = abs(float(denom(p)))
        if not math.isfinite(den) or den == 0.0:
            return 0.0 if math.isfinite(num) else math.nan
        return num / den if math.isfinite(num) else math.inf

    # find the closest probe to the endpoint with a representable ratio
    vals = [(p, ratio(p)) for p in probes]
    usable = [(p, r) for p, r in vals if not math.isnan(r)]
    if not usable:
        return False, math.nan
    p_end, r_end = usable[0]
    far = [r for p, r in usable[2:]] or [r for p, r in usable[1:]]
    if not far:
        return r_end < 1e-8, r_end
    r_far = far[0]
    decaying = r_end < 1e-8 or (math.isfinite(r_end) and r_end <= 0.8 * max(r_far, 1e-300))
    return decaying, r_end


# ---------------------------------------------------------------------------
# process catalog


def catalog(name: str, alpha: float, **params) -> ProcessSpec:
    """Build a catalog process.

    Names: ``bm``, ``bm_drift(mu)``, ``gbm(mu, sigma)``, ``reflected_bm(delta)``,
    ``skew_bm(beta)``, ``sticky_bm``, ``bessel3``.
    """
    if alpha <= 0:
        raise BadParams("alpha must be positive")
    builders = {
        "bm": _bm,
        "bm_drift": _bm_drift,
        "gbm": _gbm,
        "reflected_bm": _reflected_bm,
        "skew_bm": _skew_bm,
        "sticky_bm": _sticky_bm,
        "bessel3": _bessel3,
    }
    try:
        builder = builders[name]
    except KeyError:
        raise UnknownProcess(f"no catalog process named {name!r}") from None
    return builder(alpha, **params)


def _const(c):
    return lambda x: c * np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else c


def _piecewise(x, cond, f_true, f_false):
    """np.where without evaluating either branch outside its mask."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    mask = cond(x)
    out = np.empty_like(x)
    if np.any(mask):
        out[mask] = f_true(x[mask])
    if np.any(~mask):
        out[~mask] = f_false(x[~mask])
    return out[0] if scalar else out


def _bm(alpha):
    a = math.sqrt(2.0 * alpha)
    return ProcessSpec(
        name="bm",
        state=whole_line(),
        alpha=alpha,
        psi=lambda x: np.exp(a * x),
        phi=lambda x: np.exp(-a * x),
        psi_deriv=lambda x: a * np.exp(a * x),
        phi_deriv=lambda x: -a * np.exp(-a * x),
        scale=lambda x: np.asarray(x, dtype=float) if np.ndim(x) else float(x),
        scale_deriv=_const(1.0),
        speed_density=_const(2.0),
        speed_atoms=(),
        wronskian=2.0 * a,
        drift=_const(0.0),
        diffusion=_const(1.0),
    )


def _bm_drift(alpha, mu):
    if mu == 0.0:
        spec = _bm(alpha)
        return ProcessSpec(**{**spec.__dict__, "name": "bm_drift", "params": {"mu": 0.0}})
    g = math.sqrt(2.0 * alpha + mu * mu)
    return ProcessSpec(
        name="bm_drift",
        state=whole_line(),
        alpha=alpha,
        psi=lambda x: np.exp((g - mu) * x),
        phi=lambda x: np.exp(-(g + mu) * x),
        psi_deriv=lambda x: (g - mu) * np.exp((g - mu) * x),
        phi_deriv=lambda x: -(g + mu) * np.exp(-(g + mu) * x),
        scale=lambda x: (1.0 - np.exp(-2.0 * mu * x)) / (2.0 * mu),
        scale_deriv=lambda x: np.exp(-2.0 * mu * x),
        speed_density=lambda x: 2.0 * np.exp(2.0 * mu * x),
        speed_atoms=(),
        wronskian=2.0 * g,
        drift=_const(mu),
        diffusion=_const(1.0),
        params={"mu": mu},
    )


def _gbm(alpha, mu, sigma):
    if sigma <= 0:
        raise BadParams("gbm needs sigma > 0")
    nu = mu / sigma ** 2 - 0.5
    root = math.sqrt(nu * nu + 2.0 * alpha / sigma ** 2)
    g1 = -nu + root
    g2 = -nu - root

    if nu != 0.0:
        scale = lambda x: -np.power(x, -2.0 * nu) / (2.0 * nu)
    else:
        scale = lambda x: np.log(x)
    return ProcessSpec(
        name="gbm",
        state=StateInterval(0.0, math.inf),
        alpha=alpha,
        psi=lambda x: np.power(x, g1),
        phi=lambda x: np.power(x, g2),
        psi_deriv=lambda x: g1 * np.power(x, g1 - 1.0),
        phi_deriv=lambda x: g2 * np.power(x, g2 - 1.0),
        scale=scale,
        scale_deriv=lambda x: np.power(x, -2.0 * nu - 1.0),
        speed_density=lambda x: (2.0 / sigma ** 2) * np.power(x, 2.0 * mu / sigma ** 2 - 2.0),
        speed_atoms=(),
        wronskian=g1 - g2,
        drift=lambda x: mu * np.asarray(x, dtype=float),
        diffusion=lambda x: sigma * np.asarray(x, dtype=float),
        params={"mu": mu, "sigma": sigma, "gamma1": g1, "gamma2": g2},
    )


def _reflected_bm(alpha, delta):
    """BM with drift -delta < 0 reflected at 0 (the Russian-option process)."""
    if delta <= 0:
        raise BadParams("reflected_bm needs delta > 0")
    g = math.sqrt(2.0 * alpha + delta * delta)
    c1 = (g - delta) / (2.0 * g)
    c2 = (g + delta) / (2.0 * g)
    return ProcessSpec(
        name="reflected_bm",
        state=StateInterval(0.0, math.inf, left_closed=True),
        alpha=alpha,
        psi=lambda x: c1 * np.exp((g + delta) * x) + c2 * np.exp(-(g - delta) * x),
        phi=lambda x: np.exp(-(g - delta) * x),
        psi_deriv=lambda x: c1 * (g + delta) * np.exp((g + delta) * x)
        - c2 * (g - delta) * np.exp(-(g - delta) * x),
        phi_deriv=lambda x: -(g - delta) * np.exp(-(g - delta) * x),
        scale=lambda x: (1.0 - np.exp(2.0 * delta * x)) / (-2.0 * delta),
        scale_deriv=lambda x: np.exp(2.0 * delta * x),
        speed_density=lambda x: 2.0 * np.exp(-2.0 * delta * x),
        speed_atoms=(),
        wronskian=g - delta,
        drift=_const(-delta),
        diffusion=_const(1.0),
        params={"delta": delta},
    )


def _skew_bm(alpha, beta):
    if not 0.0 < beta < 1.0:
        raise BadParams("skew_bm needs beta in (0, 1)")
    a = math.sqrt(2.0 * alpha)

    def psi(x):
        return _piecewise(x, lambda t: t <= 0.0, lambda t: np.exp(a * t),
                          lambda t: ((1.0 - 2.0 * beta) / beta) * np.sinh(a * t) + np.exp(a * t))

    def phi(x):
        return _piecewise(x, lambda t: t >= 0.0, lambda t: np.exp(-a * t),
                          lambda t: ((1.0 - 2.0 * beta) / (1.0 - beta)) * np.sinh(a * t) + np.exp(-a * t))

    def psi_deriv(x):
        return _piecewise(x, lambda t: t < 0.0, lambda t: a * np.exp(a * t),
                          lambda t: a * (((1.0 - 2.0 * beta) / beta) * np.cosh(a * t) + np.exp(a * t)))

    def phi_deriv(x):
        return _piecewise(x, lambda t: t > 0.0, lambda t: -a * np.exp(-a * t),
                          lambda t: a * (((1.0 - 2.0 * beta) / (1.0 - beta)) * np.cosh(a * t) - np.exp(-a * t)))

    def scale(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, x / beta, x / (1.0 - beta))

    def scale_deriv(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, 1.0 / beta, 1.0 / (1.0 - beta))

    def speed_density(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, 2.0 * beta, 2.0 * (1.0 - beta))

    return ProcessSpec(
        name="skew_bm",
        state=whole_line(),
        alpha=alpha,
        psi=psi, phi=phi, psi_deriv=psi_deriv, phi_deriv=phi_deriv,
        scale=scale, scale_deriv=scale_deriv,
        speed_density=speed_density,
        speed_atoms=(),
        wronskian=a,
        drift=_const(0.0),
        diffusion=_const(1.0),
        special_points=(0.0,),
        params={"beta": beta},
    )


def _sticky_bm(alpha):
    a = math.sqrt(2.0 * alpha)

    def psi(x):
        return _piecewise(x, lambda t: t <= 0.0, lambda t: np.exp(a * t),
                          lambda t: np.exp(a * t) + a * np.sinh(a * t))

    def phi(x):
        return _piecewise(x, lambda t: t >= 0.0, lambda t: np.exp(-a * t),
                          lambda t: np.exp(-a * t) - a * np.sinh(a * t))

    def psi_deriv(x):
        return _piecewise(x, lambda t: t < 0.0, lambda t: a * np.exp(a * t),
                          lambda t: a * np.exp(a * t) + a * a * np.cosh(a * t))

    def phi_deriv(x):
        return _piecewise(x, lambda t: t > 0.0, lambda t: -a * np.exp(-a * t),
                          lambda t: -a * np.exp(-a * t) - a * a * np.cosh(a * t))

    return ProcessSpec(
        name="sticky_bm",
        state=whole_line(),
        alpha=alpha,
        psi=psi, phi=phi, psi_deriv=psi_deriv, phi_deriv=phi_deriv,
        scale=lambda x: np.asarray(x, dtype=float) if np.ndim(x) else float(x),
        scale_deriv=_const(1.0),
        speed_density=_const(2.0),
        speed_atoms=((0.0, 2.0),),
        wronskian=2.0 * a + 2.0 * alpha,
        drift=_const(0.0),
        diffusion=_const(1.0),
        special_points=(0.0,),
    )


def _bessel3(alpha):
    a = math.sqrt(2.0 * alpha)
    return ProcessSpec(
        name="bessel3",
        state=StateInterval(0.0, math.inf),
        alpha=alpha,
        psi=lambda x: 2.0 * np.sinh(a * x) / np.asarray(x, dtype=float),
        phi=lambda x: np.exp(-a * x) / np.asarray(x, dtype=float),
        psi_deriv=lambda x: (2.0 * a * x * np.cosh(a * x) - 2.0 * np.sinh(a * x)) / np.asarray(x, dtype=float) ** 2,
        phi_deriv=lambda x: -np.exp(-a * x) * (a * x + 1.0) / np.asarray(x, dtype=float) ** 2,
        scale=lambda x: -1.0 / np.asarray(x, dtype=float),
        scale_deriv=lambda x: 1.0 / np.asarray(x, dtype=float) ** 2,
        speed_density=lambda x: 2.0 * np.asarray(x, dtype=float) ** 2,
        speed_atoms=(),
        wronskian=2.0 * a,
        drift=lambda x: 1.0 / np.asarray(x, dtype=float),
        diffusion=_const(1.0),
    )
