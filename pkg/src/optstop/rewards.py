"""Named reward forms and their assembly into process-aware bundles.

The forms mirror the worked examples: ``x_plus``, ``call(K)``, ``put(K)``,
``exp(sigma)``, ``power(p)``, ``abs``, ``poly(coeffs)``,
``piecewise_linear(breakpoints)``, ``step(at)``. Each form carries analytic
first and second derivatives plus its kink/discontinuity set, so a bundle's
generator image and generalized representing measure come out in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import SignedMeasure, StateInterval, stable_product
from .diffusion import ProcessSpec, RewardBundle
from .errors import BadParams, UnknownProcess

__all__ = ["RewardForm", "reward_form", "make_bundle", "smoothed_x_plus"]


@dataclass(frozen=True)
class RewardForm:
    name: str
    g: Callable
    g_deriv: Callable
    g_second: Callable
    kinks: tuple[float, ...] = ()
    discontinuities: tuple[float, ...] = ()
    # one-sided slopes at each kink, for the representing-measure atoms
    kink_slopes: tuple[tuple[float, float, float], ...] = ()  # (point, left, right)
    params: dict = field(default_factory=dict)


def _arr(x):
    return np.asarray(x, dtype=float)


def reward_form(name: str, **params) -> RewardForm:
    builders = {
        "x_plus": _x_plus,
        "call": _call,
        "put": _put,
        "exp": _exp,
        "power": _power,
        "abs": _abs,
        "poly": _poly,
        "piecewise_linear": _piecewise_linear,
        "step": _step,
        "x_plus_smoothed": smoothed_x_plus,
    }
    try:
        builder = builders[name]
    except KeyError:
        raise UnknownProcess(f"no reward form named {name!r}") from None
    return builder(**params)


def _x_plus():
    return RewardForm(
        "x_plus",
        g=lambda x: np.maximum(_arr(x), 0.0),
        g_deriv=lambda x: (_arr(x) > 0.0).astype(float),
        g_second=lambda x: np.zeros_like(_arr(x)),
        kinks=(0.0,),
        kink_slopes=((0.0, 0.0, 1.0),),
    )


def _call(K):
    if K <= 0:
        raise BadParams("call strike K must be positive")
    return RewardForm(
        "call",
        g=lambda x: np.maximum(_arr(x) - K, 0.0),
        g_deriv=lambda x: (_arr(x) > K).astype(float),
        g_second=lambda x: np.zeros_like(_arr(x)),
        kinks=(K,),
        kink_slopes=((K, 0.0, 1.0),),
        params={"K": K},
    )


def _put(K):
    if K <= 0:
        raise BadParams("put strike K must be positive")
    return RewardForm(
        "put",
        g=lambda x: np.maximum(K - _arr(x), 0.0),
        g_deriv=lambda x: -(_arr(x) < K).astype(float),
        g_second=lambda x: np.zeros_like(_arr(x)),
        kinks=(K,),
        kink_slopes=((K, -1.0, 0.0),),
        params={"K": K},
    )


def _exp(sigma):
    return RewardForm(
        "exp",
        g=lambda x: np.exp(sigma * _arr(x)),
        g_deriv=lambda x: sigma * np.exp(sigma * _arr(x)),
        g_second=lambda x: sigma * sigma * np.exp(sigma * _arr(x)),
        params={"sigma": sigma},
    )


def _power(p):
    return RewardForm(
        "power",
        g=lambda x: np.power(_arr(x), p),
        g_deriv=lambda x: p * np.power(_arr(x), p - 1.0),
        g_second=lambda x: p * (p - 1.0) * np.power(_arr(x), p - 2.0),
        params={"p": p},
    )


def _abs():
    return RewardForm(
        "abs",
        g=lambda x: np.abs(_arr(x)),
        g_deriv=lambda x: np.sign(_arr(x)),
        g_second=lambda x: np.zeros_like(_arr(x)),
        kinks=(0.0,),
        kink_slopes=((0.0, -1.0, 1.0),),
    )


def _poly(coeffs: Sequence[float]):
    c = np.asarray(coeffs, dtype=float)  # descending powers, numpy convention
    d1 = np.polyder(c)
    d2 = np.polyder(c, 2)
    return RewardForm(
        "poly",
        g=lambda x: np.polyval(c, _arr(x)),
        g_deriv=lambda x: np.polyval(d1, _arr(x)),
        g_second=lambda x: np.polyval(d2, _arr(x)),
        params={"coeffs": tuple(float(v) for v in c)},
    )


def _piecewise_linear(breakpoints: Sequence[Sequence[float]]):
    """Continuous piecewise-linear reward through (x, y) breakpoints.

    Extrapolates the first/last segment slopes beyond the ends.
    """
    pts = sorted((float(x), float(y)) for x, y in breakpoints)
    if len(pts) < 2:
        raise BadParams("piecewise_linear needs at least two breakpoints")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    slopes = np.diff(ys) / np.diff(xs)

    def g(x):
        x = _arr(x)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(slopes) - 1)
        return ys[idx] + slopes[idx] * (x - xs[idx])

    def g_deriv(x):
        x = _arr(x)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    kink_slopes = []
    for i in range(1, len(xs) - 1):
        if slopes[i - 1] != slopes[i]:
            kink_slopes.append((float(xs[i]), float(slopes[i - 1]), float(slopes[i])))
    return RewardForm(
        "piecewise_linear",
        g=g,
        g_deriv=g_deriv,
        g_second=lambda x: np.zeros_like(_arr(x)),
        kinks=tuple(k[0] for k in kink_slopes),
        kink_slopes=tuple(kink_slopes),
        params={"breakpoints": tuple((float(a), float(b)) for a, b in pts)},
    )


def _step(at=0.0):
    return RewardForm(
        "step",
        g=lambda x: (_arr(x) >= at).astype(float),
        g_deriv=lambda x: np.zeros_like(_arr(x)),
        g_second=lambda x: np.zeros_like(_arr(x)),
        discontinuities=(at,),
        params={"at": at},
    )


def smoothed_x_plus():
    """C^2 extension of x+ : zero below -1, quintic bridge on [-1, 0], x above.

    Bridge p(x) = -3x^5 - 8x^4 - 6x^3 + x matches value/slope/curvature at
    both ends, so the form has no kinks and satisfies the inversion formula.
    """
    c = np.array([-3.0, -8.0, -6.0, 0.0, 1.0, 0.0])
    d1 = np.polyder(c)
    d2 = np.polyder(c, 2)

    def piece(x, f_mid):
        x = _arr(x)
        return np.where(x <= -1.0, 0.0, np.where(x >= 0.0, x, f_mid(x)))

    return RewardForm(
        "x_plus_smoothed",
        g=lambda x: piece(x, lambda t: np.polyval(c, t)),
        g_deriv=lambda x: np.where(_arr(x) <= -1.0, 0.0,
                                   np.where(_arr(x) >= 0.0, 1.0, np.polyval(d1, _arr(x)))),
        g_second=lambda x: np.where((_arr(x) <= -1.0) | (_arr(x) >= 0.0), 0.0,
                                    np.polyval(d2, _arr(x))),
    )


def make_bundle(spec: ProcessSpec, form: RewardForm) -> RewardBundle:
    """Attach a reward form to a process: closed-form (alpha-L)g and nu.

    The generalized measure nu has density alg * speed off kinks, a mass
    -(g'(p+) - g'(p-)) / s'(p) at each kink p, and (alpha - L)g(p) m({p}) at
    each speed atom. It is omitted for discontinuous rewards.
    """
    kinks = set(form.kinks)

    def alg(x):
        x = _arr(x)
        return (spec.alpha * form.g(x)
                - 0.5 * spec.diffusion(x) ** 2 * form.g_second(x)
                - spec.drift(x) * form.g_deriv(x))

    nu = None
    if not form.discontinuities:
        atoms: dict[float, float] = {}
        for p, sl, sr in form.kink_slopes:
            if spec.state.contains(p):
                # jump of dg/ds; one-sided scale derivatives in case s kinks at p too
                h = 1e-9 * max(1.0, abs(p))
                ds_r = float(spec.scale_deriv(p + h))
                ds_l = float(spec.scale_deriv(p - h))
                atoms[p] = atoms.get(p, 0.0) - (sr / ds_r - sl / ds_l)
        for p, mass in spec.speed_atoms:
            if p in kinks:
                raise BadParams("speed atom coincides with a reward kink")
            val = (spec.alpha * float(form.g(p))
                   - 0.5 * float(spec.diffusion(p)) ** 2 * float(form.g_second(p))
                   - float(spec.drift(p)) * float(form.g_deriv(p)))
            atoms[p] = atoms.get(p, 0.0) + val * mass
        breakpoints = tuple(sorted(kinks | set(spec.special_points)))
        nu = SignedMeasure(
            spec.state,
            lambda y: stable_product(alg(y), spec.speed_density(y)),
            tuple(sorted(atoms.items())),
            breakpoints,
        )

    return RewardBundle(
        g=form.g,
        g_deriv=form.g_deriv,
        g_second=form.g_second,
        alg=alg,
        kinks=tuple(sorted(kinks)),
        nu=nu,
        discontinuities=form.discontinuities,
    )
