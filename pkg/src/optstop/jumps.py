"""Spectrally one-sided jump processes.

Covers the characteristic-exponent layer of Levy triplets, the American-put
generator density for spectrally negative processes, and the Levy-driven
Ornstein-Uhlenbeck machinery: the Fourier transform of the Green kernel from
its first-order ODE in the transform variable, DFT inversion to a kernel row,
threshold search over that grid, and the spectral one-sidedness ratio check.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special as _sp

from .core import (DEFAULT_TOL, SignedMeasure, StateInterval, Tolerances,
                   find_root, integrate)
from .errors import (AliasingDetected, BadParams, HypothesisViolated,
                     MomentDiverges, NonConvergent)

__all__ = [
    "LevyTriplet",
    "LevyOUSpec",
    "KernelRow",
    "GridGreenKernel",
    "levy_exponent",
    "put_generator_density",
    "ou_green_hat",
    "ou_inversion_density",
    "invert_green_dft",
    "find_threshold_jump",
    "value_function_jump",
    "green_ratio_check",
    "ou_green_hat_ode_residual",
]


@dataclass(frozen=True)
class LevyTriplet:
    """Levy characteristic triplet (a, sigma, Pi) with a declared spectral side."""

    a: float
    sigma: float
    jump_measure: SignedMeasure
    spectral_side: str = "none"  # 'positive' | 'negative' | 'none'

    def __post_init__(self):
        if self.sigma < 0:
            raise BadParams("sigma must be nonnegative")
        if self.spectral_side not in ("positive", "negative", "none"):
            raise BadParams("spectral_side must be positive/negative/none")
        sup = self.jump_measure.support
        if sup.contains(0.0):
            raise BadParams("jump measure must be supported off 0")
        if self.spectral_side == "positive" and sup.left < 0:
            raise BadParams("positive spectral side needs support in (0, inf)")
        if self.spectral_side == "negative" and sup.right > 0:
            raise BadParams("negative spectral side needs support in (-inf, 0)")
        # integrability of min(x^2, 1) against Pi, checked numerically
        val = integrate(lambda x: np.minimum(np.asarray(x) ** 2, 1.0),
                        self.jump_measure, sup)
        if not math.isfinite(val):
            raise BadParams("jump measure fails the min(x^2,1) integrability test")


def levy_exponent(triplet: LevyTriplet, z: complex) -> complex:
    """Characteristic exponent Psi(z) = a z + sigma^2 z^2/2 + jump integral.

    For real z the exponential moment must exist; a divergent jump integral
    raises MomentDiverges.
    """
    z = complex(z)

    def kern(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="raise"):
            return np.real(np.exp(z * x)) - 1.0 - np.real(z) * x * (np.abs(x) < 1.0)

    def kern_imag(x):
        x = np.asarray(x, dtype=float)
        return np.imag(np.exp(z * x)) - np.imag(z) * x * (np.abs(x) < 1.0)

    sup = triplet.jump_measure.support
    try:
        jump_re = integrate(kern, triplet.jump_measure, sup)
        jump_im = integrate(kern_imag, triplet.jump_measure, sup)
    except (FloatingPointError, NonConvergent) as exc:
        raise MomentDiverges(f"exponential moment at z={z} does not exist") from exc
    return triplet.a * z + 0.5 * triplet.sigma ** 2 * z * z + jump_re + 1j * jump_im


def put_generator_density(triplet: LevyTriplet, K: float, alpha: float,
                          x: float) -> float:
    """(alpha - L) of the put payoff below the strike: alpha K - (alpha - Psi(1)) e^x.

    Valid for spectrally negative processes and x < ln K, where the payoff is
    K - e^x and only the process's own negative jumps are seen.
    """
    if triplet.spectral_side != "negative":
        raise BadParams("the put formula needs a spectrally negative process")
    if x >= math.log(K):
        raise BadParams("x must lie below ln K")
    psi1 = levy_exponent(triplet, 1.0)
    if abs(psi1.imag) > 1e-10 * (1.0 + abs(psi1.real)):
        raise MomentDiverges("Psi(1) came out non-real")
    return alpha * K - (alpha - psi1.real) * math.exp(x)


# ---------------------------------------------------------------------------
# Levy-driven Ornstein-Uhlenbeck


@dataclass(frozen=True)
class LevyOUSpec:
    """dX = -gamma X dt + sigma dB + compound-Poisson(lam, Exp(beta)) jumps."""

    gamma: float
    sigma: float
    lam: float
    beta: float
    alpha: float

    def __post_init__(self):
        if self.gamma <= 0 or self.beta <= 0 or self.alpha <= 0:
            raise BadParams("gamma, beta, alpha must be positive")
        if self.sigma < 0 or self.lam < 0:
            raise BadParams("sigma and lam must be nonnegative")


def _H(spec: LevyOUSpec, z):
    """Homogeneous factor of the transform ODE (principal branch in (beta-iz))."""
    z = np.asarray(z, dtype=complex)
    out = np.exp(-spec.sigma ** 2 * z * z / (4.0 * spec.gamma))
    out = out * np.abs(z) ** (-spec.alpha / spec.gamma)
    out = out * (spec.beta - 1j * z) ** (-spec.lam / spec.gamma)
    return out


def _start_value(spec: LevyOUSpec, x: float, c: float, n_nodes: int = 24) -> complex:
    """G_hat(x, c) for small c > 0, with the power endpoint at 0.

    Evaluates H(c) * int_0^c e^{i zeta x}/(zeta H(zeta)) d zeta / gamma in one
    stable piece: the integrand behaves like zeta^{p-1} with p = alpha/gamma,
    handled by a Gauss-Jacobi rule with that weight.
    """
    p = spec.alpha / spec.gamma
    nodes, weights = _sp.roots_jacobi(n_nodes, 0.0, p - 1.0)
    zeta = np.asarray(0.5 * c * (nodes + 1.0), dtype=complex)
    # H(c) absorbed: all zeta-power factors cancel down to (1/2)^p
    vals = (np.exp(1j * zeta * x
                   + spec.sigma ** 2 * (zeta * zeta - c * c) / (4.0 * spec.gamma))
            * ((spec.beta - 1j * zeta) / (spec.beta - 1j * c)) ** (spec.lam / spec.gamma))
    return complex(0.5 ** p * np.sum(weights * vals) / spec.gamma)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def _panel_step(spec: LevyOUSpec, x: float, a: np.ndarray, b: np.ndarray):
    """Per-panel pieces of the stable recursion along ascending z.

    Returns (ratio, contrib): G_hat(b) = ratio * G_hat(a) + contrib, where
    ratio = H(b)/H(a) and contrib absorbs H(b) into the panel integrand so no
    factor ever overflows.
    """
    p = spec.alpha / spec.gamma
    lg = spec.lam / spec.gamma
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ratio = (np.exp(-spec.sigma ** 2 * (b * b - a * a) / (4.0 * spec.gamma))
             * (a / b) ** p
             * ((spec.beta - 1j * a) / (spec.beta - 1j * b)) ** lg)
    mid = 0.5 * (a + b)[:, None]
    half = 0.5 * (b - a)[:, None]
    zeta = np.asarray(mid + half * _GL_NODES[None, :], dtype=complex)
    bcol = b[:, None]
    vals = (np.exp(1j * zeta * x
                   + spec.sigma ** 2 * (zeta * zeta - bcol * bcol) / (4.0 * spec.gamma))
            * (zeta / bcol) ** p / zeta
            * ((spec.beta - 1j * zeta) / (spec.beta - 1j * bcol)) ** lg)
    contrib = np.sum(vals * _GL_WEIGHTS[None, :], axis=1) * half[:, 0] / spec.gamma
    return ratio, contrib


def _green_hat_grid(spec: LevyOUSpec, x: float, zs: np.ndarray) -> np.ndarray:
    """G_hat(x, z) on an ascending grid of positive z by the panel recursion."""
    split = min(0.1, float(zs[0]))
    out = np.empty(len(zs), dtype=complex)
    below = zs <= split
    if np.any(below):
        out[below] = [_start_value(spec, x, float(z)) for z in zs[below]]
    above = zs > split
    if np.any(above):
        edges = np.concatenate([[split], zs[above]])
        ratios, contribs = _panel_step(spec, x, edges[:-1], edges[1:])
        g = _start_value(spec, x, split)
        vals = np.empty(int(np.sum(above)), dtype=complex)
        for k in range(len(vals)):
            g = ratios[k] * g + contribs[k]
            vals[k] = g
        out[above] = vals
    return out


def ou_green_hat(spec: LevyOUSpec, x: float, z: float) -> complex:
    """Fourier transform of the OU Green kernel at transform ordinate z.

    G_hat solves a first-order linear ODE in z; the closed form is the
    homogeneous factor times the integral of its reciprocal from 0, evaluated
    by a stable panel recursion. The endpoint singularity
    |zeta|^{alpha/gamma - 1} at 0 is integrated with a power-weighted rule;
    z = 0 returns the exact total-mass value 1/alpha.
    """
    if z == 0.0:
        return complex(1.0 / spec.alpha)
    if z < 0.0:
        return complex(np.conj(ou_green_hat(spec, x, -z)))
    if z <= 0.1:
        return _start_value(spec, x, z)
    n_panels = max(4, int(math.ceil((z - 0.1) / 0.05)))
    zs = np.linspace(0.1, z, n_panels + 1)[1:]
    return complex(_green_hat_grid(spec, x, zs)[-1])


def ou_inversion_density(spec: LevyOUSpec) -> Callable:
    """The function f with identity(x) = int f(y) G(x, dy): f(y)=y(alpha+gamma)-lam/beta."""
    c = spec.alpha + spec.gamma
    shift = spec.lam / spec.beta

    def f(y):
        return c * np.asarray(y, dtype=float) - shift

    return f


@dataclass(frozen=True)
class KernelRow:
    """One DFT-inverted kernel row G(x, .) on the ordinate grid."""

    x: float
    y: np.ndarray
    values: np.ndarray
    A: float
    n: int

    @property
    def spacing(self) -> float:
        return 2.0 * math.pi / self.A

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.y))

    def integrate_from(self, lo: float, f: Callable) -> float:
        """Trapezoid of f * G over (lo, inf), with the partial first cell kept."""
        y, v = self.y, self.values
        k0 = int(np.searchsorted(y, lo, side="right"))
        if k0 >= len(y):
            return 0.0
        tail = float(np.trapezoid(np.asarray(f(y[k0:])) * v[k0:], y[k0:]))
        if k0 == 0:
            return tail
        # linear interpolation of G at the cut point
        t = (lo - y[k0 - 1]) / (y[k0] - y[k0 - 1])
        g_lo = (1.0 - t) * v[k0 - 1] + t * v[k0]
        piece = 0.5 * (float(f(lo)) * g_lo + float(f(y[k0])) * v[k0]) * (y[k0] - lo)
        return tail + piece

    def integrate_window(self, lo: float, hi: float) -> float:
        mask = (self.y >= lo) & (self.y <= hi)
        if mask.sum() < 2:
            return 0.0
        return float(np.trapezoid(self.values[mask], self.y[mask]))


@dataclass(frozen=True)
class GridGreenKernel:
    """Kernel rows stacked over an x grid."""

    x_grid: np.ndarray
    y_grid: np.ndarray
    values: np.ndarray
    A: float
    n: int

    def row(self, i: int) -> KernelRow:
        return KernelRow(float(self.x_grid[i]), self.y_grid, self.values[i], self.A, self.n)


def invert_green_dft(spec: LevyOUSpec, x: float, A: float = 128.0,
                     n: int = 8192) -> KernelRow:
    """Recover G(x, .) from G_hat by the discrete Fourier transform.

    Samples v_j = G_hat(x, z_j) on z_j = -A/2 + jA/n, applies the DFT and the
    e^{i pi k} phase, and maps indices k > n/2 onto negative ordinates
    y_k - 2 pi n / A. The row is real up to a checked residue and must carry
    total mass 1/alpha (5% failure raises AliasingDetected).
    """
    if n & (n - 1):
        raise BadParams("n must be a power of two")
    # G_hat only decays like 2/(sigma z)^2, so the frontier value is small but
    # not negligible; a large value here means A is clearly too small, while
    # moderate truncation error is caught by the mass and residue checks below
    tail = abs(ou_green_hat(spec, x, A / 2.0))
    if tail > 1e-2:
        raise AliasingDetected(f"|G_hat| = {tail:.2g} at z = A/2; increase A")

    j = np.arange(n)
    zs = -A / 2.0 + j * A / n
    pos = zs[zs > 0]
    ghat_pos = _green_hat_grid(spec, x, pos)
    v = np.empty(n, dtype=complex)
    v[zs > 0] = ghat_pos
    v[n // 2] = 1.0 / spec.alpha
    # negative ordinates by conjugate symmetry; j=0 pairs with +A/2
    v[1:n // 2] = np.conj(ghat_pos[::-1])
    v[0] = np.conj(ou_green_hat(spec, x, A / 2.0))

    w = np.fft.fft(v)
    row = (A / (2.0 * math.pi * n)) * np.exp(1j * math.pi * j) * w

    resid = float(np.max(np.abs(row.imag))) / max(float(np.max(np.abs(row.real))), 1e-300)
    if resid > 1e-6:
        raise AliasingDetected(f"imaginary residue {resid:.2g} in the inverted row")
    vals = row.real

    y = 2.0 * math.pi * j / A
    y[j > n // 2] -= 2.0 * math.pi * n / A
    order = np.argsort(y)
    y, vals = y[order], vals[order]

    kernel = KernelRow(x, y, vals, A, n)
    mass = kernel.mass()
    if abs(mass - 1.0 / spec.alpha) > 0.05 / spec.alpha:
        raise AliasingDetected(
            f"row mass {mass:.4g} vs 1/alpha = {1.0 / spec.alpha:.4g}; increase A or n")
    return kernel


@dataclass(frozen=True)
class JumpThresholdResult:
    x_star: float
    residual: float
    kernel: KernelRow


def find_threshold_jump(spec: LevyOUSpec, bracket: tuple[float, float],
                        g_tilde: Callable | None = None,
                        A: float = 128.0, n: int = 8192,
                        tol: Tolerances = DEFAULT_TOL,
                        check: bool = True) -> JumpThresholdResult:
    """Threshold of the right-sided OU problem with reward x+.

    Solves g_tilde(x*) = int_{(x*, inf)} f(y) G(x*, y) dy over the DFT grid
    and verifies the verification-theorem hypotheses: f >= 0 beyond x* and
    V >= g below it.
    """
    g_tilde = g_tilde or (lambda x: x)
    f = ou_inversion_density(spec)

    def residual(x):
        row = invert_green_dft(spec, float(x), A, n)
        return float(g_tilde(x)) - row.integrate_from(float(x), f)

    x_star = find_root(residual, bracket, tol)
    row = invert_green_dft(spec, x_star, A, n)

    if check:
        ys = x_star + np.linspace(0.0, 10.0, 50)
        if np.any(np.asarray(f(ys)) < -1e-9):
            raise HypothesisViolated("f takes negative values beyond the threshold")
        below = np.linspace(min(0.0, x_star - 3.0), x_star, 9)[:-1]
        for xb in below:
            vb = invert_green_dft(spec, float(xb), A, n).integrate_from(x_star, f)
            if vb < max(xb, 0.0) - 1e-3:
                raise HypothesisViolated(
                    f"V({xb:.3g}) = {vb:.5g} fails to dominate the reward")
    return JumpThresholdResult(x_star, residual(x_star), row)


def value_function_jump(spec: LevyOUSpec, x_star: float,
                        x_grid: Sequence[float],
                        A: float = 128.0, n: int = 8192) -> np.ndarray:
    """V(x) = int_{x*}^inf G(x, y) f(y) dy on a grid of starting points."""
    f = ou_inversion_density(spec)
    out = np.empty(len(x_grid), dtype=float)
    for i, x in enumerate(x_grid):
        row = invert_green_dft(spec, float(x), A, n)
        out[i] = row.integrate_from(x_star, f)
    return out


def green_ratio_check(row_x: KernelRow, row_z: KernelRow,
                      H_sets: Sequence[tuple[float, float]],
                      rel_tol: float = 0.02) -> dict:
    """Spectral one-sidedness: G(x,H)/G(z,H) constant over sets H below z.

    Returns the ratios and a pass flag; the ratio spread must stay within
    rel_tol of its mean.
    """
    ratios = []
    for lo, hi in H_sets:
        num = row_x.integrate_window(lo, hi)
        den = row_z.integrate_window(lo, hi)
        ratios.append(num / den)
    mean = float(np.mean(ratios))
    spread = float(np.max(np.abs(np.asarray(ratios) - mean))) / abs(mean)
    return {"ratios": ratios, "mean": mean, "spread": spread, "ok": spread <= rel_tol}


def ou_green_hat_ode_residual(spec: LevyOUSpec, x: float, z: float,
                              h: float = 1e-5) -> float:
    """Residual of the transform ODE at z, with a finite-difference z-derivative."""
    gh = ou_green_hat(spec, x, z)
    dgh = (ou_green_hat(spec, x, z + h) - ou_green_hat(spec, x, z - h)) / (2.0 * h)
    coeff = (spec.alpha + 0.5 * spec.sigma ** 2 * z * z
             - spec.lam * 1j * z / (spec.beta - 1j * z))
    lhs = coeff * gh + spec.gamma * z * dgh
    return abs(lhs - cmath.exp(1j * z * x))
