"""Renewal/Volterra inequality toolbox: decay bounds, simplex integrals,
time-marched renewal solutions, and the dominating geometric-series bound.

The key objects are a nonincreasing decay function g with g(0) finite and an
integrable kernel k on (0, inf) with tail integral h(t).  The module verifies
the two convolution inequalities (single and n-fold), solves the renewal
equality f = g + beta * (k conv f) by product integration, and evaluates the
closed-form series bound that dominates any solution of the inequality when
2 * beta * h(0) < 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import BudgetExceeded, NotIntegrable, QuadratureFailure, ThresholdViolated
from .spectral_kernels import SpectralMeasure, covariance_H, covariance_k, radial_integral

_GUARD = 1e-12


def _quad(f, a, b, atol=1e-10, rtol=1e-8, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, a, b, epsabs=atol, epsrel=rtol,
                                points=points, limit=200)
    return val


class DecayFunction:
    """Nonnegative, nonincreasing on [0, inf), finite at 0."""

    label = "abstract"

    def __call__(self, t: float) -> float:
        raise NotImplementedError

    def check_monotone(self, grid=None) -> bool:
        ts = np.linspace(0.0, 50.0, 201) if grid is None else np.asarray(grid)
        vals = np.array([self(t) for t in ts])
        return bool(np.all(np.diff(vals) <= 1e-12) and np.all(vals >= 0))


@dataclass(frozen=True)
class ExpDecayFn(DecayFunction):
    a: float = 1.0

    @property
    def label(self):
        return f"exp:a={self.a:g}"

    def __call__(self, t):
        return math.exp(-self.a * t)


@dataclass(frozen=True)
class PowerDecayFn(DecayFunction):
    p: float = 2.0

    @property
    def label(self):
        return f"power:p={self.p:g}"

    def __call__(self, t):
        return (1.0 + t) ** (-self.p)


@dataclass(frozen=True)
class ScaledDecayFn(DecayFunction):
    """c * base(t); keeps monotonicity, scales the value at 0."""

    base: DecayFunction = None
    c: float = 1.0

    @property
    def label(self):
        return f"{self.c:g}*{self.base.label}"

    def __call__(self, t):
        return self.c * self.base(t)


class SpectralHDecay(DecayFunction):
    """The tail integral H(t) of a spectral measure's covariance kernel."""

    def __init__(self, m: SpectralMeasure, d: int):
        self.m, self.d = m, d
        self._h0 = covariance_H(m, d, 0.0)
        if not math.isfinite(self._h0):
            raise NotIntegrable(f"H(0) is infinite for {m.label}, d={d}")

    @property
    def label(self):
        return f"H[{self.m.label},d={self.d}]"

    def __call__(self, t):
        return self._h0 if t == 0.0 else covariance_H(self.m, self.d, t)


class KernelFunction:
    """Nonnegative integrable kernel on (0, inf); h is its tail integral."""

    label = "abstract"
    singular_exponent = 0.0  # k ~ s^(-singular_exponent) near 0

    def __call__(self, s: float) -> float:
        raise NotImplementedError

    def h(self, t: float) -> float:
        """Tail integral int_t^inf k; closed form where the menu allows."""
        raise NotImplementedError

    def check_integrable(self) -> bool:
        val = self.h(0.0)
        return math.isfinite(val) and val >= 0


@dataclass(frozen=True)
class ExpKernel(KernelFunction):
    a: float = 1.0

    @property
    def label(self):
        return f"exp:a={self.a:g}"

    def __call__(self, s):
        return math.exp(-self.a * s)

    def h(self, t):
        return math.exp(-self.a * t) / self.a


@dataclass(frozen=True)
class PowerKernel(KernelFunction):
    """(1+s)^(-p) with p > 1."""

    p: float = 2.0

    def __post_init__(self):
        if self.p <= 1:
            raise NotIntegrable(f"(1+s)^(-p) needs p > 1, got p={self.p}")

    @property
    def label(self):
        return f"power:p={self.p:g}"

    def __call__(self, s):
        return (1.0 + s) ** (-self.p)

    def h(self, t):
        return (1.0 + t) ** (1.0 - self.p) / (self.p - 1.0)


@dataclass(frozen=True)
class SingularKernel(KernelFunction):
    """s^(-1/alpha) * exp(-s): integrable power singularity at the origin."""

    alpha: float = 2.0

    def __post_init__(self):
        if self.alpha <= 1:
            raise NotIntegrable("need alpha > 1 so the singularity is integrable")

    @property
    def label(self):
        return f"singular:alpha={self.alpha:g}"

    @property
    def singular_exponent(self):
        return 1.0 / self.alpha

    def __call__(self, s):
        if s <= 0:
            return math.inf
        return s ** (-1.0 / self.alpha) * math.exp(-s)

    def h(self, t):
        from scipy.special import gammaincc

        a = 1.0 - 1.0 / self.alpha
        return math.gamma(a) * float(gammaincc(a, max(t, 0.0)))


class SpectralKernelFn(KernelFunction):
    """Covariance time-kernel k(t) of a spectral measure."""

    def __init__(self, m: SpectralMeasure, d: int):
        self.m, self.d = m, d

    @property
    def label(self):
        return f"k[{self.m.label},d={self.d}]"

    def __call__(self, s):
        return covariance_k(self.m, self.d, s)

    def h(self, t):
        return covariance_H(self.m, self.d, t)


class CachedKernel(KernelFunction):
    """Log-log spline cache of another kernel; makes nested quadrature cheap.

    Both k and h are tabulated from the source on a fixed log grid, so the
    pair stays internally consistent (inequalities verified through this
    cache compare the same interpolants on both sides).
    """

    def __init__(self, source: KernelFunction, t_max: float = 400.0, npts: int = 320):
        from scipy.interpolate import CubicSpline

        self.source = source
        self.label = f"cached[{source.label}]"
        ts = np.geomspace(1e-8, t_max, npts)
        kv = np.array([source(float(t)) for t in ts])
        hv = np.array([source.h(float(t)) for t in ts])
        self._tmin, self._tmax = ts[0], ts[-1]
        self._k_spl = CubicSpline(np.log(ts), np.log(np.maximum(kv, 1e-300)))
        self._h_spl = CubicSpline(np.log(ts), np.log(np.maximum(hv, 1e-300)))
        self._k0 = source(0.0) if math.isfinite(source(1e-300)) else math.inf
        self._h0 = source.h(0.0)
        # geometric continuation rates beyond the table
        self._k_rate = (math.log(max(kv[-20], 1e-300)) - math.log(max(kv[-1], 1e-300))) \
            / (ts[-1] - ts[-20])
        self._k_end = kv[-1]
        self._h_end = hv[-1]

    def __call__(self, s):
        if s <= 0:
            return self._k0
        if s < self._tmin:
            return float(math.exp(self._k_spl(math.log(self._tmin))))
        if s > self._tmax:
            return float(self._k_end * math.exp(-self._k_rate * (s - self._tmax)))
        return float(math.exp(self._k_spl(math.log(s))))

    def h(self, t):
        if t <= 0:
            return self._h0
        if t < self._tmin:
            return self._h0 - (self._h0 - math.exp(self._h_spl(math.log(self._tmin)))) \
                * t / self._tmin
        if t > self._tmax:
            return float(self._h_end * math.exp(-self._k_rate * (t - self._tmax)))
        return float(math.exp(self._h_spl(math.log(t))))


def h_from_k(k: KernelFunction, t: float) -> float:
    """Tail integral of the kernel, int_t^inf k(s) ds."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    val = k.h(t)
    if not math.isfinite(val):
        raise NotIntegrable(f"kernel {k.label} has no finite tail integral at t={t}")
    return val


def check_part_i(g: DecayFunction, k: KernelFunction, n: int, t: float,
                 slack: float = 1e-9):
    """Single-convolution bound: returns (lhs, rhs, pass)."""
    if n < 0 or t < 0:
        raise ValueError("need n >= 0 and t >= 0")
    if t == 0.0:
        lhs = 0.0
    else:
        f = lambda s: g((t - s) / 2.0 ** n) * k(s)
        lhs = _quad(f, 0.0, t, points=[0.0, t])
    rhs = g(0.0) * h_from_k(k, t / 2.0 ** (n + 1)) \
        + h_from_k(k, 0.0) * g(t / 2.0 ** (n + 1))
    return lhs, rhs, bool(lhs <= rhs + slack)


def check_part_ii(g: DecayFunction, k: KernelFunction, n: int, t: float,
                  slack: float = 1e-8):
    """n-fold ordered-simplex bound for n <= 3: returns (lhs, rhs, pass)."""
    if not 1 <= n <= 3:
        raise BudgetExceeded("nested quadrature budget covers n in {1, 2, 3}")
    if t == 0.0:
        lhs = 0.0
    elif n == 1:
        lhs = _quad(lambda u1: g(t - u1) * k(u1), 0.0, t, points=[0.0, t])
    elif n == 2:
        def outer(u2):
            inner = _quad(lambda u1: k(u2 - u1) * k(u1), 0.0, u2,
                          points=[0.0, u2], atol=1e-11)
            return g(t - u2) * inner

        lhs = _quad(outer, 0.0, t, points=[0.0, t])
    else:
        def outer(u3):
            def mid(u2):
                inner = _quad(lambda u1: k(u2 - u1) * k(u1), 0.0, u2,
                              points=[0.0, u2], atol=1e-11, rtol=1e-8)
                return k(u3 - u2) * inner

            return g(t - u3) * _quad(mid, 0.0, u3, points=[0.0, u3], atol=1e-11)

        lhs = _quad(outer, 0.0, t, points=[0.0, t])
    h0 = h_from_k(k, 0.0)
    rhs = (2.0 ** n - 1.0) * g(0.0) * h0 ** (n - 1) * h_from_k(k, t / 2.0 ** n) \
        + h0 ** n * g(t / 2.0 ** n)
    return lhs, rhs, bool(lhs <= rhs + slack)


def volterra_iterate(g: DecayFunction, k: KernelFunction, beta: float,
                     T: float, dt: float) -> tuple:
    """March the renewal equality f = g + beta * (k conv f) on [0, T].

    Product-integration rule: f is piecewise constant per cell and the kernel
    is integrated exactly through its tail function h, so integrable
    singularities of k at the origin are handled without special casing.
    """
    if beta < 0 or dt <= 0:
        raise ValueError("need beta >= 0 and dt > 0")
    nsteps = int(round(T / dt))
    ts = dt * np.arange(nsteps + 1)
    # cell weights: w_m = int over [m dt, (m+1) dt) of k = h(m dt) - h((m+1) dt),
    # exact through the tail function, so singular kernels need no special case
    hv = np.array([h_from_k(k, float(m * dt)) for m in range(nsteps + 1)])
    w = hv[:-1] - hv[1:]
    f = np.zeros(nsteps + 1)
    f[0] = g(0.0)
    denom = 1.0 - beta * w[0] / 2.0
    if denom <= 0:
        raise ValueError("dt too large for the implicit trapezoid step")
    for i in range(1, nsteps + 1):
        # trapezoid product rule: f averaged per cell, kernel integrated exactly
        known = 0.5 * f[i - 1] * w[0]
        if i > 1:
            wm = w[1:i]
            known += 0.5 * (np.dot(f[1:i][::-1], wm) + np.dot(f[:i - 1][::-1], wm))
        f[i] = (g(float(ts[i])) + beta * known) / denom
    return ts, f


def series_bound(g: DecayFunction, k: KernelFunction, beta: float, t: float,
                 tol: float = 1e-12) -> float:
    """Dominating bound built from the geometric series of simplex estimates.

    Requires 2 * beta * h(0) < 1.  Returns the truncated series plus a
    rigorous geometric tail so the result always dominates the full sum.
    """
    h0 = h_from_k(k, 0.0)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    q = 2.0 * beta * h0
    if q >= 1.0 - _GUARD:
        raise ThresholdViolated(
            f"series bound needs 2*beta*h(0) < 1, got {q:.6g}")
    if beta == 0.0:
        return g(t)
    pref = max(1.0, g(0.0), h0)
    total = g(t)
    n = 1
    while True:
        term = 2.0 * beta * q ** (n - 1) * (h_from_k(k, t / 2.0 ** n) + g(t / 2.0 ** n))
        total += pref * term
        cap = 2.0 * beta * q ** (n - 1) * (h0 + g(0.0))
        if pref * cap < tol or n > 400:
            # geometric tail using the monotone caps h <= h(0), g <= g(0)
            total += pref * cap * q / (1.0 - q)
            break
        n += 1
    return total
