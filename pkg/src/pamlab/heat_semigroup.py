"""Rough initial data, the homogeneous heat solution J0, and weight functions.

Initial data are locally finite signed measures from a closed menu (Dirac
combs, flat levels, power-law densities, the 2*pi lattice comb, signed sums).
Every menu entry satisfies the sub-Gaussian integrability requirement for
rough initial data by construction.  Suprema over space are computed with
analytic shortcuts where radial monotonicity applies and with multi-start
grid refinement otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import NonpositiveTime, QuadratureFailure
from .spectral_kernels import radial_integral, sphere_area

ATOL = 1e-10
RTOL = 1e-8


def _quad(f, a, b, points=None, atol=ATOL, rtol=RTOL):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, a, b, epsabs=atol, epsrel=rtol,
                                points=points, limit=200)
    return val


def heat_kernel(d: int, t: float, x) -> float:
    """Gaussian heat kernel (2 pi t)^(-d/2) exp(-|x|^2 / (2t))."""
    if t <= 0:
        raise NonpositiveTime(f"heat kernel needs t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    r2 = np.sum(np.atleast_2d(x) ** 2, axis=-1)
    out = (2.0 * math.pi * t) ** (-d / 2.0) * np.exp(-r2 / (2.0 * t))
    return float(out[0]) if out.size == 1 else out


def heat_convolve_radial(g, d: int, t: float, r: float, points=None) -> float:
    """Heat convolution (p_t * g)(x) for radial g, evaluated at |x| = r."""
    if t <= 0:
        raise NonpositiveTime(f"t must be positive, got {t}")
    w = 12.0 * math.sqrt(t)
    if d == 1:
        f = lambda s: g(s) * (heat_kernel(1, t, [r - s]) + heat_kernel(1, t, [r + s]))
        return _quad(f, 0.0, r + w, points=points)
    if d == 2:
        from scipy.special import i0e

        f = lambda s: g(s) * s * math.exp(-(r - s) ** 2 / (2 * t)) * i0e(r * s / t) / t
        return _quad(f, max(0.0, r - w), r + w, points=points)
    if d == 3:
        if r < 1e-9 * math.sqrt(t):
            pref = (2 * math.pi * t) ** -1.5 * 4 * math.pi
            f = lambda s: g(s) * s * s * math.exp(-s * s / (2 * t))
            return pref * _quad(f, 0.0, w, points=points)
        pref = 1.0 / (r * math.sqrt(2 * math.pi * t))
        f = lambda s: g(s) * s * (math.exp(-(r - s) ** 2 / (2 * t))
                                  - math.exp(-(r + s) ** 2 / (2 * t)))
        return pref * _quad(f, max(0.0, r - w), r + w, points=points)
    raise NotImplementedError(f"radial heat convolution for d={d}")


# ---------------------------------------------------------------------------
# rough initial measures
# ---------------------------------------------------------------------------


class RoughMeasure:
    """Signed measure from the menu; all variants satisfy the rough-data tail bound."""

    label = "abstract"

    def j0(self, d, t, X):
        """Vectorized J0(t, x) over rows of X (shape (N, d))."""
        raise NotImplementedError

    def abs_measure(self) -> "RoughMeasure":
        raise NotImplementedError

    def rough_icon_check(self) -> bool:
        """Sub-Gaussian tail integrability; true by construction for the menu."""
        return True


@dataclass(frozen=True)
class Flat(RoughMeasure):
    c: float = 1.0

    @property
    def label(self):
        return f"flat:{self.c:g}"

    def j0(self, d, t, X):
        return np.full(X.shape[0], float(self.c))

    def abs_measure(self):
        return Flat(abs(self.c))


@dataclass(frozen=True)
class DiracComb(RoughMeasure):
    """Finitely many atoms: tuple of (location tuple, weight)."""

    atoms: tuple = (((0.0, 0.0, 0.0), 1.0),)

    @property
    def label(self):
        return f"dirac_comb:{len(self.atoms)}"

    def locations(self, d):
        locs = np.array([a[0] for a in self.atoms], dtype=float).reshape(len(self.atoms), -1)
        if locs.shape[1] != d:
            raise ValueError(f"atom locations have dimension {locs.shape[1]}, expected {d}")
        return locs

    def weights(self):
        return np.array([a[1] for a in self.atoms], dtype=float)

    def j0(self, d, t, X):
        locs = self.locations(d)
        w = self.weights()
        diff = X[:, None, :] - locs[None, :, :]
        r2 = np.sum(diff * diff, axis=-1)
        return (2 * math.pi * t) ** (-d / 2.0) * (np.exp(-r2 / (2 * t)) @ w)

    def abs_measure(self):
        return DiracComb(tuple((loc, abs(w)) for loc, w in self.atoms))


def dirac(location=(0.0, 0.0, 0.0), weight=1.0) -> DiracComb:
    return DiracComb(((tuple(location), float(weight)),))


@dataclass(frozen=True)
class PowerLawDensity(RoughMeasure):
    """Density |x|^(-alpha) dx with alpha in (0, d)."""

    alpha: float = 1.0

    @property
    def label(self):
        return f"powerlaw:alpha={self.alpha:g}"

    def j0_at_origin(self, d, t):
        # closed form: C_alpha * t^(-alpha/2)
        return self.c_alpha(d) * t ** (-self.alpha / 2.0)

    def c_alpha(self, d):
        a = self.alpha
        return 2.0 ** (-a / 2.0) * math.gamma((d - a) / 2.0) / math.gamma(d / 2.0)

    def _profile(self, d, t, rmax):
        a = self.alpha
        radii = np.concatenate([[0.0], np.geomspace(1e-3 * math.sqrt(t), rmax, 72)])
        vals = [self.j0_at_origin(d, t)]
        for r in radii[1:]:
            vals.append(heat_convolve_radial(lambda s: s ** (-a), d, t, r, points=[0.0]))
        return CubicSpline(radii, np.array(vals))

    def j0(self, d, t, X):
        if not 0 < self.alpha < d:
            raise ValueError("alpha must lie in (0, d)")
        r = np.sqrt(np.sum(X * X, axis=-1))
        rmax = max(float(r.max(initial=0.0)) * 1.01, 10.0 * math.sqrt(t))
        prof = self._profile(d, t, rmax)
        out = np.asarray(prof(np.minimum(r, rmax)))
        far = r > rmax
        if np.any(far):
            out[far] = r[far] ** (-self.alpha)
        return out

    def abs_measure(self):
        return self


@dataclass(frozen=True)
class LatticeComb(RoughMeasure):
    """Unit Dirac masses on the lattice (2 pi Z)^d, truncated for evaluation."""

    trunc_cells: int = 10

    label = "lattice_comb"

    def _radius(self, t, xmax):
        need = int(math.ceil((6.0 * math.sqrt(t) + xmax) / (2 * math.pi)))
        return max(self.trunc_cells, need)

    def j0(self, d, t, X):
        # the Gaussian factorizes: the periodized kernel is a product of
        # one-dimensional lattice sums along each axis
        R = self._radius(t, float(np.abs(X).max(initial=0.0)))
        ks = 2 * math.pi * np.arange(-R, R + 1)
        out = np.ones(X.shape[0])
        for axis in range(d):
            diff = X[:, axis][:, None] + ks[None, :]
            out *= np.exp(-diff * diff / (2 * t)).sum(axis=1)
        return (2 * math.pi * t) ** (-d / 2.0) * out

    def abs_measure(self):
        return self


@dataclass(frozen=True)
class SignedSum(RoughMeasure):
    """Linear combination sum_i coef_i * mu_i of menu measures."""

    terms: tuple = ()

    @property
    def label(self):
        return " + ".join(f"{c:g}*({m.label})" for c, m in self.terms)

    def j0(self, d, t, X):
        out = np.zeros(X.shape[0])
        for c, m in self.terms:
            out += c * m.j0(d, t, X)
        return out

    def abs_measure(self):
        return SignedSum(tuple((abs(c), m.abs_measure()) for c, m in self.terms))


def _as_points(x, d):
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[-1] != d:
        raise ValueError(f"points must have dimension {d}")
    return X


def j0_eval(mu: RoughMeasure, d: int, t: float, x) -> float:
    """Homogeneous solution J0(t, x; mu) = (p_t * mu)(x)."""
    if t <= 0:
        raise NonpositiveTime(f"J0 needs t > 0, got t={t}")
    X = _as_points(x, d)
    out = mu.j0(d, t, X)
    return float(out[0]) if out.size == 1 else out


def _search_box(mu: RoughMeasure, d: int, t: float):
    """Seed points and box half-width for the sup search."""
    seeds = [np.zeros(d)]
    width = 8.0 * math.sqrt(t) + 2.0
    periodic = False

    def walk(m):
        nonlocal width, periodic
        if isinstance(m, DiracComb):
            for loc, _ in m.atoms:
                seeds.append(np.asarray(loc, dtype=float))
        if isinstance(m, LatticeComb):
            periodic = True
        if isinstance(m, SignedSum):
            for _, part in m.terms:
                walk(part)

    walk(mu)
    if periodic:
        width = math.pi  # search one periodicity cell
    else:
        locs = np.array(seeds)
        width += float(np.abs(locs).max(initial=0.0))
    return seeds, width, periodic


def j0_sup(mu: RoughMeasure, d: int, t: float, refine_tol=1e-10) -> float:
    """sup_x |J0(t, x; mu)|, by shortcut where monotone, else grid refinement."""
    if t <= 0:
        raise NonpositiveTime(f"j0_sup needs t > 0, got t={t}")
    if isinstance(mu, Flat):
        return abs(mu.c)
    if isinstance(mu, PowerLawDensity):
        return mu.j0_at_origin(d, t)
    if isinstance(mu, DiracComb) and len(mu.atoms) == 1 and mu.atoms[0][1] >= 0:
        return mu.atoms[0][1] * (2 * math.pi * t) ** (-d / 2.0)
    if isinstance(mu, LatticeComb):
        return float(j0_eval(mu, d, t, np.zeros(d)))
    seeds, width, _ = _search_box(mu, d, t)
    npts = 7 if d >= 3 else 33
    best = 0.0
    best_x = np.zeros(d)
    for seed in seeds:
        center, w = np.asarray(seed, dtype=float), width
        local = -np.inf
        while True:
            ax = np.linspace(-w, w, npts)
            grids = np.meshgrid(*([ax] * d), indexing="ij")
            X = center + np.stack([g.ravel() for g in grids], axis=-1)
            vals = np.abs(mu.j0(d, t, X))
            i = int(np.argmax(vals))
            improved = vals[i] - local
            local = max(local, float(vals[i]))
            center = X[i]
            w /= 2.0
            if improved < refine_tol and w < 1e-4:
                break
        if local > best:
            best, best_x = local, center
    return best


@dataclass
class CMuResult:
    c_mu: float
    c_hat_mu: float
    t_grid: np.ndarray


def c_mu(mu: RoughMeasure, d: int, t_max: float = 1e3) -> CMuResult:
    """Finite-horizon proxies for the sup of J0(.,.;|mu|) at t=1 and over [1, t_max]."""
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    amu = mu.abs_measure()
    cmu = j0_sup(amu, d, 1.0)
    ngrid = max(2, int(math.ceil(4 * math.log2(t_max))) + 1)
    grid = np.geomspace(1.0, t_max, ngrid)
    chat = max(j0_sup(amu, d, float(t)) for t in grid)
    return CMuResult(c_mu=cmu, c_hat_mu=chat, t_grid=grid)


def perturbation_decay(mu: RoughMeasure, d: int, t_list) -> list:
    """j0_sup along an increasing positive time list."""
    ts = list(t_list)
    if any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_list must be positive and increasing")
    return [j0_sup(mu, d, float(t)) for t in ts]


def _theta_xgrid(mu: RoughMeasure, d: int, t_hi: float):
    seeds, width, periodic = _search_box(mu, d, t_hi)
    npts = 9 if d >= 3 else 129
    ax = np.linspace(-width, width, npts)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=-1)
    return np.concatenate([X, np.array(seeds).reshape(-1, d)], axis=0)


def theta(mu: RoughMeasure, d: int, tau: float, t_max: float = 100.0,
          single: bool = False, n_tgrid: int = 24) -> float:
    """Largest squared J0 oscillation over start times in [tau, t_max].

    With single=True returns the one-sided variant: the largest squared
    J0 magnitude over start times >= tau.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if isinstance(mu, Flat) and not single:
        return 0.0
    ts = np.geomspace(tau + 1.0, t_max + 1.0, n_tgrid)
    if isinstance(mu, (Flat, PowerLawDensity, LatticeComb)) or (
            isinstance(mu, DiracComb) and len(mu.atoms) == 1 and mu.atoms[0][1] >= 0):
        sups = np.array([j0_sup(mu, d, float(t)) for t in ts])
        if single:
            return float(np.max(sups) ** 2)
        # radial-monotone menu entries: oscillation is largest between extremes
        return float((np.max(sups) - np.min(sups)) ** 2)
    X = _theta_xgrid(mu, d, t_max + 1.0)
    vals = np.stack([mu.j0(d, float(t), X) for t in ts], axis=0)
    if single:
        return float(np.max(np.abs(vals)) ** 2)
    diff = np.abs(vals[:, None, :] - vals[None, :, :])
    return float(np.max(diff) ** 2)


def theta_tilde(mu: RoughMeasure, d: int, tau: float, t_max: float = 100.0) -> float:
    return theta(mu, d, tau, t_max=t_max, single=True)


# ---------------------------------------------------------------------------
# weight functions
# ---------------------------------------------------------------------------


class WeightFunction:
    label = "abstract"

    def value(self, r):
        raise NotImplementedError

    def integral(self, d: int) -> float:
        f = lambda r: self.value(r) * r ** (d - 1)
        return sphere_area(d) * radial_integral(f)

    def values(self, r):
        return np.vectorize(self.value)(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class ExpDecay(WeightFunction):
    a: float = 1.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("a must be positive")

    @property
    def label(self):
        return f"exp:a={self.a:g}"

    def value(self, r):
        return math.exp(-self.a * abs(r))

    def integral(self, d):
        return sphere_area(d) * math.gamma(d) / self.a ** d


@dataclass(frozen=True)
class PolyDecay(WeightFunction):
    a: float = 4.0

    @property
    def label(self):
        return f"poly:a={self.a:g}"

    def value(self, r):
        return 1.0 / (1.0 + abs(r) ** self.a)


@dataclass(frozen=True)
class CustomGrid(WeightFunction):
    """Tabulated radial weight; zero beyond the last node."""

    radii: tuple = ()
    vals: tuple = ()

    @property
    def label(self):
        return f"custom_weight:n={len(self.radii)}"

    def value(self, r):
        return float(np.interp(abs(r), self.radii, self.vals, right=0.0))


@dataclass
class WeightAdmissibility:
    c_rho: float
    violation: bool
    worst_point: tuple


def weight_admissible_check(rho: WeightFunction, d: int, T: float,
                            n_t: int = 6, n_r: int = 20, r_max: float = 30.0
                            ) -> WeightAdmissibility:
    """Empirical bound for sup (p_t * rho)(x) / rho(x) over a (t, x) grid.

    A violation is reported when the ratio keeps growing without bound under
    grid refinement (doubling test); this falsifies admissibility on the grid
    but proves nothing.
    """
    if T <= 0:
        raise ValueError("T must be positive")

    def max_ratio(n_t_, n_r_, r_max_):
        ts = np.geomspace(T / 64.0, T, n_t_)
        rs = np.concatenate([[0.0], np.geomspace(1e-2, r_max_, n_r_)])
        worst, wpt = 0.0, (0.0, 0.0)
        for t in ts:
            for r in rs:
                conv = heat_convolve_radial(rho.value, d, float(t), float(r))
                dens = rho.value(r)
                ratio = math.inf if dens <= 1e-300 and conv > 1e-300 else conv / max(dens, 1e-300)
                if ratio > worst:
                    worst, wpt = ratio, (float(t), float(r))
        return worst, wpt

    base, pt = max_ratio(n_t, n_r, r_max)
    refined, pt2 = max_ratio(n_t, 2 * n_r, 1.5 * r_max)
    violation = (not math.isfinite(refined)) or refined > 4.0 * max(base, 1.0)
    worst = max(base, refined)
    return WeightAdmissibility(c_rho=worst, violation=violation,
                               worst_point=pt2 if refined >= base else pt)


def weight_ratio_integrable(rho: WeightFunction, rho_tilde: WeightFunction,
                            d: int) -> float:
    """Integral of rho / rho_tilde over R^d; +inf when divergent."""
    f = lambda r: rho.value(r) / max(rho_tilde.value(r), 1e-300) * r ** (d - 1)
    return sphere_area(d) * radial_integral(f)


# ---------------------------------------------------------------------------
# weighted quadratic functional of the initial data
# ---------------------------------------------------------------------------


def g_rho(mu: RoughMeasure, rho: WeightFunction, d: int, t: float,
          box: float = None, n_grid: int = 64) -> float:
    """Weighted squared mass of J0: integral of J0(t, x)^2 rho(x) dx."""
    if t <= 0:
        raise NonpositiveTime(f"g_rho needs t > 0, got {t}")
    if isinstance(mu, Flat):
        return mu.c ** 2 * rho.integral(d)
    if isinstance(mu, DiracComb):
        # pairwise Gaussian product: p(t,x-a) p(t,x-b) = p(2t,a-b) p(t/2, x-(a+b)/2)
        locs, w = mu.locations(d), mu.weights()
        total = 0.0
        for i in range(len(w)):
            for j in range(len(w)):
                sep = locs[i] - locs[j]
                mid = 0.5 * (locs[i] + locs[j])
                pref = w[i] * w[j] * heat_kernel(d, 2 * t, sep)
                total += pref * heat_convolve_radial(rho.value, d, t / 2.0,
                                                     float(np.linalg.norm(mid)))
        return total
    if isinstance(mu, PowerLawDensity):
        rmax = 20.0 * math.sqrt(t) + 30.0
        prof = mu._profile(d, t, rmax)
        f = lambda r: (prof(r) if r <= rmax else r ** (-mu.alpha)) ** 2 \
            * rho.value(r) * r ** (d - 1)
        return sphere_area(d) * radial_integral(f)
    # generic midpoint-grid quadrature on a box sized by the weight's decay
    if box is None:
        box = 30.0
    ax = (np.arange(n_grid) + 0.5) / n_grid * 2 * box - box
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=-1)
    vals = mu.j0(d, t, X) ** 2 * rho.values(np.linalg.norm(X, axis=-1))
    return float(vals.sum() * (2 * box / n_grid) ** d)
