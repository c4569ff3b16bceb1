"""Monte Carlo moment estimation, phase-transition sweeps, the restart Cauchy
experiment with its computable envelope, and the common-noise uniqueness run.

Estimators consume immutable snapshot sets produced by the lattice solver.
Lattice constants (the zero-mode-excluded Dalang sum, the lattice kernel
tail) are used for on-lattice gates; continuum values are reported alongside
so the lattice-vs-plane gap stays visible in outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MismatchedGrids,
    MissingTime,
    NonpositiveMean,
    PreconditionViolated,
    WeakDisorderViolated,
)
from . import heat_semigroup as hsg
from . import lattice as lat
from . import renewal_gronwall as rg
from . import spectral_kernels as sk


@dataclass
class EnsembleStats:
    t: float
    probe: str
    p: float
    mean: float
    variance: float
    replicates: int

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.replicates)


def estimate_moment(snaps: lat.SnapshotSet, p: float, t: float,
                    probe="grid_mean") -> EnsembleStats:
    """Unbiased sample mean of u(t, probe)^p across replicates."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if t not in snaps.fields:
        raise MissingTime(f"no snapshot at t={t}; have {snaps.times}")
    u = snaps.fields[t]
    d = snaps.grid.d
    if probe == "grid_mean":
        vals = (u ** p).mean(axis=tuple(range(1, 1 + d)))
        label = "grid_mean"
    else:
        idx = (slice(None),) + tuple(int(i) for i in probe)
        vals = u[idx] ** p
        label = str(tuple(int(i) for i in probe))
    var = float(vals.var(ddof=1)) if vals.size > 1 else 0.0
    return EnsembleStats(t=float(t), probe=label, p=float(p),
                         mean=float(vals.mean()), variance=var,
                         replicates=snaps.replicates)


@dataclass
class LyapunovFit:
    slope: float
    intercept: float
    ci_lo: float
    ci_hi: float
    window: tuple


def lyapunov_fit(series) -> LyapunovFit:
    """Least-squares slope of log-mean versus t with a standard 95% CI."""
    pts = [(float(t), float(m)) for t, m in series]
    if len(pts) < 4:
        raise ValueError("need at least 4 time points")
    ts = np.array([p[0] for p in pts])
    ms = np.array([p[1] for p in pts])
    if np.any(ms <= 0):
        raise NonpositiveMean("log fit needs positive means")
    y = np.log(ms)
    A = np.vstack([ts, np.ones_like(ts)]).T
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    n = len(ts)
    resid = y - A @ coef
    s2 = float(resid @ resid) / max(n - 2, 1)
    sxx = float(((ts - ts.mean()) ** 2).sum())
    se_slope = math.sqrt(s2 / max(sxx, 1e-300))
    from scipy.stats import t as student_t

    tcrit = float(student_t.ppf(0.975, max(n - 2, 1)))
    return LyapunovFit(slope=slope, intercept=intercept,
                       ci_lo=slope - tcrit * se_slope,
                       ci_hi=slope + tcrit * se_slope,
                       window=(float(ts[0]), float(ts[-1])))


@dataclass
class PhasePoint:
    lam: float
    fit: LyapunovFit
    slope_tol: float
    classification: str  # bounded | growing


@dataclass
class PhaseSweepResult:
    points: list
    crossover: tuple  # (largest bounded lambda, smallest growing lambda)
    monotone: bool


def phase_sweep(lambda_grid, m: sk.SpectralMeasure, grid: lat.TorusGrid,
                T: float, dt: float, c: float = 1.0, tail_frac: float = 0.5,
                slope_tol_abs: float = 1e-3) -> PhaseSweepResult:
    """Classify second-moment growth per lambda from the deterministic oracle.

    Bounded means the tail-window slope CI reaches down to the tolerance
    floor; the floor accounts for the torus zero-mode drift lam^2 fhat(0)/L^d,
    a lattice artifact with no continuum counterpart, plus a small absolute
    allowance.
    """
    spec = lat.build_noise_spec(m, grid)
    fhat0 = float(spec.eigen_full.reshape(-1)[0])  # node j=0 sits first
    points = []
    for lam in lambda_grid:
        times, m00, _ = lat.moment_pde_oracle(float(lam), m, grid, T, dt, c)
        i0 = int(len(times) * (1.0 - tail_frac))
        fit = lyapunov_fit(list(zip(times[i0:], m00[i0:])))
        tol = float(lam) ** 2 * fhat0 / grid.L ** grid.d + slope_tol_abs
        cls = "bounded" if fit.ci_lo <= tol else "growing"
        points.append(PhasePoint(lam=float(lam), fit=fit, slope_tol=tol,
                                 classification=cls))
    labels = [p.classification for p in points]
    lo = None
    hi = None
    monotone = True
    seen_growing = False
    for p in points:
        if p.classification == "growing":
            seen_growing = True
            if hi is None:
                hi = p.lam
        else:
            if seen_growing:
                monotone = False
            lo = p.lam if not seen_growing else lo
    return PhaseSweepResult(points=points, crossover=(lo, hi), monotone=monotone)


@dataclass
class BoundCheck:
    passed: bool
    estimate: float
    se: float
    bound: float
    heuristic_bound: float
    margin: float


def moment_bound_check(stats: EnsembleStats, j0_value: float, L_b: float,
                       ups0: float) -> BoundCheck:
    """One-sided second-moment bound check at a probe.

    The certified bound is J0^2 / (L_b^2 (1 - 4 L_b^2 ups0)); the tighter
    J0^2 / (1 - 4 L_b^2 ups0) is reported as a non-certified heuristic
    (the certified constant is vacuous as L_b -> 0).
    """
    q = 4.0 * L_b ** 2 * ups0
    if q >= 1.0:
        raise PreconditionViolated(f"4 L_b^2 ups0 = {q:.4g} >= 1")
    heur = j0_value ** 2 / (1.0 - q)
    bound = math.inf if L_b == 0.0 else heur / L_b ** 2
    lhs = stats.mean - 3.0 * stats.se
    return BoundCheck(passed=lhs <= bound, estimate=stats.mean, se=stats.se,
                      bound=bound, heuristic_bound=heur, margin=bound - lhs)


def weighted_norm(values: np.ndarray, rho: hsg.WeightFunction,
                  grid: lat.TorusGrid) -> float:
    """Discrete weighted L2 norm sum u(x)^2 rho(x) h^d (min-image radii)."""
    w = rho.values(grid.min_image_radius())
    return float((values ** 2 * w).sum() * grid.h ** grid.d)


@dataclass
class CauchyEntry:
    K: int
    K2: int
    j_hat: float
    se: float
    envelope: float


@dataclass
class CauchyReport:
    entries: list
    strictly_decreasing: bool
    min_decrease_z: float

    def ratio(self, K_num: int, K_den: int) -> float:
        vals = {e.K: e.j_hat for e in self.entries}
        return vals[K_num] / vals[K_den]


def cauchy_metric(restart_out: dict, K_pairs, envelopes=None) -> CauchyReport:
    """Grid-and-replicate mean-square gap between restart depths K and 2K."""
    shapes = {v.shape for v in restart_out.values()}
    if len(shapes) != 1:
        raise MismatchedGrids("restart outputs have mismatched shapes")
    entries = []
    stats = []
    for K, K2 in K_pairs:
        diff = restart_out[K2] - restart_out[K]
        per_rep = (diff ** 2).mean(axis=tuple(range(1, diff.ndim)))
        j = float(per_rep.mean())
        se = float(per_rep.std(ddof=1)) / math.sqrt(per_rep.size)
        env = math.nan if envelopes is None else float(envelopes.get(K, math.nan))
        entries.append(CauchyEntry(K=K, K2=K2, j_hat=j, se=se, envelope=env))
        stats.append((j, se))
    dec = True
    min_z = math.inf
    for (j1, s1), (j2, s2) in zip(stats, stats[1:]):
        z = (j1 - j2) / math.sqrt(s1 * s1 + s2 * s2 + 1e-300)
        min_z = min(min_z, z)
        if j2 >= j1:
            dec = False
    return CauchyReport(entries=entries, strictly_decreasing=dec,
                        min_decrease_z=min_z)


def cauchy_envelope(mu: hsg.RoughMeasure, m: sk.SpectralMeasure, L_b: float,
                    d: int, t: float, K: float, tol: float = 1e-12,
                    lattice_spec: lat.NoiseSpec = None,
                    theta_t_max: float = 200.0) -> float:
    """Computable gap envelope: the decay seed g_K plus its renewal series.

    g_K(t) = 16 Theta(t+K) + 4 (8 C_mu^2 + C_hat_mu^2) H(t+K) / (1 - 4 L_b^2 ups0),
    fed through the geometric series bound with beta = 2 L_b^2.  With a
    lattice spec the kernel sums replace the continuum integrals (zero mode
    excluded, as it is not integrable on the torus).
    """
    if lattice_spec is not None:
        H = lambda s: lat.H_h(lattice_spec, s)
        ups0 = lat.upsilon_h(lattice_spec)
        kf = _LatticeKernel(lattice_spec)
    else:
        H = lambda s: sk.covariance_H(m, d, s)
        ups0 = sk.upsilon(m, d, 0.0)
        kf = rg.SpectralKernelFn(m, d)
    q = 4.0 * L_b ** 2 * ups0
    if not math.isfinite(ups0) or q >= 1.0:
        raise WeakDisorderViolated(f"4 L_b^2 ups0 = {q:.4g} must be < 1")
    if isinstance(mu, hsg.Flat):
        cmu = chat = abs(mu.c)
        theta_fn = lambda tau: 0.0
    else:
        cm = hsg.c_mu(mu, d, t_max=max(theta_t_max, 1.0))
        cmu, chat = cm.c_mu, cm.c_hat_mu
        cache = {}

        def theta_fn(tau):
            key = round(tau, 9)
            if key not in cache:
                cache[key] = hsg.theta(mu, d, tau, t_max=theta_t_max)
            return cache[key]

    pref = 4.0 * (8.0 * cmu ** 2 + chat ** 2) / (1.0 - q)

    def g_K(s):
        return 16.0 * theta_fn(s + K) + pref * H(s + K)

    g = _CallableDecay(g_K)
    beta = 2.0 * L_b ** 2
    return rg.series_bound(g, kf, beta, t, tol=tol)


class _CallableDecay(rg.DecayFunction):
    label = "g_K"

    def __init__(self, fn):
        self._fn = fn

    def __call__(self, t):
        return self._fn(t)


class _LatticeKernel(rg.KernelFunction):
    """Lattice covariance kernel with the (non-integrable) zero mode removed."""

    def __init__(self, spec: lat.NoiseSpec):
        self.spec = spec
        self._zero = float(spec.eigen_full.reshape(-1)[0]) / spec.grid.L ** spec.grid.d

    label = "k_h"

    def __call__(self, s):
        return lat.k_h(self.spec, s) - self._zero

    def h(self, t):
        return lat.H_h(self.spec, t)


@dataclass
class UniquenessReport:
    times: list
    msd: list
    se: list
    j0_sup: list
    envelope: list
    c_fit: float


def uniqueness_pair(mu1: hsg.RoughMeasure, mu2: hsg.RoughMeasure,
                    m: sk.SpectralMeasure, grid: lat.TorusGrid,
                    b: lat.DiffusionCoefficient, times, dt: float,
                    replicates: int, seed: int, batch: int = 512,
                    threads: int = 1) -> UniquenessReport:
    """Common-noise pair run: mean-square gap trajectory and its decay envelope.

    Both solutions consume identical increments.  The envelope feeds the
    fitted sup-decay of J0(t, .; mu1 - mu2) through the renewal series bound
    (seed 2 sup^2, kernel k_h, beta = 2 L_b^2), mirroring the uniqueness
    argument's Volterra structure.
    """
    spec = lat.build_noise_spec(m, grid)
    ts = sorted(float(t) for t in times)
    T = ts[-1]
    nsteps = lat._steps_for(T, dt)
    snap_steps = {}
    for t in ts:
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9:
            raise ValueError(f"time {t} is not a multiple of dt")
        snap_steps[k] = t
    mult = lat.heat_multiplier(grid, dt)
    u10 = lat.initial_field(mu1, grid)
    u20 = lat.initial_field(mu2, grid)
    acc = {t: [] for t in ts}

    def run_chunk(lo, hi):
        reps = list(range(lo, hi))
        u1 = np.broadcast_to(u10, (len(reps),) + grid.shape).copy()
        u2 = np.broadcast_to(u20, (len(reps),) + grid.shape).copy()
        for k in range(nsteps):
            white = lat.gaussian_batch(grid.shape, seed, lat.EXP_UNIQUENESS, reps, k)
            incr = lat._colorize(spec, dt, white)
            u1 = lat._advance(u1, b, incr, mult, grid)
            u2 = lat._advance(u2, b, incr, mult, grid)
            if k + 1 in snap_steps:
                d2 = ((u1 - u2) ** 2).mean(axis=tuple(range(1, 1 + grid.d)))
                acc[snap_steps[k + 1]].append(d2)

    lat._run_chunked(run_chunk, replicates, batch, threads)
    msd, ses = [], []
    for t in ts:
        vals = np.concatenate(acc[t])
        msd.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1)) / math.sqrt(vals.size))
    # sup decay of the homogeneous difference and the fitted exp(-t/2) level
    mud = hsg.SignedSum(((1.0, mu1), (-1.0, mu2)))
    fit_grid = np.geomspace(0.5, T, 12)
    sup_fit = [hsg.j0_sup(mud, grid.d, float(s)) for s in fit_grid]
    c_fit = max(s * math.exp(tt / 2.0) for tt, s in zip(fit_grid, sup_fit))
    g = rg.ScaledDecayFn(rg.ExpDecayFn(1.0), 2.0 * c_fit ** 2)
    kf = _LatticeKernel(spec)
    beta = 2.0 * b.L_b ** 2
    env = [rg.series_bound(g, kf, beta, t) for t in ts]
    j0s = [hsg.j0_sup(mud, grid.d, t) for t in ts]
    return UniquenessReport(times=ts, msd=msd, se=ses, j0_sup=j0s,
                            envelope=env, c_fit=c_fit)
