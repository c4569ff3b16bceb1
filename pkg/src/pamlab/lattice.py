"""Spectral solver for the mild stochastic heat equation on a periodic lattice.

The noise is synthesized directly from the spectral density: a real white
field is filtered by sqrt(fhat) in Fourier space, which makes the increment
covariance exactly dt * f_L(x - x') for the torus-periodized correlation f_L
and keeps every eigenvalue nonnegative by construction.  Time stepping is the
exponential-Euler mild scheme: the nonlinear noise term is applied pointwise,
then the exact heat multiplier acts diagonally in Fourier space, so the
linear flow is exact for every resolved mode.

Reproducibility contract: every Gaussian draw is indexed by (master seed,
experiment id, replicate, absolute step index) through counter-based Philox
streams, so results are bit-identical under any batching or thread count,
and restarted solutions consume literally the same increments on shared
time windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as _fft

from .errors import (
    DivergentDensityAtNode,
    GridMismatch,
    InconsistentSeed,
    NonpositiveTime,
    UnsupportedCoefficient,
)
from .heat_semigroup import (
    DiracComb,
    Flat,
    LatticeComb,
    PowerLawDensity,
    RoughMeasure,
    SignedSum,
)
from .spectral_kernels import SpectralMeasure

# experiment ids separating RNG stream families
EXP_SIMULATE = 1
EXP_RESTART = 2
EXP_ISOMETRY = 3
EXP_UNIQUENESS = 4

_STEP_OFFSET = 1 << 40  # absolute step indices may be negative (restart runs)


@dataclass(frozen=True)
class TorusGrid:
    """Periodic box [0, L)^d sampled with n points per axis (n a power of two)."""

    d: int = 3
    L: float = 8.0
    n: int = 16

    def __post_init__(self):
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two, got {self.n}")
        if self.L <= 0 or self.d < 1:
            raise ValueError("need L > 0 and d >= 1")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def n_sites(self) -> int:
        return self.n ** self.d

    def axis_freqs(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.h)

    def xi_sq_full(self) -> np.ndarray:
        k = self.axis_freqs()
        grids = np.meshgrid(*([k] * self.d), indexing="ij")
        return sum(g * g for g in grids)

    def xi_sq_rfft(self) -> np.ndarray:
        k = self.axis_freqs()
        kr = 2.0 * math.pi * np.fft.rfftfreq(self.n, d=self.h)
        axes = [k] * (self.d - 1) + [kr]
        grids = np.meshgrid(*axes, indexing="ij")
        return sum(g * g for g in grids)

    def site_coords(self) -> np.ndarray:
        ax = self.h * np.arange(self.n)
        grids = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(grids, axis=-1)

    def min_image_radius(self) -> np.ndarray:
        ax = self.h * np.arange(self.n)
        ax = np.minimum(ax, self.L - ax)
        grids = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.sqrt(sum(g * g for g in grids))


@dataclass(frozen=True)
class DiffusionCoefficient:
    """Multiplicative coefficient menu; b(0) = 0 and |b'| <= lam for all entries."""

    kind: str = "pam"  # pam | sine | saturating
    lam: float = 1.0
    M: float = 1.0  # clamp level, saturating only

    def __post_init__(self):
        if self.kind not in ("pam", "sine", "saturating"):
            raise UnsupportedCoefficient(f"unknown coefficient kind '{self.kind}'")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    @property
    def L_b(self) -> float:
        return self.lam

    @property
    def l_b(self) -> float:
        return self.lam if self.kind == "pam" else 0.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "pam":
            return self.lam * u
        if self.kind == "sine":
            return self.lam * np.sin(u)
        return self.lam * np.clip(u, -self.M, self.M)


@dataclass
class FieldState:
    grid: TorusGrid
    values: np.ndarray
    time_stamp: float = 0.0

    def __post_init__(self):
        if self.values.shape[-self.grid.d:] != self.grid.shape:
            raise GridMismatch("field shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")


@dataclass(frozen=True)
class NoiseSpec:
    grid: TorusGrid
    sqrt_eigen: np.ndarray  # sqrt(fhat) on the rfft frequency layout
    eigen_full: np.ndarray  # fhat on the full fft layout (diagnostics)

    @property
    def f_L0(self) -> float:
        """Periodized correlation at zero separation, L^-d sum of eigenvalues."""
        return float(self.eigen_full.sum()) / self.grid.L ** self.grid.d


def build_noise_spec(m: SpectralMeasure, grid: TorusGrid) -> NoiseSpec:
    """Tabulate fhat on the dual lattice; eigenvalues are nonnegative by construction."""

    def tab(xi_sq):
        radii = np.sqrt(xi_sq)
        uniq, inv = np.unique(np.round(radii, 12), return_inverse=True)
        vals = np.empty(uniq.shape)
        for i, r in enumerate(uniq):
            try:
                vals[i] = m.density(float(r), grid.d)
            except Exception as exc:
                raise DivergentDensityAtNode(
                    f"density of {m.label} not finite at dual node |xi|={r}: {exc}"
                ) from exc
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DivergentDensityAtNode(f"density of {m.label} invalid on dual lattice")
        return vals[inv].reshape(xi_sq.shape)

    eig_r = tab(grid.xi_sq_rfft())
    eig_f = tab(grid.xi_sq_full())
    return NoiseSpec(grid=grid, sqrt_eigen=np.sqrt(eig_r), eigen_full=eig_f)


def upsilon_h(spec: NoiseSpec) -> float:
    """Lattice Dalang sum L^-d sum_{j != 0} fhat(xi_j) / |xi_j|^2 (zero mode excluded)."""
    grid = spec.grid
    xi2 = grid.xi_sq_full().ravel()
    eig = spec.eigen_full.ravel()
    mask = xi2 > 0
    return float((eig[mask] / xi2[mask]).sum()) / grid.L ** grid.d


def k_h(spec: NoiseSpec, t: float) -> float:
    """Lattice covariance kernel L^-d sum fhat(xi_j) exp(-t |xi_j|^2)."""
    grid = spec.grid
    xi2 = grid.xi_sq_full().ravel()
    return float((spec.eigen_full.ravel() * np.exp(-t * xi2)).sum()) / grid.L ** grid.d


def H_h(spec: NoiseSpec, t: float) -> float:
    """Lattice tail integral of k_h, zero mode excluded (it is not integrable)."""
    grid = spec.grid
    xi2 = grid.xi_sq_full().ravel()
    eig = spec.eigen_full.ravel()
    mask = xi2 > 0
    return float((eig[mask] * np.exp(-t * xi2[mask]) / xi2[mask]).sum()) / grid.L ** grid.d


def periodized_correlation(spec: NoiseSpec) -> np.ndarray:
    """f_L on the site grid: L^-d sum_j fhat(xi_j) exp(i xi_j . z)."""
    grid = spec.grid
    coef = spec.sqrt_eigen ** 2
    out = _fft.irfftn(coef, s=grid.shape) * grid.n_sites / grid.L ** grid.d
    return out


def wraparound_bound(grid: TorusGrid, T: float) -> float:
    """Gaussian tail bound exp(-L^2/(8T)) for torus-vs-plane kernel leakage."""
    return math.exp(-grid.L ** 2 / (8.0 * max(T, 1e-12)))


# ---------------------------------------------------------------------------
# RNG streams
# ---------------------------------------------------------------------------


def stream(seed: int, experiment: int, replicate: int, step_enc: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF,
                    ((experiment & 0xFFFFFFFF) << 32) | (replicate & 0xFFFFFFFF)],
                   dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=[0, step_enc, 0, 0])
    return np.random.Generator(bg)


def _step_enc(step_index: int) -> int:
    enc = _STEP_OFFSET + step_index
    if enc < 0:
        raise InconsistentSeed(f"step index {step_index} out of the encodable range")
    return enc


def gaussian_batch(shape, seed, experiment, replicates, step_index) -> np.ndarray:
    """White standard-normal fields, one independent stream per replicate."""
    out = np.empty((len(replicates),) + tuple(shape))
    enc = _step_enc(step_index)
    for i, rep in enumerate(replicates):
        out[i] = stream(seed, experiment, rep, enc).standard_normal(shape)
    return out


# ---------------------------------------------------------------------------
# increments and stepping
# ---------------------------------------------------------------------------


def _colorize(spec: NoiseSpec, dt: float, white: np.ndarray) -> np.ndarray:
    """Filter white fields by sqrt(fhat); scales to increment variance dt * f_L(0)."""
    grid = spec.grid
    axes = tuple(range(white.ndim - grid.d, white.ndim))
    spec_w = _fft.rfftn(white, axes=axes)
    spec_w *= spec.sqrt_eigen
    colored = _fft.irfftn(spec_w, s=grid.shape, axes=axes)
    return math.sqrt(dt) * grid.h ** (-grid.d / 2.0) * colored


def sample_increment(spec: NoiseSpec, dt: float, seed: int, replicate: int = 0,
                     step_index: int = 0, experiment: int = EXP_SIMULATE) -> FieldState:
    """One noise increment Delta W with Cov = dt * f_L(x - x')."""
    if dt <= 0:
        raise NonpositiveTime("dt must be positive")
    white = gaussian_batch(spec.grid.shape, seed, experiment, [replicate], step_index)
    return FieldState(grid=spec.grid, values=_colorize(spec, dt, white)[0])


def heat_multiplier(grid: TorusGrid, dt: float) -> np.ndarray:
    """Diagonal symbol exp(-|xi|^2 dt / 2) on the rfft layout."""
    return np.exp(-grid.xi_sq_rfft() * dt / 2.0)


def _advance(values: np.ndarray, b: DiffusionCoefficient, incr: np.ndarray,
             mult: np.ndarray, grid: TorusGrid) -> np.ndarray:
    axes = tuple(range(values.ndim - grid.d, values.ndim))
    v = values + b(values) * incr
    return _fft.irfftn(_fft.rfftn(v, axes=axes) * mult, s=grid.shape, axes=axes)


def step(state: FieldState, b: DiffusionCoefficient, incr: FieldState, dt: float) -> FieldState:
    """Exponential-Euler mild step: add noise pointwise, then exact heat flow."""
    if state.grid != incr.grid:
        raise GridMismatch("state and increment live on different grids")
    mult = heat_multiplier(state.grid, dt)
    vals = _advance(state.values, b, incr.values, mult, state.grid)
    return FieldState(grid=state.grid, values=vals, time_stamp=state.time_stamp + dt)


# ---------------------------------------------------------------------------
# initial data on the lattice
# ---------------------------------------------------------------------------


def initial_field(mu: RoughMeasure, grid: TorusGrid, deposit: str = "nearest") -> np.ndarray:
    """Sample the initial measure on the lattice; atoms deposit w / h^d."""
    h, d, n = grid.h, grid.d, grid.n
    if isinstance(mu, Flat):
        return np.full(grid.shape, float(mu.c))
    if isinstance(mu, DiracComb):
        out = np.zeros(grid.shape)
        for loc, w in mu.atoms:
            loc = np.asarray(loc, dtype=float)
            if deposit == "mollified":
                X = grid.site_coords()
                diff = X - loc
                diff -= grid.L * np.round(diff / grid.L)
                r2 = np.sum(diff * diff, axis=-1)
                sig2 = (h / 2.0) ** 2
                out += w * np.exp(-r2 / (2 * sig2)) / (2 * math.pi * sig2) ** (d / 2.0)
            else:
                idx = tuple(int(round(c / h)) % n for c in loc)
                out[idx] += w / h ** d
        return out
    if isinstance(mu, LatticeComb):
        cells = grid.L / (2.0 * math.pi)
        if abs(cells - round(cells)) > 1e-9:
            raise ValueError("lattice comb needs the torus size to be a multiple of 2*pi")
        stride = 2.0 * math.pi / h
        if abs(stride - round(stride)) > 1e-9:
            raise ValueError("lattice comb atoms must land on grid sites (2*pi/h integer)")
        out = np.zeros(grid.shape)
        sl = tuple([slice(0, n, int(round(stride)))] * d)
        out[sl] = 1.0 / h ** d
        return out
    if isinstance(mu, PowerLawDensity):
        r = grid.min_image_radius()
        out = np.where(r > 0, np.maximum(r, 1e-300) ** (-mu.alpha), 0.0)
        # origin site: average of |x|^-alpha over the equal-volume ball
        vball = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
        rc = h * vball ** (-1.0 / d)
        out[(0,) * d] = d / (d - mu.alpha) * rc ** (-mu.alpha)
        return out
    if isinstance(mu, SignedSum):
        out = np.zeros(grid.shape)
        for c, part in mu.terms:
            out += c * initial_field(part, grid, deposit=deposit)
        return out
    raise ValueError(f"no lattice sampling rule for measure {mu.label}")


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------


@dataclass
class SnapshotSet:
    grid: TorusGrid
    times: list
    fields: dict  # time -> array of shape (replicates,) + grid.shape
    replicates: int


def _steps_for(T: float, dt: float) -> int:
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"horizon T={T} is not a multiple of dt={dt}")
    return nsteps


def simulate(m: SpectralMeasure, grid: TorusGrid, b: DiffusionCoefficient,
             mu: RoughMeasure, T: float, dt: float, replicates: int, seed: int,
             snapshot_times=None, deposit: str = "nearest",
             batch: int = 512, threads: int = 1) -> SnapshotSet:
    """March the mild scheme from J0-sampled initial data; reproducible by seed."""
    spec = build_noise_spec(m, grid)
    nsteps = _steps_for(T, dt)
    snaps = sorted(set(snapshot_times or [T]))
    snap_steps = {}
    for t in snaps:
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9:
            raise ValueError(f"snapshot time {t} is not a multiple of dt={dt}")
        snap_steps[k] = float(t)
    mult = heat_multiplier(grid, dt)
    u0 = initial_field(mu, grid, deposit=deposit)
    fields = {t: np.empty((replicates,) + grid.shape) for t in snap_steps.values()}

    def run_chunk(lo, hi):
        reps = list(range(lo, hi))
        u = np.broadcast_to(u0, (len(reps),) + grid.shape).copy()
        if 0 in snap_steps:
            fields[snap_steps[0]][lo:hi] = u
        for k in range(nsteps):
            white = gaussian_batch(grid.shape, seed, EXP_SIMULATE, reps, k)
            incr = _colorize(spec, dt, white)
            u = _advance(u, b, incr, mult, grid)
            if k + 1 in snap_steps:
                fields[snap_steps[k + 1]][lo:hi] = u

    _run_chunked(run_chunk, replicates, batch, threads)
    return SnapshotSet(grid=grid, times=[snap_steps[k] for k in sorted(snap_steps)],
                       fields=fields, replicates=replicates)


def _run_chunked(run_chunk, replicates: int, batch: int, threads: int):
    ranges = [(lo, min(lo + batch, replicates)) for lo in range(0, replicates, batch)]
    if threads <= 1 or len(ranges) == 1:
        for lo, hi in ranges:
            run_chunk(lo, hi)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as ex:
        list(ex.map(lambda r: run_chunk(*r), ranges))


def restart_pair(m: SpectralMeasure, grid: TorusGrid, b: DiffusionCoefficient,
                 mu: RoughMeasure, K_list, steps_per_unit: int, replicates: int,
                 seed: int, deposit: str = "nearest", batch: int = 512,
                 threads: int = 1) -> dict:
    """Two-sided restart construction: for each K, start from mu at time -(K+1),
    march to time 0 consuming absolute-time-indexed increments.

    Increments are keyed by the absolute step index, so for L > K the runs
    u_L and u_K consume literally identical noise on [-K, 0]; the horizon
    [-K-1, -K] is the one-unit warm-up phase from the raw initial measure.
    Returns {K: array of shape (replicates,) + grid.shape} at time 0.
    """
    spu = int(steps_per_unit)
    if spu < 1:
        raise ValueError("steps_per_unit must be a positive integer")
    Ks = sorted(int(K) for K in K_list)
    if Ks[0] <= 0 or len(set(Ks)) != len(Ks):
        raise ValueError("K_list must be positive, strictly increasing integers")
    dt = 1.0 / spu
    spec = build_noise_spec(m, grid)
    mult = heat_multiplier(grid, dt)
    u0 = initial_field(mu, grid, deposit=deposit)
    out = {K: np.empty((replicates,) + grid.shape) for K in Ks}

    def run_chunk(lo, hi):
        reps = list(range(lo, hi))
        for K in Ks:
            u = np.broadcast_to(u0, (len(reps),) + grid.shape).copy()
            for step_index in range(-(K + 1) * spu, 0):
                white = gaussian_batch(grid.shape, seed, EXP_RESTART, reps, step_index)
                incr = _colorize(spec, dt, white)
                u = _advance(u, b, incr, mult, grid)
            out[K][lo:hi] = u

    _run_chunked(run_chunk, replicates, batch, threads)
    return out


def moment_pde_oracle(lam: float, m: SpectralMeasure, grid: TorusGrid, T: float,
                      dt: float, c: float = 1.0) -> tuple:
    """Deterministic pair-correlation evolution for the linear coefficient.

    For b(u) = lam * u with flat level c, M(t, z) = E[u(t,x) u(t,x+z)] solves
    dM/dt = Laplacian_z M + lam^2 f_L(z) M with M(0, .) = c^2.  Lie splitting:
    exact spectral heat flow with symbol exp(-|xi|^2 dt), then pointwise
    multiplication by exp(lam^2 f_L dt).  Returns (times, M(t, 0), final field).
    """
    if lam < 0:
        raise UnsupportedCoefficient("the pair-correlation oracle covers b(u) = lam*u only")
    spec = build_noise_spec(m, grid)
    fL = periodized_correlation(spec)
    nsteps = _steps_for(T, dt)
    mult = np.exp(-grid.xi_sq_rfft() * dt)
    gain = np.exp(lam * lam * fL * dt)
    M = np.full(grid.shape, float(c * c))
    m00 = np.empty(nsteps + 1)
    m00[0] = M[(0,) * grid.d]
    for k in range(nsteps):
        M = _fft.irfftn(_fft.rfftn(M) * mult, s=grid.shape)
        M = M * gain
        m00[k + 1] = M[(0,) * grid.d]
    times = dt * np.arange(nsteps + 1)
    return times, m00, M


@dataclass
class IsometryResult:
    empirical: float
    expected: float
    rel_error: float
    se_units: float
    samples: int


def ito_isometry_check(spec: NoiseSpec, dt: float, v: np.ndarray, samples: int,
                       seed: int, batch: int = 1024) -> IsometryResult:
    """Compare Var(sum_x v(x) dW(x) h^d) with dt * sum v f_L v h^(2d)."""
    if samples < 10 ** 3:
        raise ValueError("need at least 1e3 samples")
    grid = spec.grid
    hd = grid.h ** grid.d
    # exact quadratic form via the full FFT: sum_jj' v f_L v = L^-d sum_j fhat |vhat|^2
    vhat2 = np.abs(_fft.fftn(v)) ** 2
    expected = dt * hd * hd * float((spec.eigen_full * vhat2).sum()) / grid.L ** grid.d
    acc = 0.0
    acc2 = 0.0
    done = 0
    while done < samples:
        nb = min(batch, samples - done)
        white = gaussian_batch(grid.shape, seed, EXP_ISOMETRY,
                               range(done, done + nb), 0)
        incr = _colorize(spec, dt, white)
        s = (incr * v).sum(axis=tuple(range(1, 1 + grid.d))) * hd
        acc += float((s * s).sum())
        acc2 += float((s ** 4).sum())
        done += nb
    emp = acc / samples
    var_of_sq = max(acc2 / samples - emp * emp, 0.0)
    se = math.sqrt(var_of_sq / samples)
    denom = max(abs(expected), 1e-300)
    return IsometryResult(empirical=emp, expected=expected,
                          rel_error=abs(emp - expected) / denom,
                          se_units=abs(emp - expected) / max(se, 1e-300),
                          samples=samples)
