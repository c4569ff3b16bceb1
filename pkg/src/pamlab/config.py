"""Strict key-value experiment configuration and the kernel/measure registries.

The config format is one `key = value` pair per line, `#` comments, UTF-8.
Unknown keys are errors (with a close-match suggestion); every value is
validated on parse so failures carry the offending field name.
"""

from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, field, fields, replace

from . import heat_semigroup as hsg
from . import spectral_kernels as sk
from .errors import ParseError, ValidationError


# ---------------------------------------------------------------------------
# kernel and measure registries (string identifiers used in config files)
# ---------------------------------------------------------------------------


def _parse_params(body: str) -> dict:
    out = {}
    if not body:
        return out
    for item in body.split(","):
        if "=" not in item:
            raise ValueError(f"malformed parameter '{item}' (expected name=value)")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_kernel(ident: str) -> sk.SpectralMeasure:
    """Resolve a kernel identifier like 'gaussian:a=1' or 'bessel_corr:s=4'."""
    ident = ident.strip()
    name, _, body = ident.partition(":")
    try:
        if name == "white":
            return sk.White()
        if name == "gaussian":
            p = _parse_params(body)
            return sk.GaussianSpectral(a=float(p.get("a", 1.0)))
        if name == "bessel_corr":
            p = _parse_params(body)
            return sk.BesselAsCorrelation(s=float(p.get("s", 4.0)))
        if name == "bessel_spec":
            p = _parse_params(body)
            return sk.BesselAsSpectral(s=float(p.get("s", 2.5)))
        if name == "riesz":
            p = _parse_params(body)
            return sk.RieszType(s1=float(p.get("s1", 1.5)), s2=float(p.get("s2", 2.5)))
        if name == "mollified_ring":
            p = _parse_params(body)
            return sk.mollified_ring(lo=float(p.get("lo", 0.5)), hi=float(p.get("hi", 2.5)))
        if name == "custom":
            p = _parse_params(body)
            radii = tuple(float(x) for x in p["r"].split(";"))
            vals = tuple(float(x) for x in p["v"].split(";"))
            tail = float(p.get("tail", math.inf))
            return sk.CustomRadial(radii=radii, values=vals, tail_exponent=tail)
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad kernel id '{ident}': {exc}", field="kernel") from exc
    raise ValidationError(f"unknown kernel '{name}' "
                          f"(known: white, gaussian, bessel_corr, bessel_spec, "
                          f"riesz, mollified_ring, custom)", field="kernel")


def default_kernel_menu(d: int = 3) -> list:
    """Representative kernel list used by menu-wide checks and reports."""
    return [
        sk.White(),
        sk.GaussianSpectral(1.0),
        sk.GaussianSpectral(8.0),
        sk.BesselAsCorrelation(4.0),
        sk.BesselAsCorrelation(2.5),
        sk.BesselAsSpectral(2.5),
        sk.RieszType(1.5, 2.5),
        sk.mollified_ring(0.5, 2.5),
    ]


def _parse_one_measure(term: str, dimension: int) -> hsg.RoughMeasure:
    term = term.strip()
    name, _, body = term.partition(":")
    if name == "flat":
        return hsg.Flat(c=float(body) if body else 1.0)
    if name == "dirac":
        if body and "=" not in body:
            # shorthand 'dirac:0' places a unit atom at the origin-coordinate given
            loc = tuple([float(body)] * dimension)
            return hsg.dirac(loc, 1.0)
        p = _parse_params(body)
        loc = tuple(float(x) for x in p.get("x", ";".join(["0"] * dimension)).split(";"))
        return hsg.dirac(loc, float(p.get("w", 1.0)))
    if name == "powerlaw":
        p = _parse_params(body)
        return hsg.PowerLawDensity(alpha=float(p.get("alpha", 1.0)))
    if name == "lattice_comb":
        return hsg.LatticeComb()
    raise ValidationError(f"unknown measure '{name}' "
                          f"(known: flat, dirac, powerlaw, lattice_comb)", field="mu")


def parse_measure(ident: str, dimension: int = 3) -> hsg.RoughMeasure:
    """Resolve a measure expression like 'flat:1 + dirac:0' (signed sums)."""
    import re

    parts = re.split(r"\s+([+-])\s+", ident.strip())
    terms = [(1.0, _parse_one_measure(parts[0], dimension))]
    for op, chunk in zip(parts[1::2], parts[2::2]):
        terms.append((1.0 if op == "+" else -1.0,
                      _parse_one_measure(chunk, dimension)))
    if len(terms) == 1:
        return terms[0][1]
    return hsg.SignedSum(tuple(terms))


def parse_weight(ident: str) -> hsg.WeightFunction:
    name, _, body = ident.strip().partition(":")
    p = _parse_params(body)
    if name == "exp":
        return hsg.ExpDecay(a=float(p.get("a", 1.0)))
    if name == "poly":
        return hsg.PolyDecay(a=float(p.get("a", 4.0)))
    raise ValidationError(f"unknown weight '{name}' (known: exp, poly)", field="weight")


# ---------------------------------------------------------------------------
# the experiment configuration
# ---------------------------------------------------------------------------


@dataclass
class SimulationConfig:
    kernel: str = "gaussian:a=1"
    dimension: int = 3
    n: int = 16
    L: float = 8.0
    dt: float = None  # defaults to min(0.01, h^2) when omitted
    T: float = 1.0
    lam: float = 1.0
    coefficient: str = "pam"
    clamp: float = 1.0
    mu: str = "flat:1"
    mu2: str = ""
    replicates: int = 100
    seed: int = 12345
    K_list: tuple = (1, 2, 4, 8)
    steps_per_unit: int = 16
    lambda_grid: tuple = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    weight: str = "exp:a=1"
    times: tuple = ()
    probe: str = "grid_mean"
    output_format: str = "csv"
    deposit: str = "nearest"
    batch: int = 512
    tail_frac: float = 0.5
    slope_tol: float = 1e-3
    bridge_samples: int = 100000
    bridge_grid: int = 128

    def resolved_dt(self) -> float:
        if self.dt is not None:
            return self.dt
        h = self.L / self.n
        return min(0.01, h * h)

    def resolved_times(self) -> tuple:
        return self.times if self.times else (self.T,)


def _to_int(s):
    v = int(s)
    return v


def _to_float(s):
    return float(s)


def _to_float_list(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _to_int_list(s):
    return tuple(int(x) for x in s.replace(",", " ").split())


_SCHEMA = {
    "kernel": str,
    "dimension": _to_int,
    "n": _to_int,
    "L": _to_float,
    "dt": _to_float,
    "T": _to_float,
    "lambda": _to_float,
    "coefficient": str,
    "clamp": _to_float,
    "mu": str,
    "mu2": str,
    "replicates": _to_int,
    "seed": _to_int,
    "K_list": _to_int_list,
    "steps_per_unit": _to_int,
    "lambda_grid": _to_float_list,
    "weight": str,
    "times": _to_float_list,
    "probe": str,
    "output_format": str,
    "deposit": str,
    "batch": _to_int,
    "tail_frac": _to_float,
    "slope_tol": _to_float,
    "bridge_samples": _to_int,
    "bridge_grid": _to_int,
}

_KEY_TO_FIELD = {"lambda": "lam"}


def parse_config(text: str) -> SimulationConfig:
    """Parse and validate a key-value config document (strict: unknown keys fail)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got '{raw.strip()}'",
                             line=lineno, column=len(raw) + 1)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _SCHEMA:
            hint = difflib.get_close_matches(key, _SCHEMA.keys(), n=1)
            sugg = f"; did you mean '{hint[0]}'?" if hint else ""
            raise ParseError(f"line {lineno}: unknown key '{key}'{sugg}",
                             line=lineno, column=raw.find(key) + 1)
        if key in values:
            raise ParseError(f"line {lineno}: duplicate key '{key}'", line=lineno)
        try:
            values[key] = _SCHEMA[key](val)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"line {lineno}: bad value for '{key}': {exc}",
                                  field=key) from exc
    kwargs = {_KEY_TO_FIELD.get(k, k): v for k, v in values.items()}
    cfg = SimulationConfig(**kwargs)
    validate_config(cfg)
    return cfg


def validate_config(cfg: SimulationConfig) -> None:
    if cfg.dimension not in (1, 2, 3):
        raise ValidationError("dimension must be 1, 2, or 3", field="dimension")
    if cfg.n < 2 or (cfg.n & (cfg.n - 1)) != 0:
        raise ValidationError("n must be a power of two", field="n")
    if cfg.L <= 0:
        raise ValidationError("L must be positive", field="L")
    if cfg.dt is not None and cfg.dt <= 0:
        raise ValidationError("dt must be positive", field="dt")
    if cfg.T <= 0:
        raise ValidationError("T must be positive", field="T")
    if cfg.lam < 0:
        raise ValidationError("lambda must be nonnegative", field="lambda")
    if cfg.coefficient not in ("pam", "sine", "saturating"):
        raise ValidationError("coefficient must be pam|sine|saturating",
                              field="coefficient")
    if cfg.replicates < 1:
        raise ValidationError("replicates must be >= 1", field="replicates")
    if cfg.steps_per_unit < 1:
        raise ValidationError("steps_per_unit must be >= 1", field="steps_per_unit")
    if any(k <= 0 for k in cfg.K_list) or list(cfg.K_list) != sorted(set(cfg.K_list)):
        raise ValidationError("K_list must be positive strictly increasing",
                              field="K_list")
    if cfg.output_format not in ("csv", "binary"):
        raise ValidationError("output_format must be csv|binary", field="output_format")
    if cfg.deposit not in ("nearest", "mollified"):
        raise ValidationError("deposit must be nearest|mollified", field="deposit")
    if cfg.probe != "grid_mean":
        try:
            idx = tuple(int(x) for x in cfg.probe.split(","))
        except ValueError as exc:
            raise ValidationError("probe must be 'grid_mean' or comma indices",
                                  field="probe") from exc
        if len(idx) != cfg.dimension:
            raise ValidationError("probe index count must match dimension",
                                  field="probe")
    # resolve identifier fields eagerly so bad ids fail at parse time
    parse_kernel(cfg.kernel)
    parse_measure(cfg.mu, cfg.dimension)
    if cfg.mu2:
        parse_measure(cfg.mu2, cfg.dimension)
    parse_weight(cfg.weight)
