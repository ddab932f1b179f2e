"""Bivariate copula samplers and exact conditional-quantile oracles.

Three families (Gaussian, Gumbel, Clayton) act as data generators for the
simulation studies and, through their conditional CDFs h(u2 | u1) = dC/du1,
as the ground truth the dependence estimators are scored against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import normal_cdf, normal_quantile
from .rng import make_rng

__all__ = [
    "CopulaSpec",
    "BivariateSample",
    "sample_copula",
    "conditional_cdf",
    "conditional_quantile",
    "true_conditional_quantile",
    "kendall_tau",
    "preset",
    "all_presets",
    "PRESET_PARAMS",
]

_FAMILIES = ("gaussian", "gumbel", "clayton")

# Study presets: the labels follow dependence *strength*, so the Gumbel
# parameter runs downward (alpha -> 1 is independence in the 1/alpha
# exponent parameterization used here).
PRESET_PARAMS = {
    ("gaussian", "weak"): 0.1,
    ("gaussian", "median"): 0.3,
    ("gaussian", "strong"): 0.6,
    ("gumbel", "weak"): 0.9,
    ("gumbel", "median"): 0.7,
    ("gumbel", "strong"): 0.5,
    ("clayton", "weak"): 0.1,
    ("clayton", "median"): 0.5,
    ("clayton", "strong"): 0.9,
}

_UNIT_EPS = 1e-12


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family plus its single dependence parameter."""

    family: str
    parameter: float

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown copula family {self.family!r}")
        p = self.parameter
        if self.family == "gaussian" and not -1.0 < p < 1.0:
            raise ValueError(f"gaussian rho must be in (-1, 1), got {p}")
        if self.family == "gumbel" and not 0.0 < p <= 1.0:
            raise ValueError(f"gumbel alpha must be in (0, 1], got {p}")
        if self.family == "clayton" and not p > 0.0:
            raise ValueError(f"clayton delta must be > 0, got {p}")


@dataclass(frozen=True)
class BivariateSample:
    """Copula-scale pairs drawn under a recorded seed."""

    u1: np.ndarray
    u2: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.u1.size


def preset(family: str, strength: str) -> CopulaSpec:
    """Named dependence preset: weak / median / strong per family."""
    try:
        return CopulaSpec(family, PRESET_PARAMS[(family, strength)])
    except KeyError:
        raise ValueError(f"no preset for ({family!r}, {strength!r})") from None


def all_presets():
    """All nine (family, strength, spec) study combinations."""
    return [(fam, s, CopulaSpec(fam, p)) for (fam, s), p in PRESET_PARAMS.items()]


def kendall_tau(spec: CopulaSpec) -> float:
    """Population Kendall's tau of the family."""
    p = spec.parameter
    if spec.family == "gaussian":
        return 2.0 / np.pi * np.arcsin(p)
    if spec.family == "gumbel":
        return 1.0 - p
    return p / (p + 2.0)


def _check_unit(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return arr


# ---------------------------------------------------------------------------
# Conditional CDFs h(u2 | u1) = dC/du1 and their inverses
# ---------------------------------------------------------------------------

def _gaussian_h(u2, u1, rho):
    z2 = normal_quantile(u2)
    z1 = normal_quantile(u1)
    return normal_cdf((z2 - rho * z1) / np.sqrt(1.0 - rho * rho))


def _gaussian_hinv(v, u1, rho):
    z1 = normal_quantile(u1)
    return normal_cdf(rho * z1 + np.sqrt(1.0 - rho * rho) * normal_quantile(v))


def _clayton_h(u2, u1, delta):
    # expm1/log1p guards keep this accurate for delta near 0.
    a = np.expm1(-delta * np.log(u1))
    b = np.expm1(-delta * np.log(u2))
    return np.exp((-delta - 1.0) * np.log(u1) + (-1.0 / delta - 1.0) * np.log1p(a + b))


def _clayton_hinv(v, u1, delta):
    t = np.expm1(-delta / (1.0 + delta) * np.log(v))
    w = t * np.exp(-delta * np.log(u1))
    return np.exp(-np.log1p(w) / delta)


def _gumbel_h(u2, u1, alpha):
    x = -np.log(u1)
    y = -np.log(u2)
    inv = 1.0 / alpha
    s = np.power(x, inv) + np.power(y, inv)
    c = np.exp(-np.power(s, alpha))
    return c * np.power(s, alpha - 1.0) * np.power(x, inv - 1.0) / u1


def _gumbel_density(u2, u1, alpha):
    x = -np.log(u1)
    y = -np.log(u2)
    inv = 1.0 / alpha
    s = np.power(x, inv) + np.power(y, inv)
    c = np.exp(-np.power(s, alpha))
    return (
        c
        * np.power(x * y, inv - 1.0)
        * np.power(s, alpha - 2.0)
        * (np.power(s, alpha) + (1.0 - alpha) / alpha)
        / (u1 * u2)
    )


def _gumbel_hinv(v, u1, alpha, tol: float = 1e-10, newton_steps: int = 3):
    """Invert the Gumbel h function: bracketed bisection, Newton polish.

    h is strictly increasing in u2, so bisection on [1e-12, 1 - 1e-12] is
    globally safe; a few Newton steps then sharpen the root well below
    ``tol``.
    """
    shape = np.broadcast_shapes(np.shape(v), np.shape(u1))
    v = np.atleast_1d(np.broadcast_to(np.asarray(v, dtype=float), shape))
    u1 = np.atleast_1d(np.broadcast_to(np.asarray(u1, dtype=float), shape)).copy()
    lo = np.full_like(v, _UNIT_EPS)
    hi = np.full_like(v, 1.0 - _UNIT_EPS)
    h_lo = _gumbel_h(lo, u1, alpha)
    h_hi = _gumbel_h(hi, u1, alpha)
    bad = (h_lo > v) | (h_hi < v)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RuntimeError(
            "gumbel conditional inversion: target outside bracket "
            f"(v={v[i]:.3e}, u1={u1[i]:.3e}, h(lo)={h_lo[i]:.3e}, h(hi)={h_hi[i]:.3e})"
        )
    n_bisect = int(np.ceil(np.log2(1.0 / tol)))
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        below = _gumbel_h(mid, u1, alpha) < v
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    root = 0.5 * (lo + hi)
    for _ in range(newton_steps):
        f = _gumbel_h(root, u1, alpha) - v
        step = f / _gumbel_density(root, u1, alpha)
        root = np.clip(root - step, lo, hi)
    return root


def conditional_cdf(spec: CopulaSpec, u2, u1):
    """h(u2 | u1), the CDF of U2 given U1 = u1."""
    u2a = _check_unit("u2", u2)
    u1a = _check_unit("u1", u1)
    if spec.family == "gaussian":
        out = _gaussian_h(u2a, u1a, spec.parameter)
    elif spec.family == "clayton":
        out = _clayton_h(u2a, u1a, spec.parameter)
    else:
        out = _gumbel_h(u2a, u1a, spec.parameter)
    return float(out) if np.ndim(u2) == 0 and np.ndim(u1) == 0 else out


def conditional_quantile(spec: CopulaSpec, tau, u1):
    """Copula-scale conditional quantile: u2 with h(u2 | u1) = tau."""
    taua = _check_unit("tau", tau)
    u1a = _check_unit("u1", u1)
    scalar = np.ndim(tau) == 0 and np.ndim(u1) == 0
    shape = np.broadcast_shapes(taua.shape, u1a.shape)
    t = np.broadcast_to(taua, shape)
    u = np.broadcast_to(u1a, shape)
    if spec.family == "gaussian":
        out = _gaussian_hinv(t, u, spec.parameter)
    elif spec.family == "clayton":
        out = _clayton_hinv(t, u, spec.parameter)
    else:
        out = _gumbel_hinv(t, u, spec.parameter).reshape(shape)
    return float(out) if scalar else out


def true_conditional_quantile(spec: CopulaSpec, tau, u1, marginal2_quantile):
    """Ground-truth conditional quantile on the data scale.

    Inverts h( . | u1) at ``tau`` and maps the copula-scale result through
    the quantile function of the second margin.
    """
    return marginal2_quantile(conditional_quantile(spec, tau, u1))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_copula(spec: CopulaSpec, n: int, seed) -> BivariateSample:
    """Draw ``n`` dependent uniform pairs.

    Gaussian pairs come from correlating two inverse-CDF normal streams;
    Gumbel and Clayton use the conditional-distribution method (u1 uniform,
    then solve h(u2 | u1) = v), which keeps the whole draw on a single
    deterministic uniform stream.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    v1 = np.clip(rng.random(int(n)), _UNIT_EPS, 1.0 - _UNIT_EPS)
    v2 = np.clip(rng.random(int(n)), _UNIT_EPS, 1.0 - _UNIT_EPS)
    if spec.family == "gaussian":
        rho = spec.parameter
        z1 = normal_quantile(v1)
        z2 = rho * z1 + np.sqrt(1.0 - rho * rho) * normal_quantile(v2)
        u1, u2 = normal_cdf(z1), normal_cdf(z2)
    elif spec.family == "clayton":
        u1, u2 = v1, _clayton_hinv(v2, v1, spec.parameter)
    else:
        u1, u2 = v1, _gumbel_hinv(v2, v1, spec.parameter)
    u1 = np.clip(u1, _UNIT_EPS, 1.0 - _UNIT_EPS)
    u2 = np.clip(u2, _UNIT_EPS, 1.0 - _UNIT_EPS)
    seed_record = int(seed) if np.isscalar(seed) else -1
    return BivariateSample(u1=u1, u2=u2, seed=seed_record)
