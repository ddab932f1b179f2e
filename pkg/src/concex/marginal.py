"""Marginal tail fitting and probability-integral transforms.

GEV maximum likelihood with profile-likelihood return-level intervals for
the conditioning variable, and the semi-parametric empirical + generalized
Pareto mixture used to move either variable onto standard Laplace margins.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .distributions import (
    GevParams,
    GpParams,
    gev_logpdf,
    gev_quantile,
    gp_cdf,
    gp_quantile,
    laplace_cdf,
    laplace_quantile,
    normal_quantile,
)
from .quantiles import empirical_quantile_type7

__all__ = [
    "GevFit",
    "ReturnLevelCI",
    "SemiParamMarginal",
    "ConvergenceError",
    "fit_gev_mle",
    "fit_gp_mle",
    "return_level",
    "profile_likelihood_ci",
    "build_semiparam_marginal",
    "to_laplace",
    "from_laplace",
]

XI_BOX = (-0.5, 0.5)
GP_XI_BOX = (-0.5, 1.0)

# Upper clamp for mixture-CDF probabilities before the Laplace quantile map;
# keeps transformed values finite at (and beyond) a bounded GP endpoint.
_P_HI = 1.0 - 1e-15


class ConvergenceError(RuntimeError):
    """Optimizer failed to converge; carries the best point found."""

    def __init__(self, message, best_params=None, best_nll=None):
        super().__init__(message)
        self.best_params = best_params
        self.best_nll = best_nll


@dataclass(frozen=True)
class GevFit:
    """A maximum-likelihood GEV fit with observed-information covariance."""

    params: GevParams
    nll: float
    cov: np.ndarray
    n: int


@dataclass(frozen=True)
class ReturnLevelCI:
    """Profile-likelihood interval for an r-year return level."""

    r: float
    estimate: float
    lower: float
    upper: float
    level: float = 0.95


def _gev_nll(theta, x):
    mu, log_sigma, xi = theta
    if not (XI_BOX[0] <= xi <= XI_BOX[1]) or abs(log_sigma) > 50:
        return np.inf
    lp = gev_logpdf(x, GevParams(mu, math.exp(log_sigma), xi))
    total = np.sum(lp)
    return np.inf if not np.isfinite(total) else -float(total)


def _pwm_start(x):
    """Probability-weighted-moment (L-moment) starting point for GEV MLE."""
    xs = np.sort(x)
    n = xs.size
    i = np.arange(1, n + 1)
    b0 = xs.mean()
    b1 = np.sum((i - 1) / (n - 1) * xs) / n
    b2 = np.sum((i - 1) * (i - 2) / ((n - 1) * (n - 2)) * xs) / n
    l1, l2, l3 = b0, 2 * b1 - b0, 6 * b2 - 6 * b1 + b0
    t3 = l3 / l2 if l2 > 0 else 0.0
    c = 2.0 / (3.0 + t3) - math.log(2) / math.log(3)
    k = 7.8590 * c + 2.9554 * c * c  # Hosking's k = -xi
    if abs(k) < 1e-6:
        sigma = l2 / math.log(2)
        mu = l1 - sigma * 0.5772156649015329
    else:
        gk = math.gamma(1.0 + k)
        sigma = l2 * k / ((1.0 - 2.0 ** (-k)) * gk)
        mu = l1 - sigma * (1.0 - gk) / k
    xi = float(np.clip(-k, XI_BOX[0] + 0.02, XI_BOX[1] - 0.02))
    sigma = max(sigma, 1e-8 * max(1.0, abs(mu)))
    return mu, sigma, xi


def _numerical_hessian(fun, theta, rel_step=1e-4):
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    h = rel_step * np.maximum(np.abs(theta), 1.0)
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h[i]
            ej[j] = h[j]
            fpp = fun(theta + ei + ej)
            fpm = fun(theta + ei - ej)
            fmp = fun(theta - ei + ej)
            fmm = fun(theta - ei - ej)
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return hess


def _psd_inverse(hess):
    """Invert an observed-information matrix, projecting to PSD if needed."""
    hess = 0.5 * (hess + hess.T)
    try:
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(hess)
    cov = 0.5 * (cov + cov.T)
    eigval, eigvec = np.linalg.eigh(cov)
    if np.any(eigval < 0):
        eigval = np.clip(eigval, 0.0, None)
        cov = eigvec @ np.diag(eigval) @ eigvec.T
        cov = 0.5 * (cov + cov.T)
    return cov


def fit_gev_mle(maxima, min_n: int = 20) -> GevFit:
    """Fit a GEV to block maxima by multi-start maximum likelihood.

    Starts from the probability-weighted-moment estimate plus perturbations
    and runs Nelder-Mead in (mu, log sigma, xi) with xi boxed to [-0.5, 0.5].

    Parameters
    ----------
    maxima : array_like
        Block maxima, all finite.
    min_n : int
        Sample sizes below this raise a warning (not an error).

    Returns
    -------
    GevFit with parameters, negative log-likelihood, 3x3 covariance from the
    observed information, and the sample size.
    """
    x = np.asarray(maxima, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need a 1-d sample with at least 2 points")
    if not np.all(np.isfinite(x)):
        raise ValueError("maxima must all be finite")
    if np.all(x == x[0]):
        raise ValueError("all-equal data: GEV likelihood is degenerate")
    if x.size < min_n:
        warnings.warn(f"only {x.size} block maxima; GEV fit may be unstable", stacklevel=2)

    mu0, sigma0, xi0 = _pwm_start(x)
    starts = [
        (mu0, math.log(sigma0), xi0),
        (mu0, math.log(sigma0), 0.0),
        (mu0, math.log(sigma0), min(xi0 + 0.15, XI_BOX[1] - 0.01)),
        (mu0, math.log(sigma0), max(xi0 - 0.15, XI_BOX[0] + 0.01)),
        (mu0, math.log(sigma0 * 1.5), xi0),
        (mu0, math.log(sigma0 * 0.7), xi0),
    ]

    best = None
    any_converged = False
    for s in starts:
        res = minimize(
            _gev_nll,
            np.array(s),
            args=(x,),
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 3000, "maxfev": 4000},
        )
        any_converged = any_converged or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res

    mu, log_sigma, xi = best.x
    params = GevParams(mu, math.exp(log_sigma), xi)
    if not any_converged:
        raise ConvergenceError(
            "GEV MLE did not converge from any start", best_params=params, best_nll=float(best.fun)
        )
    # The optimum must keep every observation on the GEV support.
    if not np.all(np.isfinite(gev_logpdf(x, params))):
        raise ConvergenceError(
            "GEV optimum violates the support constraint", best_params=params, best_nll=float(best.fun)
        )

    def nll_natural(theta):
        mu_, sigma_, xi_ = theta
        if sigma_ <= 0:
            return np.inf
        return _gev_nll((mu_, math.log(sigma_), xi_), x)

    hess = _numerical_hessian(nll_natural, np.array([params.mu, params.sigma, params.xi]))
    cov = _psd_inverse(hess)
    return GevFit(params=params, nll=float(best.fun), cov=cov, n=int(x.size))


def return_level(fit: GevFit, r: float) -> float:
    """The r-year return level, i.e. the (1 - 1/r) GEV quantile."""
    if r <= 1:
        raise ValueError("return period r must exceed 1 year")
    return gev_quantile(1.0 - 1.0 / r, fit.params)


def _return_level_gradient(params: GevParams, r: float):
    w = -math.log(1.0 - 1.0 / r)
    lw = math.log(w)
    xi = params.xi
    if abs(xi) < 1e-6:
        dz = np.array([1.0, -lw, params.sigma * lw * lw / 2.0])
    else:
        a = (w ** (-xi) - 1.0) / xi
        dz = np.array([1.0, a, params.sigma * (-(w ** (-xi)) * lw * xi - (w ** (-xi) - 1.0) * 1.0) / (xi * xi)])
        # d/dxi [(w^-xi - 1)/xi] = (-lw * w^-xi * xi - (w^-xi - 1)) / xi^2
    return dz


def profile_likelihood_ci(fit: GevFit, data, r: float, level: float = 0.95) -> ReturnLevelCI:
    """Profile-likelihood interval for the r-year return level.

    The likelihood is reparameterized with the return level z_r in place of
    the location parameter; (sigma, xi) are profiled out numerically and the
    bounds solve 2*(l_max - l_profile(z)) = chi-square(1) quantile at
    ``level``.  If the profile fails to drop by the cutoff within +-10
    estimated standard errors, the affected bound is left infinite and a
    warning is raised.
    """
    if r <= 1:
        raise ValueError("return period r must exceed 1 year")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    x = np.asarray(data, dtype=float)
    z_hat = return_level(fit, r)
    p_r = 1.0 - 1.0 / r
    w = -math.log(p_r)

    # chi-square(1) quantile at `level` equals the squared normal quantile.
    cutoff = normal_quantile(0.5 * (1.0 + level)) ** 2
    ll_max = -fit.nll

    def mu_of(z, sigma, xi):
        if abs(xi) < 1e-9:
            return z + sigma * math.log(w)
        return z - sigma * (w ** (-xi) - 1.0) / xi

    warm = {"theta": np.array([math.log(fit.params.sigma), fit.params.xi])}

    def profile_loglik(z):
        def nll2(t):
            log_sigma, xi = t
            if not (XI_BOX[0] <= xi <= XI_BOX[1]) or abs(log_sigma) > 50:
                return np.inf
            sigma = math.exp(log_sigma)
            return _gev_nll((mu_of(z, sigma, xi), log_sigma, xi), x)

        best = None
        for t0 in (warm["theta"], np.array([math.log(fit.params.sigma), fit.params.xi])):
            res = minimize(nll2, t0, method="Nelder-Mead",
                           options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000})
            if best is None or res.fun < best.fun:
                best = res
        warm["theta"] = best.x
        return -best.fun

    grad = _return_level_gradient(fit.params, r)
    se = float(math.sqrt(max(grad @ fit.cov @ grad, 1e-12)))

    def deviance(z):
        return 2.0 * (ll_max - profile_loglik(z))

    steps = [0.5]
    while steps[-1] < 10.0:
        steps.append(min(steps[-1] * 1.6, 10.0))

    bounds = []
    for side in (-1.0, 1.0):
        warm["theta"] = np.array([math.log(fit.params.sigma), fit.params.xi])
        bracket = None
        prev = z_hat
        for step in steps:
            z_try = z_hat + side * step * se
            if deviance(z_try) >= cutoff:
                bracket = (prev, z_try) if side > 0 else (z_try, prev)
                break
            prev = z_try
        if bracket is None:
            warnings.warn(
                f"profile deviance did not reach the chi-square cutoff within +-10 SE "
                f"on the {'upper' if side > 0 else 'lower'} side; returning a one-sided interval",
                stacklevel=2,
            )
            bounds.append(side * math.inf)
            continue
        root = brentq(lambda z: deviance(z) - cutoff, bracket[0], bracket[1],
                      xtol=max(1e-6, 1e-4 * se))
        bounds.append(float(root))

    lower, upper = min(bounds[0], z_hat), max(bounds[1], z_hat)
    return ReturnLevelCI(r=float(r), estimate=float(z_hat), lower=lower, upper=upper, level=level)


# ---------------------------------------------------------------------------
# Semi-parametric marginal: empirical body + GP tail
# ---------------------------------------------------------------------------

def _gp_nll(theta, y):
    log_sigma, xi = theta
    if not (GP_XI_BOX[0] <= xi <= GP_XI_BOX[1]) or abs(log_sigma) > 50:
        return np.inf
    sigma = math.exp(log_sigma)
    t = 1.0 + xi * y / sigma
    if np.any(t <= 0):
        return np.inf
    if abs(xi) < 1e-9:
        return float(y.size * log_sigma + np.sum(y) / sigma)
    return float(y.size * log_sigma + (1.0 + 1.0 / xi) * np.sum(np.log(t)))


def fit_gp_mle(exceedances, u: float) -> GpParams:
    """Fit a generalized Pareto to exceedances of threshold ``u`` by MLE."""
    y = np.asarray(exceedances, dtype=float) - u
    if y.size < 5:
        raise ValueError("need at least 5 exceedances for a GP fit")
    if np.any(y < 0):
        raise ValueError("exceedances must lie above the threshold")
    m, v = float(y.mean()), float(y.var())
    if v <= 0:
        raise ValueError("degenerate exceedances")
    xi_mom = 0.5 * (1.0 - m * m / v)
    sigma_mom = 0.5 * m * (m * m / v + 1.0)
    starts = [
        (math.log(max(sigma_mom, 1e-8)), float(np.clip(xi_mom, -0.45, 0.95))),
        (math.log(max(m, 1e-8)), 0.0),
        (math.log(max(m, 1e-8)), 0.2),
        (math.log(max(m, 1e-8)), -0.2),
    ]
    best = None
    for s in starts:
        res = minimize(_gp_nll, np.array(s), args=(y,), method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000})
        if best is None or res.fun < best.fun:
            best = res
    log_sigma, xi = best.x
    return GpParams(u=float(u), sigma_u=math.exp(log_sigma), xi=float(xi))


@dataclass(frozen=True)
class SemiParamMarginal:
    """Empirical CDF below a threshold, GP tail above it.

    The empirical part interpolates order statistics at plotting positions
    rank/(n+1) with ties collapsed to their average rank, so the mixture CDF
    is continuous and deterministic.
    """

    sorted_sample: np.ndarray
    u: float
    u_prob: float
    gp: GpParams
    # unique support points and their average-rank plotting positions
    _xs: np.ndarray = field(repr=False, default=None)
    _ps: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.sorted_sample.size

    def cdf(self, x):
        arr = np.asarray(x, dtype=float)
        emp = np.interp(arr, self._xs, self._ps)
        above = arr > self.u
        out = np.where(above, 1.0 - (1.0 - self.u_prob) * (1.0 - gp_cdf(np.maximum(arr, self.u), self.gp)), emp)
        return float(out) if np.ndim(x) == 0 else out

    def quantile(self, p):
        arr = np.asarray(p, dtype=float)
        if np.any((arr <= 0.0) | (arr >= 1.0)):
            raise ValueError("p must lie strictly inside (0, 1)")
        emp = np.interp(arr, self._ps, self._xs)
        above = arr > self.u_prob
        p_tail = np.clip((arr - self.u_prob) / (1.0 - self.u_prob), 1e-16, 1.0 - 1e-16)
        out = np.where(above, gp_quantile(p_tail, self.gp), emp)
        return float(out) if np.ndim(p) == 0 else out

    def to_dict(self) -> dict:
        sample = self.sorted_sample
        return {
            "u": self.u,
            "u_prob": self.u_prob,
            "gp": {"u": self.gp.u, "sigma_u": self.gp.sigma_u, "xi": self.gp.xi},
            "sorted_sample": sample.tolist(),
            "sample_sha256": hashlib.sha256(sample.tobytes()).hexdigest(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemiParamMarginal":
        sample = np.asarray(d["sorted_sample"], dtype=float)
        digest = hashlib.sha256(sample.tobytes()).hexdigest()
        if d.get("sample_sha256") not in (None, digest):
            raise ValueError("sorted-sample digest mismatch in serialized marginal")
        gp = GpParams(**d["gp"])
        xs, ps = _average_rank_positions(sample)
        return cls(sorted_sample=sample, u=float(d["u"]), u_prob=float(d["u_prob"]),
                   gp=gp, _xs=xs, _ps=ps)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "SemiParamMarginal":
        return cls.from_dict(json.loads(s))


def _average_rank_positions(sorted_sample):
    """Unique support points with average-rank/(n+1) plotting positions."""
    n = sorted_sample.size
    xs, start = np.unique(sorted_sample, return_index=True)
    counts = np.diff(np.append(start, n))
    # average rank of a tied run = midpoint of its 1-based rank range
    ps = (start + 0.5 * (counts - 1) + 1.0) / (n + 1.0)
    return xs, ps


def build_semiparam_marginal(data, u_quantile: float) -> SemiParamMarginal:
    """Empirical + GP mixture marginal with the switch at ``u_quantile``.

    The threshold u is the type-7 empirical quantile of ``data`` at
    ``u_quantile``; a GP is fit by MLE to the exceedances of u.
    """
    x = np.asarray(data, dtype=float)
    if x.size < 50:
        raise ValueError("need at least 50 points for a semi-parametric marginal")
    if not 0.5 <= u_quantile < 1.0:
        raise ValueError("u_quantile must lie in [0.5, 1)")
    if not np.all(np.isfinite(x)):
        raise ValueError("data must be finite")
    u = empirical_quantile_type7(x, u_quantile)
    exceed = x[x > u]
    if exceed.size < 10:
        raise ValueError(f"only {exceed.size} exceedances of the threshold; need at least 10")
    gp = fit_gp_mle(exceed, u)
    xs_sorted = np.sort(x)
    xs, ps = _average_rank_positions(xs_sorted)
    u_prob = float(np.interp(u, xs, ps))
    return SemiParamMarginal(sorted_sample=xs_sorted, u=float(u), u_prob=u_prob,
                             gp=gp, _xs=xs, _ps=ps)


def to_laplace(x, m: SemiParamMarginal):
    """Map data to the standard Laplace scale through the mixture CDF.

    Probabilities are clamped below at 1/(n+1) (the empirical convention's
    floor) and just under 1 above, so transformed values stay finite.
    """
    p = m.cdf(x)
    p = np.clip(p, 1.0 / (m.n + 1), _P_HI)
    return laplace_quantile(p)


def from_laplace(y, m: SemiParamMarginal):
    """Inverse of :func:`to_laplace`."""
    p = laplace_cdf(y)
    p = np.clip(p, 1.0 / (m.n + 1), _P_HI)
    return m.quantile(p)
