"""Conditional extreme value model on Laplace margins.

Given the conditioning variable large, the concomitant on the Laplace scale
is modeled as alpha*y1 + y1**beta * Z with the residual law Z kept as the
empirical sample of standardized fit residuals.  (alpha, beta) are estimated
by a Gaussian pseudo-likelihood on the exceedances of the dependence
threshold, with the location-scale nuisance parameters profiled out in
closed form.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .curves import ConditionalQuantileCurve
from .marginal import SemiParamMarginal, build_semiparam_marginal, from_laplace, to_laplace
from .quantiles import empirical_quantile_type7

__all__ = ["CevConfig", "CevFit", "fit_cev", "fit_dependence",
           "cev_conditional_quantile", "cev_curve"]

ALPHA_BOX = (-1.0, 1.0)
# The scale exponent is unbounded below in principle; below -5 the fitted
# curves are numerically indistinguishable and y**beta destabilizes.
BETA_BOX = (-5.0, 1.0)
_SIGMA_FLOOR = 1e-8

_ALPHA_STARTS = (-0.5, 0.0, 0.5, 0.9)
_BETA_STARTS = (-0.5, 0.0, 0.5)


@dataclass(frozen=True)
class CevConfig:
    """Thresholds of the fitting procedure, all on the probability scale.

    ``u_quantile_cond`` / ``u_quantile_concom`` place the empirical-to-GP
    switch of the two marginals; ``u1_quantile`` places the dependence
    threshold on the conditioning variable (it need not coincide with the
    marginal threshold).
    """

    u_quantile_cond: float = 0.6
    u_quantile_concom: float = 0.75
    u1_quantile: float = 0.6

    def __post_init__(self):
        for name in ("u_quantile_cond", "u_quantile_concom", "u1_quantile"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class CevFit:
    """Fitted dependence parameters plus everything prediction needs."""

    alpha: float
    beta: float
    mu_z: float
    sigma_z: float
    residuals: np.ndarray
    u1_laplace: float
    u1_original: float
    marginal1: SemiParamMarginal
    marginal2: SemiParamMarginal
    config: CevConfig
    at_boundary: bool = False
    nll: float = field(default=float("nan"))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "mu_z": self.mu_z,
            "sigma_z": self.sigma_z,
            "residuals": self.residuals.tolist(),
            "u1_laplace": self.u1_laplace,
            "u1_original": self.u1_original,
            "at_boundary": self.at_boundary,
            "nll": self.nll,
            "config": {
                "u_quantile_cond": self.config.u_quantile_cond,
                "u_quantile_concom": self.config.u_quantile_concom,
                "u1_quantile": self.config.u1_quantile,
            },
            "marginal1": self.marginal1.to_dict(),
            "marginal2": self.marginal2.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CevFit":
        return cls(
            alpha=float(d["alpha"]),
            beta=float(d["beta"]),
            mu_z=float(d["mu_z"]),
            sigma_z=float(d["sigma_z"]),
            residuals=np.asarray(d["residuals"], dtype=float),
            u1_laplace=float(d["u1_laplace"]),
            u1_original=float(d["u1_original"]),
            marginal1=SemiParamMarginal.from_dict(d["marginal1"]),
            marginal2=SemiParamMarginal.from_dict(d["marginal2"]),
            config=CevConfig(**d["config"]),
            at_boundary=bool(d["at_boundary"]),
            nll=float(d.get("nll", float("nan"))),
        )

    @classmethod
    def from_json(cls, s: str) -> "CevFit":
        return cls.from_dict(json.loads(s))


def _profile_npll(alpha: float, beta: float, y1, y2, log_y1):
    """Pseudo-likelihood with the Gaussian location/scale profiled out."""
    z = (y2 - alpha * y1) * np.exp(-beta * log_y1)
    mu = z.mean()
    var = np.mean((z - mu) ** 2)
    sigma = max(np.sqrt(var), _SIGMA_FLOOR)
    n = y1.size
    return n * np.log(sigma) + beta * np.sum(log_y1) + 0.5 * n, z, mu, sigma


def fit_dependence(y1, y2, alpha_box=ALPHA_BOX, beta_box=BETA_BOX):
    """Estimate (alpha, beta) on Laplace-scale exceedance pairs.

    Minimizes the Gaussian working-assumption negative log pseudo-likelihood
    over the boxed parameters via multi-start bounded quasi-Newton; the
    location/scale nuisance pair has a closed-form optimum for fixed
    (alpha, beta), so the numerical search is two-dimensional.

    Returns a dict with alpha, beta, mu_z, sigma_z, sorted residuals
    z = (y2 - alpha*y1) / y1**beta, the attained objective, and a boundary
    flag.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if y1.shape != y2.shape or y1.ndim != 1:
        raise ValueError("y1 and y2 must be 1-d arrays of equal length")
    if np.any(y1 <= 0):
        raise ValueError("conditioning exceedances must be positive on the Laplace scale")
    log_y1 = np.log(y1)

    def objective(theta):
        return _profile_npll(theta[0], theta[1], y1, y2, log_y1)[0]

    best = None
    for a0 in _ALPHA_STARTS:
        for b0 in _BETA_STARTS:
            res = minimize(
                objective,
                np.array([a0, b0]),
                method="L-BFGS-B",
                bounds=[alpha_box, beta_box],
            )
            if best is None or res.fun < best.fun:
                best = res

    alpha, beta = float(best.x[0]), float(best.x[1])
    npll, z, mu, sigma = _profile_npll(alpha, beta, y1, y2, log_y1)
    eps = 1e-6
    at_boundary = (
        alpha <= alpha_box[0] + eps or alpha >= alpha_box[1] - eps
        or beta <= beta_box[0] + eps or beta >= beta_box[1] - eps
    )
    return {
        "alpha": alpha,
        "beta": beta,
        "mu_z": float(mu),
        "sigma_z": float(sigma),
        "residuals": np.sort(z),
        "nll": float(npll),
        "at_boundary": at_boundary,
    }


def fit_cev(x1, x2, config: CevConfig = CevConfig()) -> CevFit:
    """Fit the conditional extreme value model to bivariate data.

    Builds both semi-parametric marginals, transforms to Laplace margins,
    and estimates the dependence parameters on the pairs whose conditioning
    value exceeds the ``u1_quantile`` empirical threshold.

    Raises
    ------
    ValueError
        If fewer than 30 pairs exceed the dependence threshold.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise ValueError("x1 and x2 must be 1-d arrays of equal length")

    m1 = build_semiparam_marginal(x1, config.u_quantile_cond)
    m2 = build_semiparam_marginal(x2, config.u_quantile_concom)

    u1_original = empirical_quantile_type7(x1, config.u1_quantile)
    mask = x1 > u1_original
    n_exc = int(mask.sum())
    if n_exc < 30:
        raise ValueError(
            f"only {n_exc} pairs exceed the dependence threshold; need at least 30"
        )

    y1 = to_laplace(x1[mask], m1)
    y2 = to_laplace(x2[mask], m2)
    u1_laplace = float(to_laplace(u1_original, m1))
    # With the threshold above the median, exceedances are positive on the
    # Laplace scale, so y1**beta is always defined.
    if not np.all(y1 > 0):
        raise AssertionError("Laplace-scale exceedances must be positive; check u1_quantile > 0.5")

    dep = fit_dependence(y1, y2)
    if dep["at_boundary"]:
        warnings.warn(
            f"CEV pseudo-likelihood optimum at a box corner "
            f"(alpha={dep['alpha']:.4f}, beta={dep['beta']:.4f})",
            stacklevel=2,
        )
    return CevFit(
        alpha=dep["alpha"],
        beta=dep["beta"],
        mu_z=dep["mu_z"],
        sigma_z=dep["sigma_z"],
        residuals=dep["residuals"],
        u1_laplace=u1_laplace,
        u1_original=float(u1_original),
        marginal1=m1,
        marginal2=m2,
        config=config,
        at_boundary=dep["at_boundary"],
        nll=dep["nll"],
    )


def cev_conditional_quantile(fit: CevFit, x1, tau):
    """Conditional quantile of the concomitant at conditioning value ``x1``.

    On the Laplace scale: alpha*y1 + y1**beta * q_z(tau) with q_z the type-7
    empirical quantile of the stored residuals; the result is mapped back
    through the concomitant marginal.
    """
    x1a = np.asarray(x1, dtype=float)
    if np.any(x1a <= fit.u1_original):
        raise ValueError(
            "conditioning value below the dependence threshold; the CEV model "
            "does not apply there (use unconditional estimation instead)"
        )
    taua = np.asarray(tau, dtype=float)
    if np.any((taua <= 0) | (taua >= 1)):
        raise ValueError("tau must lie strictly inside (0, 1)")
    qz = empirical_quantile_type7(fit.residuals, taua)
    y1 = to_laplace(x1a, fit.marginal1)
    y2 = fit.alpha * y1 + np.power(y1, fit.beta) * qz
    out = from_laplace(y2, fit.marginal2)
    if np.ndim(x1) == 0 and np.ndim(tau) == 0:
        return float(out)
    return out


def cev_curve(fit: CevFit, x1_grid, taus=(0.5, 0.6, 0.7, 0.8, 0.9)) -> ConditionalQuantileCurve:
    """Conditional quantile curves over a grid of conditioning values."""
    grid = np.atleast_1d(np.asarray(x1_grid, dtype=float))
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    values = np.empty((grid.size, taus.size))
    for i, x in enumerate(grid):
        values[i, :] = cev_conditional_quantile(fit, x, taus)
    return ConditionalQuantileCurve(x1=grid, taus=taus, values=values, method="cev")
