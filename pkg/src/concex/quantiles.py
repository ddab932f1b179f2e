"""Type-7 empirical quantile estimator.

The order-statistic interpolation with plotting position h = (n-1)*tau + 1,
the convention whose negative high-quantile bias the harness quantifies.
Kept in its own module because both the dependence models and the study
harness rely on it.
"""
from __future__ import annotations

import numpy as np

__all__ = ["empirical_quantile_type7"]


def empirical_quantile_type7(sample, tau):
    """Type-7 empirical quantile along the last axis of ``sample``.

    Interpolates consecutive order statistics at h = (n-1)*tau + 1:
    x_(floor(h)) + (h - floor(h)) * (x_(floor(h)+1) - x_(floor(h))).
    ``tau`` may be a scalar or an array; values must lie in [0, 1].
    """
    x = np.asarray(sample, dtype=float)
    if x.size == 0 or x.shape[-1] == 0:
        raise ValueError("empty sample")
    t = np.asarray(tau, dtype=float)
    if np.any((t < 0.0) | (t > 1.0)) or not np.all(np.isfinite(t)):
        raise ValueError("tau must lie in [0, 1]")
    xs = np.sort(x, axis=-1)
    n = xs.shape[-1]
    h = (n - 1) * t
    j = np.floor(h).astype(int)
    g = h - j
    j_next = np.minimum(j + 1, n - 1)
    out = (1.0 - g) * xs[..., j] + g * xs[..., j_next]
    if np.ndim(tau) == 0 and x.ndim == 1:
        return float(out)
    return out
