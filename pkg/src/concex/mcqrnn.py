"""Monotone composite quantile regression neural network.

One small feedforward network models every quantile level at once: the level
tau enters as a second covariate, and every weight on a path from the tau
input to the output is kept positive (stored as a log-parameter, mapped
through exp), which makes the prediction non-decreasing in tau by
construction.  Training minimizes a Huber-smoothed pinball loss over the
stacked (covariate, tau) design with full-batch adaptive gradient steps.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .curves import ConditionalQuantileCurve
from .rng import child_rng

__all__ = ["McqrnnConfig", "McqrnnModel", "train_mcqrnn", "predict_quantiles",
           "smoothed_pinball"]

_CROSSING_TOL = -1e-9


@dataclass(frozen=True)
class McqrnnConfig:
    hidden_layers: int = 2
    hidden_nodes: int = 2
    taus: tuple = (0.5, 0.6, 0.7, 0.8, 0.9)
    epochs: int = 1000
    learning_rate: float = 0.05
    lr_final_fraction: float = 0.1
    smoothing_eps: float = 2.0**-8
    n_restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_nodes < 1:
            raise ValueError("need at least one hidden layer and one hidden node")
        t = np.asarray(self.taus, dtype=float)
        if t.size == 0 or np.any((t <= 0) | (t >= 1)) or np.any(np.diff(t) <= 0):
            raise ValueError("taus must be strictly increasing inside (0, 1)")
        if self.epochs < 1 or self.n_restarts < 1:
            raise ValueError("epochs and n_restarts must be positive")
        if self.smoothing_eps <= 0:
            raise ValueError("smoothing_eps must be positive")


def smoothed_pinball(e, tau, eps):
    """Huber-smoothed check loss; converges to the exact pinball as eps -> 0."""
    e = np.asarray(e, dtype=float)
    huber = np.where(np.abs(e) <= eps, e * e / (2.0 * eps), np.abs(e) - 0.5 * eps)
    return np.where(e >= 0, tau * huber, (1.0 - tau) * huber)


def _smoothed_pinball_grad(e, tau, eps):
    w = np.where(e >= 0, tau, 1.0 - tau)
    return w * np.clip(e / eps, -1.0, 1.0)


@dataclass(frozen=True)
class McqrnnModel:
    """Trained network: layer weights, constraint mask, scalings, config."""

    weights: list          # actual weight matrices, positive where masked
    biases: list
    masks: list            # True where the weight is positivity-constrained
    x_mean: float
    x_std: float
    tau_mean: float
    tau_std: float
    y_mean: float
    y_std: float
    config: McqrnnConfig
    restart_losses: tuple
    best_restart: int
    constant_value: float | None = None

    def forward(self, x1, taus):
        """Raw forward pass on original scales; returns shape (len(x1), len(taus))."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        if self.constant_value is not None:
            return np.full((x1.size, taus.size), self.constant_value)
        xs = (x1 - self.x_mean) / self.x_std
        ts = (taus - self.tau_mean) / self.tau_std
        grid_x = np.repeat(xs, taus.size)
        grid_t = np.tile(ts, x1.size)
        a = np.column_stack([grid_x, grid_t])
        n_layers = len(self.weights)
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if l == n_layers - 1 else np.tanh(z)
        return (a[:, 0] * self.y_std + self.y_mean).reshape(x1.size, taus.size)

    def to_dict(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "masks": [m.tolist() for m in self.masks],
            "x_mean": self.x_mean, "x_std": self.x_std,
            "tau_mean": self.tau_mean, "tau_std": self.tau_std,
            "y_mean": self.y_mean, "y_std": self.y_std,
            "restart_losses": list(self.restart_losses),
            "best_restart": self.best_restart,
            "constant_value": self.constant_value,
            "config": {
                "hidden_layers": self.config.hidden_layers,
                "hidden_nodes": self.config.hidden_nodes,
                "taus": list(self.config.taus),
                "epochs": self.config.epochs,
                "learning_rate": self.config.learning_rate,
                "lr_final_fraction": self.config.lr_final_fraction,
                "smoothing_eps": self.config.smoothing_eps,
                "n_restarts": self.config.n_restarts,
                "seed": self.config.seed,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "McqrnnModel":
        cfg = dict(d["config"])
        cfg["taus"] = tuple(cfg["taus"])
        return cls(
            weights=[np.asarray(w, dtype=float) for w in d["weights"]],
            biases=[np.asarray(b, dtype=float) for b in d["biases"]],
            masks=[np.asarray(m, dtype=bool) for m in d["masks"]],
            x_mean=float(d["x_mean"]), x_std=float(d["x_std"]),
            tau_mean=float(d["tau_mean"]), tau_std=float(d["tau_std"]),
            y_mean=float(d["y_mean"]), y_std=float(d["y_std"]),
            config=McqrnnConfig(**cfg),
            restart_losses=tuple(d["restart_losses"]),
            best_restart=int(d["best_restart"]),
            constant_value=d.get("constant_value"),
        )

    @classmethod
    def from_json(cls, s: str) -> "McqrnnModel":
        return cls.from_dict(json.loads(s))


def _layer_sizes(config: McqrnnConfig):
    return [2] + [config.hidden_nodes] * config.hidden_layers + [1]


def _build_masks(sizes):
    masks = []
    for l in range(len(sizes) - 1):
        m = np.ones((sizes[l], sizes[l + 1]), dtype=bool)
        if l == 0:
            m[0, :] = False  # the covariate path is unrestricted
        masks.append(m)
    return masks


def _init_params(sizes, masks, rng):
    raw_w, b = [], []
    for l in range(len(sizes) - 1):
        theta = rng.normal(0.0, 0.5, size=(sizes[l], sizes[l + 1]))
        # constrained entries live on the log scale; start exp(theta) near 0.5
        theta = np.where(masks[l], theta + np.log(0.5), theta)
        raw_w.append(theta)
        b.append(np.zeros(sizes[l + 1]))
    return raw_w, b


def _actual_weights(raw_w, masks):
    return [np.where(m, np.exp(t), t) for t, m in zip(raw_w, masks)]


def _forward_cache(x, raw_w, b, masks):
    ws = _actual_weights(raw_w, masks)
    acts = [x]
    n_layers = len(ws)
    for l, (w, bias) in enumerate(zip(ws, b)):
        z = acts[-1] @ w + bias
        acts.append(z if l == n_layers - 1 else np.tanh(z))
    return acts, ws


def _loss_and_grads(x, y, tau_rows, raw_w, b, masks, eps):
    n = y.size
    acts, ws = _forward_cache(x, raw_w, b, masks)
    pred = acts[-1][:, 0]
    e = y - pred
    loss = float(np.mean(smoothed_pinball(e, tau_rows, eps)))

    delta = (-_smoothed_pinball_grad(e, tau_rows, eps) / n)[:, None]
    grads_w = [None] * len(ws)
    grads_b = [None] * len(ws)
    for l in range(len(ws) - 1, -1, -1):
        grads_w[l] = acts[l].T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ ws[l].T) * (1.0 - acts[l] ** 2)
    # chain rule through the exp map of the constrained entries
    grads_w = [np.where(m, g * w, g) for g, w, m in zip(grads_w, ws, masks)]
    return loss, grads_w, grads_b


def _adam_train(x, y, tau_rows, sizes, masks, config, rng):
    raw_w, b = _init_params(sizes, masks, rng)
    m_w = [np.zeros_like(t) for t in raw_w]
    v_w = [np.zeros_like(t) for t in raw_w]
    m_b = [np.zeros_like(t) for t in b]
    v_b = [np.zeros_like(t) for t in b]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    decay = config.lr_final_fraction ** (1.0 / max(config.epochs - 1, 1))
    lr = config.learning_rate
    loss = np.inf
    for epoch in range(config.epochs):
        loss, gw, gb = _loss_and_grads(x, y, tau_rows, raw_w, b, masks, config.smoothing_eps)
        if not np.isfinite(loss):
            raise RuntimeError(f"MCQRNN training diverged (loss not finite at epoch {epoch})")
        t = epoch + 1
        corr1 = 1.0 - beta1**t
        corr2 = 1.0 - beta2**t
        for l in range(len(raw_w)):
            m_w[l] = beta1 * m_w[l] + (1 - beta1) * gw[l]
            v_w[l] = beta2 * v_w[l] + (1 - beta2) * gw[l] ** 2
            raw_w[l] -= lr * (m_w[l] / corr1) / (np.sqrt(v_w[l] / corr2) + adam_eps)
            m_b[l] = beta1 * m_b[l] + (1 - beta1) * gb[l]
            v_b[l] = beta2 * v_b[l] + (1 - beta2) * gb[l] ** 2
            b[l] -= lr * (m_b[l] / corr1) / (np.sqrt(v_b[l] / corr2) + adam_eps)
        lr *= decay
    final_loss, _, _ = _loss_and_grads(x, y, tau_rows, raw_w, b, masks, config.smoothing_eps)
    return final_loss, raw_w, b


def train_mcqrnn(x1, x2, config: McqrnnConfig = McqrnnConfig()) -> McqrnnModel:
    """Train the monotone composite quantile regression network.

    Builds the stacked design {(x1_i, tau_k) -> x2_i}, standardizes inputs
    and response, and keeps the best of ``n_restarts`` independently
    initialized full-batch runs.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise ValueError("x1 and x2 must be 1-d arrays of equal length")
    if x1.size < 30:
        raise ValueError("need at least 30 pairs to train")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise ValueError("training data must be finite")

    taus = np.asarray(config.taus, dtype=float)
    x_mean, x_std = float(x1.mean()), float(x1.std())
    y_mean, y_std = float(x2.mean()), float(x2.std())
    tau_mean, tau_std = float(taus.mean()), float(taus.std()) if taus.size > 1 else 1.0
    if tau_std == 0:
        tau_std = 1.0
    if x_std == 0:
        x_std = 1.0

    if y_std == 0:
        warnings.warn("constant response; returning a degenerate constant predictor", stacklevel=2)
        sizes = _layer_sizes(config)
        masks = _build_masks(sizes)
        return McqrnnModel(
            weights=[np.where(m, 1e-3, 0.0) for m in masks],
            biases=[np.zeros(s) for s in sizes[1:]],
            masks=masks,
            x_mean=x_mean, x_std=x_std, tau_mean=tau_mean, tau_std=tau_std,
            y_mean=y_mean, y_std=1.0,
            config=config, restart_losses=(0.0,), best_restart=0,
            constant_value=float(x2[0]),
        )

    n, k = x1.size, taus.size
    xs = (x1 - x_mean) / x_std
    ts = (taus - tau_mean) / tau_std
    grid_x = np.repeat(xs, k)
    grid_t = np.tile(ts, n)
    design = np.column_stack([grid_x, grid_t])
    y = np.repeat((x2 - y_mean) / y_std, k)
    tau_rows = np.tile(taus, n)

    sizes = _layer_sizes(config)
    masks = _build_masks(sizes)

    best = None
    losses = []
    for restart in range(config.n_restarts):
        rng = child_rng(config.seed, restart)
        loss, raw_w, b = _adam_train(design, y, tau_rows, sizes, masks, config, rng)
        losses.append(loss)
        if best is None or loss < best[0]:
            best = (loss, raw_w, b, restart)

    _, raw_w, b, best_idx = best
    return McqrnnModel(
        weights=_actual_weights(raw_w, masks),
        biases=[bb.copy() for bb in b],
        masks=masks,
        x_mean=x_mean, x_std=x_std, tau_mean=tau_mean, tau_std=tau_std,
        y_mean=y_mean, y_std=y_std,
        config=config,
        restart_losses=tuple(losses),
        best_restart=best_idx,
    )


def predict_quantiles(model: McqrnnModel, x1_grid, taus) -> ConditionalQuantileCurve:
    """Quantile curves for a grid of covariate values and levels.

    The network structure guarantees the output is non-decreasing in tau for
    any covariate value; the guarantee is also asserted here.
    """
    grid = np.atleast_1d(np.asarray(x1_grid, dtype=float))
    taus_arr = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any((taus_arr <= 0) | (taus_arr >= 1)):
        raise ValueError("taus must lie strictly inside (0, 1)")
    order = np.argsort(taus_arr, kind="stable")
    values_sorted = model.forward(grid, taus_arr[order])
    if np.any(np.diff(values_sorted, axis=1) < _CROSSING_TOL):
        raise AssertionError("quantile crossing detected; monotone constraint violated")
    values = np.empty_like(values_sorted)
    values[:, order] = values_sorted
    return ConditionalQuantileCurve(x1=grid, taus=taus_arr, values=values, method="mcqrnn")
