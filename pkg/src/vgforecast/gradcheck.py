"""Finite-difference verification of the model's reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .model import Batch, ModelParams, model_loss


def analytic_gradients(params: ModelParams, batch: Batch) -> dict[str, np.ndarray]:
    params.zero_grad()
    loss = model_loss(batch, params)
    loss.backward()
    out = {}
    for name, t in params.tensors.items():
        out[name] = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
    params.zero_grad()
    return out


def loss_value(params: ModelParams, batch: Batch) -> float:
    return float(model_loss(batch, params).data)


def fd_gradients(params: ModelParams, batch: Batch, step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences over every coordinate of every group."""
    out = {}
    for name, t in params.tensors.items():
        grad = np.zeros_like(t.data)
        flat = t.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_value(params, batch)
            flat[i] = orig - step
            down = loss_value(params, batch)
            flat[i] = orig
            grad.ravel()[i] = (up - down) / (2.0 * step)
        out[name] = grad
    return out


def group_relative_errors(params: ModelParams, batch: Batch,
                          step: float = 1e-5) -> dict[str, float]:
    """Per-parameter-group L2 relative error between analytic and FD gradients."""
    analytic = analytic_gradients(params, batch)
    fd = fd_gradients(params, batch, step=step)
    errors = {}
    for name in params.names:
        num = np.linalg.norm(analytic[name] - fd[name])
        den = max(np.linalg.norm(analytic[name]), np.linalg.norm(fd[name]), 1e-12)
        errors[name] = num / den
    return errors
