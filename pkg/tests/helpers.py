"""Shared test utilities: the central finite-difference gradient oracle."""

from __future__ import annotations

import torch
import torch.nn as nn


def make_pure(module: nn.Module) -> nn.Module:
    """Put a module in a state where forward is a pure function of params.

    Batch norms are switched to batch statistics without running-stat
    updates, so repeated evaluation at perturbed parameters is well defined
    while the batch-statistics gradient path stays exercised.
    """
    from rfcnet.layers import StepBatchNorm2d

    for m in module.modules():
        if isinstance(m, nn.modules.batchnorm._BatchNorm):
            m.track_running_stats = False
            m.running_mean = None
            m.running_var = None
        elif isinstance(m, StepBatchNorm2d):
            m.running_mean = None
            m.running_var = None
    module.train()
    return module


def numeric_grad(f, param: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Central finite differences of scalar f() wrt every entry of param.

    Mutates param in place entry by entry and restores it; f must be pure.
    """
    grad = torch.zeros_like(param)
    flat = param.data.view(-1)
    grad_flat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        up = float(f())
        flat[i] = orig - eps
        down = float(f())
        flat[i] = orig
        grad_flat[i] = (up - down) / (2.0 * eps)
    return grad


def check_gradients(f, params: dict[str, torch.Tensor], rel_tol: float = 1e-4,
                    eps: float = 1e-5) -> dict[str, float]:
    """Compare autograd gradients of f() against the finite-difference oracle.

    Returns the per-tensor relative errors (max-norm of the difference over
    max-norm of the numeric gradient); asserts every one is within rel_tol.
    """
    for p in params.values():
        p.grad = None
    loss = f()
    loss.backward()
    errors = {}
    for name, p in params.items():
        auto = p.grad.detach().clone()
        with torch.no_grad():
            numeric = numeric_grad(f, p, eps=eps)
        scale = max(numeric.abs().max().item(), auto.abs().max().item(), 1e-12)
        rel = (auto - numeric).abs().max().item() / scale
        errors[name] = rel
        assert rel <= rel_tol, f"{name}: rel err {rel:.3e} > {rel_tol}"
    return errors
