"""Central finite-difference verification of backpropagated gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward, zero_grads


def finite_difference_check(build_loss, params: dict[str, Tensor],
                            h: float = 1e-3) -> float:
    """Max per-tensor relative error between backprop and central differences.

    build_loss() must rebuild the graph from the current parameter values and
    return the scalar loss tensor.  Parameters should be float64 for the
    stated tolerances to be meaningful.
    """
    zero_grads(params)
    loss = build_loss()
    backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = build_loss().item()
            flat[i] = orig - h
            down = build_loss().item()
            flat[i] = orig
            fd[i] = (up - down) / (2.0 * h)
        a = analytic[name].reshape(-1)
        denom = max(np.linalg.norm(a), np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(np.linalg.norm(a - fd) / denom))
    return worst
