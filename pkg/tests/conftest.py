from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def finite_diff(fn, arr: np.ndarray, index: tuple, h: float = 1e-5) -> float:
    """Central difference of scalar fn w.r.t. one entry of arr (in place)."""
    orig = arr[index]
    arr[index] = orig + h
    hi = fn()
    arr[index] = orig - h
    lo = fn()
    arr[index] = orig
    return (hi - lo) / (2.0 * h)


def gradcheck(build_loss, tensors, probes_per_tensor: int = 10,
              h: float = 1e-5, rtol: float = 1e-4, seed: int = 0) -> float:
    """Compare autodiff grads of a scalar loss vs central finite differences.

    `build_loss` re-runs the forward pass from the current tensor data and
    returns the scalar loss Tensor. Returns the worst relative error seen.
    """
    rng = np.random.default_rng(seed)
    loss = build_loss()
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "no gradient reached a checked tensor"
        flat_indices = rng.choice(t.data.size, size=min(probes_per_tensor, t.data.size),
                                  replace=False)
        for flat in flat_indices:
            index = np.unravel_index(flat, t.data.shape)
            num = finite_diff(lambda: build_loss().item(), t.data, index, h=h)
            ana = float(t.grad[index])
            denom = max(abs(num), abs(ana), 1e-8)
            rel = abs(num - ana) / denom
            worst = max(worst, rel)
            assert rel < rtol, (
                f"gradcheck failed at {index}: analytic={ana:.8g} numeric={num:.8g} rel={rel:.3g}")
    return worst
