import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def scalar_blur_oracle(sharp, shutter, exposure, t):
    """Per-pixel scalar-loop mean over the exposure window; the independent
    reference for synthesize_blur."""
    frames, channels, height, width = sharp.shape
    out = np.zeros((channels, height, width), dtype=np.float64)
    for c in range(channels):
        for y in range(height):
            for x in range(width):
                acc = 0.0
                for k in range(exposure):
                    acc += float(sharp[t * shutter + k, c, y, x])
                out[c, y, x] = acc / exposure
    return out


def finite_difference_grads(fn, tensors, eps=1e-5):
    """Central finite differences of a scalar function w.r.t. each tensor."""
    grads = []
    for tensor in tensors:
        grad = torch.zeros_like(tensor)
        flat = tensor.view(-1)
        gflat = grad.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = fn().item()
            flat[i] = orig - eps
            lo = fn().item()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(grad)
    return grads
