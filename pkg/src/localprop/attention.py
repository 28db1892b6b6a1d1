"""Local spatial pooling and norm-based spatial attention."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import FeatureTensor


def local_spatial_pool(tensor: FeatureTensor, kernel: int = 3, stride: int = 1) -> FeatureTensor:
    """Channel-wise average over ``kernel x kernel`` windows, no padding."""
    if kernel < 1 or stride < 1:
        raise ValueError("kernel and stride must be positive")
    if kernel > tensor.width or kernel > tensor.height:
        raise ValueError(
            f"kernel {kernel} exceeds spatial size {tensor.width}x{tensor.height}"
        )
    if kernel == 1 and stride == 1:
        return tensor
    windows = sliding_window_view(tensor.data, (kernel, kernel), axis=(0, 1))
    windows = windows[::stride, ::stride]
    return FeatureTensor(windows.mean(axis=(-2, -1)))


def attention_mask(vectors: np.ndarray, tau: float) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    return norms >= tau * norms.max()


def spatial_attention(tensor: FeatureTensor, tau: float) -> np.ndarray:
    """Position vectors whose norm is at least ``tau`` times the largest norm.

    Returns a ``(n, d)`` array in raster order. The comparison is
    non-strict, so the maximizing position is always kept and an all-zero
    tensor keeps every position.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    vectors = tensor.positions()
    return vectors[attention_mask(vectors, tau)]


def select_features(tensor: FeatureTensor, config) -> np.ndarray:
    """Pool spatially, then apply attention if the config enables it."""
    if config.pool_kernel > 1:
        tensor = local_spatial_pool(tensor, config.pool_kernel, 1)
    if config.use_attention:
        return spatial_attention(tensor, config.tau)
    return tensor.positions()
