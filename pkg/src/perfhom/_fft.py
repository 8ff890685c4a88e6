"""Real FFT backend: torch when available (much faster on small grids), else scipy.

All entry points take and return numpy arrays; transforms act on the last
three axes.  Thread count is a process-global knob set by the CLI.
"""

from __future__ import annotations

import numpy as np

try:
    import torch

    HAVE_TORCH = True
except ImportError:  # pragma: no cover - torch is optional
    torch = None
    HAVE_TORCH = False

import scipy.fft as _sfft

_WORKERS = 1


def set_workers(n: int):
    global _WORKERS
    _WORKERS = max(1, int(n))
    if HAVE_TORCH:
        torch.set_num_threads(_WORKERS)


def get_workers() -> int:
    return _WORKERS


if HAVE_TORCH:

    def rfftn(a: np.ndarray) -> np.ndarray:
        t = torch.from_numpy(np.ascontiguousarray(a))
        return torch.fft.rfftn(t, dim=(-3, -2, -1)).numpy()

    def irfftn(a: np.ndarray, n: int) -> np.ndarray:
        t = torch.from_numpy(np.ascontiguousarray(a))
        return torch.fft.irfftn(t, s=(n, n, n), dim=(-3, -2, -1)).numpy()

else:  # pragma: no cover - exercised only without torch

    def rfftn(a: np.ndarray) -> np.ndarray:
        return _sfft.rfftn(a, axes=(-3, -2, -1), workers=_WORKERS)

    def irfftn(a: np.ndarray, n: int) -> np.ndarray:
        return _sfft.irfftn(a, s=(n, n, n), axes=(-3, -2, -1), workers=_WORKERS)
