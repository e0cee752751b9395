"""FFT helpers and spectral multipliers on tensor-product grids."""
from __future__ import annotations

import os
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .core import Grid

_WORKERS = int(os.environ.get("MEANFIELD_THREADS", "1") or 1)


def set_threads(n: int) -> None:
    global _WORKERS
    _WORKERS = max(1, int(n))


def fftn(a: np.ndarray, axes: Sequence[int] | None = None, overwrite: bool = False) -> np.ndarray:
    return sfft.fftn(a, axes=axes, workers=_WORKERS, overwrite_x=overwrite)


def ifftn(a: np.ndarray, axes: Sequence[int] | None = None, overwrite: bool = False) -> np.ndarray:
    return sfft.ifftn(a, axes=axes, workers=_WORKERS, overwrite_x=overwrite)


def axis_symbol(grid: Grid, ndim: int, axis: int, values: np.ndarray) -> np.ndarray:
    """Reshape a length-n vector so it broadcasts along `axis` of an ndim tensor."""
    shape = [1] * ndim
    shape[axis] = grid.n
    return np.asarray(values).reshape(shape)


def xi_squared(grid: Grid, ndim: int, axes: Sequence[int]) -> np.ndarray:
    """Sum of squared FFT-ordered wavenumbers over `axes`, broadcastable."""
    out = np.zeros((1,) * ndim)
    for ax in axes:
        k = grid.fft_wavenumbers(ax % grid.d)
        out = out + axis_symbol(grid, ndim, ax, k**2)
    return out


def apply_multiplier(a: np.ndarray, symbol: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
    """F^{-1}[symbol * F a] over `axes` (all axes by default)."""
    return ifftn(symbol * fftn(a, axes), axes, overwrite=True)


def laplacian(a: np.ndarray, grid: Grid, axes: Sequence[int] | None = None) -> np.ndarray:
    axes = list(range(a.ndim)) if axes is None else list(axes)
    return apply_multiplier(a, -xi_squared(grid, a.ndim, axes), axes)


def derivative(a: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Spectral first derivative along one tensor axis (Nyquist mode zeroed)."""
    k = grid.fft_wavenumbers(axis % grid.d).copy()
    k[grid.n // 2] = 0.0
    return apply_multiplier(a, 1j * axis_symbol(grid, a.ndim, axis, k), [axis])


def grad_norm2(a: np.ndarray, grid: Grid, weight: float, axes: Sequence[int] | None = None) -> float:
    """weight * sum |∇a|^2 over `axes`, evaluated in Fourier space (Parseval)."""
    axes = list(range(a.ndim)) if axes is None else list(axes)
    fa = fftn(a, axes)
    npts = np.prod([a.shape[ax] for ax in axes])
    return float(weight * np.sum(xi_squared(grid, a.ndim, axes) * np.abs(fa) ** 2).real / npts)


def trig_interp_matrix(grid: Grid, axis: int, points: np.ndarray) -> np.ndarray:
    """Matrix E with (E f)_m = band-limited periodic interpolant of f at points[m].

    The Nyquist mode is split evenly between ±n/2 so real data stays real.
    """
    n = grid.n
    x0 = -grid.L[axis]
    j = np.fft.fftfreq(n, d=1.0 / n)
    k = 2 * np.pi * j / (2 * grid.L[axis])
    w = np.ones(n)
    w[n // 2] = 0.0
    F = np.exp(-2j * np.pi * np.outer(j, np.arange(n)) / n) / n  # forward DFT / n
    ph = np.exp(1j * np.outer(np.asarray(points) - x0, k)) * w
    E = ph @ F
    # Nyquist: cos(k_N (x - x0)) * c_N
    kn = np.pi * n / (2 * grid.L[axis])
    cn = np.cos(np.pi * np.arange(n)) / n
    E += np.outer(np.cos(kn * (np.asarray(points) - x0)), cn)
    return E


def apply_axis_matrix(a: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(mat, a, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)
