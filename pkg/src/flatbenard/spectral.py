"""Horizontal Fourier helpers shared by the geometry, operator and solver layers.

Fields keep the horizontal axes in positions -3 (x1) and -2 (x2) with the
vertical axis last; surface arrays use -2 and -1.  Leading axes are free
batch/component dimensions.
"""
import numpy as np


def wavenumbers(n, L, nyquist_zero=True):
    """Angular wavenumbers matching rfft output along one axis."""
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=L / n)
    if nyquist_zero and n % 2 == 0:
        k[-1] = 0.0
    return k


def full_wavenumbers(n, L):
    return 2.0 * np.pi * np.fft.fftfreq(n, d=L / n)


def _shape_for(ndim, axis, m):
    shape = [1] * ndim
    shape[axis] = m
    return shape


def deriv(f, L, axis, order=1):
    """Spectral derivative along one periodic axis.

    The Nyquist mode is dropped for odd orders so the discrete operator is
    exactly skew-symmetric under the grid sum.
    """
    n = f.shape[axis]
    fh = np.fft.rfft(f, axis=axis)
    if order % 2 == 1:
        k = wavenumbers(n, L, nyquist_zero=True)
    else:
        k = wavenumbers(n, L, nyquist_zero=False)
    mult = (1j * k) ** order
    fh = fh * mult.reshape(_shape_for(f.ndim, axis % f.ndim, len(k)))
    return np.fft.irfft(fh, n=n, axis=axis)


def dealias(f, axes=(-3, -2)):
    """Zero horizontal modes above two thirds of the resolved band."""
    out = f
    for ax in axes:
        n = out.shape[ax]
        fh = np.fft.rfft(out, axis=ax)
        cut = n // 3
        idx = [slice(None)] * out.ndim
        idx[ax] = slice(cut + 1, None)
        fh[tuple(idx)] = 0.0
        out = np.fft.irfft(fh, n=n, axis=ax)
    return out


def dealiased_product(a, b, axes=(-3, -2)):
    return dealias(dealias(a, axes) * dealias(b, axes), axes)
