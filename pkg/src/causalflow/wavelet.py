"""Periodized orthogonal discrete wavelet transform computed in the DFT domain.

Two orthogonal wavelets are available:

``"meyer"``
    Band-limited Meyer wavelet. Its scaling filter is flat on
    ``|w| <= pi/3`` and zero beyond ``2 pi/3``, so approximation and detail
    bands barely overlap. This is the default.
``"db2"``
    Four-tap Daubechies filter (closed form).

Signals are treated as periodic. The length must be divisible by
``2**level``.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import ConfigurationError

WAVELETS = ("meyer", "db2")

_SQ3 = math.sqrt(3.0)
DB2_LOWPASS = np.array([1 + _SQ3, 3 + _SQ3, 3 - _SQ3, 1 - _SQ3]) / (4 * math.sqrt(2.0))


def _meyer_nu(x):
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)


def meyer_scaling_hat(w):
    """Fourier transform of the Meyer scaling function."""
    w = np.abs(np.asarray(w, dtype=float))
    out = np.zeros_like(w)
    out[w <= 2 * np.pi / 3] = 1.0
    band = (w > 2 * np.pi / 3) & (w < 4 * np.pi / 3)
    out[band] = np.cos(np.pi / 2 * _meyer_nu(3 * w[band] / (2 * np.pi) - 1))
    return out


def _wrap(w):
    # Fold angular frequency into [-pi, pi).
    return (w + np.pi) % (2 * np.pi) - np.pi


def filter_responses(wavelet: str, L: int):
    """Low-pass ``H`` and high-pass ``G`` sampled at the ``L`` DFT frequencies."""
    w = 2 * np.pi * np.fft.fftfreq(L)
    if wavelet == "meyer":
        H = math.sqrt(2.0) * meyer_scaling_hat(2 * w)
        G = np.exp(-1j * w) * math.sqrt(2.0) * meyer_scaling_hat(2 * _wrap(w + np.pi))
        return H.astype(complex), G
    if wavelet == "db2":
        k = np.arange(DB2_LOWPASS.size)
        H = np.exp(-1j * np.outer(w, k)) @ DB2_LOWPASS
        H_shift = np.exp(-1j * np.outer(w + np.pi, k)) @ DB2_LOWPASS
        G = np.exp(-1j * w) * np.conj(H_shift)
        return H, G
    raise ConfigurationError(
        f"unknown wavelet {wavelet!r}; choose from {WAVELETS}",
        operation="filter_responses",
        parameter="wavelet",
    )


def dwt(x, wavelet: str = "meyer"):
    """One analysis level: ``(approximation, detail)``, each of half length."""
    x = np.asarray(x, dtype=float)
    L = x.shape[-1]
    if L % 2:
        raise ConfigurationError(
            f"signal length {L} is odd", operation="dwt", parameter="x"
        )
    H, G = filter_responses(wavelet, L)
    X = np.fft.fft(x, axis=-1)
    h = L // 2
    A = 0.5 * (np.conj(H[:h]) * X[..., :h] + np.conj(H[h:]) * X[..., h:])
    D = 0.5 * (np.conj(G[:h]) * X[..., :h] + np.conj(G[h:]) * X[..., h:])
    return np.fft.ifft(A, axis=-1).real, np.fft.ifft(D, axis=-1).real


def idwt(a, d, wavelet: str = "meyer"):
    """Inverse of :func:`dwt`."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if a.shape != d.shape:
        raise ConfigurationError(
            "approximation and detail shapes differ", operation="idwt", parameter="d"
        )
    L = 2 * a.shape[-1]
    H, G = filter_responses(wavelet, L)
    A = np.fft.fft(a, axis=-1)
    D = np.fft.fft(d, axis=-1)
    reps = (1,) * (a.ndim - 1) + (2,)
    X = H * np.tile(A, reps) + G * np.tile(D, reps)
    return np.fft.ifft(X, axis=-1).real


def wavedec(x, level: int, wavelet: str = "meyer") -> list:
    """Multilevel decomposition ``[a_J, d_J, d_{J-1}, ..., d_1]``."""
    x = np.asarray(x, dtype=float)
    if level < 0 or x.shape[-1] % (2**level):
        raise ConfigurationError(
            f"length {x.shape[-1]} is not divisible by 2**{level}",
            operation="wavedec",
            parameter="level",
        )
    details = []
    a = x
    for _ in range(level):
        a, d = dwt(a, wavelet)
        details.append(d)
    return [a] + details[::-1]


def waverec(coeffs, wavelet: str = "meyer") -> np.ndarray:
    """Inverse of :func:`wavedec`."""
    a = np.asarray(coeffs[0], dtype=float)
    for d in coeffs[1:]:
        a = idwt(a, d, wavelet)
    return a
