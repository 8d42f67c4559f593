"""Radix-2 FFT and the fused attention guidance (FAG) map.

The guidance map for a low-light image combines an inverted-intensity term,
which is large in dark regions, with the high-pass component of the
grayscale image, which picks out edges and texture::

    term1 = 1 - (lam / sqrt(3)) * (R + G + B)
    term2 = Re ifft2(mask * fft2(gray))
    FAG   = clip(term1 + term2, 0, 1)

``mask`` is an ideal high-pass filter that removes every frequency bin
within ``cutoff`` of DC.
"""
from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from .errors import ContractError

DEFAULT_LAMBDA = 1.0 / math.sqrt(3.0)
DEFAULT_CUTOFF = 20.0
REFERENCE_SIZE = 256


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_last_axis(x: np.ndarray, inverse: bool) -> np.ndarray:
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ContractError(f"FFT length must be a power of two, got {n}")
    lead = x.shape[:-1]
    out = np.asarray(x, dtype=np.complex128)[..., _bit_reverse(n)]
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * math.pi * np.arange(half) / size)
        blocks = out.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    if inverse:
        out = out / n
    return out


def fft2d(img: np.ndarray) -> np.ndarray:
    """2-D DFT over the last two axes; DC lands at index (0, 0).

    Leading axes are treated as a batch. Both extents must be powers of two.
    """
    img = np.asarray(img)
    if img.ndim < 2:
        raise ContractError(f"fft2d needs at least 2 dimensions, got {img.shape}")
    rows = _fft_last_axis(img, inverse=False)
    return np.swapaxes(_fft_last_axis(np.swapaxes(rows, -1, -2), inverse=False), -1, -2)


def ifft2d(spectrum: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2d` (complex result; real input gives ~zero imaginary part)."""
    spectrum = np.asarray(spectrum)
    if spectrum.ndim < 2:
        raise ContractError(f"ifft2d needs at least 2 dimensions, got {spectrum.shape}")
    rows = _fft_last_axis(spectrum, inverse=True)
    return np.swapaxes(_fft_last_axis(np.swapaxes(rows, -1, -2), inverse=True), -1, -2)


def radial_frequency(w: int, h: int) -> np.ndarray:
    """Distance of each (h, w) bin from DC in centred integer bin units."""
    fy = np.fft.fftfreq(h) * h
    fx = np.fft.fftfreq(w) * w
    return np.hypot(fy[:, None], fx[None, :])


def nyquist_radius(w: int, h: int) -> float:
    """Largest radial frequency present on an (h, w) grid."""
    return math.hypot(w / 2.0, h / 2.0)


def highpass_mask(w: int, h: int, cutoff: float) -> np.ndarray:
    """Ideal high-pass mask: 0 within ``cutoff`` of DC, 1 elsewhere; DC always 0."""
    mask = (radial_frequency(w, h) > cutoff).astype(np.float64)
    mask[0, 0] = 0.0
    return mask


def scaled_cutoff(cutoff: float, h: int, w: int, reference: Optional[int] = REFERENCE_SIZE) -> float:
    """Rescale a cutoff quoted at ``reference`` x ``reference`` to an (h, w) grid."""
    if reference is None:
        return float(cutoff)
    return float(cutoff) * min(h, w) / reference


def fag_terms(
    intensity_sum: np.ndarray,
    gray: np.ndarray,
    lam: float = DEFAULT_LAMBDA,
    cutoff: float = DEFAULT_CUTOFF,
    reference: Optional[int] = REFERENCE_SIZE,
) -> Tuple[np.ndarray, np.ndarray]:
    """The two unclamped FAG terms for ``(..., H, W)`` stacks.

    ``intensity_sum`` is R + G + B per pixel and ``gray`` the image whose
    high-frequency content is extracted.
    """
    if lam <= 0:
        raise ContractError(f"lambda must be positive, got {lam}")
    if np.shape(intensity_sum) != np.shape(gray):
        raise ContractError(f"extent mismatch: {np.shape(intensity_sum)} vs {np.shape(gray)}")
    h, w = gray.shape[-2:]
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ContractError(f"guidance needs power-of-two extents, got {h}x{w}")
    term1 = 1.0 - (lam / math.sqrt(3.0)) * intensity_sum
    mask = highpass_mask(w, h, scaled_cutoff(cutoff, h, w, reference))
    term2 = ifft2d(mask * fft2d(gray)).real
    return term1, term2


def fag(
    img: np.ndarray,
    lam: float = DEFAULT_LAMBDA,
    cutoff: float = DEFAULT_CUTOFF,
    reference: Optional[int] = REFERENCE_SIZE,
) -> np.ndarray:
    """Guidance map of an ``(H, W, 3)`` RGB image in [0, 1].

    ``cutoff`` is quoted at ``reference`` resolution and rescaled to the
    image; pass ``reference=None`` to use it as an absolute bin radius.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"fag expects an (H, W, 3) image, got {img.shape}")
    total = img[..., 0] + img[..., 1] + img[..., 2]
    term1, term2 = fag_terms(total, total / 3.0, lam, cutoff, reference)
    return np.clip(term1 + term2, 0.0, 1.0)


def fag_gray(
    gray: np.ndarray,
    lam: float = DEFAULT_LAMBDA,
    cutoff: float = DEFAULT_CUTOFF,
    reference: Optional[int] = REFERENCE_SIZE,
) -> np.ndarray:
    """Guidance for grayscale stacks ``(..., H, W)``, treating R = G = B = gray."""
    gray = np.asarray(gray, dtype=np.float64)
    term1, term2 = fag_terms(3.0 * gray, gray, lam, cutoff, reference)
    return np.clip(term1 + term2, 0.0, 1.0)
