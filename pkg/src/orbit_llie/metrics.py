"""Full-reference quality metrics for grayscale images in [0, 1].

``psnr`` is capped at 99 dB so identical images give a finite number.
``ssim`` uses an 11x11 Gaussian window (sigma 1.5) and averages over valid
window positions. ``fsim`` combines log-Gabor phase congruency (4 scales,
4 orientations) with Scharr gradient magnitude and pools with the larger
of the two phase-congruency maps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError

PSNR_CAP = 99.0
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
FSIM_T1 = 0.85
FSIM_T2 = 160.0 / 255.0**2
COLUMNS = ("PSNR", "SSIM", "FSIM", "LPIPS")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D grayscale image, got {a.shape}")
    return a, b


def psnr(a, b) -> float:
    """``10 log10(1 / MSE)`` in dB for [0, 1] data, at most 99."""
    a, b = _pair(a, b)
    err = float(np.mean((a - b) ** 2))
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / err))


# -- SSIM -------------------------------------------------------------------

def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalised 1-D Gaussian taps (the 2-D window is their outer product)."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(x**2) / (2.0 * sigma**2))
    return w / w.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable weighted sum over every fully contained window."""
    k = taps.size
    rows = sliding_window_view(img, k, axis=1) @ taps
    return sliding_window_view(rows, k, axis=0) @ taps


def ssim_map(a, b, size: int = 11, sigma: float = 1.5) -> np.ndarray:
    a, b = _pair(a, b)
    if min(a.shape) < size:
        raise ContractError(f"SSIM window {size} larger than image {a.shape}")
    w = gaussian_window(size, sigma)
    mu_a, mu_b = _filter_valid(a, w), _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b) -> float:
    return float(np.mean(ssim_map(a, b)))


# -- FSIM -------------------------------------------------------------------

def _centred_grid(n: int) -> np.ndarray:
    if n % 2:
        return np.arange(-(n - 1) / 2, (n - 1) / 2 + 1) / (n - 1)
    return np.arange(-n / 2, n / 2) / n


def _frequency_grid(rows: int, cols: int):
    x, y = np.meshgrid(_centred_grid(cols), _centred_grid(rows))
    radius = np.fft.ifftshift(np.sqrt(x**2 + y**2))
    theta = np.fft.ifftshift(np.arctan2(-y, x))
    return radius, theta


def _lowpass(rows: int, cols: int, cutoff: float = 0.45, order: int = 15) -> np.ndarray:
    x, y = np.meshgrid(_centred_grid(cols), _centred_grid(rows))
    radius = np.sqrt(x**2 + y**2)
    return np.fft.ifftshift(1.0 / (1.0 + (radius / cutoff) ** (2 * order)))


def phase_congruency(
    img,
    nscale: int = 4,
    norient: int = 4,
    min_wavelength: float = 6.0,
    mult: float = 2.0,
    sigma_on_f: float = 0.55,
    d_theta_on_sigma: float = 1.2,
    k: float = 2.0,
    eps: float = 1e-4,
) -> np.ndarray:
    """Phase congruency map from a bank of log-Gabor filters.

    Per orientation, the local energy along the mean phase direction is
    reduced by a noise threshold estimated from the smallest-scale filter
    response, then summed and normalised by the total amplitude.
    """
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape
    spectrum = np.fft.fft2(img)
    radius, theta = _frequency_grid(rows, cols)
    radius[0, 0] = 1.0
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    lp = _lowpass(rows, cols)
    theta_sigma = math.pi / norient / d_theta_on_sigma

    log_gabor = []
    for s in range(nscale):
        fo = 1.0 / (min_wavelength * mult**s)
        g = np.exp(-(np.log(radius / fo) ** 2) / (2.0 * math.log(sigma_on_f) ** 2)) * lp
        g[0, 0] = 0.0
        log_gabor.append(g)

    energy_all = np.zeros((rows, cols))
    amp_all = np.zeros((rows, cols))
    for o in range(norient):
        angle = o * math.pi / norient
        ds = sin_t * math.cos(angle) - cos_t * math.sin(angle)
        dc = cos_t * math.cos(angle) + sin_t * math.sin(angle)
        spread = np.exp(-(np.arctan2(ds, dc) ** 2) / (2.0 * theta_sigma**2))

        responses, spatial = [], []
        for s in range(nscale):
            filt = log_gabor[s] * spread
            spatial.append(np.real(np.fft.ifft2(filt)) * math.sqrt(rows * cols))
            responses.append(np.fft.ifft2(spectrum * filt))
            if s == 0:
                em_n = float(np.sum(filt**2))
        sum_e = sum(r.real for r in responses)
        sum_o = sum(r.imag for r in responses)
        sum_an = sum(np.abs(r) for r in responses)
        x_energy = np.sqrt(sum_e**2 + sum_o**2) + eps
        mean_e, mean_o = sum_e / x_energy, sum_o / x_energy
        energy = np.zeros((rows, cols))
        for r in responses:
            e, od = r.real, r.imag
            energy += e * mean_e + od * mean_o - np.abs(e * mean_o - od * mean_e)

        mean_e2n = -float(np.median(np.abs(responses[0]) ** 2)) / math.log(0.5)
        noise_power = mean_e2n / em_n
        sum_an2 = sum(float(np.sum(f**2)) for f in spatial)
        sum_aiaj = sum(
            float(np.sum(spatial[i] * spatial[j])) for i in range(nscale) for j in range(i + 1, nscale)
        )
        noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj
        tau = math.sqrt(max(noise_energy2, 0.0) / 2.0)
        threshold = (tau * math.sqrt(math.pi / 2.0) + k * math.sqrt((2.0 - math.pi / 2.0) * tau**2)) / 1.7
        energy_all += np.maximum(energy - threshold, 0.0)
        amp_all += sum_an
    return energy_all / (amp_all + eps)


SCHARR_X = np.array([[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]]) / 16.0
SCHARR_Y = SCHARR_X.T.copy()


def _correlate_same(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 1)
    return np.einsum("ijkl,kl->ij", sliding_window_view(padded, (3, 3)), kernel)


def gradient_magnitude(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return np.hypot(_correlate_same(img, SCHARR_X), _correlate_same(img, SCHARR_Y))


def _downsample(img: np.ndarray) -> np.ndarray:
    f = max(1, round(min(img.shape) / 256))
    if f == 1:
        return img
    kernel = np.full((f, f), 1.0 / (f * f))
    lo, hi = (f - 1) // 2, f // 2
    padded = np.pad(img, ((lo, hi), (lo, hi)))
    smooth = np.einsum("ijkl,kl->ij", sliding_window_view(padded, (f, f)), kernel)
    return smooth[::f, ::f]


def fsim(a, b) -> float:
    """Feature similarity index of two grayscale images in [0, 1]."""
    a, b = _pair(a, b)
    a, b = _downsample(a), _downsample(b)
    pc_a, pc_b = phase_congruency(255.0 * a), phase_congruency(255.0 * b)
    g_a, g_b = gradient_magnitude(a), gradient_magnitude(b)
    s_pc = (2.0 * pc_a * pc_b + FSIM_T1) / (pc_a * pc_a + pc_b * pc_b + FSIM_T1)
    s_g = (2.0 * g_a * g_b + FSIM_T2) / (g_a * g_a + g_b * g_b + FSIM_T2)
    pc_m = np.maximum(pc_a, pc_b)
    weight = float(np.sum(pc_m))
    if weight == 0.0:
        # featureless pair (e.g. constant images): unweighted mean similarity
        return float(np.mean(s_g * s_pc))
    return float(np.sum(s_g * s_pc * pc_m) / weight)


# -- tables -----------------------------------------------------------------

@dataclass(frozen=True)
class Scores:
    psnr: float
    ssim: float
    fsim: float

    def row(self) -> List[str]:
        return [f"{self.psnr:.4f}", f"{self.ssim:.4f}", f"{self.fsim:.4f}", "n/a"]


def score(a, b) -> Scores:
    return Scores(psnr(a, b), ssim(a, b), fsim(a, b))


def mean_scores(items: Iterable[Scores]) -> Scores:
    items = list(items)
    if not items:
        raise ContractError("no scores to average")
    return Scores(*(float(np.mean([getattr(s, f) for s in items])) for f in ("psnr", "ssim", "fsim")))


def format_table(rows: Sequence[tuple], label: str = "method") -> str:
    """CSV with a label column followed by PSNR, SSIM, FSIM, LPIPS (always n/a)."""
    lines = [",".join((label,) + COLUMNS)]
    for name, scores in rows:
        lines.append(",".join([name] + scores.row()))
    return "\n".join(lines) + "\n"

