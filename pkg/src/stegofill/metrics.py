"""Image quality measurement: PSNR, SSIM, APD, RMSE.

Both images are quantized to 8-bit integers before any metric is computed.
APD and RMSE are reported in 8-bit units; PSNR uses peak 255 and is derived
from the unrounded RMSE (reported as +inf at zero error). SSIM follows the
original formulation: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
dynamic range 255, valid-window filtering, averaged over the color channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PEAK = 255.0


@dataclass
class QualityReport:
    psnr: float
    ssim: float
    apd: float
    rmse: float

    def csv_row(self, image_id: str) -> str:
        return f"{image_id},{self.psnr:.6g},{self.ssim:.6g},{self.apd:.6g},{self.rmse:.6g}"


CSV_HEADER = "image_id,psnr,ssim,apd,rmse"


def quantize_u8(x: np.ndarray) -> np.ndarray:
    """Clamp to [0,1], scale by 255, round half away from zero."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


_WINDOW = _gaussian_window()


def _ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    w = _WINDOW
    mu_a = convolve2d(a, w, mode="valid")
    mu_b = convolve2d(b, w, mode="valid")
    var_a = convolve2d(a * a, w, mode="valid") - mu_a * mu_a
    var_b = convolve2d(b * b, w, mode="valid") - mu_b * mu_b
    cov = convolve2d(a * b, w, mode="valid") - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_u8(a: np.ndarray, b: np.ndarray) -> float:
    """Channel-averaged SSIM over two (C,H,W) uint8 images."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    af = a.astype(np.float64)
    bf = b.astype(np.float64)
    return float(np.mean([_ssim_channel(af[c], bf[c]) for c in range(a.shape[0])]))


def psnr_from_rmse(rmse: float) -> float:
    if rmse == 0.0:
        return math.inf
    return 20.0 * math.log10(PEAK / rmse)


def evaluate_pair(reference: np.ndarray, test: np.ndarray) -> QualityReport:
    """Quality of `test` against `reference`; both (C,H,W) in [0,1]."""
    reference = np.asarray(reference)
    test = np.asarray(test)
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    ref_q = quantize_u8(reference)
    test_q = quantize_u8(test)
    diff = ref_q.astype(np.float64) - test_q.astype(np.float64)
    apd = float(np.mean(np.abs(diff)))
    rmse = float(np.sqrt(np.mean(diff * diff)))
    return QualityReport(
        psnr=psnr_from_rmse(rmse),
        ssim=ssim_u8(ref_q, test_q),
        apd=apd,
        rmse=rmse,
    )
