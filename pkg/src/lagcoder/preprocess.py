"""Raw voltage -> smoothed broadband high-frequency power.

Stage order is fixed: despike -> common average reference -> band power
(complex Morlet wavelets) -> Hamming smoothing. The output is a power
envelope, not a voltage trace, so the composition is deliberately not
idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from .errors import AllSpikes, EmptyBand, NyquistViolation, TooFewElectrodes
from .types import SignalRecording


@dataclass
class PreprocessConfig:
    despike_multiplier: float = 4.0  # IQR multiples around the median
    band_lo: float = 70.0
    band_hi: float = 200.0
    n_cycles: float = 6.0
    n_wavelet_freqs: int = 16
    line_noise_hz: tuple[float, ...] = (60.0, 120.0, 180.0)
    line_exclusion_halfwidth: float = 5.0
    smooth_kernel_ms: float = 50.0
    normalize_freq_power: bool = True  # divide each frequency by its temporal mean
    despike: bool = True

    def __post_init__(self):
        if not self.band_lo < self.band_hi:
            raise EmptyBand(f"band [{self.band_lo}, {self.band_hi}] is empty")
        if self.n_cycles < 1:
            raise NyquistViolation("wavelets need at least one cycle")
        if self.smooth_kernel_ms <= 0:
            raise EmptyBand("smoothing kernel width must be positive")


def despike(signal: np.ndarray, multiplier: float = 4.0) -> tuple[np.ndarray, np.ndarray]:
    """Replace samples outside median +- multiplier*IQR by cubic interpolation.

    Returns (cleaned, mask); mask marks replaced samples. A zero IQR
    (constant signal) disables despiking so nothing is flagged.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 4:
        raise AllSpikes("despike needs a 1-D signal of at least 4 samples")
    med = np.median(x)
    q25, q75 = np.percentile(x, [25, 75])
    iqr = q75 - q25
    mask = np.zeros(x.size, dtype=bool)
    if iqr == 0.0:
        return x.copy(), mask
    lo, hi = med - multiplier * iqr, med + multiplier * iqr
    mask = (x < lo) | (x > hi)
    if not mask.any():
        return x.copy(), mask
    clean_idx = np.flatnonzero(~mask)
    if clean_idx.size < 2:
        raise AllSpikes("all samples flagged as spikes; cannot interpolate")
    out = x.copy()
    spline = CubicSpline(clean_idx, x[clean_idx])
    bad_idx = np.flatnonzero(mask)
    out[bad_idx] = spline(bad_idx)
    # outside the clean support, hold the nearest clean value instead of
    # extrapolating the cubic
    out[bad_idx[bad_idx < clean_idx[0]]] = x[clean_idx[0]]
    out[bad_idx[bad_idx > clean_idx[-1]]] = x[clean_idx[-1]]
    return out, mask


def common_average_reference(signals: np.ndarray) -> np.ndarray:
    """Subtract the per-sample mean across electrodes from every electrode."""
    x = np.asarray(signals, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooFewElectrodes("common average referencing needs >= 2 electrodes")
    return x - x.mean(axis=0, keepdims=True)


def wavelet_frequencies(cfg: PreprocessConfig) -> np.ndarray:
    """Log-spaced band frequencies with line-noise neighborhoods removed."""
    freqs = np.geomspace(cfg.band_lo, cfg.band_hi, cfg.n_wavelet_freqs)
    keep = np.ones(freqs.size, dtype=bool)
    for line in cfg.line_noise_hz:
        keep &= np.abs(freqs - line) > cfg.line_exclusion_halfwidth
    return freqs[keep]


def _morlet_kernel(freq: float, sample_rate: float, n_cycles: float) -> np.ndarray:
    sigma_t = n_cycles / (2.0 * np.pi * freq)
    half = int(np.ceil(4.0 * sigma_t * sample_rate))
    t = np.arange(-half, half + 1) / sample_rate
    kernel = np.exp(2j * np.pi * freq * t) * np.exp(-(t**2) / (2.0 * sigma_t**2))
    return kernel / np.abs(kernel).sum()


def highgamma_power(signal: np.ndarray, sample_rate: float,
                    cfg: PreprocessConfig | None = None) -> np.ndarray:
    """Average wavelet power over the configured band, line noise excluded.

    Per retained frequency: convolve with a complex Morlet wavelet of
    cfg.n_cycles cycles, square the magnitude, and (by default) divide by the
    frequency's own temporal mean so steep spectral rolloff cannot let one
    frequency dominate the average. Frequencies whose mean power is below
    1e-12 of the across-band scale skip that normalization.
    """
    cfg = cfg or PreprocessConfig()
    x = np.asarray(signal, dtype=np.float64)
    if sample_rate < 2.0 * cfg.band_hi:
        raise NyquistViolation(
            f"sample rate {sample_rate} Hz cannot resolve {cfg.band_hi} Hz"
        )
    freqs = wavelet_frequencies(cfg)
    if freqs.size == 0:
        raise EmptyBand("line-noise exclusion removed every wavelet frequency")
    powers = np.empty((freqs.size, x.size))
    for i, f in enumerate(freqs):
        analytic = fftconvolve(x, _morlet_kernel(f, sample_rate, cfg.n_cycles), mode="same")
        powers[i] = np.abs(analytic) ** 2
    if cfg.normalize_freq_power:
        means = powers.mean(axis=1)
        scale = means.mean()
        for i in range(freqs.size):
            if means[i] > 1e-12 * scale:
                powers[i] /= means[i]
    return powers.mean(axis=0)


def hamming_smooth(series: np.ndarray, kernel_ms: float, sample_rate: float) -> np.ndarray:
    """Unit-area Hamming smoothing; edges renormalized over the valid overlap."""
    x = np.asarray(series, dtype=np.float64)
    n_kernel = max(1, int(round(kernel_ms / 1000.0 * sample_rate)))
    kernel = np.hamming(n_kernel)
    kernel /= kernel.sum()
    if n_kernel == 1:
        return x.copy()
    num = fftconvolve(x, kernel, mode="same")
    den = fftconvolve(np.ones_like(x), kernel, mode="same")
    return num / den


def preprocess_recording(rec: SignalRecording,
                         cfg: PreprocessConfig | None = None) -> SignalRecording:
    """Full per-electrode pipeline; CAR is the only cross-electrode stage."""
    cfg = cfg or PreprocessConfig()
    stages = []
    signals = np.asarray(rec.samples, dtype=np.float64)
    if cfg.despike:
        signals = np.stack([despike(row, cfg.despike_multiplier)[0] for row in signals])
        stages.append("despike")
    if signals.shape[0] >= 2:
        signals = common_average_reference(signals)
        stages.append("car")
    power = np.stack([highgamma_power(row, rec.sample_rate, cfg) for row in signals])
    stages.append("band_power")
    smoothed = np.stack(
        [hamming_smooth(row, cfg.smooth_kernel_ms, rec.sample_rate) for row in power]
    )
    stages.append("smooth")
    return SignalRecording(
        smoothed.astype(np.float32),
        rec.sample_rate,
        rec.t0,
        provenance=rec.provenance + tuple(stages),
    )
