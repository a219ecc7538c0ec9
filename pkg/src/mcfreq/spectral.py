"""Fourier analysis of sampled signals, energy cutoff and sampling rate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import get_window

from .signals import ComplexSpectrum, TimeSeries, TransferEvaluation, same_grid

DEFAULT_ETA = 0.99
DECAY_RATIO = 1e-6


class SpectralDecayError(ValueError):
    """Spectrum has not decayed by the end of the grid."""


def dft_spectrum(ts: TimeSeries, onesided: bool = True, window: str | None = None) -> ComplexSpectrum:
    """Scaled DFT approximating the continuous Fourier transform.

    ``X(f_k) = dt * sum_n x[n] exp(-j 2 pi f_k (t0 + n dt))`` with
    ``f_k = k / (N dt)``. The ``t0`` phase factor is 1 for series that start
    at zero. ``onesided`` keeps bins 0..N//2; otherwise all N bins are
    returned (bins above N/2 alias the negative frequencies).
    """
    n = len(ts)
    if n < 2:
        raise ValueError("need at least two samples")
    x = ts.values
    if window is not None:
        x = x * get_window(window, n, fftbins=False)
    x_f = np.fft.rfft(x) if onesided else np.fft.fft(x)
    f_step = 1.0 / (n * ts.dt)
    f = f_step * np.arange(x_f.size)
    values = ts.dt * x_f
    if ts.t0 != 0:
        values = values * np.exp(-2j * np.pi * f * ts.t0)
    return ComplexSpectrum(0.0, f_step, values)


def _as_spectrum(spec: ComplexSpectrum | TransferEvaluation) -> ComplexSpectrum:
    return spec.spectrum if isinstance(spec, TransferEvaluation) else spec


def spectral_energy(spec: ComplexSpectrum | TransferEvaluation) -> float:
    """Trapezoid integral of |X|^2 over the grid."""
    spec = _as_spectrum(spec)
    return float(trapezoid(np.abs(spec.values) ** 2, dx=spec.f_step))


def cutoff_frequency(spec: ComplexSpectrum | TransferEvaluation, eta: float = DEFAULT_ETA) -> float:
    """Lowest frequency below which a fraction ``eta`` of the energy lies.

    Energies integrate |X|^2 by the trapezoid rule from the first grid point
    to the last; the crossing is interpolated linearly in cumulative energy.
    """
    if not 0 < eta < 1:
        raise ValueError(f"eta must be in (0, 1), got {eta!r}")
    spec = _as_spectrum(spec)
    mag = np.abs(spec.values)
    if mag.size < 2 or mag.max() == 0:
        raise ValueError("spectrum is empty")
    if mag[-1] >= DECAY_RATIO * mag.max():
        raise SpectralDecayError(
            f"spectrum at grid end is {mag[-1] / mag.max():.2e} of peak; extend f_max")
    p = mag**2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * spec.f_step)])
    target = eta * cum[-1]
    k = int(np.searchsorted(cum, target, side="left"))
    f = spec.frequencies
    if k == 0:
        return float(f[0])
    lo, hi = cum[k - 1], cum[k]
    frac = (target - lo) / (hi - lo) if hi > lo else 1.0
    return float(f[k - 1] + frac * spec.f_step)


def sampling_frequency(f_c: float) -> float:
    """Minimum alias-free sampling rate, twice the cutoff."""
    if not f_c > 0:
        raise ValueError("cutoff must be > 0")
    return 2.0 * f_c


@dataclass(frozen=True)
class SpectrumComparison:
    band: tuple[float, float]
    max_rel_error: float
    rms_rel_error: float
    reference_floor: float
    n_bins: int
    n_excluded: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band"] = list(self.band)
        return d


def compare_spectra(a: ComplexSpectrum | TransferEvaluation, b: ComplexSpectrum | TransferEvaluation,
                    band: tuple[float, float], floor: float = 1e-2) -> SpectrumComparison:
    """Relative magnitude error of ``a`` against reference ``b``.

    Bins with ``lo < f <= hi`` are used, excluding those where |b| is below
    ``floor * max|b|`` (max taken over the band).
    """
    a, b = _as_spectrum(a), _as_spectrum(b)
    if not same_grid(a, b):
        raise ValueError("spectra must share a frequency grid")
    lo, hi = band
    f = b.frequencies
    in_band = (f > lo) & (f <= hi)
    if not in_band.any():
        raise ValueError(f"band {band} contains no grid points")
    ref = np.abs(b.values[in_band])
    got = np.abs(a.values[in_band])
    keep = ref >= floor * ref.max()
    rel = np.abs(got[keep] - ref[keep]) / ref[keep]
    return SpectrumComparison(
        band=(float(lo), float(hi)),
        max_rel_error=float(rel.max()),
        rms_rel_error=float(np.sqrt(np.mean(rel**2))),
        reference_floor=float(floor),
        n_bins=int(keep.sum()),
        n_excluded=int((~keep).sum()),
    )
