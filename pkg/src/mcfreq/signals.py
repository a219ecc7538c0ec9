"""Uniformly sampled time series and spectra, plus their CSV forms.

Fourier convention throughout: ``X(f) = integral x(t) exp(-j 2 pi f t) dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        values = _frozen(self.values, float)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("time series values must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @classmethod
    def sample(cls, func, t0: float, dt: float, n: int) -> TimeSeries:
        return cls(t0, dt, func(t0 + dt * np.arange(n)))


@dataclass(frozen=True)
class FrequencyGrid:
    f_start: float
    f_step: float
    n: int

    def __post_init__(self) -> None:
        if not self.f_step > 0:
            raise ValueError(f"f_step must be > 0, got {self.f_step!r}")
        if self.n < 1:
            raise ValueError("grid needs at least one point")

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_start + self.f_step * np.arange(self.n)

    @classmethod
    def spanning(cls, f_max: float = 20e3, n: int = 4096, dc: bool = False) -> FrequencyGrid:
        """``n`` points ending at ``f_max``; with ``dc`` a 0 Hz point is prepended."""
        step = f_max / n
        return cls(0.0, step, n + 1) if dc else cls(step, step, n)


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    f_start: float
    f_step: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.f_step > 0:
            raise ValueError(f"f_step must be > 0, got {self.f_step!r}")
        object.__setattr__(self, "values", _frozen(self.values, complex))

    def __len__(self) -> int:
        return self.values.size

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.f_start, self.f_step, self.values.size)

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_start + self.f_step * np.arange(self.values.size)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @classmethod
    def on(cls, grid: FrequencyGrid, values) -> ComplexSpectrum:
        return cls(grid.f_start, grid.f_step, values)

    def __mul__(self, other: ComplexSpectrum | complex | float) -> ComplexSpectrum:
        if isinstance(other, ComplexSpectrum):
            if not same_grid(self, other):
                raise ValueError("spectra are on different grids")
            other = other.values
        return ComplexSpectrum(self.f_start, self.f_step, self.values * other)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class TransferEvaluation:
    """A spectrum plus a mask that is True where ``f >= f_valid``.

    Bins flagged by the mask lie outside the convergent-series range of the
    propagation approximation.
    """

    spectrum: ComplexSpectrum
    validity_mask: np.ndarray

    def __post_init__(self) -> None:
        mask = _frozen(self.validity_mask, bool)
        if mask.shape != self.spectrum.values.shape:
            raise ValueError("mask length must equal spectrum length")
        object.__setattr__(self, "validity_mask", mask)

    @property
    def values(self) -> np.ndarray:
        return self.spectrum.values

    @property
    def frequencies(self) -> np.ndarray:
        return self.spectrum.frequencies


def same_grid(a: ComplexSpectrum, b: ComplexSpectrum, rtol: float = 1e-12) -> bool:
    return (len(a) == len(b)
            and math.isclose(a.f_step, b.f_step, rel_tol=rtol)
            and math.isclose(a.f_start, b.f_start, rel_tol=rtol, abs_tol=rtol * a.f_step))


# ---------------------------------------------------------------------- CSV

def _fmt(v: float) -> str:
    return repr(float(v))


def write_spectrum_csv(path: str | Path, spec: ComplexSpectrum | TransferEvaluation) -> None:
    if isinstance(spec, TransferEvaluation):
        valid = ~spec.validity_mask
        spec = spec.spectrum
    else:
        valid = np.ones(len(spec), dtype=bool)
    lines = ["f_hz,re,im,abs,arg,valid"]
    for f, z, ok in zip(spec.frequencies, spec.values, valid):
        lines.append(",".join([_fmt(f), _fmt(z.real), _fmt(z.imag), _fmt(abs(z)),
                               _fmt(np.angle(z)), "1" if ok else "0"]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_spectrum_csv(path: str | Path) -> ComplexSpectrum:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    f = data[:, 0]
    step = f[1] - f[0] if f.size > 1 else 1.0
    return ComplexSpectrum(f[0], step, data[:, 1] + 1j * data[:, 2])


def write_series_csv(path: str | Path, columns: dict[str, np.ndarray], t: np.ndarray) -> None:
    """Write ``t_s`` followed by the named columns."""
    names = list(columns)
    lines = [",".join(["t_s", *names])]
    cols = [np.asarray(columns[n], dtype=float) for n in names]
    for i, ti in enumerate(t):
        lines.append(",".join([_fmt(ti), *(_fmt(c[i]) for c in cols)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_timeseries_csv(path: str | Path, ts: TimeSeries) -> None:
    write_series_csv(path, {"value": ts.values}, ts.times)


def read_series_csv(path: str | Path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], {name: data[:, i] for i, name in enumerate(header) if i > 0}
