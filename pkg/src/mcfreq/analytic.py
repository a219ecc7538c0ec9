"""Closed-form channel model: propagation, ligand-receptor binding, bioFET.

The end-to-end transfer function factors into three stages,

    H(f) = H_p(f) * H_lr(f) * H_t(f),

propagation (convection-diffusion in the channel), ligand-receptor binding
(one-pole low-pass) and transduction in the graphene transistor. CPE-based
quantities diverge at 0 Hz, so functions touching the transistor reject
non-positive frequencies.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import erf

from .scenario import (
    AVOGADRO,
    BOLTZMANN,
    ELEMENTARY_CHARGE,
    BioFETParams,
    CPEParams,
    ElectrolyteMedium,
    LigandSpecies,
    PulseInput,
    ReceptorPopulation,
    Scenario,
)
from .signals import ComplexSpectrum, FrequencyGrid, TimeSeries, TransferEvaluation

LINEAR = "linear"
NONLINEAR = "nonlinear"
CAUSAL = "causal"
PAPER = "paper"


def _positive_times(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be > 0")
    return t


def _positive_freqs(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be > 0 (CPE quantities diverge at DC)")
    return f


def _grid_freqs(grid: FrequencyGrid, positive: bool = False) -> np.ndarray:
    f = grid.frequencies
    if positive:
        return _positive_freqs(f)
    if np.any(f < 0):
        raise ValueError("grid frequencies must be >= 0")
    return f


def _mask(s: Scenario, f: np.ndarray) -> np.ndarray:
    return f >= s.f_valid


# -------------------------------------------------------------- propagation

def propagation_impulse_response(s: Scenario, x, t):
    """Green's function of 1D convection-diffusion from an impulse at x=0, t=0 (1/m)."""
    t = _positive_times(t)
    d = s.ligand.diffusion_coefficient
    if d <= 0:
        raise ValueError("impulse response is a Dirac delta when D = 0")
    u = s.flow.velocity
    x = np.asarray(x, dtype=float)
    return np.exp(-(x - u * t) ** 2 / (4 * d * t)) / np.sqrt(4 * np.pi * d * t)


def received_concentration(s: Scenario, t, form: str = CAUSAL, position: float | None = None):
    """Concentration (1/m^3) at the receiver for a rectangular input pulse.

    ``causal`` places the release at t in [0, T_p]; ``paper`` evaluates the
    erf expression as usually printed, which corresponds to [-T_p, 0].
    """
    t = _positive_times(t)
    c_m, t_p = s.input.amplitude, s.input.width
    u, d = s.flow.velocity, s.ligand.diffusion_coefficient
    l = s.geometry.receiver_position if position is None else position
    if form == CAUSAL:
        lead, trail = t * u - l, (t - t_p) * u - l
    elif form == PAPER:
        lead, trail = t * u - l + t_p * u, t * u - l
    else:
        raise ValueError(f"unknown form {form!r}")
    if d == 0:
        # erf -> sign; the front arrives at lead = 0, the tail leaves at trail = 0
        return c_m * ((lead >= 0) & (trail <= 0)).astype(float)
    w = 2 * np.sqrt(d * t)
    return np.clip(0.5 * c_m * (erf(lead / w) - erf(trail / w)), 0.0, c_m)


def propagation_transfer(s: Scenario, grid: FrequencyGrid) -> TransferEvaluation:
    f = _grid_freqs(grid)
    d, u, x_r = s.ligand.diffusion_coefficient, s.flow.velocity, s.geometry.receiver_position
    w = 2 * np.pi * f
    h = np.exp(-(w**2 * d / u**3 + 1j * w / u) * x_r)
    return TransferEvaluation(ComplexSpectrum.on(grid, h), _mask(s, f))


def rect_pulse_spectrum(pulse: PulseInput, grid: FrequencyGrid) -> ComplexSpectrum:
    """Spectrum of a pulse of height C_m occupying [0, T_p]."""
    f = _grid_freqs(grid)
    c_m, t_p = pulse.amplitude, pulse.width
    return ComplexSpectrum.on(grid, c_m * t_p * np.sinc(f * t_p) * np.exp(-1j * np.pi * f * t_p))


def received_spectrum(s: Scenario, grid: FrequencyGrid) -> TransferEvaluation:
    hp = propagation_transfer(s, grid)
    phi_in = rect_pulse_spectrum(s.input, grid)
    return TransferEvaluation(hp.spectrum * phi_in, hp.validity_mask)


# ------------------------------------------------------ ligand-receptor stage

def _interpolator(drive: TimeSeries, interpolation: str):
    t, v = drive.times, drive.values
    if interpolation == "linear":
        return lambda tt: np.interp(tt, t, v)
    if interpolation == "cubic":
        if v.size < 4:
            return lambda tt: np.interp(tt, t, v)
        return CubicSpline(t, v)
    raise ValueError(f"unknown interpolation {interpolation!r}")


def solve_bound_ode(s: Scenario, drive: TimeSeries, mode: str = LINEAR,
                    interpolation: str = "linear", substeps: int = 1) -> TimeSeries:
    """Integrate the bound-receptor count N_b(t) driven by concentration ``drive``.

    Classical RK4 with ``substeps`` steps per drive interval, raised when
    needed so that the stiffness times the step is at most 1; N_b is zero at
    the first drive sample. Between samples the drive is interpolated
    linearly by default, or by a cubic spline on request.

    linear:     dN_b/dt = k+ N_r phi - k- N_b
    nonlinear:  dN_b/dt = k+ (N_r - N_b) phi - k- N_b
    """
    if np.any(drive.values < 0):
        raise ValueError("drive concentration must be non-negative")
    if mode not in (LINEAR, NONLINEAR):
        raise ValueError(f"unknown mode {mode!r}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    kp, km = s.ligand.binding_rate, s.ligand.unbinding_rate
    n_r = float(s.receptors.count)
    n = len(drive)
    # keep stiffness * h <= 1 so steps relax monotonically towards the fixed point
    stiffness = km + (kp * float(drive.values.max()) if mode == NONLINEAR else 0.0)
    substeps = max(substeps, math.ceil(stiffness * drive.dt))
    h = drive.dt / substeps

    # drive at every RK4 stage time: 2*substeps half-steps per interval
    stages = 2 * substeps
    frac = np.arange(stages) / stages
    tt = drive.t0 + drive.dt * (np.arange(n - 1)[:, None] + frac[None, :])
    phi = np.empty((n - 1, stages + 1))
    if n > 1:
        phi[:, :stages] = _interpolator(drive, interpolation)(tt)
        phi[:, stages] = drive.values[1:]
    if mode == NONLINEAR:
        np.maximum(phi, 0.0, out=phi)
    phi = phi.tolist()

    out = np.zeros(n)
    y = 0.0
    if mode == LINEAR:
        a = kp * n_r
        for i in range(n - 1):
            row = phi[i]
            for j in range(substeps):
                p0, p1, p2 = row[2 * j], row[2 * j + 1], row[2 * j + 2]
                k1 = a * p0 - km * y
                k2 = a * p1 - km * (y + 0.5 * h * k1)
                k3 = a * p1 - km * (y + 0.5 * h * k2)
                k4 = a * p2 - km * (y + h * k3)
                y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            out[i + 1] = y
    else:
        for i in range(n - 1):
            row = phi[i]
            for j in range(substeps):
                p0, p1, p2 = row[2 * j], row[2 * j + 1], row[2 * j + 2]
                k1 = kp * (n_r - y) * p0 - km * y
                y2 = y + 0.5 * h * k1
                k2 = kp * (n_r - y2) * p1 - km * y2
                y3 = y + 0.5 * h * k2
                k3 = kp * (n_r - y3) * p1 - km * y3
                y4 = y + h * k3
                k4 = kp * (n_r - y4) * p2 - km * y4
                y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            out[i + 1] = y
    return TimeSeries(drive.t0, drive.dt, out)


def received_drive(s: Scenario, n: int, form: str = CAUSAL) -> TimeSeries:
    """Received concentration sampled at t = dt, 2 dt, ..., n dt."""
    dt = s.dt
    return TimeSeries(dt, dt, received_concentration(s, dt * np.arange(1, n + 1), form))


def binding_transfer(s: Scenario, grid: FrequencyGrid) -> ComplexSpectrum:
    f = _grid_freqs(grid)
    kp, km = s.ligand.binding_rate, s.ligand.unbinding_rate
    return ComplexSpectrum.on(grid, kp * s.receptors.count / (km + 2j * np.pi * f))


def binding_corner_frequency(s: Scenario) -> float:
    return s.ligand.unbinding_rate / (2 * math.pi)


def bound_spectrum(s: Scenario, grid: FrequencyGrid) -> TransferEvaluation:
    phi_r = received_spectrum(s, grid)
    return TransferEvaluation(binding_transfer(s, grid) * phi_r.spectrum, phi_r.validity_mask)


# ------------------------------------------------------------------- bioFET

def cpe_impedance(p: CPEParams, f):
    f = _positive_freqs(f)
    return 1.0 / (p.q0 * (2j * np.pi * f) ** p.alpha)


def cpe_capacitance(p: CPEParams, f):
    """Effective capacitance Q0 / (2 pi f)^(1-alpha) * exp(j pi/2 (alpha-1))."""
    if p.alpha == 1:
        f = np.asarray(f, dtype=float)
        return np.full(f.shape, complex(p.q0)) if f.ndim else complex(p.q0)
    f = _positive_freqs(f)
    return p.q0 / (2 * np.pi * f) ** (1 - p.alpha) * np.exp(0.5j * np.pi * (p.alpha - 1))


def debye_length(m: ElectrolyteMedium) -> float:
    num = m.permittivity * BOLTZMANN * m.temperature
    den = 2 * AVOGADRO * ELEMENTARY_CHARGE**2 * m.ionic_concentration
    return math.sqrt(num / den)


def effective_charge(lig: LigandSpecies, rec: ReceptorPopulation,
                     m: ElectrolyteMedium) -> tuple[float, float]:
    """Screened charge per ligand electron and per bound ligand (C)."""
    q_eff = ELEMENTARY_CHARGE * math.exp(-rec.receptor_length / debye_length(m))
    return q_eff, q_eff * lig.electrons_per_ligand


def intrinsic_transconductance(b: BioFETParams, f):
    """Field-effect term, using the per-area graphene-electrolyte capacitance."""
    c_ge = cpe_capacitance(b.cpe_ge, _positive_freqs(f))
    return b.sign * b.drain_source_voltage * b.graphene_width / b.graphene_length * b.mobility * c_ge


def effective_transconductance(b: BioFETParams, f):
    """Direct capacitive gate current through the interface and parasitic CPEs."""
    f = _positive_freqs(f)
    y_ge = 1.0 / cpe_impedance(b.cpe_ge.absolute(b.area), f)
    y_par = 1.0 / cpe_impedance(b.cpe_par.absolute(b.area), f)
    return b.capacitive_fraction * (y_ge + y_par)


def transconductance(b: BioFETParams, f):
    return intrinsic_transconductance(b, f) + effective_transconductance(b, f)


def regime_crossover(b: BioFETParams, f_lo: float = 1e-2, f_hi: float = 1e9) -> float:
    """Frequency where the intrinsic and capacitive terms have equal magnitude."""
    from scipy.optimize import brentq

    def gap(log_f: float) -> float:
        f = 10.0**log_f
        return (math.log(abs(intrinsic_transconductance(b, f)))
                - math.log(abs(effective_transconductance(b, f))))

    return 10.0 ** brentq(gap, math.log10(f_lo), math.log10(f_hi), xtol=1e-12)


def equivalent_capacitance(b: BioFETParams, f):
    """(C_le + C_ge + C_par) in series with (C_ge + C_par), absolute capacitances."""
    f = _positive_freqs(f)
    c_ge = cpe_capacitance(b.cpe_ge.absolute(b.area), f)
    c_par = cpe_capacitance(b.cpe_par.absolute(b.area), f)
    c_le = cpe_capacitance(b.cpe_le.absolute(b.area), f)
    return 1.0 / (1.0 / (c_le + c_ge + c_par) + 1.0 / (c_ge + c_par))


def interface_potential(s: Scenario, f):
    """Interface potential produced by one bound ligand (V)."""
    _, q_m = effective_charge(s.ligand, s.receptors, s.medium)
    return q_m / equivalent_capacitance(s.biofet, f)


def transducer_transfer(s: Scenario, grid: FrequencyGrid) -> ComplexSpectrum:
    f = _grid_freqs(grid, positive=True)
    return ComplexSpectrum.on(grid, interface_potential(s, f) * transconductance(s.biofet, f))


# --------------------------------------------------------------- end to end

def end_to_end(s: Scenario, grid: FrequencyGrid) -> TransferEvaluation:
    hp = propagation_transfer(s, grid)
    h = hp.spectrum * binding_transfer(s, grid) * transducer_transfer(s, grid)
    return TransferEvaluation(h, hp.validity_mask)


def output_current_spectrum(s: Scenario, grid: FrequencyGrid) -> TransferEvaluation:
    h = end_to_end(s, grid)
    return TransferEvaluation(h.spectrum * rect_pulse_spectrum(s.input, grid), h.validity_mask)
