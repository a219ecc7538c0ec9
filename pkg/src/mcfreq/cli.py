"""Command-line front end.

Subcommands ``analytic``, ``simulate``, ``compare``, ``sampling`` and
``sweep`` write CSV data, SVG plots and a ``manifest.json`` into ``--out``.
Exit codes: 0 success, 1 numerical or validation failure, 2 usage or
config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import analytic as an
from .scenario import (ConfigError, Scenario, load_scenario, scenario_from_table_defaults,
                       scenario_hash, with_param)
from .signals import (ComplexSpectrum, FrequencyGrid, TimeSeries, read_series_csv,
                      read_spectrum_csv, write_series_csv, write_spectrum_csv)
from .simulator import SimulationError, ensemble
from .spectral import (DEFAULT_ETA, SpectralDecayError, compare_spectra, cutoff_frequency,
                       dft_spectrum, sampling_frequency)
from .svg import Curve, line_plot

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class TrendError(RuntimeError):
    """A requested monotonic trend does not hold."""


# ------------------------------------------------------------------ helpers

def default_t_end(s: Scenario) -> float:
    """Record long enough for the pulse to pass and the receptors to relax."""
    return max(0.2, 2 * (s.delay + s.input.width) + 10 / s.ligand.unbinding_rate)


def n_steps(s: Scenario, t_end: float) -> int:
    return int(round(t_end / s.dt))


def bound_series(s: Scenario, t_end: float, mode: str = an.LINEAR,
                 form: str = an.CAUSAL) -> tuple[TimeSeries, TimeSeries]:
    """Sampled received concentration and the ODE bound count it drives."""
    drive = an.received_drive(s, n_steps(s, t_end), form)
    return drive, an.solve_bound_ode(s, drive, mode)


def dft_grid(ts: TimeSeries) -> FrequencyGrid:
    return dft_spectrum(ts).grid


def low_frequency_current(s: Scenario, nb: TimeSeries) -> float:
    """|I_m| at the first non-zero DFT bin of a bound-count series."""
    spec = dft_spectrum(nb)
    f1 = spec.f_step
    grid = FrequencyGrid(f1, f1, 1)
    return float(abs(an.transducer_transfer(s, grid).values[0] * spec.values[1]))


def parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {text!r}") from None


def check_trend(values: list[float], direction: str) -> None:
    d = np.diff(np.asarray(values, float))
    if direction == "auto":
        direction = "increasing" if d.size and d[0] > 0 else "decreasing"
    ok = bool(np.all(d > 0)) if direction == "increasing" else bool(np.all(d < 0))
    if not ok:
        raise TrendError(f"values {values} are not strictly {direction}")


@dataclass
class Context:
    args: argparse.Namespace
    scenario: Scenario
    out: Path
    written: list[str]

    def path(self, name: str) -> Path:
        p = self.out / name
        self.written.append(name)
        return p

    def manifest(self, command: str, **extra) -> None:
        a = self.args
        data = {
            "scenario_hash": scenario_hash(self.scenario),
            "command": command,
            "seed": a.seed,
            "replicates": a.replicates,
            "tool_version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "output_paths": sorted(self.written),
            **extra,
        }
        (self.out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")


def _grid(a: argparse.Namespace) -> FrequencyGrid:
    if not a.fmax > 0 or a.nfreq < 2:
        raise ConfigError("--fmax must be > 0 and --nfreq >= 2")
    return FrequencyGrid.spanning(a.fmax, a.nfreq)


def _mag_plot(path: Path, spec, title: str, ylabel: str) -> None:
    f = spec.frequencies
    line_plot(path, [Curve(f, np.abs(spec.values))], title=title, xlabel="frequency (Hz)",
              ylabel=ylabel, logx=True, logy=True)


# ----------------------------------------------------------------- commands

def cmd_analytic(ctx: Context) -> None:
    s, grid = ctx.scenario, _grid(ctx.args)
    outputs = {
        "phi_in": (an.rect_pulse_spectrum(s.input, grid), "input spectrum", "|Phi_in| (s/m^3)"),
        "phi_r": (an.received_spectrum(s, grid), "received spectrum", "|Phi_r| (s/m^3)"),
        "h_p": (an.propagation_transfer(s, grid), "propagation", "|H_p|"),
        "h_lr": (an.binding_transfer(s, grid), "ligand-receptor", "|H_lr| (m^3)"),
        "h_t": (an.transducer_transfer(s, grid), "transducer", "|H_t| (A)"),
        "h": (an.end_to_end(s, grid), "end to end", "|H| (A m^3)"),
        "i_m": (an.output_current_spectrum(s, grid), "output current", "|I_m| (A s)"),
    }
    for name, (spec, title, ylabel) in outputs.items():
        write_spectrum_csv(ctx.path(f"{name}.csv"), spec)
        _mag_plot(ctx.path(f"{name}.svg"), spec, title, ylabel)
    ctx.manifest("analytic", grid={"f_start": grid.f_start, "f_step": grid.f_step, "n": grid.n})


def cmd_simulate(ctx: Context) -> None:
    a, s = ctx.args, ctx.scenario
    t_end = a.t_end or default_t_end(s)
    res = ensemble(s, a.seed, a.replicates, t_end)
    t = res.nb_mean.times
    for o in res.outputs:
        i = o.manifest["replicate"]
        write_series_csv(ctx.path(f"replicate_{i:03d}.csv"),
                         {"n_bound": o.nb.values, "phi_local": o.phi_local.values}, t)
        ctx.path(f"replicate_{i:03d}.json").write_text(
            json.dumps({**o.manifest, "counters": o.counters}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    write_series_csv(ctx.path("ensemble.csv"), {
        "nb_mean": res.nb_mean.values, "nb_std": res.nb_std.values,
        "phi_mean": res.phi_mean.values, "phi_std": res.phi_std.values}, t)
    drive, ode = bound_series(s, t_end, a.mode, a.form)
    write_series_csv(ctx.path("ode.csv"), {"phi_r": drive.values, "n_bound": ode.values}, t)
    line_plot(ctx.path("n_bound.svg"),
              [Curve(t, ode.values, f"{a.mode} ODE"),
               Curve(t[::10], res.nb_mean.values[::10], "simulation mean", markers=True)],
              title="bound receptors", xlabel="time (s)", ylabel="N_b")
    line_plot(ctx.path("phi_local.svg"),
              [Curve(t, drive.values, "analytic"),
               Curve(t[::10], res.phi_mean.values[::10], "simulation mean", markers=True)],
              title="received concentration", xlabel="time (s)", ylabel="phi (1/m^3)")
    peak = int(np.argmax(res.nb_mean.values))
    ctx.manifest("simulate", t_end=t_end, mode=a.mode, form=a.form,
                 nb_mean_peak=float(res.nb_mean.values[peak]),
                 ode_peak=float(ode.values.max()), peak_time_s=float(t[peak]))


def _load_observed(a: argparse.Namespace, s: Scenario, quantity: str) -> ComplexSpectrum:
    """Spectrum to compare: a spectrum CSV, a simulate output dir, or a fresh ensemble."""
    if a.sim:
        p = Path(a.sim)
        if p.is_file():
            return read_spectrum_csv(p)
        p = p / "ensemble.csv"
        if not p.is_file():
            raise ConfigError(f"no ensemble.csv in {a.sim}")
        t, cols = read_series_csv(p)
        dt = float(t[1] - t[0])
        ts = TimeSeries(float(t[0]), dt, cols["nb_mean" if quantity == "nb" else "phi_mean"])
    else:
        res = ensemble(s, a.seed, a.replicates, a.t_end or default_t_end(s))
        ts = res.nb_mean if quantity == "nb" else res.phi_mean
    return dft_spectrum(ts)


def cmd_compare(ctx: Context) -> None:
    a, s = ctx.args, ctx.scenario
    observed = _load_observed(a, s, a.quantity)
    grid = observed.grid
    lo, hi = a.band
    if not 0 <= lo < hi or hi > grid.frequencies[-1]:
        raise ValueError(f"band ({lo}, {hi}] outside grid [0, {grid.frequencies[-1]:.6g}] Hz")
    ref = an.bound_spectrum(s, grid) if a.quantity == "nb" else an.received_spectrum(s, grid)
    report = compare_spectra(observed, ref, (lo, hi), a.floor)
    ctx.path("comparison.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    f = grid.frequencies
    band = (f > 0) & (f <= max(hi, f[1]))
    line_plot(ctx.path("overlay.svg"),
              [Curve(f[band], np.abs(ref.values[band]), "analytic"),
               Curve(f[band], np.abs(observed.values[band]), "simulation", markers=True)],
              title=f"{a.quantity} spectrum", xlabel="frequency (Hz)", ylabel="magnitude",
              logx=True, logy=True)
    ctx.manifest("compare", quantity=a.quantity, band=[lo, hi], floor=a.floor,
                 rms_rel_error=report.rms_rel_error, max_rel_error=report.max_rel_error)


def sampling_point(s: Scenario, grid: FrequencyGrid, eta: float) -> tuple[float, float]:
    f_c = cutoff_frequency(an.output_current_spectrum(s, grid), eta)
    return f_c, sampling_frequency(f_c)


def _require_param(a: argparse.Namespace) -> tuple[str, list[float]]:
    if not a.param or not a.values:
        raise ConfigError("--param and --values are required")
    return a.param, parse_values(a.values)


def cmd_sampling(ctx: Context) -> None:
    a, s = ctx.args, ctx.scenario
    grid = _grid(a)
    param, values = _require_param(a)
    rows, errors = [], {}
    for v in values:
        try:
            rows.append((v, *sampling_point(with_param(s, param, v), grid, a.eta)))
        except SpectralDecayError as exc:
            errors[repr(v)] = str(exc)
            rows.append((v, math.nan, math.nan))
    lines = ["param_value,f_c_hz,f_s_hz"] + [",".join(repr(float(x)) for x in r) for r in rows]
    ctx.path("sampling.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    xs = np.array([r[0] for r in rows])
    line_plot(ctx.path("sampling.svg"), [Curve(xs, np.array([r[2] for r in rows]), "f_s", markers=True),
                                         Curve(xs, np.array([r[2] for r in rows]))],
              title=f"sampling frequency vs {param}", xlabel=param, ylabel="f_s (Hz)")
    ctx.manifest("sampling", param=param, values=values, eta=a.eta, errors=errors)
    if a.assert_trend:
        if errors:
            raise TrendError(f"cannot assert trend with failed points: {sorted(errors)}")
        check_trend([r[2] for r in rows], a.assert_trend)


def sweep_metrics(s: Scenario, t_end: float, grid: FrequencyGrid, eta: float,
                  mode: str = an.LINEAR, form: str = an.CAUSAL) -> dict[str, float]:
    """Analytic summary numbers of one scenario."""
    drive, nb = bound_series(s, t_end, mode, form)
    out = {"peak_phi_r": float(drive.values.max()), "peak_n_bound": float(nb.values.max()),
           "im_low": low_frequency_current(s, nb)}
    try:
        out["f_c_hz"], out["f_s_hz"] = sampling_point(s, grid, eta)
    except SpectralDecayError:
        out["f_c_hz"] = out["f_s_hz"] = math.nan
    return out


def ensemble_peaks(s: Scenario, seed: int, replicates: int, t_end: float) -> dict[str, float]:
    """Ensemble peaks with the replicate spread at the peak sample."""
    res = ensemble(s, seed, replicates, t_end)
    i = int(np.argmax(res.nb_mean.values))
    j = int(np.argmax(res.phi_mean.values))
    im = [low_frequency_current(s, o.nb) for o in res.outputs]
    return {"sim_peak_n_bound": float(res.nb_mean.values[i]), "sim_peak_n_bound_std": float(res.nb_std.values[i]),
            "sim_peak_phi": float(res.phi_mean.values[j]), "sim_peak_phi_std": float(res.phi_std.values[j]),
            "sim_im_low": float(np.mean(im)), "sim_im_low_std": float(np.std(im))}


def cmd_sweep(ctx: Context) -> None:
    a, s = ctx.args, ctx.scenario
    grid = _grid(a)
    param, values = _require_param(a)
    rows, curves_nb, curves_phi, curves_im = [], [], [], []
    for i, v in enumerate(values):
        sv = with_param(s, param, v)
        t_end = a.t_end or default_t_end(sv)
        row = {"param_value": v, **sweep_metrics(sv, t_end, grid, a.eta, a.mode, a.form)}
        if a.replicates > 0 and a.simulate:
            row.update(ensemble_peaks(sv, a.seed, a.replicates, t_end))
        rows.append(row)
        drive, nb = bound_series(sv, t_end, a.mode, a.form)
        label = f"{param}={v:g}"
        curves_phi.append(Curve(drive.times, drive.values, label))
        curves_nb.append(Curve(nb.times, nb.values, label))
        im = an.output_current_spectrum(sv, grid)
        curves_im.append(Curve(im.frequencies, np.abs(im.values), label))
    keys = list(rows[0])
    lines = [",".join(keys)] + [",".join(repr(float(r[k])) for k in keys) for r in rows]
    ctx.path("sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    line_plot(ctx.path("phi_r.svg"), curves_phi, title="received concentration",
              xlabel="time (s)", ylabel="phi_r (1/m^3)")
    line_plot(ctx.path("n_bound.svg"), curves_nb, title="bound receptors",
              xlabel="time (s)", ylabel="N_b")
    line_plot(ctx.path("i_m.svg"), curves_im, title="output current spectrum",
              xlabel="frequency (Hz)", ylabel="|I_m| (A s)", logx=True, logy=True)
    ctx.manifest("sweep", param=param, values=values, mode=a.mode, form=a.form)
    if a.assert_trend:
        key = a.trend_key or "peak_n_bound"
        if key not in keys:
            raise ConfigError(f"--trend-key {key!r} is not a sweep output ({', '.join(keys)})")
        check_trend([r[key] for r in rows], a.assert_trend)


COMMANDS = {"analytic": cmd_analytic, "simulate": cmd_simulate, "compare": cmd_compare,
            "sampling": cmd_sampling, "sweep": cmd_sweep}


# ------------------------------------------------------------------ parsing

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="scenario JSON (defaults to the built-in scenario)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, metavar="U64", help="master seed")
    p.add_argument("--fmax", type=float, metavar="HZ", help="frequency grid end")
    p.add_argument("--nfreq", type=int, metavar="N", help="frequency grid points")
    p.add_argument("--eta", type=float, metavar="F", help="energy fraction for the cutoff")
    p.add_argument("--replicates", type=int, metavar="N", help="simulation replicates")
    p.add_argument("--t-end", type=float, metavar="S", help="simulated record length")
    p.add_argument("--mode", choices=[an.LINEAR, an.NONLINEAR], help="binding ODE")
    p.add_argument("--form", choices=[an.CAUSAL, an.PAPER], help="received pulse form")
    p.add_argument("--assert-trend", nargs="?", const="auto",
                   choices=["auto", "increasing", "decreasing"],
                   help="fail unless the sweep output is strictly monotone")


DEFAULTS = dict(config=None, out="mcfreq-out", seed=0, fmax=20e3, nfreq=4096, eta=DEFAULT_ETA,
                replicates=1, t_end=None, mode=an.LINEAR, form=an.CAUSAL, assert_trend=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcfreq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mcfreq {__version__}")
    _common(parser)
    parser.set_defaults(**DEFAULTS)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}
    for name in COMMANDS:
        # flags may also follow the subcommand; unset ones keep the top-level value
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        _common(sp)
        subs[name] = sp
    subs["compare"].add_argument("--sim", metavar="PATH",
                                 default=None, help="simulate output dir or spectrum CSV (default: run an ensemble)")
    subs["compare"].add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"), default=[0.0, 2000.0])
    subs["compare"].add_argument("--floor", type=float, default=1e-2)
    subs["compare"].add_argument("--quantity", choices=["nb", "phi"], default="nb")
    for name in ("sampling", "sweep"):
        subs[name].add_argument("--param", metavar="PATH", default=None, help="dotted scenario key, e.g. input.width")
        subs[name].add_argument("--values", metavar="V1,V2,...", default=None, help="comma-separated values")
    subs["sweep"].add_argument("--simulate", action="store_true", default=False, help="add ensemble peaks per value")
    subs["sweep"].add_argument("--trend-key", metavar="COLUMN", default=None,
                               help="sweep column checked by --assert-trend (default peak_n_bound)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        s = load_scenario(args.config) if args.config else scenario_from_table_defaults()
        if args.replicates < 0:
            raise ConfigError("--replicates must be >= 0")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](Context(args, s, out, []))
    except ConfigError as exc:
        print(f"mcfreq: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, SpectralDecayError, TrendError, ValueError) as exc:
        print(f"mcfreq: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
