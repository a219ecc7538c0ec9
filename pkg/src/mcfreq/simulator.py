"""Particle-based stochastic simulation of ligand transport and surface binding.

Free ligands are point particles in the rectangular channel, advected by the
uniform flow and diffused by Euler-Maruyama steps. Side, floor and ceiling
walls reflect, the inlet reflects, and the outlet absorbs. Receptors bind
from a well-mixed sensing slab above the receptor patch: each unbound
receptor binds with probability ``1 - exp(-k+ phi_local dt)`` where
``phi_local`` is the slab particle count over the slab volume, and each
binding consumes one slab particle. Bound receptors release with probability
``1 - exp(-k- dt)``.

Replicates are independent: replicate ``i`` of an ensemble draws from its own
PCG64 stream seeded with :func:`replicate_seed`.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .scenario import Scenario, scenario_hash, validate_scenario
from .signals import TimeSeries

MASK64 = (1 << 64) - 1
THREADS_ENV = "MCFREQ_THREADS"

SLAB_MIN = 0.1e-6
SLAB_MAX = 1.0e-6


class SimulationError(ValueError):
    """Scenario or time step unsuitable for the particle simulation."""


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replicate_seed(master_seed: int, index: int) -> int:
    """64-bit seed of replicate ``index``: two rounds of splitmix64.

    ``splitmix64(splitmix64(master_seed) ^ index)``, all arithmetic mod 2^64.
    """
    return splitmix64(splitmix64(master_seed & MASK64) ^ (index & MASK64))


@dataclass(frozen=True)
class SimOptions:
    slab_length: float | None = None  # overrides the scenario setting
    closed_box: bool = False  # no flow, both channel ends reflect, no injection
    fill_concentration: float = 0.0  # initial uniform concentration (1/m^3)


def slab_length(s: Scenario, options: SimOptions | None = None) -> float:
    if options is not None and options.slab_length is not None:
        return options.slab_length
    if s.sim.slab_length is not None:
        return s.sim.slab_length
    return min(max(2 * s.flow.velocity * s.dt, SLAB_MIN), SLAB_MAX)


def receptor_positions(s: Scenario) -> np.ndarray:
    """Receptor (x, y) sites on a regular lattice filling the patch.

    The patch is centred across the channel width.
    """
    rec = s.receptors
    ex, ey = rec.patch_extent
    n = rec.count
    ny = max(1, round(math.sqrt(n * ey / ex)))
    nx = math.ceil(n / ny)
    ix, iy = np.divmod(np.arange(n), ny)
    x = rec.patch_origin + (ix + 0.5) * ex / nx
    y = 0.5 * (s.geometry.width - ey) + (iy + 0.5) * ey / ny
    return np.column_stack([x, y])


@dataclass
class _Setup:
    dt: float
    sigma: float
    drift: float
    box: np.ndarray  # (length, width, height)
    closed: bool
    slab: tuple[float, float]
    slab_volume: float
    receptor_xy: np.ndarray
    p_unbind: float
    k_bind: float
    inflow_rate: float  # particles per second through the inlet during the pulse
    pulse_width: float


@dataclass
class SimState:
    pos: np.ndarray  # (n, 3) free particle positions
    ids: np.ndarray  # (n,) particle identities
    occupied: np.ndarray  # (N_r,) receptor occupancy
    bound_id: np.ndarray  # (N_r,) identity of the bound particle, -1 if free
    rng: np.random.Generator
    setup: _Setup
    t: float = 0.0
    steps: int = 0
    injected: int = 0
    exited: int = 0
    bind_events: int = 0
    unbind_events: int = 0
    capped_bindings: int = 0
    residual: float = 0.0
    phi_local: float = 0.0
    next_id: int = 0

    @property
    def n_free(self) -> int:
        return self.ids.size

    @property
    def n_bound(self) -> int:
        return int(np.count_nonzero(self.occupied))

    def conserved(self) -> bool:
        return self.injected == self.n_free + self.n_bound + self.exited


def _append(state: SimState, pos: np.ndarray, ids: np.ndarray) -> None:
    state.pos = np.concatenate([state.pos, pos]) if state.pos.size else pos
    state.ids = np.concatenate([state.ids, ids]) if state.ids.size else ids


def check_timestep(s: Scenario, options: SimOptions | None = None) -> None:
    dt = s.dt
    if not s.ligand.unbinding_rate * dt < 0.1:
        raise SimulationError(f"k- dt = {s.ligand.unbinding_rate * dt:.3g} must be < 0.1")
    closed = options is not None and options.closed_box
    ls = slab_length(s, options)
    if not closed and not s.flow.velocity * dt < ls:
        raise SimulationError(f"u dt = {s.flow.velocity * dt:.3g} m must be < slab length {ls:.3g} m")


def init_state(s: Scenario, seed: int, options: SimOptions | None = None) -> SimState:
    options = options or SimOptions()
    g = s.geometry
    ls = slab_length(s, options)
    x_r = g.receiver_position
    d = s.ligand.diffusion_coefficient
    setup = _Setup(
        dt=s.dt,
        sigma=math.sqrt(2 * d * s.dt),
        drift=0.0 if options.closed_box else s.flow.velocity * s.dt,
        box=np.array([g.length, g.width, g.height]),
        closed=options.closed_box,
        slab=(x_r - ls / 2, x_r + ls / 2),
        slab_volume=ls * g.width * g.height,
        receptor_xy=receptor_positions(s),
        p_unbind=-math.expm1(-s.ligand.unbinding_rate * s.dt),
        k_bind=s.ligand.binding_rate,
        inflow_rate=s.input.amplitude * g.width * g.height * s.flow.velocity,
        pulse_width=0.0 if options.closed_box else s.input.width,
    )
    n_r = s.receptors.count
    state = SimState(
        pos=np.empty((0, 3)),
        ids=np.empty(0, dtype=np.int64),
        occupied=np.zeros(n_r, dtype=bool),
        bound_id=np.full(n_r, -1, dtype=np.int64),
        rng=np.random.default_rng(seed),
        setup=setup,
    )
    if options.fill_concentration > 0:
        n = int(round(options.fill_concentration * g.length * g.width * g.height))
        pos = state.rng.random((n, 3)) * setup.box
        _append(state, pos, np.arange(n, dtype=np.int64))
        state.injected = state.next_id = n
    return state


def inject_pulse(state: SimState, s: Scenario) -> SimState:
    """Insert the particles entering through the inlet during (t, t + dt].

    Entry times are uniform over the part of the interval inside the pulse;
    a particle entering at time e sits at x = u (t + dt - e). The fractional
    expected count is carried between steps.
    """
    st = state.setup
    t, dt = state.t, st.dt
    overlap = min(t + dt, st.pulse_width) - t
    if overlap <= 0:
        return state
    state.residual += st.inflow_rate * overlap
    n = int(math.floor(state.residual + 1e-9))
    state.residual -= n
    if n == 0:
        return state
    rng = state.rng
    entry = t + dt - overlap + overlap * rng.random(n)
    pos = np.empty((n, 3))
    pos[:, 0] = s.flow.velocity * (t + dt - entry)
    pos[:, 1] = rng.random(n) * st.box[1]
    pos[:, 2] = rng.random(n) * st.box[2]
    _append(state, pos, np.arange(state.next_id, state.next_id + n, dtype=np.int64))
    state.next_id += n
    state.injected += n
    return state


def _fold(v: np.ndarray, length: float) -> None:
    """Specular reflection into [0, length], in place."""
    out = (v < 0) | (v > length)
    if out.any():
        m = np.mod(v[out], 2 * length)
        v[out] = np.where(m > length, 2 * length - m, m)


def transport(state: SimState) -> SimState:
    st = state.setup
    n = state.ids.size
    if n == 0:
        return state
    pos = state.pos
    if st.sigma > 0:
        pos += st.sigma * state.rng.standard_normal((n, 3))
    if st.drift:
        pos[:, 0] += st.drift
    _fold(pos[:, 1], st.box[1])
    _fold(pos[:, 2], st.box[2])
    x = pos[:, 0]
    if st.closed:
        _fold(x, st.box[0])
    else:
        np.abs(x, out=x)
        gone = x > st.box[0]
        if gone.any():
            keep = ~gone
            state.exited += int(gone.sum())
            state.pos = pos[keep]
            state.ids = state.ids[keep]
    return state


def surface_reactions(state: SimState, s: Scenario) -> SimState:
    st = state.setup
    rng = state.rng

    # both reactions act on the occupancy at the start of the step
    free = np.flatnonzero(~state.occupied)
    occ = np.flatnonzero(state.occupied)
    if occ.size:
        released = occ[rng.random(occ.size) < st.p_unbind]
        if released.size:
            k = released.size
            pos = np.empty((k, 3))
            pos[:, :2] = st.receptor_xy[released]
            pos[:, 2] = st.sigma * np.abs(rng.standard_normal(k))
            _fold(pos[:, 2], st.box[2])
            _append(state, pos, state.bound_id[released].copy())
            state.occupied[released] = False
            state.bound_id[released] = -1
            state.unbind_events += k

    x = state.pos[:, 0] if state.ids.size else np.empty(0)
    in_slab = np.flatnonzero((x >= st.slab[0]) & (x < st.slab[1]))
    n_slab = in_slab.size
    state.phi_local = n_slab / st.slab_volume
    if n_slab == 0 or st.k_bind == 0:
        return state
    p_bind = -math.expm1(-st.k_bind * state.phi_local * st.dt)
    hits = free[rng.random(free.size) < p_bind]
    if hits.size == 0:
        return state
    if hits.size > n_slab:
        state.capped_bindings += hits.size - n_slab
        hits = rng.choice(hits, n_slab, replace=False)
    taken = rng.choice(in_slab, hits.size, replace=False)
    state.occupied[hits] = True
    state.bound_id[hits] = state.ids[taken]
    keep = np.ones(state.ids.size, dtype=bool)
    keep[taken] = False
    state.pos = state.pos[keep]
    state.ids = state.ids[keep]
    state.bind_events += hits.size
    return state


def step(state: SimState, s: Scenario) -> SimState:
    """Advance one time step: transport, inlet release, surface reactions."""
    transport(state)
    inject_pulse(state, s)
    surface_reactions(state, s)
    state.steps += 1
    state.t = state.steps * state.setup.dt
    return state


@dataclass(frozen=True, eq=False)
class SimOutput:
    nb: TimeSeries
    phi_local: TimeSeries
    manifest: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)


def run(s: Scenario, seed: int, t_end: float, options: SimOptions | None = None,
        replicate: int = 0) -> SimOutput:
    """Simulate one replicate until ``t_end``, recording after every step."""
    options = options or SimOptions()
    validate_scenario(s).raise_if_failed()
    check_timestep(s, options)
    if not options.closed_box and not t_end > s.delay + s.input.width:
        raise SimulationError("t_end must exceed the delay plus the pulse width")
    started = time.perf_counter()
    n_steps = int(round(t_end / s.dt))
    state = init_state(s, seed, options)
    nb = np.empty(n_steps)
    phi = np.empty(n_steps)
    for i in range(n_steps):
        step(state, s)
        nb[i] = state.n_bound
        phi[i] = state.phi_local
    manifest = {
        "scenario_hash": scenario_hash(s),
        "seed": int(seed),
        "replicate": int(replicate),
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }
    counters = {
        "injected": state.injected,
        "exited": state.exited,
        "free": state.n_free,
        "bound": state.n_bound,
        "bind_events": state.bind_events,
        "unbind_events": state.unbind_events,
        "capped_bindings": state.capped_bindings,
    }
    dt = s.dt
    return SimOutput(TimeSeries(dt, dt, nb), TimeSeries(dt, dt, phi), manifest, counters)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    nb_mean: TimeSeries
    nb_std: TimeSeries
    phi_mean: TimeSeries
    phi_std: TimeSeries
    outputs: list[SimOutput]
    master_seed: int

    @property
    def n(self) -> int:
        return len(self.outputs)

    @property
    def nb_sem(self) -> TimeSeries:
        s = self.nb_std
        return TimeSeries(s.t0, s.dt, s.values / math.sqrt(self.n))

    @property
    def phi_sem(self) -> TimeSeries:
        s = self.phi_std
        return TimeSeries(s.t0, s.dt, s.values / math.sqrt(self.n))


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_replicate(args) -> SimOutput:
    s, master_seed, index, t_end, options = args
    return run(s, replicate_seed(master_seed, index), t_end, options, replicate=index)


def ensemble(s: Scenario, master_seed: int, n_replicates: int, t_end: float,
             options: SimOptions | None = None, workers: int | None = None) -> EnsembleResult:
    """Run independent replicates and reduce them pointwise.

    The std is the population standard deviation across replicates (zero for
    a single replicate). Results do not depend on ``workers``.
    """
    if n_replicates < 1:
        raise ValueError("need at least one replicate")
    workers = min(workers or default_workers(), n_replicates)
    # fail fast in the parent rather than in every worker
    validate_scenario(s).raise_if_failed()
    check_timestep(s, options)
    jobs = [(s, master_seed, i, t_end, options) for i in range(n_replicates)]
    if workers == 1:
        outputs = [_run_replicate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_replicate, jobs))
    nb = np.stack([o.nb.values for o in outputs])
    phi = np.stack([o.phi_local.values for o in outputs])
    dt = s.dt
    return EnsembleResult(
        nb_mean=TimeSeries(dt, dt, nb.mean(axis=0)),
        nb_std=TimeSeries(dt, dt, nb.std(axis=0)),
        phi_mean=TimeSeries(dt, dt, phi.mean(axis=0)),
        phi_std=TimeSeries(dt, dt, phi.std(axis=0)),
        outputs=outputs,
        master_seed=master_seed,
    )
