import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcfreq import analytic as an
from mcfreq.scenario import scenario_from_table_defaults
from mcfreq.simulator import (SimOptions, SimulationError, _fold, check_timestep, ensemble,
                              init_state, inject_pulse, receptor_positions, replicate_seed, run,
                              slab_length, splitmix64, step, surface_reactions, transport)


def with_ligand(s, **kw):
    return s.replace(ligand=replace(s.ligand, **kw))


def test_splitmix64_reference_vectors():
    # first outputs of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert replicate_seed(1, 0) != replicate_seed(1, 1) != replicate_seed(2, 1)
    assert 0 <= replicate_seed(2**64 + 5, 3) < 2**64


def test_slab_length_default_and_clamp(table):
    assert math.isclose(slab_length(table), 0.2e-6)
    slow = table.replace(flow=replace(table.flow, velocity=1e-4))
    assert slab_length(slow) == 0.1e-6
    assert slab_length(table, SimOptions(slab_length=2e-6)) == 2e-6


def test_receptor_lattice_inside_patch(table):
    xy = receptor_positions(table)
    r = table.receptors
    assert xy.shape == (500, 2) and len({tuple(p) for p in xy}) == 500
    assert xy[:, 0].min() > r.patch_origin and xy[:, 0].max() < r.patch_origin + r.patch_extent[0]
    assert math.isclose(xy[:, 0].mean(), 100e-6, rel_tol=1e-3)
    assert xy[:, 1].min() > 1e-6 and xy[:, 1].max() < 2e-6
    assert math.isclose(xy[:, 1].mean(), 1.5e-6, rel_tol=1e-2)


def injected_total(s, steps=20):
    state = init_state(s, 1)
    for _ in range(steps):
        inject_pulse(state, s)
        state.steps += 1
        state.t = state.steps * s.dt
    return state.injected


def test_injected_count(table):
    expected = 3.3e20 * (3e-6) ** 2 * 2e-3 * 5e-4
    assert math.isclose(expected, 2970, rel_tol=1e-9)
    assert abs(injected_total(table) - round(expected)) <= 1
    wide = table.replace(input=replace(table.input, width=1e-3))
    assert abs(injected_total(wide, 40) - 2 * injected_total(table)) <= 1


def test_zero_amplitude_injects_nothing(table):
    s = table.replace(input=replace(table.input, amplitude=0.0))
    assert injected_total(s) == 0


def test_injection_positions(table):
    state = init_state(table, 3)
    inject_pulse(state, table)
    x = state.pos[:, 0]
    assert state.injected == x.size == 297
    assert x.min() >= 0 and x.max() < table.flow.velocity * table.dt
    assert state.pos[:, 1].max() <= 3e-6 and state.pos[:, 2].max() <= 3e-6


def test_plug_flow_arrival_step(table):
    # receiver off the step lattice to avoid ties
    x_r = 100.05e-6
    s = with_ligand(table, diffusion_coefficient=0.0)
    s = s.replace(geometry=replace(s.geometry, receiver_position=x_r))
    state = init_state(s, 0)
    state.pos = np.array([[0.0, 1e-6, 1e-6]])
    state.ids = np.array([0])
    state.injected = 1
    steps = 0
    while state.pos[0, 0] < x_r:
        transport(state)
        steps += 1
    assert steps == math.ceil(x_r / s.flow.velocity / s.dt)


def test_step_moments(table):
    n = 1_000_000
    state = init_state(table, 11)
    mid = np.array([100e-6, 1.5e-6, 1.5e-6])
    # a box wide enough that no sample meets a wall
    state.setup = replace(state.setup, box=np.array([1.0, 1.0, 1.0]))
    state.pos = np.tile(mid, (n, 1)) + 0.4
    state.ids = np.arange(n)
    start = state.pos.copy()
    transport(state)
    d = state.pos - start
    var = 2 * table.ligand.diffusion_coefficient * table.dt
    means = np.array([table.flow.velocity * table.dt, 0.0, 0.0])
    for axis in range(3):
        assert abs(d[:, axis].mean() - means[axis]) < 3 * math.sqrt(var / n)
        assert abs(d[:, axis].var() - var) < 3 * var * math.sqrt(2 / n)


@settings(max_examples=200, deadline=None)
@given(v=st.floats(-50, 50), length=st.floats(0.1, 10))
def test_fold_reflects_into_box(v, length):
    a = np.array([v])
    _fold(a, length)
    assert 0 <= a[0] <= length
    if 0 <= v <= length:
        assert a[0] == v


def test_accounting_through_a_run(table):
    state = init_state(table, 5)
    for _ in range(1400):
        step(state, table)
        assert state.conserved()
        assert state.n_bound <= table.receptors.count
        assert np.count_nonzero(state.bound_id >= 0) == state.n_bound
        if state.ids.size:
            assert state.pos[:, 1].min() >= 0 and state.pos[:, 1].max() <= 3e-6
            assert state.pos[:, 2].min() >= 0 and state.pos[:, 2].max() <= 3e-6
            assert state.pos[:, 0].min() >= 0 and state.pos[:, 0].max() <= 200e-6
    bound = set(state.bound_id[state.bound_id >= 0].tolist())
    assert bound.isdisjoint(state.ids.tolist())


def test_unbinding_reinsertion(table):
    state = init_state(table, 2)
    n_r = table.receptors.count
    state.occupied[:] = True
    state.bound_id[:] = np.arange(n_r) + 1000
    state.injected = n_r
    state.setup = replace(state.setup, p_unbind=1.0)
    surface_reactions(state, table)
    assert state.n_bound == 0 and state.unbind_events == n_r and state.conserved()
    np.testing.assert_array_equal(np.sort(state.ids), np.arange(n_r) + 1000)
    np.testing.assert_array_equal(state.pos[:, :2], receptor_positions(table))
    assert state.pos[:, 2].min() >= 0 and state.pos[:, 2].max() < 6 * state.setup.sigma


def test_binding_capped_by_slab_population(table):
    state = init_state(table, 4)
    state.pos = np.array([[100e-6, 1e-6, 1e-6]] * 3)
    state.ids = np.arange(3)
    state.injected = 3
    state.setup = replace(state.setup, k_bind=1e3)
    surface_reactions(state, table)
    assert state.n_bound == 3 and state.n_free == 0 and state.conserved()
    assert state.capped_bindings == table.receptors.count - 3
    assert math.isclose(state.phi_local, 3 / state.setup.slab_volume)


def test_no_binding_without_rate(table):
    s = with_ligand(table, binding_rate=0.0)
    out = run(s, 1, 0.1)
    assert not out.nb.values.any()
    assert out.phi_local.values.max() > 0


def test_pure_advection_rectangle(table):
    s = with_ligand(table, diffusion_coefficient=0.0, binding_rate=0.0)
    out = run(s, 9, 0.1)
    phi = out.phi_local.values
    t = out.phi_local.times
    ls = slab_length(s)
    u, t_p = s.flow.velocity, s.input.width
    arrive = (s.geometry.receiver_position - ls / 2) / u
    leave = arrive + t_p + ls / u
    dt = s.dt
    assert not phi[(t < arrive - dt) | (t > leave + dt)].any()
    plateau = phi[(t > arrive + ls / u + dt) & (t < arrive + t_p - dt)]
    assert plateau.size >= 5
    v = ls * 9e-12
    sigma = math.sqrt(s.input.amplitude * v) / v
    assert np.all(np.abs(plateau - s.input.amplitude) <= 3 * sigma)


def test_run_determinism(table):
    a, b, c = run(table, 7, 0.06), run(table, 7, 0.06), run(table, 8, 0.06)
    np.testing.assert_array_equal(a.nb.values, b.nb.values)
    np.testing.assert_array_equal(a.phi_local.values, b.phi_local.values)
    assert a.counters == b.counters
    assert not np.array_equal(a.phi_local.values, c.phi_local.values)
    assert a.nb.dt == a.phi_local.dt == table.dt and len(a.nb) == len(a.phi_local) == 1200
    assert set(a.manifest) == {"scenario_hash", "seed", "replicate", "version", "wall_time_s"}


def test_run_preconditions(table):
    with pytest.raises(SimulationError, match="t_end"):
        run(table, 1, 0.04)
    fast = with_ligand(table, unbinding_rate=2500.0)
    with pytest.raises(SimulationError, match="k- dt"):
        check_timestep(fast)
    with pytest.raises(SimulationError):
        run(fast, 1, 0.2)
    big = table.replace(sim=replace(table.sim, timestep=1e-3))
    with pytest.raises(SimulationError):
        check_timestep(with_ligand(big, unbinding_rate=50.0))


def test_single_replicate_ensemble(table):
    res = ensemble(table, 3, 1, 0.06, workers=1)
    single = run(table, replicate_seed(3, 0), 0.06)
    np.testing.assert_array_equal(res.nb_mean.values, single.nb.values)
    assert not res.nb_std.values.any() and not res.phi_std.values.any()


@pytest.fixture(scope="module")
def table_ensemble(ensembles):
    return ensembles(scenario_from_table_defaults(), 100)


@pytest.mark.slow
def test_ensemble_tracks_linear_ode(table_ensemble, table):
    drive = an.received_drive(table, len(table_ensemble.nb_mean))
    ode = an.solve_bound_ode(table, drive).values
    mean = table_ensemble.nb_mean.values
    rms = math.sqrt(np.mean((mean - ode) ** 2)) / ode.max()
    assert rms <= 0.05
    t = table_ensemble.nb_mean.times
    assert abs(t[np.argmax(mean)] - t[np.argmax(ode)]) <= 2e-3
    assert abs(t[np.argmax(mean)] - 0.05) <= 2e-3


@pytest.mark.slow
def test_received_peak_matches_simulation(table_ensemble, table):
    t = np.arange(49e-3, 52e-3, 1e-6)
    peak = an.received_concentration(table, t).max()
    assert abs(table_ensemble.phi_mean.values.max() - peak) <= 0.03 * peak


@pytest.mark.slow
def test_sem_scales_with_replicates(table_ensemble):
    nb = np.stack([o.nb.values for o in table_ensemble.outputs])
    i = int(np.argmax(table_ensemble.nb_mean.values))
    sem = lambda x: x.std(ddof=0) / math.sqrt(x.size)
    ratio = sem(nb[:25, i]) / sem(nb[:, i])
    assert 2 * 0.7 <= ratio <= 2 * 1.3
    assert math.isclose(table_ensemble.nb_sem.values[i], sem(nb[:, i]))


@pytest.mark.slow
def test_faster_binding_raises_peak(table_ensemble, table):
    res = ensemble(with_ligand(table, binding_rate=5e-18), 77, 100, 0.1)
    base = np.array([o.nb.values.max() for o in table_ensemble.outputs])
    fast = np.array([o.nb.values.max() for o in res.outputs])
    # one-sided Welch statistic
    z = (fast.mean() - base.mean()) / math.sqrt(fast.var(ddof=1) / 100 + base.var(ddof=1) / 100)
    assert z > 2.33
