from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from crnt_persist.errors import RateBoundViolation
from crnt_persist.kinetics import (
    RateSchedule,
    Trajectory,
    boundary_distance_series,
    conserved_drift,
    default_sample_times,
    integrate,
    mass_action_rhs,
    reaction_fluxes,
)
from crnt_persist.network import parse_network, stoichiometric_subspace

from conftest import random_weakly_reversible
from oracles import a_b_closed_form, rhs_term_by_term

AB = "A <-> B ; kf=1, kr=1"


def _reference(net, x0, t_end, **kw):
    """Independent high-accuracy integration with scipy's DOP853."""
    sol = solve_ivp(
        lambda t, x: mass_action_rhs(net, x), (0.0, t_end), x0, method="DOP853", rtol=1e-12, atol=1e-14, **kw
    )
    return sol


def test_rhs_examples():
    net = parse_network(AB)
    assert np.array_equal(mass_action_rhs(net, [1.0, 1.0]), [0.0, 0.0])
    net2 = parse_network("A <-> B ; kf=2, kr=1")
    assert np.array_equal(mass_action_rhs(net2, [1.0, 1.0]), [-1.0, 1.0])


def test_rhs_cycle4_term_by_term(cycle4):
    reactions = [(r.source, r.product, r.rate) for r in cycle4.reactions]
    for x in ([1.0, 1.0, 1.0], [0.3, 2.0, 1.7], [0.0, 1.0, 2.0]):
        expected = rhs_term_by_term(3, reactions, cycle4.complexes, x)
        assert np.allclose(mass_action_rhs(cycle4, x), expected, rtol=1e-14, atol=1e-14)


def test_zero_power_convention():
    net = parse_network("A + B -> 2 B ; k=1\n0 -> A ; k=2")
    assert np.array_equal(mass_action_rhs(net, [0.0, 0.0]), [2.0, 0.0])


def test_rhs_stacked_states(cycle4):
    X = np.array([[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]])
    stacked = mass_action_rhs(cycle4, X)
    assert np.allclose(stacked[0], mass_action_rhs(cycle4, X[0]))
    assert np.allclose(stacked[1], mass_action_rhs(cycle4, X[1]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_rhs_linear_in_each_rate(seed, c):
    rng = np.random.default_rng(seed)
    net = random_weakly_reversible(rng)
    x = rng.uniform(0.1, 3.0, net.n_species)
    k = int(rng.integers(net.n_reactions))
    scaled = net.with_rates([r.rate * (c if i == k else 1.0) for i, r in enumerate(net.reactions)])
    delta = mass_action_rhs(scaled, x) - mass_action_rhs(net, x)
    contribution = reaction_fluxes(net, x)[k] * net.reaction_vectors[k]
    assert np.allclose(delta, (c - 1.0) * contribution, rtol=1e-12, atol=1e-12)


def test_a_b_matches_closed_form():
    net = parse_network(AB)
    traj = integrate(net, [2.0, 0.1], 100.0)
    exact = a_b_closed_form(1.0, 1.0, 2.0, 0.1, traj.times)
    assert np.abs(traj.states - exact).max() < 1e-7
    assert np.allclose(traj.final, [1.05, 1.05], atol=1e-10)
    assert conserved_drift(traj, [1.0, 1.0]) <= 1e-8


def test_cycle4_against_reference(cycle4):
    traj = integrate(cycle4, [1.0, 2.0, 3.0], 100.0)
    ref = _reference(cycle4, [1.0, 2.0, 3.0], 100.0, t_eval=traj.times)
    assert np.abs(traj.states - ref.y.T).max() < 1e-6
    mask = traj.times >= 10
    assert traj.states[mask].min() > 0.1
    assert ref.y.T[mask].min() > 0.1


def test_cycle4_drift_each_conservation_vector(three_linkage):
    traj = integrate(three_linkage, [1.0, 2.0, 0.5, 1.5, 0.7], 100.0)
    for w in stoichiometric_subspace(three_linkage).conservation_basis:
        assert conserved_drift(traj, w) <= 1e-7


def test_t_end_zero(cycle4):
    traj = integrate(cycle4, [1.0, 2.0, 3.0], 0.0)
    assert len(traj) == 1
    assert np.array_equal(traj.states[0], [1.0, 2.0, 3.0])


def test_input_validation(cycle4):
    with pytest.raises(ValueError):
        integrate(cycle4, [1.0, 0.0, 3.0], 1.0)
    with pytest.raises(ValueError):
        integrate(cycle4, [1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        integrate(cycle4, [1.0, 2.0, 3.0], -1.0)


def test_positivity_and_monotone_decay():
    net = parse_network("A -> B ; k=1")
    traj = integrate(net, [1.0, 0.1], 100.0)
    assert np.all(traj.states > 0)
    a = traj.states[:, 0]
    assert np.all(np.diff(a) <= 0)
    assert a[-1] < 1e-20


def test_halving_tolerance_changes_little(cycle4):
    coarse = integrate(cycle4, [1.0, 2.0, 3.0], 100.0, rtol=1e-6, atol=1e-8).final
    fine = integrate(cycle4, [1.0, 2.0, 3.0], 100.0, rtol=5e-7, atol=5e-9).final
    assert np.abs(coarse - fine).max() <= 1e-6 * np.abs(fine).max()


def test_deterministic(cycle4):
    a = integrate(cycle4, [1.0, 2.0, 3.0], 50.0)
    b = integrate(cycle4, [1.0, 2.0, 3.0], 50.0)
    assert np.array_equal(a.states, b.states)
    assert a.meta == b.meta


def test_t_eval_and_default_grid(cycle4):
    grid = default_sample_times(100.0, 64)
    assert grid[0] == 0 and grid[-1] == 100.0 and grid.size == 64
    traj = integrate(cycle4, [1.0, 2.0, 3.0], 10.0, t_eval=[1.0, 2.5, 10.0])
    assert np.array_equal(traj.times, [0.0, 1.0, 2.5, 10.0])
    with pytest.raises(ValueError):
        integrate(cycle4, [1.0, 2.0, 3.0], 10.0, t_eval=[11.0])


def test_constant_schedule_equals_autonomous(cycle4):
    sched = RateSchedule.from_callable(lambda t: cycle4.rates, cycle4.n_reactions, eta=0.5)
    a = integrate(cycle4, [1.0, 2.0, 3.0], 20.0, schedule=sched, n_samples=32)
    b = integrate(cycle4, [1.0, 2.0, 3.0], 20.0, n_samples=32)
    assert np.allclose(a.states, b.states, rtol=1e-12)


def test_time_varying_schedule_against_reference():
    net = parse_network(AB)
    rates = [lambda t: 1.5 + np.sin(t), lambda t: 1.0 + 0.5 * np.cos(t)]
    sched = RateSchedule.from_callable(rates, 2, eta=0.3)
    traj = integrate(net, [2.0, 0.1], 10.0, schedule=sched, n_samples=50)
    ref = solve_ivp(
        lambda t, x: mass_action_rhs(net, x, t, sched), (0, 10), [2.0, 0.1], method="DOP853",
        rtol=1e-12, atol=1e-14, t_eval=traj.times,
    )
    assert np.abs(traj.states - ref.y.T).max() < 1e-7


def test_schedule_band_enforced():
    with pytest.raises(RateBoundViolation):
        RateSchedule.from_callable(lambda t: [np.exp(-t)], 1, eta=0.1, horizon=10.0)
    with pytest.raises(RateBoundViolation):
        RateSchedule.from_samples([0.0, 1.0], [[0.5], [20.0]], eta=0.1)
    with pytest.raises(RateBoundViolation):
        RateSchedule.from_samples([0.0, 1.0], [[0.5], [-1.0]])
    sched = RateSchedule.from_samples([0.0, 2.0], [[1.0, 2.0], [3.0, 2.0]], eta=0.2)
    assert np.allclose(sched(1.0), [2.0, 2.0])
    assert np.allclose(sched(5.0), [3.0, 2.0])


def test_trajectory_exports():
    traj = integrate(parse_network(AB), [2.0, 0.1], 1.0, n_samples=5)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,x_1,x_2"
    assert len(lines) == 6
    doc = json.loads(traj.to_json())
    assert doc["metadata"]["rtol"] == 1e-8 and doc["metadata"]["atol"] == 1e-10
    assert len(doc["metadata"]["network"]) == 64
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [[1.0], [1.0]])


def test_boundary_distance_examples(cycle4):
    ab = integrate(parse_network(AB), [2.0, 0.1], 100.0)
    bd = boundary_distance_series(ab)
    assert abs(bd.trailing_min - 1.05) < 1e-7

    decay = integrate(parse_network("A -> B ; k=1"), [1.0, 0.1], 100.0)
    bd = boundary_distance_series(decay)
    assert bd.trailing_min < 1e-15
    assert bd.species_log_slope[0] < -0.1

    tr = integrate(cycle4, [1.0, 2.0, 3.0], 100.0)
    assert boundary_distance_series(tr).trailing_min > 0.5


def test_conserved_drift_zero_vector(cycle4):
    traj = integrate(cycle4, [1.0, 2.0, 3.0], 10.0)
    assert conserved_drift(traj, [0.0, 0.0, 0.0]) == 0.0


def test_boundary_floor_flag():
    net = parse_network("A -> B ; k=50")
    traj = integrate(net, [1.0, 1.0], 100.0, n_samples=16)
    assert np.all(traj.states > 0)
    assert "A" in traj.meta["boundary_flags"]


STIFF = """
2 S2 + S3 -> 2 S1 + 2 S2 + S3 ; k=0.7876919369096949
2 S1 + 2 S2 + S3 -> 2 S1 + 2 S3 ; k=0.40170694787210637
2 S1 + 2 S3 -> 2 S2 + S3 ; k=2.1750162601857816
2 S1 + S2 + S3 -> 2 S3 ; k=2.5273103767130745
2 S3 -> S1 + S2 ; k=0.3381619153108332
S1 + S2 -> 2 S1 + S2 + S3 ; k=0.4573777388225141
"""


def test_stiff_run_switches_to_implicit_solver():
    net = parse_network(STIFF)
    x0 = np.array([1.22977192, 0.69956493, 1.60002932])
    traj = integrate(net, x0, 100.0)
    assert traj.meta["method"] == "dopri5+radau" and traj.meta["stiff_switch_t"] > 0
    assert np.all(traj.states > 0)
    ref = solve_ivp(lambda t, x: mass_action_rhs(net, x), (0, 100), x0, method="LSODA", rtol=1e-12, atol=1e-14)
    assert np.allclose(traj.final, ref.y[:, -1], rtol=1e-6)
