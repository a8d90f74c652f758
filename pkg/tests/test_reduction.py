from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnt_persist.errors import EmptyReducedNetwork
from crnt_persist.kinetics import integrate, mass_action_rhs
from crnt_persist.network import is_weakly_reversible, linkage_classes, parse_network
from crnt_persist.reduction import bounded_kinetics_certificate, projected_rates, reduce_network

from conftest import random_weakly_reversible
from oracles import weakly_reversible_bfs


def _by_pair(rs):
    net = rs.reduced_net
    out = {}
    for k, terms in enumerate(rs.rate_terms):
        r = net.reactions[k]
        key = (net.complex_label(r.source), net.complex_label(r.product))
        out[key] = {(t.reaction + 1, t.exponents) for t in terms}
    return out


def test_three_linkage_reduction(three_linkage):
    rs = reduce_network(three_linkage, ["S1", "S4", "S5"])
    # complement order is S2, S3
    assert _by_pair(rs) == {
        ("0", "S5"): {(8, (1, 1))},
        ("S5", "0"): {(7, (2, 0))},
        ("S5", "S1 + S4"): {(3, (0, 1)), (6, (1, 0))},
        ("S1 + S4", "S5"): {(4, (0, 0)), (5, (0, 0))},
    }
    assert rs.deleted_complexes == ((2, 0, 0),)
    assert rs.dropped_reactions == (0, 1)
    assert len(linkage_classes(rs.reduced_net)) == 1
    assert rs.provenance[rs.reduced_net.reactions.index(
        next(r for r in rs.reduced_net.reactions if rs.reduced_net.complex_label(r.source) == "S5"
             and rs.reduced_net.complex_label(r.product) == "S1 + S4"))] == (2, 5)


def test_projected_rates_three_linkage(three_linkage):
    net = three_linkage.with_rates([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    rs = reduce_network(net, [0, 3, 4])
    traj = integrate(net, [1.0, 2.0, 0.5, 1.5, 0.7], 5.0, n_samples=40)
    pr = projected_rates(rs, traj)
    x2, x3 = traj.states[:, 1], traj.states[:, 2]
    expected = {
        ("0", "S5"): 8.0 * x2 * x3,
        ("S5", "0"): 7.0 * x2**2,
        ("S5", "S1 + S4"): 3.0 * x3 + 6.0 * x2,
        ("S1 + S4", "S5"): np.full_like(x2, 9.0),
    }
    for k, r in enumerate(rs.reduced_net.reactions):
        key = (rs.reduced_net.complex_label(r.source), rs.reduced_net.complex_label(r.product))
        assert np.allclose(pr.values[:, k], expected[key], rtol=1e-14)
    assert np.allclose(pr.rate_min, pr.values.min(axis=0))
    assert np.allclose(pr.schedule(traj.times[7]), pr.values[7])


def test_full_subset_is_identity(three_linkage):
    rs = reduce_network(three_linkage, range(5))
    assert rs.reduced_net == three_linkage
    traj = integrate(three_linkage, [1.0, 2.0, 0.5, 1.5, 0.7], 2.0, n_samples=10)
    assert np.allclose(projected_rates(rs, traj).values, three_linkage.rates)
    cert = bounded_kinetics_certificate(rs, traj)
    assert cert.eta == min(three_linkage.rates.min(), 1 / three_linkage.rates.max())


def test_idempotent(three_linkage):
    rs = reduce_network(three_linkage, ["S1", "S4", "S5"])
    again = reduce_network(rs.reduced_net, range(rs.reduced_net.n_species))
    assert again.reduced_net == rs.reduced_net


def test_empty_reduced_network():
    net = parse_network("A + B <-> A + C ; kf=1, kr=1")
    with pytest.raises(EmptyReducedNetwork):
        reduce_network(net, ["A"])


def test_inactive_species_flagged():
    net = parse_network("S1 + S2 <-> S1 + S3 ; kf=1, kr=1\nS2 <-> S4 ; kf=1, kr=1")
    rs = reduce_network(net, ["S1", "S4"])
    assert rs.inactive_species == ("S1",)
    assert rs.reduced_net.inactive_species_allowed


def test_subset_validation(three_linkage):
    with pytest.raises(ValueError):
        reduce_network(three_linkage, [])
    with pytest.raises(ValueError):
        reduce_network(three_linkage, ["S9"])
    with pytest.raises(ValueError):
        reduce_network(three_linkage, [7])


def test_json_document(three_linkage):
    doc = json.loads(json.dumps(reduce_network(three_linkage, ["S1", "S4", "S5"]).to_dict()))
    assert doc["deleted_complexes"] == ["2 S1"]
    again = parse_network(doc["reduced_dsl"])
    assert again.n_reactions == 4
    assert {tuple(p) for p in doc["provenance"]} == {(2, 5), (3, 4), (6,), (7,)}


def test_bounded_kinetics_detects_vanishing_rate():
    # A decays to zero and feeds the rate of B -> C when U = {B, C}
    net = parse_network("A -> 0 ; k=1\nA + B -> C ; k=1\nC -> B ; k=1")
    rs = reduce_network(net, ["B", "C"])
    traj = integrate(net, [1.0, 1.0, 1.0], 60.0)
    cert = bounded_kinetics_certificate(rs, traj)
    assert cert.eta is None
    k = next(i for i, p in enumerate(rs.provenance) if p == (1,))
    assert k in cert.offending


def test_bounded_kinetics_cycle4_boundary_subset(cycle4):
    traj = integrate(cycle4, [1.0, 2.0, 3.0], 100.0)
    rs = reduce_network(cycle4, ["S1", "S2"])
    cert = bounded_kinetics_certificate(rs, traj)
    assert cert.eta is not None and cert.eta > 0
    lo, hi = np.array(cert.rate_min), np.array(cert.rate_max)
    assert np.all(lo >= cert.eta) and np.all(hi <= 1 / cert.eta)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_structure_properties(seed):
    rng = np.random.default_rng(seed)
    net = random_weakly_reversible(rng)
    size = int(rng.integers(1, net.n_species + 1))
    U = sorted(rng.choice(net.n_species, size, replace=False).tolist())
    try:
        rs = reduce_network(net, U)
    except EmptyReducedNetwork:
        return
    red = rs.reduced_net
    assert len(linkage_classes(red)) <= len(linkage_classes(net))
    assert is_weakly_reversible(red)
    assert weakly_reversible_bfs(red.source_index, red.product_index)
    for r in red.reactions:
        assert red.complexes[r.source] != red.complexes[r.product]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_dynamics_consistency_property(seed):
    rng = np.random.default_rng(seed)
    net = random_weakly_reversible(rng)
    U = sorted(rng.choice(net.n_species, int(rng.integers(1, net.n_species + 1)), replace=False).tolist())
    try:
        rs = reduce_network(net, U)
    except EmptyReducedNetwork:
        return
    traj = integrate(net, rng.uniform(0.2, 3.0, net.n_species), 2.0, n_samples=30)
    pr = projected_rates(rs, traj)
    for i, (t, x) in enumerate(zip(traj.times, traj.states)):
        full = mass_action_rhs(net, x)[U]
        terms = np.abs(net.rates * np.prod(x ** net.source_matrix, axis=1)) @ np.abs(net.reaction_vectors)
        red = mass_action_rhs(rs.reduced_net, x[U], t, pr.schedule)
        assert np.all(np.abs(full - red) <= 1e-12 * np.maximum(terms[U], np.finfo(float).tiny))
