"""End-to-end acceptance checks, one test per criterion, each with its own time budget."""

from __future__ import annotations

import io
import json
import time

import numpy as np
import pytest

from crnt_persist.cli import main
from crnt_persist.errors import EmptyReducedNetwork
from crnt_persist.kinetics import DEFAULT_ATOL, DEFAULT_RTOL, conserved_drift, integrate, mass_action_rhs
from crnt_persist.lyapunov import (
    LyapunovProbe,
    complex_balanced_equilibrium,
    derivative_terms,
    lyapunov_derivative,
    lyapunov_value,
)
from crnt_persist.network import parse_network, stoichiometric_subspace, structural_summary
from crnt_persist.reduction import projected_rates, reduce_network
from crnt_persist.tiers import ALTERNATIVE, RELATION, find_respecting_relation, partition_along_points, partition_from_tiers

from conftest import load_builtin, random_weakly_reversible
from oracles import lyapunov_mp, positive_kernel_exists


class Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.2f} s, limit {self.seconds} s"


def test_criterion_1_golden_structure():
    with Budget(1.0):
        s = structural_summary(load_builtin("cycle4"))
        assert (s.n, s.l, s.s, s.deficiency, s.weakly_reversible) == (4, 1, 3, 0, True)


def test_criterion_2_reduction_golden():
    with Budget(1.0):
        rs = reduce_network(load_builtin("three_linkage"), ["S1", "S4", "S5"])
        net = rs.reduced_net
        comp = [rs.original.species[i] for i in rs.complement]
        diagram = {}
        for k, r in enumerate(net.reactions):
            key = (net.complex_label(r.source), net.complex_label(r.product))
            diagram[key] = {t.label(comp) for t in rs.rate_terms[k]}
        assert diagram == {
            ("0", "S5"): {"k8 * S2 * S3"},
            ("S5", "0"): {"k7 * S2^2"},
            ("S5", "S1 + S4"): {"k3 * S3", "k6 * S2"},
            ("S1 + S4", "S5"): {"k4", "k5"},
        }
        assert rs.to_dict()["deleted_complexes"] == ["2 S1"]


def test_criterion_3_dynamics_consistency():
    rng = np.random.default_rng(3)
    checked = 0
    worst = 0.0
    with Budget(60.0):
        while checked < 50:
            net = random_weakly_reversible(rng, max_species=5, max_reactions=6)
            U = sorted(rng.choice(net.n_species, int(rng.integers(1, net.n_species + 1)), replace=False).tolist())
            try:
                rs = reduce_network(net, U)
            except EmptyReducedNetwork:
                continue
            traj = integrate(net, rng.uniform(0.2, 3.0, net.n_species), 5.0, n_samples=64)
            sched = projected_rates(rs, traj).schedule
            for t, x in zip(traj.times, traj.states):
                full = mass_action_rhs(net, x)[U]
                # each RHS component is a signed sum; its magnitude scale is the sum of |terms|
                scale = (net.rates * np.prod(x**net.source_matrix, axis=1)) @ np.abs(net.reaction_vectors)
                red = mass_action_rhs(rs.reduced_net, x[U], t, sched)
                err = np.abs(full - red) / np.maximum(scale[U], np.finfo(float).tiny)
                worst = max(worst, float(err.max()))
            checked += 1
    assert worst <= 1e-12, worst


def _random_tier_instance(rng):
    N = int(rng.integers(1, 7))
    m = int(rng.integers(1, 9))
    complexes = [tuple(int(v) for v in rng.integers(0, 3, N)) for _ in range(m)]
    labels = rng.integers(0, int(rng.integers(1, m + 1)), m)
    tiers = [np.nonzero(labels == t)[0].tolist() for t in np.unique(labels)]
    U = sorted(rng.choice(N, int(rng.integers(1, N + 1)), replace=False).tolist())
    return complexes, tiers, U


def test_criterion_4_stiemke_exclusivity():
    rng = np.random.default_rng(4)
    kinds = {RELATION: 0, ALTERNATIVE: 0}
    with Budget(60.0):
        for _ in range(200):
            complexes, tiers, U = _random_tier_instance(rng)
            rel = find_respecting_relation(partition_from_tiers(complexes, tiers), U)
            assert (rel.w is None) != (rel.alpha is None)
            kinds[rel.kind] += 1
            if rel.kind == RELATION:
                w = np.array(rel.w)
                assert np.all(w[U] > 0) and np.all(np.delete(w, U) == 0)
                for t in tiers:
                    for j in t:
                        d = np.subtract(complexes[j], complexes[t[0]])
                        assert abs(w @ d) <= 1e-9 * w.max()
            else:
                V = np.array(rel.vectors, dtype=float).reshape(-1, len(U))
                combo = V.T @ np.array(rel.alpha)
                amp = 1e-9 * max(1.0, np.abs(rel.alpha).max())
                assert np.all(combo <= amp) and combo[list(rel.support).index(rel.strict_index)] < -amp
            assert (rel.kind == RELATION) == positive_kernel_exists(rel.vectors, len(U))
    assert kinds[RELATION] and kinds[ALTERNATIVE]


def test_criterion_5_lyapunov_numerics():
    rng = np.random.default_rng(5)
    with Budget(30.0):
        orders = []
        for _ in range(100):
            n = int(rng.integers(1, 6))
            x, xbar = rng.uniform(0.05, 0.5, n), rng.uniform(0.05, 0.5, n)
            g = LyapunovProbe(xbar).gradient(x)
            errs = []
            for h in (1e-3, 5e-4):
                fd = np.array([(lyapunov_value(xbar, x + h * e) - lyapunov_value(xbar, x - h * e)) / (2 * h) for e in np.eye(n)])
                errs.append(np.abs(fd - g).max())
            orders.append(np.log2(errs[0] / errs[1]))
        assert 1.8 <= min(orders) and max(orders) <= 2.2, (min(orders), max(orders))

        for _ in range(200):
            n = int(rng.integers(1, 6))
            x, z, xbar = rng.uniform(0.0, 4.0, (3, n))
            xbar += 0.05
            lam = rng.uniform()
            vx, vz = lyapunov_value(xbar, x), lyapunov_value(xbar, z)
            assert lyapunov_value(xbar, lam * x + (1 - lam) * z) <= lam * vx + (1 - lam) * vz + 1e-12
            assert vx >= 0 and vx == pytest.approx(lyapunov_mp(xbar, x), rel=1e-12, abs=1e-13)

        h = 1e-5
        worst = 0.0
        for _ in range(10):
            net = random_weakly_reversible(rng)
            probe = LyapunovProbe(rng.uniform(0.2, 3.0, net.n_species))
            ts = np.linspace(0.1, 4.9, 25)
            traj = integrate(net, rng.uniform(0.2, 3.0, net.n_species), 5.0, t_eval=np.concatenate([ts - h, ts, ts + h]))
            for t in ts:
                i = int(np.searchsorted(traj.times, t))
                xm, x, xp = traj.states[i - 1 : i + 2]
                fd = (probe.value(xp) - probe.value(xm)) / (2 * h)
                scale = np.abs(derivative_terms(net, probe, x)).sum()
                worst = max(worst, abs(fd - lyapunov_derivative(net, probe, x)) / scale)
        assert worst <= 100 * DEFAULT_RTOL, worst


def _converge(net, x0, c, tol=1e-6, t_max=1e7):
    """Integrate from x0 in growing horizons until within tol of c."""
    x, t_total, horizon = np.asarray(x0, dtype=float), 0.0, 1e3
    while t_total < t_max:
        x = integrate(net, x, horizon, n_samples=8).final
        t_total += horizon
        if np.abs(x - c).max() <= tol:
            return t_total, np.abs(x - c).max()
        horizon *= 2
    return t_total, np.abs(x - c).max()


def test_criterion_6_complex_balance():
    rng = np.random.default_rng(6)
    base = load_builtin("cycle4")
    nets = [base] + [base.with_rates(np.exp(rng.uniform(np.log(0.2), np.log(5.0), 4))) for _ in range(20)]
    with Budget(120.0):
        for net in nets:
            x0 = np.exp(rng.uniform(np.log(0.5), np.log(2.0), 3))
            eq = complex_balanced_equilibrium(net, x0)
            assert eq.max_residual <= 1e-9
            W = np.asarray(stoichiometric_subspace(net).conservation_basis, dtype=float).reshape(-1, 3)
            assert np.all(np.abs(W @ (eq.c - x0)) <= 1e-9)
            _, gap = _converge(net, x0, eq.c)
            assert gap <= 1e-6, (net.rates, x0, gap)


def _report(argv):
    out = io.StringIO()
    code = main(argv, out=out, err=io.StringIO())
    return code, out.getvalue()


def test_criterion_7_persistence_dichotomy(tmp_path):
    decay = tmp_path / "decay.crn"
    decay.write_text("A -> B ; k=1\n")
    with Budget(60.0):
        for seed in range(5):
            out_dir = tmp_path / f"cycle4_{seed}"
            code, _ = _report(["report", "builtin:cycle4", "--seed", str(seed), "--out-dir", str(out_dir)])
            doc = json.loads((out_dir / "report.json").read_text())
            assert code == 0 and doc["verdict"] == "PERSISTENT_CERTIFIED_DESK_SCALE", doc["reasons"]
        code, _ = _report(["report", str(decay), "--x0", "1,1", "--out-dir", str(tmp_path / "decay")])
        doc = json.loads((tmp_path / "decay" / "report.json").read_text())
        assert code == 0 and doc["verdict"] == "BOUNDARY_APPROACH_DETECTED"
        assert doc["boundary_species"] == ["A"]


FIXED_NETWORKS = [
    "A -> B ; k=1\nB -> A ; k=1",
    "A -> B ; k=1",
    "A + B <-> C ; kf=2, kr=0.5",
    "A -> B ; k=1\nB -> A ; k=1\nC -> D ; k=1\nD -> C ; k=1",
    "2 A <-> B ; kf=1, kr=3\nB + C <-> D ; kf=0.7, kr=1.3",
]


def test_criterion_8_conservation_drift():
    rng = np.random.default_rng(8)
    nets = [load_builtin("cycle4"), load_builtin("three_linkage")] + [parse_network(t) for t in FIXED_NETWORKS]
    nets += [random_weakly_reversible(rng) for _ in range(20)]
    worst = 0.0
    with Budget(60.0):
        for net in nets:
            basis = stoichiometric_subspace(net).conservation_basis
            x0 = np.exp(rng.uniform(np.log(0.5), np.log(2.0), net.n_species))
            traj = integrate(net, x0, 100.0, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL)
            for w in basis:
                worst = max(worst, conserved_drift(traj, w))
    assert worst <= 1e-7, worst


def test_criterion_9_tier_oracle():
    rng = np.random.default_rng(9)
    n = np.geomspace(1e2, 1e8, 200)
    with Budget(30.0):
        for _ in range(50):
            N = int(rng.integers(1, 6))
            a = rng.choice(np.arange(0.0, 5.5, 0.5), N, replace=False)
            m = int(rng.integers(2, 9))
            complexes = rng.integers(0, 4, (m, N))
            points = n[:, None] ** (-a[None, :])
            part = partition_along_points(complexes, points)
            scores = complexes @ a
            expected = tuple(tuple(np.nonzero(scores == v)[0].tolist()) for v in np.unique(scores))
            assert part.tiers == expected, (a, complexes, part.tiers)
