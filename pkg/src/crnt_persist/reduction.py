"""Reduced networks for a species subset and their projected kinetics.

Restricting every complex to the coordinates in ``U`` gives the reduced
network: reactions that become trivial are dropped, complexes left without
reactions are deleted, and reactions that collapse onto the same reduced pair
are merged.  The species outside ``U`` move into time-dependent rates

    kappa_hat_k(t) = sum_i kappa_i * (x(t)|_{U^c}) ** (z_i|_{U^c}),

summed over the original reactions z_i -> z_i' that reduce to reaction k.
With these rates the reduced system reproduces the U-components of the
original vector field exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EmptyReducedNetwork
from .kinetics import RateSchedule, Trajectory, monomials
from .network import ReactionNetwork, format_complex


@dataclass(frozen=True)
class RateTerm:
    """One summand kappa_i * x_{U^c}^{exponents} of a projected rate."""

    reaction: int
    coefficient: float
    exponents: tuple[int, ...]

    def label(self, complement_names) -> str:
        mono = " * ".join(
            name if e == 1 else f"{name}^{e}" for name, e in zip(complement_names, self.exponents) if e
        )
        return f"k{self.reaction + 1}" + (f" * {mono}" if mono else "")


@dataclass(frozen=True)
class ReducedSystem:
    original: ReactionNetwork
    subset: tuple[int, ...]
    complement: tuple[int, ...]
    reduced_net: ReactionNetwork
    rate_terms: tuple[tuple[RateTerm, ...], ...]
    deleted_complexes: tuple[tuple[int, ...], ...]
    dropped_reactions: tuple[int, ...]

    @property
    def provenance(self) -> tuple[tuple[int, ...], ...]:
        """Original reaction indices merged into each reduced reaction."""
        return tuple(tuple(t.reaction for t in terms) for terms in self.rate_terms)

    @property
    def inactive_species(self) -> tuple[str, ...]:
        return self.reduced_net.inactive_species

    def rates_at(self, x) -> np.ndarray:
        """kappa_hat evaluated at a full-length state (or a stack of states)."""
        xc = np.asarray(x, dtype=float)[..., list(self.complement)]
        out = []
        for terms in self.rate_terms:
            coeffs = np.array([t.coefficient for t in terms])
            expo = np.array([t.exponents for t in terms], dtype=float).reshape(len(terms), len(self.complement))
            mons = monomials(xc, expo)
            out.append(mons @ coeffs)
        return np.stack(out, axis=-1)

    def to_dict(self) -> dict:
        names = self.original.species
        comp_names = [names[i] for i in self.complement]
        return {
            "subset": [names[i] for i in self.subset],
            "complement": comp_names,
            "reduced_dsl": self.reduced_net.to_dsl(),
            "reactions": [self.reduced_net.reaction_label(k) for k in range(self.reduced_net.n_reactions)],
            "rate_terms": [
                [
                    {
                        "reaction": t.reaction,
                        "coefficient": t.coefficient,
                        "exponents": list(t.exponents),
                        "label": t.label(comp_names),
                    }
                    for t in terms
                ]
                for terms in self.rate_terms
            ],
            "provenance": [list(p) for p in self.provenance],
            "deleted_complexes": [
                format_complex(c, [names[i] for i in self.subset]) for c in self.deleted_complexes
            ],
            "dropped_reactions": list(self.dropped_reactions),
            "inactive_species": list(self.inactive_species),
        }


def _resolve_subset(net: ReactionNetwork, subset: Iterable[int | str]) -> tuple[int, ...]:
    idx = set()
    for s in subset:
        if isinstance(s, str):
            if s not in net.species:
                raise ValueError(f"unknown species {s!r}")
            idx.add(net.species.index(s))
        else:
            i = int(s)
            if not 0 <= i < net.n_species:
                raise ValueError(f"species index {i} out of range")
            idx.add(i)
    if not idx:
        raise ValueError("the species subset must be nonempty")
    return tuple(sorted(idx))


def reduce_network(net: ReactionNetwork, subset: Iterable[int | str]) -> ReducedSystem:
    """Reduced network of ``net`` for the species subset (indices or names).

    Raises
    ------
    EmptyReducedNetwork
        Every reaction is trivial on the subset, i.e. x|_U is constant in time.
    """
    keep = _resolve_subset(net, subset)
    comp = tuple(i for i in range(net.n_species) if i not in keep)
    cm = net.complex_matrix
    reduced = {i: tuple(int(v) for v in cm[i, list(keep)]) for i in range(net.n_complexes)}

    order: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    terms: dict[tuple, list[RateTerm]] = {}
    dropped = []
    for k, r in enumerate(net.reactions):
        src, prod = reduced[r.source], reduced[r.product]
        if src == prod:
            dropped.append(k)
            continue
        key = (src, prod)
        if key not in terms:
            order.append(key)
            terms[key] = []
        expo = tuple(int(v) for v in cm[r.source, list(comp)])
        terms[key].append(RateTerm(k, r.rate, expo))

    if not order:
        raise EmptyReducedNetwork(
            "every reaction is trivial on the subset; x restricted to it is constant in time"
        )

    names = tuple(net.species[i] for i in keep)
    triples = [(s, p, sum(t.coefficient for t in terms[(s, p)])) for s, p in order]
    used = {c for s, p in order for c in (s, p)}
    probe = ReactionNetwork.from_reactions(names, triples, inactive_species_allowed=True)
    reduced_net = ReactionNetwork.from_reactions(
        names, triples, inactive_species_allowed=bool(probe.inactive_species)
    )
    deleted = tuple(sorted(set(reduced.values()) - used))
    return ReducedSystem(
        original=net,
        subset=keep,
        complement=comp,
        reduced_net=reduced_net,
        rate_terms=tuple(tuple(terms[key]) for key in order),
        deleted_complexes=deleted,
        dropped_reactions=tuple(dropped),
    )


@dataclass(frozen=True)
class ProjectedRates:
    times: np.ndarray
    values: np.ndarray
    schedule: RateSchedule
    rate_min: np.ndarray
    rate_max: np.ndarray


def projected_rates(rs: ReducedSystem, traj: Trajectory) -> ProjectedRates:
    """kappa_hat_k(t) along the samples of a trajectory of the original network."""
    if traj.states.shape[1] != rs.original.n_species:
        raise ValueError("trajectory does not belong to the original network")
    values = rs.rates_at(traj.states)
    sched = RateSchedule.from_samples(traj.times, values)
    return ProjectedRates(traj.times, values, sched, values.min(axis=0), values.max(axis=0))


@dataclass(frozen=True)
class BoundedKineticsCertificate:
    """Empirical eta with eta < kappa_hat_k(t) < 1/eta over a window, or the reactions preventing one."""

    eta: float | None
    offending: tuple[int, ...]
    rate_min: tuple[float, ...]
    rate_max: tuple[float, ...]
    log_drift: tuple[float, ...]
    window_start: float

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "offending_reactions": list(self.offending),
            "rate_min": list(self.rate_min),
            "rate_max": list(self.rate_max),
            "log_drift": list(self.log_drift),
            "window_start": self.window_start,
        }


def bounded_kinetics_certificate(
    rs: ReducedSystem, traj: Trajectory, window: float | None = None, drift_factor: float = 10.0
) -> BoundedKineticsCertificate:
    """Check that every projected rate stays inside a fixed band over the trailing window.

    A rate counts as unbounded when its logarithm drifts by more than
    ``ln(drift_factor)`` between the first and last quarter of the window,
    i.e. it is heading to 0 or infinity rather than settling.  Otherwise the
    returned ``eta`` is the supremum of admissible values,
    ``min(min kappa_hat, 1 / max kappa_hat)``.
    """
    tail = traj.restrict(traj.window_mask(window))
    values = rs.rates_at(tail.states)
    q = max(1, values.shape[0] // 4)
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    drift = logs[-q:].mean(axis=0) - logs[:q].mean(axis=0)
    lo, hi = values.min(axis=0), values.max(axis=0)
    bad = (~np.isfinite(drift)) | (np.abs(drift) > np.log(drift_factor)) | (lo <= 0)
    offending = tuple(int(k) for k in np.nonzero(bad)[0])
    eta = None if offending else float(min(lo.min(), 1.0 / hi.max()))
    return BoundedKineticsCertificate(
        eta=eta,
        offending=offending,
        rate_min=tuple(float(v) for v in lo),
        rate_max=tuple(float(v) for v in hi),
        log_drift=tuple(float(v) for v in drift),
        window_start=float(tail.times[0]),
    )
