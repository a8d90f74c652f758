"""Tier partitions of complexes along point sequences and tier-respecting conservation relations.

Along a sequence x_n the monomials x_n^y of a set of complexes separate into
tiers: inside a tier all ratios stay within a constant factor, while every
monomial of a higher tier eventually dominates every monomial of a lower tier
by an unbounded factor.  At finite scale this is decided on the trailing half
of the supplied points with explicit thresholds (:class:`TierParams`).

Given a partition and a species subset U, a *respecting* conservation
relation is a non-negative w supported exactly on U with w . (y_j - y_l) = 0
for all complexes y_j, y_l in a common tier.  By Stiemke's theorem of the
alternative, either such a w exists or some combination of the restricted
difference vectors is <= 0 componentwise with one strict entry.  Both sides
are solved as linear programs and each answer is re-checked arithmetically.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import SolverFailure, UnstableOrdering

RELATION = "RELATION"
ALTERNATIVE = "ALTERNATIVE"


@dataclass(frozen=True)
class TierParams:
    """Finite-scale thresholds for :func:`partition_along_points`.

    Attributes
    ----------
    split_threshold
        Minimum log-ratio between adjacent complexes, over the whole window,
        for a cut (3.0 is a factor of about 20).
    min_points
        Fewest points accepted.
    flip_budget
        Largest fraction of window points allowed to contradict the tier order.
    min_growth
        Increase of the log-ratio between the first and last quarter of the
        window required to call a gap diverging rather than merely large.
    tie_tol
        Log-ratio differences below this count as ties, not flips.
    final_fraction
        Fraction of trailing points averaged to order the complexes.
    """

    split_threshold: float = 3.0
    min_points: int = 32
    flip_budget: float = 0.05
    min_growth: float = 0.1
    tie_tol: float = 1e-9
    final_fraction: float = 0.1


@dataclass(frozen=True)
class TierPartition:
    """Ordered tiers T_1 > T_2 > ... of complex indices (T_1 holds the largest monomials)."""

    complexes: tuple[tuple[int, ...], ...]
    tiers: tuple[tuple[int, ...], ...]
    c_comp: float
    witness_points: tuple[int, ...]
    separation_stats: tuple[dict, ...]
    window_start: int
    n_flips: int
    params: TierParams = field(default_factory=TierParams)

    @property
    def n_species(self) -> int:
        return len(self.complexes[0]) if self.complexes else 0

    def tier_of(self) -> list[int]:
        out = [0] * len(self.complexes)
        for t, members in enumerate(self.tiers):
            for j in members:
                out[j] = t
        return out

    def to_dict(self) -> dict:
        return {
            "complexes": [list(c) for c in self.complexes],
            "tiers": [list(t) for t in self.tiers],
            "c_comp": self.c_comp,
            "witness_points": list(self.witness_points),
            "separation_stats": list(self.separation_stats),
            "window_start": self.window_start,
            "n_flips": self.n_flips,
            "params": asdict(self.params),
        }


def log_monomials(complexes, points) -> np.ndarray:
    """ln(x_n^y) = y . ln(x_n), one row per point and one column per complex."""
    Y = np.asarray(complexes, dtype=float)
    X = np.asarray(points, dtype=float)
    return np.log(X) @ Y.T


def partition_along_points(complexes, points, params: TierParams | None = None) -> TierPartition:
    """Tier partition of ``complexes`` along the sequence ``points``.

    Complexes are ordered by their mean log-monomial over the final points.
    Adjacent complexes in that order are cut into different tiers when their
    log-ratio exceeds ``split_threshold`` throughout the trailing half of the
    points and grows across it.  ``c_comp`` is the tightest constant bounding
    every within-tier ratio over the witness points.

    Raises
    ------
    UnstableOrdering
        More than ``flip_budget`` of the window points put some pair of tiers
        in the wrong order.
    """
    p = params or TierParams()
    Y = np.atleast_2d(np.asarray(complexes, dtype=int))
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[0] < p.min_points:
        raise ValueError(f"need at least {p.min_points} points, got {X.shape[0]}")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("points and complexes have different lengths")
    if not np.all(np.isfinite(X)) or np.any(X <= 0):
        raise ValueError("points must be strictly positive and finite")

    L = log_monomials(Y, X)
    m = X.shape[0]
    start = m // 2
    W = L[start:]
    n_final = max(1, int(round(p.final_fraction * m)))
    level = L[-n_final:].mean(axis=0)
    order = sorted(range(Y.shape[0]), key=lambda j: (-level[j], tuple(Y[j])))

    q = max(1, W.shape[0] // 4)
    tiers: list[list[int]] = [[order[0]]]
    for a, b in zip(order, order[1:]):
        gap = W[:, a] - W[:, b]
        growth = gap[-q:].mean() - gap[:q].mean()
        if gap.min() > p.split_threshold and growth > p.min_growth:
            tiers.append([b])
        else:
            tiers[-1].append(b)

    flips = np.zeros(W.shape[0], dtype=bool)
    stats = []
    for hi, lo in zip(tiers, tiers[1:]):
        sep = W[:, hi].min(axis=1) - W[:, lo].max(axis=1)
        flips |= sep < -p.tie_tol
        stats.append(
            {
                "min_log_ratio": float(sep.min()),
                "final_log_ratio": float(sep[-1]),
                "growth": float(sep[-q:].mean() - sep[:q].mean()),
            }
        )
    n_flips = int(flips.sum())
    if n_flips > p.flip_budget * W.shape[0]:
        raise UnstableOrdering(
            f"tier order contradicted at {n_flips} of {W.shape[0]} window points; use a later or longer window"
        )
    witness = np.nonzero(~flips)[0] + start

    spread = 0.0
    for t in tiers:
        if len(t) > 1:
            block = L[witness][:, t]
            spread = max(spread, float((block.max(axis=1) - block.min(axis=1)).max()))
    c_comp = max(float(np.exp(spread)), float(np.nextafter(1.0, 2.0)))

    return TierPartition(
        complexes=tuple(tuple(int(v) for v in row) for row in Y),
        tiers=tuple(tuple(sorted(t)) for t in tiers),
        c_comp=c_comp,
        witness_points=tuple(int(i) for i in witness),
        separation_stats=tuple(stats),
        window_start=int(start),
        n_flips=n_flips,
        params=p,
    )


def partition_from_tiers(complexes, tiers: Sequence[Iterable[int]]) -> TierPartition:
    """Wrap a known tier structure (for relation queries without point data)."""
    Y = tuple(tuple(int(v) for v in row) for row in np.atleast_2d(np.asarray(complexes, dtype=int)))
    groups = tuple(tuple(sorted(int(j) for j in t)) for t in tiers)
    seen = sorted(j for t in groups for j in t)
    if seen != list(range(len(Y))):
        raise ValueError("tiers must partition the complex indices")
    return TierPartition(Y, groups, float(np.nextafter(1.0, 2.0)), (), (), 0, 0)


@dataclass(frozen=True)
class RespectingRelation:
    """Outcome of the Stiemke alternative for a tier partition and a support set.

    ``kind`` is RELATION (``w`` holds the relation, supported exactly on
    ``support``) or ALTERNATIVE (``alpha`` weights the difference vectors in
    ``vectors`` so that their U-restricted combination is <= 0 with a
    strictly negative entry at ``strict_index``).
    """

    kind: str
    support: tuple[int, ...]
    w: tuple[float, ...] | None
    alpha: tuple[float, ...] | None
    strict_index: int | None
    vectors: tuple[tuple[int, ...], ...]
    exact: bool

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "support": list(self.support),
            "w": None if self.w is None else list(self.w),
            "alpha": None if self.alpha is None else list(self.alpha),
            "strict_index": self.strict_index,
            "difference_vectors": [list(v) for v in self.vectors],
            "exact": self.exact,
        }


def tier_difference_vectors(partition: TierPartition) -> list[tuple[int, ...]]:
    """y_j - y_first for every non-first member j of every tier; zero vectors dropped."""
    out = []
    for t in partition.tiers:
        base = partition.complexes[t[0]]
        for j in t[1:]:
            v = tuple(a - b for a, b in zip(partition.complexes[j], base))
            if any(v):
                out.append(v)
    return out


def _snap(values: np.ndarray, max_den: int = 10_000) -> list[Fraction]:
    return [Fraction(float(v)).limit_denominator(max_den) for v in values]


def stiemke_certificate(vectors: Sequence[Sequence[int]], n_coords: int, tol: float = 1e-9) -> tuple:
    """Decide whether {w >= 1 : V w = 0} or {alpha : V^T alpha <= 0, sum < 0} is feasible.

    ``vectors`` are the rows of V (already restricted to the support
    coordinates).  Returns ``(kind, w, alpha, exact)``.

    Raises
    ------
    SolverFailure
        Both or neither side verified, which can only be numerical trouble.
    """
    V = np.array([list(v) for v in vectors], dtype=float).reshape(-1, n_coords)
    V = V[np.any(V != 0, axis=1)]
    scale = max(1.0, float(np.abs(V).max(initial=0.0)))

    if V.shape[0] == 0:
        return RELATION, np.ones(n_coords), None, True

    rel = linprog(
        np.ones(n_coords),
        A_eq=V,
        b_eq=np.zeros(V.shape[0]),
        bounds=[(1.0, None)] * n_coords,
        method="highs",
    )
    w = None
    if rel.status == 0:
        cand = np.asarray(rel.x)
        if cand.min() >= 1.0 - tol and np.abs(V @ cand).max() <= tol * scale * max(1.0, cand.max()):
            w = cand
    elif rel.status not in (2,):
        raise SolverFailure(f"relation LP failed: {rel.message}")

    m = V.shape[0]
    alt = linprog(
        np.zeros(m),
        A_ub=np.vstack([V.T, V.sum(axis=1)[None, :]]),
        b_ub=np.concatenate([np.zeros(n_coords), [-1.0]]),
        bounds=[(None, None)] * m,
        method="highs",
    )
    alpha = None
    if alt.status == 0:
        cand = np.asarray(alt.x)
        combo = V.T @ cand
        amp = tol * scale * max(1.0, np.abs(cand).max())
        if combo.max() <= amp and combo.min() < -amp:
            alpha = cand
    elif alt.status not in (2,):
        raise SolverFailure(f"alternative LP failed: {alt.message}")

    if (w is None) == (alpha is None):
        raise SolverFailure("the two sides of the alternative disagree; the instance is numerically degenerate")

    Vi = [[int(round(v)) for v in row] for row in V]
    if w is not None:
        fw = _snap(w)
        exact = all(x > 0 for x in fw) and all(sum(a * b for a, b in zip(row, fw)) == 0 for row in Vi)
        if exact:
            w = np.array([float(x) for x in fw])
        return RELATION, w, None, exact
    fa = _snap(alpha)
    combo = [sum(fa[k] * Vi[k][i] for k in range(m)) for i in range(n_coords)]
    exact = all(c <= 0 for c in combo) and any(c < 0 for c in combo)
    if exact:
        alpha = np.array([float(x) for x in fa])
    return ALTERNATIVE, None, alpha, exact


def find_respecting_relation(partition: TierPartition, U: Iterable[int]) -> RespectingRelation:
    """Conservation relation supported exactly on ``U`` that respects the tiers, or the Stiemke alternative.

    The support condition w_i > 0 on U is imposed as w_i >= 1 (relations
    are scale invariant) and w_i = 0 off U.  Infeasibility is returned as an
    ALTERNATIVE certificate, not raised.
    """
    support = tuple(sorted(set(int(i) for i in U)))
    N = partition.n_species
    if not support:
        raise ValueError("U must be nonempty")
    if support[0] < 0 or support[-1] >= N:
        raise ValueError("U refers to species outside the complexes")
    full = tier_difference_vectors(partition)
    restricted = [tuple(v[i] for i in support) for v in full]
    kept = [(f, r) for f, r in zip(full, restricted) if any(r)]
    vectors = tuple(r for _, r in kept)
    kind, w_u, alpha, exact = stiemke_certificate(vectors, len(support))

    if kind == RELATION:
        w = np.zeros(N)
        w[list(support)] = w_u
        return RespectingRelation(RELATION, support, tuple(float(v) for v in w), None, None, vectors, exact)
    combo = np.asarray(vectors, dtype=float).T @ alpha
    strict = int(support[int(np.argmin(combo))])
    return RespectingRelation(
        ALTERNATIVE, support, None, tuple(float(a) for a in alpha), strict, vectors, exact
    )


@dataclass(frozen=True)
class BoundaryConservationCheck:
    """Tier partition and respecting relation for a sequence approaching a boundary point z."""

    support: tuple[int, ...]
    partition: TierPartition
    relation: RespectingRelation

    @property
    def consistent(self) -> bool:
        """A respecting relation must exist for a sequence that has reached its asymptotic regime."""
        return self.relation.kind == RELATION

    def to_dict(self) -> dict:
        return {
            "support": list(self.support),
            "partition": self.partition.to_dict(),
            "relation": self.relation.to_dict(),
            "consistent": self.consistent,
            "advice": None
            if self.consistent
            else "no respecting relation: the points are not yet asymptotic; use a later or longer window",
        }


def check_boundary_conservation(
    complexes, points, z, params: TierParams | None = None, zero_tol: float = 0.0
) -> BoundaryConservationCheck:
    """Partition ``complexes`` along ``points`` and look for a relation supported on the zero set of ``z``.

    For points converging to a boundary point z, a conservation relation
    supported on U(z) = {i : z_i = 0} that respects the tier partition always
    exists in the limit.  A missing relation therefore signals that the finite
    sequence has not reached its asymptotic regime.
    """
    z = np.asarray(z, dtype=float)
    U = tuple(int(i) for i in np.nonzero(z <= zero_tol)[0])
    if not U:
        raise ValueError("z has no zero coordinates; it is not a boundary point")
    part = partition_along_points(complexes, points, params)
    return BoundaryConservationCheck(U, part, find_respecting_relation(part, U))
