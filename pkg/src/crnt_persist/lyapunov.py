"""Entropy-like Lyapunov functions, complex-balanced equilibria and siphons.

For a reference point xbar > 0,

    V_xbar(x) = sum_i x_i (ln x_i - ln xbar_i - 1) + xbar_i,

extended continuously to the boundary (x ln x = 0 at x = 0).  Along
mass-action trajectories

    dV/dt = sum_k kappa_k x^{y_k} (y_k' - y_k) . (ln x - ln xbar).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import xlogy

from .errors import ExplosionGuard, NotConverged, ResidualTooLarge, SolverFailure
from .kinetics import RateSchedule, Trajectory, integrate, reaction_fluxes
from .network import ReactionNetwork, linkage_classes, stoichiometric_subspace

log = logging.getLogger(__name__)

#: dV/dt values below this fraction of sum_k |term_k| are numerically indistinguishable from 0
DERIVATIVE_RESOLUTION = 1e-6


@dataclass(frozen=True)
class LyapunovProbe:
    """V_xbar for a fixed strictly positive reference point."""

    xbar: np.ndarray
    label: str = ""

    def __post_init__(self):
        xbar = np.array(self.xbar, dtype=float)
        if xbar.ndim != 1 or not np.all(np.isfinite(xbar)) or np.any(xbar <= 0):
            raise ValueError("xbar must be a strictly positive finite vector")
        xbar.setflags(write=False)
        object.__setattr__(self, "xbar", xbar)

    def value(self, x) -> np.ndarray | float:
        return lyapunov_value(self, x)

    def gradient(self, x) -> np.ndarray:
        return np.log(np.asarray(x, dtype=float)) - np.log(self.xbar)


def _xbar(probe) -> np.ndarray:
    return probe.xbar if isinstance(probe, LyapunovProbe) else np.asarray(probe, dtype=float)


def lyapunov_value(probe, x):
    """V_xbar(x) on the closed orthant; works on stacks of states along the last axis."""
    xbar = _xbar(probe)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    out = np.sum(xlogy(x, x) - xlogy(x, xbar) - x + xbar, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def derivative_terms(net: ReactionNetwork, probe, x, t: float = 0.0, schedule: RateSchedule | None = None) -> np.ndarray:
    """Per-reaction contributions kappa_k x^{y_k} (y_k' - y_k) . (ln x - ln xbar)."""
    x = np.asarray(x, dtype=float)
    grad = np.log(x) - np.log(_xbar(probe))
    return reaction_fluxes(net, x, t, schedule) * (grad @ net.reaction_vectors.T)


def lyapunov_derivative(net: ReactionNetwork, probe, x, t: float = 0.0, schedule: RateSchedule | None = None) -> float:
    """dV_xbar/dt at a strictly positive state."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("the state must be strictly positive")
    return float(derivative_terms(net, probe, x, t, schedule).sum())


@dataclass(frozen=True)
class C1Result:
    """dV/dt along a trajectory for one probe.

    ``t_found`` is the earliest sample time after which dV/dt stays at or
    below the resolution floor up to the end of the run (None if the last
    sample already violates it).  ``violations`` lists (t, dV/dt) for window
    samples above the floor.  ``strict`` is True when every window sample
    has dV/dt < 0 exactly.
    """

    label: str
    xbar: tuple[float, ...]
    t_found: float | None
    window_start: float
    violations: tuple[tuple[float, float], ...]
    strict: bool
    derivatives: np.ndarray
    floors: np.ndarray

    @property
    def eventually_nonincreasing(self) -> bool:
        return self.t_found is not None and self.t_found <= self.window_start

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "xbar": list(self.xbar),
            "t_found": self.t_found,
            "window_start": self.window_start,
            "violations": [list(v) for v in self.violations],
            "strict": self.strict,
            "eventually_nonincreasing": self.eventually_nonincreasing,
        }


def c1_monitor(
    net: ReactionNetwork,
    traj: Trajectory,
    probes: Sequence[LyapunovProbe],
    window: float | None = None,
    schedule: RateSchedule | None = None,
    resolution: float = DERIVATIVE_RESOLUTION,
) -> list[C1Result]:
    """Scan dV/dt along the trajectory samples for every probe.

    A sample counts as non-increasing when dV/dt <= resolution * sum_k |term_k|.
    Near an equilibrium the per-reaction terms cancel, so the sign of their
    sum carries no information once it falls below that floor.
    """
    states = traj.states
    if np.any(states <= 0):
        raise ValueError("trajectory must be strictly positive")
    mask = traj.window_mask(window)
    w0 = float(traj.times[mask][0])
    out = []
    for i, probe in enumerate(probes):
        if schedule is None:
            terms = derivative_terms(net, probe, states)
        else:
            terms = np.stack([derivative_terms(net, probe, x, t, schedule) for t, x in zip(traj.times, states)])
        d = terms.sum(axis=-1)
        floor = resolution * np.abs(terms).sum(axis=-1)
        bad = d > floor
        if bad[-1]:
            t_found = None
        else:
            last_bad = np.nonzero(bad)[0]
            t_found = float(traj.times[last_bad[-1] + 1]) if last_bad.size else float(traj.times[0])
        viol = tuple((float(t), float(v)) for t, v, b in zip(traj.times[mask], d[mask], bad[mask]) if b)
        out.append(
            C1Result(
                label=probe.label or f"probe{i}",
                xbar=tuple(float(v) for v in probe.xbar),
                t_found=t_found,
                window_start=w0,
                violations=viol,
                strict=bool(np.all(d[mask] < 0)),
                derivatives=d,
                floors=floor,
            )
        )
    return out


def default_probes(center, equilibrium=None, final=None, shells: int = 1, step: float = 0.1) -> list[LyapunovProbe]:
    """Equilibrium, final point and 2N lattice points center * exp(+-j*step*e_i) per shell j."""
    center = np.asarray(center, dtype=float)
    probes = []
    if equilibrium is not None:
        probes.append(LyapunovProbe(equilibrium, "equilibrium"))
    if final is not None:
        probes.append(LyapunovProbe(final, "final"))
    for j in range(1, shells + 1):
        for i in range(center.size):
            for sign, tag in ((1, "+"), (-1, "-")):
                xb = center.copy()
                xb[i] *= np.exp(sign * j * step)
                probes.append(LyapunovProbe(xb, f"lattice[{j}]{tag}e{i + 1}"))
    return probes


# -- equilibria ------------------------------------------------------------


@dataclass(frozen=True)
class EquilibriumResult:
    c: np.ndarray
    complex_balance_residuals: np.ndarray
    detailed_balance_residuals: dict
    compatibility_offset: float
    method: str
    iterations: int

    @property
    def max_residual(self) -> float:
        return float(np.abs(self.complex_balance_residuals).max())

    def to_dict(self) -> dict:
        return {
            "c": self.c.tolist(),
            "complex_balance_residuals": self.complex_balance_residuals.tolist(),
            "detailed_balance_residuals": dict(self.detailed_balance_residuals),
            "compatibility_offset": self.compatibility_offset,
            "max_residual": self.max_residual,
            "method": self.method,
            "iterations": self.iterations,
        }


def complex_balance_residuals(net: ReactionNetwork, x) -> np.ndarray:
    """(inflow - outflow) / (inflow + outflow) for every complex."""
    flux = reaction_fluxes(net, x)
    inflow = np.bincount(net.product_index, weights=flux, minlength=net.n_complexes)
    outflow = np.bincount(net.source_index, weights=flux, minlength=net.n_complexes)
    total = inflow + outflow
    return np.where(total > 0, (inflow - outflow) / np.where(total > 0, total, 1.0), 0.0)


def detailed_balance_residuals(net: ReactionNetwork, x) -> dict:
    """Normalized imbalance of every reversible pair, keyed by the forward reaction label."""
    flux = reaction_fluxes(net, x)
    index = {(r.source, r.product): k for k, r in enumerate(net.reactions)}
    out = {}
    for k, r in enumerate(net.reactions):
        back = index.get((r.product, r.source))
        if back is not None and k < back:
            out[net.reaction_label(k)] = float((flux[k] - flux[back]) / (flux[k] + flux[back]))
    return out


def _kernel_vector(net: ReactionNetwork, members: list[int]) -> np.ndarray:
    """Positive kernel vector of the kinetic Laplacian restricted to one linkage class."""
    pos = {c: i for i, c in enumerate(members)}
    m = len(members)
    A = np.zeros((m, m))
    for r in net.reactions:
        if r.source in pos:
            s, p = pos[r.source], pos[r.product]
            A[p, s] += r.rate
            A[s, s] -= r.rate
    # replace one balance row by the normalization rho_0 = 1 (rows of A sum to zero)
    M = A.copy()
    M[0, :] = 0.0
    M[0, 0] = 1.0
    rhs = np.zeros(m)
    rhs[0] = 1.0
    rho = np.linalg.lstsq(M, rhs, rcond=None)[0]
    if np.any(rho <= 0) or np.abs(A @ rho).max() > 1e-10 * np.abs(A).max() * np.abs(rho).max():
        raise SolverFailure("linkage class has no positive balanced flux; is the network weakly reversible?")
    return rho


def _some_balanced_point(net: ReactionNetwork, tol: float) -> np.ndarray:
    """A positive complex-balanced point, from ln x . y = ln rho_y + ln lambda_theta."""
    classes = linkage_classes(net)
    Y = net.complex_matrix.astype(float)
    l = len(classes)
    A = np.zeros((net.n_complexes, net.n_species + l))
    b = np.zeros(net.n_complexes)
    for th, members in enumerate(classes):
        rho = _kernel_vector(net, members)
        for j, c in enumerate(members):
            A[c, : net.n_species] = Y[c]
            A[c, net.n_species + th] = -1.0
            b[c] = np.log(rho[j])
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    resid = np.abs(A @ sol - b).max()
    if resid > 1e3 * tol * max(1.0, np.abs(b).max()):
        raise ResidualTooLarge(
            f"no complex-balanced equilibrium for these rates (log-balance residual {resid:.3g})"
        )
    return np.exp(sol[: net.n_species])


def _birch_point(cstar: np.ndarray, W: np.ndarray, x0: np.ndarray, max_iter: int) -> tuple[np.ndarray, int, bool]:
    """x = cstar * exp(W^T mu) with W x = W x0, by damped Newton on the convex dual."""
    target = W @ x0
    mu = np.zeros(W.shape[0])

    def phi(m):
        return float(np.sum(cstar * np.exp(W.T @ m)) - m @ target)

    scale = max(1.0, float(np.abs(target).max()), float(np.abs(W).sum(axis=0) @ x0))
    for it in range(1, max_iter + 1):
        x = cstar * np.exp(W.T @ mu)
        g = W @ x - target
        if np.abs(g).max() <= 1e-14 * scale:
            return x, it, True
        H = (W * x) @ W.T
        step = np.linalg.solve(H, -g)
        f0, lam = phi(mu), 1.0
        while lam > 1e-12 and not phi(mu + lam * step) <= f0 + 1e-4 * lam * (g @ step):
            lam *= 0.5
        if lam <= 1e-12:
            # no further decrease at double precision
            return cstar * np.exp(W.T @ mu), it, np.abs(g).max() <= 1e-10 * scale
        mu = mu + lam * step
    x = cstar * np.exp(W.T @ mu)
    return x, max_iter, np.abs(W @ x - target).max() <= 1e-10 * scale


def complex_balanced_equilibrium(
    net: ReactionNetwork, x0, tol: float = 1e-9, max_iter: int = 200, fallback_t_end: float = 1e4
) -> EquilibriumResult:
    """The complex-balanced equilibrium in the compatibility class of ``x0``.

    One balanced point c* is built from the kernel of the kinetic Laplacian of
    each linkage class.  All balanced points are then c* * exp(v) with v
    orthogonal to the stoichiometric subspace, and the one in the class of x0
    minimizes V_{c*} over that class; its dual multipliers are found by damped
    Newton.  If Newton stalls, a long integration from x0 is used instead.

    Raises
    ------
    ResidualTooLarge
        Some normalized complex residual exceeds ``tol``; the rates probably
        admit no complex-balanced equilibrium.
    NotConverged
        Neither Newton nor the integration fallback reached the class.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (net.n_species,) or np.any(x0 <= 0):
        raise ValueError("x0 must be a strictly positive vector of the right length")
    cstar = _some_balanced_point(net, tol)
    sub = stoichiometric_subspace(net)
    W = np.asarray(sub.conservation_basis, dtype=float).reshape(-1, net.n_species)

    method = "newton"
    if W.shape[0] == 0:
        c, iters, ok = cstar, 0, True
    else:
        c, iters, ok = _birch_point(cstar, W, x0, max_iter)
    if not ok:
        log.info("Newton stalled after %d iterations; falling back to integration", iters)
        method = "integration"
        c = integrate(net, x0, fallback_t_end, rtol=1e-12, atol=1e-14, n_samples=64).final
        iters = 0

    resid = complex_balance_residuals(net, c)
    offset = float(np.linalg.norm(W @ (c - x0))) if W.shape[0] else 0.0
    result = EquilibriumResult(
        c=c,
        complex_balance_residuals=resid,
        detailed_balance_residuals=detailed_balance_residuals(net, c),
        compatibility_offset=offset,
        method=method,
        iterations=iters,
    )
    if result.max_residual > tol:
        raise ResidualTooLarge(f"normalized complex-balance residual {result.max_residual:.3g} exceeds {tol:g}")
    if offset > tol * max(1.0, float(np.linalg.norm(x0))):
        raise NotConverged(f"equilibrium is off the compatibility class by {offset:.3g}")
    return result


# -- siphons -----------------------------------------------------------------


@dataclass(frozen=True)
class Siphon:
    species: tuple[int, ...]
    minimal: bool = True

    def names(self, net: ReactionNetwork) -> list[str]:
        return [net.species[i] for i in self.species]


def is_siphon(net: ReactionNetwork, subset) -> bool:
    """Every reaction producing a species of the subset consumes one."""
    W = np.zeros(net.n_species, dtype=bool)
    W[list(subset)] = True
    if not W.any():
        return False
    cm = net.complex_matrix > 0
    for r in net.reactions:
        if (cm[r.product] & W).any() and not (cm[r.source] & W).any():
            return False
    return True


def minimal_siphons(net: ReactionNetwork, cap: int = 100_000) -> list[Siphon]:
    """All minimal siphons, by branching on a violated reaction's source species.

    Starting from each single species, a reaction that produces a member but
    consumes none forces one of its source species into the set; each choice
    is a branch.  Visited sets are memoized.

    Raises
    ------
    ExplosionGuard
        More than ``cap`` candidate sets were explored.
    """
    cm = net.complex_matrix > 0
    members = [frozenset(np.nonzero(row)[0].tolist()) for row in cm]
    rxns = [(members[r.source], members[r.product]) for r in net.reactions]
    seen: set[frozenset] = set()
    found: set[frozenset] = set()

    stack = [frozenset([i]) for i in range(net.n_species)]
    while stack:
        W = stack.pop()
        if W in seen:
            continue
        seen.add(W)
        if len(seen) > cap:
            raise ExplosionGuard(f"siphon search explored more than {cap} sets")
        if any(f <= W for f in found):
            continue
        violated = next((src for src, prod in rxns if prod & W and not src & W), None)
        if violated is None:
            found.add(W)
            continue
        for s in sorted(violated):
            stack.append(W | {s})

    minimal = [f for f in found if not any(g < f for g in found)]
    return [Siphon(tuple(sorted(f))) for f in sorted(minimal, key=lambda f: (len(f), sorted(f)))]
