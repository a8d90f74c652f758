"""Persistence diagnostic for a single trajectory.

The pipeline checks the structural hypotheses (one linkage class, weak
reversibility), integrates, looks for species approaching zero, and collects
the supporting evidence: reduced network and its projected-rate bounds, tier
partition of the reduced complexes along the tail together with the
respecting-relation search, complex-balanced equilibrium, and the sign of
dV/dt for a family of Lyapunov probes.  The verdict is a desk-scale finding,
never a proof.
"""

from __future__ import annotations

import io
import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from importlib import metadata

import numpy as np
import scipy

from .errors import CRNError
from .kinetics import (
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    DEFAULT_SAMPLES,
    BoundaryDistance,
    RateSchedule,
    Trajectory,
    boundary_distance_series,
    integrate,
)
from .lyapunov import (
    DERIVATIVE_RESOLUTION,
    C1Result,
    c1_monitor,
    complex_balanced_equilibrium,
    default_probes,
    minimal_siphons,
)
from .network import ReactionNetwork, StructuralSummary, structural_summary
from .reduction import bounded_kinetics_certificate, reduce_network
from .tiers import TierParams, find_respecting_relation, log_monomials, partition_along_points

log = logging.getLogger(__name__)

SCHEMA_REPORT = "crnt-persist/report@1"

PERSISTENT = "PERSISTENT_CERTIFIED_DESK_SCALE"
BOUNDARY = "BOUNDARY_APPROACH_DETECTED"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class RunParams:
    """Settings of one diagnostic run; echoed verbatim into the report.

    ``window`` defaults to the second half of the run.  A species is taken
    as approaching the boundary when its trailing minimum is below
    ``boundary_eps`` and its logarithm trends downward over the window.
    """

    t_end: float = 500.0
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    n_samples: int = DEFAULT_SAMPLES
    window: float | None = None
    boundary_eps: float = 1e-6
    bounded_growth: float = 0.05
    omega_tol: float = 1e-6
    split_threshold: float = 3.0
    min_points: int = 32
    flip_budget: float = 0.05
    probe_shells: int = 1
    probe_step: float = 0.1
    resolution: float = DERIVATIVE_RESOLUTION
    seed: int = 0

    def tier_params(self) -> TierParams:
        return TierParams(
            split_threshold=self.split_threshold, min_points=self.min_points, flip_budget=self.flip_budget
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OmegaLimit:
    limit_point: np.ndarray | None
    dispersion: float
    centroid: np.ndarray

    def to_dict(self) -> dict:
        return {
            "limit_point": None if self.limit_point is None else self.limit_point.tolist(),
            "dispersion": self.dispersion,
            "centroid": self.centroid.tolist(),
        }


def omega_limit_estimate(traj: Trajectory, window: float | None = None, tol: float = 1e-6) -> OmegaLimit:
    """Single-point estimate of the omega-limit set from the trailing samples.

    The dispersion is the largest sup-norm distance of a window sample from
    the window centroid.  The centroid is returned as the limit point only
    when the dispersion is at most ``tol * (1 + |centroid|)``.
    """
    tail = traj.states[traj.window_mask(window)]
    centroid = tail.mean(axis=0)
    dispersion = float(np.abs(tail - centroid).max())
    ok = dispersion <= tol * (1.0 + float(np.abs(centroid).max()))
    return OmegaLimit(centroid.copy() if ok else None, dispersion, centroid)


def _versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - running from a source tree
        own = "unknown"
    return {"crnt_persist": own, "numpy": np.__version__, "scipy": scipy.__version__}


def _clean(obj):
    """Make a structure JSON-safe: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class PersistenceReport:
    verdict: str
    reasons: list[str]
    structural: StructuralSummary
    hypotheses: dict
    params: RunParams
    x0: np.ndarray
    network: ReactionNetwork
    trajectory: Trajectory | None = None
    boundary: BoundaryDistance | None = None
    boundary_species: tuple[int, ...] = ()
    omega: OmegaLimit | None = None
    siphons: list = field(default_factory=list)
    reduction: dict | None = None
    bounded_kinetics: dict | None = None
    tier_findings: list = field(default_factory=list)
    tier_series: dict = field(default_factory=dict)
    equilibrium: dict | None = None
    lyapunov: list[C1Result] = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        net = self.network
        traj_stats = None
        if self.trajectory is not None:
            traj_stats = dict(self.boundary.to_dict())
            traj_stats["final_state"] = self.trajectory.final.tolist()
            traj_stats["integrator"] = {k: v for k, v in self.trajectory.meta.items()}
        doc = {
            "schema": SCHEMA_REPORT,
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "network": {"digest": net.digest, "species": list(net.species), "dsl": net.to_dsl()},
            "x0": self.x0.tolist(),
            "structural": self.structural.to_dict(),
            "hypotheses": self.hypotheses,
            "trajectory_stats": traj_stats,
            "boundary_species": [net.species[i] for i in self.boundary_species],
            "omega_limit": None if self.omega is None else self.omega.to_dict(),
            "siphons": self.siphons,
            "reduction": self.reduction,
            "bounded_kinetics": self.bounded_kinetics,
            "tier_findings": self.tier_findings,
            "equilibrium": self.equilibrium,
            "lyapunov_findings": [r.to_dict() for r in self.lyapunov],
            "failures": self.failures,
            "notes": list(self.notes),
            "provenance": {"versions": _versions(), "params": self.params.to_dict(), "seed": self.params.seed},
        }
        return _clean(doc)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent) + "\n"

    def summary_text(self) -> str:
        s = self.structural
        net = self.network
        lines = [
            f"verdict: {self.verdict}",
            f"complexes {s.n}, linkage classes {s.l}, stoichiometric dimension {s.s}, deficiency {s.deficiency}",
            f"weakly reversible: {str(s.weakly_reversible).lower()}",
        ]
        for k, v in self.hypotheses.items():
            lines.append(f"  {k}: {v}")
        if self.boundary is not None:
            lines.append(f"trailing minimum concentration: {self.boundary.trailing_min:.6g}")
        if self.boundary_species:
            lines.append("boundary-approaching species: " + ", ".join(net.species[i] for i in self.boundary_species))
        if self.omega is not None:
            lp = "none" if self.omega.limit_point is None else np.array2string(self.omega.limit_point, precision=8)
            lines.append(f"omega-limit estimate: {lp} (dispersion {self.omega.dispersion:.3g})")
        if self.lyapunov:
            ok = sum(r.eventually_nonincreasing for r in self.lyapunov)
            lines.append(f"Lyapunov probes eventually non-increasing: {ok}/{len(self.lyapunov)}")
        for r in self.reasons:
            lines.append(f"reason: {r}")
        for stage, msg in self.failures.items():
            lines.append(f"failed stage {stage}: {msg}")
        return "\n".join(lines) + "\n"

    def plot_data(self) -> dict[str, str]:
        """CSV text per figure: boundary distance, dV/dt per probe, tier log-ratios."""
        out = {}
        if self.trajectory is not None:
            tr = self.trajectory
            rows = [["t", "min_x"] + list(tr.species)]
            for t, m, x in zip(tr.times, self.boundary.min_values, tr.states):
                rows.append([repr(float(t)), repr(float(m))] + [repr(float(v)) for v in x])
            out["boundary_distance.csv"] = _csv(rows)
        if self.lyapunov:
            rows = [["t"] + [r.label for r in self.lyapunov]]
            for i, t in enumerate(self.trajectory.times):
                rows.append([repr(float(t))] + [repr(float(r.derivatives[i])) for r in self.lyapunov])
            out["lyapunov_derivative.csv"] = _csv(rows)
        if self.tier_series:
            names = sorted(k for k in self.tier_series if k != "t")
            rows = [["t"] + names]
            for i, t in enumerate(self.tier_series["t"]):
                rows.append([repr(float(t))] + [repr(float(self.tier_series[n][i])) for n in names])
            out["tier_ratios.csv"] = _csv(rows)
        return out

    def write_svgs(self, out_dir) -> list[str]:
        """Line plots of the plot data; needs matplotlib (the ``plot`` extra)."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        from pathlib import Path

        matplotlib.rcParams["svg.hashsalt"] = "crnt-persist"
        written = []
        for name, text in self.plot_data().items():
            rows = list(csv.reader(io.StringIO(text)))
            header, data = rows[0], np.array(rows[1:], dtype=float)
            fig, ax = plt.subplots(figsize=(6, 4))
            t = data[:, 0]
            for j, col in enumerate(header[1:], start=1):
                y = data[:, j]
                if name.startswith("boundary"):
                    ax.loglog(t[1:], y[1:], label=col)
                else:
                    ax.semilogx(t[1:], y[1:], label=col)
            ax.set_xlabel("t")
            ax.legend(fontsize=6)
            path = Path(out_dir) / name.replace(".csv", ".svg")
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(str(path))
        return written


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _bounded(traj: Trajectory, window: float | None, growth_tol: float) -> tuple[bool, float]:
    """Largest component should not keep growing over the window."""
    tail = traj.states[traj.window_mask(window)].max(axis=1)
    q = max(1, tail.size // 4)
    growth = float(np.log(tail[-q:].max()) - np.log(tail[:q].max()))
    return growth <= growth_tol, growth


def diagnose(
    net: ReactionNetwork, x0, params: RunParams | None = None, schedule: RateSchedule | None = None
) -> PersistenceReport:
    """Run the persistence pipeline from ``x0`` and synthesize a verdict.

    Stage failures never propagate: they are recorded under ``failures`` and
    force an INCONCLUSIVE verdict.  A failed equilibrium solve is only a note
    because the equilibrium is an optional probe.
    """
    p = params or RunParams()
    x0 = np.asarray(x0, dtype=float)
    s = structural_summary(net)
    hyp = {
        "single_linkage_class": s.l == 1,
        "weakly_reversible": s.weakly_reversible,
        "deficiency_zero": s.deficiency == 0,
        "empirically_bounded": None,
        "omega_limit_dichotomy": "undetermined (checked empirically; not verifiable in general)",
    }
    rep = PersistenceReport(INCONCLUSIVE, [], s, hyp, p, x0, net)

    try:
        rep.siphons = [sp.names(net) for sp in minimal_siphons(net)]
    except CRNError as exc:
        rep.failures["siphons"] = str(exc)

    try:
        traj = integrate(net, x0, p.t_end, rtol=p.rtol, atol=p.atol, schedule=schedule, n_samples=p.n_samples)
    except CRNError as exc:
        rep.failures["integrate"] = f"{type(exc).__name__}: {exc}"
        rep.reasons.append("integration failed")
        return rep
    rep.trajectory = traj
    window = p.window if p.window is not None else 0.5 * p.t_end
    bd = boundary_distance_series(traj, window)
    rep.boundary = bd
    bounded, growth = _bounded(traj, window, p.bounded_growth)
    hyp["empirically_bounded"] = bounded

    U = tuple(
        int(i)
        for i in np.nonzero((bd.species_trailing_min < p.boundary_eps) & (bd.species_log_slope < 0))[0]
    )
    rep.boundary_species = U
    rep.omega = omega_limit_estimate(traj, window, p.omega_tol)
    if rep.omega.limit_point is not None:
        interior = bool(np.all(rep.omega.limit_point > p.boundary_eps))
        hyp["omega_limit_dichotomy"] = (
            ("interior" if interior else "boundary") + " (single limit point; checked empirically)"
        )

    if U:
        _boundary_stages(rep, traj, U, window, p)

    center = rep.omega.limit_point if rep.omega.limit_point is not None else traj.final
    eq = None
    if s.weakly_reversible:
        try:
            res = complex_balanced_equilibrium(net, x0)
            rep.equilibrium = res.to_dict()
            eq = res.c
        except CRNError as exc:
            rep.notes.append(f"equilibrium solve: {type(exc).__name__}: {exc}")
    try:
        probes = default_probes(center, equilibrium=eq, final=traj.final, shells=p.probe_shells, step=p.probe_step)
        rep.lyapunov = c1_monitor(net, traj, probes, window=window, schedule=schedule, resolution=p.resolution)
    except (CRNError, ValueError) as exc:
        rep.failures["lyapunov"] = f"{type(exc).__name__}: {exc}"

    _verdict(rep, bd, bounded, growth)
    return rep


def _boundary_stages(rep: PersistenceReport, traj: Trajectory, U, window, p: RunParams) -> None:
    net = rep.network
    try:
        rs = reduce_network(net, U)
    except CRNError as exc:
        rep.failures["reduce"] = f"{type(exc).__name__}: {exc}"
        return
    rep.reduction = rs.to_dict()
    cert = bounded_kinetics_certificate(rs, traj, window)
    rep.bounded_kinetics = cert.to_dict()

    mask = traj.window_mask(window)
    points = traj.states[mask][:, list(rs.subset)]
    complexes = rs.reduced_net.complex_matrix
    try:
        part = partition_along_points(complexes, points, p.tier_params())
        rel = find_respecting_relation(part, range(len(rs.subset)))
    except CRNError as exc:
        rep.failures["tiers"] = f"{type(exc).__name__}: {exc}"
        return
    except ValueError as exc:
        rep.failures["tiers"] = f"ValueError: {exc}"
        return
    top_is_everything = len(part.tiers) == 1
    rep.tier_findings.append(
        {
            "window_start": float(traj.times[mask][0]),
            "complex_labels": [rs.reduced_net.complex_label(i) for i in range(rs.reduced_net.n_complexes)],
            "partition": part.to_dict(),
            "relation": rel.to_dict(),
            "single_tier": top_is_everything,
        }
    )
    L = log_monomials(complexes, points)
    series = {"t": traj.times[mask]}
    for i, (hi, lo) in enumerate(zip(part.tiers, part.tiers[1:])):
        series[f"T{i + 1}/T{i + 2}"] = L[:, list(hi)].min(axis=1) - L[:, list(lo)].max(axis=1)
    if len(series) > 1:
        rep.tier_series = series


def _verdict(rep: PersistenceReport, bd: BoundaryDistance, bounded: bool, growth: float) -> None:
    h = rep.hypotheses
    p = rep.params
    if rep.failures:
        rep.verdict = INCONCLUSIVE
        rep.reasons.extend(f"stage {k} failed" for k in sorted(rep.failures))
        return
    if rep.boundary_species:
        rep.verdict = BOUNDARY
        names = ", ".join(rep.network.species[i] for i in rep.boundary_species)
        rep.reasons.append(f"species {names} fall below {p.boundary_eps:g} with decreasing trend")
        return
    reasons = []
    if not h["single_linkage_class"]:
        reasons.append("single_linkage_class=false")
    if not h["weakly_reversible"]:
        reasons.append("weakly_reversible=false")
    if not bounded:
        reasons.append(f"empirically_bounded=false (log growth {growth:.3g} over the window)")
    if bd.trailing_min < p.boundary_eps:
        reasons.append(f"trailing minimum {bd.trailing_min:.3g} below {p.boundary_eps:g}")
    bad = [r.label for r in rep.lyapunov if not r.eventually_nonincreasing]
    if bad:
        reasons.append("probes not eventually non-increasing: " + ", ".join(bad))
    if not rep.lyapunov:
        reasons.append("no Lyapunov probes evaluated")
    if reasons:
        rep.verdict = INCONCLUSIVE
        rep.reasons.extend(reasons)
    else:
        rep.verdict = PERSISTENT
        rep.reasons.append("all checkable hypotheses hold at desk scale")
