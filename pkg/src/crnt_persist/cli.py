"""Command-line interface: ``crnt-persist <command> NETWORK [options]``.

Exit codes
----------
0   success
2   network file could not be parsed (message carries line/column)
3   internal error (a bug)
4   integration failure
5   empty reduced network
6   equilibrium or LP solver failure
7   unstable tier ordering
8   enumeration cap exceeded
9   invalid input (bad option values, unreadable file, structural violation)
64  command-line usage error

NETWORK is a path to a DSL or JSON file, or ``builtin:<name>`` for a network
shipped with the package (``builtin:cycle4``, ``builtin:three_linkage``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import errors
from .kinetics import DEFAULT_ATOL, DEFAULT_RTOL, boundary_distance_series, integrate
from .lyapunov import c1_monitor, complex_balanced_equilibrium, default_probes, minimal_siphons
from .network import ReactionNetwork, load_network, parse_network, structural_summary
from .reduction import bounded_kinetics_certificate, reduce_network
from .report import RunParams, diagnose, omega_limit_estimate
from .tiers import TierParams, find_respecting_relation, log_monomials, partition_along_points

log = logging.getLogger("crnt_persist")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INTERNAL = 3
EXIT_INTEGRATION = 4
EXIT_REDUCTION = 5
EXIT_SOLVER = 6
EXIT_TIERS = 7
EXIT_GUARD = 8
EXIT_INPUT = 9
EXIT_USAGE = 64

_EXIT_BY_ERROR = [
    (errors.ParseError, EXIT_PARSE),
    (errors.IntegrationError, EXIT_INTEGRATION),
    (errors.EmptyReducedNetwork, EXIT_REDUCTION),
    (errors.SolverFailure, EXIT_SOLVER),
    (errors.UnstableOrdering, EXIT_TIERS),
    (errors.ExplosionGuard, EXIT_GUARD),
    (errors.CRNError, EXIT_INPUT),
    (ValueError, EXIT_INPUT),
    (OSError, EXIT_INPUT),
]

DEFAULT_T_END = {"simulate": 100.0, "tiers": 500.0, "certify": 500.0, "report": 500.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which is reserved for parse errors
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("network", help="DSL/JSON network file or builtin:<name>")
    common.add_argument("--out-dir", type=Path, default=None, help="directory for JSON/CSV/SVG artifacts")
    common.add_argument("--json-errors", action="store_true", help="report errors on stderr as JSON")
    common.add_argument("--config-echo", action="store_true", help="print the resolved configuration as JSON")
    common.add_argument("--config", type=Path, default=None, help="JSON configuration (as echoed) to replay")
    common.add_argument("--allow-inactive", action="store_true", help="accept species that appear in no complex")

    dyn = argparse.ArgumentParser(add_help=False)
    dyn.add_argument("--x0", type=_floats, default=None, help="initial state, comma separated (default: random)")
    dyn.add_argument("--t-end", type=float, default=None, help="final time")
    dyn.add_argument("--tol-rel", type=float, default=DEFAULT_RTOL, help="relative tolerance (default 1e-8)")
    dyn.add_argument("--tol-abs", type=float, default=DEFAULT_ATOL, help="absolute tolerance (default 1e-10)")
    dyn.add_argument("--seed", type=int, default=0, help="seed for the random default x0 (default 0)")
    dyn.add_argument("--window", type=float, default=None, help="trailing analysis window (default t_end/2)")

    tier = argparse.ArgumentParser(add_help=False)
    tier.add_argument("--split-threshold", type=float, default=3.0, help="tier cut log-ratio (default 3.0)")
    tier.add_argument("--keep", type=_names, default=None, help="species subset U, comma separated")

    probes = argparse.ArgumentParser(add_help=False)
    probes.add_argument("--probes", type=int, default=1, help="lattice shells of Lyapunov probes (default 1)")

    p = _Parser(prog="crnt-persist", description="Reaction-network persistence diagnostics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("analyze", parents=[common], help="structural invariants")
    sub.add_parser("simulate", parents=[common, dyn], help="integrate and export the trajectory")
    sub.add_parser("reduce", parents=[common, tier], help="reduced network for --keep")
    sub.add_parser("tiers", parents=[common, dyn, tier], help="tier partition of the trajectory tail")
    sub.add_parser("certify", parents=[common, dyn, tier, probes], help="equilibrium, siphons, Lyapunov monitor")
    sub.add_parser("report", parents=[common, dyn, tier, probes], help="full persistence diagnostic")
    return p


# -- helpers ------------------------------------------------------------------


def _load(source: str, allow_inactive: bool) -> ReactionNetwork:
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        res = resources.files("crnt_persist") / "data" / f"{name}.crn"
        if not res.is_file():
            raise ValueError(f"no builtin network {name!r}")
        return parse_network(res.read_text(encoding="utf-8"), allow_inactive=allow_inactive)
    path = Path(source)
    if path.suffix == ".json" or not allow_inactive:
        return load_network(path)
    return parse_network(path.read_text(encoding="utf-8"), allow_inactive=True)


def _config(args) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("config", "config_echo")}
    return dict(sorted(cfg.items()))


def _apply_config(args, parser) -> None:
    """Values from --config fill every option left at its default."""
    if args.config is None:
        return
    saved = json.loads(Path(args.config).read_text(encoding="utf-8"))
    defaults = vars(parser.parse_args([args.command, args.network]))
    for key, value in saved.items():
        if key in ("command", "network", "config"):
            continue
        if hasattr(args, key) and getattr(args, key) == defaults.get(key):
            if key == "out_dir" and value is not None:
                value = Path(value)
            setattr(args, key, value)


def _x0(args, net: ReactionNetwork) -> np.ndarray:
    if args.x0 is None:
        rng = np.random.default_rng(args.seed)
        x0 = np.exp(rng.uniform(np.log(0.5), np.log(2.0), net.n_species))
        args.x0 = [float(v) for v in x0]
    x0 = np.asarray(args.x0, dtype=float)
    if x0.shape != (net.n_species,):
        raise ValueError(f"--x0 needs {net.n_species} values (species {', '.join(net.species)})")
    return x0


def _t_end(args) -> float:
    if args.t_end is None:
        args.t_end = DEFAULT_T_END[args.command]
    if args.t_end < 0:
        raise ValueError("--t-end must be non-negative")
    return args.t_end


def _write(out_dir: Path | None, name: str, text: str) -> None:
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text, encoding="utf-8")


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _subset(net: ReactionNetwork, names) -> list[int]:
    missing = [n for n in names if n not in net.species]
    if missing:
        raise ValueError("unknown species in --keep: " + ", ".join(missing))
    return [net.species.index(n) for n in names]


def _linear_form(w, names) -> str:
    text = ""
    for c, n in zip(w, names):
        if not c:
            continue
        term = n if abs(c) == 1 else f"{abs(c)} {n}"
        text += (" - " if c < 0 else " + ") + term if text else ("-" if c < 0 else "") + term
    return text


# -- commands -------------------------------------------------------------------


def cmd_analyze(args, net: ReactionNetwork, out) -> int:
    s = structural_summary(net)
    doc = {"species": list(net.species), "structure": s.to_dict(), "siphons": [sp.names(net) for sp in minimal_siphons(net)]}
    _write(args.out_dir, "structure.json", _dump(doc))
    out.write(f"species: {' '.join(net.species)}\n")
    out.write(f"complexes: {s.n}\n")
    out.write(f"linkage classes: {s.l}\n")
    out.write(f"stoichiometric dimension: {s.s}\n")
    out.write(f"deficiency: {s.deficiency}\n")
    out.write(f"weakly reversible: {str(s.weakly_reversible).lower()}\n")
    for w in s.integer_conservation_laws:
        out.write(f"conservation law: {_linear_form(w, net.species)}\n")
    out.write("minimal siphons: " + "; ".join("{" + ", ".join(x) + "}" for x in doc["siphons"]) + "\n")
    return EXIT_OK


def cmd_simulate(args, net: ReactionNetwork, out) -> int:
    x0 = _x0(args, net)
    traj = integrate(net, x0, _t_end(args), rtol=args.tol_rel, atol=args.tol_abs)
    traj.meta["seed"] = args.seed
    _write(args.out_dir, "trajectory.csv", traj.to_csv())
    _write(args.out_dir, "trajectory.json", traj.to_json() + "\n")
    if args.out_dir is None:
        out.write(traj.to_csv())
    else:
        out.write(f"{len(traj)} samples to t={traj.t_end:g}; final state {traj.final.tolist()}\n")
    return EXIT_OK


def cmd_reduce(args, net: ReactionNetwork, out) -> int:
    if not args.keep:
        raise ValueError("reduce needs --keep")
    rs = reduce_network(net, args.keep)
    doc = rs.to_dict()
    _write(args.out_dir, "reduced.json", _dump(doc))
    out.write(doc["reduced_dsl"])
    for label, terms in zip(doc["reactions"], doc["rate_terms"]):
        out.write(f"# rate of {label}: " + " + ".join(t["label"] for t in terms) + "\n")
    for c in doc["deleted_complexes"]:
        out.write(f"# deleted complex: {c}\n")
    return EXIT_OK


def cmd_tiers(args, net: ReactionNetwork, out) -> int:
    x0 = _x0(args, net)
    t_end = _t_end(args)
    traj = integrate(net, x0, t_end, rtol=args.tol_rel, atol=args.tol_abs)
    window = args.window if args.window is not None else 0.5 * t_end
    if args.keep:
        U = _subset(net, args.keep)
    else:
        bd = boundary_distance_series(traj, window)
        U = [int(i) for i in np.nonzero((bd.species_trailing_min < 1e-6) & (bd.species_log_slope < 0))[0]]
    mask = traj.window_mask(window)
    part = partition_along_points(net.complex_matrix, traj.states[mask], TierParams(split_threshold=args.split_threshold))
    doc = {
        "complex_labels": [net.complex_label(i) for i in range(net.n_complexes)],
        "partition": part.to_dict(),
        "support": [net.species[i] for i in U],
        "relation": find_respecting_relation(part, U).to_dict() if U else None,
    }
    _write(args.out_dir, "tiers.json", _dump(doc))
    if len(part.tiers) > 1:
        L = log_monomials(net.complex_matrix, traj.states[mask])
        rows = [["t"] + [f"T{i + 1}/T{i + 2}" for i in range(len(part.tiers) - 1)]]
        for t, row in zip(traj.times[mask], L):
            rows.append([repr(float(t))] + [
                repr(float(row[list(hi)].min() - row[list(lo)].max())) for hi, lo in zip(part.tiers, part.tiers[1:])
            ])
        _write(args.out_dir, "tier_ratios.csv", "".join(",".join(r) + "\n" for r in rows))
    for i, t in enumerate(part.tiers):
        out.write(f"T{i + 1}: " + ", ".join(doc["complex_labels"][j] for j in t) + "\n")
    out.write(f"C_comp: {part.c_comp:.6g}\n")
    if doc["relation"] is not None:
        out.write(f"relation on {{{', '.join(doc['support'])}}}: {doc['relation']['kind']}\n")
    return EXIT_OK


def cmd_certify(args, net: ReactionNetwork, out) -> int:
    x0 = _x0(args, net)
    t_end = _t_end(args)
    doc: dict = {"siphons": [sp.names(net) for sp in minimal_siphons(net)]}
    eq = complex_balanced_equilibrium(net, x0)
    doc["equilibrium"] = eq.to_dict()
    traj = integrate(net, x0, t_end, rtol=args.tol_rel, atol=args.tol_abs)
    window = args.window if args.window is not None else 0.5 * t_end
    omega = omega_limit_estimate(traj, window)
    center = omega.limit_point if omega.limit_point is not None else traj.final
    probes = default_probes(center, equilibrium=eq.c, final=traj.final, shells=args.probes)
    doc["lyapunov"] = [r.to_dict() for r in c1_monitor(net, traj, probes, window=window)]
    if args.keep:
        rs = reduce_network(net, args.keep)
        doc["bounded_kinetics"] = bounded_kinetics_certificate(rs, traj, window).to_dict()
    _write(args.out_dir, "certificates.json", _dump(doc))
    out.write(f"equilibrium: {eq.c.tolist()} (max residual {eq.max_residual:.3g})\n")
    ok = sum(r["eventually_nonincreasing"] for r in doc["lyapunov"])
    out.write(f"Lyapunov probes eventually non-increasing: {ok}/{len(doc['lyapunov'])}\n")
    if "bounded_kinetics" in doc:
        out.write(f"bounded kinetics eta: {doc['bounded_kinetics']['eta']}\n")
    return EXIT_OK


def cmd_report(args, net: ReactionNetwork, out) -> int:
    x0 = _x0(args, net)
    params = replace(
        RunParams(),
        t_end=_t_end(args),
        rtol=args.tol_rel,
        atol=args.tol_abs,
        window=args.window,
        split_threshold=args.split_threshold,
        probe_shells=args.probes,
        seed=args.seed,
    )
    rep = diagnose(net, x0, params)
    _write(args.out_dir, "report.json", rep.to_json())
    _write(args.out_dir, "summary.txt", rep.summary_text())
    for name, text in rep.plot_data().items():
        _write(args.out_dir, name, text)
    if args.out_dir is not None:
        try:
            rep.write_svgs(args.out_dir)
        except ImportError:
            log.info("matplotlib not installed; skipping SVG output")
    out.write(rep.summary_text())
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "reduce": cmd_reduce,
    "tiers": cmd_tiers,
    "certify": cmd_certify,
    "report": cmd_report,
}


def _report_error(exc: BaseException, code: int, as_json: bool, err) -> None:
    if as_json:
        doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        if isinstance(exc, errors.ParseError):
            doc.update(line=exc.line, column=exc.column)
        err.write(json.dumps(doc, sort_keys=True) + "\n")
    else:
        err.write(f"crnt-persist: {type(exc).__name__}: {exc}\n")


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    logging.basicConfig(level=os.environ.get("CRNT_PERSIST_LOG", "WARNING").upper(), stream=err)
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json-errors" in argv
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _report_error(exc, EXIT_USAGE, as_json, err)
        return EXIT_USAGE
    try:
        _apply_config(args, parser)
        net = _load(args.network, args.allow_inactive)
        if hasattr(args, "t_end"):
            _t_end(args)
            _x0(args, net)
        cfg = _config(args)
        if args.config_echo:
            out.write(_dump(cfg))
        _write(args.out_dir, "config.json", _dump(cfg))
        return COMMANDS[args.command](args, net, out)
    except Exception as exc:
        code = next((c for cls, c in _EXIT_BY_ERROR if isinstance(exc, cls)), EXIT_INTERNAL)
        if code == EXIT_INTERNAL:
            log.exception("internal error")
        _report_error(exc, code, as_json, err)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
