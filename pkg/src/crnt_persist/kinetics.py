"""Mass-action vector field, rate schedules and a positivity-guarded integrator.

The integrator is an embedded Dormand-Prince 5(4) pair with its 4th order
continuous extension.  Two properties matter downstream:

* linear first integrals (conservation laws) are preserved up to round-off,
  because every stage derivative lies in the stoichiometric subspace;
* stored states stay strictly positive: a step that would put a component at
  or below zero is rejected and halved instead of clamped.

When the step size becomes limited by stability rather than accuracy
(detected as in Hairer's DOPRI5 code), the rest of the run is handed to
scipy's implicit Radau solver with the exact Jacobian.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NonFiniteState, RateBoundViolation, StepSizeUnderflow
from .network import ReactionNetwork

log = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
# components below this are reported as boundary-approaching
BOUNDARY_FLOOR = 1e-300
DEFAULT_SAMPLES = 1024
# default grid starts at t_end / LOG_SPAN
LOG_SPAN = 1e4


class RateSchedule:
    """Time-dependent rate constants kappa_k(t).

    Build with :meth:`from_callable` or :meth:`from_samples`.  When ``eta``
    is given the schedule promises ``eta < kappa_k(t) < 1/eta`` and the
    promise is checked at construction; without ``eta`` only positivity and
    finiteness are checked (generalized mass-action kinetics).
    """

    def __init__(self, func: Callable[[float], np.ndarray], n_reactions: int, eta: float | None = None,
                 description: str = ""):
        self._func = func
        self.n_reactions = n_reactions
        self.eta = eta
        self.description = description

    def __call__(self, t: float) -> np.ndarray:
        return self._func(t)

    @classmethod
    def from_callable(
        cls,
        func: Callable[[float], Sequence[float]] | Sequence[Callable[[float], float]],
        n_reactions: int,
        eta: float | None = None,
        horizon: float = 100.0,
        n_check: int = 2001,
    ) -> "RateSchedule":
        """Wrap a vector-valued callable, or one callable per reaction.

        The eta band is verified on ``n_check`` points spread over ``[0, horizon]``.
        """
        if callable(func):
            vec = lambda t: np.asarray(func(t), dtype=float)  # noqa: E731
        else:
            funcs = list(func)
            if len(funcs) != n_reactions:
                raise ValueError(f"expected {n_reactions} rate functions, got {len(funcs)}")
            vec = lambda t: np.array([f(t) for f in funcs], dtype=float)  # noqa: E731
        grid = np.linspace(0.0, horizon, n_check)
        values = np.array([vec(t) for t in grid]).reshape(n_check, -1)
        if values.shape[1] != n_reactions:
            raise ValueError(f"rate callable returns {values.shape[1]} values, expected {n_reactions}")
        _check_band(values, eta)
        return cls(vec, n_reactions, eta, description="callable")

    @classmethod
    def from_samples(cls, times: Sequence[float], values: np.ndarray, eta: float | None = None) -> "RateSchedule":
        """Piecewise-linear interpolation of sampled rates (held constant outside the samples)."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != times.size:
            raise ValueError("values must have shape (len(times), n_reactions)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        _check_band(values, eta)
        cols = [values[:, k].copy() for k in range(values.shape[1])]

        def interp(t: float) -> np.ndarray:
            return np.array([np.interp(t, times, c) for c in cols])

        sched = cls(interp, values.shape[1], eta, description="samples")
        sched.times = times
        sched.values = values
        return sched


def _check_band(values: np.ndarray, eta: float | None) -> None:
    if not np.all(np.isfinite(values)):
        raise RateBoundViolation("rate schedule produced non-finite values")
    if eta is None:
        if np.any(values < 0):
            raise RateBoundViolation("rate schedule produced negative values")
        return
    if not 0 < eta < 1:
        raise RateBoundViolation(f"eta must lie in (0, 1), got {eta}")
    lo, hi = values.min(), values.max()
    if not (lo > eta and hi < 1 / eta):
        raise RateBoundViolation(f"rates span [{lo:.3g}, {hi:.3g}], outside ({eta:.3g}, {1 / eta:.3g})")


def monomials(x: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """x^y for every row y of ``exponents`` (0**0 == 1).

    ``x`` may be a single state or a stack of states along the last axis.
    """
    x = np.asarray(x, dtype=float)
    return np.prod(np.power(x[..., None, :], exponents), axis=-1)


def mass_action_rhs(net: ReactionNetwork, x, t: float = 0.0, schedule: RateSchedule | None = None) -> np.ndarray:
    """sum_k kappa_k(t) x^{y_k} (y_k' - y_k)."""
    x = np.asarray(x, dtype=float)
    kappa = net.rates if schedule is None else schedule(t)
    return (kappa * monomials(x, net.source_matrix)) @ net.reaction_vectors


def reaction_fluxes(net: ReactionNetwork, x, t: float = 0.0, schedule: RateSchedule | None = None) -> np.ndarray:
    kappa = net.rates if schedule is None else schedule(t)
    return kappa * monomials(np.asarray(x, dtype=float), net.source_matrix)


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution; arrays are read-only."""

    times: np.ndarray
    states: np.ndarray
    species: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float).reshape(times.size, -1)
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "species", tuple(self.species))

    def __len__(self) -> int:
        return self.times.size

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def window_mask(self, window: float | None = None) -> np.ndarray:
        """Boolean mask of samples with t >= t_end - window (default: last half of the run)."""
        if window is None:
            window = 0.5 * (self.t_end - self.times[0])
        return self.times >= self.t_end - window

    def restrict(self, mask) -> "Trajectory":
        return Trajectory(self.times[mask], self.states[mask], self.species, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(self.states.shape[1])])
        for t, row in zip(self.times, self.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "metadata": self.meta,
            "species": list(self.species),
            "times": self.times.tolist(),
            "states": self.states.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def default_sample_times(t_end: float, n: int = DEFAULT_SAMPLES, span: float = LOG_SPAN) -> np.ndarray:
    """t = 0 followed by a log-spaced grid ending at t_end."""
    if t_end <= 0:
        return np.array([0.0])
    return np.concatenate(([0.0], np.geomspace(t_end / span, t_end, n - 1)))


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_A = [np.array(row) for row in _A]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
# difference between the 5th and embedded 4th order weights
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + th*h) = y + h * K.T @ _P @ [th, th^2, th^3, th^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# local error of any component may not exceed this fraction of its magnitude,
# so species far below atol are still resolved (decay stays decay)
_RELATIVE_GUARD = 0.1
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_STIFF_RATIO = 3.25
_STIFF_COUNT = 15


def integrate(
    net: ReactionNetwork,
    x0,
    t_end: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    schedule: RateSchedule | None = None,
    t_eval: Sequence[float] | None = None,
    n_samples: int = DEFAULT_SAMPLES,
    max_steps: int = 5_000_000,
) -> Trajectory:
    """Integrate the mass-action system from a strictly positive ``x0``.

    Parameters
    ----------
    t_eval
        Sample times in [0, t_end]; defaults to :func:`default_sample_times`.
        Time 0 is always included.

    Raises
    ------
    StepSizeUnderflow
        The step needed to satisfy the tolerances (or to stay positive)
        fell below round-off level.
    NonFiniteState
        The solution overflowed.
    """
    x0 = np.array(x0, dtype=float)
    if x0.shape != (net.n_species,):
        raise ValueError(f"x0 must have {net.n_species} entries")
    if not np.all(np.isfinite(x0)) or np.any(x0 <= 0):
        raise ValueError("x0 must be strictly positive and finite")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")

    if t_eval is None:
        samples = default_sample_times(t_end, n_samples)
    else:
        samples = np.unique(np.concatenate(([0.0], np.asarray(t_eval, dtype=float))))
        if samples[-1] > t_end or samples[0] < 0:
            raise ValueError("t_eval must lie in [0, t_end]")

    meta = {
        "method": "dopri5",
        "rtol": rtol,
        "atol": atol,
        "t_end": float(t_end),
        "network": net.digest,
        "schedule": None if schedule is None else schedule.description,
        "n_steps": 0,
        "n_rejected": 0,
        "n_positivity_rejections": 0,
        "n_dense_fallbacks": 0,
        "stiff_switch_t": None,
        "boundary_flags": {},
    }
    if t_end == 0:
        return Trajectory([0.0], [x0], net.species, meta)

    ysrc = np.asarray(net.source_matrix)
    gamma = np.asarray(net.reaction_vectors)
    const_rates = np.asarray(net.rates)

    def f(t: float, x: np.ndarray) -> np.ndarray:
        kappa = const_rates if schedule is None else schedule(t)
        return (kappa * np.prod(np.power(x, ysrc), axis=1)) @ gamma

    def jac(t: float, x: np.ndarray) -> np.ndarray:
        kappa = const_rates if schedule is None else schedule(t)
        d = np.empty(ysrc.shape)
        for j in range(ysrc.shape[1]):
            e = ysrc.copy()
            e[:, j] = np.maximum(e[:, j] - 1, 0)
            d[:, j] = ysrc[:, j] * np.prod(np.power(x, e), axis=1)
        return gamma.T @ (kappa[:, None] * d)

    out_t = [0.0]
    out_x = [x0.copy()]
    next_sample = 1
    n_out = samples.size

    t, y = 0.0, x0.copy()
    fy = f(t, y)
    h = _initial_step(f, t, y, fy, rtol, atol, t_end)
    K = np.empty((7, y.size))
    boundary_flags: dict[str, float] = {}
    n_stiff = n_nonstiff = 0

    for _ in range(max_steps):
        if t >= t_end:
            break
        if n_stiff >= _STIFF_COUNT:
            meta["stiff_switch_t"] = float(t)
            meta["method"] = "dopri5+radau"
            log.info("stability-limited steps at t=%.6g; switching to Radau", t)
            ts_rest = samples[next_sample:]
            xs_rest = _implicit_segment(f, jac, t, y, t_end, ts_rest, rtol, atol)
            out_t.extend(float(v) for v in ts_rest)
            out_x.extend(xs_rest)
            for i in np.nonzero(xs_rest.min(axis=0, initial=np.inf) < BOUNDARY_FLOOR)[0]:
                boundary_flags.setdefault(net.species[i], float(ts_rest[-1]))
            break
        h = min(h, t_end - t)
        min_step = 16 * np.spacing(max(abs(t), 1.0))
        if h < min_step:
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g}")
        K[0] = fy
        for i in range(1, 7):
            dy = h * (_A[i] @ K[:i])
            K[i] = f(t + _C[i] * h, y + dy)
            if i == 5:
                y_stage = y + dy
        y_new = y + h * (_B @ K)
        if not np.all(np.isfinite(y_new)):
            meta["n_rejected"] += 1
            h *= 0.5
            if h < min_step:
                raise NonFiniteState(f"non-finite state near t={t:.6g}")
            continue
        local = h * (_E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((local / scale) ** 2))
        guard = np.max(np.abs(local) / (_RELATIVE_GUARD * np.minimum(np.abs(y), np.abs(y_new)) + 1e-300))
        err = max(err, min(guard, 1e3 * max(err, 1.0)) if guard > 1.0 else err)
        if err > 1.0:
            meta["n_rejected"] += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            continue
        if np.any(y_new <= 0):
            meta["n_positivity_rejections"] += 1
            h *= 0.5
            continue

        t_new = t + h if t + h < t_end else t_end
        while next_sample < n_out and samples[next_sample] <= t_new:
            ts = samples[next_sample]
            if ts == t_new:
                xs = y_new.copy()
            else:
                theta = (ts - t) / h
                xs = y + h * (K.T @ (_P @ np.array([theta, theta**2, theta**3, theta**4])))
                bad = xs <= 0
                if np.any(bad):
                    # geometric interpolation keeps the sample inside the open orthant
                    xs[bad] = y[bad] ** (1 - theta) * y_new[bad] ** theta
                    meta["n_dense_fallbacks"] += 1
            out_t.append(float(ts))
            out_x.append(xs)
            next_sample += 1

        tiny = np.nonzero(y_new < BOUNDARY_FLOOR)[0]
        for i in tiny:
            boundary_flags.setdefault(net.species[i], float(t_new))

        # h * (spectral radius estimate) beyond the stability boundary signals stiffness
        den = np.sum((y_new - y_stage) ** 2)
        if den > 0 and h * h * np.sum((K[6] - K[5]) ** 2) > _STIFF_RATIO**2 * den:
            n_stiff, n_nonstiff = n_stiff + 1, 0
        else:
            n_nonstiff += 1
            if n_nonstiff >= 6:
                n_stiff = 0

        t, y = t_new, y_new
        fy = K[6].copy()  # first-same-as-last; a view would be clobbered by a rejected step
        meta["n_steps"] += 1
        factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
        h *= factor
    else:
        raise StepSizeUnderflow(f"max_steps={max_steps} exhausted at t={t:.6g}")

    meta["boundary_flags"] = boundary_flags
    return Trajectory(out_t, out_x, net.species, meta)


def _implicit_segment(f, jac, t0, y0, t_end, t_eval, rtol, atol) -> np.ndarray:
    """Radau from (t0, y0) to t_end, sampled at t_eval; states must stay positive."""
    if t_eval.size == 0:
        return np.empty((0, y0.size))
    sol = solve_ivp(f, (t0, t_end), y0, method="Radau", t_eval=t_eval, jac=jac, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise StepSizeUnderflow(f"implicit solver failed after t={t0:.6g}: {sol.message}")
    xs = sol.y.T
    if not np.all(np.isfinite(xs)):
        raise NonFiniteState(f"non-finite state after t={t0:.6g}")
    if np.any(xs <= 0):
        raise StepSizeUnderflow(f"implicit solver left the positive orthant after t={t0:.6g}")
    return xs


def _initial_step(f, t0, y0, f0, rtol, atol, t_end) -> float:
    # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_end)


def conserved_drift(traj: Trajectory, w) -> float:
    """max_t |w . x(t) - w . x(0)|."""
    proj = traj.states @ np.asarray(w, dtype=float)
    return float(np.max(np.abs(proj - proj[0])))


@dataclass(frozen=True)
class BoundaryDistance:
    times: np.ndarray
    min_values: np.ndarray
    argmin: np.ndarray
    window_start: float
    trailing_min: float
    species_trailing_min: np.ndarray
    species_log_slope: np.ndarray

    def to_dict(self) -> dict:
        return {
            "window_start": self.window_start,
            "trailing_min": self.trailing_min,
            "species_trailing_min": self.species_trailing_min.tolist(),
            "species_log_slope": self.species_log_slope.tolist(),
            "overall_min": float(self.min_values.min()),
        }


def boundary_distance_series(traj: Trajectory, window: float | None = None) -> BoundaryDistance:
    """min_i x_i(t) per sample plus trailing-window summaries.

    ``trailing_min`` estimates liminf_t min_i x_i(t).  ``species_log_slope``
    is the least-squares slope of ln x_i against t over the window; a
    negative slope together with a tiny trailing minimum marks a species
    as approaching the boundary.
    """
    mins = traj.states.min(axis=1)
    mask = traj.window_mask(window)
    tail = traj.states[mask]
    tt = traj.times[mask]
    if tt.size >= 2 and np.ptp(tt) > 0:
        logs = np.log(tail)
        tc = tt - tt.mean()
        slopes = (tc @ (logs - logs.mean(axis=0))) / (tc @ tc)
    else:
        slopes = np.zeros(traj.states.shape[1])
    return BoundaryDistance(
        times=traj.times,
        min_values=mins,
        argmin=traj.states.argmin(axis=1),
        window_start=float(tt[0]),
        trailing_min=float(mins[mask].min()),
        species_trailing_min=tail.min(axis=0),
        species_log_slope=slopes,
    )
