"""Stochastic trajectories: unitary segments punctuated by collapse events.

Each trajectory owns two random streams spawned from its seed: one for the
event schedule and one for tie-breaks and outcome draws.  The schedule is
therefore independent of the physics, and a given ``(seed, config)`` pair
always produces the same event log.

Event ordering: all events carry the time at which they occur; a
``tie_break`` record shares the timestamp of the collapse it precedes.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError, NumericalFailure
from .propagator import NORM_DRIFT_TOL, evolve, make_stepper
from .qstate import WaveFunction, density, moments
from .solver import break_tie, sample_outcome, solve

log = logging.getLogger(__name__)

REGIME_LIMIT = 0.1


class RegimeWarning(UserWarning):
    """Constants outside the small ``T0 tau0 / (4 pi hbar)`` regime."""


class TrajectoryAborted(NumericalFailure):
    """Numerical failure mid-run; ``partial`` holds the result so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class TrajectoryEvent:
    """One log record.  ``kind`` is ``collapse``, ``noop_infeasible`` or ``tie_break``."""

    t: float
    kind: str
    n: int | None = None
    w: tuple | None = None
    X: float | None = None
    l: float | None = None
    s_prime: float | None = None
    dE: float | None = None
    dS: float | None = None
    mean: float | None = None
    spread: float | None = None
    norm: float | None = None
    choice: int | None = None
    tie_size: int | None = None
    overlap: float | None = None

    def to_dict(self) -> dict:
        d = {"t": self.t, "kind": self.kind}
        for name in ("n", "w", "X", "l", "s_prime", "dE", "dS", "mean", "spread", "norm",
                     "overlap", "choice", "tie_size"):
            v = getattr(self, name)
            if v is not None:
                d[name] = list(v) if name == "w" else v
        return d


@dataclass
class Snapshot:
    t: float
    mean: float
    spread: float
    rho: np.ndarray | None = None


@dataclass
class TrajectoryResult:
    events: list
    snapshots: list
    final: WaveFunction
    index: int = 0
    aborted: str | None = None

    def collapses(self):
        return [e for e in self.events if e.kind == "collapse"]

    def event_dicts(self):
        return [e.to_dict() for e in self.events]


# --- scheduling --------------------------------------------------------------

def waiting_time_from_uniform(u, gamma0):
    """Inverse exponential CDF: ``-log(1 - u) / gamma0``."""
    if not gamma0 > 0:
        raise ConfigurationError("gamma0 must be positive to draw waiting times")
    return -math.log1p(-u) / gamma0


def sample_waiting_time(rng, gamma0) -> float:
    return waiting_time_from_uniform(rng.random(), gamma0)


def event_times(rng, gamma0, t_max, mode="exponential", dt=None):
    """Collapse times in ``(0, t_max]`` for the chosen scheduler.

    In ``bernoulli`` mode each window ``[k dt, (k+1) dt)`` hosts an event
    with probability ``gamma0 dt``; the event is placed at the window start
    and the window is spent on the collapse instead of unitary evolution.
    """
    if gamma0 == 0:
        return []
    times = []
    if mode == "exponential":
        t = sample_waiting_time(rng, gamma0)
        while t <= t_max:
            times.append(t)
            t += sample_waiting_time(rng, gamma0)
        return times
    p = gamma0 * dt
    if not 0 < p <= 1:
        raise ConfigurationError(f"bernoulli window probability gamma0*dt = {p:g} must lie in (0, 1]")
    k = 0
    n_windows = int(math.floor(t_max / dt + 1e-9))
    while True:
        k += int(rng.geometric(p))
        # the k-th window starts at (k - 1) dt
        if k > n_windows:
            return times
        times.append((k - 1) * dt)


def trajectory_streams(seed, index=0):
    """``(schedule_rng, outcome_rng)`` for trajectory ``index`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(index,) if index else ())
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def check_regime(constants):
    ratio = constants.regime_ratio
    if constants.gamma0 > 0 and ratio > REGIME_LIMIT:
        warnings.warn(f"T0*tau0/(4 pi hbar) = {ratio:.3g} is not small; collapse model assumptions are stretched",
                      RegimeWarning, stacklevel=3)


# --- running -----------------------------------------------------------------

def _snapshot(psi, store):
    mean, spread = moments(psi)
    return Snapshot(psi.time, mean, spread, density(psi).copy() if store else None)


def _guard(psi, cfg, result):
    drift = abs(psi.norm - 1.0)
    if drift > NORM_DRIFT_TOL:
        raise TrajectoryAborted(f"norm drift {drift:.3e} at t={psi.time:.6g}", result)
    edge = psi.grid.edge_mass(density(psi))
    if edge > cfg.boundary_tol:
        raise TrajectoryAborted(f"boundary mass {edge:.3e} at t={psi.time:.6g} exceeds {cfg.boundary_tol:g}",
                                result)


def _collapse(psi, cfg, rng, t):
    """Solve, break ties, sample.  Returns ``(events, new_state, fired)``."""
    prop = solve(psi, cfg.constants, cfg.solver)
    events = []
    if prop.status == "infeasible":
        mean, spread = moments(psi)
        events.append(TrajectoryEvent(t, "noop_infeasible", mean=mean, spread=spread, norm=psi.norm))
        return events, psi, False
    if prop.status == "tied":
        prop = break_tie(prop, rng)
        events.append(TrajectoryEvent(t, "tie_break", choice=prop.tie_choice, tie_size=prop.tie_size))
    n, out = sample_outcome(psi, prop, rng)
    out = out.with_amplitudes(out.amplitudes, time=t)
    th = prop.thermo
    mean, spread = moments(out)
    events.append(TrajectoryEvent(
        t, "collapse", n=n, w=tuple(float(x) for x in th.weights), X=prop.params.X, l=prop.params.l,
        s_prime=th.s_prime, dE=th.delta_e, dS=th.delta_s, mean=mean, spread=spread, norm=out.norm,
        overlap=th.overlap,
    ))
    return events, out, True


def run_trajectory(cfg: RunConfig, index: int = 0, psi0: WaveFunction | None = None) -> TrajectoryResult:
    """Run one trajectory to ``cfg.t_max``.

    ``index`` selects the sub-stream used by ensembles; ``index=0`` is the
    stream of a plain single run with ``cfg.seed``.
    """
    check_regime(cfg.constants)
    sched_rng, out_rng = trajectory_streams(cfg.seed, index)
    sc = cfg.scheduler
    times = event_times(sched_rng, cfg.constants.gamma0, cfg.t_max, sc.mode, sc.dt)
    psi = psi0 if psi0 is not None else cfg.initial_state()
    stepper = make_stepper(psi.grid, cfg.potential, cfg.stepper, cfg.constants)
    every = cfg.snapshot_every
    snap_times = [] if every is None else list(np.arange(0.0, cfg.t_max + 0.5 * every, every))
    result = TrajectoryResult([], [], psi, index)
    si = 0
    # in bernoulli mode the collapse window is not spent on unitary evolution
    skip = sc.dt if sc.mode == "bernoulli" else 0.0
    clock = 0.0
    n_fired = 0

    def advance(psi, clock, target):
        nonlocal si
        while si < len(snap_times) and snap_times[si] <= target + 1e-12:
            ts = snap_times[si]
            psi = _goto(psi, clock, ts, cfg, stepper)
            clock = ts
            result.snapshots.append(_snapshot(psi, cfg.store_density))
            si += 1
        psi = _goto(psi, clock, target, cfg, stepper)
        return psi, target

    try:
        for t_event in times:
            psi, clock = advance(psi, clock, t_event)
            events, psi, fired = _collapse(psi, cfg, out_rng, t_event)
            result.events.extend(events)
            result.final = psi
            _guard(psi, cfg, result)
            n_fired += fired
            if skip:
                # the collapse window itself: time passes without unitary evolution
                clock = t_event + skip
                psi = psi.with_amplitudes(psi.amplitudes, time=clock)
            if cfg.max_collapses is not None and n_fired >= cfg.max_collapses:
                break
        else:
            psi, clock = advance(psi, clock, cfg.t_max)
        result.final = psi
        _guard(psi, cfg, result)
    except NumericalFailure as exc:
        if isinstance(exc, TrajectoryAborted):
            exc.partial.aborted = str(exc)
            raise
        result.aborted = str(exc)
        raise TrajectoryAborted(str(exc), result) from exc
    return result


def _goto(psi, clock, target, cfg, stepper):
    """Unitary evolution from ``clock`` to ``target`` (state time is tracked separately
    from the clock only in bernoulli mode)."""
    duration = target - clock
    if duration <= 0:
        return psi.with_amplitudes(psi.amplitudes, time=max(target, psi.time)) if duration < 0 else psi
    start = psi.with_amplitudes(psi.amplitudes, time=clock)
    return evolve(start, cfg.potential, cfg.stepper, duration, cfg.constants, stepper=stepper)


def _run_one(args):
    cfg, index, keep = args
    try:
        return run_trajectory(cfg, index)
    except TrajectoryAborted as exc:
        if not keep:
            raise
        log.warning("trajectory %d aborted: %s", index, exc)
        return exc.partial


def run_trajectories(cfg: RunConfig, n_traj=None, workers=1, progress=None, on_abort="raise"):
    """Run ``n_traj`` trajectories with independent sub-streams; results in index order.

    With ``on_abort="keep"`` an aborted trajectory contributes its partial
    result (``aborted`` set) instead of stopping the ensemble.
    """
    n = int(n_traj or cfg.n_traj)
    if n < 1:
        raise ConfigurationError("n_traj must be at least 1")
    if on_abort not in ("raise", "keep"):
        raise ConfigurationError("on_abort must be 'raise' or 'keep'")
    # sub-stream i+1 so that trajectory 0 of an ensemble differs from a plain run
    jobs = [(cfg, i + 1, on_abort == "keep") for i in range(n)]
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, n // (4 * workers))))
    else:
        results = []
        for k, job in enumerate(jobs):
            results.append(_run_one(job))
            if progress:
                progress(k + 1, n)
    return results


def run_ensemble(cfg: RunConfig, n_traj=None, seed_stream=None, workers=1, progress=None):
    """Run an ensemble and summarize it (see :func:`analysis.summarize`).

    ``seed_stream`` overrides ``cfg.seed`` as the root of the sub-seeds.
    Aborted trajectories are kept with their partial logs and counted in
    ``EnsembleStats.aborted``.
    """
    from dataclasses import replace

    from .analysis import summarize

    if seed_stream is not None:
        cfg = replace(cfg, seed=int(seed_stream))
    results = run_trajectories(cfg, n_traj, workers, progress, on_abort="keep")
    return summarize(results, cfg)
