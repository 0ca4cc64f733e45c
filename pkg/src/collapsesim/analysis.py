"""Reports computed from event logs and snapshots.

Every report is a pure function of its inputs.  Logs are lists of event
dicts (the JSON-lines schema) or lists of ``TrajectoryEvent``; snapshots
are ``Snapshot`` records or ``(t, mean, spread)`` rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError
from .qstate import PhysicalConstants, WaveFunction, density, mean_momentum, moments

#: survival probability below which a waiting interval counts as uncensored
CENSOR_EPS = 1e-6


class AnalysisError(ConfigurationError):
    """The logs cannot support the requested report."""


def _events(log):
    return [e if isinstance(e, dict) else e.to_dict() for e in log]


# --- Born statistics -----------------------------------------------------------

@dataclass(frozen=True)
class BornReport:
    """Outcome frequencies of the first collapse per trajectory.

    ``labels`` are ``left``/``right`` relative to ``cut``; ``intervals``
    are Wilson 95% confidence intervals.
    """

    counts: dict
    total: int
    frequencies: dict
    intervals: dict
    cut: float
    max_overlap: float

    def frequency(self, label="right"):
        return self.frequencies.get(label, 0.0)


def wilson_interval(k, n, level=0.95):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def born_report(logs, cut=0.0) -> BornReport:
    """Classify each trajectory by the side of ``cut`` its first collapse lands on."""
    counts = {"left": 0, "right": 0}
    overlap = 0.0
    for log in logs:
        first = next((e for e in _events(log) if e["kind"] == "collapse"), None)
        if first is None:
            continue
        counts["right" if first["mean"] > cut else "left"] += 1
        overlap = max(overlap, float(first.get("overlap", 0.0)))
    total = counts["left"] + counts["right"]
    if total == 0:
        raise AnalysisError("no collapse events in the logs")
    freqs = {k: v / total for k, v in counts.items()}
    intervals = {k: wilson_interval(v, total) for k, v in counts.items()}
    return BornReport(counts, total, freqs, intervals, cut, overlap)


# --- waiting times ---------------------------------------------------------------

@dataclass(frozen=True)
class WaitingReport:
    intervals: np.ndarray
    ks_statistic: float
    p_value: float
    gamma0: float

    @property
    def n(self):
        return self.intervals.size

    def passes(self, level=0.05):
        return self.p_value > level


def event_time_lists(logs):
    """Distinct event times per trajectory (a tie-break shares its collapse time)."""
    out = []
    for log in logs:
        ts = sorted({float(e["t"]) for e in _events(log) if e["kind"] in ("collapse", "noop_infeasible")})
        out.append(ts)
    return out


def waiting_intervals(time_lists, gamma0, t_max):
    """Inter-event intervals that are effectively uncensored.

    An interval is kept when it starts before ``t_max - h`` with
    ``exp(-gamma0 h) = CENSOR_EPS``.  Whether an interval is kept depends
    only on earlier intervals, so the kept ones are unbiased draws.
    """
    h = -math.log(CENSOR_EPS) / gamma0
    cutoff = t_max - h
    out = []
    for ts in time_lists:
        prev = 0.0
        for t in ts:
            if prev > cutoff:
                break
            out.append(t - prev)
            prev = t
    return np.asarray(out, dtype=float)


def waiting_time_report(logs, gamma0, t_max, time_lists=None) -> WaitingReport:
    """KS test of the waiting times against Exponential(gamma0)."""
    if not gamma0 > 0:
        raise AnalysisError("waiting times need gamma0 > 0")
    lists = time_lists if time_lists is not None else event_time_lists(logs)
    iv = waiting_intervals(lists, gamma0, t_max)
    if iv.size == 0:
        raise AnalysisError("no usable waiting intervals (empty logs or t_max too short)")
    res = stats.kstest(iv, "expon", args=(0.0, 1.0 / gamma0))
    return WaitingReport(iv, float(res.statistic), float(res.pvalue), gamma0)


def count_ks(sample, reference) -> float:
    """Two-sample KS distance between integer event-count samples."""
    return float(stats.ks_2samp(np.asarray(sample), np.asarray(reference)).statistic)


# --- width saturation ------------------------------------------------------------

def free_spread_squared(psi: WaveFunction, t, hbar=1.0, mass=1.0):
    """Exact collapse-free ``<(x - <x>)^2>(t)`` for a free particle.

    ``sigma^2(t) = sigma0^2 + 2 C t / m + (dp^2 / m^2) t^2`` with ``C`` the
    symmetrized position-momentum covariance of the initial state.
    """
    g = psi.grid
    a = psi.amplitudes
    x = g.coordinates
    mean, spread = moments(psi)
    p_mean = mean_momentum(psi, hbar)
    dpsi = np.fft.ifft(1j * g.wavenumbers * np.fft.fft(a))
    # <p^2> and the covariance Re<(x - <x>)(p - <p>)>
    p2 = hbar**2 * np.sum(np.abs(dpsi) ** 2) * g.spacing / psi.norm
    dp2 = p2 - p_mean**2
    cov = float(np.real(np.sum(np.conj(a) * (x - mean) * (-1j * hbar) * dpsi) * g.spacing) / psi.norm)
    t = np.asarray(t, dtype=float)
    return spread**2 + 2.0 * cov * t / mass + dp2 * t**2 / mass**2


def gaussian_spread(sigma0, t, hbar=1.0, mass=1.0):
    """Free minimum-uncertainty packet: ``sigma0 sqrt(1 + (hbar t / 2 m sigma0^2)^2)``."""
    return sigma0 * np.sqrt(1.0 + (hbar * np.asarray(t, dtype=float) / (2.0 * mass * sigma0**2)) ** 2)


def segment_growth_factor(constants: PhysicalConstants):
    """Spread-squared growth ``1 + (T0 tau0 / 4 pi hbar)^2`` of a packet of width
    lambda0 over one mean waiting time."""
    return 1.0 + constants.regime_ratio**2


@dataclass(frozen=True)
class WidthCurve:
    t: np.ndarray
    mean: np.ndarray
    q10: np.ndarray
    q90: np.ndarray


@dataclass(frozen=True)
class WidthReport:
    saturated: bool
    scale: float
    slope: float
    free_slope: float
    window: tuple


def width_curve(snapshot_lists) -> WidthCurve:
    t, spreads = _snapshot_matrix(snapshot_lists, "spread")
    return WidthCurve(t, spreads.mean(axis=0), np.quantile(spreads, 0.1, axis=0),
                      np.quantile(spreads, 0.9, axis=0))


def _snapshot_matrix(snapshot_lists, name):
    rows = []
    t = None
    for snaps in snapshot_lists:
        ts = np.array([s.t if hasattr(s, "t") else s[0] for s in snaps])
        vals = np.array([getattr(s, name) if hasattr(s, name) else s[1 if name == "mean" else 2] for s in snaps])
        if t is None:
            t = ts
        elif ts.shape != t.shape or not np.allclose(ts, t):
            n = min(len(ts), len(t))
            t, ts, vals = t[:n], ts[:n], vals[:n]
            rows = [r[:n] for r in rows]
        rows.append(vals)
    if t is None or t.size == 0:
        raise AnalysisError("no snapshots to analyse")
    return t, np.vstack(rows)


def width_saturation(snapshot_lists, psi0: WaveFunction, constants: PhysicalConstants,
                     window=None, ratio=0.05) -> WidthReport:
    """Decide whether the ensemble spread has stopped growing.

    ``saturated`` when the fitted slope of the mean spread squared over the
    last half of the run (or ``window``) is below ``ratio`` times the
    collapse-free slope of the same initial state over the same window.
    ``scale`` is the time-averaged spread over the window in units of
    lambda0.
    """
    t, spreads = _snapshot_matrix(snapshot_lists, "spread")
    t_max = float(t[-1])
    gamma0 = constants.gamma0
    if gamma0 > 0 and t_max < 10.0 / gamma0:
        raise AnalysisError(f"run too short for a saturation verdict: t_max={t_max:g} < 10/gamma0")
    lo, hi = window if window is not None else (0.5 * t_max, t_max)
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < 3:
        raise AnalysisError("too few snapshots in the analysis window")
    s2 = (spreads[:, sel] ** 2).mean(axis=0)
    slope = float(np.polyfit(t[sel], s2, 1)[0])
    free = free_spread_squared(psi0, t[sel], constants.hbar, constants.mass)
    free_slope = float(np.polyfit(t[sel], free, 1)[0])
    scale = float(spreads[:, sel].mean() / constants.lambda0)
    return WidthReport(bool(slope < ratio * free_slope), scale, slope, free_slope, (lo, hi))


# --- classical limit -----------------------------------------------------------

def rk4_newton(force, x0, v0, mass, t_end, dt, t0=0.0):
    """Integrate ``m x'' = F(x, t)`` with classical RK4; returns ``(t, x, v)``."""
    n = max(1, int(math.ceil((t_end - t0) / dt - 1e-9)))
    h = (t_end - t0) / n
    ts = t0 + h * np.arange(n + 1)
    xs = np.empty(n + 1)
    vs = np.empty(n + 1)
    x, v = float(x0), float(v0)
    xs[0], vs[0] = x, v

    def acc(x, t):
        return float(force(x, t)) / mass

    for i in range(n):
        t = ts[i]
        k1x, k1v = v, acc(x, t)
        k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, t + 0.5 * h)
        k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, t + 0.5 * h)
        k4x, k4v = v + h * k3v, acc(x + h * k3x, t + h)
        x += h * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0
        v += h * (k1v + 2 * k2v + 2 * k3v + k4v) / 6.0
        xs[i + 1], vs[i + 1] = x, v
    return ts, xs, vs


@dataclass(frozen=True)
class ClassicalReport:
    t: np.ndarray
    ensemble_mean: np.ndarray
    classical: np.ndarray
    max_deviation: float
    amplitude: float

    @property
    def relative(self):
        return self.max_deviation / self.amplitude


def classical_mean(snapshot_lists, potential, psi0: WaveFunction, constants: PhysicalConstants,
                   dt=None, center=0.0) -> ClassicalReport:
    """Compare the ensemble ``<x>(t)`` with the Newtonian trajectory.

    The classical path starts from the initial ``<x>`` and ``<p>/m`` and is
    integrated with RK4 at one tenth of the snapshot spacing (or ``dt``).
    The deviation is normalized by the classical amplitude about ``center``.
    """
    t, means = _snapshot_matrix(snapshot_lists, "mean")
    ens = means.mean(axis=0)
    x0, _ = moments(psi0)
    v0 = mean_momentum(psi0, constants.hbar) / constants.mass
    step = dt if dt is not None else (t[1] - t[0]) / 10.0 if t.size > 1 else 1e-3
    ts, xs, _ = rk4_newton(lambda x, tt: potential.force(x, tt), x0, v0, constants.mass, float(t[-1]), step)
    cl = np.interp(t, ts, xs)
    amp = float(np.max(np.abs(xs - center)))
    if amp == 0:
        amp = 1.0
    return ClassicalReport(t, ens, cl, float(np.max(np.abs(ens - cl))), amp)


# --- residence / switching -----------------------------------------------------

@dataclass(frozen=True)
class SwitchReport:
    switches: int
    exposure: float
    rate: float
    residence_times: np.ndarray


def well_switching(snapshot_lists, well_position, gamma0, settle=0.0) -> SwitchReport:
    """Well-to-well switches per trajectory per tau0 after ``settle``.

    A trajectory is assigned to a well when its mean position passes
    half the well offset on that side; crossings of the central band alone
    do not count as switches.
    """
    tau0 = 1.0 / gamma0 if gamma0 > 0 else np.inf
    thresh = 0.5 * abs(well_position)
    switches = 0
    exposure = 0.0
    residence = []
    for snaps in snapshot_lists:
        t = np.array([s.t if hasattr(s, "t") else s[0] for s in snaps])
        m = np.array([s.mean if hasattr(s, "mean") else s[1] for s in snaps])
        sel = t >= settle
        t, m = t[sel], m[sel]
        if t.size < 2:
            continue
        exposure += (t[-1] - t[0]) / tau0
        state, since = 0, t[0]
        for ti, mi in zip(t, m):
            side = 1 if mi > thresh else -1 if mi < -thresh else 0
            if side and side != state:
                if state:
                    switches += 1
                    residence.append(ti - since)
                state, since = side, ti
    rate = switches / exposure if exposure > 0 else 0.0
    return SwitchReport(switches, exposure, rate, np.asarray(residence))


# --- ensemble summary ----------------------------------------------------------

@dataclass
class EnsembleStats:
    n_traj: int
    counts: dict
    logs: list
    born: BornReport | None = None
    waiting: WaitingReport | None = None
    width: WidthCurve | None = None
    mean_trajectory: tuple | None = None
    switching: SwitchReport | None = None
    aborted: int = 0
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"n_traj": self.n_traj, "counts": dict(self.counts), "aborted": self.aborted}
        if self.born is not None:
            out["born"] = {"counts": self.born.counts, "total": self.born.total,
                           "frequencies": self.born.frequencies,
                           "intervals": {k: list(v) for k, v in self.born.intervals.items()},
                           "cut": self.born.cut, "max_overlap": self.born.max_overlap}
        if self.waiting is not None:
            out["waiting"] = {"n": self.waiting.n, "ks_statistic": self.waiting.ks_statistic,
                              "p_value": self.waiting.p_value, "gamma0": self.waiting.gamma0,
                              "mean": float(self.waiting.intervals.mean())}
        if self.width is not None:
            out["width"] = {"t": self.width.t.tolist(), "mean": self.width.mean.tolist(),
                            "q10": self.width.q10.tolist(), "q90": self.width.q90.tolist()}
        if self.mean_trajectory is not None:
            out["mean_trajectory"] = {"t": self.mean_trajectory[0].tolist(),
                                      "mean": self.mean_trajectory[1].tolist()}
        if self.switching is not None:
            out["switching"] = {"switches": self.switching.switches, "exposure": self.switching.exposure,
                                "rate": self.switching.rate}
        out.update(self.extras)
        return out


def summarize(results, cfg) -> EnsembleStats:
    """Aggregate trajectory results; independent of the order of ``results``."""
    results = sorted(results, key=lambda r: r.index)
    logs = [r.event_dicts() for r in results]
    counts = {"collapse": 0, "noop_infeasible": 0, "tie_break": 0}
    for log in logs:
        for e in log:
            counts[e["kind"]] = counts.get(e["kind"], 0) + 1
    st = EnsembleStats(len(results), counts, logs, aborted=sum(r.aborted is not None for r in results))
    if counts["collapse"]:
        st.born = born_report(logs)
    gamma0 = cfg.constants.gamma0
    if gamma0 > 0 and (counts["collapse"] + counts["noop_infeasible"]):
        try:
            st.waiting = waiting_time_report(logs, gamma0, cfg.t_max)
        except AnalysisError:
            st.waiting = None
    snaps = [r.snapshots for r in results if r.snapshots]
    if snaps:
        st.width = width_curve(snaps)
        t, means = _snapshot_matrix(snaps, "mean")
        st.mean_trajectory = (t, means.mean(axis=0))
        if cfg.potential.kind == "double_well":
            p = cfg.potential.params
            st.switching = well_switching(snaps, math.sqrt(p["b"] / (2 * p["a"])), gamma0)
    return st
