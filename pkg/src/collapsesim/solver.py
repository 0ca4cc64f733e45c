"""Per-event constrained optimization of the collapse partition.

For a single tanh cut at position ``X`` with width ``l`` the solver
maximizes ``S'(X, l)`` subject to ``T0 dS(X, l) = dE(X, l)``.  For every
``X`` the constraint is solved for the smallest root ``l*(X)`` at which
the residual ``T0 dS - dE`` turns from negative to positive; ``S'`` is then
maximized over ``X``.

All cut integrals are evaluated exactly for the trigonometric interpolant
of the sampled density:

    int rho(x) K((x - X)/l) dx = l * sum_k rho_hat(k) K_hat(k l) e^{i k X}

with closed-form Fourier transforms of the four kernels involved
(``sech^2``, ``sech``, ``tanh - sign`` and the two-branch entropy
``sum_pm p log p``).  This keeps the root finding accurate even when the
optimal width falls far below the grid spacing, which happens for well
separated packets whose gap density is exponentially small.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.signal import find_peaks
from scipy.signal import fftconvolve
from scipy.special import entr, expit, xlogy

from .errors import ConfigurationError
from .partition import PartitionParams, build
from .qstate import PhysicalConstants, WaveFunction, density
from .thermo import ThermoRecord, outcomes

log = logging.getLogger(__name__)

_A = 0.5 * math.pi


# --- Fourier transforms K_hat(q) = int K(u) e^{iqu} du, for q >= 0 -------------

def _s_over_sinh(s):
    out = np.ones_like(s)
    big = s > 1e-4
    sb = s[big]
    out[big] = 2.0 * sb * np.exp(-sb) / -np.expm1(-2.0 * sb)
    small = ~big
    out[small] = 1.0 - s[small] ** 2 / 6.0
    return out


def ft_sech2(q):
    """FT of sech^2(u): pi q / sinh(pi q / 2)."""
    s = _A * np.asarray(q, dtype=float)
    return 2.0 * _s_over_sinh(s)


def ft_sech(q):
    """FT of sech(u): pi / cosh(pi q / 2)."""
    s = _A * np.asarray(q, dtype=float)
    e = np.exp(-s)
    return 2.0 * math.pi * e / (1.0 + e * e)


def ft_tanh_minus_sign(q):
    """Imaginary part of the FT of tanh(u) - sign(u): pi/sinh(pi q/2) - 2/q."""
    q = np.asarray(q, dtype=float)
    s = _A * q
    out = np.zeros_like(s)
    small = s < 1e-3
    ss = s[small]
    # (2/q)(s/sinh s - 1), series in s
    out[small] = 2.0 * _A * (-ss / 6.0 + 7.0 * ss**3 / 360.0)
    big = ~small
    out[big] = 2.0 / q[big] * (_s_over_sinh(s[big]) - 1.0)
    return out


def ft_branch_entropy(q):
    """FT of h(u) = sum_pm p log p with p = (1 +- tanh u)/2.

    From h'(u) = u sech^2(u): h_hat(q) = (1/q) d/dq [pi q / sinh(pi q / 2)].
    """
    q = np.asarray(q, dtype=float)
    s = _A * q
    out = np.empty_like(s)
    small = s < 0.1
    ss = s[small]
    # (pi a / s) (sinh s - s cosh s) / sinh^2 s, numerator and sinh^2 as series
    num = -(ss**3 / 3.0 + ss**5 / 30.0 + ss**7 / 840.0 + ss**9 / 45360.0)
    sh = ss * (1.0 + ss**2 / 6.0 + ss**4 / 120.0 + ss**6 / 5040.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = math.pi * _A * num / (ss * sh * sh)
    val[ss == 0] = -math.pi * _A / 3.0
    out[small] = val
    sb = s[~small]
    e1 = np.exp(-sb)
    e2 = e1 * e1
    f = 2.0 * ((1.0 - sb) * e1 - (1.0 + sb) * e1 * e2) / (1.0 - e2) ** 2
    out[~small] = math.pi * _A * f / sb
    return out


def kernel_values(u):
    """Real-space kernels ``(sech^2, sech, tanh - sign, h)`` at ``u``."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    e = np.exp(-2.0 * a)
    sech = 2.0 * np.exp(-a) / (1.0 + e)
    tms = -np.sign(u) * 2.0 * e / (1.0 + e)
    p, q = expit(2.0 * u), expit(-2.0 * u)
    h = xlogy(p, p) + xlogy(q, q)
    return sech**2, sech, tms, h


# --- configuration and results ----------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and search settings.

    ``l_min`` defaults to ``1e-12 * L`` (sub-grid cut widths are evaluated
    exactly for the band-limited state); pass ``l_min=4*dx`` to restrict the
    search to grid-resolved cuts.  :func:`solve` raises the lower end further
    when round-off in the spectral sums would compete with ``tol_c``, which
    is relative to ``T0``.
    """

    tol_c: float = 1e-8
    eps_gain: float = 1e-6
    eta_tie: float = 1e-6
    l_min: float | None = None
    l_max: float | None = None
    l_per_decade: int = 8
    w_floor: float = 1e-10
    screen: float = 1e-3
    flat_tol: float = 1e-12
    max_candidates: int = 4
    max_refine_iter: int = 60

    def __post_init__(self):
        for name in ("tol_c", "eps_gain", "eta_tie", "l_per_decade", "w_floor", "screen", "flat_tol",
                     "max_candidates", "max_refine_iter"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"solver.{name} must be positive")
        for name in ("l_min", "l_max"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigurationError(f"solver.{name} must be positive")

    def l_bracket(self, grid):
        lo = self.l_min if self.l_min is not None else 1e-12 * grid.length
        hi = self.l_max if self.l_max is not None else grid.length / 16
        if not hi > lo:
            raise ConfigurationError(f"empty cut-width bracket [{lo}, {hi}]")
        return lo, hi


@dataclass(frozen=True)
class Candidate:
    params: PartitionParams
    thermo: ThermoRecord


@dataclass(frozen=True)
class CollapseProposal:
    """Outcome of one variational solve.

    ``status`` is ``unique``, ``tied`` or ``infeasible``; ``candidates``
    holds one entry for ``unique``, the degenerate set for ``tied`` and is
    empty for ``infeasible``.  After a tie-break, ``tie_choice`` and
    ``tie_size`` record which member was drawn.
    """

    status: str
    candidates: tuple = ()
    grid: object = None
    tie_choice: int | None = None
    tie_size: int | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def params(self):
        return self.candidates[0].params if self.candidates else None

    @property
    def thermo(self):
        return self.candidates[0].thermo if self.candidates else None

    @property
    def partition(self):
        if not self.candidates:
            return None
        return build(self.params, self.grid, allow_unresolved=True)


# kernel tables for the width ladder, shared between solves on the same grid
_KERNEL_CACHE = {}


# --- cut evaluator -----------------------------------------------------------

class CutEvaluator:
    """Exact single-cut quantities for the band-limited density of ``psi``."""

    def __init__(self, psi: WaveFunction, constants: PhysicalConstants):
        g = psi.grid
        self.grid = g
        self.constants = constants
        rho = density(psi)
        rho = rho / g.integrate(rho)
        self.rho = rho
        self.k = g.rwavenumbers
        self.rhat = np.fft.rfft(rho)
        self.x0 = g.coordinates[0]
        n = g.points
        self._amp = np.full(self.k.shape, 2.0)
        self._amp[0] = 1.0
        self._amp[-1] = 1.0
        # mass left of each node from the spectral antiderivative
        ik = 1j * self.k
        ik[0] = 1.0
        anti = self.rhat / ik
        anti[0] = 0.0
        G = np.fft.irfft(anti, n)
        self.left_nodes = np.arange(n) / n + (G - G[0])
        self.s_identity = float(g.integrate(xlogy(rho, rho)) - 1.0)
        self.coef = self.constants.hbar**2 / (8.0 * self.constants.mass)
        # widths above this see the periodic images of the density
        self.l_image = g.length / 80.0

    # quantities -----------------------------------------------------------
    def _combine(self, left_step, l, A, B, C, D):
        """Turn kernel integrals into physical quantities (broadcasting)."""
        w_right = np.clip((1.0 - left_step) + 0.5 * C, 0.0, 1.0)
        w_left = 1.0 - w_right
        g = 0.5 * B
        de = self.coef * A / l**2
        disc = np.sqrt((w_right - w_left) ** 2 + 4.0 * g * g)
        lam1 = 0.5 * (1.0 + disc)
        det = np.clip(w_left * w_right - g * g, 0.0, None)
        lam2 = det / lam1
        ds = entr(lam1) + entr(lam2)
        sp = self.s_identity + entr(w_left) + entr(w_right) + D
        res = self.constants.T0 * ds - de
        return {"w_left": w_left, "w_right": w_right, "overlap": g, "dE": de, "dS": ds,
                "s_prime": sp, "residual": res, "lam": (lam1, lam2)}

    def _kernels(self, lv):
        key = (self.grid, lv.tobytes()) if lv.size > 4 else None
        if key is not None and key in _KERNEL_CACHE:
            return _KERNEL_CACHE[key]
        q = np.outer(lv, self.k)
        out = (ft_sech2(q), ft_sech(q), 1j * ft_tanh_minus_sign(q), ft_branch_entropy(q))
        if key is not None:
            if len(_KERNEL_CACHE) >= 8:
                _KERNEL_CACHE.pop(next(iter(_KERNEL_CACHE)))
            _KERNEL_CACHE[key] = out
        return out

    def scan_nodes(self, lv):
        """Quantities at every grid node for each width in ``lv`` (shape ``(nl, n)``)."""
        n = self.grid.points
        lv = np.asarray(lv, dtype=float)
        lcol = lv[:, None]
        A, B, C, D = (lcol * np.fft.irfft(self.rhat[None, :] * K, n, axis=1) for K in self._kernels(lv))
        g = self.grid
        lags = np.arange(-(n - 1), n) * g.spacing
        for i in np.flatnonzero(lv > self.l_image):
            kern = [a + b for a, b in zip(kernel_values((lags + g.length) / lv[i]),
                                          kernel_values((lags - g.length) / lv[i]))]
            for arr, k in zip((A, B, C, D), kern):
                # sum_j rho_j k(x_j - x_i) for every node i
                arr[i] -= g.spacing * self._correlate(k)
        return self._combine(self.left_nodes[None, :], lcol, A, B, C, D)

    def _correlate(self, k):
        n = self.grid.points
        full = fftconvolve(self.rho, k[::-1], mode="full")
        # full[n - 1 + i] = sum_j rho_j k[(j - i) + n - 1]
        return full[n - 1 + np.arange(n)]

    def _phase(self, X):
        return self._amp * self.rhat * np.exp(1j * self.k * (X - self.x0)) / self.grid.points

    def left_mass(self, X) -> float:
        """Probability in ``[x_0, X]`` for the interpolated density."""
        th = X - self.x0
        k = self.k[1:]
        term = self._phase(X)[1:] * (1.0 - np.exp(-1j * k * th)) / (1j * k)
        return float(th / self.grid.length + np.sum(term.real))

    def at(self, X, lv):
        """Quantities at an arbitrary position for the widths ``lv``."""
        lv = np.atleast_1d(np.asarray(lv, dtype=float))
        ph = self._phase(X)
        A, B, C, D = ((K @ ph).real * lv for K in self._kernels(lv))
        big = lv > self.l_image
        if big.any():
            g = self.grid
            x = g.coordinates
            for sgn in (1.0, -1.0):
                u = (x[None, :] + sgn * g.length - X) / lv[big, None]
                for arr, k in zip((A, B, C, D), kernel_values(u)):
                    arr[big] -= g.spacing * (k @ self.rho)
        return self._combine(self.left_mass(X), lv, A, B, C, D)

    def thermo(self, X, l) -> ThermoRecord:
        q = self.at(X, [l])
        lam = np.array([q["lam"][0][0], q["lam"][1][0]])
        return ThermoRecord(
            weights=np.array([q["w_left"][0], q["w_right"][0]]),
            s_prime=float(q["s_prime"][0]),
            delta_e=float(q["dE"][0]),
            delta_s=float(q["dS"][0]),
            residual=float(q["residual"][0]),
            gram_eigenvalues=lam,
            s_prime_identity=self.s_identity,
            overlap=float(q["overlap"][0] / math.sqrt(max(q["w_left"][0] * q["w_right"][0], 1e-300))),
        )

    def residual_at(self, X, l) -> float:
        return float(self.at(X, [l])["residual"][0])

    def point(self, X):
        """Fast scalar evaluation at fixed ``X`` (see :class:`_Point`)."""
        return _Point(self, X)


class _Point:
    """Cached per-position data for repeated single-width evaluations."""

    def __init__(self, ev, X):
        self.ev = ev
        self.X = X
        ph = ev._phase(X)
        self.re = ph.real.copy()
        self.im = ph.imag.copy()
        self.left = ev.left_mass(X)
        g = ev.grid
        self._shifted = [(g.coordinates + sgn * g.length - X) for sgn in (1.0, -1.0)]

    def _integrals(self, l, entropy):
        ev = self.ev
        q = ev.k * l
        A = l * (ft_sech2(q) @ self.re)
        B = l * (ft_sech(q) @ self.re)
        C = -l * (ft_tanh_minus_sign(q) @ self.im)
        D = l * (ft_branch_entropy(q) @ self.re) if entropy else 0.0
        if l > ev.l_image:
            dx = ev.grid.spacing
            for u in self._shifted:
                ka, kb, kc, kd = kernel_values(u / l)
                A -= dx * (ka @ ev.rho)
                B -= dx * (kb @ ev.rho)
                C -= dx * (kc @ ev.rho)
                if entropy:
                    D -= dx * (kd @ ev.rho)
        return A, B, C, D

    def residual(self, l) -> float:
        A, B, C, _ = self._integrals(l, False)
        q = self.ev._combine(self.left, l, A, B, C, 0.0)
        return float(q["residual"])

    def quantities(self, l):
        return self.ev._combine(self.left, l, *self._integrals(l, True))


# --- solve -------------------------------------------------------------------

def _width_grid(cfg, grid, floor=0.0):
    lo, hi = cfg.l_bracket(grid)
    lo = min(max(lo, floor), 0.5 * hi)
    n = max(2, int(math.ceil(math.log10(hi / lo) * cfg.l_per_decade)) + 1)
    return np.geomspace(lo, hi, n)


def _node_roots(q, lv, cfg):
    """Smallest upward root bracket per node and an interpolated S' there."""
    res = q["residual"]
    neg = res < 0
    cross = neg[:-1] & ~neg[1:]
    has = cross.any(axis=0)
    idx = np.argmax(cross, axis=0)
    cols = np.arange(res.shape[1])
    r0, r1 = res[idx, cols], res[idx + 1, cols]
    frac = np.where(has, -r0 / np.where(r1 - r0 == 0, 1.0, r1 - r0), 0.0)
    sp = q["s_prime"][idx, cols] + frac * (q["s_prime"][idx + 1, cols] - q["s_prime"][idx, cols])
    wmin = np.minimum(q["w_left"][idx, cols], q["w_right"][idx, cols])
    ok = has & (wmin >= cfg.w_floor)
    step = np.log(lv[1] / lv[0])
    log_l = np.log(lv[idx]) + np.clip(frac, 0.0, 1.0) * step
    return ok, idx, sp, log_l


class _Fiber:
    """Root ``l*(X)`` of the constraint and ``S'`` along it."""

    def __init__(self, ev, lv, cfg):
        self.ev = ev
        self.lv = lv
        self.cfg = cfg
        self.evals = 0

    def root(self, pt, i_hint=None):
        lv = self.lv
        if i_hint is not None:
            lo = lv[max(i_hint - 1, 0)]
            hi = lv[min(i_hint + 2, len(lv) - 1)]
            if not (pt.residual(lo) < 0 <= pt.residual(hi)):
                i_hint = None
        if i_hint is None:
            res = self.ev.at(pt.X, lv)["residual"]
            cross = np.flatnonzero((res[:-1] < 0) & (res[1:] >= 0))
            if cross.size == 0:
                return None
            lo, hi = lv[cross[0]], lv[cross[0] + 1]
            if not pt.residual(lo) < 0 <= pt.residual(hi):
                # sign lost to rounding right at the bracket end
                return None
        self.evals += 1
        return brentq(pt.residual, lo, hi, xtol=1e-300, rtol=1e-11,
                      maxiter=self.cfg.max_refine_iter * 4)

    def s_prime(self, X, i_hint=None):
        pt = self.ev.point(X)
        l = self.root(pt, i_hint)
        if l is None:
            return -np.inf, None
        return float(pt.quantities(l)["s_prime"]), l


def _refine(fiber, X0, i_hint, dx, cfg, flat):
    """Local search in ``[X0 - dx, X0 + dx]``.

    On an S' plateau (``flat``) the objective is the cut width instead:
    among equally good cuts the sharpest one is kept.  Returns
    ``(X, l, S', polish)`` where ``polish`` is None on plateaus and
    otherwise re-runs the search up to a nearby feasibility edge.
    """
    cache = {}

    def f(X):
        sp, l = fiber.s_prime(X, i_hint)
        cache[X] = (sp, l)
        if not np.isfinite(sp):
            return 1e300
        return math.log(l) if flat else -sp

    f(X0)
    minimize_scalar(f, bounds=(X0 - dx, X0 + dx), method="bounded",
                    options={"xatol": dx * 1e-4, "maxiter": cfg.max_refine_iter})
    feasible = [x for x in cache if cache[x][1] is not None]
    if not feasible:
        return X0, None, -np.inf, None
    top = max(cache[x][0] for x in feasible)
    if flat:
        near = [x for x in feasible if cache[x][0] >= top - cfg.flat_tol]
        best_X = min(near, key=lambda x: cache[x][1])
        sp, l = cache[best_X]
        return best_X, l, sp, None
    best_X = max(feasible, key=lambda x: cache[x][0])

    def polish():
        X = _polish_edge(f, cache, best_X, gain_tol=1e-3 * cfg.eta_tie)
        return cache[X][0], X, cache[X][1]

    sp, l = cache[best_X]
    return best_X, l, sp, polish


def _polish_edge(f, cache, X, iters=50, gain_tol=0.0):
    """Bisect towards the nearest evaluated point where the root is lost or
    jumps to another branch; the maximum then sits on that edge and the
    smooth search above converges to it only slowly.  Stops early once an
    accepted step gains less than ``gain_tol`` in S'."""
    l0 = cache[X][1]

    def broken(x):
        l = cache[x][1]
        return l is None or abs(math.log(l / l0)) > math.log(2.0)

    bad = [x for x in cache if broken(x)]
    if not bad:
        return X
    b = min(bad, key=lambda x: abs(x - X))
    if any(min(X, b) < x < max(X, b) for x in cache):
        # a regular point lies between: the edge is not adjacent
        return X
    a = X
    for _ in range(iters):
        m = 0.5 * (a + b)
        f(m)
        if not broken(m) and cache[m][0] >= cache[a][0]:
            gain = cache[m][0] - cache[a][0]
            a = m
            if gain < gain_tol:
                break
        else:
            b = m
    return a


def _basins(prof, sp, cfg):
    """Representative peaks of distinct S' basins, best first.

    Two peaks share a basin when the profile between them never drops more
    than ``eta_tie`` below the lower one.
    """
    peaks, _ = find_peaks(prof, plateau_size=1)
    peaks = peaks - 1
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(prof[1:-1]))])
    peaks = peaks[np.argsort(-sp[peaks], kind="stable")]
    top = sp[peaks[0]]
    reps = []
    for p in peaks:
        if sp[p] < top - cfg.screen or len(reps) == cfg.max_candidates:
            break
        merged = False
        for b in reps:
            lo, hi = min(p, b), max(p, b)
            if prof[lo + 1:hi + 2].min() >= sp[p] - cfg.eta_tie:
                merged = True
                break
        if not merged:
            reps.append(int(p))
    return reps


def _plateau_start(prof, sp, log_l, rep, flat_tol):
    """Sharpest node on the plateau around ``rep`` and whether it is flat."""
    lvl = sp[rep] - flat_tol
    n = sp.size
    lo = rep
    while lo > 0 and prof[lo] >= lvl:  # prof is offset by one
        lo -= 1
    hi = rep
    while hi < n - 1 and prof[hi + 2] >= lvl:
        hi += 1
    run = np.arange(lo, hi + 1)
    run = run[prof[run + 1] >= lvl]
    start = int(run[np.argmin(log_l[run])])
    return start, run.size > 1


def solve(psi: WaveFunction, constants: PhysicalConstants, cfg: SolverConfig | None = None) -> CollapseProposal:
    """Maximize S' over single tanh cuts on the constraint surface.

    Returns ``infeasible`` when no cut satisfies the constraint inside the
    width bracket with both branch weights above ``w_floor``, or when the
    best cut improves S' by less than ``eps_gain``.
    """
    cfg = cfg or SolverConfig()
    grid = psi.grid
    ev = CutEvaluator(psi, constants)
    # below this width the round-off bound on Delta E, 2 eps sum|c_k| coef / l,
    # exceeds the constraint tolerance
    c_sum = float(np.sum(ev._amp * np.abs(ev.rhat))) / grid.points
    floor = 2.0 * ev.coef * np.finfo(float).eps * c_sum / (cfg.tol_c * constants.T0)
    lv = _width_grid(cfg, grid, floor)
    q = ev.scan_nodes(lv)
    ok, idx, sp, log_l = _node_roots(q, lv, cfg)
    diag = {"s_prime_identity": ev.s_identity, "feasible_nodes": int(ok.sum())}
    if not ok.any():
        log.debug("solve: no feasible cut")
        return CollapseProposal("infeasible", grid=grid, diagnostics=diag)

    # basins of the node-level S' profile; infeasible nodes separate basins
    floor = float(np.min(sp[ok])) - 1.0
    prof = np.concatenate([[floor], np.where(ok, sp, floor), [floor]])
    x = grid.coordinates
    fiber = _Fiber(ev, lv, cfg)
    found = []
    for rep in _basins(prof, sp, cfg):
        i, flat = _plateau_start(prof, sp, log_l, rep, cfg.flat_tol)
        X, l, s, polish = _refine(fiber, float(x[i]), int(idx[i]), grid.spacing, cfg, flat)
        if l is not None:
            found.append((s, X, l, polish))
    if not found:
        diag["root_solves"] = fiber.evals
        return CollapseProposal("infeasible", grid=grid, diagnostics=diag)
    # edge polishing moves S' by far less than this; skip it where it cannot
    # change the status or the candidate set
    margin = 1e-4 + cfg.eta_tie
    top = max(t[0] for t in found)
    if top - ev.s_identity >= cfg.eps_gain - margin:
        found = [polish() if polish and s >= top - margin else (s, X, l)
                 for s, X, l, polish in found]
    found = [t[:3] for t in found]
    diag["root_solves"] = fiber.evals
    found.sort(key=lambda t: -t[0])
    best = found[0][0]
    diag["s_gain"] = best - ev.s_identity
    if best - ev.s_identity < cfg.eps_gain:
        return CollapseProposal("infeasible", grid=grid, diagnostics=diag)

    tol = cfg.tol_c * constants.T0
    cands = []
    for s, X, l in found:
        if s < best - cfg.eta_tie:
            continue
        if any(abs(X - c.params.X) <= 2 * grid.spacing for c in cands):
            continue
        th = ev.thermo(X, l)
        if abs(th.residual) > tol:
            log.warning("cut at X=%.6g misses the constraint by %.3e", X, th.residual)
            continue
        cands.append(Candidate(PartitionParams.tanh_pair(X, l), th))
    if not cands:
        return CollapseProposal("infeasible", grid=grid, diagnostics=diag)
    status = "tied" if len(cands) > 1 else "unique"
    return CollapseProposal(status, tuple(cands), grid, diagnostics=diag)


def break_tie(p: CollapseProposal, rng) -> CollapseProposal:
    """Pick one member of a tied set with equal probability."""
    if p.status != "tied":
        raise ConfigurationError(f"break_tie needs a tied proposal, got {p.status}")
    k = int(rng.integers(len(p.candidates)))
    return replace(p, status="unique", candidates=(p.candidates[k],),
                   tie_choice=k, tie_size=len(p.candidates))


def sample_outcome(psi: WaveFunction, p: CollapseProposal, rng):
    """Draw branch ``n`` with probability ``w_n`` and return ``(n, Phi_n)``.

    An infeasible proposal is a no-op and returns ``(None, psi)``.  Branch
    probabilities come from the band-limited weights; the outcome state is
    the sampled partition applied to the grid amplitudes and renormalized.
    """
    if p.status == "infeasible":
        return None, psi
    if p.status != "unique":
        raise ConfigurationError("resolve ties with break_tie before sampling")
    w = np.asarray(p.thermo.weights, dtype=float)
    w = w / w.sum()
    n = int(rng.choice(len(w), p=w))
    part = p.partition
    phi = outcomes(psi, part)[n]
    if phi is None:
        # branch carries weight only between nodes; fall back to the state itself
        log.warning("sampled branch %d has no support on the grid", n)
        return n, psi
    return n, phi
