"""Brute-force reference implementations used by the test suite.

Nothing here is called by production code.  The routines trade speed for
transparency: the entropy is obtained by diagonalizing the full grid
density matrix, the cut search is an exhaustive scan with bisection, and
integrals are checked with Richardson-extrapolated trapezoid sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, xlogy

from .errors import ConfigurationError
from .qstate import PhysicalConstants, WaveFunction

DENSE_MAX_POINTS = 128
SCAN_MAX_POINTS = 256


# --- dense density matrix ----------------------------------------------------

@dataclass(frozen=True)
class DenseState:
    """Grid density matrix ``rho_hat = sum_n w_n |Phi_n><Phi_n|``.

    Rows and columns are indexed by grid nodes with the ``sqrt(dx)``
    measure folded in, so ``trace(matrix) == sum_n w_n``.
    """

    matrix: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def check(self, herm_tol=1e-12, trace_tol=1e-10, psd_tol=1e-10):
        m = self.matrix
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > herm_tol:
            raise ConfigurationError(f"density matrix not Hermitian (max dev {herm:.3e})")
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > trace_tol:
            raise ConfigurationError(f"density matrix trace {tr!r} differs from 1")
        lo = float(self.eigenvalues()[0])
        if lo < -psd_tol:
            raise ConfigurationError(f"density matrix has negative eigenvalue {lo:.3e}")
        return self


def _values(p):
    return np.atleast_2d(np.asarray(getattr(p, "values", p), dtype=float))


def dense_state(psi: WaveFunction, p) -> DenseState:
    """Dense mixture of the branches of ``psi`` under partition ``p``.

    ``p`` is a :class:`partition.Partition` or an ``(N, n)`` array of
    component values.
    """
    n = psi.grid.points
    if n > DENSE_MAX_POINTS:
        raise ConfigurationError(f"dense oracle limited to {DENSE_MAX_POINTS} points, got {n}")
    v = _values(p)
    if v.shape[1] != n:
        raise ConfigurationError("partition and state sizes differ")
    a = psi.amplitudes * np.sqrt(psi.grid.spacing / psi.norm)
    branches = v * a  # unnormalized sqrt(w_n) Phi_n
    return DenseState(branches.T @ branches.conj())


def dense_entropy(psi: WaveFunction, p) -> float:
    """``-Tr(rho_hat log rho_hat)`` by full diagonalization."""
    lam = dense_state(psi, p).check().eigenvalues()
    lam = np.clip(lam, 0.0, None)
    return float(-np.sum(xlogy(lam, lam)))


# --- exhaustive cut scan -----------------------------------------------------

@dataclass(frozen=True)
class ScanMaximum:
    X: float
    l: float
    s_prime: float


@dataclass(frozen=True)
class ScanResult:
    """Best cut of the exhaustive scan; ``maxima`` lists every local maximum
    of ``S'(X, l*(X))`` along the scan, best first."""

    feasible: bool
    s_prime_identity: float
    maxima: tuple = field(default_factory=tuple)

    @property
    def best(self) -> ScanMaximum | None:
        return self.maxima[0] if self.maxima else None


class _Direct:
    """Cut quantities by direct grid sums over an explicit tanh cut."""

    def __init__(self, psi, constants):
        g = psi.grid
        self.dx = g.spacing
        self.x = g.coordinates
        rho = np.abs(psi.amplitudes) ** 2
        self.rho = rho / (np.sum(rho) * self.dx)
        self.hbar, self.mass, self.T0 = constants.hbar, constants.mass, constants.T0

    def fields(self, X, l):
        """Arrays (leading shape of ``X``) of ``residual, s_prime, w_minus``."""
        X = np.asarray(X, dtype=float)[..., None]
        l = np.asarray(l, dtype=float)[..., None]
        z = 2.0 * (self.x - X) / l
        pp2, pm2 = expit(z), expit(-z)
        rho, dx = self.rho, self.dx
        wp = np.sum(rho * pp2, axis=-1) * dx
        wm = np.sum(rho * pm2, axis=-1) * dx
        g = np.sum(rho * np.sqrt(pp2 * pm2), axis=-1) * dx
        # (P_+')^2 + (P_-')^2 with P_+' = P_+ P_-^2 / l and P_-' = -P_- P_+^2 / l
        grad2 = (pp2 * pm2**2 + pm2 * pp2**2) / l**2
        de = self.hbar**2 / (2 * self.mass) * np.sum(rho * grad2, axis=-1) * dx
        tr = wp + wm
        det = wp * wm - g * g
        disc = np.sqrt(np.clip(0.25 * tr * tr - det, 0.0, None))
        lam = np.stack([0.5 * tr + disc, 0.5 * tr - disc])
        lam = np.clip(lam, 0.0, None)
        ds = -np.sum(xlogy(lam, lam), axis=0)
        sp = 0.0
        for p2, w in ((pm2, wm), (pp2, wp)):
            f = rho * p2
            sp = sp + np.sum(xlogy(f, f), axis=-1) * dx - xlogy(w, w) - w
        return self.T0 * ds - de, sp, wm

    def s_identity(self):
        return float(np.sum(xlogy(self.rho, self.rho)) * self.dx - 1.0)


def exhaustive_solve(psi: WaveFunction, constants: PhysicalConstants, resolution=200,
                     l_min=None, l_max=None, w_floor=1e-10, eps_gain=1e-6, bisect_iter=80) -> ScanResult:
    """Scan ``resolution`` cut positions and ``resolution`` log-spaced widths.

    For every ``X`` the smallest width at which ``T0 dS - dE`` turns from
    negative to non-negative is bracketed on the width ladder and bisected;
    ``S'`` at that root is maximized over ``X`` by golden-section search
    around each local maximum of the scan.  Widths default to
    ``[4 dx, L/16]`` so that grid sums are exact to rounding.
    """
    g = psi.grid
    if g.points > SCAN_MAX_POINTS:
        raise ConfigurationError(f"exhaustive scan limited to {SCAN_MAX_POINTS} points, got {g.points}")
    d = _Direct(psi, constants)
    lo = 4 * g.spacing if l_min is None else l_min
    hi = g.length / 16 if l_max is None else l_max
    lv = np.geomspace(lo, hi, resolution)
    margin = g.length / 16
    xs = np.linspace(g.coordinates[0] + margin, g.coordinates[-1] - margin, resolution)
    s_id = d.s_identity()

    def root(X):
        """Smallest upward root ``l*(X)`` (NaN when none), vectorized over ``X``."""
        X = np.atleast_1d(np.asarray(X, dtype=float))
        res = np.stack([d.fields(X, np.full_like(X, l))[0] for l in lv])
        neg = res < 0
        up = neg[:-1] & ~neg[1:]
        has = up.any(axis=0)
        k = np.argmax(up, axis=0)
        a = np.log(lv[k])
        b = np.log(lv[k + 1])
        for _ in range(bisect_iter):
            m = 0.5 * (a + b)
            r = d.fields(X, np.exp(m))[0]
            a = np.where(r < 0, m, a)
            b = np.where(r < 0, b, m)
        return np.where(has, np.exp(0.5 * (a + b)), np.nan)

    def value(X):
        ls = root(X)
        _, sp, wm = d.fields(np.atleast_1d(X), np.where(np.isnan(ls), 1.0, ls))
        ok = ~np.isnan(ls) & (wm > w_floor) & (1 - wm > w_floor)
        return np.where(ok, sp, -np.inf), ls

    sp, ls = value(xs)
    maxima = []
    step = xs[1] - xs[0]
    for i in range(resolution):
        if not np.isfinite(sp[i]):
            continue
        left = sp[i - 1] if i > 0 else -np.inf
        right = sp[i + 1] if i + 1 < resolution else -np.inf
        if sp[i] < left or sp[i] < right or (sp[i] == left and i > 0):
            continue
        a, b = xs[i] - step, xs[i] + step
        f = lambda X: -float(value(X)[0][0])
        invphi = (np.sqrt(5) - 1) / 2
        c, e = b - invphi * (b - a), a + invphi * (b - a)
        fc, fe = f(c), f(e)
        for _ in range(60):
            if fc < fe:
                b, e, fe = e, c, fc
                c = b - invphi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, e, fe
                e = a + invphi * (b - a)
                fe = f(e)
        Xb = 0.5 * (a + b)
        vb, lb = value(Xb)
        cand = [(float(vb[0]), Xb, float(lb[0])), (float(sp[i]), float(xs[i]), float(ls[i]))]
        s, X, l = max(cand, key=lambda t: t[0])
        if np.isfinite(s):
            maxima.append(ScanMaximum(X, l, s))
    maxima.sort(key=lambda m: -m.s_prime)
    feasible = bool(maxima) and maxima[0].s_prime - s_id >= eps_gain
    return ScanResult(feasible, s_id, tuple(maxima) if feasible else ())


# --- quadrature --------------------------------------------------------------

def trapezoid(samples, h):
    f = np.asarray(samples)
    return h * (np.sum(f) - 0.5 * (f[0] + f[-1]))


def quadrature_check(samples, h) -> float:
    """Richardson-extrapolated trapezoid integral of equispaced samples.

    ``samples`` includes both end points and has odd length; the estimate
    combines step ``h`` and ``2 h`` as ``(4 T_h - T_2h) / 3``.
    """
    f = np.asarray(samples)
    if f.ndim != 1 or f.size < 5 or f.size % 2 == 0:
        raise ConfigurationError("quadrature_check needs an odd number (>= 5) of samples")
    fine = trapezoid(f, h)
    coarse = trapezoid(f[::2], 2 * h)
    return (4 * fine - coarse) / 3
