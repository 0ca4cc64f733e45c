"""Partitions of unity ``sum_n P_n(x)^2 = 1`` with ``0 <= P_n <= 1``.

Smooth families are built from the tanh cut
``P_pm^2 = (1 +- tanh((x - X)/l)) / 2``; each component and its
derivative are evaluated through the logistic function so that values far
from the cut underflow cleanly to 0 or 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError
from .qstate import Grid, spectral_derivative

RESOLVE_CELLS = 4

FAMILIES = ("identity", "tanh_pair", "step_pair", "multi_cut", "refined")


@dataclass(frozen=True)
class PartitionParams:
    """Parametric description of a partition.

    ``sign`` flips the cut direction: with ``sign=+1`` the components are
    ordered (left, right); with ``sign=-1`` they are (right, left).
    ``cuts`` holds ``(X_k, l_k)`` pairs for ``multi_cut``.
    """

    family: str = "identity"
    X: float = 0.0
    l: float = 1.0
    sign: int = 1
    cuts: tuple = ()
    parents: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown partition family {self.family!r}")
        if self.sign not in (1, -1):
            raise ConfigurationError("partition sign must be +1 or -1")
        if self.family == "tanh_pair" and not self.l > 0:
            raise ConfigurationError("tanh_pair width l must be positive")
        if self.family == "multi_cut":
            cuts = tuple((float(X), float(l)) for X, l in self.cuts)
            if not cuts:
                raise ConfigurationError("multi_cut needs at least one cut")
            if any(b[0] <= a[0] for a, b in zip(cuts, cuts[1:])):
                raise ConfigurationError("multi_cut positions must be strictly increasing")
            if any(l <= 0 for _, l in cuts):
                raise ConfigurationError("multi_cut widths must be positive")
            object.__setattr__(self, "cuts", cuts)

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def tanh_pair(cls, X, l, sign=1):
        return cls("tanh_pair", X=float(X), l=float(l), sign=int(sign))

    @classmethod
    def step_pair(cls, X, sign=1):
        return cls("step_pair", X=float(X), sign=int(sign))

    @classmethod
    def multi_cut(cls, cuts):
        return cls("multi_cut", cuts=tuple(cuts))

    def mirrored(self):
        """Parameters of the parity image x -> -x (component order preserved)."""
        if self.family in ("tanh_pair", "step_pair"):
            return PartitionParams(self.family, X=-self.X, l=self.l, sign=-self.sign)
        if self.family == "identity":
            return self
        raise ConfigurationError(f"mirror not defined for {self.family}")

    def to_dict(self):
        if self.family == "identity":
            return {"family": "identity"}
        if self.family == "multi_cut":
            return {"family": "multi_cut", "cuts": [list(c) for c in self.cuts]}
        if self.family == "step_pair":
            return {"family": "step_pair", "X": self.X, "sign": self.sign}
        if self.family == "tanh_pair":
            return {"family": "tanh_pair", "X": self.X, "l": self.l, "sign": self.sign}
        return {"family": "refined", "parents": [p.to_dict() for p in self.parents]}


@dataclass(frozen=True, eq=False)
class Partition:
    """Sampled components ``values[n, j] = P_n(x_j)`` and their derivatives.

    ``gradients`` is None for step partitions (the derivative is singular).
    ``resolved`` is False when a tanh width below ``4 dx`` was explicitly
    allowed; such a partition is exact at the nodes but its gradient is not
    representable on the grid.
    """

    grid: Grid
    values: np.ndarray
    gradients: np.ndarray | None
    params: PartitionParams
    resolved: bool = True

    def __post_init__(self):
        for arr in (self.values, self.gradients):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def smooth(self) -> bool:
        return self.gradients is not None

    def unity_residual(self) -> float:
        return float(np.max(np.abs(np.sum(self.values**2, axis=0) - 1.0)))

    def gradient_residual(self, envelope) -> float:
        """Max deviation between ``d(P_n f)/dx`` computed spectrally and by the
        product rule, for a smooth, compactly supported envelope ``f``.

        The envelope removes the box-edge jump of the non-periodic cut
        functions so that spectral differentiation is meaningful.
        """
        if not self.smooth:
            raise ConfigurationError("step partitions have no gradient")
        f = np.asarray(envelope, dtype=float)
        df = spectral_derivative(self.grid, f).real
        worst = 0.0
        for p, dp in zip(self.values, self.gradients):
            spectral = spectral_derivative(self.grid, p * f).real
            worst = max(worst, float(np.max(np.abs(spectral - (dp * f + p * df)))))
        return worst


def _check_width(l, grid, allow_unresolved):
    if l < RESOLVE_CELLS * grid.spacing:
        if not allow_unresolved:
            raise ConfigurationError(
                f"cut width l={l:.3g} is below the resolvable minimum {RESOLVE_CELLS * grid.spacing:.3g}"
            )
        return False
    return True


def _cut(x, X, l, sign=1):
    """``(P_-, P_+, dP_-, dP_+)`` for a single tanh cut."""
    z = 2.0 * sign * (x - X) / l
    p_plus2 = expit(z)
    p_minus2 = expit(-z)
    p_plus = np.sqrt(p_plus2)
    p_minus = np.sqrt(p_minus2)
    d_plus = sign * p_plus * p_minus2 / l
    d_minus = -sign * p_minus * p_plus2 / l
    return p_minus, p_plus, d_minus, d_plus


def build(params: PartitionParams, grid: Grid, allow_unresolved=False) -> Partition:
    x = grid.coordinates
    fam = params.family
    if fam == "identity":
        return Partition(grid, np.ones((1, grid.points)), np.zeros((1, grid.points)), params)
    if fam == "tanh_pair":
        ok = _check_width(params.l, grid, allow_unresolved)
        pm, pp, dm, dp = _cut(x, params.X, params.l, params.sign)
        return Partition(grid, np.vstack([pm, pp]), np.vstack([dm, dp]), params, resolved=ok)
    if fam == "step_pair":
        side = np.sign(params.sign * (x - params.X))
        # nodes exactly on the cut are shared equally (Heaviside(0) = 1/2)
        p_plus = np.where(side > 0, 1.0, np.where(side < 0, 0.0, np.sqrt(0.5)))
        p_minus = np.where(side < 0, 1.0, np.where(side > 0, 0.0, np.sqrt(0.5)))
        return Partition(grid, np.vstack([p_minus, p_plus]), None, params)
    if fam == "multi_cut":
        ok = all(_check_width(l, grid, allow_unresolved) for _, l in params.cuts)
        values, grads = [], []
        # stick breaking: P_k = prod_{j<k} P_+(cut_j) * P_-(cut_k)
        carry = np.ones_like(x)
        carry_logd = np.zeros_like(x)
        for X, l in params.cuts:
            pm, pp, _, _ = _cut(x, X, l)
            values.append(carry * pm)
            grads.append(carry * pm * (carry_logd - pp**2 / l))
            carry = carry * pp
            carry_logd = carry_logd + pm**2 / l
        values.append(carry)
        grads.append(carry * carry_logd)
        return Partition(grid, np.vstack(values), np.vstack(grads), params, resolved=ok)
    raise ConfigurationError("refined partitions are produced by refine(), not build()")


def refine(p: Partition, q: Partition) -> Partition:
    """Pointwise products ``P_n Q_m``; components that vanish identically are dropped."""
    if p.grid != q.grid:
        raise ConfigurationError("cannot refine partitions on different grids")
    if p.params.family == "identity":
        return q
    if q.params.family == "identity":
        return p
    values, grads = [], []
    smooth = p.smooth and q.smooth
    for n in range(p.N):
        for m in range(q.N):
            v = p.values[n] * q.values[m]
            if not np.any(v):
                continue
            values.append(v)
            if smooth:
                grads.append(p.gradients[n] * q.values[m] + p.values[n] * q.gradients[m])
    params = PartitionParams("refined", parents=(p.params, q.params))
    return Partition(p.grid, np.vstack(values), np.vstack(grads) if smooth else None, params,
                     resolved=p.resolved and q.resolved)


def gradient_energy_density(p: Partition) -> np.ndarray:
    """``sum_n (dP_n/dx)^2``; undefined for step partitions."""
    if not p.smooth:
        raise ConfigurationError("gradient energy diverges for step partitions")
    return np.sum(p.gradients**2, axis=0)
