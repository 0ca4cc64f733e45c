"""Collapse-event bookkeeping on the grid: weights, outcomes, S', dE, dS.

For a partition ``{P_n}`` of a state ``psi`` with density ``rho``:

* ``w_n = int rho P_n^2``
* ``Phi_n = P_n psi / sqrt(w_n)``
* ``S' = sum_n w_n int |Phi_n|^2 (log|Phi_n|^2 - 1)``
* ``dE = hbar^2/(2m) int rho sum_n (P_n')^2``
* ``dS = -Tr(rho_hat log rho_hat)`` for the mixture ``sum_n w_n |Phi_n><Phi_n|``,
  obtained from the N x N matrix ``M_nm = int rho P_n P_m``, which shares
  the nonzero spectrum of ``rho_hat``.

The pre-collapse state is pure, so its entropy is zero and ``dS`` is the
entropy of the mixture itself.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import entr, xlogy

from .errors import ConfigurationError
from .partition import Partition, PartitionParams, build, gradient_energy_density
from .qstate import WaveFunction, density, energy

log = logging.getLogger(__name__)

DEGENERATE_WEIGHT = 1e-14


@dataclass(frozen=True)
class ThermoRecord:
    """Per-partition quantities; ``overlap`` is the largest |<Phi_n|Phi_m>|."""

    weights: np.ndarray
    s_prime: float
    delta_e: float
    delta_s: float
    residual: float
    gram_eigenvalues: np.ndarray
    s_prime_identity: float = float("nan")
    overlap: float = float("nan")

    @property
    def s_gain(self) -> float:
        return self.s_prime - self.s_prime_identity


def _hbar_mass(constants):
    if constants is None:
        return 1.0, 1.0
    return constants.hbar, constants.mass


def _check(psi, p):
    if psi.grid != p.grid:
        raise ConfigurationError("state and partition live on different grids")


def weights(psi: WaveFunction, p: Partition) -> np.ndarray:
    """Branch probabilities, normalized by the state's own norm."""
    _check(psi, p)
    rho = density(psi)
    w = (p.values**2) @ rho
    return w / np.sum(rho)


def outcomes(psi: WaveFunction, p: Partition) -> list:
    """Normalized branch states ``P_n psi``; ``None`` marks degenerate branches."""
    w = weights(psi, p)
    out = []
    for n, (wn, pn) in enumerate(zip(w, p.values)):
        if wn <= DEGENERATE_WEIGHT:
            log.debug("branch %d excluded: weight %.3e", n, wn)
            out.append(None)
        else:
            out.append(WaveFunction.normalized(psi.grid, pn * psi.amplitudes, psi.time))
    return out


def s_prime(psi: WaveFunction, p: Partition) -> float:
    _check(psi, p)
    g = psi.grid
    rho = density(psi)
    rho = rho / g.integrate(rho)
    total = 0.0
    for pn in p.values:
        f = rho * pn**2
        wn = g.integrate(f)
        if wn <= 0:
            continue
        # w_n int u (log u - 1) with u = f / w_n, written in terms of f
        total += g.integrate(xlogy(f, f)) - wn * np.log(wn) - wn
    return float(total)


def delta_e(psi: WaveFunction, p: Partition, constants=None) -> float:
    """Energy cost from the gradient of the partition (independent of V)."""
    _check(psi, p)
    hbar, m = _hbar_mass(constants)
    rho = density(psi)
    return float(hbar**2 / (2 * m) * psi.grid.integrate(rho * gradient_energy_density(p)) / psi.norm)


def delta_e_oracle(psi: WaveFunction, p: Partition, potential=None, constants=None) -> float:
    """``sum_n w_n <Phi_n|H|Phi_n> - <psi|H|psi>`` with spectral kinetic energy."""
    _check(psi, p)
    hbar, m = _hbar_mass(constants)
    w = weights(psi, p)
    before = energy(psi, potential, hbar, m)
    after = sum(wn * energy(phi, potential, hbar, m)
                for wn, phi in zip(w, outcomes(psi, p)) if phi is not None)
    return float(after - before)


def gram_matrix(psi: WaveFunction, p: Partition) -> np.ndarray:
    """``M_nm = sqrt(w_n w_m) <Phi_n|Phi_m> = int rho P_n P_m`` (trace one)."""
    _check(psi, p)
    rho = density(psi)
    v = p.values
    return (v * rho) @ v.T / np.sum(rho)


def gram_eigenvalues(psi, p) -> np.ndarray:
    ev = np.linalg.eigvalsh(gram_matrix(psi, p))
    return np.clip(ev, 0.0, None)[::-1]


def von_neumann(eigenvalues) -> float:
    return float(np.sum(entr(np.clip(eigenvalues, 0.0, None))))


def delta_s(psi: WaveFunction, p: Partition) -> float:
    return von_neumann(gram_eigenvalues(psi, p))


def residual(record: ThermoRecord, constants) -> float:
    """``T0 dS - dE``; the constraint surface is ``residual == 0``."""
    return float(constants.T0 * record.delta_s - record.delta_e)


def thermo_record(psi: WaveFunction, p: Partition, constants) -> ThermoRecord:
    ev = gram_eigenvalues(psi, p)
    de = delta_e(psi, p, constants) if p.smooth else float("inf")
    ds = von_neumann(ev)
    ident = s_prime(psi, build(PartitionParams.identity(), psi.grid))
    M = gram_matrix(psi, p)
    d = np.sqrt(np.outer(np.diag(M), np.diag(M)))
    off = np.divide(M, d, out=np.zeros_like(M), where=d > 0)
    np.fill_diagonal(off, 0.0)
    return ThermoRecord(
        weights=weights(psi, p),
        s_prime=s_prime(psi, p),
        delta_e=de,
        delta_s=ds,
        residual=float(constants.T0 * ds - de),
        gram_eigenvalues=ev,
        s_prime_identity=ident,
        overlap=float(np.max(np.abs(off))) if p.N > 1 else 0.0,
    )
