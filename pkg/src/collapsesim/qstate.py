"""Uniform periodic 1D grid, wavefunction snapshots and elementary observables.

All integrals use the periodic trapezoid rule (a plain sum times ``dx``),
which is spectrally accurate for smooth, compactly supported integrands.
Derivatives are spectral.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, NumericalFailure

NORM_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Box ``[-L/2, L/2)`` sampled at ``points`` equispaced nodes."""

    length: float
    points: int

    def __post_init__(self):
        n = int(self.points)
        if n < 16 or n & (n - 1):
            raise ConfigurationError(f"grid.points must be a power of two >= 16, got {self.points}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ConfigurationError(f"grid.length must be positive, got {self.length}")
        object.__setattr__(self, "points", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.points

    dx = spacing

    @cached_property
    def coordinates(self) -> np.ndarray:
        x = -0.5 * self.length + self.spacing * np.arange(self.points)
        x.flags.writeable = False
        return x

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)
        k.flags.writeable = False
        return k

    @cached_property
    def rwavenumbers(self) -> np.ndarray:
        """Non-negative wavenumbers matching ``np.fft.rfft`` output."""
        k = 2.0 * np.pi * np.fft.rfftfreq(self.points, d=self.spacing)
        k.flags.writeable = False
        return k

    def integrate(self, f) -> float:
        return float(np.sum(f) * self.spacing)

    def edge_mass(self, rho, cells: int = 4) -> float:
        """Probability within ``cells`` grid spacings of either box edge."""
        return float((np.sum(rho[:cells]) + np.sum(rho[-cells:])) * self.spacing)


@dataclass(frozen=True)
class PhysicalConstants:
    """hbar, mass, the collapse energy scale T0 and the collapse rate gamma0.

    ``gamma0 = 0`` is accepted and switches collapse off entirely.
    """

    hbar: float = 1.0
    mass: float = 1.0
    T0: float = 1.0
    gamma0: float = 1.0

    def __post_init__(self):
        bad = [name for name in ("hbar", "mass", "T0") if not getattr(self, name) > 0]
        if not self.gamma0 >= 0:
            bad.append("gamma0")
        if bad:
            raise ConfigurationError(
                "constants must be positive: " + ", ".join(bad),
                [f"constants.{b} must be positive" for b in bad],
            )

    @property
    def tau0(self) -> float:
        return np.inf if self.gamma0 == 0 else 1.0 / self.gamma0

    @property
    def lambda0(self) -> float:
        """Thermal de Broglie wavelength at energy T0."""
        return self.hbar * np.sqrt(2.0 * np.pi / (self.mass * self.T0))

    @property
    def regime_ratio(self) -> float:
        """T0*tau0/(4 pi hbar); the model assumes this is small."""
        return self.T0 * self.tau0 / (4.0 * np.pi * self.hbar)

    @classmethod
    def from_lambda0(cls, lambda0, hbar=1.0, mass=1.0, gamma0=1.0):
        T0 = 2.0 * np.pi * hbar**2 / (mass * lambda0**2)
        return cls(hbar=hbar, mass=mass, T0=T0, gamma0=gamma0)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Immutable snapshot of Psi(x_j) at a given time."""

    grid: Grid
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128)
        if a.shape != (self.grid.points,):
            raise ConfigurationError(f"amplitudes shape {a.shape} does not match grid of {self.grid.points} points")
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("wavefunction has non-finite amplitudes")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def normalized(cls, grid, amplitudes, time=0.0):
        a = np.asarray(amplitudes, dtype=np.complex128)
        nrm = np.sqrt(np.sum(np.abs(a) ** 2) * grid.spacing)
        if not nrm > 0:
            raise NumericalFailure("cannot normalize a zero wavefunction")
        return cls(grid, a / nrm, time)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.spacing)

    def with_amplitudes(self, amplitudes, time=None):
        return WaveFunction(self.grid, amplitudes, self.time if time is None else time)

    def shifted(self, cells: int):
        """Translate by an integer number of grid cells (periodic)."""
        return self.with_amplitudes(np.roll(self.amplitudes, cells))

    def reflected(self):
        """Parity image x -> -x on the symmetric periodic grid."""
        a = self.amplitudes
        return self.with_amplitudes(np.roll(a[::-1], 1))


def make_gaussian(grid: Grid, center=0.0, width=1.0, momentum=0.0, hbar=1.0) -> WaveFunction:
    """Normalized packet ``exp(-(x-c)^2/(4 width^2) + i k x)``.

    ``width`` is the position standard deviation of the density; ``momentum``
    is the wavenumber ``k`` (mean momentum is ``hbar*k``).  ``hbar`` is
    accepted for signature symmetry only.
    """
    if not (4 * grid.spacing <= width <= grid.length / 8):
        raise ConfigurationError(
            f"packet width {width} outside resolvable range [{4 * grid.spacing}, {grid.length / 8}]"
        )
    x = grid.coordinates
    amp = np.exp(-((x - center) ** 2) / (4.0 * width**2) + 1j * momentum * (x - center))
    return WaveFunction.normalized(grid, amp)


def make_superposition(grid: Grid, packets, coefficients, time=0.0) -> WaveFunction:
    """Normalized sum of ``c_n * packet_n``."""
    amp = sum(c * p.amplitudes for c, p in zip(coefficients, packets))
    return WaveFunction.normalized(grid, amp, time)


def density(psi: WaveFunction) -> np.ndarray:
    return np.abs(psi.amplitudes) ** 2


def moments(psi: WaveFunction):
    """Return ``(mean, spread)`` of the position distribution."""
    rho = density(psi)
    x = psi.grid.coordinates
    norm = np.sum(rho)
    mean = np.sum(x * rho) / norm
    var = np.sum((x - mean) ** 2 * rho) / norm
    return float(mean), float(np.sqrt(max(var, 0.0)))


def inner(psi: WaveFunction, phi: WaveFunction) -> complex:
    """<psi|phi> by trapezoid quadrature."""
    if psi.grid != phi.grid:
        raise ConfigurationError("inner product of wavefunctions on different grids")
    return complex(np.vdot(psi.amplitudes, phi.amplitudes) * psi.grid.spacing)


def fidelity(psi: WaveFunction, phi: WaveFunction) -> float:
    return abs(inner(psi, phi)) ** 2


def spectral_derivative(grid: Grid, f) -> np.ndarray:
    return np.fft.ifft(1j * grid.wavenumbers * np.fft.fft(f))


def kinetic_energy(psi: WaveFunction, hbar=1.0, mass=1.0) -> float:
    g = psi.grid
    c = np.fft.fft(psi.amplitudes)
    # Parseval: sum|f|^2 dx = (dx/n) sum|c|^2
    return float(hbar**2 / (2 * mass) * np.sum(g.wavenumbers**2 * np.abs(c) ** 2) * g.spacing / g.points)


def mean_momentum(psi: WaveFunction, hbar=1.0) -> float:
    g = psi.grid
    c = np.fft.fft(psi.amplitudes)
    return float(hbar * np.sum(g.wavenumbers * np.abs(c) ** 2) / np.sum(np.abs(c) ** 2))


def energy(psi: WaveFunction, potential=None, hbar=1.0, mass=1.0, t=None) -> float:
    """<H> with spectral kinetic term; ``potential`` is a Potential or None."""
    e = kinetic_energy(psi, hbar, mass)
    if potential is not None:
        v = potential.values(psi.grid, psi.time if t is None else t)
        e += psi.grid.integrate(v * density(psi))
    return e
