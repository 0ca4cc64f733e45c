import numpy as np
import pytest

from collapsesim.errors import ConfigurationError
from collapsesim.partition import PartitionParams, build
from collapsesim.propagator import (Potential, StepperConfig, branch_weights, evolve, recommended_dt,
                                    split_packet, step)
from collapsesim.qstate import Grid, PhysicalConstants, energy, fidelity, make_gaussian, moments
from collapsesim.thermo import gram_matrix

# barrier offset giving a 0.3 / 0.7 split, found with calibrate_splitter and frozen
SPLITTER = {"omega": 0.5, "mass": 1.0, "height": 8.0, "ramp": 20.0, "position": 0.0, "width": 0.5}
POSITION_70 = -0.21435501501442059


def test_potential_values_and_forces():
    x = np.linspace(-2, 2, 9)
    dw = Potential.double_well(1.0, 4.0)
    assert np.allclose(dw.values(x), x**4 - 4 * x**2)
    h = 1e-6
    assert np.allclose(dw.force(x), -(dw.values(x + h) - dw.values(x - h)) / (2 * h), atol=1e-6)
    with pytest.raises(ConfigurationError):
        Potential("bogus")


def test_free_spreading_analytic():
    g = Grid(80.0, 1024)
    s0, m, t = 1.0, 1.0, 5.0
    out = evolve(make_gaussian(g, 0.0, s0), Potential(), StepperConfig(dt=0.01), t,
                 PhysicalConstants(mass=m))
    expected = s0**2 * (1 + (t / (2 * m * s0**2)) ** 2)
    assert moments(out)[1] ** 2 == pytest.approx(expected, rel=1e-6)


def test_harmonic_coherent_state():
    g = Grid(24.0, 512)
    m, w, x0 = 1.0, 1.0, 2.0
    psi = make_gaussian(g, x0, np.sqrt(1 / (2 * m * w)))
    pot = Potential.harmonic(w, m)
    cfg = StepperConfig(dt=1e-3)
    c = PhysicalConstants(mass=m)
    for t in np.linspace(0.5, 2 * np.pi, 6):
        out = evolve(psi, pot, cfg, t, c)
        assert moments(out)[0] == pytest.approx(x0 * np.cos(w * t), abs=1e-6)


def test_symmetric_packet_stays_centred():
    g = Grid(40.0, 512)
    out = evolve(make_gaussian(g, 0.0, 1.0), Potential(), StepperConfig(dt=0.05), 3.0)
    assert abs(moments(out)[0]) < 1e-10


def test_zero_duration_and_semigroup():
    g = Grid(24.0, 512)
    psi = make_gaussian(g, 1.0, 0.8, 0.5)
    pot = Potential.harmonic(1.0)
    cfg = StepperConfig(dt=0.01)
    assert evolve(psi, pot, cfg, 0.0) is psi
    full = evolve(psi, pot, cfg, 2.0)
    half = evolve(evolve(psi, pot, cfg, 1.0), pot, cfg, 1.0)
    assert np.max(np.abs(full.amplitudes - half.amplitudes)) < 1e-10
    assert full.time == pytest.approx(psi.time + 2.0)


def test_backends_agree_on_free_spread():
    g = Grid(40.0, 1024)
    psi = make_gaussian(g, 0.0, 1.0)
    a = evolve(psi, Potential(), StepperConfig("split_step", 1e-3), 2.0)
    b = evolve(psi, Potential(), StepperConfig("crank_nicolson", 1e-3), 2.0)
    assert moments(b)[1] == pytest.approx(moments(a)[1], rel=1e-5)
    assert fidelity(a, b) > 1 - 1e-6


@pytest.mark.parametrize("backend", ["split_step", "crank_nicolson"])
def test_unitarity_per_step(backend):
    g = Grid(24.0, 256)
    psi = make_gaussian(g, 0.5, 1.0, 1.0)
    out = step(psi, Potential.double_well(0.1, 1.0), StepperConfig(backend, 1e-3))
    assert abs(out.norm - 1.0) < 1e-12
    assert out.time == pytest.approx(1e-3)


def test_energy_conservation_split_step():
    g = Grid(24.0, 256)
    c = PhysicalConstants()
    # Strang splitting keeps <H> within O(dt^2 V'^2) of its start; a soft trap at the
    # heuristic step keeps that below the tolerance
    pot = Potential.harmonic(0.3)
    psi = make_gaussian(g, 1.0, 0.9)
    dt = recommended_dt(g, pot, c)
    out = evolve(psi, pot, StepperConfig(dt=dt), 1e4 * dt, c)
    e0 = energy(psi, pot)
    assert abs(energy(out, pot) - e0) / e0 < 1e-8


def test_split_packet_symmetric_and_calibrated():
    g = Grid(40.0, 512)
    c = PhysicalConstants()
    psi = make_gaussian(g, 0.0, 1.0 / np.sqrt(2 * SPLITTER["omega"]))
    cfg = StepperConfig(dt=0.01)
    sym = split_packet(psi, Potential("splitter", SPLITTER), cfg, c)
    assert branch_weights(sym, 0.0)[1] == pytest.approx(0.5, abs=0.02)
    asym = split_packet(psi, Potential("splitter", {**SPLITTER, "position": POSITION_70}), cfg, c)
    left, right = branch_weights(asym, POSITION_70)
    assert right == pytest.approx(0.7, abs=0.02)
    # the two branches barely overlap under a sharp cut at the barrier
    gm = gram_matrix(asym, build(PartitionParams.tanh_pair(POSITION_70, 0.05), g, allow_unresolved=True))
    assert abs(gm[0, 1]) / np.sqrt(gm[0, 0].real * gm[1, 1].real) < 1e-3


def test_split_packet_without_barrier():
    g = Grid(40.0, 512)
    psi = make_gaussian(g, 0.0, 1.0 / np.sqrt(2 * SPLITTER["omega"]))
    out = split_packet(psi, Potential("splitter", {**SPLITTER, "height": 0.0}), StepperConfig(dt=0.01))
    # ground state of the bare trap is stationary
    assert fidelity(out, psi) > 1 - 1e-8
