import numpy as np
import pytest
from hypothesis import given, strategies as st

from collapsesim.errors import ConfigurationError
from collapsesim.oracle import dense_entropy
from collapsesim.partition import PartitionParams, build
from collapsesim.propagator import Potential
from collapsesim.qstate import Grid, PhysicalConstants, inner, make_gaussian
from collapsesim.thermo import (delta_e, delta_e_oracle, delta_s, gram_eigenvalues, outcomes, residual,
                                s_prime, thermo_record, weights)

from conftest import random_state, two_packets

G = Grid(40.0, 1024)
IDENT = build(PartitionParams.identity(), G)
STEP = build(PartitionParams.step_pair(0.5 * G.spacing), G)
seeds = st.integers(0, 2**32 - 1)


def tanh(X, l, grid=G):
    return build(PartitionParams.tanh_pair(X, l), grid)


def test_weights_examples():
    assert weights(make_gaussian(G, 1.0, 1.0), IDENT) == pytest.approx([1.0], abs=1e-15)
    assert weights(make_gaussian(G, 0.5 * G.spacing, 1.0), STEP) == pytest.approx([0.5, 0.5], abs=1e-12)
    w = weights(two_packets(G, 8.0, 1.0, np.sqrt(0.7)), STEP)
    assert w == pytest.approx([0.3, 0.7], abs=1e-6)


def test_outcomes_identity_is_state():
    psi = make_gaussian(G, 1.0, 1.0, 0.4)
    (phi,) = outcomes(psi, IDENT)
    assert np.allclose(phi.amplitudes, psi.amplitudes, atol=1e-15)


def test_outcomes_disjoint_packets():
    left, right = make_gaussian(G, -8.0, 1.0), make_gaussian(G, 8.0, 1.0)
    psi = two_packets(G, 8.0, 1.0, np.sqrt(0.7))
    a, b = outcomes(psi, STEP)
    assert abs(inner(a, b)) < 1e-12
    assert abs(inner(a, left)) ** 2 > 1 - 1e-12
    assert abs(inner(b, right)) ** 2 > 1 - 1e-12
    assert a.norm == pytest.approx(1.0, abs=1e-10)


def test_outcome_overlap_sharp_cut_on_gaussian():
    psi = make_gaussian(G, 0.0, 2.0)
    l = 0.25
    a, b = outcomes(psi, tanh(0.0, l))
    # quadrature oracle: <Phi-|Phi+> = int rho P- P+ / sqrt(w- w+) with P- P+ = sech(u)/2
    x = G.coordinates
    rho = np.abs(psi.amplitudes) ** 2
    expected = G.integrate(rho * 0.5 / np.cosh(x / l)) / 0.5
    assert inner(a, b).real == pytest.approx(expected, rel=1e-10)
    assert 0 < expected < 0.2


def test_degenerate_branch_excluded():
    psi = make_gaussian(G, -10.0, 0.5)
    out = outcomes(psi, STEP)
    assert out[1] is None and out[0] is not None


def test_s_prime_gaussian_value():
    psi = make_gaussian(G, 0.0, 1.0 / np.sqrt(2 * np.pi))
    assert s_prime(psi, IDENT) == pytest.approx(-1.5, abs=1e-6)


def test_s_prime_width_scaling():
    a = s_prime(make_gaussian(G, 0.0, 0.8), IDENT)
    b = s_prime(make_gaussian(G, 0.0, 1.6), IDENT)
    assert b - a == pytest.approx(-np.log(2), abs=1e-6)


def test_s_prime_grows_when_branches_separate():
    psi = two_packets(G, 8.0, 1.0)
    assert s_prime(psi, STEP) > s_prime(psi, IDENT) + 0.5
    # equal disjoint halves: the gain is ln 2
    assert s_prime(psi, STEP) - s_prime(psi, IDENT) == pytest.approx(np.log(2), abs=1e-9)


def test_delta_e_identity_zero():
    assert delta_e(make_gaussian(G, 0.0, 1.0), IDENT) == 0.0
    assert abs(delta_e_oracle(make_gaussian(G, 0.0, 1.0, 0.7), IDENT, Potential.harmonic(1.0))) < 1e-13


def test_delta_e_broad_density():
    psi = make_gaussian(G, 0.0, 4.0)
    X, l = 0.5, 0.2
    c = PhysicalConstants(hbar=1.3, mass=2.0)
    rho_X = np.exp(-X**2 / 32) / np.sqrt(2 * np.pi * 16)
    assert delta_e(psi, tanh(X, l), c) == pytest.approx(c.hbar**2 * rho_X / (4 * c.mass * l), rel=2e-3)


def test_delta_e_step_rejected():
    with pytest.raises(ConfigurationError):
        delta_e(make_gaussian(G, 0.0, 1.0), STEP)


@given(seeds, st.floats(-5, 5), st.floats(0.2, 3.0))
def test_delta_e_phase_independent(seed, X, l):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, G)
    phase = np.exp(1j * (0.3 * G.coordinates**2 + rng.uniform(-2, 2) * G.coordinates))
    p = tanh(X, l)
    a = delta_e(psi, p)
    b = delta_e(psi.with_amplitudes(psi.amplitudes * phase), p)
    assert b == pytest.approx(a, rel=1e-12, abs=1e-300)


@given(seeds, st.floats(-4, 4), st.floats(0.2, 3.0))
def test_delta_e_matches_oracle_any_potential(seed, X, l):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, G)
    p = tanh(X, l)
    c = PhysicalConstants(hbar=1.0, mass=rng.uniform(0.5, 3.0))
    de = delta_e(psi, p, c)
    free = delta_e_oracle(psi, p, None, c)
    trap = delta_e_oracle(psi, p, Potential.harmonic(rng.uniform(0.2, 1.0), c.mass), c)
    assert de >= 0
    assert free == pytest.approx(de, rel=1e-8)
    assert trap == pytest.approx(free, rel=1e-10, abs=1e-12)


def test_delta_s_examples():
    assert delta_s(make_gaussian(G, 0.0, 1.0), IDENT) == 0.0
    assert delta_s(two_packets(G, 8.0, 1.0), STEP) == pytest.approx(np.log(2), abs=1e-10)


def test_delta_s_overlap_dense_oracle():
    g = Grid(16.0, 64)
    psi = make_gaussian(g, 0.0, 1.0)
    p = tanh(0.0, 1.0, g)
    a, b = outcomes(psi, p)
    ov = inner(a, b).real
    lam = np.array([(1 + ov) / 2, (1 - ov) / 2])
    expected = float(-np.sum(lam * np.log(lam)))
    assert weights(psi, p) == pytest.approx([0.5, 0.5], abs=1e-12)
    assert delta_s(psi, p) == pytest.approx(expected, abs=1e-12)
    assert dense_entropy(psi, p) == pytest.approx(expected, abs=1e-8)


def test_residual_examples():
    psi = make_gaussian(G, 0.0, 3.0)
    # dE ~ lambda0^2 rho / l beats T0 ln2 at the narrowest width once lambda0 exceeds the packet
    c = PhysicalConstants.from_lambda0(10.0)
    assert residual(thermo_record(psi, IDENT, c), c) == 0.0
    l_min = 4 * G.spacing
    assert residual(thermo_record(psi, tanh(0.0, l_min), c), c) < 0
    wide = [abs(residual(thermo_record(psi, tanh(0.0, l), c), c)) for l in (20.0, 80.0, 320.0)]
    assert wide[0] > wide[1] > wide[2]
    assert wide[2] < 1e-4


@given(seeds, st.floats(-4, 4), st.floats(0.2, 3.0), st.sampled_from([1, -1]))
def test_record_invariants(seed, X, l, sign):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, G)
    p = build(PartitionParams.tanh_pair(X, l, sign), G)
    c = PhysicalConstants.from_lambda0(1.0)
    r = thermo_record(psi, p, c)
    assert abs(np.sum(r.weights) - 1) < 1e-12
    assert np.all(r.weights >= 0)
    assert r.delta_e >= 0
    assert -1e-15 <= r.delta_s <= np.log(2) + 1e-12
    assert np.all(r.gram_eigenvalues >= 0)
    assert abs(np.sum(r.gram_eigenvalues) - 1) < 1e-10
    assert r.residual == pytest.approx(c.T0 * r.delta_s - r.delta_e)
    rotated = psi.with_amplitudes(psi.amplitudes * np.exp(1j * rng.uniform(0, 2 * np.pi)))
    assert delta_s(rotated, p) == pytest.approx(r.delta_s, abs=1e-14)
    assert s_prime(rotated, p) == pytest.approx(r.s_prime, abs=1e-12)


@given(seeds, st.integers(1, 3))
def test_multi_cut_invariants(seed, k):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, G)
    xs = np.sort(rng.uniform(-5, 5, k))
    if np.any(np.diff(xs) < 0.1):
        return
    p = build(PartitionParams.multi_cut([(X, rng.uniform(0.3, 2.0)) for X in xs]), G)
    assert abs(np.sum(weights(psi, p)) - 1) < 1e-12
    assert 0 <= delta_s(psi, p) <= np.log(p.N) + 1e-12
    assert delta_e_oracle(psi, p) == pytest.approx(delta_e(psi, p), rel=1e-8)


def test_gram_eigenvalues_sorted_descending():
    ev = gram_eigenvalues(two_packets(G, 2.0, 1.0, np.sqrt(0.8)), tanh(0.0, 1.0))
    assert ev[0] >= ev[1] >= 0
