import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from jcurves.core import Grid, MapSample, energy
from jcurves.dbar import TotallyRealSubspace
from jcurves.decay import (
    GAMMA_1, boundary_decay_exponent, circle_energy_density, corner_sobolev_exponent,
    cylinder_modes, decay_envelope, gamma_w, lambda_from_gamma, lambda_residual, mode_segment_energy,
    nonconstancy_energy_gate, removability_diagnostic, segment_energies, strip_eigs,
    strip_lambda1_exact, synth_cylinder, three_segment_ratio, three_strips_check, three_strips_sharp,
)
from oracles import shooting_eigenvalues

E2 = math.e ** 2


@pytest.fixture(scope="module")
def cyl5():
    return Grid.cylinder(0, 5, 501, 64)


# modes


def test_single_mode_spectrum():
    g = Grid.cylinder(0, 2, 201, 32)
    s = cylinder_modes(synth_cylinder(g, {2: 1.0}))
    assert np.abs(s.coeffs[:, s.K + 2, 0] - np.exp(2 * s.t)).max() <= 1e-10
    others = np.delete(s.coeffs[..., 0], s.K + 2, axis=1)
    assert np.abs(others).max() <= 1e-10
    assert s.parseval_defect() <= 1e-10
    c = cylinder_modes(MapSample.constant(g, 0.5 - 2j))
    assert c.coefficient(0)[0] == pytest.approx(0.5 - 2j)
    assert np.abs(np.delete(c.fit[:, 0], c.K)).max() <= 1e-12


def test_two_mode_recovery():
    g = Grid.cylinder(0, 2, 201, 32)
    s = cylinder_modes(synth_cylinder(g, {1: 1.0, -3: 0.5}))
    assert s.coefficient(1)[0] == pytest.approx(1.0, abs=1e-9)
    assert s.coefficient(-3)[0] == pytest.approx(0.5, abs=1e-9)
    assert s.holomorphy_residual() <= 1e-9
    assert s.parseval_defect() <= 1e-10


def test_circle_energy_density():
    g = Grid.cylinder(0, 1, 201, 32)
    s = cylinder_modes(synth_cylinder(g, {1: 1.0}))
    assert circle_energy_density(s, 0.0) == pytest.approx(4 * math.pi)
    assert circle_energy_density(cylinder_modes(MapSample.constant(g, 3.0)), 0.5) == 0.0
    u = synth_cylinder(g, {1: 1.0, -3: 0.5})
    s = cylinder_modes(u)
    t = np.linspace(0, 1, 2001)
    integral = np.trapezoid(circle_energy_density(s, t), t)
    assert integral == pytest.approx(energy(u), rel=0.02)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_parseval_random(seed):
    rng = np.random.default_rng(seed)
    g = Grid.cylinder(0, 1, 21, 32)
    vals = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    assert cylinder_modes(MapSample(g, vals)).parseval_defect() <= 1e-10


# three annuli


def test_three_segment_ratio_single_modes(cyl5):
    for k, ref in [(1, 2 * E2 / (1 + E2 ** 2)), (2, 2 * E2 ** 2 / (1 + E2 ** 4))]:
        r = three_segment_ratio(segment_energies(synth_cylinder(cyl5, {k: 1.0}))[1:4])
        assert r == pytest.approx(ref, rel=0.01)
        assert r <= GAMMA_1
    assert 2 * E2 / (1 + E2 ** 2) == pytest.approx(0.26580, abs=1e-5)
    assert 2 * E2 ** 2 / (1 + E2 ** 4) == pytest.approx(0.03662, abs=1e-5)


def test_segment_energies_match_closed_form(cyl5):
    E = segment_energies(synth_cylinder(cyl5, {1: 1.0, -2: 0.3}))
    ref = [mode_segment_energy(1, 1.0, i - 1, i) + mode_segment_energy(-2, 0.3, i - 1, i)
           for i in range(1, 6)]
    assert E == pytest.approx(ref, rel=0.005)


@pytest.mark.parametrize("gamma,lam", [(1.0, 1.0), (GAMMA_1, 7.2512), (0.5, 2 + math.sqrt(3))])
def test_lambda_from_gamma(gamma, lam):
    assert lambda_from_gamma(gamma) == pytest.approx(lam, abs=1e-4)


@settings(max_examples=200, deadline=None)
@given(gamma=st.floats(1e-6, 1.0))
def test_lambda_recurrence(gamma):
    lam = lambda_from_gamma(gamma)
    assert lam >= 1
    assert lambda_residual(gamma, lam) <= 1e-12


def test_decay_envelope():
    lam = lambda_from_gamma(GAMMA_1)
    assert decay_envelope(1, 1, lam, 3, 10) == pytest.approx(lam ** -1 + lam ** -6, rel=1e-12)
    assert decay_envelope(1, 1, lam, 3, 10) == pytest.approx(0.13792, abs=1e-5)
    assert decay_envelope(2.0, 5.0, lam, 2, 10) >= 2.0
    for k in range(2, 10):
        assert decay_envelope(1, 1, lam, k, 10) == pytest.approx(decay_envelope(1, 1, lam, 11 - k, 10))
    with pytest.raises(ValueError):
        decay_envelope(1, 1, lam, 1, 10)


# removability


def test_removability_examples():
    g = Grid.cylinder(0, 10, 1001, 32)
    dec = removability_diagnostic(synth_cylinder(g, {-1: 1.0}))
    assert dec.verdict == "removable" and dec.rate == pytest.approx(-2, rel=0.02)
    ref = [2 * math.pi * (math.exp(-2 * (i - 1)) - math.exp(-2 * i)) for i in range(1, 11)]
    assert dec.energies == pytest.approx(ref, rel=0.02)
    grow = removability_diagnostic(synth_cylinder(g, {1: 1.0}))
    assert grow.verdict == "non-removable" and not grow.tail_ok
    ref = [2 * math.pi * (math.exp(2 * i) - math.exp(2 * (i - 1))) for i in range(1, 11)]
    assert grow.energies == pytest.approx(ref, rel=0.02)
    const = removability_diagnostic(MapSample.constant(g, 1.0))
    assert const.verdict == "removable" and const.rate is None


# strip eigenproblem


@pytest.mark.parametrize("beta", [math.pi / 6, math.pi / 4, math.pi / 3, math.pi / 2])
def test_strip_lambda1_against_shooting(beta):
    oracle = shooting_eigenvalues(beta, 1, 12)[0]
    assert oracle == pytest.approx(strip_lambda1_exact(beta), rel=1e-8)
    res = strip_eigs(TotallyRealSubspace.real(1), TotallyRealSubspace.rotated_line(beta), 1000)
    assert res.zero_dim == 0 == res.intersection_dim
    assert res.lambda1 == pytest.approx(oracle, abs=1e-3)


@pytest.mark.parametrize("beta", [math.pi / 6, math.pi / 4, math.pi / 3])
def test_strip_richardson(beta):
    W0, W1 = TotallyRealSubspace.real(1), TotallyRealSubspace.rotated_line(beta)
    lams = [strip_eigs(W0, W1, N).lambda1 for N in (250, 500, 1000)]
    assert lams[0] > lams[1] > lams[2]
    extrap = (4 * lams[2] - lams[1]) / 3
    assert extrap == pytest.approx(shooting_eigenvalues(beta, 1, 12)[0], abs=1e-5)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_strip_parallel_real_subspaces(n):
    R = TotallyRealSubspace.real(n)
    res = strip_eigs(R, R, 1000)
    assert res.zero_dim == n == res.intersection_dim
    assert res.lambda1 == pytest.approx(math.pi ** 2, abs=1e-3)


def test_gamma_w():
    assert gamma_w(0.0) == 1.0
    assert gamma_w(math.pi ** 2 / 4) == pytest.approx(2 / (1 + math.cosh(math.pi)), abs=1e-12)
    assert gamma_w(math.pi ** 2 / 4) == pytest.approx(0.15883, abs=1e-5)
    xs = np.linspace(0, 20, 50)
    g = [gamma_w(x) for x in xs]
    assert all(0 < a <= 1 for a in g) and all(a > b for a, b in zip(g, g[1:]))


def test_gamma_w_three_strips_for_eigenmodes():
    # on the beta = pi/2 strip, exp(-+ w z) with w = pi/2 are the slowest modes;
    # their three-segment ratio stays below gamma_w(lambda_1)
    g = Grid.strip(0, 3, 601, 41)
    w = math.pi / 2
    gam = gamma_w(w * w)
    for a, b in [(1, 0), (0, 1), (1, 1), (1, -0.3)]:
        u = MapSample.from_function(g, lambda z: a * np.exp(-w * z) + b * np.exp(w * z))
        E = segment_energies(u)
        assert three_segment_ratio(E) <= gam * 1.01


# three strips


def test_three_strips_examples():
    r, bound = three_strips_check(1, 0, 1)
    assert r == pytest.approx(2 * E2 / (1 + E2 ** 2), rel=1e-12)
    assert bound == pytest.approx(2 / (1 + math.cosh(2)), rel=1e-15)
    assert bound == pytest.approx(0.42003, abs=1e-4)
    assert three_strips_check(0, 1, 1)[0] == pytest.approx(r, rel=1e-12)


@pytest.mark.parametrize("alpha", [0.25, 0.8125, 1.375, 1.9375, 2.5])
def test_three_strips_sharp_constant(alpha):
    phis = np.linspace(0, math.pi, 20001)
    ratio = lambda p: three_strips_check(math.cos(p), math.sin(p), alpha)[0]
    i = int(np.argmax([ratio(p) for p in phis]))
    res = minimize_scalar(lambda p: -ratio(p), bounds=(phis[max(i - 1, 0)], phis[min(i + 1, phis.size - 1)]),
                          method="bounded", options={"xatol": 1e-14})
    best = -res.fun
    sharp = three_strips_sharp(alpha)
    assert best <= sharp * (1 + 1e-12)
    assert best == pytest.approx(sharp, abs=1e-6)
    assert sharp <= 2 / (1 + math.cosh(2 * alpha))


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-10, 10), b=st.floats(-10, 10), alpha=st.floats(0.05, 4))
def test_three_strips_never_violated(a, b, alpha):
    if abs(a) + abs(b) < 1e-6:
        return
    r, bound = three_strips_check(a, b, alpha)
    assert 0 <= r <= bound * (1 + 1e-12)


# exponents


def test_exponents():
    assert corner_sobolev_exponent(0.5) == 4.0
    assert boundary_decay_exponent(math.exp(math.pi)) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        boundary_decay_exponent(1.0)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(1e-9, 2 * math.pi - 1e-9))
def test_boundary_exponent_above_two(x):
    assert boundary_decay_exponent(math.exp(x)) > 2


# strip gate


def test_gate_constant_and_linear():
    g = Grid.strip(0, 5, 101, 21)
    R = TotallyRealSubspace.real(1)
    v = nonconstancy_energy_gate(MapSample.constant(g, 2.0), R, R, 0.1)
    assert v.status == "near-constant" and v.oscillation == 0
    # z maps the boundary lines to the parallel affine lines R and R + i, so
    # the linear-subspace check is relaxed here
    lin = MapSample.from_function(g, lambda z: z)
    E = nonconstancy_energy_gate(lin, R, R, 10.0, boundary_tol=1.0).energies
    assert np.allclose(E, E[0], rtol=1e-12) and E[0] > 0
    v = nonconstancy_energy_gate(lin, R, R, 0.5 * E[0], boundary_tol=1.0)
    assert v.status == "violation" and v.first_violation == 1


def test_gate_small_eigenmode():
    g = Grid.strip(0, 3, 61, 21)
    R, iR = TotallyRealSubspace.real(1), TotallyRealSubspace.rotated_line(math.pi / 2)
    w = math.pi / 2
    osc = []
    for d in (1e-4, 1e-5, 1e-6):
        # exp(-w z) is real at theta = 0 and imaginary at theta = 1
        u = MapSample.from_function(g, lambda z: d * np.exp(-w * (z - 1.5)))
        v = nonconstancy_energy_gate(u, R, iR, 0.1)
        assert v.status == "near-constant"
        osc.append(v.oscillation)
    assert osc[0] / osc[1] == pytest.approx(10, rel=1e-6)
    assert osc[1] / osc[2] == pytest.approx(10, rel=1e-6)
    big = MapSample.from_function(g, lambda z: np.exp(-w * (z - 1.5)))
    assert nonconstancy_energy_gate(big, R, iR, 0.1).status == "violation"
