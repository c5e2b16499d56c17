import math

import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov

from vibronlab import fock, gaussian
from vibronlab.chain import TightBinding, TrapConfig, apply_offsets, build_chain
from vibronlab.gaussian import (
    CorrelatorState,
    DisorderModel,
    GaussianError,
    GaussianGenerator,
    NoiseModel,
    UnreachedSitesError,
    build_bulk_generator,
    build_edge_generator,
    continuity_error,
    current_fano_factor,
    dephasing_matrix,
    disorder_average,
    disorder_configurations,
    dissipative_flux,
    evolve,
    quadratic_observable_noise,
    site_currents,
    steady_state,
    theory_predictions,
)
from vibronlab.laser import ReservoirParams

TP = 2 * math.pi


def _chain(n=4, fz=0.3e6):
    return build_chain(["Mg24"] * n, ["tau"] * n, 5e6, TrapConfig("paul_trap", n, axial_freq=TP * fz))


def _res(n, nl=2.0, nr=0.5, gl=TP * 20e3, gr=TP * 30e3, dl=0.0, dr=0.0):
    return {0: ReservoirParams.thermal(gl, nl, dl), n - 1: ReservoirParams.thermal(gr, nr, dr)}


def _toy(j, onsite):
    n = len(onsite)
    t = np.zeros((n, n), complex)
    for i in range(n - 1):
        t[i, i + 1] = t[i + 1, i] = j
    return TightBinding(np.asarray(onsite, float), t)


def test_steady_state_matches_lyapunov():
    _, tb = _chain(5)
    gen = build_edge_generator(tb, _res(5, dl=-TP * 3e3, dr=TP * 2e3))
    c = steady_state(gen)
    a = gen.amplitude_matrix()
    expected = solve_continuous_lyapunov(a, np.asarray(gen.kmat))
    np.testing.assert_allclose(c.cmat, expected, atol=1e-10 * np.max(np.abs(expected)))


def test_single_site_thermalises():
    tb = TightBinding(np.array([TP * 1e6]), np.zeros((1, 1)))
    r = ReservoirParams.thermal(TP * 10e3, 1.7, TP * 1e3)
    gen = build_edge_generator(tb, {0: r})
    assert steady_state(gen).occupations[0] == pytest.approx(1.7, rel=1e-12)


def test_single_site_relaxation_rate():
    # populations relax at twice the amplitude damping rate
    g = TP * 10e3
    tb = TightBinding(np.array([TP * 1e6]), np.zeros((1, 1)))
    gen = build_edge_generator(tb, {0: ReservoirParams.thermal(g, 1.0)})
    times, states = evolve(gen, CorrelatorState.thermal([4.0]), 50e-6, n_out=11)
    n = np.array([s.occupations[0] for s in states])
    np.testing.assert_allclose(n, 1.0 + 3.0 * np.exp(-2 * g * times), rtol=1e-8)


def test_equal_baths_give_thermal_state_and_no_current():
    _, tb = _chain(4)
    gen = build_edge_generator(tb, _res(4, nl=1.3, nr=1.3, dl=TP * 4e3))
    c = steady_state(gen)
    np.testing.assert_allclose(c.cmat, 1.3 * np.eye(4), atol=1e-10)
    i_in, i_out = site_currents(gen, c)
    assert np.max(np.abs(i_in)) < 1e-8 and np.max(np.abs(i_out)) < 1e-8


def test_continuity_in_steady_state():
    _, tb = _chain(6)
    gen = build_edge_generator(tb, _res(6))
    c = steady_state(gen)
    i_in, i_out = site_currents(gen, c)
    flux = dissipative_flux(gen, c)
    np.testing.assert_allclose(i_in - i_out + flux, 0, atol=1e-9 * np.max(np.abs(i_in)))
    assert continuity_error(gen, c) < 1e-9
    # bulk sites pass on what they receive
    np.testing.assert_allclose(i_in[1:-1], i_out[1:-1], rtol=1e-9)
    assert i_out[0] > 0


def test_evolution_reaches_steady_state():
    _, tb = _chain(3)
    gen = build_edge_generator(tb, _res(3, gl=TP * 40e3, gr=TP * 40e3))
    _, states = evolve(gen, CorrelatorState.thermal([0, 0, 0]), 3e-3, n_out=3)
    np.testing.assert_allclose(states[-1].cmat, steady_state(gen).cmat, atol=1e-7)
    for s in states:
        s.check()


def test_large_chain_fixed_point():
    tb = _toy(TP * 5e3, np.full(62, TP * 1e6))
    res = {0: ReservoirParams.thermal(TP * 20e3, 1.5), 61: ReservoirParams.thermal(TP * 20e3, 0.5)}
    gen = build_edge_generator(tb, res)
    c = steady_state(gen)
    assert np.linalg.norm(gen.rhs(np.asarray(c.cmat))) < 1e-10 * np.linalg.norm(gen.kmat)
    expected = solve_continuous_lyapunov(gen.amplitude_matrix(), np.asarray(gen.kmat))
    np.testing.assert_allclose(c.occupations, np.real(np.diag(expected)), rtol=1e-8)


def test_iterative_path_matches_dense(monkeypatch):
    _, tb = _chain(8)
    geo, _ = _chain(8)
    gen = build_edge_generator(tb, _res(8)).with_dephasing(dephasing_matrix(geo, NoiseModel(TP * 5e3, 3e-6)))
    dense = steady_state(gen)
    monkeypatch.setattr(gaussian, "DENSE_MAX", 4)
    iterative = steady_state(gen)
    np.testing.assert_allclose(iterative.cmat, dense.cmat, atol=1e-9 * np.max(np.abs(dense.cmat)))


def test_unreached_site_reported():
    # the middle site of three couples to nothing
    t = np.zeros((3, 3), complex)
    tb = TightBinding(np.full(3, TP * 1e6), t)
    gen = build_edge_generator(tb, {0: ReservoirParams.thermal(1e3, 1.0), 2: ReservoirParams.thermal(1e3, 1.0)})
    with pytest.raises(UnreachedSitesError) as exc:
        steady_state(gen)
    assert exc.value.sites == [1]


def test_generator_validation():
    z = np.zeros((2, 2))
    with pytest.raises(GaussianError, match="Hermitian"):
        GaussianGenerator(np.array([[0, 1], [0, 0]]), z, z, z, "edge", (0, 1))
    with pytest.raises(GaussianError, match="dmat"):
        GaussianGenerator(z, z, z, np.eye(2), "edge", (0, 1))
    with pytest.raises(GaussianError, match="kind"):
        GaussianGenerator(z, z, z, z, "middle", (0, 1))
    _, tb = _chain(3)
    with pytest.raises(GaussianError, match="heats"):
        build_edge_generator(tb, {0: ReservoirParams.from_lambdas(2.0, 1.0)})
    with pytest.raises(GaussianError, match="nonexistent"):
        build_edge_generator(tb, {5: ReservoirParams.thermal(1.0, 1.0)})
    with pytest.raises(GaussianError, match="edge"):
        build_bulk_generator(tb, {1: ReservoirParams.thermal(1.0, 1.0)})


def test_bulk_generator_matches_edge_at_strong_cooling():
    tb = _toy(TP * 2e3, [TP * 1e6] * 4)
    res = _res(4, nl=2.0, nr=0.5, gl=TP * 200e3, gr=TP * 150e3)
    ce = steady_state(build_edge_generator(tb, res))
    gb = build_bulk_generator(tb, res)
    cb = steady_state(gb)
    np.testing.assert_allclose(cb.occupations, ce.occupations[1:3], rtol=2e-3)


def test_theory_prediction_closed_form():
    # dot between two reservoirs: Gamma = 2 J^2 gamma / (gamma^2 + (w - w_l + delta)^2)
    j = TP * 3e3
    tb = _toy(j, [TP * 1e6] * 3)
    gl, gr = TP * 100e3, TP * 80e3
    res = {0: ReservoirParams.thermal(gl, 2.0, TP * 10e3), 2: ReservoirParams.thermal(gr, 0.4)}
    th = theory_predictions(tb, res, 1)
    big_l = 2 * j**2 * gl / (gl**2 + (TP * 10e3) ** 2)
    big_r = 2 * j**2 / gr
    assert th.gamma_l == pytest.approx(big_l, rel=1e-12)
    assert th.gamma_r == pytest.approx(big_r, rel=1e-12)
    assert th.n_ss == pytest.approx((big_l * 2.0 + big_r * 0.4) / (big_l + big_r), rel=1e-12)
    assert th.current == pytest.approx(big_l * big_r * 1.6 / (big_l + big_r), rel=1e-12)
    with pytest.raises(GaussianError):
        theory_predictions(tb, res, 0)


def test_dephasing_matrix_limits():
    z = np.array([0.0, 1.0, 3.0])
    d = dephasing_matrix(z, NoiseModel(5.0, 1e9))
    assert np.max(d) < 1e-7  # perfectly correlated noise does not dephase
    d = dephasing_matrix(z, NoiseModel(5.0, 1e-9))
    np.testing.assert_allclose(d, 10.0 * (1 - np.eye(3)))
    d = dephasing_matrix(z, NoiseModel(1.0, 2.0))
    assert d[0, 1] == pytest.approx(2 * (1 - math.exp(-0.5)))
    with pytest.raises(GaussianError):
        NoiseModel(-1.0, 1.0)


def test_dephasing_is_hadamard_damping():
    tb = _toy(0.0, [0.0, 0.0])
    gen = GaussianGenerator(tb.matrix(), np.zeros((2, 2)), np.zeros((2, 2)), np.array([[0, 3.0], [3.0, 0]]),
                            "edge", (0, 1))
    c0 = CorrelatorState(np.array([[1.0, 0.5], [0.5, 1.0]], complex))
    t, states = evolve(gen, c0, 0.2, n_out=3)
    c = states[-1].cmat
    assert c[0, 0] == pytest.approx(1.0) and c[1, 1] == pytest.approx(1.0)
    assert c[0, 1] == pytest.approx(0.5 * math.exp(-3.0 * 0.2), rel=1e-8)


def test_disorder_exhaustive_equals_manual_average():
    tb = _toy(TP * 3e3, [TP * 1e6] * 4)
    res = _res(4, gl=TP * 50e3, gr=TP * 50e3)
    model = DisorderModel(TP * 20e3, (1, 2), "exhaustive")

    def builder(eps):
        off = np.zeros(4)
        off[[1, 2]] = eps
        return build_edge_generator(apply_offsets(tb, off), res)

    out = disorder_average(builder, model)
    manual = []
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            manual.append(steady_state(builder(TP * 10e3 * np.array([s1, s2]))).occupations)
    np.testing.assert_allclose(out.mean, np.mean(manual, axis=0), rtol=1e-12)
    np.testing.assert_allclose(out.std, np.std(manual, axis=0), atol=1e-12)
    assert out.n_configs == 4
    assert out.current_mean.shape == (2, 4)


def test_disorder_thread_count_independent():
    tb = _toy(TP * 3e3, [TP * 1e6] * 5)
    res = _res(5, gl=TP * 50e3, gr=TP * 50e3)
    model = DisorderModel(TP * 20e3, (1, 2, 3), "monte_carlo", 40, seed=7)

    def builder(eps):
        off = np.zeros(5)
        off[[1, 2, 3]] = eps
        return build_edge_generator(apply_offsets(tb, off), res)

    a = disorder_average(builder, model, threads=1)
    b = disorder_average(builder, model, threads=4)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std)
    c = disorder_average(builder, DisorderModel(TP * 20e3, (1, 2, 3), "monte_carlo", 40, seed=8))
    assert not np.array_equal(a.mean, c.mean)


def test_disorder_configurations_reproducible():
    m = DisorderModel(2.0, (0, 1, 2), "monte_carlo", 5, seed=3)
    first = [e.copy() for _, e in disorder_configurations(m)]
    second = [e.copy() for _, e in disorder_configurations(m)]
    assert all(np.array_equal(x, y) for x, y in zip(first, second))
    assert all(set(np.abs(x)) == {1.0} for x in first)
    with pytest.raises(GaussianError):
        DisorderModel(1.0, tuple(range(17)), "exhaustive")


def test_number_noise_single_mode():
    # <dn(t) dn> = (n^2 + n) exp(-2 gamma t) integrates to (n^2 + n) / (2 gamma)
    g, nb = 300.0, 1.4
    tb = TightBinding(np.array([0.0]), np.zeros((1, 1)))
    gen = build_edge_generator(tb, {0: ReservoirParams.thermal(g, nb)})
    mean, s = quadratic_observable_noise(gen, steady_state(gen), np.array([[1.0]]))
    assert mean.real == pytest.approx(nb)
    assert s.real == pytest.approx((nb**2 + nb) / (2 * g), rel=1e-12)


def test_wick_noise_matches_fock_regression():
    j = TP * 10e3
    tb = _toy(j, [0.0, TP * 2e3])
    res = {0: ReservoirParams.thermal(j, 0.3, TP * 1e3), 1: ReservoirParams.thermal(1.5 * j, 0.1)}
    gen = build_edge_generator(tb, res)
    alpha = np.zeros((2, 2))
    alpha[1, 1] = 1.0
    mean, s = quadratic_observable_noise(gen, steady_state(gen), alpha)
    sys = fock.from_tight_binding(tb, 9, res)
    r = fock.regression_spectrum(sys, sys.number(1))
    assert r.mean.real == pytest.approx(mean.real, rel=1e-5)
    assert r.noise0.real == pytest.approx(s.real, rel=1e-4)


def test_fano_requires_current():
    tb = _toy(TP * 3e3, [0.0] * 3)
    gen = build_edge_generator(tb, _res(3, nl=1.0, nr=1.0))
    with pytest.raises(GaussianError, match="current"):
        current_fano_factor(gen, 1)


def test_fano_positive_with_bias():
    tb = _toy(TP * 3e3, [0.0] * 3)
    gen = build_edge_generator(tb, _res(3, nl=5.0, nr=0.5, gl=TP * 5e3, gr=TP * 5e3))
    mean, noise, fano = current_fano_factor(gen, 1)
    assert mean > 0 and noise > 0 and fano > 0
