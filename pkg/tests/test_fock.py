import math

import numpy as np
import pytest
from scipy.linalg import expm

from vibronlab import fock
from vibronlab.chain import TightBinding, TrapConfig, build_chain
from vibronlab.gaussian import (
    CorrelatorState,
    build_bulk_generator,
    build_edge_generator,
    evolve,
    steady_state,
)
from vibronlab.laser import ReservoirParams

TP = 2 * math.pi


def _toy(j, onsite):
    n = len(onsite)
    t = np.zeros((n, n), complex)
    for i in range(n - 1):
        t[i, i + 1] = t[i + 1, i] = j
    return TightBinding(np.asarray(onsite, float), t)


def _single(gamma=200.0, nbar=0.8, delta=0.0, n_max=25):
    s = fock.FockSystem([(0, n_max)])
    s.add_onsite(0, 1e3)
    s.add_reservoir(0, ReservoirParams.thermal(gamma, nbar, delta))
    return s


def test_default_nmax_tail():
    for nb in (0.1, 1.5, 5.0):
        n = fock.default_nmax(nb)
        q = nb / (nb + 1)
        assert q ** (n + 1) < 1e-6 <= q**n
    assert fock.default_nmax(0.0) == 1


def test_operator_ordering_modes_then_spins():
    s = fock.FockSystem([(0, 2), (1, 1)], spins=[1])
    assert s.dims == [3, 2, 2]
    n0 = s.operator([("n", 0)]).toarray()
    expected = np.kron(np.diag([0, 1, 2]), np.eye(4))
    np.testing.assert_array_equal(n0, expected)
    sz = s.operator([("sz", 1)]).toarray()
    np.testing.assert_array_equal(sz, np.kron(np.eye(6), np.diag([1, -1])))
    sp_ = s.operator([("sp", 1)]).toarray()
    np.testing.assert_array_equal(sp_, np.kron(np.eye(6), [[0, 1], [0, 0]]))


def test_builder_errors():
    with pytest.raises(fock.FockError):
        fock.FockSystem([(0, 0)])
    with pytest.raises(fock.FockError):
        fock.FockSystem([(0, 2), (0, 3)])
    with pytest.raises(fock.DimensionError):
        fock.FockSystem([(0, 30), (1, 30), (2, 30)])
    s = fock.FockSystem([(0, 2)])
    with pytest.raises(fock.FockError, match="no spin"):
        s.add_term(1.0, [("sz", 0)])
    with pytest.raises(fock.FockError, match="unknown"):
        s.add_term(1.0, [("q", 0)])
    with pytest.raises(fock.FockError):
        s.add_hopping(0, 0, 1.0)


def test_non_hermitian_terms_rejected():
    s = fock.FockSystem([(0, 3), (1, 3)])
    s.add_term(1.0, [("ad", 0), ("a", 1)])
    s.add_reservoir(0, ReservoirParams.thermal(1.0, 0.1))
    with pytest.raises(fock.FockError, match="Hermitian"):
        fock.steady_state_dm(s)


def test_thermal_steady_state():
    s = _single(delta=37.0)
    mu = fock.steady_state_dm(s)
    np.testing.assert_allclose(np.diag(mu.rho).real, fock.thermal_populations(25, 0.8), atol=1e-12)
    assert abs(mu.rho - np.diag(np.diag(mu.rho))).max() < 1e-12


def test_no_dissipation_is_degenerate():
    s = fock.FockSystem([(0, 2), (1, 2)])
    s.add_hopping(0, 1, 1.0)
    with pytest.raises(fock.DegenerateSteadyStateError):
        fock.steady_state_dm(s)


def test_number_noise_closed_form_both_methods():
    g, nb = 200.0, 0.8
    s = _single(g, nb)
    exact = (nb**2 + nb) / (2 * g)
    d = fock.regression_spectrum(s, s.number(0), method="direct")
    i = fock.regression_spectrum(s, s.number(0), method="integrate")
    assert d.noise0.real == pytest.approx(exact, rel=1e-5)  # truncation at n_max = 25
    assert i.noise0.real == pytest.approx(d.noise0.real, rel=1e-7)
    assert d.mean.real == pytest.approx(nb, rel=1e-5)


def test_hopping_rabi_oscillation():
    j = 3.0
    s = fock.FockSystem([(0, 1), (1, 1)])
    s.add_hopping(0, 1, j)
    t = np.linspace(0, 2.0, 21)
    _, kets = fock.schrodinger_evolve(s, fock.product_ket(s, {0: 1}), t)
    n1 = np.array([np.vdot(k, s.number(1) @ k).real for k in kets])
    np.testing.assert_allclose(n1, np.sin(j * t) ** 2, atol=1e-9)


def test_lindblad_matches_schrodinger_without_dissipation():
    s = fock.FockSystem([(0, 2), (1, 2)], spins=[0])
    s.add_hopping(0, 1, 2.0)
    s.add_term(0.7, [("sz", 0), ("n", 1)])
    s.add_onsite(0, 1.3, envelope=(5.0, 0.4))
    psi0 = fock.product_ket(s, {0: 2}, {0: "plus"})
    t = np.linspace(0, 1.5, 7)
    _, kets = fock.schrodinger_evolve(s, psi0, t)
    traj = fock.lindblad_evolve(s, fock.DensityMatrix(np.outer(psi0, psi0.conj())), t[-1], t_eval=t)
    for k, rho in zip(kets, traj.states):
        np.testing.assert_allclose(rho.rho, np.outer(k, k.conj()), atol=1e-8)
        assert np.trace(rho.rho @ rho.rho).real == pytest.approx(1.0, abs=1e-8)


def test_trace_and_positivity_preserved():
    tb = _toy(TP * 5e3, [0.0, TP * 1e3, 0.0])
    res = {0: ReservoirParams.thermal(TP * 8e3, 0.7, TP * 1e3), 2: ReservoirParams.thermal(TP * 6e3, 0.1)}
    s = fock.from_tight_binding(tb, {0: 5, 1: 4, 2: 3}, res)
    traj = fock.lindblad_evolve(s, fock.product_state(s, {1: 2}), 200e-6, n_out=11)
    assert traj.trace_drift < 1e-9
    for st in traj.states:
        st.check()


def test_fock_matches_gaussian_dynamics():
    tb = _toy(TP * 5e3, [0.0, TP * 2e3])
    res = {0: ReservoirParams.thermal(TP * 10e3, 1.0, TP * 2e3)}
    s = fock.from_tight_binding(tb, 22, res)
    t = np.linspace(0, 150e-6, 11)
    traj = fock.lindblad_evolve(s, fock.product_state(s, {0: ("thermal", 0.3), 1: ("thermal", 0.8)}), t[-1],
                                t_eval=t)
    gen = build_edge_generator(tb, res)
    _, states = evolve(gen, CorrelatorState.thermal([0.3, 0.8]), t[-1], t_eval=t)
    for site in (0, 1):
        nf = traj.expect(s.number(site)).real
        ng = np.array([c.occupations[site] for c in states])
        np.testing.assert_allclose(nf, ng, rtol=1e-5)


def test_bulk_generator_reduction_matches_gaussian():
    _, tb = build_chain(["Mg24", "Mg25", "Mg24"], ["tau", "sigma", "tau"], 5e6,
                        TrapConfig("paul_trap", 3, axial_freq=TP * 0.5e6))
    res = {0: ReservoirParams.thermal(TP * 80e3, 1.65, -TP * 400e3),
           2: ReservoirParams.thermal(TP * 100e3, 1.63, -TP * 400e3)}
    gb = build_bulk_generator(tb, res)
    s = fock.from_bulk_generator(gb, 40)
    mu = fock.steady_state_dm(s)
    assert mu.expect(s.number(1)).real == pytest.approx(steady_state(gb).occupations[0], rel=1e-6)


def test_fit_ramsey_recovers_parameters():
    t = np.linspace(0, 1e-2, 300)
    a, b = 2.3e3, 150.0
    z = np.exp(-(b + 1j * a) * t)
    fa, fb, cov, res, ok, _ = fock.fit_ramsey(t, z)
    assert ok and fa == pytest.approx(a, rel=1e-9) and fb == pytest.approx(b, rel=1e-7)
    fa, fb, *_ = fock.fit_ramsey(t, z.conj())
    assert fa == pytest.approx(-a, rel=1e-9)
    assert not fock.fit_ramsey(t[:3], z[:3])[4]


def test_ramsey_on_fock_state_is_pure_cosine():
    # no dynamics: the coherence just rotates at coupling * n
    s = fock.FockSystem([(0, 4)])
    s.add_onsite(0, 0.0)
    lam = 50.0
    t = np.linspace(0, 0.2, 201)
    r = fock.ramsey_probe(s, lam, s.number(0), t, rho0=fock.product_state(s, {0: 2}))
    np.testing.assert_allclose(r.sigma_x, np.cos(2 * lam * t), atol=1e-9)
    assert r.mean == pytest.approx(2.0, rel=1e-9)
    assert abs(r.noise0) < 1e-8


def test_ramsey_weak_probe_reads_mean_and_noise():
    g, nb = 400.0, 0.5
    s = _single(g, nb, n_max=20)
    lam = 0.01 * g
    t = np.linspace(0, 0.2, 801)
    r = fock.ramsey_probe(s, lam, s.number(0), t)
    assert r.mean == pytest.approx(nb, rel=2e-3)
    # noise converges as 1/(g T) from the initial transient
    assert r.noise0 == pytest.approx((nb**2 + nb) / (2 * g), rel=0.03)


def test_current_operator_and_fano_zero_bias():
    tb = _toy(TP * 5e3, [0.0, 0.0, 0.0])
    res = {0: ReservoirParams.thermal(TP * 8e3, 0.2), 2: ReservoirParams.thermal(TP * 8e3, 0.2)}
    s = fock.from_tight_binding(tb, {0: 5, 1: 4, 2: 5}, res)
    op = fock.current_operator(s, 1)
    assert abs(op - op.conj().T).max() < 1e-12
    with pytest.raises(fock.FockError, match="vanishes"):
        fock.fano_factor(s, 1)


def test_bessel_peak():
    from scipy.special import jvp

    x = fock.first_bessel_peak()
    assert abs(jvp(1, x)) < 1e-13
    assert x == pytest.approx(1.8411837813406593, rel=1e-14)


def _switch(dw_over_j, zeta):
    _, tb = build_chain(["Mg25", "Be9", "Mg25"], ["sigma", "kappa", "sigma"], 5e6,
                        TrapConfig("paul_trap", 3, axial_freq=TP * 0.1e6))
    j = abs(tb.tunneling[0, 1])
    return fock.SwitchSetup(tb, dw_over_j * j, zeta, 1.0, 1), j


def test_switch_without_drive_blocks_transfer():
    setup, j = _switch(60.0, 0.0)
    t = np.linspace(0, 0.5e-3, 41)
    r = fock.switch_scenario(setup, t, "up")
    assert np.max(r.exact[2]) < 1e-3
    assert np.max(r.effective[2]) == pytest.approx(0.0, abs=1e-12)


def test_pat_hopping_amplitude_is_spin_selective():
    from scipy.special import jv

    zeta = 0.5
    setup, j = _switch(1000.0, zeta)
    pat = fock.switch_pat_system(setup)
    h = pat.hamiltonian(0.0).toarray()
    assert np.allclose(h, h.conj().T)
    for spin, factor in (("up", jv(1, 2 * zeta)), ("down", 0.0)):
        left = fock.product_ket(pat, {0: 1}, {1: spin})
        dot = fock.product_ket(pat, {1: 1}, {1: spin})
        assert abs(np.vdot(left, h @ dot)) == pytest.approx(j * factor, abs=1e-9 * j)


def test_current_probe_constraints():
    setup, _ = _switch(1000.0, 0.0)
    with pytest.raises(fock.FockError, match="zeta1"):
        fock.current_probe_setup(setup, 0.05, zeta1=3.0)
    with pytest.raises(fock.FockError, match="phi1"):
        fock.current_probe_setup(setup, 0.05, phi1=0.0)
    with pytest.raises(fock.FockError, match="dw1_minus"):
        fock.current_probe_setup(setup, 0.05, dw1_minus=1.0)
    with pytest.raises(fock.FockError, match="phi2"):
        fock.current_probe_setup(setup, 0.05, phi2=0.1)
    with pytest.raises(fock.FockError, match="dw2_plus"):
        fock.current_probe_setup(setup, 0.05, dw2_plus=1.0)
    with pytest.raises(fock.FockError, match="zeta2"):
        fock.current_probe_setup(setup, 0.5)
    probe = fock.current_probe_setup(setup, 0.05)
    assert probe.lam == pytest.approx(0.2 / math.pi, rel=1e-12)


def test_pulse_time_outside_window():
    setup, _ = _switch(60.0, 0.0)
    with pytest.raises(fock.FockError):
        fock.switch_scenario(setup, np.linspace(0, 1e-4, 5), "up", pulse_times=(2e-4,))


def test_pi_pulse_unitary_applied():
    # a sigma^x pulse flips the spin; the sample at the pulse time is taken before it
    s = fock.FockSystem([(0, 1)], spins=[0])
    s.add_onsite(0, 0.0)
    sx = s.operator([("sx", 0)])
    psi0 = fock.product_ket(s, {}, {0: "down"})
    t = np.linspace(0, 1.0, 5)
    _, kets = fock.schrodinger_evolve(s, psi0, t, stops={0.5: sx})
    sz = s.operator([("sz", 0)])
    vals = [np.vdot(k, sz @ k).real for k in kets]
    np.testing.assert_allclose(vals, [-1, -1, -1, 1, 1], atol=1e-12)
    # up to a phase the pulse is exp(-i pi sigma^x / 2)
    assert np.allclose(expm(-1j * math.pi / 2 * sx.toarray()) @ psi0, -1j * (sx @ psi0))
