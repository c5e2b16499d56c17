import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants as sc
from scipy.special import jv

from vibronlab.constants import SPECIES, ion_mass
from vibronlab.laser import (
    CoolingSpec,
    LaserError,
    ReservoirParams,
    bessel_j,
    doppler_coefficients,
    drive_from_lasers,
    lamb_dicke,
    pat_tunneling_factor,
    spin_current_coupling,
)

TP = 2 * math.pi
GAMMA = TP * 41.4e6
W = TP * 5e6


def _eta():
    m = ion_mass(SPECIES["Mg24"]["mass_u"])
    return lamb_dicke(SPECIES["Mg24"]["wavelength"], m, W)


def test_lamb_dicke_definition():
    m = ion_mass(SPECIES["Mg24"]["mass_u"])
    lam = SPECIES["Mg24"]["wavelength"]
    expected = TP / lam * math.sqrt(sc.hbar / (2 * m * W))
    assert _eta() == pytest.approx(expected, rel=1e-8)
    assert 0.05 < _eta() < 0.2


@pytest.mark.parametrize("detuning,rabi", [(-0.6, 1.0), (-0.5, 1.0), (-0.8, 1.4), (-0.3, 0.2)])
def test_doppler_matches_sideband_rates(detuning, rabi):
    # weak-drive sideband rates A-+ = (eta Omega)^2 Gamma / 4 / ((Delta +- w)^2 + Gamma^2/4)
    eta = _eta()
    d, o = detuning * GAMMA, rabi * GAMMA
    a_minus = (eta * o) ** 2 * GAMMA / 4 / ((d + W) ** 2 + GAMMA**2 / 4)
    a_plus = (eta * o) ** 2 * GAMMA / 4 / ((d - W) ** 2 + GAMMA**2 / 4)
    r = doppler_coefficients(CoolingSpec(o, d, GAMMA, eta, W))
    assert r.gamma == pytest.approx((a_minus - a_plus) / 2, rel=1e-12)
    assert r.nbar == pytest.approx(a_plus / (a_minus - a_plus), rel=1e-12)
    assert not r.heating


def test_blue_detuning_heats():
    r = doppler_coefficients(CoolingSpec(GAMMA, 0.5 * GAMMA, GAMMA, _eta(), W))
    assert r.heating and r.gamma < 0


def test_thermal_round_trip():
    r = ReservoirParams.thermal(123.0, 2.5, -7.0)
    assert (r.gamma, r.nbar, r.delta) == pytest.approx((123.0, 2.5, -7.0), rel=1e-14)
    r2 = ReservoirParams.from_lambdas(r.lambda_plus, r.lambda_minus)
    assert r2 == r
    with pytest.raises(LaserError):
        ReservoirParams.thermal(-1.0, 1.0)
    with pytest.raises(LaserError):
        ReservoirParams.thermal(1.0, -0.1)


def test_cooling_spec_validation():
    with pytest.raises(LaserError):
        CoolingSpec(1.0, -1.0, 0.0, 0.1, 1.0)
    with pytest.raises(LaserError):
        CoolingSpec(1.0, -1.0, 1.0, 1.5, 1.0)
    with pytest.raises(LaserError):
        CoolingSpec(-1.0, -1.0, 1.0, 0.1, 1.0)


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=-20, max_value=20), st.floats(min_value=-50, max_value=50, allow_nan=False))
def test_bessel_against_scipy(n, x):
    assert bessel_j(n, x) == pytest.approx(jv(n, x), abs=1e-12, rel=1e-9)


@pytest.mark.parametrize("x", [1e-9, 1e-4, 1e-3, 0.5, math.pi, 12.3, 49.9])
def test_bessel_small_and_mid(x):
    for n in (0, 1, 2, 5):
        assert bessel_j(n, x) == pytest.approx(jv(n, x), abs=1e-15, rel=1e-10)


def test_bessel_domain():
    with pytest.raises(LaserError):
        bessel_j(21, 1.0)
    with pytest.raises(LaserError):
        bessel_j(1.5, 1.0)
    with pytest.raises(LaserError):
        bessel_j(0, 51.0)


def test_pat_factor_spin_selectivity():
    z = 0.92
    assert pat_tunneling_factor(z, 1.0, -1) == 0.0
    assert pat_tunneling_factor(z, 1.0, 1) == pytest.approx(jv(1, 2 * z), rel=1e-12)
    with pytest.raises(LaserError):
        pat_tunneling_factor(z, 1.0, 0)
    with pytest.raises(LaserError):
        pat_tunneling_factor(-z, 1.0, 1)


def test_spin_current_coupling_reduces():
    # J0(x) + J2(x) = 2 J1(x)/x, so the coupling is 4 zeta2/pi
    assert spin_current_coupling(0.05) == pytest.approx(0.2 / math.pi, rel=1e-12)
    assert spin_current_coupling(0.0) == 0.0


def test_drive_from_lasers_split():
    d = drive_from_lasers(2.0, 1.0, 0.1, 5.0, 0.0)
    assert d.dw_plus == pytest.approx(-0.03)
    assert d.dw_minus == pytest.approx(-0.01)
    with pytest.raises(LaserError):
        drive_from_lasers(1.0, 1.0, 0.1, 1.0, 7.0)
    with pytest.raises(LaserError):
        drive_from_lasers(1.0, 1.0, 0.1, -1.0, 0.0)
    assert np.isfinite(d.freq)
