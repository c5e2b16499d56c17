"""Laser-derived model constants.

Doppler-cooling coefficients for the reservoir ions, spin-dependent drive
constants, and the Bessel factors that enter photon-assisted tunneling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import HBAR


class LaserError(ValueError):
    pass


def lamb_dicke(wavelength: float, mass: float, mode_freq: float) -> float:
    """eta = k sqrt(hbar / (2 m w)) for a laser of the given wavelength (m)."""
    k = 2.0 * math.pi / wavelength
    return k * math.sqrt(HBAR / (2.0 * mass * mode_freq))


@dataclass(frozen=True)
class CoolingSpec:
    rabi: float
    detuning: float
    linewidth: float
    lamb_dicke: float
    mode_freq: float

    def __post_init__(self):
        if not self.linewidth > 0:
            raise LaserError("linewidth must be positive")
        if not 0 < self.lamb_dicke < 1:
            raise LaserError("lamb_dicke must lie in (0, 1)")
        if self.rabi < 0:
            raise LaserError("rabi must be non-negative")


@dataclass(frozen=True)
class ReservoirParams:
    """Heating/cooling coefficients of one reservoir mode and derived rates."""

    lambda_plus: complex
    lambda_minus: complex
    gamma: float
    delta: float
    nbar: float

    @property
    def heating(self) -> bool:
        return not self.gamma > 0

    @classmethod
    def from_lambdas(cls, lambda_plus: complex, lambda_minus: complex) -> "ReservoirParams":
        w = lambda_minus.conjugate() - lambda_plus
        gamma = w.real
        nbar = lambda_plus.real / gamma if gamma != 0 else math.inf
        return cls(complex(lambda_plus), complex(lambda_minus), gamma, -w.imag, nbar)

    @classmethod
    def thermal(cls, gamma: float, nbar: float, delta: float = 0.0) -> "ReservoirParams":
        """Reservoir with prescribed rate, occupation and shift.

        Lambda+ = gamma nbar and Lambda- = gamma (nbar + 1) + i delta, which
        reproduces gamma, delta and nbar through the usual definitions.
        """
        if not gamma > 0 or nbar < 0:
            raise LaserError("thermal reservoir needs gamma > 0 and nbar >= 0")
        return cls.from_lambdas(complex(gamma * nbar), complex(gamma * (nbar + 1.0), delta))


def doppler_coefficients(spec: CoolingSpec) -> ReservoirParams:
    """Lambda+- = (Omega eta / 2)^2 / (Gamma/2 + i(-Delta +- w))."""
    amp = (0.5 * spec.rabi * spec.lamb_dicke) ** 2
    lp = amp / complex(0.5 * spec.linewidth, -spec.detuning + spec.mode_freq)
    lm = amp / complex(0.5 * spec.linewidth, -spec.detuning - spec.mode_freq)
    return ReservoirParams.from_lambdas(lp, lm)


@dataclass(frozen=True)
class DriveSpec:
    dw_plus: float
    dw_minus: float
    freq: float
    phase: float
    site: int = 0

    def __post_init__(self):
        if self.freq < 0:
            raise LaserError("drive frequency must be non-negative")
        if not 0 <= self.phase < 2 * math.pi:
            raise LaserError("phase must lie in [0, 2 pi)")


def drive_from_lasers(rabi_up, rabi_down, lamb_dicke, freq, phase, site=0) -> DriveSpec:
    """Spin-dependent frequency modulation from the two-photon laser couplings."""
    if not 0 < lamb_dicke < 1:
        raise LaserError("lamb_dicke must lie in (0, 1)")
    dw_up = -abs(rabi_up) * lamb_dicke**2
    dw_down = -abs(rabi_down) * lamb_dicke**2
    return DriveSpec(dw_up + dw_down, dw_up - dw_down, freq, phase, site)


def _bessel_int(n: int, x: float) -> float:
    """J_n(x) for n >= 0, x > 0 by Miller's downward recurrence.

    The unnormalised sequence is scaled with J_0 + 2 sum_k J_2k = 1.
    """
    if x < 1e-3:
        # the recurrence factor 2m/x overflows at tiny x; the series converges fast there
        s, term, k = 0.0, (0.5 * x) ** n / math.factorial(n), 0
        while abs(term) > 1e-18 or k < 2:
            s += term
            k += 1
            term *= -(0.25 * x * x) / (k * (n + k))
        return s
    start = 2 * ((max(n, int(x)) + 30 + int(math.sqrt(60 * max(n, int(x), 1)))) // 2)
    big = 1e250
    jp1, j = 0.0, 1e-300
    norm = 0.0
    result = 0.0
    for m in range(start, 0, -1):
        jm1 = 2.0 * m / x * j - jp1
        jp1, j = j, jm1
        if abs(j) > big:
            j /= big
            jp1 /= big
            result /= big
            norm /= big
        if m - 1 == n:
            result = j
        if (m - 1) % 2 == 0 and m - 1 > 0:
            norm += 2.0 * j
    norm += j
    return result / norm


def bessel_j(order: int, x: float) -> float:
    """First-kind Bessel function of integer order, |order| <= 20, |x| <= 50."""
    if int(order) != order or abs(order) > 20:
        raise LaserError(f"order must be an integer with |order| <= 20, got {order}")
    if not abs(x) <= 50:
        raise LaserError(f"|x| must be <= 50, got {x}")
    order = int(order)
    sign = 1.0
    if order < 0:
        order = -order
        sign *= (-1) ** order
    if x < 0:
        x = -x
        sign *= (-1) ** order
    if x == 0:
        return sign * (1.0 if order == 0 else 0.0)
    return sign * _bessel_int(order, x)


def pat_tunneling_factor(zeta: float, r: float, spin: int) -> float:
    """J_1(zeta (1 + r spin)), the spin-conditioned photon-assisted factor."""
    if zeta < 0:
        raise LaserError("zeta must be non-negative")
    if spin not in (1, -1):
        raise LaserError("spin must be +1 or -1")
    return bessel_j(1, zeta * (1.0 + r * spin))


def spin_current_coupling(zeta2: float) -> float:
    """Dimensionless spin-current coupling 2 zeta2 (J_0(pi) + J_2(pi)) / J_1(pi)."""
    if zeta2 < 0:
        raise LaserError("zeta2 must be non-negative")
    j1 = bessel_j(1, math.pi)
    return 2.0 * zeta2 * (bessel_j(0, math.pi) + bessel_j(2, math.pi)) / j1
