"""Ion-crystal geometry and the vibron tight-binding model.

All frequencies are angular (rad/s), lengths in metres, masses in kg.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .constants import E0_SQ, SPECIES, TWO_PI, ion_mass

log = logging.getLogger(__name__)

ROLES = ("sigma", "tau", "kappa")


class GeometryError(ValueError):
    """Invalid trap or chain input, or a failed equilibrium solve."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IonSpecies:
    """One ion species with the role it plays in the chain.

    ``label`` is the role tag (sigma, tau or kappa), ``name`` the isotope.
    """

    label: str
    mass: float
    transverse_freq: float
    linewidth: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.label not in ROLES:
            raise GeometryError(f"unknown role {self.label!r}, expected one of {ROLES}")
        if not self.mass > 0:
            raise GeometryError("mass must be positive")
        if not self.transverse_freq > 0:
            raise GeometryError("transverse_freq must be positive")
        if self.linewidth < 0:
            raise GeometryError("linewidth must be non-negative")

    @classmethod
    def from_table(cls, name: str, label: str, transverse_freq_hz: float) -> "IonSpecies":
        try:
            row = SPECIES[name]
        except KeyError:
            raise GeometryError(f"unknown isotope {name!r}; known: {sorted(SPECIES)}") from None
        return cls(
            label=label,
            mass=ion_mass(row["mass_u"]),
            transverse_freq=TWO_PI * transverse_freq_hz,
            linewidth=TWO_PI * row["linewidth_hz"],
            name=name,
        )


@dataclass(frozen=True)
class TrapConfig:
    kind: str
    n_sites: int
    axial_freq: float | None = None
    spacing: float | None = None

    def __post_init__(self):
        if self.n_sites < 2:
            raise GeometryError(f"n_sites must be >= 2, got {self.n_sites}")
        if self.kind == "paul_trap":
            if self.axial_freq is None or not self.axial_freq > 0:
                raise GeometryError("paul_trap needs axial_freq > 0")
            if self.spacing is not None:
                raise GeometryError("paul_trap does not take a spacing")
        elif self.kind == "uniform_lattice":
            if self.spacing is None or not self.spacing > 0:
                raise GeometryError("uniform_lattice needs spacing > 0")
            if self.axial_freq is not None:
                raise GeometryError("uniform_lattice does not take an axial_freq")
        else:
            raise GeometryError(f"unknown trap kind {self.kind!r}")


@dataclass(frozen=True)
class ChainGeometry:
    positions: np.ndarray
    species: tuple
    species_of: tuple

    def __post_init__(self):
        pos = _frozen(self.positions)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "species_of", tuple(int(s) for s in self.species_of))
        if len(self.species_of) != len(pos):
            raise GeometryError("species_of length differs from number of positions")
        if np.any(np.diff(pos) <= 0):
            raise GeometryError("positions must be strictly increasing")

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    def ion(self, i: int) -> IonSpecies:
        return self.species[self.species_of[i]]

    @property
    def masses(self) -> np.ndarray:
        return np.array([self.ion(i).mass for i in range(self.n_sites)])

    @property
    def transverse_freqs(self) -> np.ndarray:
        return np.array([self.ion(i).transverse_freq for i in range(self.n_sites)])

    @property
    def labels(self) -> list:
        return [self.ion(i).label for i in range(self.n_sites)]


@dataclass(frozen=True)
class TightBinding:
    """Single-particle vibron model.

    ``onsite`` holds omega_alpha + J_ii + offsets, where J_ii = -sum_j J_ij.
    ``tunneling`` is Hermitian with zero diagonal.
    """

    onsite: np.ndarray
    tunneling: np.ndarray
    offsets: np.ndarray = None
    rwa_ratio: float = 0.0
    rwa_warning: bool = False
    positions: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.onsite)
        object.__setattr__(self, "onsite", _frozen(self.onsite))
        object.__setattr__(self, "tunneling", _frozen(self.tunneling, complex))
        off = np.zeros(n) if self.offsets is None else self.offsets
        object.__setattr__(self, "offsets", _frozen(off))
        if self.positions is not None:
            object.__setattr__(self, "positions", _frozen(self.positions))
        t = self.tunneling
        if t.shape != (n, n):
            raise GeometryError("tunneling must be n x n")
        if np.any(np.diag(t) != 0):
            raise GeometryError("tunneling diagonal must be zero")
        if not np.array_equal(t, t.conj().T):
            raise GeometryError("tunneling must be Hermitian")

    @property
    def n_sites(self) -> int:
        return len(self.onsite)

    def matrix(self) -> np.ndarray:
        """Single-particle Hamiltonian matrix, onsite on the diagonal."""
        return np.diag(self.onsite).astype(complex) + self.tunneling


def equilibrium_positions(trap: TrapConfig, species, species_of, tol=1e-13, max_iter=200) -> ChainGeometry:
    """Axial equilibrium of the ion crystal.

    For a Paul trap each ion feels a restoring force m_i w_z^2 z_i and the
    Coulomb repulsion of all others. The balance is solved in units of
    l = (e0^2 / (m_min w_z^2))^(1/3) by damped Newton iteration on the
    (convex) potential energy, starting from a uniform seed.
    """
    species = tuple(species)
    species_of = tuple(species_of)
    n = trap.n_sites
    if len(species_of) != n:
        raise GeometryError(f"species_of has {len(species_of)} entries for {n} sites")
    for s in species_of:
        if not 0 <= s < len(species):
            raise GeometryError(f"species index {s} out of range")

    if trap.kind == "uniform_lattice":
        z = (np.arange(n) - 0.5 * (n - 1)) * trap.spacing
        return ChainGeometry(z, species, species_of)

    masses = np.array([species[s].mass for s in species_of])
    m_ref = masses.min()
    mu = masses / m_ref
    ell = (E0_SQ / (m_ref * trap.axial_freq**2)) ** (1.0 / 3.0)

    def energy(u):
        d = np.abs(u[:, None] - u[None, :])
        iu = np.triu_indices(n, 1)
        return 0.5 * np.sum(mu * u**2) + np.sum(1.0 / d[iu])

    def grad_hess(u):
        diff = u[:, None] - u[None, :]
        np.fill_diagonal(diff, 1.0)
        inv2 = np.sign(diff) / diff**2
        np.fill_diagonal(inv2, 0.0)
        g = mu * u - inv2.sum(axis=1)
        off = 2.0 / np.abs(diff) ** 3
        np.fill_diagonal(off, 0.0)
        h = -off
        h[np.diag_indices(n)] = mu + off.sum(axis=1)
        return g, h

    # seed spacing from the large-N central density, which only needs to be ordered
    u = (np.arange(n) - 0.5 * (n - 1)) * 2.0 * n ** (-0.56)
    e = energy(u)
    for it in range(max_iter):
        g, h = grad_hess(u)
        res = np.max(np.abs(g))
        if res < tol:
            break
        step = np.linalg.solve(h, g)
        t = 1.0
        while True:
            trial = u - t * step
            if np.all(np.diff(trial) > 0):
                et = energy(trial)
                # near convergence energy changes drop below roundoff, so a
                # decrease of the force residual is accepted as well
                if et <= e + 1e-4 * t * float(g @ -step) or t < 1e-12:
                    break
                if np.max(np.abs(grad_hess(trial)[0])) < 0.5 * res:
                    break
            t *= 0.5
        u, e = trial, et
    else:
        g, _ = grad_hess(u)
        res = np.max(np.abs(g))
        if res >= tol:
            raise GeometryError(f"equilibrium solve did not converge after {max_iter} iterations, residual {res:.3e}")
    return ChainGeometry(u * ell, species, species_of)


def axial_force_residual(geometry: ChainGeometry, axial_freq: float) -> np.ndarray:
    """Net axial force on each ion divided by the trap force scale m_min w_z^2 l."""
    z = geometry.positions
    m = geometry.masses
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    coul = np.sign(diff) / diff**2
    np.fill_diagonal(coul, 0.0)
    f = -m * axial_freq**2 * z + E0_SQ * coul.sum(axis=1)
    m_ref = m.min()
    ell = (E0_SQ / (m_ref * axial_freq**2)) ** (1.0 / 3.0)
    return f / (m_ref * axial_freq**2 * ell)


def tunneling_matrix(geometry: ChainGeometry, rwa_threshold: float = 0.05) -> TightBinding:
    """Dipolar vibron couplings J_ij = e0^2 / (2 sqrt(m_i w_i m_j w_j) |z_i - z_j|^3)."""
    z = geometry.positions
    m = geometry.masses
    w = geometry.transverse_freqs
    n = len(z)
    dist = np.abs(z[:, None] - z[None, :])
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] == 0):
        raise GeometryError("coincident ion positions")
    mw = np.sqrt(np.outer(m * w, m * w))
    with np.errstate(divide="ignore"):
        jmat = np.where(off, E0_SQ / (2.0 * mw * np.where(off, dist, 1.0) ** 3), 0.0)
    onsite = w - jmat.sum(axis=1)
    ratio = float(np.max(jmat / (w[:, None] + w[None, :])))
    warn = ratio > rwa_threshold
    if warn:
        log.warning("rotating-wave approximation questionable: max J/(w_a + w_b) = %.3g", ratio)
    return TightBinding(onsite, jmat.astype(complex), None, ratio, warn, positions=z)


def apply_offsets(tb: TightBinding, offsets) -> TightBinding:
    """Add static per-site frequency shifts to the onsite energies."""
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape != (tb.n_sites,):
        raise GeometryError(f"expected {tb.n_sites} offsets, got shape {offsets.shape}")
    return TightBinding(
        tb.onsite + offsets,
        tb.tunneling,
        tb.offsets + offsets,
        tb.rwa_ratio,
        tb.rwa_warning,
        positions=tb.positions,
    )


def lead_offsets(n_sites: int, dot_site: int, dw_minus: float, sites=None) -> np.ndarray:
    """Step profile -dw/2 left of ``dot_site`` and +dw/2 right of it.

    Only the sites in ``sites`` (default: all but the two chain ends and the dot)
    are shifted.
    """
    if sites is None:
        sites = [i for i in range(1, n_sites - 1) if i != dot_site]
    off = np.zeros(n_sites)
    for i in sites:
        if i < dot_site:
            off[i] = -0.5 * dw_minus
        elif i > dot_site:
            off[i] = 0.5 * dw_minus
    return off


def build_chain(isotopes, roles, transverse_freq_hz, trap: TrapConfig) -> tuple[ChainGeometry, TightBinding]:
    """Convenience: geometry and tight-binding model from per-site isotope names."""
    if len(isotopes) != len(roles):
        raise GeometryError("isotopes and roles differ in length")
    keys, species, species_of = {}, [], []
    for iso, role in zip(isotopes, roles):
        k = (iso, role)
        if k not in keys:
            keys[k] = len(species)
            species.append(IonSpecies.from_table(iso, role, transverse_freq_hz))
        species_of.append(keys[k])
    geo = equilibrium_positions(trap, species, species_of)
    return geo, tunneling_matrix(geo)
