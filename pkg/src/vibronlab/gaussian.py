"""Correlator dynamics for quadratic (Gaussian) open vibron chains.

The state is C_ij = <a_i^dag a_j>. For a Hamiltonian H = sum_kl JJ_kl a_k^dag a_l
and quadratic dissipators the correlator obeys the closed linear equation

    dC/dt = i[JJ^T, C] - (W C + C W^dag) - D o C + K

where ``o`` is the elementwise product. For real symmetric JJ (the plain
tight-binding chain) JJ^T = JJ. W is the complex conjugate of the damping
matrix seen by the amplitudes <a>, so that for a single reservoir mode
W = (Lambda^-)^* - Lambda^+ and K = 2 Re Lambda^+.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainGeometry, TightBinding
from .integrate import solve
from .laser import ReservoirParams

log = logging.getLogger(__name__)

HERM_TOL = 1e-10
PSD_TOL = 1e-8
HURWITZ_TOL = 1e-12
DENSE_MAX = 60


class GaussianError(ValueError):
    pass


class UnreachedSitesError(GaussianError):
    def __init__(self, sites, max_real):
        super().__init__(
            f"generator is not Hurwitz (max real eigenvalue {max_real:.3e} rad/s); "
            f"no dissipation path reaches sites {sites}"
        )
        self.sites = sites


def _freeze(a, dtype=complex):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianGenerator:
    """Matrices (JJ, W, K, D) of the correlator equation.

    ``sites`` maps rows of the matrices to chain site indices (the bulk
    generator drops the reservoir sites).
    """

    jmat: np.ndarray
    wmat: np.ndarray
    kmat: np.ndarray
    dmat: np.ndarray
    kind: str
    sites: tuple
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("jmat", "wmat", "kmat"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        object.__setattr__(self, "dmat", _freeze(self.dmat, float))
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        n = self.jmat.shape[0]
        for name in ("jmat", "wmat", "kmat", "dmat"):
            if getattr(self, name).shape != (n, n):
                raise GaussianError(f"{name} must be {n} x {n}")
        if self.kind not in ("edge", "bulk"):
            raise GaussianError(f"unknown generator kind {self.kind!r}")
        scale = max(1.0, float(np.max(np.abs(self.jmat - np.diag(np.diag(self.jmat))), initial=0.0)))
        if np.max(np.abs(self.jmat - self.jmat.conj().T)) > 1e-12 * max(scale, np.max(np.abs(self.jmat))):
            raise GaussianError("jmat must be Hermitian")
        kscale = max(1e-300, float(np.max(np.abs(self.kmat), initial=0.0)))
        if np.max(np.abs(self.kmat - self.kmat.conj().T), initial=0.0) > 1e-12 * kscale:
            raise GaussianError("kmat must be Hermitian")
        d = self.dmat
        if np.any(np.diag(d) != 0) or np.any(d < 0) or not np.array_equal(d, d.T):
            raise GaussianError("dmat must be symmetric, non-negative, with zero diagonal")

    @property
    def n(self) -> int:
        return self.jmat.shape[0]

    def with_dephasing(self, dmat) -> "GaussianGenerator":
        dmat = np.asarray(dmat, dtype=float)
        if dmat.shape != (self.n, self.n):
            # a full-chain matrix is restricted to the generator's sites
            idx = np.array(self.sites)
            dmat = dmat[np.ix_(idx, idx)]
        return GaussianGenerator(self.jmat, self.wmat, self.kmat, dmat, self.kind, self.sites, dict(self.info))

    def min_k_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.kmat).min()) if self.n else 0.0

    # -- the linear map ---------------------------------------------------
    def _jt(self):
        jt = self.jmat.T.copy()
        # a common frequency commutes with C; removing it avoids cancellation
        jt[np.diag_indices(self.n)] -= np.mean(np.diag(jt).real)
        return jt

    def rhs(self, c: np.ndarray) -> np.ndarray:
        jt = self._jt()
        w = self.wmat
        return 1j * (jt @ c - c @ jt) - (w @ c + c @ w.conj().T) - self.dmat * c + self.kmat

    def homogeneous_operator(self) -> np.ndarray:
        """N^2 x N^2 matrix of the map C -> dC/dt - K acting on row-major vec(C)."""
        n = self.n
        eye = np.eye(n)
        jt = self._jt()
        w = self.wmat
        op = 1j * (np.kron(jt, eye) - np.kron(eye, jt.T))
        op -= np.kron(w, eye) + np.kron(eye, w.conj())
        op -= np.diag(self.dmat.reshape(-1).astype(complex))
        return op

    def amplitude_matrix(self) -> np.ndarray:
        """A with dC/dt = -(A C + C A^dag) + K when D = 0."""
        return self.wmat - 1j * self._jt()


@dataclass(frozen=True)
class CorrelatorState:
    cmat: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cmat", _freeze(self.cmat))

    @property
    def occupations(self) -> np.ndarray:
        return np.diag(self.cmat).real.copy()

    def check(self, herm_tol=HERM_TOL, psd_tol=PSD_TOL):
        """Raise if the invariants (Hermitian, PSD, real non-negative diagonal) fail."""
        c = self.cmat
        scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
        herm = float(np.max(np.abs(c - c.conj().T), initial=0.0))
        if herm > herm_tol * scale:
            raise GaussianError(f"correlator not Hermitian (deviation {herm:.3e})")
        ev = np.linalg.eigvalsh(0.5 * (c + c.conj().T))
        if ev.size and ev.min() < -psd_tol * scale:
            raise GaussianError(f"correlator not positive semidefinite (min eigenvalue {ev.min():.3e})")
        return self

    @classmethod
    def thermal(cls, nbars, time=0.0) -> "CorrelatorState":
        return cls(np.diag(np.asarray(nbars, dtype=float)).astype(complex), time)


@dataclass(frozen=True)
class NoiseModel:
    gamma_d: float
    xi_c: float
    tau_c: float = 0.0

    def __post_init__(self):
        if self.gamma_d < 0:
            raise GaussianError("gamma_d must be non-negative")
        if not self.xi_c > 0:
            raise GaussianError("xi_c must be positive")


@dataclass(frozen=True)
class DisorderModel:
    dw_minus: float
    affected_sites: tuple
    mode: str = "monte_carlo"
    n_samples: int = 500
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "affected_sites", tuple(int(s) for s in self.affected_sites))
        if self.mode not in ("exhaustive", "monte_carlo"):
            raise GaussianError(f"unknown disorder mode {self.mode!r}")
        if self.mode == "exhaustive" and len(self.affected_sites) > 16:
            raise GaussianError(
                f"exhaustive enumeration of {len(self.affected_sites)} sites needs "
                f"2^{len(self.affected_sites)} solves; use mode='monte_carlo' beyond 16 sites"
            )
        if self.n_samples < 1:
            raise GaussianError("n_samples must be >= 1")


# -- generators -------------------------------------------------------------

def _check_sites(reservoirs, n):
    for s, r in reservoirs.items():
        if not 0 <= s < n:
            raise GaussianError(f"reservoir on nonexistent site {s} (chain has {n} sites)")
        if r.heating:
            raise GaussianError(f"reservoir at site {s} heats (gamma = {r.gamma:.3e} <= 0)")


def build_edge_generator(tb: TightBinding, reservoirs: dict) -> GaussianGenerator:
    """Exact treatment: every reservoir ion is kept as a damped mode."""
    n = tb.n_sites
    _check_sites(reservoirs, n)
    w = np.zeros((n, n), complex)
    k = np.zeros((n, n), complex)
    for s, r in reservoirs.items():
        w[s, s] += r.lambda_minus.conjugate() - r.lambda_plus
        k[s, s] += 2.0 * r.lambda_plus.real
    info = {"reservoirs": {int(s): r for s, r in reservoirs.items()}}
    return GaussianGenerator(tb.matrix(), w, k, np.zeros((n, n)), "edge", range(n), info)


def upsilon(tb: TightBinding, site: int, res: ReservoirParams, bulk) -> np.ndarray:
    """Second-order self-energy matrix of the bulk sites due to one reservoir.

    Y_ij = J_il J_lj / (gamma_l - i((w_i - delta_l) - w_l)).
    """
    jl = tb.tunneling[np.ix_(bulk, [site])][:, 0]
    w = tb.onsite
    den = res.gamma - 1j * ((w[bulk] - res.delta) - w[site])
    return np.outer(jl, tb.tunneling[site, bulk]) / den[:, None]


def build_bulk_generator(tb: TightBinding, reservoirs: dict, strong_factor: float = 10.0) -> GaussianGenerator:
    """Bulk-only generator after adiabatic elimination of the edge reservoirs.

    The Hermitian part of each self-energy Y gives the dissipative rates
    (Lambda~^+ = Re Y nbar, Lambda~^- = Re Y (nbar + 1)) and the anti-Hermitian
    part renormalises the tunnelings. For a symmetric Y these are its real and
    imaginary parts.
    """
    n = tb.n_sites
    _check_sites(reservoirs, n)
    for s in reservoirs:
        if s not in (0, n - 1):
            raise GaussianError(f"reservoir at site {s} is not at a chain edge; elimination needs edge reservoirs")
    bulk = [i for i in range(n) if i not in reservoirs]
    if not bulk:
        raise GaussianError("no bulk sites left after removing the reservoirs")
    jmax = float(np.max(np.abs(tb.tunneling)))
    h = tb.matrix()[np.ix_(bulk, bulk)]
    w = np.zeros((len(bulk), len(bulk)), complex)
    k = np.zeros_like(w)
    lam_p = np.zeros_like(w)
    lam_m = np.zeros_like(w)
    for s, r in reservoirs.items():
        if 2 * r.gamma < strong_factor * jmax:
            log.warning(
                "weak cooling at site %d: 2 gamma = %.3g rad/s < %g max|J| = %.3g rad/s",
                s, 2 * r.gamma, strong_factor, strong_factor * jmax,
            )
        y = upsilon(tb, s, r, bulk)
        g = 0.5 * (y + y.conj().T)
        m = (y - y.conj().T) / 2j
        h = h + m
        lam_p += g * r.nbar
        lam_m += g * (r.nbar + 1.0)
    # conjugation: W and K act on <a^dag a>, the rates above on <a>
    w = lam_m.conj() - lam_p.conj()
    k = 2.0 * lam_p.conj()
    info = {
        "reservoirs": {int(s): r for s, r in reservoirs.items()},
        "lambda_plus": lam_p,
        "lambda_minus": lam_m,
    }
    return GaussianGenerator(h, w, k, np.zeros((len(bulk), len(bulk))), "bulk", bulk, info)


def dephasing_matrix(geometry_or_positions, noise: NoiseModel) -> np.ndarray:
    """D_ij = 2 Gamma_d (1 - exp(-|z_i - z_j| / xi_c)), zero diagonal."""
    z = geometry_or_positions.positions if isinstance(geometry_or_positions, ChainGeometry) else np.asarray(geometry_or_positions)
    dist = np.abs(z[:, None] - z[None, :])
    d = 2.0 * noise.gamma_d * (1.0 - np.exp(-dist / noise.xi_c))
    np.fill_diagonal(d, 0.0)
    return d


# -- dynamics -----------------------------------------------------------------

def _hermitize(c):
    return 0.5 * (c + c.conj().T)


def evolve(gen: GaussianGenerator, c0: CorrelatorState, t_final: float, dt_max: float = np.inf,
           n_out: int = 201, t_eval=None, rtol: float = 1e-9, atol: float = 1e-12):
    """Integrate the correlator equation; returns (times, list of CorrelatorState)."""
    c0.check()
    if c0.cmat.shape != (gen.n, gen.n):
        raise GaussianError("initial correlator has the wrong shape")
    if not dt_max > 0:
        raise GaussianError("dt_max must be positive")
    if t_eval is None:
        t_eval = c0.time + np.linspace(0.0, t_final, n_out)
    jt = gen._jt()
    w = gen.wmat
    wd = w.conj().T
    d = gen.dmat
    k = gen.kmat

    def rhs(t, c):
        return 1j * (jt @ c - c @ jt) - (w @ c + c @ wd) - d * c + k

    sol = solve(rhs, c0.cmat, t_eval, rtol=rtol, atol=atol, dt_max=dt_max, project=_hermitize)
    return sol.t, [CorrelatorState(c, t) for t, c in zip(sol.t, sol.y)]


def _hurwitz(gen: GaussianGenerator):
    """Largest real part of the homogeneous spectrum and offending eigenvectors."""
    a = gen.amplitude_matrix()
    lam, vec = np.linalg.eig(a)
    if not np.any(gen.dmat):
        # spectrum of C -> -(A C + C A^dag) is {-(l_i + conj l_j)}
        return -2.0 * float(lam.real.min()), lam, vec
    if gen.n <= 30:
        ev = np.linalg.eigvals(gen.homogeneous_operator())
        return float(ev.real.max()), lam, vec
    # exp(-t D) is an entrywise exponential of a positive kernel, hence the
    # dephasing part is a CP contraction and cannot undo the damping of A;
    # the N^2 x N^2 spectrum is not formed for large chains
    return -2.0 * float(lam.real.min()), lam, vec


def steady_state(gen: GaussianGenerator, check_psd: bool = True) -> CorrelatorState:
    """Fixed point of the correlator equation."""
    n = gen.n
    max_re, lam, vec = _hurwitz(gen)
    if not max_re < -HURWITZ_TOL:
        bad = np.where(lam.real <= HURWITZ_TOL)[0]
        weight = np.sum(np.abs(vec[:, bad]) ** 2, axis=1) if bad.size else np.ones(n)
        sites = [gen.sites[i] for i in np.where(weight > 1e-6)[0]]
        raise UnreachedSitesError(sites, max_re)
    knorm = float(np.linalg.norm(gen.kmat))
    if n <= DENSE_MAX:
        op = gen.homogeneous_operator()
        c = _hermitize(np.linalg.solve(op, -gen.kmat.reshape(-1)).reshape(n, n))
        res = float(np.linalg.norm(gen.rhs(c)))
        if res > 1e-10 * knorm:
            # one step of iterative refinement
            dc = np.linalg.solve(op, -gen.rhs(c).reshape(-1)).reshape(n, n)
            c = _hermitize(c + dc)
            res = float(np.linalg.norm(gen.rhs(c)))
    else:
        try:
            c = _steady_iterative(gen)
            res = float(np.linalg.norm(gen.rhs(c)))
        except GaussianError as exc:
            log.warning("%s; falling back to long-time integration", exc)
            res = math.inf
        if res > 1e-10 * knorm:
            c, res = _steady_by_integration(gen, max_re, knorm)
    out = CorrelatorState(c, math.inf)
    if res > 1e-10 * max(knorm, 1e-300):
        log.warning("steady-state residual %.3e exceeds 1e-10 |K| = %.3e", res, 1e-10 * knorm)
    if check_psd:
        out.check()
    return out


def _steady_iterative(gen):
    """Large-N fixed point: Lyapunov solve, with GMRES around it when D != 0.

    The Lyapunov part A C + C A^dag = K is solved by Bartels-Stewart; the
    dephasing term is handled by GMRES preconditioned with that solve.
    """
    from scipy.linalg import solve_continuous_lyapunov
    from scipy.sparse.linalg import LinearOperator, gmres

    n = gen.n
    a = gen.amplitude_matrix()
    k = np.asarray(gen.kmat)
    c0 = solve_continuous_lyapunov(a, k)
    if not np.any(gen.dmat):
        return _hermitize(c0)
    d = gen.dmat

    def op(v):
        c = v.reshape(n, n)
        return (a @ c + c @ a.conj().T + d * c).reshape(-1)

    def prec(v):
        return solve_continuous_lyapunov(a, v.reshape(n, n)).reshape(-1)

    lin = LinearOperator((n * n, n * n), matvec=op, dtype=complex)
    pre = LinearOperator((n * n, n * n), matvec=prec, dtype=complex)
    x, info = gmres(lin, k.reshape(-1), x0=c0.reshape(-1), M=pre, rtol=1e-13, atol=0.0, restart=50, maxiter=200)
    if info != 0:
        raise GaussianError(f"GMRES did not converge (info = {info})")
    return _hermitize(x.reshape(n, n))


def _steady_by_integration(gen, max_re, knorm):
    c = np.zeros((gen.n, gen.n), complex)
    t = 0.0
    tau = 1.0 / abs(max_re)
    for _ in range(200):
        _, traj = evolve(gen, CorrelatorState(c, t), 10 * tau, t_eval=[t, t + 10 * tau], rtol=1e-10)
        c = np.array(traj[-1].cmat)
        t += 10 * tau
        res = float(np.linalg.norm(gen.rhs(c)))
        if res < 1e-10 * knorm:
            return c, res
    raise GaussianError(f"long-time integration did not converge (residual {res:.3e})")


def residual(gen: GaussianGenerator, c: CorrelatorState) -> float:
    return float(np.linalg.norm(gen.rhs(np.asarray(c.cmat))))


# -- observables --------------------------------------------------------------

def site_currents(gen: GaussianGenerator, c: CorrelatorState):
    """Hopping currents into each site from the left and out of it to the right.

    I_in[i] = sum_{j<i} 2 Im(JJ_ij C_ij), I_out[i] = -sum_{j>i} 2 Im(JJ_ij C_ij),
    so that the Hamiltonian part of dC_ii/dt equals I_in - I_out.
    """
    jj = np.array(gen.jmat)
    np.fill_diagonal(jj, 0.0)
    flow = 2.0 * np.imag(jj * np.asarray(c.cmat))  # flow[i, j]: rate from j into i
    lower = np.tril(flow, -1)
    upper = np.triu(flow, 1)
    return lower.sum(axis=1), -upper.sum(axis=1)


def dissipative_flux(gen: GaussianGenerator, c: CorrelatorState) -> np.ndarray:
    cm = np.asarray(c.cmat)
    w = gen.wmat
    return np.real(np.diag(-(w @ cm + cm @ w.conj().T) + gen.kmat))


def continuity_error(gen: GaussianGenerator, c: CorrelatorState) -> float:
    """max_i |dC_ii/dt - (I_in - I_out) - dissipative flux|."""
    i_in, i_out = site_currents(gen, c)
    dn = np.real(np.diag(gen.rhs(np.asarray(c.cmat))))
    return float(np.max(np.abs(dn - (i_in - i_out) - dissipative_flux(gen, c))))


def quadratic_observable_noise(gen: GaussianGenerator, c: CorrelatorState, alpha) -> tuple[complex, complex]:
    """Mean and zero-frequency noise of O = sum_ij alpha_ij a_i^dag a_j.

    Returns (<O>, S) with S = int_0^inf <dO(t) dO(0)> dt in the steady state.
    For a Gaussian state F_ij(t) = Tr{a_i^dag a_j e^{Lt}(dO mu)} starts from
    C alpha^T (1 + C) by Wick's theorem and relaxes under the homogeneous
    part of the correlator map, so the time integral is one linear solve.
    """
    alpha = np.asarray(alpha, dtype=complex)
    cm = np.asarray(c.cmat)
    n = gen.n
    if alpha.shape != (n, n):
        raise GaussianError(f"alpha must be {n} x {n}")
    mean = complex(np.sum(alpha * cm))
    f0 = cm @ alpha.T @ (np.eye(n) + cm)
    y = np.linalg.solve(gen.homogeneous_operator(), -f0.reshape(-1)).reshape(n, n)
    return mean, complex(np.sum(alpha * y))


def current_operator_coefficients(jmat, site: int) -> np.ndarray:
    """alpha of the symmetrised current (I_in + I_out) / 2 at ``site``."""
    jmat = np.asarray(jmat, dtype=complex)
    n = jmat.shape[0]
    alpha = np.zeros((n, n), complex)
    for j in range(n):
        if j == site:
            continue
        # into site from the left, out of it to the right
        sgn = 1.0 if j < site else -1.0
        alpha[site, j] += -0.5j * sgn * jmat[site, j]
        alpha[j, site] += 0.5j * sgn * jmat[j, site]
    return alpha


def current_fano_factor(gen: GaussianGenerator, site: int, c: CorrelatorState | None = None) -> tuple[float, float, float]:
    """(mean current, Re S(0), F = Re S / (2 <I>)) at a generator site."""
    if c is None:
        c = steady_state(gen)
    pos = gen.sites.index(site)
    mean, spec = quadratic_observable_noise(gen, c, current_operator_coefficients(gen.jmat, pos))
    scale = float(np.max(np.abs(gen.jmat - np.diag(np.diag(gen.jmat)))))
    if abs(mean) <= 1e-9 * scale:
        raise GaussianError("mean current vanishes; the Fano factor is undefined")
    return mean.real, spec.real, spec.real / (2.0 * mean.real)


@dataclass(frozen=True)
class TheoryPrediction:
    n_ss: float
    current: float
    gamma_l: float
    gamma_r: float


def theory_predictions(tb: TightBinding, reservoirs: dict, probe_site: int) -> TheoryPrediction:
    """Closed-form steady occupation and current for a chain between two baths.

    Gamma_L (Gamma_R) = 2 Re Y of the left (right) reservoir at the bulk site
    next to it, i.e. 2 pi J^2 rho(w) with rho the Lorentzian reservoir density
    of states. The ballistic prediction is the same for every bulk site;
    ``probe_site`` only has to be a bulk site.
    """
    n = tb.n_sites
    if sorted(reservoirs) != [0, n - 1]:
        raise GaussianError("theory predictions need one reservoir at each chain edge")
    if probe_site in reservoirs:
        raise GaussianError("probe site must be a bulk site")
    rl, rr = reservoirs[0], reservoirs[n - 1]
    gl = 2.0 * upsilon(tb, 0, rl, [1])[0, 0].real
    gr = 2.0 * upsilon(tb, n - 1, rr, [n - 2])[0, 0].real
    n_ss = (gl * rl.nbar + gr * rr.nbar) / (gl + gr)
    cur = gl * gr * (rl.nbar - rr.nbar) / (gl + gr)
    return TheoryPrediction(n_ss, cur, gl, gr)


# -- disorder -----------------------------------------------------------------

def _exact_sum(rows):
    """Columnwise exactly rounded sum, independent of the order of ``rows``."""
    arr = np.asarray(rows, dtype=float)
    return np.array([math.fsum(arr[:, j]) for j in range(arr.shape[1])])


def disorder_configurations(model: DisorderModel):
    """Yield (index, eps) with eps the per-affected-site shifts +-dw/2."""
    half = 0.5 * model.dw_minus
    m = len(model.affected_sites)
    if model.mode == "exhaustive":
        for idx, signs in enumerate(itertools.product((-1.0, 1.0), repeat=m)):
            yield idx, half * np.array(signs)
    else:
        # one independent PCG64 stream per sample index, spawned from the seed
        children = np.random.SeedSequence(model.seed).spawn(model.n_samples)
        for idx, ss in enumerate(children):
            rng = np.random.Generator(np.random.PCG64(ss))
            yield idx, half * (2.0 * rng.integers(0, 2, size=m) - 1.0)


@dataclass(frozen=True)
class DisorderResult:
    mean: np.ndarray
    std: np.ndarray
    current_mean: np.ndarray  # (2, n): averaged I_in and I_out
    n_configs: int
    samples: np.ndarray = field(repr=False, compare=False)


def disorder_average(gen_builder, model: DisorderModel, threads: int = 1) -> DisorderResult:
    """Average steady occupations over the binary disorder distribution.

    ``gen_builder(eps)`` receives the shifts of the affected sites and returns
    a generator. Results are stored by configuration index and reduced with an
    exactly rounded sum, so the output does not depend on ``threads``.
    """
    configs = list(disorder_configurations(model))

    def one(item):
        _, eps = item
        gen = gen_builder(eps)
        c = steady_state(gen, check_psd=False)
        i_in, i_out = site_currents(gen, c)
        return np.concatenate([c.occupations, i_in, i_out])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, configs))
    else:
        rows = [one(x) for x in configs]
    rows = np.array(rows)
    nc = len(rows)
    nsite = rows.shape[1] // 3
    mean = _exact_sum(rows) / nc
    dev = (rows - mean) ** 2
    ddof = 1 if (model.mode == "monte_carlo" and nc > 1) else 0
    var = _exact_sum(dev) / (nc - ddof)
    cur = mean[nsite:].reshape(2, nsite)
    return DisorderResult(mean[:nsite], np.sqrt(var[:nsite]), cur, nc, rows[:, :nsite])
