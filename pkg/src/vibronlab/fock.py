"""Exact master-equation engine on truncated Fock (x) spin Hilbert spaces.

Tensor ordering is fixed: all vibron modes first, then all spins, each in
declaration order. A spin basis is (up, down), so sigma^z = diag(1, -1) and
sigma^+ = |up><down|.

Dissipators follow the generic form

    D[L, O1, O2](mu) = L (O1 mu O2 - O2 O1 mu) + H.c.

so a reservoir mode is D[Lambda^+, a^dag, a] + D[Lambda^-, a, a^dag].
Superoperators act on row-major vec(mu), where vec(A mu B) = (A (x) B^T) vec(mu).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import least_squares

from .integrate import solve
from .laser import ReservoirParams

log = logging.getLogger(__name__)

MAX_DIM = 4096
DIRECT_MAX = 1024
TRACE_TOL = 1e-9
HERM_TOL = 1e-10
PSD_TOL = 1e-8

_MODE_KINDS = ("a", "ad", "n")
_SPIN_KINDS = ("sz", "sp", "sm", "sx", "sy")
_CHARGE = {"a": -1, "ad": 1}


class FockError(ValueError):
    pass


class DimensionError(FockError):
    def __init__(self, dim, limit):
        super().__init__(f"Hilbert dimension {dim} exceeds the limit {limit}")
        self.dim = dim


class DegenerateSteadyStateError(FockError):
    def __init__(self, nullity):
        super().__init__(f"steady state is not unique: superoperator nullity {nullity}")
        self.nullity = nullity


class CorrelatorNotDecaying(FockError):
    pass


def default_nmax(nbar: float, tail: float = 1e-6) -> int:
    """Smallest cutoff with thermal weight above it below ``tail``."""
    if nbar <= 0:
        return 1
    q = nbar / (nbar + 1.0)
    return max(1, math.ceil(math.log(tail) / math.log(q)) - 1)


@dataclass(frozen=True)
class Term:
    coeff: complex
    factors: tuple
    envelope: tuple | None = None  # (nu, phi): multiply by cos(nu t - phi)


@dataclass(frozen=True)
class Dissipator:
    lam: complex
    o1: tuple
    o2: tuple


class FockSystem:
    """Vibron modes and spins with Hamiltonian and dissipator terms.

    ``modes`` is a list of (site, n_max); ``spins`` a list of sites. Factors
    are (kind, site) pairs, kind in a, ad, n (modes) or sz, sp, sm, sx, sy
    (spins). The hopping terms added through :meth:`add_hopping` are also
    recorded so current operators can be built from them.
    """

    def __init__(self, modes, spins=(), max_dim: int = MAX_DIM):
        self.modes = [(int(s), int(n)) for s, n in modes]
        self.spins = [int(s) for s in spins]
        for s, n in self.modes:
            if n < 1:
                raise FockError(f"n_max must be >= 1 (mode at site {s})")
        sites = [s for s, _ in self.modes]
        if len(set(sites)) != len(sites) or len(set(self.spins)) != len(self.spins):
            raise FockError("duplicate mode or spin site")
        self.dims = [n + 1 for _, n in self.modes] + [2] * len(self.spins)
        self.dim = int(np.prod(self.dims)) if self.dims else 1
        if self.dim > max_dim:
            raise DimensionError(self.dim, max_dim)
        self._mode_pos = {s: i for i, s in enumerate(sites)}
        self._spin_pos = {s: len(self.modes) + i for i, s in enumerate(self.spins)}
        self.hamiltonian_terms: list[Term] = []
        self.dissipator_terms: list[Dissipator] = []
        self.hoppings: dict = {}
        self._cache: dict = {}

    # -- building --------------------------------------------------------
    def _check_factors(self, factors):
        out = []
        for f in factors:
            kind, site = f
            if kind in _MODE_KINDS:
                if site not in self._mode_pos:
                    raise FockError(f"no mode at site {site}")
            elif kind in _SPIN_KINDS:
                if site not in self._spin_pos:
                    raise FockError(f"no spin at site {site}")
            else:
                raise FockError(f"unknown operator kind {kind!r}")
            out.append((kind, int(site)))
        return tuple(out)

    def add_term(self, coeff, factors=(), envelope=None):
        self.hamiltonian_terms.append(Term(complex(coeff), self._check_factors(factors), envelope))
        self._cache.clear()

    def add_onsite(self, site, freq, envelope=None):
        self.add_term(freq, [("n", site)], envelope)

    def add_hopping(self, i, j, amp, envelope=None):
        """amp a_i^dag a_j + conj(amp) a_j^dag a_i."""
        if i == j:
            raise FockError("hopping needs two distinct sites")
        amp = complex(amp)
        self.add_term(amp, [("ad", i), ("a", j)], envelope)
        self.add_term(amp.conjugate(), [("ad", j), ("a", i)], envelope)
        if envelope is None:
            self.hoppings[(i, j)] = self.hoppings.get((i, j), 0) + amp
            self.hoppings[(j, i)] = self.hoppings.get((j, i), 0) + amp.conjugate()

    def add_dissipator(self, lam, o1, o2):
        self.dissipator_terms.append(Dissipator(complex(lam), self._check_factors(o1), self._check_factors(o2)))
        self._cache.clear()

    def add_reservoir(self, site, res: ReservoirParams):
        self.add_dissipator(res.lambda_plus, [("ad", site)], [("a", site)])
        self.add_dissipator(res.lambda_minus, [("a", site)], [("ad", site)])

    # -- operators -------------------------------------------------------
    def _primitive(self, kind, site):
        if kind in _MODE_KINDS:
            pos = self._mode_pos[site]
            d = self.dims[pos]
            k = np.sqrt(np.arange(1, d))
            if kind == "a":
                m = sp.diags(k, 1, shape=(d, d))
            elif kind == "ad":
                m = sp.diags(k, -1, shape=(d, d))
            else:
                m = sp.diags(np.arange(d, dtype=float), 0)
        else:
            pos = self._spin_pos[site]
            m = {
                "sz": sp.csr_matrix([[1.0, 0.0], [0.0, -1.0]]),
                "sp": sp.csr_matrix([[0.0, 1.0], [0.0, 0.0]]),
                "sm": sp.csr_matrix([[0.0, 0.0], [1.0, 0.0]]),
                "sx": sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]]),
                "sy": sp.csr_matrix([[0.0, -1j], [1j, 0.0]]),
            }[kind]
        return pos, sp.csr_matrix(m, dtype=complex)

    def operator(self, factors=()) -> sp.csr_matrix:
        """Sparse matrix of an ordered product of factors (empty: identity)."""
        factors = self._check_factors(factors)
        key = ("op", factors)
        if key in self._cache:
            return self._cache[key]
        out = sp.identity(self.dim, dtype=complex, format="csr")
        for kind, site in reversed(factors):
            pos, m = self._primitive(kind, site)
            left = int(np.prod(self.dims[:pos]))
            right = int(np.prod(self.dims[pos + 1:]))
            full = sp.kron(sp.kron(sp.identity(left), m), sp.identity(right), format="csr")
            out = full @ out
        out = out.tocsr()
        self._cache[key] = out
        return out

    def number(self, site) -> sp.csr_matrix:
        return self.operator([("n", site)])

    def hamiltonian_parts(self):
        """(static H, [(H_k, nu_k, phi_k)]) with time-dependent parts grouped."""
        if "ham" in self._cache:
            return self._cache["ham"]
        h0 = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        groups: dict = {}
        for t in self.hamiltonian_terms:
            op = t.coeff * self.operator(t.factors)
            if t.envelope is None:
                h0 = h0 + op
            else:
                key = (float(t.envelope[0]), float(t.envelope[1]))
                groups[key] = groups.get(key, 0) + op
        parts = (h0.tocsr(), [(sp.csr_matrix(h), nu, phi) for (nu, phi), h in groups.items()])
        self._cache["ham"] = parts
        return parts

    def hermiticity_error(self) -> float:
        h0, parts = self.hamiltonian_parts()
        err = abs(h0 - h0.conj().T).max() if h0.nnz else 0.0
        for h, _, _ in parts:
            err = max(err, abs(h - h.conj().T).max())
        return float(err)

    def hamiltonian(self, t: float) -> sp.csr_matrix:
        h0, parts = self.hamiltonian_parts()
        h = h0
        for hk, nu, phi in parts:
            h = h + math.cos(nu * t - phi) * hk
        return h

    @property
    def time_dependent(self) -> bool:
        return any(t.envelope is not None for t in self.hamiltonian_terms)

    def _diss_ops(self):
        if "diss" in self._cache:
            return self._cache["diss"]
        ops = []
        for d in self.dissipator_terms:
            o1 = self.operator(d.o1)
            o2 = self.operator(d.o2)
            ops.append((d.lam, o1, o2, (o2 @ o1).tocsr()))
        self._cache["diss"] = ops
        return ops

    def _check_herm_set(self):
        err = self.hermiticity_error()
        scale = max([abs(t.coeff) for t in self.hamiltonian_terms] + [1.0])
        if err > 1e-12 * scale:
            raise FockError(f"Hamiltonian terms are not Hermitian as a set (error {err:.3e})")

    # -- vibron-number bookkeeping ---------------------------------------
    def vibron_numbers(self) -> np.ndarray:
        """Total vibron number of every basis state."""
        tot = np.zeros(1, dtype=int)
        for d in self.dims[: len(self.modes)]:
            tot = (tot[:, None] + np.arange(d)[None, :]).reshape(-1)
        spin_dim = 2 ** len(self.spins)
        return np.repeat(tot, spin_dim)

    def conserves_number(self) -> bool:
        for t in self.hamiltonian_terms:
            if _charge(t.factors) != 0:
                return False
        for d in self.dissipator_terms:
            if _charge(d.o1) + _charge(d.o2) != 0:
                return False
        return True

    # -- Liouvillian -----------------------------------------------------
    def apply_liouvillian(self, x: np.ndarray, t: float = 0.0, hermitian: bool = False) -> np.ndarray:
        """L(x) for a dense matrix x. ``hermitian`` uses L(x) = Y + Y^dag."""
        h = self.hamiltonian(t)
        y = -1j * (h @ x)
        for lam, o1, o2, o21 in self._diss_ops():
            y += lam * ((o1 @ x) @ o2) - lam * (o21 @ x)
        if hermitian:
            return y + y.conj().T
        y += 1j * (x @ h)
        for lam, o1, o2, o21 in self._diss_ops():
            o1d = o1.conj().T
            y += np.conj(lam) * (o2.conj().T @ x @ o1d) - np.conj(lam) * (x @ (o1d @ o2.conj().T))
        return y

    def superoperator(self) -> sp.csr_matrix:
        """Sparse Liouvillian on row-major vec(mu); static systems only."""
        if self.time_dependent:
            raise FockError("superoperator needs a time-independent Hamiltonian")
        if "super" in self._cache:
            return self._cache["super"]
        eye = sp.identity(self.dim, dtype=complex, format="csr")
        h, _ = self.hamiltonian_parts()
        lv = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
        for lam, o1, o2, o21 in self._diss_ops():
            o1d = o1.conj().T
            o2d = o2.conj().T
            lv = lv + lam * (sp.kron(o1, o2.T) - sp.kron(o21, eye))
            lv = lv + np.conj(lam) * (sp.kron(o2d, o1d.T) - sp.kron(eye, (o1d @ o2d).T))
        lv = lv.tocsr()
        self._cache["super"] = lv
        return lv


def _charge(factors) -> int:
    return sum(_CHARGE.get(k, 0) for k, _ in factors)


# -- states -------------------------------------------------------------------

@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray
    time: float = 0.0

    def check(self, trace_tol=TRACE_TOL, herm_tol=HERM_TOL, psd_tol=PSD_TOL):
        r = np.asarray(self.rho)
        tr = np.trace(r)
        if abs(tr - 1.0) > trace_tol:
            raise FockError(f"trace {tr.real:.12g} differs from 1")
        if np.max(np.abs(r - r.conj().T)) > herm_tol:
            raise FockError("density matrix is not Hermitian")
        lo = float(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min())
        if lo < -psd_tol:
            raise FockError(f"density matrix has eigenvalue {lo:.3e} < 0")
        return self

    def expect(self, op) -> complex:
        return complex(_trace_prod(op, np.asarray(self.rho)))


def _trace_prod(a, b) -> complex:
    """Tr(a b) for sparse or dense a and dense b."""
    if sp.issparse(a):
        a = a.tocoo()
        return complex(np.sum(a.data * b[a.col, a.row]))
    return complex(np.sum(np.asarray(a).T * b))


def thermal_populations(n_max: int, nbar: float) -> np.ndarray:
    """Thermal distribution on 0..n_max, renormalised after truncation."""
    if nbar == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    q = nbar / (nbar + 1.0)
    p = q ** np.arange(n_max + 1)
    return p / p.sum()


_SPIN_STATES = {
    "up": np.array([1.0, 0.0], complex),
    "down": np.array([0.0, 1.0], complex),
    "plus": np.array([1.0, 1.0], complex) / math.sqrt(2.0),
}


def product_state(sys: FockSystem, modes=None, spins=None, time: float = 0.0) -> DensityMatrix:
    """Product state from per-site factors.

    ``modes`` maps site -> int (Fock state), float in a 1-tuple ("thermal", nbar)
    or a density matrix; ``spins`` maps site -> "up", "down", "plus" or a
    2x2 density matrix. Missing factors default to vacuum and spin down.
    """
    modes = modes or {}
    spins = spins or {}
    rho = np.ones((1, 1), complex)
    for site, n_max in sys.modes:
        spec = modes.get(site, 0)
        d = n_max + 1
        if isinstance(spec, (int, np.integer)):
            if not 0 <= spec <= n_max:
                raise FockError(f"Fock state {spec} outside cutoff {n_max}")
            f = np.zeros((d, d), complex)
            f[spec, spec] = 1.0
        elif isinstance(spec, tuple) and spec[0] == "thermal":
            f = np.diag(thermal_populations(n_max, spec[1])).astype(complex)
        else:
            f = np.asarray(spec, complex)
        rho = np.kron(rho, f)
    for site in sys.spins:
        spec = spins.get(site, "down")
        if isinstance(spec, str):
            v = _SPIN_STATES[spec]
            f = np.outer(v, v.conj())
        else:
            f = np.asarray(spec, complex)
        rho = np.kron(rho, f)
    return DensityMatrix(rho, time)


def product_ket(sys: FockSystem, modes=None, spins=None) -> np.ndarray:
    """Pure product state with Fock numbers ``modes`` and spin labels ``spins``."""
    modes = modes or {}
    spins = spins or {}
    psi = np.ones(1, complex)
    for site, n_max in sys.modes:
        v = np.zeros(n_max + 1, complex)
        v[int(modes.get(site, 0))] = 1.0
        psi = np.kron(psi, v)
    for site in sys.spins:
        psi = np.kron(psi, _SPIN_STATES[spins.get(site, "down")])
    return psi


# -- dynamics -----------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    trace_drift: float
    n_steps: int = 0

    def expect(self, op) -> np.ndarray:
        return np.array([s.expect(op) for s in self.states])


def _hermitize(x):
    return 0.5 * (x + x.conj().T)


def lindblad_evolve(sys: FockSystem, rho0: DensityMatrix, t_final: float, t_eval=None, n_out: int = 201,
                    rtol: float = 1e-9, atol: float = 1e-12, stops=None) -> Trajectory:
    """Integrate d mu/dt = -i[H(t), mu] + sum D(mu).

    ``stops`` maps times to unitaries applied instantaneously (pulses).
    The state is re-symmetrised after every step; the largest deviation of
    the trace from one is reported as ``trace_drift``.
    """
    rho0.check()
    if rho0.rho.shape != (sys.dim, sys.dim):
        raise FockError(f"initial state has shape {rho0.rho.shape}, system dimension is {sys.dim}")
    sys._check_herm_set()
    t0 = rho0.time
    if t_eval is None:
        t_eval = t0 + np.linspace(0.0, t_final, n_out)
    smaps = None
    if stops:
        smaps = {float(k): (lambda u: (lambda r: u @ r @ u.conj().T))(_dense(u)) for k, u in stops.items()}
        _check_stops(smaps, t_eval)

    ys = None
    if not sys.time_dependent and smaps is None:
        keep, lr = _block(sys)
        if _in_block(keep, rho0.rho):
            # static number-conserving case: one sparse matvec per stage
            d = sys.dim

            def vrhs(t, v):
                return lr @ v

            sol = solve(vrhs, np.asarray(rho0.rho).reshape(-1)[keep], t_eval, rtol=rtol, atol=atol)
            ys = []
            for v in sol.y:
                full = np.zeros(d * d, complex)
                full[keep] = v
                ys.append(_hermitize(full.reshape(d, d)))
    if ys is None:
        def rhs(t, x):
            return sys.apply_liouvillian(x, t, hermitian=True)

        sol = solve(rhs, rho0.rho, t_eval, rtol=rtol, atol=atol, project=_hermitize, stops=smaps)
        ys = sol.y
    drift = max(abs(np.trace(y) - 1.0) for y in ys)
    if drift > 1e-8:
        log.warning("trace drift %.3e along the trajectory", drift)
    states = [DensityMatrix(y, t) for t, y in zip(sol.t, ys)]
    return Trajectory(sol.t, states, float(drift), sol.n_steps)


def _dense(u):
    return u.toarray() if sp.issparse(u) else np.asarray(u, complex)


def _check_stops(stops, t_eval):
    for k in stops:
        if not t_eval[0] <= k <= t_eval[-1]:
            raise FockError(f"pulse time {k:.6e} s outside the simulation window")


def schrodinger_evolve(sys: FockSystem, psi0, t_eval, rtol: float = 1e-10, atol: float = 1e-12, stops=None):
    """Pure-state path for systems without dissipators; returns (times, kets)."""
    if sys.dissipator_terms:
        raise FockError("pure-state evolution needs a system without dissipators")
    sys._check_herm_set()
    psi0 = np.asarray(psi0, complex)
    smaps = None
    if stops:
        smaps = {float(k): (lambda u: (lambda v: u @ v))(_dense(u)) for k, u in stops.items()}
        _check_stops(smaps, np.asarray(t_eval))
    h0, parts = sys.hamiltonian_parts()

    def rhs(t, v):
        out = h0 @ v
        for hk, nu, phi in parts:
            out = out + math.cos(nu * t - phi) * (hk @ v)
        return -1j * out

    sol = solve(rhs, psi0, t_eval, rtol=rtol, atol=atol, stops=smaps)
    return sol.t, np.array(sol.y)


# -- steady state and regression ----------------------------------------------

def _block(sys: FockSystem):
    """Flat indices of the N_ket = N_bra block and the Liouvillian on it.

    Number-conserving dynamics never leaves this block, and it holds the
    steady state, so static problems are solved there. For other systems the
    block is the whole space.
    """
    if "block" not in sys._cache:
        lv = sys.superoperator()
        if sys.conserves_number():
            nums = sys.vibron_numbers()
            keep = np.flatnonzero((nums[:, None] == nums[None, :]).reshape(-1))
            lr = lv[keep][:, keep].tocsr()
        else:
            keep = np.arange(sys.dim**2)
            lr = lv
        sys._cache["block"] = (keep, lr)
    return sys._cache["block"]


def _in_block(keep, mat) -> bool:
    flat = np.asarray(mat).reshape(-1)
    mask = np.ones(flat.size, bool)
    mask[keep] = False
    return not np.any(flat[mask])


class _SteadySolver:
    """Sparse LU of the Liouvillian with one equation replaced by the trace."""

    def __init__(self, sys: FockSystem):
        d = sys.dim
        keep, lr = _block(sys)
        self.keep = keep
        self.sys = sys
        self.l_r = lr
        diag_flat = np.arange(d) * (d + 1)
        self.diag_pos = np.searchsorted(keep, diag_flat)
        self.row = int(self.diag_pos[0])
        m = lr.tolil()
        m[self.row, :] = 0
        m[self.row, self.diag_pos] = 1.0
        self.m = m.tocsc()
        self.scale = float(abs(lr).max()) if lr.nnz else 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            try:
                self.lu = spla.splu(self.m)
            except (RuntimeError, Warning):
                self.lu = None

    def nullity(self) -> int | str:
        return _nullity(self.l_r)

    def expand(self, x) -> np.ndarray:
        d = self.sys.dim
        full = np.zeros(d * d, complex)
        full[self.keep] = x
        return full.reshape(d, d)

    def restrict(self, mat) -> np.ndarray:
        return np.asarray(mat).reshape(-1)[self.keep]

    def solve(self, b):
        x = self.lu.solve(b)
        # one refinement step against the replaced system
        r = b - self.m @ x
        return x + self.lu.solve(r)


def _nullity(lr) -> int | str:
    n = lr.shape[0]
    if n > 3000:
        return ">= 2"
    scale = float(abs(lr).max()) if lr.nnz else 0.0
    s = np.linalg.svd(lr.toarray(), compute_uv=False)
    return int(np.sum(s <= 1e-10 * max(scale, 1e-300) * n))


def _solver(sys: FockSystem) -> _SteadySolver:
    key = "steady_solver"
    if key not in sys._cache:
        sys._cache[key] = _SteadySolver(sys)
    return sys._cache[key]


def steady_state_dm(sys: FockSystem) -> DensityMatrix:
    """Unique stationary state: null vector of the Liouvillian with unit trace."""
    sys._check_herm_set()
    if sys.time_dependent:
        raise FockError("steady state needs a time-independent Hamiltonian")
    if sys.dim > DIRECT_MAX:
        return _steady_by_integration(sys)
    if not sys.dissipator_terms:
        raise DegenerateSteadyStateError(_nullity(_block(sys)[1]) if sys.dim <= 40 else f">= {sys.dim}")
    s = _solver(sys)
    if s.lu is None:
        raise DegenerateSteadyStateError(s.nullity())
    b = np.zeros(s.m.shape[0], complex)
    b[s.row] = 1.0
    x = s.solve(b)
    res = float(np.linalg.norm(s.l_r @ x))
    if not np.all(np.isfinite(x)) or res > 1e-6 * max(s.scale, 1e-300):
        raise DegenerateSteadyStateError(s.nullity())
    rho = _hermitize(s.expand(x))
    rho /= np.trace(rho).real
    out = DensityMatrix(rho, math.inf)
    res = float(np.linalg.norm(s.l_r @ s.restrict(rho)))
    if res > 1e-10 * max(s.scale, 1e-300):
        log.warning("steady-state residual %.3e exceeds 1e-10 of the largest rate %.3e", res, s.scale)
    return out.check()


def _steady_by_integration(sys: FockSystem, tol: float = 1e-10, max_chunks: int = 400) -> DensityMatrix:
    rho = np.eye(sys.dim, dtype=complex) / sys.dim
    scale = max(abs(sys.superoperator()).max(), 1e-300)
    t, dt = 0.0, 10.0 / scale
    for _ in range(max_chunks):
        traj = lindblad_evolve(sys, DensityMatrix(rho, t), dt, t_eval=[t, t + dt])
        rho = traj.states[-1].rho
        t += dt
        if np.linalg.norm(sys.apply_liouvillian(rho)) < tol * scale:
            return DensityMatrix(rho / np.trace(rho).real, math.inf).check()
        dt *= 1.5
    raise DegenerateSteadyStateError(">= 2 (integration did not settle)")


@dataclass(frozen=True)
class SpectralResult:
    mean: complex
    noise0: float
    fano: float | None = None
    method: str = "direct"
    spectrum: complex = 0j  # full complex S(0)


def _as_operator(sys, observable):
    if sp.issparse(observable) or isinstance(observable, np.ndarray):
        op = sp.csr_matrix(observable, dtype=complex)
        if op.shape != (sys.dim, sys.dim):
            raise FockError(f"observable has shape {op.shape}, system dimension is {sys.dim}")
        return op
    return sys.operator(observable)


def _op_conserves(sys, op) -> bool:
    nums = sys.vibron_numbers()
    coo = op.tocoo()
    return bool(np.all(nums[coo.row] == nums[coo.col]))


def regression_spectrum(sys: FockSystem, observable, method: str = "auto", mu_ss: DensityMatrix | None = None,
                        rtol: float = 1e-9) -> SpectralResult:
    """Zero-frequency spectrum S(0) = int_0^inf <dO(t) dO(0)>_ss dt.

    ``direct`` solves L y = -dO mu_ss on the traceless subspace; ``integrate``
    propagates the two-time correlator until it has decayed below 1e-12 of
    its initial value at three consecutive checkpoints.
    """
    op = _as_operator(sys, observable)
    if mu_ss is None:
        mu_ss = steady_state_dm(sys)
    mu = np.asarray(mu_ss.rho)
    mean = _trace_prod(op, mu)
    dop = op - mean * sp.identity(sys.dim, format="csr")
    x0 = dop @ mu
    if method == "auto":
        method = "direct" if sys.dim <= DIRECT_MAX else "integrate"
    if method == "direct":
        s = _solver(sys)
        if s.lu is None:
            raise DegenerateSteadyStateError(s.nullity())
        if len(s.keep) < sys.dim**2 and not _op_conserves(sys, op):
            raise FockError("observable changes the vibron number; use method='integrate'")
        b = -s.restrict(x0)
        b[s.row] = 0.0
        y = s.expand(s.solve(b))
        spec = _trace_prod(dop, y)
    elif method == "integrate":
        spec = _integrate_correlator(sys, dop, x0, rtol)
    else:
        raise FockError(f"unknown method {method!r}")
    return SpectralResult(mean, float(spec.real), None, method, spec)


def _integrate_correlator(sys, dop, x0, rtol):
    keep, lr = _block(sys)
    if not _in_block(keep, x0):
        raise FockError("observable leaves the vibron-number block")
    g0 = _trace_prod(dop, x0)
    ref = max(abs(g0), 1e-300)
    scale = max(abs(lr).max(), 1e-300)
    # Tr(dO X) = sum_kl dO_lk X_kl, restricted to the block
    w = np.asarray(dop.T.toarray()).reshape(-1)[keep]

    def rhs(t, v):
        out = np.empty_like(v)
        out[:-1] = lr @ v[:-1]
        out[-1] = w @ v[:-1]
        return out

    v = np.concatenate([np.asarray(x0).reshape(-1)[keep], [0.0]])
    t, dt, quiet = 0.0, 1.0 / scale, 0
    atol = 1e-14 * max(np.max(np.abs(x0)), 1e-300)
    for _ in range(600):
        sol = solve(rhs, v, [t, t + dt], rtol=rtol, atol=atol)
        v = sol.y[-1]
        t += dt
        g = abs(w @ v[:-1])
        quiet = quiet + 1 if g < 1e-12 * ref else 0
        if quiet >= 3:
            return complex(v[-1])
        dt *= 1.5
    raise CorrelatorNotDecaying(
        f"two-time correlator still at {g / ref:.3e} of its initial value after t = {t:.3e} s; "
        "the system has an undamped subspace"
    )


# -- Ramsey probe -------------------------------------------------------------

@dataclass
class RamseyResult:
    times: np.ndarray
    coherence: np.ndarray  # <sigma^x> - i <sigma^y>... stored as 2 Tr rho_{up,down}
    a: float
    b: float
    mean: float
    noise0: float
    covariance: np.ndarray
    residual: float
    ok: bool
    message: str = ""

    @property
    def sigma_x(self) -> np.ndarray:
        return self.coherence.real


def fit_ramsey(times, coherence):
    """Least-squares fit of exp(-(b + i a) t) to a complex coherence trace.

    The real part of the model is cos(a t) exp(-b t). The seed comes from a
    grid of frequencies around the unwrapped-phase slope, then
    Levenberg-Marquardt (a damped Gauss-Newton) refines (a, b).
    Returns (a, b, covariance, rms residual, ok, message).
    """
    t = np.asarray(times, float)
    z = np.asarray(coherence, complex)
    if len(t) < 4:
        return math.nan, math.nan, np.full((2, 2), math.nan), math.nan, False, "too few samples"

    def resid(p):
        m = np.exp(-(p[1] + 1j * p[0]) * t)
        d = z - m
        return np.concatenate([d.real, d.imag])

    span = t[-1] - t[0]
    mag = np.abs(z)
    good = mag > 1e-3
    if np.sum(good) < 4:
        return math.nan, math.nan, np.full((2, 2), math.nan), math.nan, False, "coherence lost"
    a_lin = -np.polyfit(t[good], np.unwrap(np.angle(z[good])), 1)[0]
    b_lin = max(-np.polyfit(t[good], np.log(mag[good]), 1)[0], 0.0)
    width = 2 * math.pi / span
    grid = a_lin + width * np.linspace(-2, 2, 41)
    costs = [np.sum(resid((a, b_lin)) ** 2) for a in grid]
    seed = (grid[int(np.argmin(costs))], b_lin)
    try:
        fit = least_squares(resid, seed, method="lm", x_scale=(max(abs(seed[0]), width), max(seed[1], 1.0 / span)),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15)
    except Exception as exc:  # pragma: no cover - defensive
        return math.nan, math.nan, np.full((2, 2), math.nan), math.nan, False, f"fit failed: {exc}"
    r = fit.fun
    dof = max(len(r) - 2, 1)
    s2 = float(r @ r) / dof
    jtj = fit.jac.T @ fit.jac
    try:
        cov = np.linalg.inv(jtj) * s2
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), math.nan)
    rms = math.sqrt(float(r @ r) / len(r))
    ok = bool(fit.success)
    return float(fit.x[0]), float(fit.x[1]), cov, rms, ok, fit.message


def ramsey_probe(sys: FockSystem, coupling: float, observable, t_grid, rho0: DensityMatrix | None = None,
                 rtol: float = 1e-10, atol: float = 1e-14) -> RamseyResult:
    """Simulate a Ramsey probe spin coupled through (coupling / 2) O sigma^z.

    The probe starts in |+> with the system in ``rho0`` (default: its steady
    state). Because the probe term is diagonal in sigma^z, the coherence block
    X = <up| rho |down> of the joint state evolves on its own under
    dX/dt = L(X) - (i coupling / 2)(O X + X O), which is the full coupled
    dynamics restricted to the block the probe reads out.
    """
    op = _as_operator(sys, observable)
    if rho0 is None:
        rho0 = steady_state_dm(sys)
    rho0.check()
    sys._check_herm_set()
    _warn_probe_strength(sys, coupling)
    half = 0.5 * coupling
    t_grid = np.asarray(t_grid, float)

    x0 = 0.5 * np.asarray(rho0.rho, complex)
    atol = atol * max(np.max(np.abs(x0)), 1e-300)
    keep, lr = _block(sys) if not sys.time_dependent else (None, None)
    if keep is not None and _in_block(keep, x0) and _op_conserves(sys, op):
        eye = sp.identity(sys.dim, format="csr")
        probe = (sp.kron(op, eye) + sp.kron(eye, op.T)).tocsr()[keep][:, keep]
        gen = (lr - 1j * half * probe).tocsr()
        d = sys.dim
        tr = np.searchsorted(keep, np.arange(d) * (d + 1))
        sol = solve(lambda t, v: gen @ v, x0.reshape(-1)[keep], t_grid, rtol=rtol, atol=atol)
        z = np.array([2.0 * np.sum(v[tr]) for v in sol.y])
    else:
        def rhs(t, x):
            return sys.apply_liouvillian(x, t) - 1j * half * (op @ x + (x @ op))

        sol = solve(rhs, x0, t_grid, rtol=rtol, atol=atol)
        z = np.array([2.0 * np.trace(x) for x in sol.y])
    a, b, cov, res, ok, msg = fit_ramsey(t_grid - t_grid[0], z)
    if not ok:
        log.warning("Ramsey fit did not converge: %s", msg)
    mean = a / coupling if ok else math.nan
    noise = b / coupling**2 if ok else math.nan
    return RamseyResult(t_grid, z, a, b, mean, noise, cov, res, ok, str(msg))


def _warn_probe_strength(sys, coupling):
    rates = [abs(d.lam) for d in sys.dissipator_terms]
    rates += [abs(v) for v in sys.hoppings.values()]
    if rates and abs(coupling) > 0.1 * min(rates):
        log.warning("probe coupling %.3g rad/s is not small against the system rates (min %.3g rad/s)",
                    coupling, min(rates))


# -- currents and Fano factor -------------------------------------------------

def current_operator(sys: FockSystem, site: int) -> sp.csr_matrix:
    """Symmetrised hopping current (I_in + I_out) / 2 through ``site``.

    I_in collects the flow from sites left of ``site`` and I_out the flow to
    sites right of it, both from the recorded static hoppings.
    """
    if site not in sys._mode_pos:
        raise FockError(f"no mode at site {site}")
    op = sp.csr_matrix((sys.dim, sys.dim), dtype=complex)
    for (i, j), amp in sys.hoppings.items():
        if i != site:
            continue
        sgn = 1.0 if j < site else -1.0
        term = -1j * sgn * amp * sys.operator([("ad", i), ("a", j)])
        op = op + 0.5 * (term + term.conj().T)
    if op.nnz == 0:
        raise FockError(f"site {site} has no static hoppings")
    return op.tocsr()


def fano_factor(sys: FockSystem, dot_site: int, method: str = "auto", rel_tol: float = 1e-9) -> SpectralResult:
    """F = Re S_II(0) / (2 <I>) for the symmetrised current at ``dot_site``."""
    op = current_operator(sys, dot_site)
    res = regression_spectrum(sys, op, method=method)
    scale = max(abs(v) for v in sys.hoppings.values())
    if abs(res.mean) <= rel_tol * scale:
        raise FockError("mean current vanishes; the Fano factor is undefined")
    return SpectralResult(res.mean, res.noise0, res.noise0 / (2.0 * res.mean.real), res.method, res.spectrum)


# -- model builders -----------------------------------------------------------

def from_tight_binding(tb, n_max, reservoirs=None, spins=(), sites=None) -> FockSystem:
    """Fock model of (a subset of) a tight-binding chain.

    Onsite energies are taken relative to their mean (a common frequency
    drops out of every number-conserving term). ``n_max`` is an int or a
    per-site dict; ``reservoirs`` maps site -> ReservoirParams.
    """
    sites = list(range(tb.n_sites)) if sites is None else list(sites)
    cut = n_max if isinstance(n_max, dict) else {s: n_max for s in sites}
    sys = FockSystem([(s, cut[s]) for s in sites], spins)
    w = np.asarray(tb.onsite)[sites]
    w0 = float(np.mean(w))
    for s, wi in zip(sites, w):
        if wi != w0:
            sys.add_onsite(s, wi - w0)
    t = np.asarray(tb.tunneling)
    for a in range(len(sites)):
        for b in range(a + 1, len(sites)):
            amp = t[sites[a], sites[b]]
            if amp != 0:
                sys.add_hopping(sites[a], sites[b], amp)
    for s, r in (reservoirs or {}).items():
        sys.add_reservoir(s, r)
    return sys


def from_bulk_generator(gen, n_max) -> FockSystem:
    """Fock model of the bulk sites of an eliminated-reservoir generator.

    The amplitude damping of the correlator map is conj(W); it is reproduced
    by D[Lp_ij, a_i^dag, a_j] + D[Lm_ji, a_i, a_j^dag] with Lp, Lm the bulk
    rate matrices.
    """
    sites = list(gen.sites)
    cut = n_max if isinstance(n_max, dict) else {s: n_max for s in sites}
    sys = FockSystem([(s, cut[s]) for s in sites])
    h = np.asarray(gen.jmat)
    w0 = float(np.mean(np.diag(h).real))
    for a, s in enumerate(sites):
        if h[a, a].real != w0:
            sys.add_onsite(s, h[a, a].real - w0)
        for b in range(a + 1, len(sites)):
            if h[a, b] != 0:
                sys.add_hopping(s, sites[b], h[a, b])
    lp = np.asarray(gen.info["lambda_plus"])
    lm = np.asarray(gen.info["lambda_minus"])
    for a, si in enumerate(sites):
        for b, sj in enumerate(sites):
            if lp[a, b] != 0:
                sys.add_dissipator(lp[a, b], [("ad", si)], [("a", sj)])
            if lm[b, a] != 0:
                sys.add_dissipator(lm[b, a], [("a", si)], [("ad", sj)])
    return sys


# -- spin-controlled photon-assisted tunneling ---------------------------------

def _bessel1(x):
    from .laser import bessel_j

    return bessel_j(1, x)


def first_bessel_peak() -> float:
    """Argument of the first maximum of J_1 (root of J_0 - J_2... i.e. J_1' = 0)."""
    from scipy.optimize import brentq

    from .laser import bessel_j

    return brentq(lambda x: bessel_j(0, x) - bessel_j(2, x), 1.0, 2.5, xtol=1e-15)


@dataclass(frozen=True)
class SwitchSetup:
    """sigma-kappa-sigma junction parameters (rad/s)."""

    tb: object
    dw_minus: float
    zeta: float
    r: float
    dot: int = 1

    @property
    def drive_freq(self) -> float:
        return 0.5 * self.dw_minus

    @property
    def drive_period(self) -> float:
        return 2.0 * math.pi / self.drive_freq

    @property
    def dw_plus_sigma(self) -> float:
        """Static shift that puts the lead sites on resonance with the dot."""
        w = np.asarray(self.tb.onsite)
        leads = [i for i in range(self.tb.n_sites) if i != self.dot]
        return 2.0 * float(w[self.dot] - np.mean(w[leads]))


def switch_exact_system(setup: SwitchSetup, dephase_spins=True) -> FockSystem:
    """Full H(t): tight binding, static spin shifts on the leads, driven dot.

    Every site carries a spin; lead spins only enter through sigma^z, the dot
    spin also through the drive.
    """
    tb = setup.tb
    n = tb.n_sites
    p = setup.dot
    sys = FockSystem([(i, 1) for i in range(n)], list(range(n)))
    w = np.asarray(tb.onsite)
    w0 = w[p]
    nu = setup.drive_freq
    for i in range(n):
        shift = w[i] - w0
        if i != p:
            shift += 0.5 * setup.dw_plus_sigma
            sys.add_term(0.5 * setup.dw_minus, [("sz", i), ("n", i)])
        if shift != 0:
            sys.add_onsite(i, shift)
    for i in range(n):
        for j in range(i + 1, n):
            if tb.tunneling[i, j] != 0:
                sys.add_hopping(i, j, tb.tunneling[i, j])
    dwp = 2.0 * setup.zeta * nu
    sys.add_term(0.5 * dwp, [("n", p)], envelope=(nu, 0.0))
    sys.add_term(0.5 * setup.r * dwp, [("sz", p), ("n", p)], envelope=(nu, 0.0))
    return sys


def switch_pat_system(setup: SwitchSetup) -> FockSystem:
    """Effective photon-assisted tunneling with a spin-dependent amplitude.

    J_1(zeta (1 + r sigma^z)) = A + B sigma^z on the dot spin; sites left of
    the dot couple with -J A, sites right of it with +J A (and likewise B).
    """
    tb = setup.tb
    n = tb.n_sites
    p = setup.dot
    sys = FockSystem([(i, 1) for i in range(n)], [p])
    up = _bessel1(setup.zeta * (1.0 + setup.r))
    dn = _bessel1(setup.zeta * (1.0 - setup.r))
    a, b = 0.5 * (up + dn), 0.5 * (up - dn)
    for i in range(n):
        if i == p:
            continue
        sgn = -1.0 if i < p else 1.0
        amp = sgn * complex(tb.tunneling[i, p])
        if a != 0:
            sys.add_hopping(i, p, amp * a)
        if b != 0:
            sys.add_term(amp * b, [("sz", p), ("ad", i), ("a", p)])
            sys.add_term(np.conj(amp * b), [("sz", p), ("ad", p), ("a", i)])
    return sys


@dataclass
class SwitchResult:
    times: np.ndarray
    exact: np.ndarray  # (n_sites, n_times) occupations
    effective: np.ndarray
    pulse_times: tuple

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.exact - self.effective)))


def snap_to_period(times, period):
    return tuple(float(round(t / period) * period) for t in times)


def switch_scenario(setup: SwitchSetup, t_grid, dot_spin: str = "up", pulse_times=(), rtol=1e-10) -> SwitchResult:
    """One vibron starts on the left lead; left spin down, right spin up.

    Pulses flip the dot spin (sigma^x) and are snapped to whole drive periods.
    """
    t_grid = np.asarray(t_grid, float)
    pulses = snap_to_period(pulse_times, setup.drive_period)
    for t in pulses:
        if not t_grid[0] < t < t_grid[-1]:
            raise FockError(f"pulse time {t:.6e} s outside the simulation window")
    n = setup.tb.n_sites
    ex = switch_exact_system(setup)
    spins = {i: "down" for i in range(n)}
    spins[n - 1] = "up"
    spins[setup.dot] = dot_spin
    psi0 = product_ket(ex, {0: 1}, spins)
    flip = ex.operator([("sx", setup.dot)])
    grid = np.union1d(t_grid, pulses)
    _, kets = schrodinger_evolve(ex, psi0, grid, rtol=rtol, stops={t: flip for t in pulses})
    num = [ex.number(i) for i in range(n)]
    exact = np.array([[np.vdot(v, m @ v).real for v in kets] for m in num])

    eff = switch_pat_system(setup)
    phi0 = product_ket(eff, {0: 1}, {setup.dot: dot_spin})
    flip_e = eff.operator([("sx", setup.dot)])
    _, kets_e = schrodinger_evolve(eff, phi0, grid, rtol=rtol, stops={t: flip_e for t in pulses})
    num_e = [eff.number(i) for i in range(n)]
    effective = np.array([[np.vdot(v, m @ v).real for v in kets_e] for m in num_e])
    idx = np.searchsorted(grid, t_grid)
    return SwitchResult(t_grid, exact[:, idx], effective[:, idx], pulses)


# -- current probe -------------------------------------------------------------

ZETA2_MAX = 0.1


@dataclass
class CurrentProbe:
    """Effective model of the bichromatically driven dot.

    ``pat`` is the spinless PAT system (purely imaginary tunneling), ``lam``
    the dimensionless spin-current coupling and ``current`` the symmetrised
    current operator at the dot on ``pat``. ``with_spin`` adds the dot spin
    and the term (lam / 2) I sigma^z.
    """

    setup: SwitchSetup
    zeta2: float
    lam: float
    pat: FockSystem
    current: sp.csr_matrix
    with_spin: FockSystem


def current_probe_setup(setup: SwitchSetup, zeta2: float, zeta1: float = math.pi, phi1: float = math.pi / 2,
                        dw1_minus: float = 0.0, phi2: float = 0.0, dw2_plus: float = 0.0) -> CurrentProbe:
    """Effective H^PAT + H_sv^I for the current Ramsey probe.

    The drive constraints are checked explicitly; ``setup.zeta`` and ``setup.r``
    are not used (the bichromatic drive replaces the single tone).
    """
    checks = [
        (abs(zeta1 - math.pi) < 1e-12, "zeta1 must equal pi"),
        (abs(phi1 - math.pi / 2) < 1e-12, "phi1 must equal pi/2"),
        (dw1_minus == 0, "first tone must be spin independent (dw1_minus = 0)"),
        (phi2 == 0, "phi2 must equal 0"),
        (dw2_plus == 0, "second tone must be purely spin dependent (dw2_plus = 0)"),
        (0 <= zeta2 <= ZETA2_MAX, f"zeta2 must lie in [0, {ZETA2_MAX}] (weak probe)"),
    ]
    for ok, msg in checks:
        if not ok:
            raise FockError(f"current-probe constraint violated: {msg}")
    from .laser import bessel_j, spin_current_coupling

    tb = setup.tb
    n = tb.n_sites
    p = setup.dot
    j1 = bessel_j(1, math.pi)
    pat = FockSystem([(i, 1) for i in range(n)])
    for i in range(n):
        if i != p:
            pat.add_hopping(i, p, -1j * complex(tb.tunneling[i, p]) * j1)
    cur = current_operator(pat, p)
    lam = spin_current_coupling(zeta2)
    full = FockSystem([(i, 1) for i in range(n)], [p])
    for (i, j), amp in pat.hoppings.items():
        if i < j:
            full.add_hopping(i, j, amp)
    if lam != 0:
        for (i, j), amp in pat.hoppings.items():
            if i != p:
                continue
            sgn = 1.0 if j < p else -1.0
            c = -0.5j * sgn * amp * 0.5 * lam
            full.add_term(c, [("sz", p), ("ad", p), ("a", j)])
            full.add_term(np.conj(c), [("sz", p), ("ad", j), ("a", p)])
    return CurrentProbe(setup, zeta2, lam, pat, cur, full)


def current_probe_exact_system(setup: SwitchSetup, zeta2: float) -> FockSystem:
    """Leads, static spin shifts and the two-tone drive on the dot."""
    tb = setup.tb
    n = tb.n_sites
    p = setup.dot
    sys = FockSystem([(i, 1) for i in range(n)], list(range(n)))
    w = np.asarray(tb.onsite)
    nu = setup.drive_freq
    for i in range(n):
        shift = w[i] - w[p]
        if i != p:
            shift += 0.5 * setup.dw_plus_sigma
            sys.add_term(0.5 * setup.dw_minus, [("sz", i), ("n", i)])
        if shift != 0:
            sys.add_onsite(i, shift)
    for i in range(n):
        for j in range(i + 1, n):
            if tb.tunneling[i, j] != 0:
                sys.add_hopping(i, j, tb.tunneling[i, j])
    sys.add_term(0.5 * 2.0 * math.pi * nu, [("n", p)], envelope=(nu, math.pi / 2))
    if zeta2:
        sys.add_term(0.5 * 2.0 * zeta2 * nu, [("sz", p), ("n", p)], envelope=(nu, 0.0))
    return sys


def current_probe_dynamics(probe: CurrentProbe, t_grid, dot_spin: str = "up", rtol=1e-10):
    """Occupations under the exact two-tone H(t) and under the effective terms.

    Returns (exact, effective, sx_exact, sx_effective); the sigma^x traces are
    the dot-spin coherence, meaningful for dot_spin = "plus".
    """
    setup = probe.setup
    n = setup.tb.n_sites
    p = setup.dot
    ex = current_probe_exact_system(setup, probe.zeta2)
    spins = {i: "down" for i in range(n)}
    spins[n - 1] = "up"
    spins[p] = dot_spin
    _, kets = schrodinger_evolve(ex, product_ket(ex, {0: 1}, spins), t_grid, rtol=rtol)
    exact = np.array([[np.vdot(v, ex.number(i) @ v).real for v in kets] for i in range(n)])
    sx = ex.operator([("sx", p)])
    sx_ex = np.array([np.vdot(v, sx @ v).real for v in kets])
    # the drive phase on the dot sets the spin frame; compare sigma^x in the
    # frame co-rotating with the static part only
    eff = probe.with_spin
    _, kets_e = schrodinger_evolve(eff, product_ket(eff, {0: 1}, {p: dot_spin}), t_grid, rtol=rtol)
    effective = np.array([[np.vdot(v, eff.number(i) @ v).real for v in kets_e] for i in range(n)])
    sxe = eff.operator([("sx", p)])
    sx_eff = np.array([np.vdot(v, sxe @ v).real for v in kets_e])
    return exact, effective, sx_ex, sx_eff
