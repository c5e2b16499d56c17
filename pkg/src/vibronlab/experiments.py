"""Scenario runners producing figure-ready datasets.

Each scenario takes the internal parameter tree (rad/s, see :mod:`vibronlab.io`)
and returns a :class:`Bundle` of tables plus derived quantities. :func:`run`
writes the tables as CSV and JSON next to a run manifest.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fock, gaussian
from .chain import TrapConfig, apply_offsets, build_chain, lead_offsets
from .constants import SPECIES, TWO_PI
from .io import RunManifest, Table, emit_dataset, to_internal, validate
from .laser import CoolingSpec, ReservoirParams, doppler_coefficients, lamb_dicke

log = logging.getLogger(__name__)


@dataclass
class Scenario:
    name: str
    inputs: dict  # raw tree as given (Hz units)
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        validate({"schema_version": 1, "scenario": self.name, "params": self.inputs})

    @classmethod
    def from_tree(cls, tree: dict, seed: int = 0, threads: int = 1) -> "Scenario":
        validate(tree)
        return cls(tree["scenario"], tree["params"], seed, threads)

    @property
    def params(self) -> dict:
        return to_internal(self.inputs)


@dataclass
class Bundle:
    tables: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    report: list = field(default_factory=list)


# -- shared builders ----------------------------------------------------------

def make_chain(p):
    trap = p["trap"]
    iso, roles = p["isotopes"], p["roles"]
    if trap["kind"] == "paul_trap":
        tc = TrapConfig("paul_trap", len(iso), axial_freq=trap["axial_freq"])
    else:
        tc = TrapConfig("uniform_lattice", len(iso), spacing=trap["spacing_m"])
    return build_chain(iso, roles, p["transverse_freq"] / TWO_PI, tc)


def make_reservoir(geo, cool) -> ReservoirParams:
    """Doppler reservoir; detuning and Rabi frequency are in units of the linewidth."""
    ion = geo.ion(cool["site"])
    row = SPECIES[ion.name]
    gam = ion.linewidth
    eta = lamb_dicke(row["wavelength"], ion.mass, ion.transverse_freq)
    spec = CoolingSpec(cool["rabi_gamma"] * gam, cool["detuning_gamma"] * gam, gam, eta, ion.transverse_freq)
    return doppler_coefficients(spec)


def make_reservoirs(geo, p) -> dict:
    r = p["reservoirs"]
    return {r["left"]["site"]: make_reservoir(geo, r["left"]), r["right"]["site"]: make_reservoir(geo, r["right"])}


def _hz(x):
    return float(x) / TWO_PI


def _reservoir_info(res: dict) -> dict:
    return {
        str(s): {"gamma_hz": _hz(r.gamma), "delta_hz": _hz(r.delta), "nbar": float(r.nbar)}
        for s, r in sorted(res.items())
    }


def _generator(tb, res, kind):
    return gaussian.build_edge_generator(tb, res) if kind == "edge" else gaussian.build_bulk_generator(tb, res)


def _profile(geo, gen, c, n_std=None):
    i_in, i_out = gaussian.site_currents(gen, c)
    sites = list(gen.sites)
    occ = c.occupations
    return Table({
        "site": sites,
        "z_um": [float(geo.positions[s] * 1e6) for s in sites],
        "n_mean": [float(x) for x in occ],
        "n_std": [0.0] * len(sites) if n_std is None else [float(x) for x in n_std],
        "I_in": [float(x) for x in i_in],
        "I_out": [float(x) for x in i_out],
    })


def bulk_slice(gen, res):
    """Generator rows that are not reservoirs."""
    return [k for k, s in enumerate(gen.sites) if s not in res]


def flatness(occ, nl, nr) -> float:
    return float(np.std(occ) / abs(nl - nr))


def linear_r2(y) -> float:
    x = np.arange(len(y), dtype=float)
    if len(y) < 3:
        return math.nan
    return float(np.corrcoef(x, y)[0, 1] ** 2)


def compare_to_theory(values: dict, predictions: dict) -> list:
    """Relative-error table. ``predictions`` maps name -> (value, rel_tol).

    A zero prediction is compared in absolute terms against rel_tol.
    """
    rows = []
    for name, (pred, tol) in predictions.items():
        if name not in values:
            raise KeyError(f"no value for {name!r}")
        val = float(values[name])
        err = abs(val - pred) / abs(pred) if pred != 0 else abs(val)
        rows.append({"name": name, "value": val, "prediction": float(pred), "rel_error": float(err),
                     "tolerance": float(tol), "pass": bool(err <= tol)})
    return rows


# -- scenarios ----------------------------------------------------------------

def tqw_ballistic(p, seed=0, threads=1) -> Bundle:
    geo, tb = make_chain(p["chain"])
    res = make_reservoirs(geo, p)
    gen = _generator(tb, res, p["generator"])
    c = gaussian.steady_state(gen)
    bulk = bulk_slice(gen, res)
    rl, rr = res[min(res)], res[max(res)]
    occ = c.occupations[bulk]
    th = gaussian.theory_predictions(tb, res, min(res) + 1)
    b = Bundle()
    b.tables["profile"] = _profile(geo, gen, c)
    i_in, i_out = gaussian.site_currents(gen, c)
    b.derived = {
        "reservoirs": _reservoir_info(res),
        "J_nn_hz": _hz(tb.tunneling[0, 1].real),
        "flatness": flatness(occ, rl.nbar, rr.nbar),
        "n_bulk_mean": float(np.mean(occ)),
        "n_theory": float(th.n_ss),
        "current_theory": float(th.current),
        "current_mid": float(i_out[bulk[len(bulk) // 2]]),
        "gamma_L": float(th.gamma_l),
        "gamma_R": float(th.gamma_r),
        "min_k_eigenvalue": gen.min_k_eigenvalue(),
    }
    b.residuals = {"steady_state": gaussian.residual(gen, c), "continuity": gaussian.continuity_error(gen, c)}
    b.report = compare_to_theory({"n_bulk_mean": np.mean(occ)}, {"n_bulk_mean": (th.n_ss, 0.02)})
    return b


def _dephased(p, geo, tb, res, xi_over_spacing):
    gen = _generator(tb, res, p["generator"])
    z = geo.positions
    mid = len(z) // 2
    spacing = abs(z[mid] - z[mid - 1])
    gam = res[max(res)].gamma
    noise = gaussian.NoiseModel(p["gamma_d_over_gamma"] * gam, xi_over_spacing * spacing)
    return gen.with_dephasing(gaussian.dephasing_matrix(geo, noise)), noise


def tqw_dephasing(p, seed=0, threads=1) -> Bundle:
    """Steady profiles with spatially correlated dephasing, one per xi_c."""
    geo, tb = make_chain(p["chain"])
    res = make_reservoirs(geo, p)
    b = Bundle()
    r2 = {}
    for xi in p["xi_c_over_spacing"]:
        gen, noise = _dephased(p, geo, tb, res, xi)
        c = gaussian.steady_state(gen)
        bulk = bulk_slice(gen, res)
        occ = c.occupations[bulk]
        key = f"xi_{xi:g}"
        b.tables[f"profile_{key}"] = _profile(geo, gen, c)
        # interior: drop the sites next to the reservoirs
        r2[key] = linear_r2(occ[1:-1])
        b.residuals[key] = gaussian.residual(gen, c)
        b.derived[f"gamma_d_hz_{key}"] = _hz(noise.gamma_d)
    b.derived.update({"reservoirs": _reservoir_info(res), "interior_r2": r2})
    b.tables["fourier_sweep"] = Table({"xi_c_over_spacing": list(p["xi_c_over_spacing"]), "r2": list(r2.values())})
    return b


def tqw_disorder(p, seed=0, threads=1) -> Bundle:
    geo, tb = make_chain(p["chain"])
    res = make_reservoirs(geo, p)
    n = tb.n_sites
    sites = [i for i in range(n) if i not in res] if p["sites"] == "bulk" else list(p["sites"])
    gam = res[max(res)].gamma
    model = gaussian.DisorderModel(p["dw_minus_over_gamma"] * gam, sites, p["mode"], p["n_samples"], seed)
    kind = p["generator"]

    def builder(eps):
        off = np.zeros(n)
        off[sites] = eps
        return _generator(apply_offsets(tb, off), res, kind)

    out = gaussian.disorder_average(builder, model, threads=threads)
    gen0 = builder(np.zeros(len(sites)))
    b = Bundle()
    b.tables["profile"] = Table({
        "site": list(gen0.sites),
        "z_um": [float(geo.positions[s] * 1e6) for s in gen0.sites],
        "n_mean": [float(x) for x in out.mean],
        "n_std": [float(x) for x in out.std],
        "I_in": [float(x) for x in out.current_mean[0]],
        "I_out": [float(x) for x in out.current_mean[1]],
    })
    bulk = bulk_slice(gen0, res)
    interior = out.mean[bulk]
    d = np.diff(interior)
    b.derived = {
        "reservoirs": _reservoir_info(res),
        "n_configs": int(out.n_configs),
        "dw_minus_hz": _hz(model.dw_minus),
        "monotone_decreasing": bool(np.all(d < 0)),
        "monotone_increasing": bool(np.all(d > 0)),
        "slope_per_site": float(np.polyfit(np.arange(len(interior)), interior, 1)[0]),
    }
    return b


def tqd(p, seed=0, threads=1) -> Bundle:
    geo, tb = make_chain(p["chain"])
    res = make_reservoirs(geo, p)
    q = p["probe_site"]
    ge = gaussian.build_edge_generator(tb, res)
    gb = gaussian.build_bulk_generator(tb, res)
    ce, cb = gaussian.steady_state(ge), gaussian.steady_state(gb)
    th = gaussian.theory_predictions(tb, res, q)
    n_edge = float(ce.occupations[ge.sites.index(q)])
    n_bulk = float(cb.occupations[gb.sites.index(q)])
    ie = gaussian.site_currents(ge, ce)[1][ge.sites.index(q)]
    ib = gaussian.site_currents(gb, cb)
    b = Bundle()
    b.tables["summary"] = Table({
        "quantity": ["n_probe", "current"],
        "edge": [n_edge, float(ie)],
        "bulk": [n_bulk, float(th.gamma_r * (n_bulk - res[max(res)].nbar))],
        "theory": [float(th.n_ss), float(th.current)],
    })
    b.derived = {"reservoirs": _reservoir_info(res), "gamma_L": float(th.gamma_l), "gamma_R": float(th.gamma_r),
                 "J_hz": _hz(abs(tb.tunneling[0, 1]))}
    b.residuals = {"edge": gaussian.residual(ge, ce), "bulk": gaussian.residual(gb, cb)}
    b.report = compare_to_theory(
        {"n_bulk": n_bulk, "n_edge": n_edge},
        {"n_bulk": (th.n_ss, 0.01), "n_edge": (th.n_ss, 0.03)},
    )
    return b


def dtqd_sweep(p, seed=0, threads=1) -> Bundle:
    geo, tb = make_chain(p["chain"])
    q = p["probe_site"]
    rows = {k: [] for k in ("rabi_gamma", "gamma_L", "gamma_R", "nbar_R", "n_edge", "n_bulk", "n_theory",
                            "I_edge", "I_theory")}
    worst = 0.0
    for rabi in p["right_rabi_gamma"]:
        pp = {"reservoirs": {"left": p["reservoirs"]["left"], "right": dict(p["reservoirs"]["right"], rabi_gamma=rabi)}}
        res = make_reservoirs(geo, pp)
        ge = gaussian.build_edge_generator(tb, res)
        gb = gaussian.build_bulk_generator(tb, res)
        ce, cb = gaussian.steady_state(ge), gaussian.steady_state(gb)
        th = gaussian.theory_predictions(tb, res, q)
        ie = gaussian.site_currents(ge, ce)[1][ge.sites.index(q)]
        rows["rabi_gamma"].append(float(rabi))
        rows["gamma_L"].append(float(th.gamma_l))
        rows["gamma_R"].append(float(th.gamma_r))
        rows["nbar_R"].append(float(res[max(res)].nbar))
        rows["n_edge"].append(float(ce.occupations[ge.sites.index(q)]))
        rows["n_bulk"].append(float(cb.occupations[gb.sites.index(q)]))
        rows["n_theory"].append(float(th.n_ss))
        rows["I_edge"].append(float(ie))
        rows["I_theory"].append(float(th.current))
        worst = max(worst, abs(ie - th.current) / abs(th.current))
    b = Bundle()
    b.tables["sweep"] = Table(rows)
    b.derived = {"max_current_rel_error_edge": worst, "J_hz": [_hz(x) for x in np.diag(tb.tunneling.real, 1)]}
    return b


def leads_step(p, seed=0, threads=1) -> Bundle:
    geo, tb = make_chain(p["chain"])
    res = make_reservoirs(geo, p)
    n = tb.n_sites
    dot = p["dot_site"]
    j12 = float(tb.tunneling[0, 1].real)
    out = {}
    b = Bundle()
    for label, dw in (("zero", 0.0), ("offset", p["dw_minus_over_J"] * j12)):
        tb2 = apply_offsets(tb, lead_offsets(n, dot, dw))
        gen = _generator(tb2, res, p["generator"])
        c = gaussian.steady_state(gen)
        i_in, i_out = gaussian.site_currents(gen, c)
        k = gen.sites.index(dot)
        out[label] = (float(i_out[k]), float(i_in[k]))
        b.tables[f"profile_{label}"] = _profile(geo, gen, c)
        b.residuals[label] = gaussian.residual(gen, c)
    b.derived = {
        "reservoirs": _reservoir_info(res),
        "J12_hz": _hz(j12),
        "dw_minus_hz": _hz(p["dw_minus_over_J"] * j12),
        "current_out_zero": out["zero"][0],
        "current_out_offset": out["offset"][0],
        "current_in_zero": out["zero"][1],
        "current_in_offset": out["offset"][1],
        "suppression_ratio": out["zero"][0] / out["offset"][0] if out["offset"][0] != 0 else math.inf,
    }
    return b


def _switch_setup(p, zeta):
    geo, tb = make_chain(p["chain"])
    dot = p["dot_site"]
    j = abs(complex(tb.tunneling[dot - 1, dot]))
    return fock.SwitchSetup(tb, p["dw_minus_over_J"] * j, zeta, p.get("r", 1.0), dot), j


def switch(p, seed=0, threads=1) -> Bundle:
    zeta = fock.first_bessel_peak() / 2.0 if p["zeta"] == "first_peak" else float(p["zeta"])
    setup, j = _switch_setup(p, zeta)
    g_on = j * abs(fock._bessel1(zeta * (1.0 + setup.r)))
    t_tr = math.pi / (math.sqrt(2.0) * g_on) if g_on > 0 else math.pi / (math.sqrt(2.0) * j)
    t = np.linspace(0.0, p["window_transfer_times"] * t_tr, p["n_points"])
    b = Bundle()
    runs = {"on": ("up", ()), "off": ("down", ())}
    if p["pulse_fractions"]:
        runs["pulsed"] = ("up", tuple(f * t[-1] for f in p["pulse_fractions"]))
    last = setup.tb.n_sites - 1
    derived = {"zeta": zeta, "J_hz": _hz(j), "drive_freq_hz": _hz(setup.drive_freq), "transfer_time_s": t_tr}
    for name, (spin, pulses) in runs.items():
        r = fock.switch_scenario(setup, t, spin, pulses)
        cols = {"time_s": list(t)}
        for i in range(setup.tb.n_sites):
            cols[f"n{i}_exact"] = list(r.exact[i])
            cols[f"n{i}_pat"] = list(r.effective[i])
        b.tables[f"switch_{name}"] = Table(cols)
        derived[f"transfer_{name}"] = float(np.max(r.exact[last]))
        derived[f"max_deviation_{name}"] = r.max_deviation
        if pulses:
            derived["pulse_times_s"] = list(r.pulse_times)
    off = derived["transfer_off"]
    derived["on_off_ratio"] = derived["transfer_on"] / off if off > 0 else math.inf
    b.derived = derived
    return b


def tqd_reduced(p):
    """Single-mode Fock model of the dot after eliminating both reservoirs."""
    geo, tb = make_chain(p["chain"])
    res = make_reservoirs(geo, p)
    q = p["probe_site"]
    gb = gaussian.build_bulk_generator(tb, res)
    th = gaussian.theory_predictions(tb, res, q)
    k = gb.sites.index(q)
    lp = float(gb.info["lambda_plus"][k, k].real)
    lm = float(gb.info["lambda_minus"][k, k].real)
    g = lm - lp
    n_max = p.get("n_max") or fock.default_nmax(th.n_ss)
    sys = fock.from_bulk_generator(gb, n_max)
    s_th = (th.n_ss**2 + th.n_ss) / (2.0 * g)
    return sys, q, th, g, s_th, res


def ramsey_number(p, seed=0, threads=1) -> Bundle:
    sys, q, th, g, s_th, res = tqd_reduced(p)
    num = sys.number(q)
    mu = fock.steady_state_dm(sys)
    reg = fock.regression_spectrum(sys, num, mu_ss=mu)
    rows = {k: [] for k in ("window_s", "lambda_over_g", "lambda", "a", "b", "mean", "noise0",
                            "mean_rel_error", "noise_rel_error", "cov_aa", "cov_ab", "cov_bb",
                            "fit_ok", "fit_residual")}
    b = Bundle()
    for win in p["windows_s"]:
        t = np.linspace(0.0, win, p["n_points"])
        for f in p["lambda_over_g"]:
            lam = f * g
            r = fock.ramsey_probe(sys, lam, num, t, rho0=mu)
            rows["window_s"].append(float(win))
            rows["lambda_over_g"].append(float(f))
            rows["lambda"].append(float(lam))
            rows["a"].append(r.a)
            rows["b"].append(r.b)
            rows["mean"].append(r.mean)
            rows["noise0"].append(r.noise0)
            rows["mean_rel_error"].append(abs(r.mean - th.n_ss) / th.n_ss)
            rows["noise_rel_error"].append(abs(r.noise0 - s_th) / s_th)
            cov = np.asarray(r.covariance, dtype=float)
            rows["cov_aa"].append(float(cov[0, 0]))
            rows["cov_ab"].append(float(cov[0, 1]))
            rows["cov_bb"].append(float(cov[1, 1]))
            rows["fit_ok"].append(bool(r.ok))
            rows["fit_residual"].append(r.residual)
            if f == min(p["lambda_over_g"]):
                b.tables[f"trace_window_{win:g}"] = Table({
                    "time_s": list(t), "sigma_x": list(r.coherence.real), "sigma_y": list(-r.coherence.imag),
                })
    b.tables["fits"] = Table(rows)
    b.derived = {
        "reservoirs": _reservoir_info(res),
        "n_theory": float(th.n_ss),
        "noise_theory": float(s_th),
        "g": float(g),
        "n_fock": float(mu.expect(num).real),
        "noise_regression": reg.noise0,
        "n_max": sys.modes[0][1],
    }
    return b


def ramsey_current(p, seed=0, threads=1) -> Bundle:
    setup, j = _switch_setup(dict(p, r=0.0), 0.0)
    probe = fock.current_probe_setup(setup, p["zeta2"])
    g_on = j * abs(fock._bessel1(math.pi))
    t_tr = math.pi / (math.sqrt(2.0) * g_on)
    t = np.linspace(0.0, p["window_transfer_times"] * t_tr, p["n_points"])
    ex, ef, sx, sxe = fock.current_probe_dynamics(probe, t, p["dot_spin"])
    cols = {"time_s": list(t)}
    for i in range(setup.tb.n_sites):
        cols[f"n{i}_exact"] = list(ex[i])
        cols[f"n{i}_effective"] = list(ef[i])
    cols["sigma_x_exact"] = list(sx)
    cols["sigma_x_effective"] = list(sxe)
    b = Bundle()
    b.tables["dynamics"] = Table(cols)
    b.derived = {"lambda_I": probe.lam, "J_hz": _hz(j), "transfer_time_s": t_tr,
                 "max_population_deviation": float(np.max(np.abs(ex - ef)))}
    return b


def fano_sweep(p, seed=0, threads=1) -> Bundle:
    """Fano factor of the dot current as the left reservoir is heated.

    The left reservoir keeps its Doppler rate and shift; only its occupation
    is set from the grid.
    """
    geo, tb = make_chain(p["chain"])
    res0 = make_reservoirs(geo, p)
    left, right = min(res0), max(res0)
    rl, rr = res0[left], res0[right]
    nr = rr.nbar if p["nbar_right"] is None else p["nbar_right"]
    rows = {k: [] for k in ("nbar_left", "current", "noise0", "fano")}
    for nl in p["nbar_left"]:
        res = {left: ReservoirParams.thermal(rl.gamma, nl, rl.delta), right: ReservoirParams.thermal(rr.gamma, nr, rr.delta)}
        if p["method"] == "gaussian":
            gen = gaussian.build_edge_generator(tb, res)
            mean, noise, fano = gaussian.current_fano_factor(gen, p["dot_site"])
        else:
            cut = p["n_max"] or [fock.default_nmax(nl), fock.default_nmax(0.5 * (nl + nr)), fock.default_nmax(nr)]
            sys = fock.from_tight_binding(tb, dict(zip(range(tb.n_sites), cut)), res)
            r = fock.fano_factor(sys, p["dot_site"])
            mean, noise, fano = float(r.mean.real), r.noise0, r.fano
        rows["nbar_left"].append(float(nl))
        rows["current"].append(float(mean))
        rows["noise0"].append(float(noise))
        rows["fano"].append(float(fano))
    f = np.array(rows["fano"])
    b = Bundle()
    b.tables["fano"] = Table(rows)
    b.derived = {
        "nbar_right": float(nr),
        "monotone_increasing": bool(np.all(np.diff(f) > 0)),
        "min_fano": float(f.min()),
        "slope_per_vibron": float(np.polyfit(rows["nbar_left"], f, 1)[0]) if len(f) > 1 else math.nan,
        "linear_r2": float(np.corrcoef(rows["nbar_left"], f)[0, 1] ** 2) if len(f) > 2 else math.nan,
        "method": p["method"],
    }
    return b


def relaxation(p, t_final: float, n_out: int = 201) -> Bundle:
    """Occupations relaxing from the vacuum (reservoirs at their own n-bar).

    Works for any scenario tree that has a chain and two reservoirs.
    """
    geo, tb = make_chain(p["chain"])
    res = make_reservoirs(geo, p)
    gen = _generator(tb, res, p.get("generator", "edge"))
    n0 = [res[s].nbar if s in res else 0.0 for s in gen.sites]
    times, states = gaussian.evolve(gen, gaussian.CorrelatorState.thermal(n0), t_final, n_out=n_out)
    cols = {"time_s": [float(t) for t in times]}
    occ = np.array([c.occupations for c in states])
    for k, s in enumerate(gen.sites):
        cols[f"n{s}"] = [float(x) for x in occ[:, k]]
    b = Bundle()
    b.tables["relaxation"] = Table(cols)
    b.tables["profile"] = _profile(geo, gen, states[-1])
    c_ss = gaussian.steady_state(gen)
    b.derived = {"reservoirs": _reservoir_info(res), "t_final_s": float(t_final),
                 "distance_to_steady": float(np.max(np.abs(occ[-1] - c_ss.occupations)))}
    return b


RUNNERS = {
    "tqw_ballistic": tqw_ballistic,
    "tqw_dephasing": tqw_dephasing,
    "tqw_disorder": tqw_disorder,
    "tqd": tqd,
    "dtqd_sweep": dtqd_sweep,
    "leads_step": leads_step,
    "switch": switch,
    "ramsey_number": ramsey_number,
    "ramsey_current": ramsey_current,
    "fano_sweep": fano_sweep,
}


@dataclass
class RunResult:
    bundle: Bundle
    manifest: RunManifest
    paths: list


def run(scenario: Scenario, out_dir=None) -> RunResult:
    """Execute a scenario; with ``out_dir`` write datasets and the manifest."""
    t0 = time.perf_counter()
    bundle = RUNNERS[scenario.name](scenario.params, seed=scenario.seed, threads=scenario.threads)
    wall = time.perf_counter() - t0
    paths = []
    if out_dir is not None:
        out = Path(out_dir)
        for name, table in bundle.tables.items():
            paths.append(emit_dataset(table, "csv", out / f"{name}.csv"))
            paths.append(emit_dataset(table, "json", out / f"{name}.json"))
    derived = dict(bundle.derived)
    if bundle.report:
        derived["comparison"] = bundle.report
    manifest = RunManifest(
        scenario=scenario.name,
        inputs={"schema_version": 1, "scenario": scenario.name, "params": scenario.inputs},
        derived=derived,
        seeds={"seed": scenario.seed},
        residuals=bundle.residuals,
        timings={"wall_s": wall, "threads": scenario.threads},
        outputs=[p.name for p in paths],
    )
    if out_dir is not None:
        paths.append(manifest.write(out_dir))
    return RunResult(bundle, manifest, paths)
