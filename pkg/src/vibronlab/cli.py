"""``vibron-lab`` command line.

Every scenario command loads a preset (or a config file), applies ``--set``
overrides and VIBRONLAB_* environment settings, runs, and writes CSV/JSON
datasets plus ``manifest.json`` into ``--out``.

Exit status: 0 on success, 2 for configuration errors, 1 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, experiments, io
from .constants import TWO_PI

log = logging.getLogger("vibronlab")

# command -> (default preset, scenarios it accepts)
_COMMANDS = {
    "steady": ("tqw_ballistic", ("tqw_ballistic", "tqd", "dtqd_sweep", "leads_step")),
    "fourier": ("tqw_dephasing", ("tqw_dephasing",)),
    "disorder": ("tqw_disorder", ("tqw_disorder",)),
    "ramsey": ("ramsey_number", ("ramsey_number", "ramsey_current")),
    "switch": ("switch", ("switch",)),
    "fano": ("fano_sweep", ("fano_sweep",)),
}

_HELP = {
    "steady": "steady-state profiles and currents",
    "fourier": "profiles under correlated dephasing, one per correlation length",
    "disorder": "disorder-averaged profiles",
    "ramsey": "spin Ramsey probe of vibron number or current",
    "switch": "spin-controlled heat switch dynamics",
    "fano": "current Fano factor against the left reservoir occupation",
}


def _add_common(p, preset_required=False):
    p.add_argument("--preset", help="named preset (see `vibron-lab presets`)")
    p.add_argument("--config", type=Path, help="config file instead of a preset")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a parameter, e.g. params.generator=bulk (repeatable)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--threads", type=int, help="worker threads for ensembles (default 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vibron-lab", description="Vibron heat transport in trapped-ion chains.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run any scenario")
    p.add_argument("scenario", choices=io.SCENARIOS)
    _add_common(p)

    for name, (default, _) in _COMMANDS.items():
        p = sub.add_parser(name, help=_HELP[name])
        _add_common(p)
        p.set_defaults(default_preset=default)

    p = sub.add_parser("evolve", help="relaxation of occupations from the vacuum")
    _add_common(p)
    p.add_argument("--t-final", type=float, required=True, help="final time in seconds")
    p.add_argument("--n-out", type=int, default=201)
    p.set_defaults(default_preset="tqw_ballistic")

    p = sub.add_parser("cool", help="print reservoir rates, shifts and occupations")
    _add_common(p)
    p.set_defaults(default_preset="tqd")

    sub.add_parser("presets", help="list available presets")

    p = sub.add_parser("validate", help="check a config file against its schema")
    p.add_argument("config", type=Path)
    return ap


def _settings(args) -> dict:
    env = io.env_overrides()
    out = args.out if args.out is not None else env.get("out")
    return {
        "seed": args.seed if args.seed is not None else env.get("seed", 0),
        "threads": args.threads if args.threads is not None else env.get("threads", 1),
        "out": Path(out) if out is not None else None,
        "set": list(env.get("set", [])) + list(args.set),
    }


def _load(args, settings, default_preset):
    if args.config is not None and args.preset is not None:
        raise io.ConfigError("give either --preset or --config, not both")
    if args.config is not None:
        return io.load_config(args.config, settings["set"])
    return io.load_preset(args.preset or default_preset, settings["set"])


def _print_summary(result):
    derived = {k: v for k, v in result.manifest.derived.items() if k != "reservoirs"}
    print(json.dumps(derived, indent=2, sort_keys=True))
    for p in result.paths:
        print(f"wrote {p}")


def _cmd_scenario(args, allowed, default_preset):
    st = _settings(args)
    tree = _load(args, st, default_preset)
    if allowed is not None and tree["scenario"] not in allowed:
        raise io.ConfigError(f"`{args.command}` accepts scenarios {', '.join(allowed)}, got {tree['scenario']!r}")
    if args.command == "run" and tree["scenario"] != args.scenario:
        raise io.ConfigError(f"config is for scenario {tree['scenario']!r}, not {args.scenario!r}")
    scen = experiments.Scenario.from_tree(tree, st["seed"], st["threads"])
    result = experiments.run(scen, st["out"])
    _print_summary(result)
    return 0


def _cmd_evolve(args):
    st = _settings(args)
    tree = _load(args, st, args.default_preset)
    if "reservoirs" not in tree["params"]:
        raise io.ConfigError(f"scenario {tree['scenario']!r} has no reservoirs to relax towards")
    b = experiments.relaxation(io.to_internal(tree["params"]), args.t_final, args.n_out)
    written = []
    if st["out"] is not None:
        for name, table in b.tables.items():
            written.append(io.emit_dataset(table, "csv", st["out"] / f"{name}.csv"))
            written.append(io.emit_dataset(table, "json", st["out"] / f"{name}.json"))
        m = io.RunManifest("evolve:" + tree["scenario"], tree, b.derived, {"seed": st["seed"]}, {}, {},
                           [p.name for p in written])
        written.append(m.write(st["out"]))
    print(json.dumps({k: v for k, v in b.derived.items() if k != "reservoirs"}, indent=2))
    for p in written:
        print(f"wrote {p}")
    return 0


def _cmd_cool(args):
    st = _settings(args)
    tree = _load(args, st, args.default_preset)
    p = io.to_internal(tree["params"])
    if "reservoirs" not in p:
        raise io.ConfigError(f"scenario {tree['scenario']!r} has no reservoirs")
    geo, _ = experiments.make_chain(p["chain"])
    print(f"{'side':<6}{'site':>5}{'ion':>6}{'gamma/2pi [Hz]':>18}{'delta/2pi [Hz]':>18}{'nbar':>10}")
    for side in ("left", "right"):
        c = p["reservoirs"][side]
        r = experiments.make_reservoir(geo, c)
        print(f"{side:<6}{c['site']:>5}{geo.ion(c['site']).name:>6}{r.gamma / TWO_PI:>18.6g}"
              f"{r.delta / TWO_PI:>18.6g}{r.nbar:>10.5g}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            for n in io.preset_names():
                print(n)
            return 0
        if args.command == "validate":
            tree = io.load_config(args.config)
            print(f"{args.config}: valid {tree['scenario']} config")
            return 0
        if args.command == "run":
            return _cmd_scenario(args, None, args.scenario)
        if args.command == "evolve":
            return _cmd_evolve(args)
        if args.command == "cool":
            return _cmd_cool(args)
        return _cmd_scenario(args, _COMMANDS[args.command][1], args.default_preset)
    except io.ConfigError as exc:
        print(f"vibron-lab: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"vibron-lab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
