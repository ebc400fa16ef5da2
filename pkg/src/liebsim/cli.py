"""Command-line entry point: ``liebsim <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import chain as chain_mod
from . import kernels as kmod
from . import lattice as lat
from .dynamics import EvolutionConfig, evolve, lightcone_experiment, product_state, site_expectation
from .hamiltonian import build_dilated_hamiltonian, chains_for_model, planned_dimension
from .supersonic import (bound_violation_report, build_protocol, simulate_full_space, simulate_protocol,
                         simulate_restricted)

CONFIG_SCHEMA = "liebsim.config/1"
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def fmt(x):
    return f"{x:.12g}"


def _round(obj):
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round(obj.item())
    return obj


def write_atomic(path, text):
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".liebsim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dump_json(obj):
    return json.dumps(_round(obj), indent=1, sort_keys=True) + "\n"


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def load_kernel(path):
    try:
        return kmod.MemoryKernel.from_dict(load_json(path))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path}: malformed kernel ({exc})") from exc


def parse_sites(text):
    """``"0"``, ``"0,1"`` or ``"0 1;2 3"`` (sites separated by ';', coordinates by ',' or space)."""
    sites = []
    for chunk in text.split(";"):
        coords = [int(c) for c in chunk.replace(",", " ").split()]
        if coords:
            sites.append(tuple(coords))
    if not sites:
        raise UsageError("empty site list")
    return sites


def parse_int_range(text):
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",")]


def parse_times(text):
    if ":" in text:
        a, step, b = (float(x) for x in text.split(":"))
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return [a + k * step for k in range(n)]
    return [float(x) for x in text.split(",")]


def load_chains(path, model):
    d = load_json(path)
    if "chains" in d:
        chains = {k: chain_mod.ChainCoefficients.from_dict(v) for k, v in d["chains"].items()}
    else:
        single = chain_mod.ChainCoefficients.from_dict(d)
        chains = chains_for_model(model, lambda _: single)
    return chains


def load_observable(path):
    d = load_json(path)
    return lat.matrix_from_json(d["matrix"] if isinstance(d, dict) and "matrix" in d else d)


# --------------------------------------------------------------------------
# commands


def cmd_kernel(args):
    if args.action == "tv":
        K = load_kernel(args.inputs[0])
        interval = tuple(args.interval) if args.interval else None
        if args.dry_run:
            return "planned dimension: 0 (kernel calculus)", None
        tv = kmod.total_variation(K, interval)
        text = dump_json({"schema": "liebsim.tv/1", "tv": tv}) if args.out else None
        return f"TV = {tv:.6f}", text
    if args.action == "mollify":
        if args.delta is None:
            raise UsageError("kernel mollify needs --delta")
        K = load_kernel(args.inputs[0])
        if args.dry_run:
            return "planned dimension: 0 (kernel calculus)", None
        M = kmod.mollify(K, args.delta, args.delta2)
        tv = kmod.total_variation(M)
        return f"mollified TV = {fmt(tv)}", dump_json({"schema": "liebsim.kernel/1", **M.to_dict()})
    if args.action == "upper-bound":
        Ks = [load_kernel(p) for p in args.inputs]
        if args.dry_run:
            return "planned dimension: 0 (kernel calculus)", None
        U = kmod.build_upper_bound(Ks)
        tv = kmod.total_variation(U)
        return f"TV(U) = {fmt(tv)}", dump_json({"schema": "liebsim.kernel/1", **U.to_dict()})
    raise UsageError(f"unknown kernel action {args.action}")


def cmd_chain(args):
    for name in ("kernel", "delta", "omega_c", "modes"):
        if getattr(args, name) is None:
            raise UsageError(f"chain needs --{name.replace('_', '-')}")
    V = load_kernel(args.kernel)
    params = chain_mod.DilationParams(args.delta, args.omega_c, args.modes)
    if args.dry_run:
        return f"planned dimension: 0 (chain with {params.n_modes} modes)", None
    ch = chain_mod.build_chain(V, params, args.reorthogonalize)
    text = ch.to_csv() if (args.out or "").endswith(".csv") else dump_json(
        {"schema": "liebsim.chain/1", **ch.to_dict(), "params": params.to_dict()})
    return f"chain: g = {fmt(ch.g)}, {ch.n_modes} modes", text


BOUND_KEYS = {
    "velocity": ("a0", "z", "tv"),
    "prop1": ("o_norm", "diam", "l", "t", "a0", "z", "tv", "d"),
    "reg": ("t", "n_terms", "tv", "windows", "delta"),
    "cutoff": ("t", "n_terms", "o_norm", "tv", "delta", "omega_c"),
    "chain": ("t", "n_terms", "o_norm", "tv", "modes", "delta", "omega_c"),
    "modes": ("eps", "t", "d", "kernel"),
}


def _bound_values(args):
    vals = {}
    if args.params:
        p = load_json(args.params)
        p.pop("schema", None)
        unknown = set(p) - set(BOUND_KEYS[args.which])
        if unknown:
            raise UsageError(f"{args.params}: unknown key(s) {sorted('/' + k for k in unknown)}")
        vals.update(p)
    for k in BOUND_KEYS[args.which]:
        v = getattr(args, k, None)
        if v is not None:
            vals[k] = v
    if args.which == "reg" and "windows" not in vals and args.kernel:
        vals["kernel"] = args.kernel
    missing = [k for k in BOUND_KEYS[args.which] if k not in vals
               and not (args.which == "reg" and k == "windows" and "kernel" in vals)]
    if missing:
        raise UsageError(f"bounds {args.which} missing: {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return vals


def cmd_bounds(args):
    v = _bound_values(args)
    if args.dry_run:
        return "planned dimension: 0 (bound evaluation)", None
    w = args.which
    if w == "velocity":
        val = lat.lr_velocity(v["a0"], v["z"], v["tv"])
    elif w == "prop1":
        val = lat.prop1_bound(v["o_norm"], v["diam"], v["l"], v["t"], v["a0"], v["z"], v["tv"], int(v["d"]))
    elif w == "reg":
        windows = v.get("windows")
        if windows is None:
            windows = chain_mod.regularization_windows(load_kernel(v["kernel"]), v["t"], v["delta"])
        val = chain_mod.regularization_error_bound(v["t"], v["n_terms"], v["tv"], windows, v["delta"])
    elif w == "cutoff":
        val = chain_mod.freq_cutoff_error_bound(v["t"], v["n_terms"], v["o_norm"], v["tv"], v["delta"], v["omega_c"])
    elif w == "chain":
        val = chain_mod.chain_truncation_error_bound(v["t"], v["n_terms"], v["o_norm"], v["tv"], int(v["modes"]),
                                                     v["delta"], v["omega_c"])
    else:
        est = chain_mod.prop2_mode_count(v["eps"], v["t"], int(v["d"]), load_kernel(v["kernel"]))
        out = {"schema": "liebsim.modes/1", "terms": list(est.terms), "kappa0": est.kappa0,
               "estimate": est.estimate}
        return f"N_m estimate = {est.estimate}", dump_json(out)
    return f"{w} = {fmt(val)}", dump_json({"schema": "liebsim.bound/1", "bound": w, "value": val, "inputs": v})


def cmd_modes(args):
    args.which = "modes"
    return cmd_bounds(args)


def _load_model(path):
    try:
        return lat.model_from_dict(load_json(path))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path}: malformed model ({exc})") from exc


def cmd_model(args):
    model = _load_model(args.input)
    if args.action == "stats":
        if args.dry_run:
            return f"planned dimension: {model.qudit_dim ** model.n_sites} (system only)", None
        a0, Z = lat.geometry_stats(model)
        tv = kmod.total_variation(model.upper_bound())
        return f"a0 = {a0}, Z = {Z}, TV(U) = {fmt(tv)}", dump_json(
            {"schema": "liebsim.stats/1", "a0": a0, "Z": Z, "tv_u": tv, "terms": len(model.terms)})
    if args.x is None or args.l is None:
        raise UsageError("model restrict needs --x and --l")
    sub = lat.restrict(model, parse_sites(args.x), args.l)
    if args.dry_run:
        return f"planned dimension: {model.qudit_dim ** len(sub.sites)} (system only)", None
    return f"kept {len(sub.terms)} of {len(model.terms)} terms", dump_json(lat.model_to_dict(sub))


def _evolution_cfg(args):
    return EvolutionConfig(dt=args.dt, n_max=args.n_max, leakage=args.leakage, tol=args.tol)


def cmd_simulate(args):
    model = _load_model(args.model)
    chains = load_chains(args.chain, model) if args.chain else {}
    X = parse_sites(args.x)
    O = load_observable(args.observable)
    dim = planned_dimension(model, chains, args.n_max)
    if args.dry_run:
        return f"planned dimension: {dim}", None
    cfg = _evolution_cfg(args)
    asm = build_dilated_hamiltonian(model, chains, args.n_max)
    state = product_state(asm)
    rows, prev = [], 0.0
    for t in parse_times(args.t):
        state = evolve(asm, state, prev, t, cfg)
        prev = t
        rows.append((t, site_expectation(asm, state, O, X)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "expectation"])
    for t, v in rows:
        w.writerow([fmt(t), fmt(v)])
    return f"simulated {len(rows)} times on dimension {dim}", buf.getvalue()


def cmd_lightcone(args):
    model = _load_model(args.model)
    chains = load_chains(args.chain, model) if args.chain else {}
    X = parse_sites(args.x)
    O = load_observable(args.observable)
    l_values = parse_int_range(args.l)
    if args.dry_run:
        return f"planned dimension: {planned_dimension(model, chains, args.n_max)}", None
    states = None
    if args.seed is not None:
        rng = np.random.default_rng(args.seed)
        states = {s: rng.normal(size=model.qudit_dim) + 1j * rng.normal(size=model.qudit_dim) for s in model.sites}
    res = lightcone_experiment(model, chains, O, X, l_values, parse_times(args.t), states, _evolution_cfg(args),
                               jobs=args.jobs)
    worst = max((d - b for _, _, d, b in res.rows), default=0.0)
    text = dump_json(json.loads(res.to_json())) if (args.out or "").endswith(".json") else res.to_csv()
    return f"{len(res.rows)} rows, max(delta - bound) = {fmt(worst)}", text


def cmd_supersonic(args):
    p = build_protocol(args.m)
    n_max = args.fock or p.T + 2
    if args.dry_run:
        block = 4 * n_max
        return f"planned dimension: {block} per block (full space {2 ** p.n * n_max ** (p.n - 1)})", None
    full = simulate_protocol(p, n_max, keep_records=False)
    l = args.l if args.l is not None else 0
    restricted = simulate_restricted(p, l, n_max)
    report = bound_violation_report(p, l, full, restricted)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "index", "occupation"])
    for k, v in enumerate(full.qubits, 1):
        w.writerow(["qubit", k, fmt(float(v))])
    for k, v in enumerate(full.oscillators, 1):
        w.writerow(["oscillator", k, fmt(float(v))])
    if args.out:
        base, _ = os.path.splitext(args.out)
        write_atomic(base + ".violation.json", dump_json(report.to_dict()))
    return f"target qubit {p.target}: <n> = {fmt(report.n_full)}, delta = {fmt(report.delta)}", buf.getvalue()


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config; flags override its values")
    common.add_argument("--out", help="output path (written atomically)")
    common.add_argument("--dry-run", action="store_true", help="validate and report the planned dimension")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("--seed", type=int)

    parser = _Parser(prog="liebsim", description="Light-cone bounds for non-Markovian lattice models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("kernel", parents=[common], help="kernel calculus")
    k.add_argument("action", choices=["tv", "mollify", "upper-bound"])
    k.add_argument("--in", dest="inputs", nargs="+", required=True)
    k.add_argument("--interval", type=float, nargs=2)
    k.add_argument("--delta", type=float)
    k.add_argument("--delta2", type=float)
    k.set_defaults(func=cmd_kernel)

    c = sub.add_parser("chain", parents=[common], help="chain coefficients of a vacuum bath")
    c.add_argument("--kernel")
    c.add_argument("--delta", type=float)
    c.add_argument("--omega-c", type=float)
    c.add_argument("--modes", type=int)
    c.add_argument("--reorthogonalize", action="store_true")
    c.set_defaults(func=cmd_chain)

    b = sub.add_parser("bounds", parents=[common], help="error and light-cone bound calculators")
    b.add_argument("which", choices=sorted(BOUND_KEYS))
    b.add_argument("--params")
    for name, typ in (("a0", float), ("z", float), ("tv", float), ("o-norm", float), ("diam", float),
                      ("l", float), ("t", float), ("d", int), ("n-terms", float), ("windows", float),
                      ("delta", float), ("omega-c", float), ("modes", int), ("eps", float)):
        b.add_argument(f"--{name}", type=typ)
    b.add_argument("--kernel")
    b.set_defaults(func=cmd_bounds)

    mo = sub.add_parser("modes", parents=[common], help="mode-count estimate")
    mo.add_argument("--params")
    mo.add_argument("--eps", type=float)
    mo.add_argument("--t", type=float)
    mo.add_argument("--d", type=int)
    mo.add_argument("--kernel")
    mo.set_defaults(func=cmd_modes)

    m = sub.add_parser("model", parents=[common], help="model geometry and restriction")
    m.add_argument("action", choices=["stats", "restrict"])
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--x")
    m.add_argument("--l", type=int)
    m.set_defaults(func=cmd_model)

    def evolution_flags(p):
        p.add_argument("--model", required=True)
        p.add_argument("--chain")
        p.add_argument("--observable", required=True)
        p.add_argument("--x", required=True)
        p.add_argument("--t", required=True)
        p.add_argument("--n-max", type=int, default=3)
        p.add_argument("--dt", type=float, default=0.05)
        p.add_argument("--leakage", choices=["warn", "error", "ignore"], default="warn")
        p.add_argument("--tol", type=float, default=1e-9, help="local step error target")

    s = sub.add_parser("simulate", parents=[common], help="evolve a dilated model")
    evolution_flags(s)
    s.set_defaults(func=cmd_simulate)

    lc = sub.add_parser("lightcone", parents=[common], help="light-cone experiment")
    evolution_flags(lc)
    lc.add_argument("--l", required=True)
    lc.set_defaults(func=cmd_lightcone)

    ss = sub.add_parser("supersonic", parents=[common], help="supersonic transport protocol")
    ss.add_argument("--m", type=int, required=True)
    ss.add_argument("--l", type=int)
    ss.add_argument("--fock", type=int)
    ss.set_defaults(func=cmd_supersonic)
    return parser, sub


def _apply_config(parser, sub, argv):
    """Re-parse with config values as defaults so explicit flags win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = load_json(args.config)
    if not isinstance(cfg, dict):
        raise UsageError(f"{args.config}: config must be a JSON object")
    schema = cfg.pop("schema", None)
    if schema != CONFIG_SCHEMA:
        raise UsageError(f"{args.config}: /schema must be {CONFIG_SCHEMA!r}")
    subparser = sub.choices[args.command]
    known = {a.dest for a in subparser._actions}
    unknown = [k for k in cfg if k.replace("-", "_") not in known or k in ("func", "config", "command")]
    if unknown:
        raise UsageError(f"{args.config}: unknown key {'/' + unknown[0]}")
    subparser.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    # required options may now come from the config
    for action in subparser._actions:
        if action.dest in {k.replace("-", "_") for k in cfg}:
            action.required = False
    return parser.parse_args(argv)


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    try:
        args = _apply_config(parser, sub, argv)
        summary, text = args.func(args)
    except UsageError as exc:
        print(f"liebsim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"liebsim: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if args.out and text is not None:
        path = write_atomic(args.out, text)
        print(f"{summary} -> {path}")
    else:
        print(summary)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
