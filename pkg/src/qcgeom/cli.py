"""Command-line driver: ``qcgeom {constants,verify,schottky,nayatani,green-eval}``.

Configuration is one JSON file (``--config``) merged with flag overrides;
flags win.  Every report embeds the resolved configuration, its SHA-256 and
the library version.  Apart from the ``run`` block (timestamp and cache
hits) the JSON written for a given configuration is byte-identical across
runs.

Exit codes: 0 pass, 1 verification failure, 2 numerical disagreement,
3 unverified group, 64 usage error.
"""

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_DISAGREE = 2
EXIT_UNVERIFIED = 3
EXIT_USAGE = 64

CROSSCHECK_LIMIT = 1e-4

DEFAULTS = {
    "n": 1,
    "seed": None,
    "schottky": {"k": 2, "T": 6.0, "axes": None, "L": 9, "samples": 512, "budget": 2_000_000},
    "measure": {"s": None, "L": None},
    "quadrature": {"method": "both", "budget": 10_000_000, "quad_budget": 200, "workers": 1, "sigmas": 4.0},
    "verify": {"suites": None, "samples": 1000},
    "nayatani": {"samples": 50, "delta": None, "atoms": 3},
    "green": {"pairs": 20, "points": None},
}

STOCHASTIC = {"constants", "schottky", "nayatani", "green-eval"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(base, override, path=""):
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise UsageError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise UsageError(f"config key {where!r} must be an object")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val


def _check_types(cfg):
    def need(cond, what):
        if not cond:
            raise UsageError(what)

    need(isinstance(cfg["n"], int) and cfg["n"] >= 1, "n must be an integer >= 1")
    need(cfg["seed"] is None or isinstance(cfg["seed"], int) and cfg["seed"] >= 0,
         "seed must be a nonnegative integer")
    s = cfg["schottky"]
    need(isinstance(s["k"], int) and s["k"] >= 1, "schottky.k must be an integer >= 1")
    need(isinstance(s["T"], (int, float)) and s["T"] > 0, "schottky.T must be positive")
    need(isinstance(s["L"], int) and s["L"] >= 1, "schottky.L must be an integer >= 1")
    q = cfg["quadrature"]
    need(q["method"] in ("both", "product-radial", "monte-carlo"),
         "quadrature.method must be both, product-radial or monte-carlo")
    need(isinstance(q["budget"], (int, float)) and q["budget"] >= 1, "quadrature.budget must be positive")
    v = cfg["verify"]
    need(v["suites"] is None or isinstance(v["suites"], list), "verify.suites must be a list")
    d = cfg["nayatani"]["delta"]
    need(d is None or isinstance(d, (int, float)) and d > 0, "nayatani.delta must be positive")


def resolve_config(args):
    """Defaults, then the config file, then flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        _merge(cfg, loaded)
    if args.n is not None:
        cfg["n"] = args.n
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.budget is not None:
        budget = int(args.budget)
        if args.command == "constants":
            cfg["quadrature"]["budget"] = budget
        elif args.command in ("schottky", "nayatani"):
            cfg["schottky"]["budget"] = budget
    if args.suite:
        cfg["verify"]["suites"] = list(args.suite)
    if args.delta is not None:
        cfg["nayatani"]["delta"] = args.delta
    _check_types(cfg)
    if args.command in STOCHASTIC and cfg["seed"] is None:
        raise UsageError(f"{args.command} is stochastic and needs a seed (--seed or config)")
    if cfg["seed"] is None:
        cfg["seed"] = 0
    return cfg


def config_hash(cfg):
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _clean(obj):
    """Make a result JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def make_report(command, cfg, result, exit_code, run_info=None):
    run = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    run.update(run_info or {})
    return _clean({
        "command": command,
        "version": __version__,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "exit_code": exit_code,
        "result": result,
        "run": run,
    })


def dump_json(obj, path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands; each returns (result, exit_code, run_info, tables)
# ---------------------------------------------------------------------------

def cmd_constants(cfg):
    from . import green as gr

    n, seed = cfg["n"], cfg["seed"]
    q = cfg["quadrature"]
    methods = [gr.PRODUCT_RADIAL, gr.MONTE_CARLO] if q["method"] == "both" else [q["method"]]
    estimates, hits = {}, {}
    for m in methods:
        budget = q["quad_budget"] if m == gr.PRODUCT_RADIAL else int(q["budget"])
        rec, hit = gr.cached_CQ(n, m, budget, seed, workers=q["workers"])
        rec = {k: v for k, v in rec.items() if k != "timestamp"}
        estimates[m] = rec
        hits[m] = hit
    result = {"n": n, "Q": 4 * n + 6, "closed_form": gr.C_Q(n), "estimates": estimates}
    code = EXIT_OK
    if len(methods) == 2:
        a, b = estimates[gr.PRODUCT_RADIAL], estimates[gr.MONTE_CARLO]
        gap = abs(a["value"] - b["value"]) / a["value"]
        bar = q["sigmas"] * math.hypot(a["error"], b["error"]) / a["value"]
        result.update({"relative_gap": gap, "combined_bar": bar, "agree": gap <= bar})
        if gap > bar:
            code = EXIT_DISAGREE
    lines = [f"C_Q(n={n}) closed form {gr.C_Q(n):.12e}"]
    for m, rec in estimates.items():
        lines.append(f"  {m:15s} {rec['value']:.12e} +- {rec['error']:.2e} "
                     f"({'cached' if hits[m] else 'computed'})")
    if "relative_gap" in result:
        lines.append(f"  relative gap {result['relative_gap']:.2e} (bar {result['combined_bar']:.2e})")
    return result, code, {"cache_hit": hits}, {}, lines


def cmd_verify(cfg, structure=None):
    from . import verify

    v = cfg["verify"]
    try:
        records = verify.run(v["suites"], cfg["n"], v["samples"], cfg["seed"], structure)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc
    ok = all(r["passed"] for r in records)
    lines = [f"{'PASS' if r['passed'] else 'FAIL'} {r['suite']}/{r['check']}: "
             f"residual {r['residual']:.3e} < {r['tolerance']:.0e}" for r in records]
    result = {"records": records, "all_passed": ok}
    return result, EXIT_OK if ok else EXIT_FAIL, {}, {}, lines


def _group(cfg):
    from . import kleinian as kl

    s = cfg["schottky"]
    axes = None if s["axes"] is None else [np.asarray(a, dtype=float) for a in s["axes"]]
    return kl.build_schottky(s["k"], float(s["T"]), axes, cfg["n"], s["samples"], cfg["seed"])


def cmd_schottky(cfg, require_verified=False):
    from . import kleinian as kl
    from .errors import InsufficientData

    s = cfg["schottky"]
    group = _group(cfg)
    if require_verified and not group.verified:
        result = {"group": group.meta(), "verified": False}
        return result, EXIT_UNVERIFIED, {}, {}, ["ping-pong witness failed: group not verified"]
    orbit = kl.enumerate_orbit(group, s["L"], budget=s["budget"])
    result = {"group": group.meta(), "verified": group.verified, "words": len(orbit.words),
              "max_sp_residual": orbit.max_sp_residual}
    try:
        fit = kl.estimate_delta(orbit)
        result["delta_fit"] = fit.as_dict()
        delta = fit.delta
    except InsufficientData as exc:
        result["delta_fit"] = None
        result["delta_note"] = str(exc)
        delta = 0.0
    try:
        result["shell_exponent"] = kl.shell_exponent(orbit)
    except InsufficientData:
        result["shell_exponent"] = None
    m = cfg["measure"]
    L = m["L"] if m["L"] is not None else s["L"]
    sval = float(m["s"]) if m["s"] is not None else max(delta, 1e-3)
    mu = kl.ps_measure(group, sval, L, orbit=orbit if L == s["L"] else None)
    tests = kl.default_test_battery(cfg["n"])
    result["measure"] = {
        "s": sval, "L": L, "atoms": len(mu.weights),
        "quasi_invariance": [kl.quasi_invariance_residual(mu, g, sval, tests) for g in group.generators],
    }
    tables = {"orbit.csv": lambda path: kl.orbit_to_csv(orbit, path), "measure.json": mu.to_json()}
    lines = [f"group k={s['k']} T={s['T']} n={cfg['n']} verified={group.verified} words={len(orbit.words)}"]
    if result["delta_fit"]:
        f = result["delta_fit"]
        lines.append(f"  delta_hat {f['delta']:.4f}  R^2 {f['r2']:.4f}")
    lines.append(f"  quasi-invariance residuals {', '.join(f'{x:.3e}' for x in result['measure']['quasi_invariance'])}")
    code = EXIT_UNVERIFIED if (require_verified and not group.verified) else EXIT_OK
    return result, code, {}, tables, lines


def cmd_nayatani(cfg, require_verified=False):
    from . import nayatani as ny

    nc = cfg["nayatani"]
    if nc["delta"] is not None:
        rep = ny.synthetic_sign_report(cfg["n"], float(nc["delta"]), nc["samples"], nc["atoms"], cfg["seed"])
    else:
        group = _group(cfg)
        if require_verified and not group.verified:
            return ({"group": group.meta(), "verified": False}, EXIT_UNVERIFIED, {}, {},
                    ["ping-pong witness failed: group not verified"])
        rep = ny.curvature_sign_report(group, cfg["schottky"]["L"], nc["samples"], seed=cfg["seed"])
    worst = rep["max_crosscheck_residual"]
    code = EXIT_DISAGREE if worst > CROSSCHECK_LIMIT else EXIT_OK
    signs = [r["sign"] for r in rep["points"]]
    rows = [[i, r["s_value"], r["sign"], r["crosscheck_residual"]] for i, r in enumerate(rep["points"])]
    tables = {"nayatani.csv": (["point", "s_value", "sign", "crosscheck_residual"], rows)}
    lines = [f"branch {rep['branch']} (delta {rep['delta_used']:.4g} vs {rep['threshold']}); "
             f"signs +{signs.count(1)} 0:{signs.count(0)} -{signs.count(-1)}; "
             f"max cross-check residual {worst:.2e}"]
    return rep, code, {}, tables, lines


def cmd_green_eval(cfg):
    from . import calculus as cc
    from . import green as gr
    from . import heisenberg as hg

    n = cfg["n"]
    g = cfg["green"]
    Q = hg.homogeneous_dim(n)
    if g["points"] is not None:
        pairs = np.asarray(g["points"], dtype=float)
        if pairs.ndim != 3 or pairs.shape[1:] != (2, 4 * n + 3):
            raise UsageError(f"green.points must be a list of [xi, eta] pairs of length {4 * n + 3}")
    else:
        rng = np.random.default_rng(cfg["seed"])
        pairs = hg.random_points(rng, n, 2 * int(g["pairs"])).reshape(-1, 2, 4 * n + 3)
    cq = gr.C_Q(n)
    rows = []
    for xi, eta in pairs:
        d = float(hg.h_distance(xi, eta))
        val = float(gr.heis_green(xi, eta, cq))
        lap = float(cc.sublaplacian(gr.green_field(xi, cq), eta))
        rows.append({"xi": xi, "eta": eta, "distance": d, "G0": val,
                     "harmonicity": abs(lap) * d ** (Q + 2) / cq})
    worst = max(r["harmonicity"] for r in rows)
    code = EXIT_OK if worst < 1e-8 else EXIT_FAIL
    result = {"n": n, "C_Q": cq, "pairs": rows, "max_harmonicity": worst}
    tables = {"green.csv": (["pair", "distance", "G0", "harmonicity"],
                            [[i, r["distance"], r["G0"], r["harmonicity"]] for i, r in enumerate(rows)])}
    lines = [f"{len(rows)} pairs, C_Q {cq:.10e}, max harmonicity residual {worst:.2e}"]
    return result, code, {}, tables, lines


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="qcgeom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qcgeom {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("constants", "verify", "schottky", "nayatani", "green-eval"):
        c = sub.add_parser(name)
        c.add_argument("--n", type=int)
        c.add_argument("--seed", type=int)
        c.add_argument("--budget", type=float)
        c.add_argument("--config")
        c.add_argument("--out")
        c.add_argument("--suite", action="append")
        c.add_argument("--require-verified", action="store_true")
        c.add_argument("--delta", type=float)
    return p


def main(argv=None, structure=None):
    """Run the CLI; ``structure`` replaces the b-matrices in the algebra checks (test hook)."""
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "constants":
            out = cmd_constants(cfg)
        elif args.command == "verify":
            out = cmd_verify(cfg, structure)
        elif args.command == "schottky":
            out = cmd_schottky(cfg, args.require_verified)
        elif args.command == "nayatani":
            out = cmd_nayatani(cfg, args.require_verified)
        else:
            out = cmd_green_eval(cfg)
    except UsageError as exc:
        print(f"qcgeom: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result, code, run_info, tables, lines = out
    for line in lines:
        print(line)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        stem = args.command.replace("-", "_")
        dump_json(make_report(args.command, cfg, result, code, run_info), outdir / f"{stem}.json")
        for fname, table in tables.items():
            if callable(table):
                table(outdir / fname)
            elif fname.endswith(".json"):
                dump_json(_clean(table), outdir / fname)
            else:
                write_csv(outdir / fname, *table)
    return code


if __name__ == "__main__":
    sys.exit(main())
