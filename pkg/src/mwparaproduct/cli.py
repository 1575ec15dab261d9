"""Command line entry point.

    mwparaproduct <command> --config cfg.json [--out DIR] [--seed S] [--threads K]

Commands: analyze-weight, stopping-time, paraproduct-test, haar-selftest, apply.
Reports go to ``DIR/<command>.json`` plus CSV tables; stdout receives one
JSON status line, progress goes to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, parse_config
from .dyadic import StepFunction, haar_analysis, haar_synthesis, read_csv, write_csv
from .errors import ConfigError, ToolkitError
from .estimators import boundedness_sweep, make_operator
from .operators import SymbolCoefficients, dyadic_maximal, square_function
from .reducing import ap_characteristic, ap_depth_profile, reverse_holder_profile, reverse_holder_scan
from .stopping import StoppingConfig, build_stopping_tree, cotlar_matrix, lambda_ladder
from .weights import make_weight

log = logging.getLogger("mwparaproduct")

COMMANDS = ("analyze-weight", "stopping-time", "paraproduct-test", "haar-selftest", "apply")
THREADS_ENV = "MWPARAPRODUCT_THREADS"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_analyze_weight(cfg: Config, out: Path, threads: int):
    W = make_weight(cfg.family, cfg.N, cfg.sampling)
    log.info("analyze-weight: N=%d depth=%d n=%d", cfg.N, cfg.depth, W.n)
    ap = ap_characteristic(W, cfg.p, cfg.depth, cfg.backend, seed=cfg.seed)
    result = {"ap": ap.to_dict(), "x0_effective": W.meta.get("x0_effective")}
    files = {}
    if cfg.depths:
        profile = ap_depth_profile(cfg.family, cfg.p, cfg.depths, cfg.backend, cfg.sampling, seed=cfg.seed)
        rh = reverse_holder_profile(cfg.family, cfg.p, cfg.q_grid, cfg.depths, cfg.backend, cfg.sampling,
                                    cfg.blowup, seed=cfg.seed)
        result["ap_depth_profile"] = [r.to_dict() for r in profile]
        rows = []
        for r in profile:
            for lv in r.per_level:
                rows.append([r.depth, lv["level"], lv["characteristic"], lv["strong_product"]])
        _write_csv(out / "ap_depths.csv", ["depth", "level", "characteristic", "strong_product"], rows)
        files["ap_depths"] = "ap_depths.csv"
    else:
        rh = reverse_holder_scan(W, cfg.p, cfg.q_grid, cfg.depth, cfg.backend, seed=cfg.seed)
    result["reverse_holder"] = rh.to_dict()
    _write_csv(out / "ap_levels.csv", ["level", "characteristic", "strong_product"],
               [[lv["level"], lv["characteristic"], lv["strong_product"]] for lv in ap.per_level])
    _write_csv(out / "reverse_holder.csv", ["q", "dual", "primal", "dual_normalized", "primal_normalized"],
               zip(rh.q_grid, rh.dual_constants, rh.primal_constants, rh.dual_normalized, rh.primal_normalized))
    files.update(ap_levels="ap_levels.csv", reverse_holder="reverse_holder.csv")
    return result, files


def cmd_stopping_time(cfg: Config, out: Path, threads: int):
    W = make_weight(cfg.family, cfg.N, cfg.sampling)
    scfg = StoppingConfig(cfg.lam, cfg.max_generations, cfg.p, cfg.backend, cfg.lambda_factor)
    tree, report = build_stopping_tree(W, cfg.p, scfg)
    log.info("stopping-time: %d generations, rate %.4g", tree.generations, report.rate)
    result = {"tree": tree.to_dict(), "decay": report.to_dict()}
    if cfg.lambda_ladder:
        result["lambda_ladder"] = lambda_ladder(W, cfg.p, cfg.lambda_ladder, cfg.backend)
    if cfg.cotlar_samples:
        rng = np.random.default_rng(cfg.seed)
        reps = []
        for _ in range(cfg.cotlar_samples):
            f = StepFunction(rng.standard_normal((2**cfg.N, W.n)))
            reps.append(cotlar_matrix(W, cfg.p, f, tree).to_dict())
        result["cotlar"] = reps
    rows = []
    for j in range(tree.generations + 1):
        nJ = len(tree.J[j]) if j < len(tree.J) else 0
        mu = report.mu[j] if j < len(report.mu) else 0.0
        rows.append([j, nJ, len(tree.F(j)), mu])
    _write_csv(out / "generations.csv", ["j", "J_count", "F_count", "mu"], rows)
    return result, {"generations": "generations.csv"}


def cmd_paraproduct_test(cfg: Config, out: Path, threads: int):
    rep = boundedness_sweep(
        cfg.family, cfg.p, cfg.operator, cfg.resolutions, corpus_size=cfg.corpus_size, seed=cfg.seed,
        backend=cfg.backend, method=cfg.method, thresholds=cfg.thresholds, threads=threads,
        sampling=cfg.sampling, starts=cfg.starts, max_iter=cfg.max_iter, tol=cfg.tol,
    )
    rows = []
    for N, est, row in zip(rep.resolutions, rep.estimates, rep.per_symbol):
        for k, e in enumerate(row):
            rows.append([N, k, e.seed, e.method, e.value, est])
    _write_csv(out / "sweep.csv", ["N", "symbol", "seed", "method", "estimate", "max_estimate"], rows)
    return rep.to_dict(), {"sweep": "sweep.csv"}


def haar_selftest(N: int, samples: int, seed: int) -> dict:
    """Round trip, Parseval and orthonormality on random functions."""
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((2**N, samples))
    mean, coeffs = haar_analysis(F)
    back = haar_synthesis(mean, coeffs)
    roundtrip = float(np.abs(back - F).max())
    energy = mean**2 + sum(np.sum(c**2, axis=0) for c in coeffs)
    parseval = float(np.max(np.abs(energy - np.mean(F**2, axis=0)) / np.mean(F**2, axis=0)))
    # Gram matrix of the constant and all Haar functions in the normalised measure
    D = 2**N
    _, basis = haar_analysis(np.eye(D) * D)
    H = np.vstack([np.ones((1, D))] + [c for c in basis])
    ortho = float(np.abs(H @ H.T / D - np.eye(D)).max())
    checks = {
        "roundtrip": {"value": roundtrip, "tol": 1e-12},
        "parseval": {"value": parseval, "tol": 1e-10},
        "orthonormality": {"value": ortho, "tol": 1e-12},
    }
    for c in checks.values():
        c["pass"] = c["value"] <= c["tol"]
    return {"N": N, "samples": samples, "seed": seed, "checks": checks,
            "pass": all(c["pass"] for c in checks.values())}


def cmd_haar_selftest(cfg: Config, out: Path, threads: int):
    res = haar_selftest(cfg.N, cfg.samples, cfg.seed)
    _write_csv(out / "haar_selftest.csv", ["check", "value", "tol", "pass"],
               [[k, v["value"], v["tol"], v["pass"]] for k, v in res["checks"].items()])
    return res, {"haar_selftest": "haar_selftest.csv"}


def cmd_apply(cfg: Config, out: Path, threads: int):
    if not cfg.input:
        raise ConfigError("apply needs 'input' (a CSV step function)")
    f = read_csv(cfg.input)
    name = cfg.operator
    if name == "square":
        g = square_function(f)
    elif name == "maximal":
        g = dyadic_maximal(f)
    else:
        W = make_weight(cfg.family, f.resolution, cfg.sampling)
        sym = None
        if cfg.symbol:
            sym = SymbolCoefficients.from_function(read_csv(cfg.symbol))
        x = f.values if f.values.ndim == 2 else f.values[:, None]
        op = make_operator(name, W, cfg.p, sym, cfg.backend)
        g = StepFunction(op.matvec(x))
    write_csv(g, out / "output.csv")
    return {"operator": name, "resolution": f.resolution, "output": "output.csv"}, {"output": "output.csv"}


HANDLERS = {
    "analyze-weight": cmd_analyze_weight,
    "stopping-time": cmd_stopping_time,
    "paraproduct-test": cmd_paraproduct_test,
    "haar-selftest": cmd_haar_selftest,
    "apply": cmd_apply,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def run(command: str, cfg: Config, out: Path, threads: int = 1) -> dict:
    """Execute ``command`` and write its report; returns the report dict."""
    out.mkdir(parents=True, exist_ok=True)
    result, files = HANDLERS[command](cfg, out, threads)
    report = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "result": result,
        "files": files,
    }
    (out / f"{command}.json").write_text(_dump(report))
    return report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mwparaproduct", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory (default: config 'out' or '.')")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
        sp.add_argument("-q", "--quiet", action="store_true", help="suppress progress on stderr")
    return ap


def _error(err: Exception, code: int) -> int:
    if isinstance(err, ToolkitError):
        payload = err.to_dict()
    else:
        payload = {"error": "internal", "message": f"{type(err).__name__}: {err}"}
    sys.stdout.write(json.dumps({"status": "error", **payload}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s")
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    try:
        if args.config:
            text = Path(args.config).read_text()
        elif args.command == "haar-selftest":
            text = "{}"
        else:
            raise ConfigError(f"{args.command} needs --config")
        raw = json.loads(text) if text.strip() else {}
        if args.command == "haar-selftest" and isinstance(raw, dict) and "family" not in raw:
            raw["family"], raw["matrix"] = "constant", [[1.0]]
            text = json.dumps(raw)
        overrides = {"seed": args.seed} if args.seed is not None else {}
        cfg = parse_config(text, overrides)
        out = Path(args.out or cfg.out or ".")
        report = run(args.command, cfg, out, max(1, threads))
    except ToolkitError as err:
        return _error(err, 2)
    except (OSError, json.JSONDecodeError) as err:
        return _error(ConfigError(str(err)), 2)
    except Exception as err:  # noqa: BLE001 - reported as JSON, not a traceback
        log.debug("internal error", exc_info=True)
        return _error(err, 3)
    status = {"status": "ok", "command": args.command, "report": str(out / f"{args.command}.json")}
    if args.command == "haar-selftest" and not report["result"]["pass"]:
        status["status"] = "failed"
        sys.stdout.write(json.dumps(status, sort_keys=True) + "\n")
        return 1
    sys.stdout.write(json.dumps(status, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
