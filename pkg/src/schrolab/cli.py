"""Command line entry point: ``schrolab <command> --config run.json``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .io import read_csv, write_field
from .lab.config import ConfigError, ExperimentConfig, number
from .lab.fit import MODELS, fit_records
from .lab.gaps import gap_explorer, gap_records
from .lab.report import emit_report
from .lab.sweep import COLUMNS as SWEEP_COLUMNS
from .lab.sweep import run_stability_sweep

log = logging.getLogger("schrolab")


def _fail(rec: dict, exc: Exception) -> dict:
    rec["status"] = f"error: {exc}"
    return rec


def cmd_forward(cfg: ExperimentConfig, args) -> tuple[list, list, dict, list]:
    from .bvp import ImpedanceSolver, ImpedanceSpec, neumann_trace, solve_dirichlet
    from .dtn import BoundarySobolev
    from .spectral import Resolvent, amplification, assemble_schrodinger, spectral_window

    grid = cfg.grid()
    q = cfg.q0(grid)
    opts = cfg.section("forward")
    rng = np.random.default_rng(cfg.seed)
    if opts.get("data", "random") == "random":
        phi = BoundarySobolev.full(grid).random_smooth(rng, int(opts.get("modes", 4)))
    else:
        phi = grid.boundary_trace(lambda *x: np.exp(x[0]))
    rows, files = [], []
    A = assemble_schrodinger(grid, q)
    for i, lam in enumerate(cfg.lambdas):
        rec = {"lambda_index": i, "lambda": lam, "mode": cfg.mode}
        try:
            if cfg.mode == "dirichlet":
                R = Resolvent(A, lam)
                u = solve_dirichlet(grid, q, lam, phi, resolvent=R)
                rec["e"] = amplification(lam, [spectral_window(A, lam, 6, grid)]).e
                dn = neumann_trace(grid, u, phi)
            else:
                imp = cfg.raw["impedance"]
                spec = ImpedanceSpec(float(imp.get("a", 1.0)), lam, int(imp.get("sign", 1)))
                u, ub = ImpedanceSolver(grid, q, spec).solve(None, phi)
                dn = ub
            rec.update(u_l2=grid.l2_norm(u), trace_max=float(np.max(np.abs(dn))), status="ok")
            name = f"u_{i}.bin"
            write_field(cfg.out / name, u, grid, **{"lambda": lam})
            files += [name, name + ".json"]
        except Exception as exc:  # noqa: BLE001 - reported per record
            _fail(rec, exc)
        rows.append(rec)
    cols = ["lambda_index", "lambda", "mode", "status", "u_l2", "trace_max", "e"]
    return rows, cols, {}, files


def cmd_dtn(cfg: ExperimentConfig, args):
    from .bvp import ImpedanceSpec
    from .dtn import assemble_dtn, assemble_impedance_map, operator_norm

    grid = cfg.grid()
    q = cfg.q0(grid)
    gamma, sigma = cfg.patch("gamma", grid), cfg.patch("sigma", grid)
    kind = cfg.section("dtn").get("kind", "lambda0" if cfg.mode == "dirichlet" else "n0")
    rows, files = [], []
    for i, lam in enumerate(cfg.lambdas):
        rec = {"lambda_index": i, "lambda": lam, "kind": kind}
        try:
            if kind.startswith("lambda"):
                M = assemble_dtn(grid, q, lam, kind, gamma, sigma, max_modes=cfg.raw.get("max_modes"))
            else:
                imp = cfg.raw["impedance"]
                spec = ImpedanceSpec(float(imp.get("a", 1.0)), lam, int(imp.get("sign", 1)))
                M = assemble_impedance_map(grid, q, spec, kind, gamma, sigma, max_modes=cfg.raw.get("max_modes"))
            rec.update(rows=M.matrix.shape[0], cols=M.matrix.shape[1], norm=operator_norm(M), status="ok")
            name = f"map_{i}.bin"
            M.save(cfg.out / name)
            files += [name, name + ".json"]
        except Exception as exc:  # noqa: BLE001
            _fail(rec, exc)
        rows.append(rec)
    return rows, ["lambda_index", "lambda", "kind", "status", "rows", "cols", "norm"], {}, files


def cmd_cgo(cfg: ExperimentConfig, args):
    from .cgo import decay_probe

    grid = cfg.grid()
    part = cfg.partition(grid)
    opts = cfg.section("cgo")
    q = cfg.q0(grid) + number(opts.get("amplitude", 0.5)) * cfg.shape(grid, part)
    eta = [number(v) for v in opts.get("eta", [0, 0, 0])]
    rows, fits = [], {}
    for i, lam in enumerate(cfg.lambdas):
        try:
            res = decay_probe(grid, q, lam, cfg.taus, part, eta=eta, seed=opts.get("seed"), kappa=number(opts.get("kappa", float(np.max(np.abs(q))))))
            for r in res["rows"]:
                rows.append({"lambda": lam, **r, "status": "ok"})
            fits[f"lambda_{i}"] = {"lambda": lam, "slope": res["slope"], "C": res["C"]}
        except Exception as exc:  # noqa: BLE001
            rows.append(_fail({"lambda": lam}, exc))
    cols = ["lambda", "tau", "im_xi", "w_norm", "method", "iterations", "residual", "status"]
    return rows, cols, fits, []


def cmd_runge(cfg: ExperimentConfig, args):
    from .bvp import ImpedanceSolver, ImpedanceSpec, solve_dirichlet
    from .dtn import BoundarySobolev
    from .runge import assemble_restriction, decompose, tradeoff_curve

    grid = cfg.grid()
    part = cfg.partition(grid)
    gamma = cfg.patch("gamma", grid)
    q = cfg.q0(grid)
    opts = cfg.section("runge")
    lam = cfg.lambdas[0]
    window = gamma.mask.astype(float)
    spec = None
    if cfg.mode == "impedance":
        imp = cfg.raw["impedance"]
        spec = ImpedanceSpec(float(imp.get("a", 1.0)), lam, int(imp.get("sign", 1)))
    op = assemble_restriction(grid, q, lam, window, part, cfg.mode, spec, cfg.raw.get("max_modes"))
    dec = decompose(op)
    rng = np.random.default_rng(cfg.seed)
    phi = BoundarySobolev(gamma).random_smooth(rng, int(opts.get("modes", 3))) * window
    if cfg.mode == "dirichlet":
        u = solve_dirichlet(grid, q, lam, phi)
    else:
        u = ImpedanceSolver(grid, q, spec).solve(None, phi)[0]
    count = int(opts.get("points", 12))
    top = dec.taus[0]
    low = dec.taus[min(len(dec.taus) - 1, int(opts.get("depth", 40)))]
    ts = np.geomspace(top * 1.01, low * 0.99, count)
    rows = tradeoff_curve(u, dec, ts, op)
    for r in rows:
        r["status"] = "ok"
    fits = {"taus": dec.taus[:50].tolist(), "dropped": dec.dropped}
    return rows, ["t", "err", "datum_norm", "v_H2_norm", "err_direct", "status"], fits, []


def cmd_reconstruct(cfg: ExperimentConfig, args):
    from .reconstruct import reconstruct

    grid = cfg.grid()
    part = cfg.partition(grid)
    opts = cfg.section("reconstruct")
    q0 = cfg.q0(grid)
    q1 = q0 + number(opts.get("amplitude", 0.5)) * cfg.shape(grid, part)
    mode = opts.get("mode", "oracle")
    rows, files = [], []
    pool = ThreadPoolExecutor(args.threads) if args.threads > 1 else None
    try:
        for i, lam in enumerate(cfg.lambdas):
            for j, tau in enumerate(cfg.taus):
                rec = {"lambda": lam, "tau": tau, "mode": mode}
                try:
                    res = reconstruct(grid, q1, q0, lam, tau, part, mode, executor=pool)
                    rec.update(
                        s=res["samples"].s,
                        n_samples=len(res["samples"].etas),
                        abs_error=res["abs_error"],
                        rel_error=res["rel_error"],
                        imag_residue=res["reconstruction"].imag_residue,
                        status="ok",
                    )
                    name = f"samples_{i}_{j}.csv"
                    res["samples"].to_csv(cfg.out / name)
                    files.append(name)
                except Exception as exc:  # noqa: BLE001
                    _fail(rec, exc)
                rows.append(rec)
    finally:
        if pool:
            pool.shutdown()
    cols = ["lambda", "tau", "mode", "status", "s", "n_samples", "abs_error", "rel_error", "imag_residue"]
    return rows, cols, {}, files


def _sweep_fits(rows: list[dict]) -> dict:
    fits = {}
    for key, model in (("map_diff", "double-log"), ("map1_diff", "single-log")):
        try:
            fits[f"{key}:{model}"] = fit_records(rows, model, key).as_dict()
        except ValueError as exc:
            fits[f"{key}:{model}"] = {"error": str(exc)}
    return fits


def cmd_sweep(cfg: ExperimentConfig, args):
    rows = run_stability_sweep(cfg, threads=args.threads, full_data=cfg.section("sweep").get("full_data", True))
    return rows, SWEEP_COLUMNS, _sweep_fits(rows), []


def cmd_fit(cfg: ExperimentConfig, args):
    opts = cfg.section("fit")
    path = args.input or opts.get("records")
    if not path:
        raise ConfigError("fit needs --input or fit.records")
    rows = read_csv(path)
    x_key = opts.get("x", "map_diff")
    y_key = opts.get("y", "dq_hm1")
    fits = {}
    for model in opts.get("models", ["double-log", "single-log"]):
        if model not in MODELS:
            raise ConfigError(f"unknown model {model!r}")
        try:
            fits[model] = fit_records(rows, model, x_key, y_key).as_dict()
        except ValueError as exc:
            fits[model] = {"error": str(exc)}
    out_rows = [{"model": m, "C": f.get("C"), "r2": f.get("r2"), "kendall_tau": f.get("kendall_tau"),
                 "status": "ok" if "error" not in f else f"error: {f['error']}"} for m, f in fits.items()]
    return out_rows, ["model", "status", "C", "r2", "kendall_tau"], fits, []


def cmd_gaps(cfg: ExperimentConfig, args):
    opts = cfg.section("gaps")
    mu = [number(v) for v in opts.get("mu", [1, 1, 1])]
    K = int(opts.get("K", 100))
    res = gap_explorer(mu, K)
    rows = gap_records(res)
    for r in rows:
        r["status"] = "ok"
    fits = {
        "mu": mu,
        "K": K,
        "c": res["c"],
        "argmax_k": res["argmax_k"],
        "resonant": res["resonant"],
        "distinct": res["distinct"][:20].tolist(),
        "multiplicities": res["multiplicities"][:20].tolist(),
    }
    return rows, ["k", "lambda_k", "indices", "gap", "ratio", "product", "status"], fits, []


COMMANDS = {
    "forward": cmd_forward,
    "dtn": cmd_dtn,
    "cgo": cmd_cgo,
    "runge": cmd_runge,
    "reconstruct": cmd_reconstruct,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "gaps": cmd_gaps,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schrolab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "fit":
            p.add_argument("--input", help="records.csv to fit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.config is not None:
            cfg = ExperimentConfig.load(args.config, args.seed, args.out)
        else:
            cfg = ExperimentConfig.from_dict({}, args.seed, args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        rows, cols, fits, files = COMMANDS[args.command](cfg, args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"schrolab: {exc}", file=sys.stderr)
        return 2
    emit_report(rows, cols, fits, cfg.out, cfg.hash(), cfg.seed, args.command, files)
    bad = [r for r in rows if str(r.get("status", "ok")) not in ("ok", "degenerate")]
    for r in bad:
        log.warning("record failed: %s", r.get("status"))
    print(f"{args.command}: {len(rows) - len(bad)}/{len(rows)} records ok -> {cfg.out}")
    return 0 if not bad else 1


if __name__ == "__main__":
    sys.exit(main())
