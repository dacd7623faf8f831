"""Command-line entry point: ``halfspace-heat {kernel,validate,fit,sobolev,scaling}``.

Each verb reads a JSON config (see :mod:`halfspace_heat.config`), writes CSV
data and a JSON report into ``--out`` and exits with

* 0 when every requested check passes,
* 1 when a check fails,
* 2 on an invalid configuration (a JSON error naming the key goes to stderr),
* 3 when the output directory is non-empty and ``--force`` is missing,
* 4 when the linear solver fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds, sobolev
from .config import COMMANDS, ConfigError, RunConfig, grid_spec, load_config
from .domain import GridSpec, PhiParams, build_grid, phi_derivative_constant
from .operator import GeneralCoeffs, assemble, assemble_general
from .reference import bessel_heat_kernel, product_kernel
from .reporting import check, write_csv, write_report
from .semigroup import Propagator, SolverError, check_scaling, kernel_slice


class OutputRefused(RuntimeError):
    pass


def _fmt(v) -> str:
    return f"{v:g}"


def _assemble(cfg: RunConfig, grid):
    op = cfg.operator
    if isinstance(op, GeneralCoeffs):
        if np.any(op.b != 0):
            raise ConfigError("operator.b", "kernels with oblique drift are produced by 'fit' with check 'oblique'")
        return assemble_general(grid, op)
    return assemble(grid, op)


def _param_columns(cfg: RunConfig):
    op = cfg.operator
    if isinstance(op, GeneralCoeffs):
        names = ["c"] + [f"q_{i + 1}" for i in range(op.N)] + ["gamma"]
        return names, [op.c, *op.q.tolist(), op.gamma]
    return ["c"] + [f"a_{i + 1}" for i in range(op.N)], [op.c, *op.a]


def _coord_names(N):
    return [f"x{i + 1}" for i in range(N)] + ["y"]


def cmd_kernel(cfg: RunConfig, out: Path):
    exp = cfg.experiment
    grid = build_grid(cfg.grid)
    op = _assemble(cfg, grid)
    prop = Propagator(op if exp["side"] == "forward" else op.adjoint(), cfg.propagation)
    pnames, pvals = _param_columns(cfg)
    coords = grid.coordinates()
    files, checks = [], []
    for i, t in enumerate(exp["t"]):
        for j, src in enumerate(exp["sources"]):
            sl = kernel_slice(op, src, t, cfg.propagation, exp["side"], prop, exp["source"])
            header = ["t"] + [f"src_{n}" for n in _coord_names(grid.N)] + pnames \
                + _coord_names(grid.N) + ["p", "valid"]
            fixed = [t, *sl.z_src.tolist(), *pvals]
            rows = ([*fixed, *z.tolist(), float(p), int(v)]
                    for z, p, v in zip(coords, sl.values, sl.mask))
            name = f"kernel_t{i}_src{j}.csv"
            digest = write_csv(out / name, header, rows)
            files.append({"file": name, "sha256": digest, "t": t, "source_requested": src,
                          "source_used": sl.z_src.tolist(), "side": exp["side"], "flags": sl.flags,
                          "masked_mass": sl.mass(), "min": float(sl.values.min()),
                          "max": float(sl.values.max())})
            ratio = float(sl.values.min() / np.abs(sl.values).max())
            checks.append(check(f"positivity t={_fmt(t)} src={j}", ratio, -1e-8, ratio >= -1e-8, ">="))
    results = {"files": files, "monotone_stencil": bool(op.info["monotone"]),
               "max_solver_residual": prop.max_residual}
    return "manifest.json", results, checks


def _oracle(cfg: RunConfig, c):
    if cfg.N == 0:
        return lambda t, z1, z2: bessel_heat_kernel(t, z1[..., -1], z2[..., -1], c)
    if np.any(np.asarray(cfg.operator.a) != 0):
        raise ConfigError("operator.a", "the product-kernel oracle needs a = 0")
    return lambda t, z1, z2: product_kernel(t, z1, z2, c)


def cmd_validate(cfg: RunConfig, out: Path):
    exp = cfg.experiment
    c = cfg.operator.c
    c_oracle = c if exp["oracle_c"] is None else float(exp["oracle_c"])
    oracle = _oracle(cfg, c_oracle)
    base = cfg.grid
    t = exp["t"]
    rows, errs = [], []
    for ny in exp["levels"]:
        nx = max(2, round(ny * base.nx / base.ny)) if base.N else base.nx
        spec = GridSpec(N=base.N, Ly=base.Ly, ny=ny, c=base.c, Lx=base.Lx, nx=nx, grading=base.grading)
        grid = build_grid(spec)
        op = assemble(grid, cfg.operator)
        sl = kernel_slice(op, exp["source"], t, cfg.propagation, "forward")
        exact = oracle(t, grid.coordinates(), sl.z_src[None, :])
        m = sl.mask & (exact > 0)
        rel = np.abs(sl.values[m] - exact[m]) / exact[m]
        errs.append(float(rel.max()))
        rows.append([ny, nx, float(rel.max()), float(rel.mean()), int(m.sum())])
    write_csv(out / "levels.csv", ["ny", "nx", "max_rel_error", "mean_rel_error", "n_masked"], rows)
    lv = exp["levels"]
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(lv[i + 1] / lv[i]) for i in range(len(lv) - 1)]
    checks = [check("max relative error (finest level)", errs[-1], exp["max_rel_error"],
                    errs[-1] <= exp["max_rel_error"])]
    if exp["min_order"] is not None:
        checks.append(check("convergence order (minimum over level pairs)", min(orders), exp["min_order"],
                            min(orders) >= exp["min_order"], ">="))
    results = {"oracle": "bessel" if cfg.N == 0 else "product", "oracle_c": c_oracle,
               "levels": [dict(zip(["ny", "nx", "max_rel_error", "mean_rel_error", "n_masked"], r))
                          for r in rows],
               "orders": orders}
    return "report.json", results, checks


def _slices_by_t(cfg: RunConfig, op, sources, times):
    prop = Propagator(op.adjoint(), cfg.propagation)
    return {t: [kernel_slice(op, z, t, cfg.propagation, "adjoint", prop) for z in sources] for t in times}


def cmd_fit(cfg: RunConfig, out: Path):
    exp = cfg.experiment
    c = cfg.operator.c
    env_c = c if exp["envelope_c"] is None else float(exp["envelope_c"])
    kind = exp["check"]
    a = list(getattr(cfg.operator, "a", [])) if not isinstance(cfg.operator, GeneralCoeffs) else None
    checks = []
    if kind == "oblique":
        rep = bounds.check_oblique_kernel(cfg.operator, exp["t"][0], exp["sources"][0], exp["probes"],
                                          cfg.grid, cfg.propagation)
        env = rep.oblique_envelope
        finite = bool(np.isfinite(env.C) and np.isfinite(env.k) and env.C > 0)
        checks.append(check("two-way deviation", rep.deviation, exp["max_deviation"],
                            rep.deviation <= exp["max_deviation"]))
        checks.append(check("oblique envelope constants finite", [env.C, env.k], "finite", finite, "is"))
        rows = [[*z.tolist(), d, s] for z, d, s in zip(rep.probes, rep.direct, rep.sheared)]
        write_csv(out / "oblique_probes.csv", _coord_names(cfg.N) + ["p_direct", "p_sheared"], rows)
        results = {"deviation": rep.deviation, "sheared_fit": rep.sheared_fit.report(),
                   "oblique_envelope": {"C": env.C, "k": env.k, "max_ratio": rep.oblique_max_ratio},
                   "lemma_constant": rep.lemma_constant, "clamped_nodes": rep.clamped}
        return "report.json", results, checks

    grid = build_grid(cfg.grid)
    op = assemble(grid, cfg.operator)
    by_t = _slices_by_t(cfg, op, exp["sources"], exp["t"])
    if kind == "fit":
        fit = bounds.fit_envelope([s for v in by_t.values() for s in v], exp["form"], env_c)
        e = fit.envelope
        finite = bool(np.isfinite(e.C) and e.C > 0 and np.isfinite(e.k))
        checks.append(check("finite (C, k)", [e.C, e.k], "finite", finite, "is"))
        checks.append(check("masked max ratio", fit.max_ratio, 1.0, fit.max_ratio <= 1 + 1e-9))
        results = {"fits": [fit.report(a)]}
    elif kind == "stability":
        rep = bounds.check_envelope_stability(by_t, exp["form"], env_c, threshold=exp["threshold"])
        checks.append(check("C stability ratio", rep.C_ratio, exp["threshold"], rep.C_ratio <= exp["threshold"]))
        checks.append(check("k stability ratio", rep.k_ratio, exp["threshold"], rep.k_ratio <= exp["threshold"]))
        results = {"fits": [f.report(a) for f in rep.fits.values()], "C_ratio": rep.C_ratio,
                   "k_ratio": rep.k_ratio, "envelope_c": env_c}
    else:
        phi = PhiParams(c)
        rep = bounds.check_tilde_relation([s for v in by_t.values() for s in v], phi)
        checks.append(check("tilde C uniformity ratio", rep.uniform_ratio, exp["threshold"],
                            rep.uniform_ratio <= exp["threshold"]))
        checks.append(check("raw kernel over tilde envelope", rep.raw_over_tilde, exp["min_raw_over_tilde"],
                            rep.raw_over_tilde >= exp["min_raw_over_tilde"], ">="))
        results = {"fits": [rep.tilde_fit.report(a)], "per_t_C": {_fmt(k): v for k, v in rep.per_t_C.items()},
                   "raw_over_tilde": rep.raw_over_tilde, "raw_tilde_fit": rep.raw_tilde_fit.report(a),
                   "phi": {"lo": phi.lo, "hi": phi.hi, "C0": phi_derivative_constant(phi)}}
    return "report.json", results, checks


def _scan_rows(res, extra=None):
    extra = extra or {}
    for i, row in enumerate(res.rows()):
        yield [row["family"], row["x0"], row["R"], row["y0"], row["H"], row["quotient"],
               *[v[i] for v in extra.values()]]


def cmd_sobolev(cfg: RunConfig, out: Path):
    exp = cfg.experiment
    N, c = cfg.N, cfg.operator.c
    fam = sobolev.make_family(N, exp["n"], cfg.seed, tuple(exp["families"]))
    header = ["family", "x0", "R", "y0", "H", "quotient"]
    checks, summaries = [], []
    for i, sc in enumerate(exp["scans"]):
        kind = sc["quotient"]
        extra = {}
        summary = {"quotient": kind}
        if kind == "sobolev":
            params = sobolev.SobolevParams(N, c, float(sobolev.sobolev_exponent(N, c)))
            res = sobolev.scan(fam, lambda d: sobolev.quotient_sobolev(d, params))
            drift = []
            for u, q0 in zip(fam, res.quotients):
                drift.append(max(abs(sobolev.quotient_sobolev(u.dilate(s), params) / q0 - 1)
                                 for s in sc["scales"]))
            extra["dilation_drift"] = drift
            summary.update(q=params.q, max_dilation_drift=max(drift))
            checks.append(check(f"scan {i}: dilation drift", max(drift), sc["max_drift"],
                                max(drift) <= sc["max_drift"]))
        elif kind == "gn":
            params = sobolev.SobolevParams(N, c, float(sc["q"]))
            res = sobolev.scan(fam, lambda d: sobolev.quotient_gn(d, params, sc["measure"], sc["theta"],
                                                                  sc["full_norm"]))
            summary.update(q=params.q, theta=params.theta if sc["theta"] is None else sc["theta"])
        elif kind == "holder":
            params = sobolev.SobolevParams(N, c, float(sc["q"]))
            pairs = [sobolev.holder_chain(sobolev.FunctionData(u), params) for u in fam]
            lhs = np.array([p[0] for p in pairs])
            rhs = np.array([p[1] for p in pairs])
            res = sobolev.ScanResult(fam, lhs / rhs)
            extra["lhs"], extra["rhs"] = lhs.tolist(), rhs.tolist()
            worst = float(np.max(lhs / rhs))
            checks.append(check(f"scan {i}: Holder chain lhs/rhs", worst, 1 + 1e-12, worst <= 1 + 1e-12))
            summary.update(q=params.q, max_lhs_over_rhs=worst)
        elif kind == "mazya":
            res = sobolev.scan(fam, lambda d: sobolev.quotient_mazya(d, float(sc["alpha"]), float(sc["beta"]),
                                                                     float(sc["q"]), sc["p"]))
            summary.update(p=sc["p"], alpha=sc["alpha"], beta=sc["beta"], q=sc["q"])
        else:
            params = sobolev.SobolevParams(N, c, float(sc["q"]), r=float(sc["r"]))
            local = sobolev.make_family(N, exp["n"], cfg.seed, tuple(exp["families"]), max_height=params.r)
            res = sobolev.local_embedding_check(params, local).scan
            summary.update(q=params.q, r=params.r)
        for key in ("q", "theta", "alpha", "beta", "r"):
            if key in summary:
                extra[key] = [float(summary[key])] * len(res.functions)
        sup = res.empirical_sup
        summary.update(empirical_sup=sup, file=f"scan_{i}.csv")
        checks.append(check(f"scan {i} ({kind}): empirical sup finite", sup, "finite", bool(np.isfinite(sup)), "is"))
        write_csv(out / f"scan_{i}.csv", header + list(extra), _scan_rows(res, extra))
        summaries.append(summary)
    results = {"N": N, "c": c, "critical_exponent": _num(sobolev.sobolev_exponent(N, c)), "scans": summaries}
    if exp["witness"] is not None:
        w = sobolev.global_failure_witness(N, c, exp["witness"]["scales"])
        write_csv(out / "witness.csv", ["s", "quotient"], zip(w.scales.tolist(), w.quotients.tolist()))
        results["witness"] = {"q": _num(w.q), "growth": w.growth, "exponent": w.exponent,
                              "expected_exponent": w.expected_exponent, "file": "witness.csv"}
        thr = exp["witness"]["min_growth"]
        checks.append(check("witness growth", w.growth, thr, w.growth >= thr, ">="))
    return "summary.json", results, checks


def _num(v):
    return float(v) if v != math.inf else "inf"


def cmd_scaling(cfg: RunConfig, out: Path):
    exp = cfg.experiment
    s, t = float(exp["s"]), exp["t"]
    probes = [(np.asarray(a), np.asarray(b)) for a, b in exp["probes"]]
    c = cfg.operator.c
    if exp["oracle"]:
        oracle = _oracle(cfg, c)
        base = np.array([oracle(t, z1, z2) for z1, z2 in probes], dtype=float).ravel()
        scaled = np.array([s ** (cfg.N + 1 + c) * oracle(s * s * t, s * z1, s * z2)
                           for z1, z2 in probes], dtype=float).ravel()
        dev = float(np.max(np.abs(scaled - base) / np.abs(base)))
        thr = 1e-12
    else:
        sspec = None
        if exp["scaled_grid"] is not None:
            sspec, _ = grid_spec(exp["scaled_grid"], cfg.N, c, "experiment.scaled_grid")
        rep = check_scaling(cfg.grid, cfg.operator, t, s, probes, cfg.propagation, sspec)
        base, scaled, dev = rep.p_base, rep.p_scaled, rep.deviation
        thr = exp["max_deviation"]
    names = _coord_names(cfg.N)
    write_csv(out / "probes.csv", [f"z1_{n}" for n in names] + [f"z2_{n}" for n in names] + ["p", "p_scaled"],
              ([*a.tolist(), *b.tolist(), p, q] for (a, b), p, q in zip(probes, base, scaled)))
    results = {"s": s, "t": t, "deviation": dev, "oracle": bool(exp["oracle"]),
               "p": base.tolist(), "p_scaled": scaled.tolist()}
    return "report.json", results, [check("scaling deviation", dev, thr, dev <= thr)]


COMMAND_FUNCS = {"kernel": cmd_kernel, "validate": cmd_validate, "fit": cmd_fit,
                 "sobolev": cmd_sobolev, "scaling": cmd_scaling}


def prepare_output(path, force: bool) -> Path:
    out = Path(path)
    if out.exists():
        if not out.is_dir():
            raise OutputRefused(f"{out} exists and is not a directory")
        if any(out.iterdir()) and not force:
            raise OutputRefused(f"{out} is not empty; pass --force to write into it")
    out.mkdir(parents=True, exist_ok=True)
    return out


def run(command: str, cfg: RunConfig, force: bool = False) -> dict:
    """Execute ``command`` and write its outputs; returns the JSON report."""
    if cfg.out_dir is None:
        raise ConfigError("--out", "no output directory given (use --out or output.dir)")
    out = prepare_output(cfg.out_dir, force)
    try:
        name, results, checks = COMMAND_FUNCS[command](cfg, out)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("experiment", str(exc)) from None
    return write_report(out / name, command, cfg.resolved, results, checks)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="halfspace-heat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"kernel": "write kernel slices as CSV", "validate": "compare with exact kernels",
             "fit": "fit and check Gaussian envelopes", "sobolev": "scan Sobolev-type quotients",
             "scaling": "check the parabolic scaling law"}
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
        sp.add_argument("--force", action="store_true", help="write into a non-empty output directory")
        sp.add_argument("--seed", type=int, help="seed for random scans (overrides the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command, args.out, args.seed)
        report = run(args.command, cfg, args.force)
    except ConfigError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except OutputRefused as exc:
        print(json.dumps({"error": "output", "message": str(exc)}), file=sys.stderr)
        return 3
    except SolverError as exc:
        print(json.dumps({"error": "solver", "message": str(exc)}), file=sys.stderr)
        return 4
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']} {c['relation']} {c['threshold']}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
