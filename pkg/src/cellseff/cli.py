"""Command-line front end: emits CSV curves and summary tables for the SIR
distribution, spectral-efficiency distribution, coverage, spatial averages,
and the Monte-Carlo baselines.

Conventions: the front-to-back ratio is taken in dB, CSV cells carry 9
significant digits, and every file write drops a ``.manifest.json`` sidecar
with the fully resolved configuration so runs can be reproduced byte for
byte.  Exit codes: 0 success, 2 usage error, 3 numerical-tolerance failure,
4 simulation budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .montecarlo import (BudgetError, SimConfig, estimate_distribution,
                         cv_spatial_mean)
from .quadrature import ToleranceError
from .seff import (MimoConfig, coverage_quantile, curve_from_key,
                   inst_coverage_se_eta4, lognormal_fit, mean_se,
                   mean_se_cub, mean_se_general, mimo_curve, se_cdf,
                   se_quantile, siso_exact_curve)
from .sirdist import (FOUR_BRANCH, OMNI, PathModel, SectorModel,
                      sector_sir_cdf, shifted_sir_cdf, solve_s_star)

USAGE_ERROR = 2
TOLERANCE_ERROR = 3
BUDGET_ERROR = 4


def _fmt(x) -> str:
    return f"{float(x):.9g}"


def _write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_manifest(path: str, command: str, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items())
                if k not in ("func", "config")}
    doc = {"tool": "cellseff", "version": __version__, "command": command,
           "config": resolved}
    with open(path + ".manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _grid(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) not in (3, 4):
        raise ValueError(f"grid must be min:max:points[:linear|log], got {spec!r}")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    scale = parts[3] if len(parts) == 4 else "linear"
    if n < 2:
        raise ValueError("grid needs at least 2 points")
    if not lo < hi:
        raise ValueError("grid min must be below max")
    if scale == "linear":
        return np.linspace(lo, hi, n)
    if scale == "log":
        if lo <= 0:
            raise ValueError("log grid needs a positive minimum")
        return np.geomspace(lo, hi, n)
    raise ValueError(f"unknown grid scale {scale!r}")


def _eta_range(spec: str) -> np.ndarray:
    return _grid(spec + ":linear" if spec.count(":") == 2 else spec)


def _sector(args) -> SectorModel:
    if getattr(args, "sectors", 1) == 1:
        return OMNI
    return SectorModel.from_db(args.sectors, args.q_db)


def _model(args) -> PathModel:
    return PathModel(args.eta, mode=getattr(args, "mode", FOUR_BRANCH))


def _curve(args):
    if getattr(args, "curve", None):
        return curve_from_key(args.curve)
    if getattr(args, "nt", 1) == 1 and getattr(args, "nr", 1) == 1:
        return siso_exact_curve()
    return mimo_curve(MimoConfig(args.nt, args.nr))


def _sim_config(args) -> SimConfig:
    return SimConfig(
        density=args.density, shadow_sigma_db=args.sigma_db, seed=args.seed,
        n_geometries=args.n_geometries, n_fading=args.n_fading,
        n_mixture=args.n_mixture, geometry=args.geometry,
        lattice_target=args.lattice_target,
        truncate_interferers=args.truncate,
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_table_sstar(args) -> int:
    rows = []
    for eta in _eta_range(args.eta_range):
        delta = 2.0 / eta
        rows.append((eta, delta, solve_s_star(delta)))
    for eta, delta, s in rows:
        print(f"eta={eta:.3f}  delta={delta:.3f}  s_star={s:.4f}")
    if args.out:
        _write_csv(args.out, ["eta", "delta", "s_star"], rows)
        _write_manifest(args.out, "table-sstar", args)
    return 0


def cmd_table_mimo(args) -> int:
    model = PathModel(args.eta)
    rows = []
    for nt in range(1, args.max_nt + 1):
        for nr in range(1, args.max_nr + 1):
            rows.append((nt, nr, mean_se_general(MimoConfig(nt, nr), model)))
    for nt, nr, v in rows:
        print(f"nt={nt} nr={nr}  C_bar={v:.4f}")
    if args.out:
        _write_csv(args.out, ["nt", "nr", "c_bar"], rows)
        _write_manifest(args.out, "table-mimo", args)
    return 0


def cmd_sir_cdf(args) -> int:
    model = _model(args)
    sect = _sector(args)
    thetas = _grid(args.grid)
    if args.shift != 1.0:
        vals = shifted_sir_cdf(model, thetas, args.shift)
    else:
        vals = sector_sir_cdf(model, sect, thetas)
    if args.out:
        _write_csv(args.out, ["theta", "F_rho"], zip(thetas, vals))
        _write_manifest(args.out, "sir-cdf", args)
    else:
        for t, v in zip(thetas, vals):
            print(f"{_fmt(t)},{_fmt(v)}")
    return 0


def cmd_se_cdf(args) -> int:
    model = _model(args)
    sect = _sector(args)
    curve = _curve(args)
    gammas = _grid(args.grid)
    vals = se_cdf(model, curve, gammas, sect)
    header = ["gamma", "F_C"]
    cols = [gammas, vals]
    if args.with_mc:
        cfg = _sim_config(args)
        mimo = MimoConfig(args.nt, args.nr) if args.nt * args.nr > 1 else None
        est = estimate_distribution("C_analytic_of_rho", cfg, args.eta,
                                    curve=curve, sect=sect, mimo=mimo,
                                    workers=args.workers)
        xs = np.sort(est.samples)
        emp = np.searchsorted(xs, gammas, side="right") / xs.size
        header += ["F_C_mc", "mc_stderr"]
        cols += [emp, np.sqrt(np.maximum(emp * (1 - emp), 1e-12) / xs.size)]
    if args.out:
        _write_csv(args.out, header, zip(*cols))
        _write_manifest(args.out, "se-cdf", args)
    else:
        for row in zip(*cols):
            print(",".join(_fmt(v) for v in row))
    return 0


def cmd_coverage(args) -> int:
    model = _model(args)
    gamma_tail = coverage_quantile(model, args.nr, args.xi)
    curve = _curve(args)
    gamma_exact = se_quantile(model, curve, args.xi)
    print(f"tail-law quantile:  {gamma_tail:.4f} bits/s/Hz")
    print(f"exact CDF inverse:  {gamma_exact:.4f} bits/s/Hz")
    rows = [(args.xi, gamma_tail, gamma_exact)]
    header = ["xi", "gamma_tail", "gamma_exact"]
    if abs(args.eta - 4.0) < 1e-12:
        inst = inst_coverage_se_eta4(args.xi)
        print(f"instantaneous-SIR mapping (misleading): {inst:.4f} bits/s/Hz")
        rows = [(args.xi, gamma_tail, gamma_exact, inst)]
        header.append("gamma_inst_sir")
    if args.out:
        _write_csv(args.out, header, rows)
        _write_manifest(args.out, "coverage", args)
    return 0


def cmd_mean_se(args) -> int:
    sect = _sector(args)
    curve = _curve(args)
    mimo = MimoConfig(args.nt, args.nr) if args.nt * args.nr > 1 else None
    if args.eta_range:
        rows = []
        header = ["eta", "C_bar"]
        if args.with_ub:
            header.append("C_bar_ub")
        if args.with_mc:
            header += ["C_bar_exact", "ci99"]
        for eta in _eta_range(args.eta_range):
            model = PathModel(eta, mode=args.mode)
            row = [eta, mean_se(model, curve, sect=sect, density_mode=args.mode)]
            if args.with_ub:
                row.append(mean_se_cub(model))
            if args.with_mc:
                est = cv_spatial_mean("C_exact", _sim_config(args), eta,
                                      curve, mimo=mimo, workers=args.workers)
                row += [est.value, est.ci99]
            rows.append(tuple(row))
            print("  ".join(_fmt(v) for v in row))
        if args.out:
            _write_csv(args.out, header, rows)
            _write_manifest(args.out, "mean-se", args)
        return 0
    model = PathModel(args.eta, mode=args.mode)
    value = mean_se(model, curve, sect=sect, density_mode=args.mode)
    print(f"{value:.4g}")
    if sect.sectors > 1:
        print(f"per BS ({sect.sectors} sectors): {sect.sectors * value:.4g}")
    if args.out:
        _write_csv(args.out, ["eta", "C_bar"], [(args.eta, value)])
        _write_manifest(args.out, "mean-se", args)
    return 0


def cmd_lognormal(args) -> int:
    model = _model(args)
    fit = lognormal_fit(model, _curve(args), sect=_sector(args))
    print(f"mu={fit.mu:.4f}  sigma2={fit.sigma2:.4f}")
    if args.out:
        _write_csv(args.out, ["quantity", "value"],
                   [("mu", fit.mu), ("sigma2", fit.sigma2)])
        _write_manifest(args.out, "lognormal", args)
    return 0


_QUANTITIES = {"rho": "rho", "c": "C_analytic_of_rho",
               "c-exact": "C_exact", "c-ub": "C_ub"}


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    sect = _sector(args)
    mimo = MimoConfig(args.nt, args.nr) if args.nt * args.nr > 1 else None
    curve = _curve(args) if args.quantity != "rho" else None
    est = estimate_distribution(_QUANTITIES[args.quantity], cfg, args.eta,
                                curve=curve, sect=sect, mimo=mimo,
                                workers=args.workers,
                                max_std_error=args.max_stderr)
    xs, f = est.ecdf
    print(f"mean = {est.mean.value:.6g} +- {est.mean.ci99:.3g} (99% CI, "
          f"n={est.mean.n_samples})")
    if args.out:
        _write_csv(args.out, ["value", "ecdf"], zip(xs, f))
        _write_manifest(args.out, "simulate", args)
    return 0


# ---------------------------------------------------------------------------
# parser plumbing

def _add_path_args(p, eta_required=True):
    p.add_argument("--eta", type=float, default=4.0 if not eta_required else None,
                   required=eta_required, help="path-loss exponent (> 2)")
    p.add_argument("--mode", choices=["four", "three"], default="four",
                   help="CDF branch family")


def _add_sector_args(p):
    p.add_argument("--sectors", type=int, default=1, help="sectors per BS")
    p.add_argument("--q-db", dest="q_db", type=float, default=20.0,
                   help="front-to-back ratio in dB")


def _add_antenna_args(p):
    p.add_argument("--nt", type=int, default=1)
    p.add_argument("--nr", type=int, default=1)
    p.add_argument("--curve", default=None,
                   help="rate curve key (siso, siso-approx, mimo:NTxNR, "
                        "mimo-2x2-approx); default from --nt/--nr")


def _add_sim_args(p):
    p.add_argument("--geometry", choices=["ppp", "lattice"], default="ppp")
    p.add_argument("--density", type=float, default=2.0, help="BS per km^2")
    p.add_argument("--sigma-db", dest="sigma_db", type=float, default=0.0,
                   help="lattice shadowing std in dB")
    p.add_argument("--lattice-target", dest="lattice_target", type=int,
                   default=977, help="minimum lattice cell count")
    p.add_argument("--n-geometries", dest="n_geometries", type=int, default=10000)
    p.add_argument("--n-fading", dest="n_fading", type=int, default=2000)
    p.add_argument("--n-mixture", dest="n_mixture", type=int, default=512)
    p.add_argument("--truncate", type=int, default=None,
                   help="keep only the strongest interferers")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="parallel workers (default: CELLSEFF_WORKERS or all cores)")
    p.add_argument("--max-stderr", dest="max_stderr", type=float, default=None,
                   help="fail (exit 4) if the mean's std error exceeds this")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cellseff",
        description="Ergodic spectral efficiency of Poisson cellular networks: "
                    "analytic distributions and Monte-Carlo baselines.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table-sstar", help="lower-tail constant vs eta")
    p.add_argument("--eta-range", default="3.5:4.2:8", help="min:max:points")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_table_sstar)

    p = sub.add_parser("table-mimo", help="spatial-average grid over antennas")
    p.add_argument("--eta", type=float, default=4.0)
    p.add_argument("--max-nt", dest="max_nt", type=int, default=4)
    p.add_argument("--max-nr", dest="max_nr", type=int, default=4)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_table_mimo)

    p = sub.add_parser("sir-cdf", help="CDF of the local-average SIR")
    _add_path_args(p)
    _add_sector_args(p)
    p.add_argument("--grid", required=True, help="min:max:points[:linear|log]")
    p.add_argument("--shift", type=float, default=1.0,
                   help="evaluate F(theta/shift) (lattice shift factor)")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_sir_cdf)

    p = sub.add_parser("se-cdf", help="CDF of the ergodic spectral efficiency")
    _add_path_args(p)
    _add_sector_args(p)
    _add_antenna_args(p)
    _add_sim_args(p)
    p.add_argument("--grid", required=True, help="gamma grid min:max:points[:scale]")
    p.add_argument("--with-mc", dest="with_mc", action="store_true",
                   help="append a Monte-Carlo empirical CDF column")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_se_cdf)

    p = sub.add_parser("coverage", help="coverage quantiles of the SE CDF")
    _add_path_args(p)
    _add_antenna_args(p)
    p.add_argument("--xi", type=float, default=0.01,
                   help="outage share (coverage = 1 - xi)")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("mean-se", help="spatially averaged spectral efficiency")
    _add_path_args(p, eta_required=False)
    _add_sector_args(p)
    _add_antenna_args(p)
    _add_sim_args(p)
    p.add_argument("--eta-range", dest="eta_range", default=None,
                   help="sweep eta over min:max:points")
    p.add_argument("--with-ub", dest="with_ub", action="store_true",
                   help="include the full-CSI upper bound column")
    p.add_argument("--with-mc", dest="with_mc", action="store_true",
                   help="include the Monte-Carlo exact average")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    # averages default to the three-branch density
    p.set_defaults(func=cmd_mean_se, mode="three")

    p = sub.add_parser("lognormal", help="Gaussian fit of ln C over the network")
    _add_path_args(p)
    _add_sector_args(p)
    _add_antenna_args(p)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_lognormal)

    p = sub.add_parser("simulate", help="Monte-Carlo distribution of a quantity")
    _add_path_args(p)
    _add_sector_args(p)
    _add_antenna_args(p)
    _add_sim_args(p)
    p.add_argument("--quantity", choices=sorted(_QUANTITIES), required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_simulate)
    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Fold ``key=value`` lines of a --config file in as defaults (flags win)."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        ap.error("--config needs a file path")
    path = argv[idx + 1]
    pairs = {}
    try:
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    ap.error(f"{path}:{ln}: expected key=value")
                key, _, value = line.partition("=")
                pairs[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        ap.error(f"cannot read config file: {exc}")
    extra = []
    for key, value in pairs.items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue  # explicit flag overrides the file
        extra += [flag, value]
    # config-derived flags go right after the subcommand so explicit flags win
    return argv[:1] + extra + argv[1:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        if "--config" in argv:
            argv = _apply_config_file(ap, argv)
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ToleranceError as exc:
        print(f"numerical tolerance failure: {exc}", file=sys.stderr)
        return TOLERANCE_ERROR
    except BudgetError as exc:
        print(f"simulation budget exhausted: {exc}", file=sys.stderr)
        return BUDGET_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
