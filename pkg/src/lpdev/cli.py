"""Command-line front end.

Every command writes ``report.json`` (canonical, reproducible) and
``meta.json`` (timestamp, thread cap, paths) into the output directory,
plus CSV tables and, with ``--emit-plot``, plot-ready CSV and SVG figures.

Exit status: 0 success, 1 input or I/O error, 2 a checked invariant failed.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import os
import sys
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from lpdev import __version__
from lpdev import reporting as rp
from lpdev.complexity import PointSet, read_points_csv, unit_sphere_points, write_points_csv
from lpdev.deviation import FittedConstants, empirical_tail
from lpdev.ensembles import (
    DistributionSpec,
    SeededSampler,
    derive_stream,
    load_matrix_binary,
    load_matrix_csv,
    sample_matrix,
    save_matrix_binary,
    save_matrix_csv,
    theoretical_psi2,
)
from lpdev.orlicz import psi_alpha_norm, tail_bound

ENV_OUTPUT_DIR = "LPDEV_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "lpdev-out"

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2

# Not echoed into report.json: they may differ between otherwise identical runs.
RUNTIME_KEYS = ("threads", "out", "config")


class InputError(Exception):
    """Bad flags, config or input files (exit status 1)."""


# ------------------------------------------------------------- converters


def _count(text) -> int:
    """Positive integer; accepts ``1e6``."""
    v = float(text)
    if not v.is_integer() or v < 1:
        raise ValueError(f"expected a positive integer, got {text!r}")
    return int(v)


def _int(text) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _float_list(text) -> list:
    vals = [float(t) for t in str(text).replace(" ", "").split(",") if t]
    if not vals:
        raise ValueError("empty list")
    return vals


def _count_list(text) -> list:
    vals = [_count(t) for t in str(text).replace(" ", "").split(",") if t]
    if not vals:
        raise ValueError("empty list")
    return vals


def _str_list(text) -> list:
    vals = [t for t in str(text).replace(" ", "").split(",") if t]
    if not vals:
        raise ValueError("empty list")
    return vals


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _constants(text) -> dict:
    out = {}
    for item in _str_list(text):
        if "=" not in item:
            raise ValueError(f"constants override {item!r} is not key=value")
        k, v = item.split("=", 1)
        if k not in ("C_p_tail", "C_p_dev", "c_alpha", "c_norm", "c_norm_prime"):
            raise ValueError(f"unknown constant {k!r}")
        out[k] = float(v)
    return out


# option name -> (converter, default, help)
COMMON = {
    "seed": (_int, None, "master seed (required)"),
    "threads": (_count, 1, "cap on worker threads; results do not depend on it"),
    "out": (str, None, f"output directory (default ${ENV_OUTPUT_DIR} or ./{DEFAULT_OUTPUT_DIR})"),
    "format": (str, "json", "main report format: json or csv"),
    "emit_plot": (_bool, False, "also write plot CSV and SVG figures"),
}

COMMANDS = {
    "psi-estimate": {
        "dist": (str, "gaussian", "entry law: gaussian, rademacher, uniform_scaled, two_point(a,prob)"),
        "alpha": (float, 2.0, "Orlicz exponent"),
        "n": (_count, 100_000, "sample count (1e6 style accepted)"),
        "n_boot": (_int, 200, "bootstrap resamples"),
        "tolerance": (float, 1e-6, "relative bisection tolerance"),
        "input": (str, None, "estimate from the entries of a matrix file instead (.csv or binary)"),
    },
    "concentration": {
        "dist": (str, "gaussian", "entry law"),
        "p": (_float_list, [1.0, 1.5, 2.0, 3.0, 4.0], "comma-separated exponents"),
        "m": (_count_list, [100, 1000, 10000], "comma-separated dimensions"),
        "trials": (_count, 10_000, "draws per m"),
    },
    "deviation-sweep": {
        "dist": (str, "gaussian", "entry law"),
        "points": (str, None, "point set CSV; default is a seeded 50-point unit-sphere sample in R^10"),
        "p": (_float_list, [1.0, 2.0, 4.0], "comma-separated exponents"),
        "m": (_count_list, [16, 64, 256, 1024], "comma-separated dimensions"),
        "trials": (_count, 2000, "matrix draws per cell"),
        "process": (_str_list, ["R", "X"], "processes: R, X or R,X"),
        "Cp": (float, None, "configured deviation constant; calibrated on the smallest m when absent"),
        "multiplier": (float, 2.0, "safety multiplier on the calibrated constant"),
        "gamma_trials": (_count, 10_000, "Monte Carlo draws for the Gaussian complexity"),
        "constants": (_constants, {}, "overrides, e.g. C_p_dev=0.5,c_norm=2"),
    },
    "jl": {
        "points": (str, None, "point set CSV (required)"),
        "dist": (str, "gaussian", "entry law"),
        "p": (float, 2.0, "target exponent"),
        "eps": (float, 0.5, "distortion epsilon"),
        "fail": (float, 0.01, "target failure probability"),
        "K": (float, 1.0, "entry psi_2 norm used for planning"),
        "Cp": (float, 1.0, "embedding constant C_p"),
        "calibrate": (_bool, False, "fit K, C, C' and C_p from held-out draws instead"),
        "multiplier": (float, 2.0, "safety multiplier on calibrated C_p"),
        "repeats": (_count, 1, "independent matrices to test the plan on"),
        "constants": (_constants, {}, "overrides, e.g. c_norm=2,c_norm_prime=1.5"),
        "log": (str, "natural", "logarithm in the failure bound: natural, 2 or 10"),
    },
    "sample": {
        "dist": (str, "gaussian", "entry law"),
        "rows": (_count, None, "matrix rows m (required)"),
        "cols": (_count, None, "matrix columns n (required)"),
        "stream": (_int, 0, "stream id"),
        "matrix_format": (str, "csv", "csv or binary"),
    },
}

REQUIRED = {"jl": ("points",), "sample": ("rows", "cols")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpdev", description="Orlicz-norm, l_p deviation and l_2 -> l_p embedding experiments.")
    parser.add_argument("--version", action="version", version=f"lpdev {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, opts in COMMANDS.items():
        sp = sub.add_parser(name, help=name.replace("-", " "))
        sp.add_argument("--config", default=None, help="flat key=value config file; flags take precedence")
        for key, (_, default, help_text) in {**COMMON, **opts}.items():
            flag = "--" + key.replace("_", "-")
            if key == "emit_plot" or key == "calibrate":
                sp.add_argument(flag, dest=key, action="store_const", const="true", default=None, help=help_text)
            else:
                shown = "" if default is None else f" [default: {default}]"
                sp.add_argument(flag, dest=key, default=None, help=help_text + shown)
    return parser


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes and underscores are equivalent."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve_config(command: str, flags: dict, config_file: Optional[dict] = None, env=None) -> dict:
    """Effective configuration: flags over config file over defaults."""
    env = os.environ if env is None else env
    table = {**COMMON, **COMMANDS[command]}
    config_file = config_file or {}
    unknown = sorted(set(config_file) - set(table))
    if unknown:
        raise InputError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for key, (conv, default, _) in table.items():
        raw = flags.get(key)
        source = "flag"
        if raw is None:
            raw, source = config_file.get(key), "config"
        if raw is None:
            cfg[key] = default
            continue
        try:
            cfg[key] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise InputError(f"invalid value {raw!r} for {key} ({source}): {exc}") from None
    if cfg["seed"] is None:
        raise InputError("--seed is required for reproducibility")
    for key in REQUIRED.get(command, ()):
        if cfg[key] is None:
            raise InputError(f"--{key.replace('_', '-')} is required")
    if cfg["format"] not in ("json", "csv"):
        raise InputError("--format must be json or csv")
    if cfg["out"] is None:
        cfg["out"] = env.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR
    if "dist" in cfg:
        try:
            DistributionSpec.parse(cfg["dist"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
    return cfg


def _echo(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if k not in RUNTIME_KEYS}


def _load_points(path) -> PointSet:
    try:
        return read_points_csv(path)
    except OSError as exc:
        raise InputError(f"cannot read points file {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _log_fn(name: str) -> Callable[[float], float]:
    table = {"natural": math.log, "e": math.log, "2": math.log2, "10": math.log10}
    if name not in table:
        raise InputError(f"--log must be natural, 2 or 10, got {name!r}")
    return table[name]


def _tag(p: float) -> str:
    return f"{p:g}".replace(".", "_")


# ---------------------------------------------------------------- commands


def cmd_psi_estimate(cfg: dict, out: Path) -> tuple[dict, int]:
    if cfg["input"]:
        path = cfg["input"]
        try:
            with open(path, "rb") as fh:
                magic = fh.read(8)
            sample = load_matrix_binary(path) if magic == b"LPDEVMAT" else load_matrix_csv(path)
        except OSError as exc:
            raise InputError(f"cannot read matrix file {path}: {exc.strerror or exc}") from None
        x = sample.entries.ravel()
        source = {"input": str(path), "header": sample.header()}
        spec = sample.spec
    else:
        spec = DistributionSpec.parse(cfg["dist"])
        x = SeededSampler(spec, cfg["seed"], derive_stream("psi-estimate")).array(cfg["n"], threads=cfg["threads"])
        source = {"dist": spec.name}
    est = psi_alpha_norm(x, cfg["alpha"], tolerance=cfg["tolerance"], n_boot=cfg["n_boot"], seed=cfg["seed"])
    theory = theoretical_psi2(spec) if (spec is not None and cfg["alpha"] == 2.0) else None
    result = {
        "estimate": est.to_dict(),
        "seed": cfg["seed"],
        "source": source,
        "theoretical": theory,
        "relative_error": None if theory is None else est.value / theory - 1.0,
    }
    if cfg["emit_plot"]:
        curve = empirical_tail(np.abs(x), theory_fn=lambda t: float(tail_bound(t, est.value, cfg["alpha"])))
        rp.write_plot_csv(out / "tail_plot.csv", curve.thresholds, curve.empirical_prob, curve.theory)
        rp.tail_figure(out / "tail.svg", {"|X|": curve}, title=f"psi_{cfg['alpha']:g} tail")
    if cfg["format"] == "csv":
        rp.write_csv(
            out / "report.csv",
            ("alpha", "value", "ci_low", "ci_high", "sample_count", "theoretical"),
            [(est.alpha, est.value, est.ci_low, est.ci_high, est.sample_count, theory)],
        )
    print(f"psi_{cfg['alpha']:g} = {est.value:.6g}  95% CI [{est.ci_low:.6g}, {est.ci_high:.6g}]  n={est.sample_count}")
    return result, EXIT_OK


def cmd_concentration(cfg: dict, out: Path) -> tuple[dict, int]:
    from lpdev.experiments import concentration_experiment

    spec = DistributionSpec.parse(cfg["dist"])
    results = concentration_experiment(spec, cfg["p"], cfg["m"], cfg["trials"], cfg["seed"], cfg["threads"])
    failures = []
    rows = []
    for res in results:
        for c in res.cells:
            rows.append((res.p, c.m, c.psi2, c.shape_ratio, c.non_dominated))
            if c.tail is not None:
                rp.write_tail_csv(out / "tails" / f"p{_tag(res.p)}_m{c.m}.csv", c.tail)
                if c.non_dominated:
                    failures.append(f"p={res.p:g} m={c.m}: {c.non_dominated} non-dominated thresholds")
    rp.write_csv(out / "shape.csv", ("p", "m", "psi2", "shape_ratio", "non_dominated"), rows)
    if cfg["emit_plot"]:
        rp.series_figure(
            out / "shape.svg",
            {f"p={r.p:g}": ([c.m for c in r.cells], [c.shape_ratio for c in r.cells]) for r in results},
            "m",
            "psi_2 / (K^p rad)",
            title=spec.name,
        )
        for r in results:
            curves = {f"m={c.m}": c.tail for c in r.cells if c.tail is not None}
            if curves:
                rp.tail_figure(out / "tails" / f"p{_tag(r.p)}.svg", curves, title=f"{spec.name} p={r.p:g}")
    if cfg["format"] == "csv":
        rp.write_csv(out / "report.csv", ("p", "m", "psi2", "shape_ratio", "non_dominated"), rows)
    for f in failures:
        print(f"FAIL {f}", file=sys.stderr)
    for r in results:
        print(f"p={r.p:g}: slope {r.slope:+.3f}  C_p_tail {r.C_p_tail:.4g}")
    result = {"results": [r.to_dict() for r in results], "failures": failures}
    return result, EXIT_INVARIANT if failures else EXIT_OK


def cmd_deviation_sweep(cfg: dict, out: Path) -> tuple[dict, int]:
    from lpdev.experiments import deviation_sweep, sup_tail_curve

    spec = DistributionSpec.parse(cfg["dist"])
    if cfg["points"]:
        T = _load_points(cfg["points"])
        t_source = str(cfg["points"])
    else:
        T = unit_sphere_points(50, 10, seed=cfg["seed"])
        t_source = "unit_sphere(50,10)"
    for proc in cfg["process"]:
        if proc not in ("R", "X"):
            raise InputError(f"unknown process {proc!r}; use R and/or X")
    overrides = dict(cfg["constants"])
    if cfg["Cp"] is not None:
        overrides["C_p_dev"] = cfg["Cp"]
    constants = FittedConstants().override(**overrides) if "C_p_dev" in overrides else None
    sweep = deviation_sweep(
        spec,
        T,
        cfg["p"],
        cfg["m"],
        cfg["trials"],
        cfg["seed"],
        processes=tuple(cfg["process"]),
        constants=constants,
        multiplier=cfg["multiplier"],
        threads=cfg["threads"],
        gamma_trials=cfg["gamma_trials"],
    )
    rows = []
    for c in sweep.cells:
        c_dev = sweep.calibrated[(c.process, c.p)]
        rp.write_tail_csv(out / "tails" / f"{c.process}_p{_tag(c.p)}_m{c.m}.csv", sup_tail_curve(c, c_dev))
        fitted = c.fitted_psi2.value if c.fitted_psi2 else math.nan
        rows.append((c.process, c.p, c.m, fitted, c.envelope, c.ratio, c.rad, c.gamma.value))
    header = ("process", "p", "m", "fitted_psi2", "envelope", "ratio", "rad", "gamma")
    rp.write_csv(out / "cells.csv", header, rows)
    if cfg["format"] == "csv":
        rp.write_csv(out / "report.csv", header, rows)
    if cfg["emit_plot"]:
        series = {}
        for c in sweep.cells:
            xs, ys = series.setdefault(f"{c.process} p={c.p:g}", ([], []))
            xs.append(c.m)
            ys.append(c.fitted_psi2.value if c.fitted_psi2 else math.nan)
        rp.series_figure(out / "fitted_psi2.svg", series, "m", "fitted psi_2 of sup deviation", title=spec.name)
        for c in sweep.cells:
            curve = sup_tail_curve(c, sweep.calibrated[(c.process, c.p)])
            rp.write_plot_csv(
                out / "plots" / f"{c.process}_p{_tag(c.p)}_m{c.m}.csv",
                curve.thresholds,
                curve.empirical_prob,
                curve.theory,
            )
    for f in sweep.failures:
        print(f"FAIL {f}", file=sys.stderr)
    print(f"{len(sweep.cells)} cells, {len(sweep.failures)} dominance failures")
    result = {"points": {"source": t_source, "N": len(T), "dim": T.dim}, **sweep.to_dict()}
    return result, EXIT_INVARIANT if sweep.failures else EXIT_OK


def cmd_jl(cfg: dict, out: Path) -> tuple[dict, int]:
    from lpdev.experiments import jl_experiment
    from lpdev.jl_embed import calibrate_constants, distortion_report, embed, failure_probability, plan_dimension

    T = _load_points(cfg["points"])
    if len(T) < 2:
        raise InputError("jl needs at least two points")
    spec = DistributionSpec.parse(cfg["dist"])
    log = _log_fn(cfg["log"])
    calibration = None
    if cfg["calibrate"]:
        cal = calibrate_constants(spec, T, cfg["p"], cfg["seed"], multiplier=cfg["multiplier"], threads=cfg["threads"])
        K, constants = cal.K, cal.constants
        if cfg["constants"]:
            constants = constants.override(**cfg["constants"])
        calibration = {"raw_C_p": cal.raw_C_p, "multiplier": cal.multiplier, "m_grid": cal.m_grid, "psi_by_m": cal.psi_by_m}
    else:
        K = cfg["K"]
        constants = FittedConstants().override(C_p_dev=cfg["Cp"], **cfg["constants"])
    try:
        plan = plan_dimension(len(T), cfg["eps"], cfg["fail"], cfg["p"], K, constants, log=log)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    exp = jl_experiment(spec, T, cfg["p"], cfg["eps"], cfg["fail"], cfg["repeats"], cfg["seed"], plan=plan, threads=cfg["threads"])
    A = sample_matrix(SeededSampler(spec, cfg["seed"], derive_stream("jl_repeat", 0)), plan.m, T.dim, threads=cfg["threads"])
    embedded = embed(A, T, cfg["p"])
    first = distortion_report(T, embedded, cfg["p"], plan)
    write_points_csv(out / "embedded.csv", embedded)

    sigma = math.sqrt(cfg["fail"] * (1 - cfg["fail"]) / exp.repeats)
    allowed = cfg["fail"] + 3 * sigma
    ok = exp.frequency <= allowed
    result = {
        "plan": plan.to_dict(),
        "calibration": calibration,
        "distortion": first.to_dict(),
        "experiment": exp.to_dict(),
        "allowed_frequency": allowed,
        "passed": ok,
    }
    if cfg["format"] == "csv":
        rp.write_csv(
            out / "report.csv",
            ("p", "N", "m", "d_p", "D_p", "epsilon", "repeats", "failures", "frequency", "min_ratio", "max_ratio"),
            [(plan.p, plan.N, plan.m, plan.d_p, plan.D_p, plan.epsilon, exp.repeats, exp.failures, exp.frequency, exp.min_ratio, exp.max_ratio)],
        )
    if cfg["emit_plot"]:
        # fraction of pairs outside [d_p(1-s), D_p(1+s)] against the planned failure bound at epsilon = s
        s_grid = np.linspace(0.01, 0.99, 50)
        r = first.ratios
        emp = [float(np.mean((r < plan.d_p * (1 - s)) | (r > plan.D_p * (1 + s)))) for s in s_grid]
        theo = [
            failure_probability(plan.m, s, plan.p, plan.K, plan.N, plan.d_p, plan.constants.C_p_dev, log) for s in s_grid
        ]
        rp.write_plot_csv(out / "distortion_plot.csv", s_grid, emp, theo)
        rp.histogram_figure(
            out / "distortion.svg",
            r,
            [first.lower, first.upper],
            "||f(x) - f(y)||_p / ||x - y||_2",
            title=f"p={plan.p:g}, m={plan.m}",
        )
    print(
        f"planned m={plan.m} (d_p={plan.d_p:.4g}, D_p={plan.D_p:.4g}); "
        f"violation frequency {exp.frequency:.4g} over {exp.repeats} matrices"
    )
    if not ok:
        print(f"FAIL violation frequency {exp.frequency:.4g} > {allowed:.4g}", file=sys.stderr)
    return result, EXIT_OK if ok else EXIT_INVARIANT


def cmd_sample(cfg: dict, out: Path) -> tuple[dict, int]:
    spec = DistributionSpec.parse(cfg["dist"])
    sampler = SeededSampler(spec, cfg["seed"], cfg["stream"])
    A = sample_matrix(sampler, cfg["rows"], cfg["cols"], threads=cfg["threads"])
    if cfg["matrix_format"] == "csv":
        path = out / "matrix.csv"
        save_matrix_csv(path, A)
    elif cfg["matrix_format"] == "binary":
        path = out / "matrix.bin"
        save_matrix_binary(path, A)
    else:
        raise InputError("--matrix-format must be csv or binary")
    print(f"wrote {A.m}x{A.n} {spec.name} matrix to {path}")
    return {"matrix": A.header(), "file": path.name}, EXIT_OK


HANDLERS = {
    "psi-estimate": cmd_psi_estimate,
    "concentration": cmd_concentration,
    "deviation-sweep": cmd_deviation_sweep,
    "jl": cmd_jl,
    "sample": cmd_sample,
}


def run(argv=None, env=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise InputError("a command is required; see lpdev --help")
        flags = vars(args)
        cfg_file = read_config(flags["config"]) if flags.get("config") else None
        cfg = resolve_config(args.command, flags, cfg_file, env)
        out = Path(cfg["out"])
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
        t0 = time.perf_counter()
        result, status = HANDLERS[args.command](cfg, out)
        meta = {
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "elapsed_seconds": time.perf_counter() - t0,
            "threads": cfg["threads"],
            "out": str(out),
            "config_file": flags.get("config"),
            "exit_status": status,
        }
        path = rp.write_report(out, args.command, _echo(cfg), result, meta)
        print(f"report: {path}")
        return status
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, MemoryError) as exc:
        where = f" ({exc.filename})" if isinstance(exc, OSError) and exc.filename else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_INPUT


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
