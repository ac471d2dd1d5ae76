"""Command-line front end: figure data, spectra, oracle comparisons, self-checks."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from qutritsim import __version__
from qutritsim.analytic import sweep_population
from qutritsim.core import (
    DetuningSchedule,
    PhysicalConfig,
    QutritError,
    ValidationError,
    make_schedule,
)
from qutritsim.media import (
    FIT_GROUPINGS,
    EigenvalueHistogram,
    coupling_from_geometry,
    eigenvalue_density,
    heuristic_fit_density,
    sample_geometry,
    scaled_energy_unit,
)
from qutritsim.output import RunManifest, emit_table, format_table, manifest_path

log = logging.getLogger("qutritsim")

SEED_ENV = "QUTRITSIM_SEED"


class UsageError(Exception):
    pass


def parse_range(text: str) -> np.ndarray:
    """``start:stop:num`` -> linspace, or a comma list of values."""
    text = str(text)
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) == 2:
                lo, hi = map(float, parts)
                return np.array([lo, hi])
            lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
            if num < 1:
                raise ValueError
            return np.linspace(lo, hi, num)
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; use start:stop:num or a,b,c")


def parse_pair(text: str) -> tuple[float, float]:
    r = parse_range(text)
    if r.size != 2:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")
    return float(r[0]), float(r[-1])


def parse_schedule(text: str) -> DetuningSchedule:
    """``duration:alpha,duration:alpha,...``"""
    try:
        segs = [tuple(map(float, seg.split(":"))) for seg in str(text).split(",")]
        return make_schedule(segs)
    except (ValueError, ValidationError) as exc:
        raise argparse.ArgumentTypeError(f"bad schedule {text!r}: {exc}")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    try:
        return int(raw) if raw else 0
    except ValueError:
        return 0


def _load_config(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise UsageError("config must be a key/value mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _write_output(args, command: str, header, rows, params: dict, summary: dict | None = None) -> None:
    if args.out is None:
        sys.stdout.write(format_table(rows, header))
        return
    manifest = RunManifest(
        command=command,
        params=params,
        master_seed=getattr(args, "seed", None),
        code_version=__version__,
        summary=summary or {},
    )
    digest = emit_table(rows, header, args.out)
    manifest.add_output(args.out, digest)
    manifest.write(manifest_path(args.out))


def _params(args) -> dict:
    skip = {"func", "config", "out", "threads", "verbose"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, DetuningSchedule):
            v = [list(s) for s in v.segments]
        out[k] = v
    return out


def cmd_collective(args) -> int:
    header, rows = sweep_population(args.v_range, args.alpha_range, args.t, kernel="collective")
    _write_output(args, "collective", header, rows, _params(args))
    return 0


def _fit_column(centers, n, grouping):
    out = np.full(centers.shape, math.nan)
    nz = centers != 0
    out[nz] = heuristic_fit_density(centers[nz], n, grouping)
    return out


def cmd_spectrum(args) -> int:
    cfg = PhysicalConfig(mu=args.mu, angular_coefficient=args.angular_coefficient)
    unit = scaled_energy_unit(args.n) if args.units == "scaled" else 1.0
    hist = eigenvalue_density(
        args.n, args.samples, args.bins, args.seed, cfg,
        value_range=args.range, energy_unit=unit, threads=args.threads,
    )
    centers = hist.centers
    if args.fit == "none":
        fit = np.full(centers.shape, math.nan)
    else:
        fit = _fit_column(centers, args.n, args.fit)
    rows = np.column_stack([centers, hist.density, fit])
    skew, se = hist.skewness()
    summary = {
        "energy_unit": unit,
        "outside_per_sample": hist.outside,
        "pooled_skewness": skew,
        "skewness_standard_error": se,
        "max_trace_defect": hist.max_trace_defect,
        "pooled_moments": list(hist.moments),
    }
    _write_output(args, "spectrum", ("bin_center", "density", "fit_value"), rows, _params(args), summary)
    return 0


def _sample_spectra(n, samples, seed, cfg, threads, unit):
    from concurrent.futures import ThreadPoolExecutor

    def work(k):
        v = coupling_from_geometry(sample_geometry(n, seed, index=k), cfg)
        return np.linalg.eigvalsh(v.values) / unit

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, range(samples)))
    return [work(k) for k in range(samples)]


def cmd_random_media(args) -> int:
    cfg = PhysicalConfig(mu=args.mu, angular_coefficient=args.angular_coefficient)
    unit = scaled_energy_unit(args.n) if args.scaled_axes else 1.0
    spectra = _sample_spectra(args.n, args.samples, args.seed, cfg, args.threads, unit)
    if args.max_coupling is not None and args.max_coupling >= 0:
        spectra = [np.where(np.abs(s) <= args.max_coupling, s, 0.0) for s in spectra]
    with np.errstate(over="ignore", invalid="ignore"):
        header, rows = sweep_population(args.t_range, args.alpha_range, kernel="ensemble", spectra=spectra)
    if not np.all(np.isfinite(rows)):
        raise QutritError("population overflowed; restrict the grid or pass --max-coupling")
    if args.scaled_axes:
        header = ("t_scaled", "alpha_scaled", "n1")
    _write_output(args, "random-media", header, rows, _params(args), {"energy_unit": unit})
    return 0


def read_histogram_csv(path: str, n_dipoles: int = 0) -> EigenvalueHistogram:
    """Rebuild a histogram from a ``spectrum`` CSV (uniform bins assumed)."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError(f"{path} holds no bins")
    centers = np.array([float(r["bin_center"]) for r in rows])
    density = np.array([float(r["density"]) for r in rows])
    width = float(centers[1] - centers[0]) if centers.size > 1 else 1.0
    edges = np.concatenate([centers - width / 2, [centers[-1] + width / 2]])
    return EigenvalueHistogram(edges, density * width, 1, n_dipoles)


def cmd_beats(args) -> int:
    from qutritsim.schedule import beat_map, density_curve, mode_population_schedule

    if args.t1_range is not None or args.t2_range is not None:
        if args.t1_range is None or args.t2_range is None:
            raise UsageError("the ratio map needs both --t1-range and --t2-range")
        header, rows = beat_map(args.nv, args.alpha, args.t1_range, args.t2_range, args.t_offset)
        _write_output(args, "beats", header, rows, _params(args))
        return 0
    if args.t1 is None or args.t2 is None:
        raise UsageError("give --t1 and --t2, or --t1-range and --t2-range")
    taus = args.tau_range
    if args.density_file:
        hist = read_histogram_csv(args.density_file)
        n1 = density_curve(hist, args.alpha, args.t1, args.t2, taus, averaged=args.averaged)
    else:
        horizon = args.t2 + float(taus.max()) + 2 * math.pi / max(abs(args.alpha), 1e-12)
        sched = DetuningSchedule.switch(args.alpha, args.t1, args.t2, horizon)
        if args.averaged:
            from qutritsim.schedule import oscillation_average

            def f(t):
                return float(mode_population_schedule(args.nv, sched, max(t, args.t2)))

            n1 = np.array([oscillation_average(f, args.t2 + tau, args.alpha) for tau in taus])
        else:
            n1 = np.array([float(mode_population_schedule(args.nv, sched, args.t2 + tau)) for tau in taus])
    rows = np.column_stack([taus, n1])
    _write_output(args, "beats", ("t_minus_t2", "n1"), rows, _params(args))
    return 0


def _parse_coupling(spec: str, n: int, cfg: PhysicalConfig):
    from qutritsim.oracle import collective_coupling

    kind, _, value = spec.partition(":")
    if kind == "collective":
        return collective_coupling(n, float(value or 1.0))
    if kind == "geometry":
        return coupling_from_geometry(sample_geometry(n, int(value or 0)), cfg)
    raise UsageError(f"unknown coupling {spec!r}; use collective:NV or geometry:SEED")


def cmd_oracle(args) -> int:
    from qutritsim.oracle import compare_report

    cfg = PhysicalConfig(mu=args.mu, angular_coefficient=args.angular_coefficient)
    base = _parse_coupling(args.coupling, args.n, cfg)
    if (args.alpha is None) == (args.schedule is None):
        raise UsageError("give exactly one of --alpha or --schedule")
    rep = compare_report(
        base, args.t, args.scales,
        alpha=args.alpha, schedule=args.schedule, normalize=not args.no_normalize,
        tol=args.tol, pair_factor=args.pair_factor, method=args.method,
    )
    payload = json.dumps(rep.to_dict(), indent=2, sort_keys=True, default=float) + "\n"
    if args.report:
        Path(args.report).write_text(payload, encoding="utf-8")
    elif args.out is not None:
        sys.stdout.write(payload)
    header = ("scale", "n1_exact", "n1_analytic", "rel_error", "norm_exact", "norm_formula", "w_error")
    rows = [tuple(getattr(r, h) for h in header) for r in rep.rows]
    if args.out is None and args.report:
        sys.stdout.write(format_table(rows, header))
    elif args.out is not None:
        _write_output(args, "oracle", header, rows, _params(args), {"orders": rep.orders})
    else:
        sys.stdout.write(payload)
    return 0


def cmd_validate(args) -> int:
    from qutritsim.checks import validate_suite

    results = validate_suite()
    report = {
        "passed": all(r.passed for r in results),
        "checks": [r.as_dict() for r in results],
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if report["passed"] else 1


def _common(p: argparse.ArgumentParser, seed: bool = False, threads: bool = False, out: bool = True):
    p.add_argument("--config", help="JSON or TOML file of flag defaults; explicit flags win")
    if out:
        p.add_argument("--out", help="output CSV path (a manifest is written next to it)")
    if seed:
        p.add_argument("--seed", type=int, default=_default_seed(), help=f"master seed (default ${SEED_ENV} or 0)")
    if threads:
        p.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")


def _physics(p):
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--angular-coefficient", type=float, default=2.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qutritsim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("collective", help="n1 over (NV, alpha) for all-to-all coupling")
    _common(p)
    p.add_argument("--t", type=float, default=3.0)
    p.add_argument("--v-range", type=parse_range, default=parse_range("0:2:41"))
    p.add_argument("--alpha-range", type=parse_range, default=parse_range("-3:1:81"))
    p.set_defaults(func=cmd_collective)

    p = sub.add_parser("spectrum", help="eigenvalue density of random dipole media")
    _common(p, seed=True, threads=True)
    _physics(p)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--bins", type=int, default=201)
    p.add_argument("--range", type=parse_pair, default=(-25.0, 25.0))
    p.add_argument("--fit", choices=(*FIT_GROUPINGS, "none"), default="denominator")
    p.add_argument("--units", choices=("scaled", "raw"), default="scaled",
                   help="scaled: energies divided by N**1.5")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("random-media", help="sample-averaged n1 over (t, alpha) for random media")
    _common(p, seed=True, threads=True)
    _physics(p)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--t-range", type=parse_range, default=parse_range("0.05:2:40"))
    p.add_argument("--alpha-range", type=parse_range, default=parse_range("-2:2:41"))
    p.add_argument("--scaled-axes", action=argparse.BooleanOptionalAction, default=True,
                   help="axes t*N**1.5 and alpha/N**1.5")
    p.add_argument("--max-coupling", type=float, default=25.0,
                   help="drop modes with |V| above this, in axis units (dimer exclusion); "
                        "negative keeps every mode")
    p.set_defaults(func=cmd_random_media)

    p = sub.add_parser("beats", help="detuning-switch populations and ratio maps")
    _common(p)
    p.add_argument("--nv", type=float, default=0.3)
    p.add_argument("--alpha", type=float, default=-0.3)
    p.add_argument("--t1", type=float)
    p.add_argument("--t2", type=float)
    p.add_argument("--t1-range", type=parse_range)
    p.add_argument("--t2-range", "--dt-range", dest="t2_range", type=parse_range,
                   help="grid of t2 - t1 for the ratio map")
    p.add_argument("--t-offset", type=float, default=0.9, help="ratio map observes at t = t2 + offset")
    p.add_argument("--tau-range", type=parse_range, default=parse_range("0:20:201"),
                   help="grid of t - t2 for population curves")
    p.add_argument("--density-file", help="histogram CSV from the spectrum command")
    p.add_argument("--averaged", action="store_true", help="average over one fast period 2 pi/|alpha|")
    p.set_defaults(func=cmd_beats)

    p = sub.add_parser("oracle", help="exact 3**N evolution versus closed forms")
    _common(p)
    _physics(p)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--coupling", default="geometry:0")
    p.add_argument("--alpha", type=float)
    p.add_argument("--schedule", type=parse_schedule)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--scales", type=parse_range, default=parse_range("0.2,0.1,0.05"))
    p.add_argument("--no-normalize", action="store_true", help="scale raw couplings instead of max |V_m|")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--pair-factor", type=float, default=1.0)
    p.add_argument("--method", choices=("krylov", "dense"), default="krylov")
    p.add_argument("--report", help="path for the JSON report")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate", help="run every invariant and report pass/fail")
    _common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def _config_text(value) -> str:
    """Render a config value the way it would be typed on the command line."""
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            return ",".join(":".join(str(x) for x in seg) for seg in value)
        return ",".join(str(x) for x in value)
    return str(value)


def _apply_config(parser, argv, args):
    sub = parser._subparsers._group_actions[0].choices[args.command]
    cfg = _load_config(args.config)
    actions = {a.dest: a for a in sub._actions}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in cfg.items():
        if actions[key].type is not None and not isinstance(value, str):
            cfg[key] = _config_text(value)
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValidationError) as exc:
        print(f"qutritsim: error: {exc}", file=sys.stderr)
        return 2
    except (QutritError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"qutritsim: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
