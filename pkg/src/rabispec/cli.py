"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, fit, plotting, rwa, sweep, validate
from .bloch import BlochState, DriveWaveform, integrate, integrate_coupled
from .integrator import IntegrationError
from .lockin import NotConvergedError
from .params import TWO_PI, ConfigError, parse_config, parse_quantity

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 2, 3, 4

log = logging.getLogger("rabispec")


def _load_json(path) -> dict:
    if path is None:
        raise ConfigError("required for this command", "--config")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text, newline="")
    log.info("wrote %s", path)
    return path


def _manifest(command: str, args, doc, extra=None) -> str:
    return json.dumps({"tool": "rabispec", "version": __version__, "command": command,
                       "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                       "argv": sys.argv[1:], "config": doc, **(extra or {})}, indent=2)


# --- subcommands ------------------------------------------------------------

def cmd_simulate(args) -> int:
    doc = _load_json(args.config)
    cfg = parse_config(doc)
    if cfg.drive is None:
        raise ConfigError("simulate needs a drive block", "/drive")
    drive = cfg.drive
    drive.check_weak(cfg.tls)
    period = TWO_PI / max(drive.omega0, cfg.tls.delta_eps)
    t_end = args.t_end if args.t_end is not None else args.periods * period
    integ = cfg.integrator
    if args.coupled:
        if cfg.tank is None:
            raise ConfigError("--coupled needs a tank block", "/tank")
        traj = integrate_coupled(BlochState.equilibrium(cfg.tls), None, cfg.tls, cfg.tank, drive.f,
                                 drive.omega0, drive.omega, (0.0, t_end), None,
                                 rtol=integ.rtol, atol=integ.atol, max_step=integ.max_step,
                                 samples_per_period=args.samples_per_period)
    else:
        wave = DriveWaveform.cosine(drive.f, drive.omega0, drive.g0, drive.omega)
        traj = integrate(BlochState.equilibrium(cfg.tls), cfg.tls, wave, (0.0, t_end),
                         rtol=integ.rtol, atol=integ.atol, max_step=integ.max_step,
                         samples_per_period=args.samples_per_period)
    traj.to_csv(args.out / "trajectory.csv")
    _write(args.out, "manifest.json", _manifest("simulate", args, doc, {
        "t_end": t_end, "samples": int(traj.t.size), "steps": traj.meta.get("steps")}))
    return EXIT_OK


def cmd_response(args) -> int:
    doc = _load_json(args.config)
    cfg = parse_config(doc)
    if cfg.drive is None:
        raise ConfigError("response needs a drive block", "/drive")
    lo, hi = (parse_quantity(q, "frequency", f"--{n}") for q, n in
              ((_cli_quantity(args.omega_min), "omega-min"), (_cli_quantity(args.omega_max), "omega-max")))
    if not 0 < lo < hi:
        raise ConfigError("need 0 < omega-min < omega-max", "--omega-min")
    grid = np.geomspace(lo, hi, args.count) if args.log else np.linspace(lo, hi, args.count)
    table = rwa.response_table(cfg.tls, cfg.drive.f, cfg.drive.detuning(cfg.tls), grid,
                               args.convention)
    lines = [",".join(rwa.RESPONSE_COLUMNS)]
    lines += [",".join(repr(float(v)) for v in row) for row in table]
    _write(args.out, "response.csv", "\r\n".join(lines) + "\r\n")
    _write(args.out, "manifest.json", _manifest("response", args, doc))
    return EXIT_OK


def _cli_quantity(text: str) -> dict:
    """'6 MHz' or '3.77e7 rad/s' -> quantity object."""
    parts = text.split()
    if len(parts) != 2:
        raise ConfigError(f"expected '<value> <unit>', got {text!r}", "--omega")
    try:
        return {"value": float(parts[0]), "unit": parts[1]}
    except ValueError:
        raise ConfigError(f"bad number {parts[0]!r}", "--omega") from None


def _emit_plot(out: Path, stem: str, columns, rows, x, y, series=None, title="", png=True):
    ok_rows = [r for r in rows if r[columns.index("status")] == "ok"]
    values = plotting.series_values(columns, ok_rows, series) if series else ()
    _write(out, stem + ".gp", plotting.gnuplot_script(stem + ".csv", columns, x, y, series=series,
                                                      series_values=values, title=title,
                                                      png_name=stem + "_gnuplot.png"))
    if ok_rows and png:
        plotting.render_png(out / (stem + ".png"), columns, ok_rows, x, y, series=series,
                            title=title)


def cmd_sweep(args) -> int:
    if args.manifest:
        manifest = sweep.RunManifest.from_json(Path(args.manifest).read_text())
        doc = manifest.spec
    else:
        doc = _load_json(args.config)
    spec = sweep.parse_sweep_spec(doc)
    text, manifest, results = sweep.run_sweep(spec, args.threads)
    _write(args.out, "sweep.csv", text)
    _write(args.out, "manifest.json", manifest.to_json())
    if spec.axes and "chi" in spec.outputs:
        cols = sweep.columns(spec)
        rows = [sweep.row_cells(r, cols) for r in results]
        x = {"f": "f_drive"}.get(spec.axes[0].name, spec.axes[0].name)
        series = None
        if len(spec.axes) == 2:
            series = {"f": "f_drive"}.get(spec.axes[1].name, spec.axes[1].name)
        _emit_plot(args.out, "sweep", cols, rows, x, "chi", series, png=not args.no_png)
    failed = sum(r.status != "ok" for r in results)
    if failed:
        log.warning("%d of %d points failed; see the status column", failed, len(results))
    return EXIT_OK


def cmd_fig1(args) -> int:
    opts = sweep.Fig1Options(tuple(args.low), tuple(args.high), args.f_x_max, args.count,
                             args.convention)
    tables = sweep.fig1_recipe(opts)
    for name, text in tables.items():
        _write(args.out, name, text)
        stem = name[:-4]
        rows = list(csv.reader(io.StringIO(text)))[1:]
        _emit_plot(args.out, stem, sweep.FIG1_COLUMNS, rows, "f_x", "chi", "power_ratio",
                   title=f"{stem.split('_')[1]}-power family", png=not args.no_png)
    _write(args.out, "manifest.json", _manifest("fig1", args, None, {
        "options": {"low": opts.low, "high": opts.high, "f_x_max": opts.f_x_max,
                    "count": opts.count, "convention": opts.convention}}))
    return EXIT_OK


FIT_KEYS = {"kind", "init", "bounds", "omega", "detuning", "convention"}


def cmd_fit(args) -> int:
    doc = _load_json(args.config)
    cfg = parse_config(doc, extra_keys={"fit"})
    if cfg.tank is None:
        raise ConfigError("fit needs a tank block", "/tank")
    block = doc.get("fit")
    if not isinstance(block, dict):
        raise ConfigError("expected a fit block", "/fit")
    unknown = set(block) - FIT_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "/fit")
    kind = block.get("kind", "flux")
    if kind not in fit.KINDS:
        raise ConfigError(f"must be one of {list(fit.KINDS)}", "/fit/kind")
    init, bounds = {}, {}
    for name in fit.PARAM_NAMES:
        path = f"/fit/init/{name}"
        if name not in block.get("init", {}):
            raise ConfigError("missing initial value", path)
        init[name] = parse_quantity(block["init"][name], "frequency", path)
        pair = block.get("bounds", {}).get(name)
        if pair is None:
            bounds[name] = (init[name] / 100, init[name] * 100)
        else:
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError("expected [low, high]", f"/fit/bounds/{name}")
            bounds[name] = tuple(parse_quantity(q, "frequency", f"/fit/bounds/{name}/{i}")
                                 for i, q in enumerate(pair))
    omega = parse_quantity(block["omega"], "frequency", "/fit/omega") if "omega" in block else None
    detuning = parse_quantity(block["detuning"], "frequency", "/fit/detuning") \
        if "detuning" in block else 0.0
    e_j = cfg.flux.e_j if cfg.flux is not None else None
    if kind == "flux" and e_j is None:
        raise ConfigError("flux curves need tls.flux (E_J)", "/tls")
    spec = fit.CurveSpec(cfg.tls, cfg.tank, omega, detuning, e_j,
                         block.get("convention", "bloch"))
    try:
        data = fit.MeasuredCurve.from_csv(args.data, kind)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.data}: {exc.strerror}", "--data") from None
    res = fit.fit_rates(data, init, bounds, spec, workers=args.threads)
    report = res.as_dict()
    report["estimates_over_2pi_hz"] = {k: v / TWO_PI for k, v in res.estimates.items()}
    _write(args.out, "fit.json", json.dumps(report, indent=2))
    _write(args.out, "manifest.json", _manifest("fit", args, doc, {"data": str(args.data)}))
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def cmd_validate(args) -> int:
    report = validate.run_suite(args.suite, args.only or None, mutation=not args.no_mutation)
    for r in report.results:
        print(r.line())
    if report.mutation is not None:
        state = "PASS" if report.mutation["detected"] else "FAIL"
        print(f"{state} mutation check: 1% change in f1 detected={report.mutation['detected']}")
    _write(args.out, "validate.json", report.to_json())
    return EXIT_OK if report.passed else EXIT_VALIDATION


# --- parser -----------------------------------------------------------------

def _common(suppress: bool) -> argparse.ArgumentParser:
    # the copy attached to each subcommand must not reset values given
    # before the subcommand name, hence SUPPRESS defaults there
    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="JSON parameter or sweep file")
    common.add_argument("--out", type=Path, default=d(Path(".")), help="output directory")
    common.add_argument("--threads", type=int, default=d(1), help="worker pool width")
    common.add_argument("--seed", type=int, default=d(None),
                        help="reserved; no command uses random numbers")
    common.add_argument("--no-png", action="store_true", default=d(False),
                        help="skip matplotlib rendering")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    p = argparse.ArgumentParser(prog="rabispec", description=__doc__.splitlines()[0],
                                parents=[_common(suppress=False)])
    p.add_argument("--version", action="version", version=f"rabispec {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="time-domain Bloch trajectory")
    s.add_argument("--t-end", type=float, help="end time in seconds")
    s.add_argument("--periods", type=float, default=100.0,
                   help="end time in carrier periods when --t-end is absent")
    s.add_argument("--samples-per-period", type=int, default=32)
    s.add_argument("--coupled", action="store_true", help="include the tank circuit")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("response", parents=[common], help="rotating-wave transfer-function table")
    s.add_argument("--omega-min", required=True, help="e.g. '0.1 MHz'")
    s.add_argument("--omega-max", required=True, help="e.g. '100 MHz'")
    s.add_argument("--count", type=int, default=200)
    s.add_argument("--log", action="store_true", help="logarithmic grid")
    s.add_argument("--convention", choices=rwa.CONVENTIONS, default="bloch")
    s.set_defaults(func=cmd_response)

    s = sub.add_parser("sweep", parents=[common], help="evaluate a sweep document")
    s.add_argument("--manifest", help="re-run from a previous manifest.json")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fig1", parents=[common], help="reference-device chi(f_X) families")
    s.add_argument("--low", type=float, nargs="+", default=list(sweep.LOW_POWER_RATIOS),
                   help="low-power family as f^2/(Gamma_z Gamma)")
    s.add_argument("--high", type=float, nargs="+", default=list(sweep.HIGH_POWER_RATIOS),
                   help="high-power family as f^2/(Gamma_z Gamma)")
    s.add_argument("--f-x-max", type=float, default=0.04)
    s.add_argument("--count", type=int, default=801)
    s.add_argument("--convention", choices=rwa.CONVENTIONS, default="bloch")
    s.set_defaults(func=cmd_fig1)

    s = sub.add_parser("fit", parents=[common], help="fit Gamma, Gamma_z and f to a measured curve")
    s.add_argument("--data", required=True, help="CSV with columns x,chi[,v_t][,sigma]")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("validate", parents=[common], help="run the acceptance suite")
    s.add_argument("--suite", choices=validate.SUITES, default="fast")
    s.add_argument("--only", type=int, nargs="+", choices=sorted(validate.CRITERIA))
    s.add_argument("--no-mutation", action="store_true", help="skip the mutation check")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, IntegrationError, NotConvergedError, fit.RankDeficiencyError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
