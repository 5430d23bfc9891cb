"""Parameter sweeps over flux, drive amplitude, probe frequency and detuning.

A sweep document is JSON::

    {
      "tls":   {... as in a parameter file; "flux" is needed for an f_x axis},
      "tank":  {...},
      "drive": {"f": {...}, "detuning": {...}},       # or "omega0"
      "probe": {"omega": {...}},                      # default: tank omega_t
      "axes":  [{"name": "f_x", "min": -0.01, "max": 0.01, "count": 41}],
      "outputs": ["xi", "gamma_t", "v_t", "chi", "rwa"],
      "engine": "analytic",                           # or "ode+lockin"
      "convention": "bloch",
      "regime_policy": {"general_ratio": 100, "resonant_fraction": 0.01},
      "lockin": {"window_periods": 30, "samples_per_period": 32,
                 "g0_fraction": 1e-3, "rtol": 1e-10},
      "meta": {}
    }

Frequency-valued axis bounds are quantities (``{"value": 1, "unit": "MHz"}``);
``f_x`` bounds are plain numbers. An empty ``axes`` list evaluates the single
base point. Rows come out in lexicographic grid order (first axis slowest)
regardless of how many workers evaluate them.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import __version__, readout, rwa
from .integrator import IntegrationError
from .lockin import NotConvergedError, measure_transfer
from .params import (HBAR, TWO_PI, ConfigError, FluxSpec, TankParams, TlsParams, _expect_keys,
                     _number, parse_drive, parse_quantity, parse_tank, parse_tls)

AXIS_NAMES = ("f_x", "f", "omega", "delta")
OUTPUTS = ("xi", "gamma_t", "v_t", "chi", "rwa")
ENGINES = ("analytic", "ode+lockin")
SWEEP_KEYS = {"tls", "tank", "drive", "probe", "axes", "outputs", "engine", "convention",
              "regime_policy", "lockin", "meta"}
RWA_COLUMNS = ["re_z", "im_z", "re_x", "im_x", "re_y", "im_y"]


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    count: int
    spacing: str = "linear"

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)


@dataclass(frozen=True)
class LockinSettings:
    window_periods: int = 30
    samples_per_period: int = 32
    g0_fraction: float = 1e-3
    rtol: float = 1e-10


@dataclass(frozen=True)
class SweepSpec:
    tls: TlsParams
    tank: TankParams
    flux: FluxSpec | None
    f: float
    delta: float | None
    omega0: float | None
    omega: float
    axes: tuple[Axis, ...]
    outputs: tuple[str, ...] = ("xi", "gamma_t", "v_t", "chi")
    engine: str = "analytic"
    convention: str = "bloch"
    policy: readout.RegimePolicy = field(default_factory=readout.RegimePolicy)
    lockin: LockinSettings = field(default_factory=LockinSettings)
    document: dict = field(default_factory=dict)

    def grid(self) -> list[dict]:
        """Axis values of every point, first axis varying slowest."""
        vals = [a.values() for a in self.axes]
        return [dict(zip((a.name for a in self.axes), (float(v) for v in combo)))
                for combo in product(*vals)]


def _choice(doc: dict, key: str, options, default, path: str):
    v = doc.get(key, default)
    if v not in options:
        raise ConfigError(f"must be one of {list(options)}", f"{path}/{key}")
    return v


def _parse_axis(obj, path: str, has_flux: bool) -> Axis:
    _expect_keys(obj, path, {"name", "min", "max", "count"}, {"spacing"})
    name = obj["name"]
    if name not in AXIS_NAMES:
        raise ConfigError(f"axis name must be one of {list(AXIS_NAMES)}", path + "/name")
    if name == "f_x" and not has_flux:
        raise ConfigError("an f_x axis needs tls.flux (E_J and I_q)", path + "/name")
    if name == "f_x":
        lo, hi = _number(obj["min"], path + "/min"), _number(obj["max"], path + "/max")
    else:
        lo = parse_quantity(obj["min"], "frequency", path + "/min")
        hi = parse_quantity(obj["max"], "frequency", path + "/max")
    count = obj["count"]
    if not isinstance(count, int) or isinstance(count, bool) or count < 2:
        raise ConfigError("count must be an integer >= 2", path + "/count")
    if not lo < hi:
        raise ConfigError("min must be below max", path)
    spacing = obj.get("spacing", "linear")
    if spacing not in ("linear", "log"):
        raise ConfigError("spacing must be 'linear' or 'log'", path + "/spacing")
    if spacing == "log" and lo <= 0:
        raise ConfigError("log spacing needs positive bounds", path + "/min")
    return Axis(name, lo, hi, count, spacing)


def parse_sweep_spec(doc) -> SweepSpec:
    """Validate a sweep document; errors carry a JSON pointer."""
    _expect_keys(doc, "", {"tls", "tank"}, SWEEP_KEYS - {"tls", "tank"})
    tls, flux = parse_tls(doc["tls"])
    tank = parse_tank(doc["tank"])
    f, delta, omega0 = 0.0, 0.0, None
    if "drive" in doc:
        drv = doc["drive"]
        d = parse_drive(drv, tls)
        f = d.f
        if isinstance(drv, dict) and "omega0" in drv:
            delta, omega0 = None, d.omega0
        else:
            delta = d.omega0 - tls.delta_eps
    omega = tank.omega_t
    if "probe" in doc:
        _expect_keys(doc["probe"], "/probe", {"omega"})
        omega = parse_quantity(doc["probe"]["omega"], "frequency", "/probe/omega")
        if omega <= 0:
            raise ConfigError("must be positive", "/probe/omega")
    axes_doc = doc.get("axes", [])
    if not isinstance(axes_doc, list) or len(axes_doc) > 2:
        raise ConfigError("expected a list of at most two axes", "/axes")
    axes = tuple(_parse_axis(a, f"/axes/{i}", flux is not None) for i, a in enumerate(axes_doc))
    names = [a.name for a in axes]
    if len(set(names)) != len(names):
        raise ConfigError("axis names must differ", "/axes")
    if "delta" in names and omega0 is not None:
        raise ConfigError("a delta axis conflicts with a fixed drive omega0", "/axes")
    outputs = doc.get("outputs", ["xi", "gamma_t", "v_t", "chi"])
    if not isinstance(outputs, list) or not outputs:
        raise ConfigError("expected a non-empty list", "/outputs")
    for i, o in enumerate(outputs):
        if o not in OUTPUTS:
            raise ConfigError(f"must be one of {list(OUTPUTS)}", f"/outputs/{i}")
    engine = _choice(doc, "engine", ENGINES, "analytic", "")
    convention = _choice(doc, "convention", rwa.CONVENTIONS, "bloch", "")
    pol = doc.get("regime_policy", {})
    _expect_keys(pol, "/regime_policy", set(), {"general_ratio", "resonant_fraction"})
    policy = readout.RegimePolicy(
        _number(pol.get("general_ratio", 100.0), "/regime_policy/general_ratio"),
        _number(pol.get("resonant_fraction", 0.01), "/regime_policy/resonant_fraction"))
    lk = doc.get("lockin", {})
    _expect_keys(lk, "/lockin", set(), {"window_periods", "samples_per_period", "g0_fraction", "rtol"})
    lockin = LockinSettings(int(_number(lk.get("window_periods", 30), "/lockin/window_periods")),
                            int(_number(lk.get("samples_per_period", 32), "/lockin/samples_per_period")),
                            _number(lk.get("g0_fraction", 1e-3), "/lockin/g0_fraction"),
                            _number(lk.get("rtol", 1e-10), "/lockin/rtol"))
    if lockin.window_periods < 10 or lockin.samples_per_period < 20:
        raise ConfigError("need window_periods >= 10 and samples_per_period >= 20", "/lockin")
    if not 1e-12 <= lockin.rtol <= 1e-3:
        raise ConfigError("rtol must lie in [1e-12, 1e-3]", "/lockin/rtol")
    if "meta" in doc and not isinstance(doc["meta"], dict):
        raise ConfigError("expected an object", "/meta")
    return SweepSpec(tls, tank, flux, f, delta, omega0, omega, axes, tuple(outputs), engine,
                     convention, policy, lockin, json.loads(json.dumps(doc)))


@dataclass
class PointResult:
    f_x: float
    f: float
    omega: float
    delta: float
    values: dict
    regime: str
    status: str


def _point_inputs(spec: SweepSpec, point: dict):
    tls = spec.tls
    f_x = spec.flux.f_x if spec.flux is not None else math.nan
    if "f_x" in point:
        f_x = point["f_x"]
        tls = tls.with_bias(spec.flux.e_j * f_x / HBAR)
    f = point.get("f", spec.f)
    omega = point.get("omega", spec.omega)
    if "delta" in point:
        delta = point["delta"]
    elif spec.omega0 is not None:
        delta = spec.omega0 - tls.delta_eps
    else:
        delta = spec.delta
    return tls, f_x, f, omega, delta


def evaluate_point(spec: SweepSpec, point: dict) -> PointResult:
    """One grid point; numerical failures are captured in ``status``."""
    tls, f_x, f, omega, delta = _point_inputs(spec, point)
    values = {}
    regime = "error"
    try:
        if spec.engine == "analytic":
            pt = readout.readout(tls, spec.tank, f, delta, omega, spec.convention, spec.policy)
            regime = pt.regime
            values.update(xi=pt.xi, gamma_t=pt.gamma_t_eff, v_t=pt.v_t, chi=pt.chi)
            if "rwa" in spec.outputs:
                r = rwa.slow_response(tls, f, delta, omega, spec.convention, warn=False)
                z, x, y = complex(r.z), complex(r.x), complex(r.y)
        else:
            lk = spec.lockin
            rates = [r for r in (tls.gamma_phi, tls.gamma_z) if r > 0] + [omega]
            split = measure_transfer(tls, f, delta, omega, g0=lk.g0_fraction * min(rates),
                                     window_periods=lk.window_periods,
                                     samples_per_period=lk.samples_per_period, rtol=lk.rtol)
            z, x, y = split["z"], split["x"], split["y"]
            lr = readout.tank_from_transfer(tls, spec.tank, omega, z, x, y)
            regime = "ode+lockin"
            values.update(xi=lr.xi, gamma_t=lr.gamma_t, v_t=lr.v_t, chi=lr.chi)
        if "rwa" in spec.outputs:
            values.update(re_z=z.real, im_z=z.imag, re_x=x.real, im_x=x.imag,
                          re_y=y.real, im_y=y.imag)
        status = "ok"
    except (ArithmeticError, ValueError, IntegrationError, NotConvergedError) as exc:
        status = f"error: {type(exc).__name__}: {exc}"
        values = {}
    return PointResult(f_x, f, omega, delta, values, regime, status)


def columns(spec: SweepSpec) -> list[str]:
    cols = ["f_x", "f_drive", "omega"]
    cols += [o for o in ("xi", "gamma_t", "v_t", "chi") if o in spec.outputs]
    cols += ["regime", "delta", "f_drive_over_2pi", "omega_over_2pi", "delta_over_2pi"]
    if "gamma_t" in spec.outputs:
        cols.append("gamma_t_over_2pi")
    if "rwa" in spec.outputs:
        cols += RWA_COLUMNS
    return cols + ["status"]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def row_cells(res: PointResult, cols: list[str]) -> list[str]:
    nan = math.nan
    base = {
        "f_x": res.f_x, "f_drive": res.f, "omega": res.omega, "delta": res.delta,
        "regime": res.regime, "status": res.status,
        "f_drive_over_2pi": res.f / TWO_PI, "omega_over_2pi": res.omega / TWO_PI,
        "delta_over_2pi": res.delta / TWO_PI,
        "gamma_t_over_2pi": res.values.get("gamma_t", nan) / TWO_PI,
    }
    return [_fmt(base[c] if c in base else res.values.get(c, nan)) for c in cols]


def table_text(results: list[PointResult], cols: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for r in results:
        w.writerow(row_cells(r, cols))
    return buf.getvalue()


@dataclass
class RunManifest:
    """Everything needed to regenerate a sweep table."""

    spec: dict
    version: str
    timestamp: str
    points: list
    table: str = "sweep.csv"
    resolved: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"tool": "rabispec", "version": self.version, "timestamp": self.timestamp,
                           "table": self.table, "spec": self.spec, "resolved": self.resolved,
                           "points": self.points}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(d["spec"], d["version"], d["timestamp"], d["points"], d.get("table", "sweep.csv"),
                   d.get("resolved", {}))


def _resolved(spec: SweepSpec) -> dict:
    t, k = spec.tls, spec.tank
    return {
        "units": "rad/s, s, H, A, K",
        "tls": {"delta": t.delta, "epsilon": t.epsilon, "temperature": t.temperature,
                "gamma_phi": t.gamma_phi, "gamma_z": t.gamma_z,
                "polarization_convention": t.polarization_convention},
        "tank": {"omega_t": k.omega_t, "q_t": k.q_t, "l_t": k.l_t, "k": k.k, "l_q": k.l_q,
                 "i_q": k.i_q, "i0": k.i0},
        "f": spec.f, "delta": spec.delta, "omega0": spec.omega0, "omega": spec.omega,
        "axes": [a.__dict__ for a in spec.axes], "engine": spec.engine,
        "convention": spec.convention,
    }


def run_sweep(spec: SweepSpec, threads: int = 1) -> tuple[str, RunManifest, list[PointResult]]:
    """Evaluate every grid point; returns (CSV text, manifest, results).

    The analytic engine uses a thread pool, the ODE engine a process pool.
    """
    grid = spec.grid() if spec.axes else [{}]
    if threads > 1:
        pool_cls = ThreadPoolExecutor if spec.engine == "analytic" else ProcessPoolExecutor
        with pool_cls(threads) as pool:
            results = list(pool.map(evaluate_point, [spec] * len(grid), grid))
    else:
        results = [evaluate_point(spec, p) for p in grid]
    cols = columns(spec)
    text = table_text(results, cols)
    points = [{"index": i, "status": r.status} for i, r in enumerate(results)]
    manifest = RunManifest(spec.document, __version__,
                           time.strftime("%Y-%m-%dT%H:%M:%S%z"), points, resolved=_resolved(spec))
    return text, manifest, results


def rerun_manifest(manifest: RunManifest, threads: int = 1) -> str:
    """Regenerate the table of a previous run."""
    return run_sweep(parse_sweep_spec(manifest.spec), threads)[0]


# --- reference-device phase curves -----------------------------------------

LOW_POWER_RATIOS = (0.0, 0.1, 0.3, 1.0)
HIGH_POWER_RATIOS = (10.0, 30.0, 100.0, 300.0)
FIG1_COLUMNS = ["f_x", "power_ratio", "f_drive", "f_drive_over_2pi", "xi", "gamma_t", "v_t",
                "chi", "status"]


@dataclass(frozen=True)
class Fig1Options:
    """Power families are given as f^2 / (Gamma_z Gamma); the crossover is 1."""

    low: tuple[float, ...] = LOW_POWER_RATIOS
    high: tuple[float, ...] = HIGH_POWER_RATIOS
    f_x_max: float = 0.04
    count: int = 801
    convention: str = "bloch"
    overrides: dict = field(default_factory=dict)


def fig1_family(ratios, opts: Fig1Options) -> list[list[str]]:
    """chi(f_X) at zero detuning, probe at the tank resonance, per power."""
    from .params import FIG1, fig1_tank, fig1_tls

    tank = fig1_tank()
    base = fig1_tls(0.0)
    if opts.overrides:
        base = base.with_rates(opts.overrides.get("gamma_phi", base.gamma_phi),
                               opts.overrides.get("gamma_z", base.gamma_z))
    crossover = base.gamma_z * base.gamma_phi
    omega = FIG1["omega"]
    rows = []
    for ratio in ratios:
        if ratio < 0:
            raise ConfigError("power ratios must be non-negative", "/fig1")
        f = math.sqrt(ratio * crossover)
        for f_x in np.linspace(-opts.f_x_max, opts.f_x_max, opts.count):
            tls = base.with_bias(FIG1["e_j"] * float(f_x) / HBAR)
            try:
                pt = readout.readout(tls, tank, f, 0.0, omega, opts.convention,
                                     regime="resonant_delta0")
                vals, status = (pt.xi, pt.gamma_t_eff, pt.v_t, pt.chi), "ok"
            except ArithmeticError as exc:
                vals, status = (math.nan,) * 4, f"error: {type(exc).__name__}: {exc}"
            rows.append([_fmt(v) for v in (f_x, ratio, f, f / TWO_PI, *vals)] + [status])
    return rows


def fig1_recipe(opts: Fig1Options | None = None) -> dict[str, str]:
    """CSV text of the low- and high-power families, keyed by file name."""
    opts = opts or Fig1Options()
    out = {}
    for name, ratios in (("fig1_low.csv", opts.low), ("fig1_high.csv", opts.high)):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(FIG1_COLUMNS)
        w.writerows(fig1_family(ratios, opts))
        out[name] = buf.getvalue()
    return out
