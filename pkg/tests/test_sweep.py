import copy
import csv
import io
import json
import math
import pathlib

import pytest

from rabispec import readout, rwa, sweep
from rabispec.params import TWO_PI, ConfigError, fig1_tank

ROOT = pathlib.Path(__file__).resolve().parents[1]
BASE = json.loads((ROOT / "configs" / "sweep_flux.json").read_text())


def doc(**over):
    d = copy.deepcopy(BASE)
    d.update(over)
    return d


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize("bad, pointer", [
    (doc(axes=[{"name": "bias", "min": 0, "max": 1, "count": 3}]), "/axes/0/name"),
    (doc(axes=[{"name": "f_x", "min": 0, "max": 1, "count": 1}]), "/axes/0/count"),
    (doc(axes=[{"name": "f_x", "min": 1, "max": 0, "count": 3}]), "/axes/0"),
    (doc(axes=[{"name": "f", "min": {"value": 0, "unit": "MHz"}, "max": {"value": 1, "unit": "MHz"},
                "count": 3, "spacing": "log"}]), "/axes/0/min"),
    (doc(axes=[{"name": "omega", "min": 1, "max": 2, "count": 3}]), "/axes/0/min"),
    (doc(engine="spice"), "/engine"),
    (doc(outputs=["chi", "phase"]), "/outputs/1"),
    (doc(surprise=1), "/"),
    (doc(tank={"q_t": 10}), "/tank"),
])
def test_schema_errors_have_pointers(bad, pointer):
    with pytest.raises(ConfigError) as info:
        sweep.parse_sweep_spec(bad)
    assert info.value.path == pointer


def test_flux_axis_needs_flux_block():
    d = doc()
    tls = d["tls"]
    del tls["flux"]
    tls["epsilon"] = {"value": 0, "unit": "MHz"}
    with pytest.raises(ConfigError) as info:
        sweep.parse_sweep_spec(d)
    assert info.value.path == "/axes/0/name"


def test_single_point_equals_direct_readout():
    spec = sweep.parse_sweep_spec(doc(axes=[]))
    text, manifest, results = sweep.run_sweep(spec)
    (row,) = rows(text)
    pt = readout.readout(spec.tls, spec.tank, spec.f, 0.0, spec.omega)
    assert float(row["chi"]) == pt.chi and float(row["xi"]) == pt.xi
    assert row["regime"] == pt.regime and row["status"] == "ok"
    assert manifest.points == [{"index": 0, "status": "ok"}]


def test_uncoupled_sweep_gives_constant_columns():
    d = doc()
    d["tank"]["k"] = 0.0
    text, _, _ = sweep.run_sweep(sweep.parse_sweep_spec(d))
    table = rows(text)
    for col in ("xi", "gamma_t", "v_t", "chi"):
        assert len({r[col] for r in table}) == 1


def test_row_order_and_two_axes():
    d = doc(axes=[{"name": "f_x", "min": -0.01, "max": 0.01, "count": 3},
                  {"name": "f", "min": {"value": 0.1, "unit": "MHz"},
                   "max": {"value": 10, "unit": "MHz"}, "count": 3, "spacing": "log"}])
    text, _, _ = sweep.run_sweep(sweep.parse_sweep_spec(d))
    table = rows(text)
    assert [float(r["f_x"]) for r in table] == [-0.01] * 3 + [0.0] * 3 + [0.01] * 3
    assert float(table[1]["f_drive_over_2pi"]) == pytest.approx(1e6)


def test_threads_do_not_change_output():
    d = doc(axes=[{"name": "f_x", "min": -0.04, "max": 0.04, "count": 101}])
    spec = sweep.parse_sweep_spec(d)
    assert sweep.run_sweep(spec, 1)[0] == sweep.run_sweep(spec, 4)[0]


@pytest.mark.filterwarnings("ignore::rabispec.rwa.DegeneratePolarizationWarning")
def test_failing_points_only_poison_their_rows():
    d = doc(axes=[{"name": "f", "min": {"value": 0, "unit": "MHz"},
                   "max": {"value": 1, "unit": "MHz"}, "count": 3}])
    d["tls"]["gamma_phi"] = {"value": 0, "unit": "MHz"}
    text, manifest, _ = sweep.run_sweep(sweep.parse_sweep_spec(d))
    table = rows(text)
    assert table[0]["status"] == "ok" and math.isfinite(float(table[0]["chi"]))
    for r in table[1:]:
        assert r["status"].startswith("error: ReadoutSingularityError")
        assert r["chi"] == "nan"
    assert [p["status"] == "ok" for p in manifest.points] == [True, False, False]


def test_csv_dialect():
    text, _, _ = sweep.run_sweep(sweep.parse_sweep_spec(doc()))
    assert text.endswith("\r\n")
    header = text.split("\r\n")[0].split(",")
    assert header[:7] == ["f_x", "f_drive", "omega", "xi", "gamma_t", "v_t", "chi"]
    assert header[-1] == "status"


def test_rwa_columns():
    d = doc(outputs=["chi", "rwa"], axes=[])
    d["drive"]["detuning"] = {"value": 30, "unit": "MHz"}
    spec = sweep.parse_sweep_spec(d)
    (row,) = rows(sweep.run_sweep(spec)[0])
    r = rwa.slow_response(spec.tls, spec.f, spec.delta, spec.omega)
    assert float(row["re_z"]) == complex(r.z).real and float(row["im_x"]) == complex(r.x).imag


def test_manifest_reproduces_table():
    spec = sweep.parse_sweep_spec(doc())
    text, manifest, _ = sweep.run_sweep(spec)
    again = sweep.RunManifest.from_json(manifest.to_json())
    assert sweep.rerun_manifest(again) == text
    assert json.loads(manifest.to_json())["resolved"]["engine"] == "analytic"


def test_fig1_recipe_families():
    opts = sweep.Fig1Options(count=41)
    tables = sweep.fig1_recipe(opts)
    assert set(tables) == {"fig1_low.csv", "fig1_high.csv"}
    low = rows(tables["fig1_low.csv"])
    assert len(low) == 41 * len(opts.low)
    assert list(low[0]) == sweep.FIG1_COLUMNS
    assert all(r["status"] == "ok" for r in low)


def test_fig1_low_power_dip_follows_p0():
    opts = sweep.Fig1Options(low=(0.0, 1.0), high=(), count=41)
    low = rows(sweep.fig1_recipe(opts)["fig1_low.csv"])
    centre = {float(r["power_ratio"]): math.tan(float(r["chi"])) for r in low if float(r["f_x"]) == 0}
    # P0 = 1 / (1 + ratio)
    assert centre[1.0] / centre[0.0] == pytest.approx(0.5, rel=1e-9)


def test_default_tank_is_reference_tank():
    spec = sweep.parse_sweep_spec(doc())
    assert spec.tank.omega_t == pytest.approx(fig1_tank().omega_t)
    assert spec.omega == pytest.approx(TWO_PI * 6e6)
