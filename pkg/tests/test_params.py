import math
import pathlib
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rabispec import params as P
from rabispec.params import TWO_PI, ConfigError, TlsParams


def tls_doc(**over):
    doc = {
        "delta": {"value": 1, "unit": "GHz"},
        "epsilon": {"value": 0.5, "unit": "GHz"},
        "temperature": {"value": 10, "unit": "mK"},
        "gamma_phi": {"value": 4, "unit": "MHz"},
        "gamma_z": {"value": 0.1, "unit": "MHz"},
    }
    doc.update(over)
    return doc


def test_gap_is_hypotenuse():
    assert P.eigenbasis_gap(3.0, 4.0) == 5.0
    assert P.eigenbasis_gap(2.0, 0.0) == 2.0


def test_gap_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        P.eigenbasis_gap(0.0, 1.0)


@given(st.floats(1e-3, 1e12), st.sampled_from(["Hz", "kHz", "MHz", "GHz", "rad_s"]))
def test_unit_round_trip(value, unit):
    back = P.from_internal(P.to_internal(value, unit), unit)
    assert abs(back - value) <= 1e-12 * value


def test_frequency_units_are_angular():
    assert P.to_internal(1.0, "MHz") == TWO_PI * 1e6
    assert P.to_internal(5.0, "rad_s") == 5.0


def test_unknown_unit():
    with pytest.raises(ConfigError):
        P.to_internal(1.0, "furlong")


def test_flux_to_bias():
    flux = P.FluxSpec(0.01, 1.32e-22, 280e-9)
    assert P.flux_to_bias(flux) == pytest.approx(1.32e-24 / P.HBAR, rel=1e-15)


def test_polarization_conventions():
    gap, t = TWO_PI * 1e9, 0.05
    x = P.HBAR * gap / (P.K_B * t)
    assert P.equilibrium_polarization(gap, t, "paper") == pytest.approx(-math.tanh(x))
    assert P.equilibrium_polarization(gap, t, "thermodynamic") == pytest.approx(-math.tanh(x / 2))
    assert P.equilibrium_polarization(gap, 0.0) == -1.0


def test_rabi_frequency():
    assert P.rabi_frequency(3.0, 4.0) == 5.0


def test_tls_invariants():
    with pytest.raises(ValueError):
        TlsParams(-1.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        TlsParams(1.0, 0.0, 0.0, -1.0, 0.0)
    tls = TlsParams(3.0, 4.0, 0.0, 0.0, 0.0)
    assert tls.delta_eps == 5.0 and tls.eps_ratio == pytest.approx(4 / 3)


def test_weak_drive_warning():
    tls = TlsParams(1.0, 0.0, 0.0, 0.0, 0.0)
    drive = P.DriveParams(0.5, 1.0)
    with pytest.warns(P.WeakDriveWarning):
        assert not drive.check_weak(tls)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert P.DriveParams(0.05, 1.0).check_weak(tls)


def test_tank_derived():
    tank = P.TankParams(100.0, 50.0, 1e-9, 0.1, 4e-12, 1e-7)
    assert tank.gamma_t == 2.0
    assert tank.mutual == pytest.approx(0.1 * math.sqrt(4e-21))


def test_parse_tls_quantities():
    tls, flux = P.parse_tls(tls_doc())
    assert flux is None
    assert tls.delta == pytest.approx(TWO_PI * 1e9)
    assert tls.temperature == pytest.approx(0.01)


def test_parse_tls_flux():
    doc = tls_doc()
    del doc["epsilon"]
    doc["flux"] = {"f_x": 0.01, "e_j": {"value": 1.32e-22, "unit": "J"},
                   "i_q": {"value": 280, "unit": "nA"}}
    tls, flux = P.parse_tls(doc)
    assert tls.epsilon == pytest.approx(1.32e-24 / P.HBAR)
    assert flux.i_q == pytest.approx(280e-9)


@pytest.mark.parametrize("doc, pointer", [
    (tls_doc(delta={"value": 1, "unit": "parsec"}), "/tls/delta/unit"),
    (tls_doc(gamma_z={"value": "x", "unit": "MHz"}), "/tls/gamma_z/value"),
    (tls_doc(bogus=1), "/tls"),
    (tls_doc(flux={"f_x": 0, "e_j": {"value": 1, "unit": "J"}, "i_q": {"value": 1, "unit": "A"}}),
     "/tls"),
    (tls_doc(polarization_convention="other"), "/tls/polarization_convention"),
])
def test_parse_errors_carry_pointer(doc, pointer):
    with pytest.raises(ConfigError) as info:
        P.parse_tls(doc)
    assert info.value.path == pointer


def test_parse_config_rejects_unknown_top_level():
    with pytest.raises(ConfigError) as info:
        P.parse_config({"tls": tls_doc(), "extra": {}})
    assert info.value.path == "/"


def test_parse_drive_detuning_and_omega0():
    tls, _ = P.parse_tls(tls_doc())
    d = P.parse_drive({"f": {"value": 1, "unit": "MHz"}, "detuning": {"value": 2, "unit": "MHz"}}, tls)
    assert d.omega0 == pytest.approx(tls.delta_eps + TWO_PI * 2e6)
    with pytest.raises(ConfigError):
        P.parse_drive({"f": {"value": 1, "unit": "MHz"}}, tls)


def test_reference_device_values():
    tls = P.fig1_tls(0.0)
    assert tls.epsilon == 0.0
    assert tls.gamma_phi == pytest.approx(TWO_PI * 4e6)
    assert P.fig1_tank().gamma_t == pytest.approx(TWO_PI * 6e6 / 2000)


def test_load_shipped_config():
    root = pathlib.Path(__file__).resolve().parents[1]
    cfg = P.load_config(root / "configs" / "simulate.json")
    assert cfg.drive.omega == pytest.approx(TWO_PI * 6e6)
    assert cfg.flux.f_x == 0.002


def test_e_c_metadata_unit_checked():
    with pytest.raises(ConfigError) as info:
        P.parse_config({"tls": tls_doc(), "meta": {"e_c": {"value": 1, "unit": "MHz"}}})
    assert info.value.path == "/meta/e_c/unit"


def test_with_bias_keeps_rates():
    tls = P.fig1_tls(0.0).with_bias(5.0)
    assert tls.epsilon == 5.0 and tls.gamma_z == pytest.approx(TWO_PI * 0.1e6)
    assert np.isfinite(tls.z0)
