"""Physical parameter types, unit handling and derived scalar quantities.

Internally every frequency and rate is an angular frequency in rad/s and
energies divided by hbar are used wherever a Hamiltonian term enters the
dynamics (hbar = 1 convention). Conversions happen only at the boundary, in
:func:`to_internal` / :func:`from_internal` and the JSON loaders.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import constants as _const

HBAR = _const.hbar
K_B = _const.k
H_PLANCK = _const.h
E_CHARGE = _const.e
FLUX_QUANTUM = _const.h / (2 * _const.e)
TWO_PI = 2.0 * math.pi

POLARIZATION_CONVENTIONS = ("paper", "thermodynamic")


class ConfigError(ValueError):
    """Invalid parameter file or parameter value; ``path`` is a JSON pointer."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path or "/"


class WeakDriveWarning(UserWarning):
    pass


# --- units -----------------------------------------------------------------

_FREQUENCY_UNITS = {
    "Hz": TWO_PI,
    "kHz": TWO_PI * 1e3,
    "MHz": TWO_PI * 1e6,
    "GHz": TWO_PI * 1e9,
    "rad_s": 1.0,
}
_ENERGY_UNITS = {"J": 1.0}
_TEMPERATURE_UNITS = {"K": 1.0, "mK": 1e-3}
_CURRENT_UNITS = {"A": 1.0, "mA": 1e-3, "uA": 1e-6, "nA": 1e-9, "pA": 1e-12, "fA": 1e-15}
_INDUCTANCE_UNITS = {"H": 1.0, "mH": 1e-3, "uH": 1e-6, "nH": 1e-9, "pH": 1e-12}

UNIT_TABLES = {
    "frequency": _FREQUENCY_UNITS,
    "energy": _ENERGY_UNITS,
    "temperature": _TEMPERATURE_UNITS,
    "current": _CURRENT_UNITS,
    "inductance": _INDUCTANCE_UNITS,
}


def to_internal(value: float, unit: str, kind: str = "frequency") -> float:
    """Convert a tagged external value to the internal representation.

    Frequencies given in Hz-like units are ordinary frequencies (omega / 2 pi)
    and come back as rad/s.
    """
    table = UNIT_TABLES[kind]
    if unit not in table:
        raise ConfigError(f"unknown {kind} unit {unit!r}; expected one of {sorted(table)}")
    return float(value) * table[unit]


def from_internal(value: float, unit: str, kind: str = "frequency") -> float:
    table = UNIT_TABLES[kind]
    if unit not in table:
        raise ConfigError(f"unknown {kind} unit {unit!r}; expected one of {sorted(table)}")
    return float(value) / table[unit]


def _finite(name: str, *values: float) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name}: non-finite input {v!r}")


# --- derived scalars -------------------------------------------------------

def eigenbasis_gap(delta, epsilon):
    """Level splitting sqrt(delta^2 + epsilon^2) in rad/s."""
    _finite("eigenbasis_gap", delta, epsilon)
    if np.any(np.asarray(delta) <= 0):
        raise ValueError("eigenbasis_gap: delta must be positive")
    return np.hypot(delta, epsilon)


def flux_to_bias(flux: "FluxSpec") -> float:
    """Bias epsilon = E_J * f_X expressed as an angular frequency."""
    return flux.e_j * flux.f_x / HBAR


def equilibrium_polarization(delta_eps, temperature, convention: str = "paper"):
    """Undriven polarization Z0 = -tanh(hbar*gap / k_B T).

    ``convention="paper"`` uses the argument hbar*gap/k_B T;
    ``"thermodynamic"`` uses the conventional hbar*gap/2k_B T.
    T = 0 gives -1 for any positive gap.
    """
    if convention not in POLARIZATION_CONVENTIONS:
        raise ValueError(f"unknown polarization convention {convention!r}")
    delta_eps = np.asarray(delta_eps, dtype=float)
    temperature = np.asarray(temperature, dtype=float)
    if np.any(temperature < 0):
        raise ValueError("temperature must be >= 0")
    denom = K_B * temperature * (2.0 if convention == "thermodynamic" else 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(denom > 0, HBAR * delta_eps / np.where(denom > 0, denom, 1.0), np.inf)
    arg = np.where(delta_eps == 0, 0.0, arg)
    z0 = -np.tanh(arg)
    return float(z0) if z0.ndim == 0 else z0


def rabi_frequency(detuning, f):
    return np.hypot(detuning, f)


# --- parameter types -------------------------------------------------------

@dataclass(frozen=True)
class FluxSpec:
    f_x: float
    e_j: float
    i_q: float

    def __post_init__(self):
        _finite("FluxSpec", self.f_x, self.e_j, self.i_q)
        if self.e_j <= 0 or self.i_q <= 0:
            raise ValueError("FluxSpec: e_j and i_q must be positive")


@dataclass(frozen=True)
class TlsParams:
    """Undriven two-level system; all rates in rad/s."""

    delta: float
    epsilon: float
    temperature: float
    gamma_phi: float
    gamma_z: float
    polarization_convention: str = "paper"

    def __post_init__(self):
        _finite("TlsParams", self.delta, self.epsilon, self.temperature, self.gamma_phi, self.gamma_z)
        if self.delta <= 0:
            raise ValueError("TlsParams: delta must be positive")
        if self.gamma_phi < 0 or self.gamma_z < 0 or self.temperature < 0:
            raise ValueError("TlsParams: rates and temperature must be non-negative")
        if self.polarization_convention not in POLARIZATION_CONVENTIONS:
            raise ValueError(f"unknown polarization convention {self.polarization_convention!r}")

    @property
    def delta_eps(self) -> float:
        return float(math.hypot(self.delta, self.epsilon))

    @property
    def z0(self) -> float:
        return equilibrium_polarization(self.delta_eps, self.temperature, self.polarization_convention)

    @property
    def eps_ratio(self) -> float:
        """epsilon / delta."""
        return self.epsilon / self.delta

    def with_bias(self, epsilon: float) -> "TlsParams":
        return TlsParams(self.delta, epsilon, self.temperature, self.gamma_phi,
                         self.gamma_z, self.polarization_convention)

    def with_rates(self, gamma_phi: float, gamma_z: float) -> "TlsParams":
        return TlsParams(self.delta, self.epsilon, self.temperature, gamma_phi,
                         gamma_z, self.polarization_convention)


@dataclass(frozen=True)
class DriveParams:
    """Carrier amplitude ``f`` and frequency ``omega0``; probe ``g0`` at ``omega``."""

    f: float
    omega0: float
    g0: float = 0.0
    omega: float = 1.0

    def __post_init__(self):
        _finite("DriveParams", self.f, self.omega0, self.g0, self.omega)
        if self.f < 0 or self.g0 < 0:
            raise ValueError("DriveParams: amplitudes must be non-negative")
        if self.omega0 <= 0 or self.omega <= 0:
            raise ValueError("DriveParams: frequencies must be positive")

    def detuning(self, tls: TlsParams) -> float:
        return self.omega0 - tls.delta_eps

    def check_weak(self, tls: TlsParams, limit: float = 0.1) -> bool:
        weak = self.f <= limit * tls.delta
        if not weak:
            warnings.warn(f"f/delta = {self.f / tls.delta:.3g} exceeds {limit}; "
                          "Bloch-type equations assume f << delta", WeakDriveWarning, stacklevel=2)
        return weak


@dataclass(frozen=True)
class TankParams:
    omega_t: float
    q_t: float
    l_t: float
    k: float
    l_q: float
    i_q: float
    i0: float = 1e-14

    def __post_init__(self):
        _finite("TankParams", self.omega_t, self.q_t, self.l_t, self.k, self.l_q, self.i_q, self.i0)
        if self.omega_t <= 0 or self.q_t <= 0 or self.l_t <= 0 or self.l_q <= 0:
            raise ValueError("TankParams: omega_t, q_t, l_t, l_q must be positive")
        if not 0 <= self.k < 1:
            raise ValueError("TankParams: coupling k must lie in [0, 1)")

    @property
    def gamma_t(self) -> float:
        return self.omega_t / self.q_t

    @property
    def mutual(self) -> float:
        return self.k * math.sqrt(self.l_q * self.l_t)

    def with_coupling(self, k: float) -> "TankParams":
        return TankParams(self.omega_t, self.q_t, self.l_t, k, self.l_q, self.i_q, self.i0)


@dataclass(frozen=True)
class IntegratorSettings:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = math.inf

    def __post_init__(self):
        if not (1e-12 <= self.rtol <= 1e-3):
            raise ValueError("rtol must lie in [1e-12, 1e-3]")
        if self.atol <= 0:
            raise ValueError("atol must be positive")


@dataclass(frozen=True)
class Config:
    """Everything a parameter file can specify; absent blocks are ``None``."""

    tls: TlsParams
    drive: DriveParams | None = None
    tank: TankParams | None = None
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    flux: FluxSpec | None = None
    meta: dict = field(default_factory=dict)


# --- reference device ------------------------------------------------------

FIG1 = {
    "omega": TWO_PI * 6e6,
    "omega_t": TWO_PI * 6e6,
    "k": 0.03,
    "q_t": 2000.0,
    "e_j": 1.32e-22,
    "e_c": 2.14e-24,
    "l_q": 40e-12,
    "i_q": 280e-9,
    "delta": TWO_PI * 1e9,
    "gamma_z": TWO_PI * 0.1e6,
    "gamma_phi": TWO_PI * 4e6,
    "temperature": 10e-3,
}


def fig1_tls(f_x: float = 0.0, convention: str = "paper") -> TlsParams:
    eps = flux_to_bias(FluxSpec(f_x, FIG1["e_j"], FIG1["i_q"]))
    return TlsParams(FIG1["delta"], eps, FIG1["temperature"], FIG1["gamma_phi"],
                     FIG1["gamma_z"], convention)


def fig1_tank(l_t: float = 50e-9, i0: float = 1e-14) -> TankParams:
    """Tank of the reference device. L_T and I0 are free choices; they only
    scale V_T and leave xi, Gamma_T and chi unchanged. The default I0 keeps
    the coil's back-action on the qubit well inside linear response, which
    matters only for time-domain simulation."""
    return TankParams(FIG1["omega_t"], FIG1["q_t"], l_t, FIG1["k"], FIG1["l_q"], FIG1["i_q"], i0)


# --- JSON ingestion --------------------------------------------------------

def _expect_keys(obj: Any, path: str, required: set[str], optional: set[str] = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", path)
    unknown = set(obj) - required - set(optional)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", path)
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing key(s) {sorted(missing)}", path)


def parse_quantity(obj: Any, kind: str, path: str) -> float:
    if isinstance(obj, (int, float)) and kind == "dimensionless":
        return float(obj)
    _expect_keys(obj, path, {"value", "unit"})
    value = obj["value"]
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigError("value must be a finite number", path + "/value")
    try:
        return to_internal(value, obj["unit"], kind)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], path + "/unit") from None


def _number(obj: Any, path: str) -> float:
    if not isinstance(obj, (int, float)) or isinstance(obj, bool) or not math.isfinite(obj):
        raise ConfigError("expected a finite number", path)
    return float(obj)


def parse_flux(obj: Any, path: str) -> FluxSpec:
    _expect_keys(obj, path, {"f_x", "e_j", "i_q"})
    return FluxSpec(_number(obj["f_x"], path + "/f_x"),
                    parse_quantity(obj["e_j"], "energy", path + "/e_j"),
                    parse_quantity(obj["i_q"], "current", path + "/i_q"))


def parse_tls(obj: Any, path: str = "/tls") -> tuple[TlsParams, FluxSpec | None]:
    _expect_keys(obj, path, {"delta", "temperature", "gamma_phi", "gamma_z"},
                 {"epsilon", "flux", "polarization_convention"})
    if ("epsilon" in obj) == ("flux" in obj):
        raise ConfigError("give exactly one of 'epsilon' or 'flux'", path)
    flux = None
    if "flux" in obj:
        flux = parse_flux(obj["flux"], path + "/flux")
        eps = flux_to_bias(flux)
    else:
        eps = parse_quantity(obj["epsilon"], "frequency", path + "/epsilon")
    conv = obj.get("polarization_convention", "paper")
    if conv not in POLARIZATION_CONVENTIONS:
        raise ConfigError(f"must be one of {POLARIZATION_CONVENTIONS}", path + "/polarization_convention")
    try:
        tls = TlsParams(parse_quantity(obj["delta"], "frequency", path + "/delta"), eps,
                        parse_quantity(obj["temperature"], "temperature", path + "/temperature"),
                        parse_quantity(obj["gamma_phi"], "frequency", path + "/gamma_phi"),
                        parse_quantity(obj["gamma_z"], "frequency", path + "/gamma_z"), conv)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), path) from None
    return tls, flux


def parse_drive(obj: Any, tls: TlsParams, path: str = "/drive") -> DriveParams:
    _expect_keys(obj, path, {"f"}, {"omega0", "detuning", "g0", "omega"})
    if ("omega0" in obj) == ("detuning" in obj):
        raise ConfigError("give exactly one of 'omega0' or 'detuning'", path)
    if "omega0" in obj:
        omega0 = parse_quantity(obj["omega0"], "frequency", path + "/omega0")
    else:
        omega0 = tls.delta_eps + parse_quantity(obj["detuning"], "frequency", path + "/detuning")
    g0 = parse_quantity(obj["g0"], "frequency", path + "/g0") if "g0" in obj else 0.0
    omega = parse_quantity(obj["omega"], "frequency", path + "/omega") if "omega" in obj else 1.0
    try:
        return DriveParams(parse_quantity(obj["f"], "frequency", path + "/f"), omega0, g0, omega)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def parse_tank(obj: Any, path: str = "/tank") -> TankParams:
    _expect_keys(obj, path, {"omega_t", "q_t", "l_t", "k", "l_q", "i_q"}, {"i0"})
    try:
        return TankParams(parse_quantity(obj["omega_t"], "frequency", path + "/omega_t"),
                          _number(obj["q_t"], path + "/q_t"),
                          parse_quantity(obj["l_t"], "inductance", path + "/l_t"),
                          _number(obj["k"], path + "/k"),
                          parse_quantity(obj["l_q"], "inductance", path + "/l_q"),
                          parse_quantity(obj["i_q"], "current", path + "/i_q"),
                          parse_quantity(obj["i0"], "current", path + "/i0") if "i0" in obj else 1e-14)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), path) from None


def parse_integrator(obj: Any, path: str = "/integrator") -> IntegratorSettings:
    _expect_keys(obj, path, set(), {"rtol", "atol", "max_step"})
    try:
        return IntegratorSettings(_number(obj.get("rtol", 1e-10), path + "/rtol"),
                                  _number(obj.get("atol", 1e-12), path + "/atol"),
                                  _number(obj.get("max_step", math.inf), path + "/max_step")
                                  if obj.get("max_step") is not None else math.inf)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), path) from None


CONFIG_KEYS = {"tls", "drive", "tank", "integrator", "meta"}


def parse_config(obj: Any, extra_keys: set[str] = frozenset()) -> Config:
    """Build a :class:`Config` from a decoded JSON document.

    Unknown keys anywhere are rejected with a JSON-pointer path.
    """
    _expect_keys(obj, "", {"tls"}, (CONFIG_KEYS - {"tls"}) | set(extra_keys))
    tls, flux = parse_tls(obj["tls"])
    drive = parse_drive(obj["drive"], tls) if "drive" in obj else None
    tank = parse_tank(obj["tank"]) if "tank" in obj else None
    integ = parse_integrator(obj["integrator"]) if "integrator" in obj else IntegratorSettings()
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise ConfigError("expected an object", "/meta")
    if "e_c" in meta:
        parse_quantity(meta["e_c"], "energy", "/meta/e_c")
    return Config(tls, drive, tank, integ, flux, dict(meta))


def load_config(path) -> Config:
    import json

    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    return parse_config(doc)


def quantity(value: float, unit: str) -> dict:
    return {"value": value, "unit": unit}
