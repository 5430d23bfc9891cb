"""Tank-circuit readout of the driven qubit.

The tank voltage obeys a damped oscillator equation sourced by the qubit
current; in linear response the qubit shifts the tank's squared resonance to
``xi + omega^2`` and its damping to ``Gamma_T``. Three evaluation routes:

* :func:`xi_gamma_general`: closed form valid when ``delta * |detuning| >> f^2``;
* :func:`xi_gamma_resonant`: closed form at zero carrier detuning;
* :func:`full_linear_response`: the self-consistent solve of the tank equation
  with the slow transfer functions Z, X, Y substituted directly.

Units: rates in rad/s, ``xi`` in rad^2/s^2, voltages in volts. The prefactor
``2 k^2 w_T^2 L_q I_q^2 delta^2 / gap^3`` has ``L_q I_q^2`` in joule; it is
divided by hbar once so that, with ``delta`` and ``gap`` in rad/s, the
product carries rad^2/s^2.

The ``convention`` argument selects the sign of the adiabatic (ground-state)
term, see :mod:`rabispec.rwa`. With ``"bloch"`` the ground state lowers the
tank frequency; ``"literal"`` flips that term and raises it instead.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import rwa
from .params import HBAR, TankParams, TlsParams, rabi_frequency

SINGULAR_D = 1e-30
COLLISION_TOL = 1e-12

REGIMES = ("general", "resonant_delta0", "full_linear_response")


class ReadoutSingularityError(ArithmeticError):
    pass


class ResonanceCollisionError(ArithmeticError):
    pass


class PhaseUndefinedError(ArithmeticError):
    pass


class RegimeWarning(UserWarning):
    pass


def _sigma(convention: str) -> float:
    if convention not in rwa.CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    return 1.0 if convention == "literal" else -1.0


def resonance_functions(omega, omega_r, f, gamma_phi, gamma_z):
    """The real functions f1, f2 and d(omega) of the Rabi resonance."""
    omega = np.asarray(omega, dtype=float)
    g, gz = gamma_phi, gamma_z
    w2 = omega ** 2
    r = omega_r ** 2 + g ** 2 - w2
    f1 = (2 * g * gz + w2) * r + 2 * w2 * g * (gz - 2 * g) - 2 * f ** 2 * g * (gz - g)
    f2 = gz * r + f ** 2 * (g - gz) - 2 * g * (omega_r ** 2 + g ** 2 + 2 * g * gz)
    d = ((r ** 2 + 4 * w2 * g ** 2) * (w2 + gz ** 2) + f ** 4 * (gz - g) ** 2
         - 2 * f ** 2 * (gz - g) * (gz * r - 2 * w2 * g))
    return f1, f2, d


def adiabatic_prefactor(tls: TlsParams, tank: TankParams) -> float:
    """2 k^2 w_T^2 L_q I_q^2 delta^2 / (hbar gap^3), in rad^2/s^2."""
    energy = tank.l_q * tank.i_q ** 2
    return (2 * tank.k ** 2 * tank.omega_t ** 2 * (energy / HBAR)
            * tls.delta ** 2 / tls.delta_eps ** 3)


def xi_gamma_general(tls: TlsParams, tank: TankParams, f: float, delta: float, omega,
                     convention: str = "bloch", warn: bool = True):
    """(xi, Gamma_T) for ``delta * |detuning| >> f^2``."""
    sigma = _sigma(convention)
    if warn and f > 0 and tls.delta * abs(delta) < 10 * f ** 2:
        warnings.warn(f"delta*|detuning| / f^2 = {tls.delta * abs(delta) / f ** 2:.3g} < 10; "
                      "the off-resonant closed form is outside its validity range",
                      RegimeWarning, stacklevel=2)
    omega = np.asarray(omega, dtype=float)
    gam, gz = tls.gamma_phi, tls.gamma_z
    kpz = adiabatic_prefactor(tls, tank) * rwa.pz(delta, f, gam, gz) * tls.z0
    if f == 0:
        # the Rabi term vanishes identically; nothing to divide
        xi = tank.omega_t ** 2 - omega ** 2 - kpz * sigma
        return _unwrap(xi), _unwrap(tank.gamma_t + 0.0 * omega)
    om_r = float(rabi_frequency(delta, f))
    f1, f2, d = resonance_functions(omega, om_r, f, gam, gz)
    if np.any(d < SINGULAR_D):
        raise ReadoutSingularityError("d(omega) vanishes")
    lor = delta ** 2 + gam ** 2
    if lor == 0:
        raise ReadoutSingularityError("delta^2 + gamma^2 vanishes")
    rabi = tls.eps_ratio ** 2 * f ** 2 * tls.delta_eps * delta / lor
    xi = tank.omega_t ** 2 - omega ** 2 - kpz * (sigma + rabi * f1 / d)
    gamma_t = tank.gamma_t - kpz * rabi * f2 / d
    return _unwrap(xi), _unwrap(gamma_t)


def xi_gamma_resonant(tls: TlsParams, tank: TankParams, f: float, omega,
                      convention: str = "bloch"):
    """(xi, Gamma_T) at zero carrier detuning."""
    sigma = _sigma(convention)
    gam, gz = tls.gamma_phi, tls.gamma_z
    if gam == 0 and f > 0:
        raise ReadoutSingularityError("gamma_phi = 0 with f > 0: the damping correction diverges")
    omega = np.asarray(omega, dtype=float)
    kpz = adiabatic_prefactor(tls, tank) * rwa.p0(f, gam, gz) * tls.z0
    rabi = tls.eps_ratio ** 2 * f ** 2 / (gam ** 2 + omega ** 2)
    xi = tank.omega_t ** 2 - omega ** 2 - kpz * (sigma + rabi)
    if f == 0:
        gamma_t = tank.gamma_t + 0.0 * omega
    else:
        gamma_t = tank.gamma_t + kpz * rabi / gam
    return _unwrap(xi), _unwrap(gamma_t)


def _unwrap(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def amplitude_phase(xi, gamma_t, tank: TankParams, omega):
    """Voltage amplitude V_T and phase chi of ``V = V_T cos(omega t + chi)``.

    chi = atan2(xi, omega Gamma_T): continuous through xi = 0 and in
    (-pi/2, pi/2] whenever Gamma_T > 0.
    """
    xi = np.asarray(xi, dtype=float)
    wg = np.asarray(omega, dtype=float) * np.asarray(gamma_t, dtype=float)
    den = np.hypot(xi, wg)
    if np.any(den == 0):
        raise PhaseUndefinedError("xi and Gamma_T both vanish")
    v_t = np.asarray(omega) * tank.omega_t ** 2 * tank.l_t * tank.i0 / den
    chi = np.arctan2(xi, wg)
    return _unwrap(v_t), _unwrap(chi)


@dataclass(frozen=True)
class LinearResponse:
    """Solution of the tank equation at one probe frequency."""

    omega: float
    v: complex
    denominator: complex
    xi: float
    gamma_t: float
    v_t: float
    chi: float


def tank_from_transfer(tls: TlsParams, tank: TankParams, omega: float, z, x, y) -> LinearResponse:
    """Close the tank loop given the qubit transfer functions Z, X, Y.

    The probe is the tank's own coil current: ``g = c I_T`` with
    ``c = delta M I_q / (hbar gap)`` and ``I_T = -i V / (omega L_T)``.
    Substituting into the voltage equation leaves ``V D = i w w_T^2 L_T I0``;
    ``xi`` and ``omega Gamma_T`` are the real and imaginary parts of ``D``.
    """
    c_g = tls.delta * tank.mutual * tank.i_q / (HBAR * tls.delta_eps)
    beta = (-tls.epsilon * tls.gamma_z * z + tls.delta * tls.gamma_phi * x
            + tls.delta_eps * tls.delta * y)
    src = tank.mutual * tank.omega_t ** 2 * tank.i_q / tls.delta_eps
    den = (tank.omega_t ** 2 - omega ** 2 + 1j * omega * tank.gamma_t
           + 1j * src * c_g * beta / (omega * tank.l_t))
    if abs(den) <= COLLISION_TOL * max(tank.omega_t ** 2, omega ** 2):
        raise ResonanceCollisionError(f"effective tank denominator vanishes at omega = {omega:.6g}")
    v = 1j * omega * tank.omega_t ** 2 * tank.l_t * tank.i0 / den
    xi = float(den.real)
    gamma_t = float(den.imag / omega)
    return LinearResponse(float(omega), complex(v), complex(den), xi, gamma_t,
                          float(abs(v)), float(math.atan2(xi, omega * gamma_t)))


def full_linear_response(tls: TlsParams, tank: TankParams, f: float, delta: float, omega: float,
                         convention: str = "bloch", *, rectification: bool = True,
                         truncate: bool = False, warn: bool = False) -> LinearResponse:
    """Self-consistent tank response using the slow transfer functions.

    Two terms are present here but absent from the closed forms:

    ``rectification``
        The carrier envelope B feeding back into X and Y through the drive
        (``-eps f B / gap`` in the current). The off-resonant closed form drops
        it, which is accurate for ``delta * |detuning| >> f^2``; at zero
        detuning it is exactly the Rabi term of the resonant form.
    ``truncate``
        Drops the ``eps f A Gamma (Gamma + i w) / gap^2`` remainder, which is
        of relative order (Gamma / gap)^2, below the accuracy of the rotating
        wave treatment itself.
    """
    r = rwa.slow_response(tls, f, delta, float(omega), convention, warn=warn)
    z, x, y = complex(r.z), complex(r.x), complex(r.y)
    gap = tls.delta_eps
    gi = tls.gamma_phi + 1j * omega
    if not rectification:
        fb = tls.eps_ratio * f * complex(r.b)
        y += fb * gi / gap ** 2
        x -= fb / gap
    if truncate:
        fa = tls.eps_ratio * f * complex(r.a)
        x -= fa * gi / gap ** 2
    return tank_from_transfer(tls, tank, float(omega), z, x, y)


@dataclass(frozen=True)
class RegimePolicy:
    """Thresholds of the regime dispatcher."""

    general_ratio: float = 100.0
    resonant_fraction: float = 0.01

    def select(self, tls: TlsParams, f: float, delta: float) -> str:
        if tls.delta * abs(delta) >= self.general_ratio * f ** 2:
            return "general"
        if abs(delta) <= self.resonant_fraction * tls.gamma_phi:
            return "resonant_delta0"
        return "full_linear_response"


@dataclass(frozen=True)
class ReadoutPoint:
    xi: float
    gamma_t_eff: float
    v_t: float
    chi: float
    regime: str


def readout(tls: TlsParams, tank: TankParams, f: float, delta: float, omega: float,
            convention: str = "bloch", policy: RegimePolicy | None = None,
            regime: str | None = None) -> ReadoutPoint:
    """Evaluate the tank observables with the regime chosen by ``policy``
    (or forced by ``regime``)."""
    policy = policy or RegimePolicy()
    regime = regime or policy.select(tls, f, delta)
    if regime == "general":
        xi, gt = xi_gamma_general(tls, tank, f, delta, omega, convention, warn=False)
    elif regime == "resonant_delta0":
        xi, gt = xi_gamma_resonant(tls, tank, f, omega, convention)
    elif regime == "full_linear_response":
        lr = full_linear_response(tls, tank, f, delta, omega, convention)
        xi, gt = lr.xi, lr.gamma_t
    else:
        raise ValueError(f"unknown regime {regime!r}")
    v_t, chi = amplitude_phase(xi, gt, tank, omega)
    return ReadoutPoint(float(xi), float(gt), float(v_t), float(chi), regime)
