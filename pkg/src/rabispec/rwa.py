"""Rotating-wave linear response of the slow envelopes to a weak probe.

Transfer functions are per unit probe amplitude, under the convention
``g(t) = Re[g(omega) exp(i omega t)]``. All inputs are angular frequencies.

Two sign conventions are supported for the probe's direct action on the
transverse components X and Y:

``"bloch"`` (default)
    The sign that follows from the lab-frame Bloch equations; in the static
    limit it reproduces the ground-state tilt <sigma_X> = 2 g Z0 / gap.
``"literal"``
    The opposite sign on the direct term, kept for comparison with closed
    forms written that way.

The polarization Z and carrier envelopes A, B are identical in both.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .params import TlsParams, rabi_frequency

CONVENTIONS = ("bloch", "literal")
SINGULAR_TOL = 1e-12
VALIDITY_FRACTION = 0.01


class SingularResponseError(ArithmeticError):
    pass


class DegeneratePolarizationWarning(RuntimeWarning):
    pass


class RwaValidityWarning(UserWarning):
    pass


def pz(delta, f, gamma_phi, gamma_z):
    """Driven steady-state polarization factor P_Z (so that <sigma_Z> = P_Z Z0).

    The 0/0 case (no relaxation, no detuning and no drive) is defined as 1 and
    flagged with :class:`DegeneratePolarizationWarning`.
    """
    delta, f, gamma_phi, gamma_z = np.broadcast_arrays(*(np.asarray(a, dtype=float)
                                                         for a in (delta, f, gamma_phi, gamma_z)))
    num = gamma_z * (gamma_phi ** 2 + delta ** 2)
    den = num + f ** 2 * gamma_phi
    bad = den == 0
    if np.any(bad):
        warnings.warn("P_Z is 0/0 here; defined as 1", DegeneratePolarizationWarning, stacklevel=2)
    out = np.where(bad, 1.0, num / np.where(bad, 1.0, den))
    return float(out) if out.ndim == 0 else out


def p0(f, gamma_phi, gamma_z):
    """P_Z at zero detuning."""
    return pz(0.0, f, gamma_phi, gamma_z)


def s_denominator(omega, omega_r, gamma_phi, gamma_z, f):
    """(W_R - w + iG)(W_R + w - iG)(i w + G_Z) - f^2 (G_Z - G)."""
    omega = np.asarray(omega, dtype=float)
    return ((omega_r - omega + 1j * gamma_phi) * (omega_r + omega - 1j * gamma_phi)
            * (1j * omega + gamma_z) - f ** 2 * (gamma_z - gamma_phi))


@dataclass(frozen=True)
class SlowResponse:
    """Complex transfer values of the slow envelopes at probe frequency ``omega``.

    Entries are arrays when ``omega`` is an array. ``c`` and ``d`` are the same
    objects as ``b`` and ``-a``.
    """

    omega: np.ndarray
    z: np.ndarray
    a: np.ndarray
    b: np.ndarray
    y: np.ndarray
    x: np.ndarray
    p_z: float
    omega_r: float
    delta: float
    convention: str = "bloch"

    @property
    def c(self):
        return self.b

    @property
    def d(self):
        return -self.a

    def as_dict(self) -> dict:
        return {"z": self.z, "a": self.a, "b": self.b, "c": self.c, "d": self.d,
                "y": self.y, "x": self.x}


def check_validity(tls: TlsParams, f: float, fraction: float = VALIDITY_FRACTION) -> bool:
    gap = tls.delta_eps
    big = {name: val for name, val in (("f", f), ("gamma_phi", tls.gamma_phi), ("gamma_z", tls.gamma_z))
           if val > fraction * gap}
    if big:
        warnings.warn(f"{sorted(big)} exceed {fraction:g} of the gap; dropped non-resonant terms "
                      "may no longer be negligible", RwaValidityWarning, stacklevel=3)
    return not big


def slow_response(tls: TlsParams, f: float, delta: float, omega, convention: str = "bloch",
                  warn: bool = True) -> SlowResponse:
    """Transfer functions Z, A, B, Y, X per unit probe amplitude.

    ``delta`` is the carrier detuning omega0 - gap. B is evaluated in a form
    with the 1/delta factor cleared, so it is finite through resonance.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if warn:
        check_validity(tls, f)
    omega = np.asarray(omega, dtype=float)
    gam, gz = tls.gamma_phi, tls.gamma_z
    gap = tls.delta_eps
    er = tls.eps_ratio
    p_z = pz(delta, f, gam, gz)
    pz0 = p_z * tls.z0
    om_r = float(rabi_frequency(delta, f))

    s = s_denominator(omega, om_r, gam, gz, f)
    if np.any(np.abs(s) <= SINGULAR_TOL):
        raise SingularResponseError("s(omega) vanishes")
    q = delta ** 2 + (gam + 1j * omega) ** 2
    if np.any(np.abs(q) <= SINGULAR_TOL):
        raise SingularResponseError("delta^2 + (gamma + i omega)^2 vanishes")
    lor = delta ** 2 + gam ** 2
    if lor == 0:
        raise SingularResponseError("delta^2 + gamma^2 vanishes")

    two_g = 2 * gam + 1j * omega
    pref = 2 * er * f * pz0
    z = pref * f * delta / lor * two_g / s
    a = pref * delta / lor * two_g * (1j * omega + gz) / s
    b = -pref / q * (delta ** 2 / lor * f ** 2 * two_g / s
                     - (delta ** 2 - gam ** 2 - 1j * omega * gam) / lor)

    direct = 2 * pz0 if convention == "literal" else -2 * pz0
    gi = gam + 1j * omega
    inner = direct - er * f * b
    y = er * f * a / gap + inner * gi / gap ** 2
    x = er * f * a * gi / gap ** 2 - inner / gap
    return SlowResponse(omega, z, a, b, y, x, p_z, om_r, float(delta), convention)


def b_unreduced(tls: TlsParams, f: float, delta: float, omega):
    """B exactly as printed, with delta/(delta^2+G^2) outside the braces.

    Singular at delta = 0; kept as an independent check of the reduced form.
    """
    omega = np.asarray(omega, dtype=float)
    gam, gz = tls.gamma_phi, tls.gamma_z
    pz0 = pz(delta, f, gam, gz) * tls.z0
    s = s_denominator(omega, float(rabi_frequency(delta, f)), gam, gz, f)
    return (-2 * tls.eps_ratio * f * pz0 * delta / (delta ** 2 + gam ** 2)
            / (delta ** 2 + (gam + 1j * omega) ** 2)
            * (f ** 2 * delta * (2 * gam + 1j * omega) / s
               - (delta ** 2 - gam ** 2 - 1j * omega * gam) / delta))


RESPONSE_COLUMNS = ["omega", "Re(Z)", "Im(Z)", "Re(A)", "Im(A)", "Re(B)", "Im(B)",
                    "Re(Y)", "Im(Y)", "Re(X)", "Im(X)", "p_z"]


def response_table(tls: TlsParams, f: float, delta: float, omega_grid,
                   convention: str = "bloch") -> np.ndarray:
    """Rows matching :data:`RESPONSE_COLUMNS` for a grid of probe frequencies."""
    r = slow_response(tls, f, delta, np.asarray(omega_grid, dtype=float), convention)
    n = r.omega.size
    cols = [r.omega]
    for v in (r.z, r.a, r.b, r.y, r.x):
        v = np.broadcast_to(v, (n,))
        cols += [v.real, v.imag]
    cols.append(np.full(n, r.p_z))
    return np.column_stack(cols)
