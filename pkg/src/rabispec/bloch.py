"""Time-domain Bloch dynamics of the driven, damped two-level system.

The equations are integrated in the lab frame (no rotating-wave step), with
all frequencies in rad/s and hbar = 1, so the level splitting enters as the
gap itself rather than gap/hbar. Optionally the qubit is coupled to an LC tank
whose coil current feeds back onto the qubit as the low-frequency force.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import integrator
from .params import HBAR, TankParams, TlsParams

PROBE_NONE = 0
PROBE_COSINE = 1
PROBE_EXTERNAL = 2

STEPS_PER_PERIOD = 32
LINEAR_FRACTION = 0.1


class LinearityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BlochState:
    sx: float
    sy: float
    sz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz], dtype=float)

    @classmethod
    def equilibrium(cls, tls: TlsParams) -> "BlochState":
        return cls(0.0, 0.0, tls.z0)

    def norm2(self) -> float:
        return self.sx ** 2 + self.sy ** 2 + self.sz ** 2


@dataclass(frozen=True)
class TankState:
    v: float
    i_t: float
    v_dot: float = 0.0


@dataclass(frozen=True)
class DriveWaveform:
    """Carrier ``f cos(omega0 t)`` plus an optional low-frequency force g(t).

    ``probe`` is ``"none"``, ``"cosine"`` (``g0 cos(omega t + phase)``) or
    ``"external"`` (linear interpolation of ``samples = (t, g)``).
    """

    f: float
    omega0: float
    probe: str = "none"
    g0: float = 0.0
    omega: float = 0.0
    phase: float = 0.0
    samples: tuple | None = None

    def __post_init__(self):
        if self.probe not in ("none", "cosine", "external"):
            raise ValueError(f"unknown probe kind {self.probe!r}")
        if self.probe == "external":
            if self.samples is None:
                raise ValueError("external probe needs samples=(t, g)")
            t, g = (np.asarray(a, dtype=float) for a in self.samples)
            if t.shape != g.shape or t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("external samples must be matching 1-D arrays with increasing t")

    @classmethod
    def cosine(cls, f: float, omega0: float, g0: float, omega: float, phase: float = 0.0):
        return cls(f, omega0, "cosine", g0, omega, phase)

    @classmethod
    def external(cls, f: float, omega0: float, t, g):
        return cls(f, omega0, "external", samples=(np.asarray(t, float), np.asarray(g, float)))

    def g(self, t):
        t = np.asarray(t, dtype=float)
        if self.probe == "cosine":
            return self.g0 * np.cos(self.omega * t + self.phase)
        if self.probe == "external":
            return np.interp(t, *self.samples)
        return np.zeros_like(t)

    def covers(self, t0: float, t1: float) -> bool:
        if self.probe != "external":
            return True
        ts = self.samples[0]
        return ts[0] <= t0 and ts[-1] >= t1

    def _packed(self):
        mode = {"none": PROBE_NONE, "cosine": PROBE_COSINE, "external": PROBE_EXTERNAL}[self.probe]
        aux = np.vstack(self.samples) if self.probe == "external" else np.zeros((2, 1))
        return mode, aux


@dataclass
class Trajectory:
    t: np.ndarray
    bloch: np.ndarray
    tank: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.t.ndim != 1 or self.bloch.shape != (self.t.size, 3):
            raise ValueError("trajectory arrays have inconsistent shapes")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def sx(self):
        return self.bloch[:, 0]

    @property
    def sy(self):
        return self.bloch[:, 1]

    @property
    def sz(self):
        return self.bloch[:, 2]

    @property
    def v(self):
        return None if self.tank is None else self.tank[:, 0]

    @property
    def i_t(self):
        return None if self.tank is None else self.tank[:, 1]

    def state(self, i: int) -> BlochState:
        return BlochState(*self.bloch[i])

    def to_csv(self, path) -> None:
        cols = ["t", "sx", "sy", "sz"]
        data = [self.t[:, None], self.bloch]
        if self.tank is not None:
            cols += ["v", "i_t"]
            data.append(self.tank)
        np.savetxt(path, np.hstack(data), delimiter=",", header=",".join(cols),
                   comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if header[:4] != ["t", "sx", "sy", "sz"]:
            raise ValueError(f"unexpected trajectory header {header}")
        tank = data[:, 4:6] if header[4:6] == ["v", "i_t"] else None
        return cls(data[:, 0].copy(), data[:, 1:4].copy(), tank)


# --- right-hand sides --------------------------------------------------------

@njit(cache=True)
def _probe(t, p, aux):
    mode = int(p[7])
    if mode == 1:
        return p[8] * np.cos(p[9] * t + p[10])
    if mode == 2:
        ts = aux[0]
        n = ts.shape[0]
        if t <= ts[0]:
            return aux[1, 0]
        if t >= ts[n - 1]:
            return aux[1, n - 1]
        j = np.searchsorted(ts, t) - 1
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return aux[1, j] * (1.0 - w) + aux[1, j + 1] * w
    return 0.0


@njit(cache=True)
def _bloch_core(t, sx, sy, sz, gt, p, dy):
    # p: gap, 2eps/delta, gamma, gamma_z, z0, f, omega0
    fc = p[5] * np.cos(p[6] * t)
    drive = 2.0 * (fc + gt)
    level = p[0] - p[1] * (fc + gt)
    dy[2] = drive * sy - p[3] * (sz - p[4])
    dy[1] = -drive * sz + level * sx - p[2] * sy
    dy[0] = -level * sy - p[2] * sx


@njit(cache=True)
def _bloch_rhs(t, y, p, aux, dy):
    _bloch_core(t, y[0], y[1], y[2], _probe(t, p, aux), p, dy)


@njit(cache=True)
def _coupled_rhs(t, y, p, aux, dy):
    # p[0:7] as in _bloch_core; p[7:] = eps, delta, omega_t, gamma_t, l_t,
    # mutual, i_q, i0, omega_b, coupling g per unit coil current
    sx, sy, sz = y[0], y[1], y[2]
    v, vd, it = y[3], y[4], y[5]
    _bloch_core(t, sx, sy, sz, p[16] * it, p, dy)
    eps, delta = p[7], p[8]
    w2 = p[9] * p[9]
    di_q = p[13] / p[0] * (-eps * p[3] * (sz - p[4]) + delta * p[2] * sx + p[0] * delta * sy)
    dib = -p[14] * p[15] * np.sin(p[15] * t)
    dy[3] = vd
    dy[4] = -p[10] * vd - w2 * v + p[12] * w2 * di_q + w2 * p[11] * dib
    dy[5] = v / p[11]


def _core_params(tls: TlsParams, f: float, omega0: float) -> list[float]:
    return [tls.delta_eps, 2.0 * tls.epsilon / tls.delta, tls.gamma_phi, tls.gamma_z,
            tls.z0, f, omega0]


def bloch_rhs(state: BlochState, t: float, tls: TlsParams, drive: DriveWaveform) -> np.ndarray:
    """Time derivative of (sx, sy, sz) for the driven damped system."""
    mode, aux = drive._packed()
    p = np.array(_core_params(tls, drive.f, drive.omega0)
                 + [mode, drive.g0, drive.omega, drive.phase], dtype=float)
    dy = np.empty(3)
    _bloch_rhs(float(t), state.as_array(), p, aux, dy)
    return dy


def qubit_current(state, tls: TlsParams, i_q: float):
    """Expectation value of the loop current, (I_q / gap)(eps sz - delta sx).

    ``state`` may be a :class:`BlochState` or an ``(..., 3)`` array.
    """
    s = state.as_array() if isinstance(state, BlochState) else np.asarray(state, dtype=float)
    return i_q / tls.delta_eps * (tls.epsilon * s[..., 2] - tls.delta * s[..., 0])


def _check_tol(rtol: float, atol: float) -> None:
    if not (1e-12 <= rtol <= 1e-3):
        raise ValueError("rtol must lie in [1e-12, 1e-3]")
    if not (0 < atol <= 1e-3):
        raise ValueError("atol must lie in (0, 1e-3]")


def _resolve_grid(t_span, t_eval, samples_per_period, fastest):
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must have t1 > t0")
    if t_eval is None:
        dt = 2 * math.pi / fastest / samples_per_period
        n = int(math.floor((t1 - t0) / dt)) + 1
        t_eval = t0 + dt * np.arange(n)
    return t0, t1, np.asarray(t_eval, dtype=float)


def integrate(initial: BlochState, tls: TlsParams, drive: DriveWaveform, t_span,
              t_eval=None, *, rtol: float = 1e-10, atol: float = 1e-12,
              max_step: float = math.inf, samples_per_period: int = 32) -> Trajectory:
    """Integrate the Bloch equations and sample the solution.

    Without ``t_eval`` the trajectory is sampled uniformly with
    ``samples_per_period`` points per period of the fastest frequency (the
    carrier or the gap). The step size is capped at 1/32 of that period.
    """
    _check_tol(rtol, atol)
    fastest = max(drive.omega0, tls.delta_eps)
    t0, t1, t_eval = _resolve_grid(t_span, t_eval, samples_per_period, fastest)
    if not drive.covers(t0, t1):
        raise ValueError("external probe samples do not cover the integration window")
    mode, aux = drive._packed()
    p = np.array(_core_params(tls, drive.f, drive.omega0)
                 + [mode, drive.g0, drive.omega, drive.phase], dtype=float)
    h_max = min(max_step, 2 * math.pi / fastest / STEPS_PER_PERIOD)
    out, stats = integrator.solve(_bloch_rhs, initial.as_array(), (t0, t1), t_eval, p, aux,
                                  rtol=rtol, atol=atol, max_step=h_max)
    meta = {"tls": tls, "drive": drive, "rtol": rtol, "atol": atol, "max_step": h_max,
            "steps": stats.n_accepted, "rejected": stats.n_rejected}
    return Trajectory(t_eval, out, None, meta)


def coupling_per_ampere(tls: TlsParams, tank: TankParams) -> float:
    """g per unit coil current: delta * M * I_q / (hbar * gap)."""
    return tls.delta * tank.mutual * tank.i_q / (HBAR * tls.delta_eps)


def bare_tank_state(tank: TankParams, omega: float, t: float = 0.0) -> TankState:
    """Steady state of the uncoupled tank driven by I0 cos(omega t)."""
    v_hat = 1j * omega * tank.omega_t ** 2 * tank.l_t * tank.i0 / (
        tank.omega_t ** 2 - omega ** 2 + 1j * omega * tank.gamma_t)
    ph = np.exp(1j * omega * t)
    v = (v_hat * ph).real
    v_dot = (1j * omega * v_hat * ph).real
    i_t = (-1j * v_hat / (omega * tank.l_t) * ph).real
    return TankState(float(v), float(i_t), float(v_dot))


def integrate_coupled(initial: BlochState, tank_initial: TankState | None, tls: TlsParams,
                      tank: TankParams, f: float, omega0: float, omega: float, t_span,
                      t_eval=None, *, rtol: float = 1e-10, atol: float = 1e-12,
                      max_step: float = math.inf, samples_per_period: int = 32) -> Trajectory:
    """Integrate the qubit together with the tank voltage equation.

    The tank is biased by ``I0 cos(omega t)``; the coil current obeys
    ``dI_T/dt = V / L_T`` and acts back on the qubit as
    ``g(t) = delta M I_q I_T(t) / (hbar gap)``. ``tank_initial=None`` starts
    the tank in its uncoupled steady state.
    """
    _check_tol(rtol, atol)
    fastest = max(omega0, tls.delta_eps)
    t0, t1, t_eval = _resolve_grid(t_span, t_eval, samples_per_period, fastest)
    if tank_initial is None:
        tank_initial = bare_tank_state(tank, omega, t0)
    c_g = coupling_per_ampere(tls, tank)
    g_peak = c_g * tank.q_t * tank.i0
    limit = LINEAR_FRACTION * (min(tls.gamma_phi, tls.delta_eps) if f > 0 else tls.delta_eps)
    if g_peak > limit:
        warnings.warn(f"coil back-action g ~ {g_peak:.3g} rad/s exceeds {limit:.3g}; the tank "
                      "drives the qubit outside linear response (lower i0)",
                      LinearityWarning, stacklevel=2)
    p = np.array(_core_params(tls, f, omega0)
                 + [tls.epsilon, tls.delta, tank.omega_t, tank.gamma_t, tank.l_t,
                    tank.mutual, tank.i_q, tank.i0, omega, c_g],
                 dtype=float)
    y0 = np.array([initial.sx, initial.sy, initial.sz,
                   tank_initial.v, tank_initial.v_dot, tank_initial.i_t])
    # voltage and current live on very different scales from the Bloch vector
    scale = np.array([1.0, 1.0, 1.0, max(abs(tank_initial.v), 1e-12),
                      max(abs(tank_initial.v_dot), 1e-12), max(abs(tank_initial.i_t), 1e-15)])
    h_max = min(max_step, 2 * math.pi / fastest / STEPS_PER_PERIOD)
    out, stats = integrator.solve(_scaled_coupled_rhs, y0 / scale, (t0, t1), t_eval,
                                  np.concatenate([p, scale]), None,
                                  rtol=rtol, atol=atol, max_step=h_max)
    out = out * scale
    meta = {"tls": tls, "tank": tank, "f": f, "omega0": omega0, "omega": omega,
            "rtol": rtol, "atol": atol, "max_step": h_max, "steps": stats.n_accepted}
    return Trajectory(t_eval, out[:, :3], out[:, [3, 5]], meta)


@njit(cache=True)
def _scaled_coupled_rhs(t, y, p, aux, dy):
    scale = p[17:23]
    ys = y * scale
    _coupled_rhs(t, ys, p, aux, dy)
    for i in range(6):
        dy[i] /= scale[i]


def transient_time(tls: TlsParams, tank: TankParams | None = None, n: float = 10.0) -> float:
    """Settling time n / (slowest relevant rate) before steady-state analysis."""
    rates = [r for r in (tls.gamma_phi, tls.gamma_z) if r > 0]
    if tank is not None:
        rates.append(tank.gamma_t / 2)
    if not rates:
        raise ValueError("no damping: the driven steady state is never reached")
    return n / min(rates)
