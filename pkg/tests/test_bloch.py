import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rabispec.bloch import (BlochState, DriveWaveform, LinearityWarning, Trajectory, bare_tank_state,
                            bloch_rhs, integrate, integrate_coupled, qubit_current, transient_time)
from rabispec.params import TWO_PI, TankParams, TlsParams, fig1_tank, fig1_tls

GAP_TLS = TlsParams(TWO_PI * 1e9, TWO_PI * 0.6e9, 0.01, TWO_PI * 4e6, TWO_PI * 0.1e6)


def precession_rhs(s, t, tls, f, omega0, g):
    # field vector in the eigenbasis: the bias couples along Z, the
    # tunnelling mixes along X
    force = f * math.cos(omega0 * t) + g
    field = np.array([2 * force, 0.0, tls.delta_eps - 2 * tls.epsilon / tls.delta * force])
    damp = np.array([-tls.gamma_phi * s[0], -tls.gamma_phi * s[1],
                     -tls.gamma_z * (s[2] - tls.z0)])
    return np.cross(field, s) + damp


unit = st.floats(-1.0, 1.0)


@given(unit, unit, unit, st.floats(0.0, 1e-6), st.floats(0.0, 5e7), st.floats(-1e6, 1e6))
def test_rhs_is_precession_about_field(sx, sy, sz, t, f, g0):
    omega0, omega = GAP_TLS.delta_eps * 1.01, TWO_PI * 5e6
    drive = DriveWaveform.cosine(f, omega0, g0, omega)
    got = bloch_rhs(BlochState(sx, sy, sz), t, GAP_TLS, drive)
    want = precession_rhs(np.array([sx, sy, sz]), t, GAP_TLS, f, omega0, g0 * math.cos(omega * t))
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12 * GAP_TLS.delta_eps)


def test_equilibrium_is_fixed_point():
    drive = DriveWaveform.cosine(0.0, GAP_TLS.delta_eps, 0.0, 1.0)
    assert np.all(bloch_rhs(BlochState.equilibrium(GAP_TLS), 0.3, GAP_TLS, drive) == 0.0)


def test_norm_conserved_without_damping():
    tls = GAP_TLS.with_rates(0.0, 0.0)
    t_end = 100 * TWO_PI / tls.delta_eps
    drive = DriveWaveform.cosine(0.01 * tls.delta_eps, tls.delta_eps, 0.0, 1.0)
    traj = integrate(BlochState(0.0, 0.6, 0.8), tls, drive, (0.0, t_end),
                     rtol=1e-10, atol=1e-10)
    assert np.max(np.abs(np.sum(traj.bloch ** 2, axis=1) - 1)) < 1e-9


def test_free_precession_phase():
    tls = GAP_TLS.with_rates(0.0, 0.0)
    t = np.linspace(0.0, 50 * TWO_PI / tls.delta_eps, 501)
    traj = integrate(BlochState(1.0, 0.0, 0.0), tls, DriveWaveform(0.0, tls.delta_eps),
                     (0.0, t[-1]), t)
    assert np.max(np.abs(traj.sx - np.cos(tls.delta_eps * t))) < 1e-8
    assert np.max(np.abs(traj.sy - np.sin(tls.delta_eps * t))) < 1e-8


def test_longitudinal_relaxation_closed_form():
    t = np.linspace(0.0, 4 / GAP_TLS.gamma_z, 201)
    z1 = GAP_TLS.z0 + 0.7
    traj = integrate(BlochState(0.0, 0.0, z1), GAP_TLS, DriveWaveform(0.0, 1.0), (0.0, t[-1]), t)
    want = GAP_TLS.z0 + (z1 - GAP_TLS.z0) * np.exp(-GAP_TLS.gamma_z * t)
    assert np.max(np.abs(traj.sz - want)) < 1e-9


def test_step_cap_resolves_carrier():
    tls = GAP_TLS.with_rates(0.0, 0.0)
    t_end = 10 * TWO_PI / tls.delta_eps
    traj = integrate(BlochState(0.0, 0.0, -1.0), tls, DriveWaveform(0.0, tls.delta_eps),
                     (0.0, t_end), rtol=1e-4, atol=1e-6)
    assert traj.meta["steps"] >= 200


def test_external_probe_matches_cosine():
    omega = TWO_PI * 20e6
    t_end = 20 * TWO_PI / omega
    ts = np.linspace(0.0, t_end, 200001)
    g0 = TWO_PI * 0.5e6
    grid = np.linspace(0.0, t_end, 11)
    a = integrate(BlochState.equilibrium(GAP_TLS), GAP_TLS,
                  DriveWaveform.cosine(0.0, 1.0, g0, omega), (0.0, t_end), grid)
    b = integrate(BlochState.equilibrium(GAP_TLS), GAP_TLS,
                  DriveWaveform.external(0.0, 1.0, ts, g0 * np.cos(omega * ts)), (0.0, t_end), grid)
    assert np.max(np.abs(a.bloch - b.bloch)) < 1e-6


def test_external_probe_must_cover_span():
    drive = DriveWaveform.external(0.0, 1.0, [0.0, 1e-9], [0.0, 0.0])
    with pytest.raises(ValueError):
        integrate(BlochState.equilibrium(GAP_TLS), GAP_TLS, drive, (0.0, 1e-8))


def test_tolerance_range_checked():
    with pytest.raises(ValueError):
        integrate(BlochState.equilibrium(GAP_TLS), GAP_TLS, DriveWaveform(0.0, 1.0), (0.0, 1e-9),
                  rtol=1e-14)


def test_trajectory_csv_round_trip(tmp_path):
    t = np.array([0.0, 1e-10, 2.5e-10])
    traj = Trajectory(t, np.array([[0.1, 0.2, 0.3], [1 / 3, -2 / 7, 1e-17], [0.0, 0.0, -1.0]]),
                      np.array([[1e-12, 2e-9], [3e-12, 4e-9], [math.pi, -math.e]]))
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    back = Trajectory.from_csv(path)
    assert path.read_text().splitlines()[0] == "t,sx,sy,sz,v,i_t"
    assert np.array_equal(back.t, traj.t) and np.array_equal(back.bloch, traj.bloch)
    assert np.array_equal(back.tank, traj.tank)


def test_qubit_current_ground_state_at_large_bias():
    tls = TlsParams(1.0, 1e6, 0.0, 0.0, 0.0)
    i = qubit_current(BlochState(0.0, 0.0, -1.0), tls, 280e-9)
    assert i == pytest.approx(-280e-9, rel=1e-9)


def test_decoupled_tank_stays_in_bare_steady_state():
    tls = fig1_tls(0.0)
    tank = fig1_tank().with_coupling(0.0)
    omega = tank.omega_t * 1.0003
    period = TWO_PI / omega
    grid = np.linspace(0.0, 20 * period, 20 * 64 + 1)
    traj = integrate_coupled(BlochState.equilibrium(tls), None, tls, tank, 0.0, tls.delta_eps,
                             omega, (0.0, grid[-1]), grid)
    want = np.array([bare_tank_state(tank, omega, t).v for t in grid])
    amp = omega * tank.omega_t ** 2 * tank.l_t * tank.i0 / math.hypot(
        tank.omega_t ** 2 - omega ** 2, omega * tank.gamma_t)
    assert np.max(np.abs(traj.v - want)) < 1e-6 * amp
    assert np.max(np.abs(traj.bloch - [0.0, 0.0, tls.z0])) < 1e-12


def test_large_bias_current_warns():
    tls = fig1_tls(0.0)
    tank = TankParams(*[getattr(fig1_tank(), k) for k in
                        ("omega_t", "q_t", "l_t", "k", "l_q", "i_q")], i0=1e-9)
    with pytest.warns(LinearityWarning):
        integrate_coupled(BlochState.equilibrium(tls), None, tls, tank, 0.0, tls.delta_eps,
                          tank.omega_t, (0.0, 1e-10), np.array([0.0, 1e-10]))
    with warnings.catch_warnings():
        warnings.simplefilter("error", LinearityWarning)
        integrate_coupled(BlochState.equilibrium(tls), None, tls, fig1_tank(), 0.0,
                          tls.delta_eps, tank.omega_t, (0.0, 1e-10), np.array([0.0, 1e-10]))


def test_transient_time():
    assert transient_time(GAP_TLS) == pytest.approx(10 / GAP_TLS.gamma_z)
    with pytest.raises(ValueError):
        transient_time(GAP_TLS.with_rates(0.0, 0.0))
