import numpy as np
import pytest

from rabispec import fit
from rabispec.params import FIG1, TWO_PI, fig1_tank, fig1_tls

TRUTH = {"gamma_phi": FIG1["gamma_phi"], "gamma_z": FIG1["gamma_z"], "f": TWO_PI * 4e6}
BOUNDS = {k: (v / 20, v * 20) for k, v in TRUTH.items()}
SPEC = fit.CurveSpec(fig1_tls(0.0), fig1_tank(), FIG1["omega"], 0.0, FIG1["e_j"])
X = np.linspace(-0.02, 0.02, 81)


@pytest.fixture(scope="module")
def clean_curve():
    chi, v_t = fit.forward_model(TRUTH, SPEC, "flux", X)
    return chi, v_t


def test_exact_start_needs_no_iterations(clean_curve):
    data = fit.MeasuredCurve("flux", X, clean_curve[0])
    res = fit.fit_rates(data, TRUTH, BOUNDS, SPEC)
    assert res.converged and res.iterations == 0
    assert res.estimates == pytest.approx(TRUTH, rel=1e-12)


def test_noise_free_recovery(clean_curve):
    data = fit.MeasuredCurve("flux", X, clean_curve[0], sigma=np.full(X.size, 1e-3))
    init = {k: 1.5 * v for k, v in TRUTH.items()}
    res = fit.fit_rates(data, init, BOUNDS, SPEC)
    assert res.converged
    for k, v in TRUTH.items():
        assert res.estimates[k] == pytest.approx(v, rel=1e-5)
    assert all(b <= a for a, b in zip(res.cost_history, res.cost_history[1:]))


def test_sigma_scale_does_not_move_estimates(clean_curve):
    rng = np.random.default_rng(3)
    chi = clean_curve[0] + rng.normal(0, 1e-3, X.size)
    init = {k: 1.2 * v for k, v in TRUTH.items()}
    a = fit.fit_rates(fit.MeasuredCurve("flux", X, chi, sigma=np.full(X.size, 1e-3)), init,
                      BOUNDS, SPEC)
    b = fit.fit_rates(fit.MeasuredCurve("flux", X, chi, sigma=np.full(X.size, 1.0)), init,
                      BOUNDS, SPEC)
    assert a.estimates == pytest.approx(b.estimates, rel=1e-6)


def test_unit_weights_scale_covariance_by_residual(clean_curve):
    rng = np.random.default_rng(4)
    chi = clean_curve[0] + rng.normal(0, 2e-3, X.size)
    res = fit.fit_rates(fit.MeasuredCurve("flux", X, chi), TRUTH, BOUNDS, SPEC)
    assert res.std_errors["f"] / res.estimates["f"] < 0.05
    assert np.isfinite(list(res.std_errors.values())).all()


def test_parallel_jacobian_is_identical(clean_curve):
    data = fit.MeasuredCurve("flux", X, clean_curve[0] * 1.001, sigma=np.full(X.size, 1e-3))
    a = fit.fit_rates(data, TRUTH, BOUNDS, SPEC, workers=1)
    b = fit.fit_rates(data, TRUTH, BOUNDS, SPEC, workers=3)
    assert a.estimates == b.estimates and a.cost_history == b.cost_history


def test_unconstrained_direction_is_reported():
    # at zero bias the curve sees the rates only through P0, one combination
    spec = fit.CurveSpec(fig1_tls(0.0), fig1_tank(), FIG1["omega"])
    x = np.linspace(0.2, 2.0, 20)
    chi, _ = fit.forward_model(TRUTH, spec, "power", x)
    with pytest.raises(fit.RankDeficiencyError) as info:
        fit.fit_rates(fit.MeasuredCurve("power", x, chi), TRUTH, BOUNDS, spec)
    assert len(info.value.directions) >= 1


def test_gradient_check(clean_curve):
    data = fit.MeasuredCurve("flux", X, clean_curve[0] * 1.01, sigma=np.full(X.size, 1e-3))
    assert fit.gradient_check(data, TRUTH, SPEC) < 1e-4


def test_amplitude_residuals(clean_curve):
    chi, v_t = clean_curve
    data = fit.MeasuredCurve("flux", X, chi, v_t=v_t)
    init = {k: 1.3 * v for k, v in TRUTH.items()}
    res = fit.fit_rates(data, init, BOUNDS, SPEC)
    assert res.estimates["gamma_phi"] == pytest.approx(TRUTH["gamma_phi"], rel=1e-5)


def test_probe_frequency_kind():
    spec = fit.CurveSpec(fig1_tls(0.005), fig1_tank(), None, 0.0)
    w = FIG1["omega"] * np.linspace(0.999, 1.001, 9)
    chi, v_t = fit.forward_model(TRUTH, spec, "omega", w)
    assert np.all(np.diff(chi) < 0)
    assert np.all(v_t > 0)


@pytest.mark.parametrize("kwargs", [
    {"kind": "flux", "x": np.arange(5.0), "chi": np.zeros(5)},
    {"kind": "flux", "x": np.r_[0.0, 2.0, 1.0, 3, 4, 5, 6, 7], "chi": np.zeros(8)},
    {"kind": "flux", "x": np.arange(8.0)},
    {"kind": "flux", "x": np.arange(8.0), "chi": np.r_[np.zeros(7), np.nan]},
    {"kind": "flux", "x": np.arange(8.0), "chi": np.zeros(8), "sigma": np.zeros(8)},
    {"kind": "bias", "x": np.arange(8.0), "chi": np.zeros(8)},
])
def test_measured_curve_validation(kwargs):
    with pytest.raises(ValueError):
        fit.MeasuredCurve(**kwargs)


def test_bounds_validation(clean_curve):
    data = fit.MeasuredCurve("flux", X, clean_curve[0])
    with pytest.raises(ValueError):
        fit.fit_rates(data, {**TRUTH, "f": 1.0}, BOUNDS, SPEC)
    with pytest.raises(ValueError):
        fit.fit_rates(data, TRUTH, {**BOUNDS, "f": (2.0, 1.0)}, SPEC)


def test_csv_round_trip(tmp_path, clean_curve):
    data = fit.MeasuredCurve("flux", X[::-1], clean_curve[0][::-1], sigma=np.full(X.size, 0.1))
    data.to_csv(tmp_path / "c.csv")
    back = fit.MeasuredCurve.from_csv(tmp_path / "c.csv")
    assert np.array_equal(back.x, data.x) and np.array_equal(back.chi, data.chi)
    assert np.array_equal(back.sorted().x, X)
