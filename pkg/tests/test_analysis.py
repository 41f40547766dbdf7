import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracspin.analysis import (
    MIN_WINDOWS,
    AsymptoticVarianceModel,
    VarianceCurve,
    analytic_curve,
    eta_from_delta,
    fit_hurst,
    log_grid,
    mps_variance_curve,
    predicted_scaling_table,
    theoretical_hurst_nx,
    variance_curve_from_samples,
)
from fracspin.classical import FgnParams, fgn_model, tabulated_model
from fracspin.sampler import sample_infinite_mps
from fracspin.trajectory import Trajectory
from fracspin.xx_exact import exact_xx_x_model, exact_xx_z_model, variance_uniform_z_closed


def _coin(n, seed, basis="z"):
    rng = np.random.default_rng(seed)
    return Trajectory(rng.choice(np.array([1, -1], dtype=np.int8), size=n), seed=seed, basis=basis)


@pytest.mark.parametrize("hurst", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95])
def test_fit_recovers_power_law(hurst):
    l = log_grid(1, 1000)
    curve = VarianceCurve(l, 2.3 * l ** (2.0 * hurst))
    fit = fit_hurst(curve)
    assert fit.hurst == pytest.approx(hurst, abs=1e-6)
    assert not fit.log_model_preferred
    assert fit.r2 == pytest.approx(1.0)


def test_fit_exact_power_example():
    l = np.arange(1, 501)
    assert fit_hurst(VarianceCurve(l, l**1.5)).hurst == pytest.approx(0.75, abs=1e-6)


def test_uniform_z_classified_log():
    l = log_grid(100, 2000)
    curve = VarianceCurve(l, [variance_uniform_z_closed(int(k)) for k in l])
    fit = fit_hurst(curve, (100, 2000))
    assert fit.log_model_preferred
    assert fit.hurst is None
    assert fit.log_coefficients[1] == pytest.approx(1 / math.pi**2, rel=0.01)


def test_nx_analytic_hurst():
    curve = analytic_curve(exact_xx_x_model(), 2000, staggered=True, lengths=log_grid(1, 2000, 200))
    assert fit_hurst(curve).hurst == pytest.approx(0.74, abs=0.02)


def test_fit_requires_points():
    l = np.arange(1, 6)
    with pytest.raises(ValueError):
        fit_hurst(VarianceCurve(l, l * 1.0))


def test_fit_rejects_nonpositive():
    l = np.arange(1, 21)
    v = l * 1.0
    v[-1] = 0.0
    with pytest.raises(ValueError):
        fit_hurst(VarianceCurve(l, v))


def test_curve_validation():
    with pytest.raises(ValueError):
        VarianceCurve([1, 3, 2], [1.0, 2.0, 3.0])


def test_fit_json_fields():
    l = np.arange(1, 101)
    text = fit_hurst(VarianceCurve(l, l**1.2)).to_json(delta=0.0, direction="x", mode="staggered")
    data = json.loads(text)
    for key in ("delta", "direction", "mode", "H", "two_H", "intercept", "r2", "window", "log_model_preferred", "n_points"):
        assert key in data


def test_eta_examples():
    assert eta_from_delta(0.0) == pytest.approx(0.5)
    assert eta_from_delta(1.0) == pytest.approx(1.0)
    assert eta_from_delta(0.5) == pytest.approx(2 / 3)


@given(st.floats(-1.0, 1.0))
def test_eta_round_trip(delta):
    assert -math.cos(math.pi * eta_from_delta(delta)) == pytest.approx(delta, abs=1e-12)


def test_theory_hurst_examples():
    assert theoretical_hurst_nx(0.0) == pytest.approx(0.75)
    assert theoretical_hurst_nx(0.5) == pytest.approx(2 / 3)
    assert theoretical_hurst_nx(1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [-1.01, 1.5])
def test_domain_errors(bad):
    with pytest.raises(ValueError):
        eta_from_delta(bad)
    with pytest.raises(ValueError):
        theoretical_hurst_nx(bad)
    with pytest.raises(ValueError):
        predicted_scaling_table(bad)


def test_scaling_table():
    t0 = predicted_scaling_table(0.0)
    assert t0["M_z"]["law"] == "log"
    assert t0["N_z"]["law"] == "linear"
    assert t0["M_x"]["law"] == "linear"
    assert t0["N_x"]["exponent"] == pytest.approx(1.5)
    assert predicted_scaling_table(1.0)["M_x"]["law"] == "log"
    assert predicted_scaling_table(-0.9)["N_x"]["exponent"] == pytest.approx(2 - math.acos(0.9) / math.pi)
    assert predicted_scaling_table(-0.9)["N_x"]["exponent"] == pytest.approx(1.856, abs=1e-3)


def test_iid_coin_variance():
    trajs = [_coin(200_000, s) for s in range(3)]
    curve = variance_curve_from_samples(trajs, "uniform", [1, 4, 16, 64])
    z = (curve.values - curve.lengths / 4) / curve.stderr
    assert np.all(np.abs(z) < 4)
    assert not curve.flagged.any()
    stag = variance_curve_from_samples(trajs, "staggered", [1, 4, 16, 64])
    np.testing.assert_allclose(stag.values, stag.lengths / 4, rtol=0.05)


def test_neel_staggered_degenerate_and_flagged():
    neel = Trajectory(np.array([1, -1] * 50, dtype=np.int8), seed=0, basis="z")
    curve = variance_curve_from_samples([neel], "staggered", [2, 3, 10, 40])
    np.testing.assert_allclose(curve.values, 0.0, atol=1e-15)
    assert curve.flagged.tolist() == [False, False, True, True]
    assert curve.n_windows[-1] < MIN_WINDOWS


def test_sample_curve_errors():
    with pytest.raises(ValueError):
        variance_curve_from_samples([_coin(100, 0, "z"), _coin(100, 1, "x")], "uniform", [2])
    with pytest.raises(ValueError):
        variance_curve_from_samples([_coin(100, 0, "z")], "uniform", [2], direction="x")
    with pytest.raises(ValueError):
        variance_curve_from_samples([_coin(100, 0, "z")], "diagonal", [2])


def test_curve_csv_round_trip(tmp_path):
    trajs = [_coin(5000, 1)]
    curve = variance_curve_from_samples(trajs, "staggered", [1, 2, 5, 300])
    path = tmp_path / "c.csv"
    curve.to_csv(path)
    back = VarianceCurve.from_csv(path)
    np.testing.assert_array_equal(back.lengths, curve.lengths)
    np.testing.assert_array_equal(back.values, curve.values)
    np.testing.assert_array_equal(back.flagged, curve.flagged)
    assert back.mode == "staggered" and back.source == "sampled"
    assert path.read_text().startswith("# version=1 direction=z mode=staggered source=sampled\nl,variance,stderr")


def test_sampled_matches_analytic(xx_chi16):
    traj = sample_infinite_mps(xx_chi16, 400_000, seed=21)
    grid = [1, 2, 5, 10, 30, 100]
    sampled = variance_curve_from_samples([traj], "uniform", grid)
    exact = mps_variance_curve(xx_chi16, "z", False, 100, grid)
    # the pooled window mean ignores the small staggered moment of a finite-chi state
    assert np.all(np.abs(sampled.values - exact.values) < 3 * sampled.stderr + 1e-4)


def test_mps_curve_against_exact(xx_chi16):
    curve = mps_variance_curve(xx_chi16, "z", False, 20)
    exact = analytic_curve(exact_xx_z_model(), 20)
    np.testing.assert_allclose(curve.values, exact.values, rtol=1e-2)


def test_asymptotic_model_fit():
    model = AsymptoticVarianceModel(zeta=0.5, xi=1.5)
    l = np.arange(50, 2001, 10)
    truth = 0.7 * l**1.5 + 0.2 * l**-1.5 + 0.1 * l
    curve = VarianceCurve(l, truth, mode="uniform")
    model.fit(curve)
    assert model.B == pytest.approx(0.7, rel=1e-8)
    assert model.C == pytest.approx(0.1, rel=1e-6)
    np.testing.assert_allclose(model.uniform(l), truth, rtol=1e-10)
    stag = VarianceCurve(l, 0.3 * l**-0.5 + 0.05 * l**0.5 + 0.25 * l, mode="staggered")
    model.fit(stag)
    assert model.F == pytest.approx(0.25, rel=1e-8)
    assert model.as_dict()["zeta"] == 0.5


@pytest.mark.parametrize("bad", [1.0, 2.0])
def test_asymptotic_model_resonant(bad):
    with pytest.raises(ValueError):
        AsymptoticVarianceModel(zeta=bad, xi=0.5)


def test_fgn_analytic_curve_fit():
    curve = analytic_curve(fgn_model(FgnParams(1.0, 0.3)), 1000)
    assert fit_hurst(curve).hurst == pytest.approx(0.3, abs=1e-9)


def test_tabulated_curve():
    model = tabulated_model(0.25, np.zeros(9))
    np.testing.assert_allclose(analytic_curve(model, 10).values, 0.25 * np.arange(1, 11))
