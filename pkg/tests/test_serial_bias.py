import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _factories import random_bias_config
from cryonoise.errors import ConfigError, DomainError, UnderdeterminedError
from cryonoise.physics import planck_occupation
from cryonoise.serial_bias import (RESIDUAL_COLUMNS, ModeSpec, SerialBiasConfig, analytic_bias,
                                   asymptotic_prediction, build_reference_config, delta_n, residual_csv,
                                   n_cal, n_zero, oracle_ols, residuals, run_bias,
                                   scattering_weight, sign_changes, synth_measured)

seeds = st.integers(0, 2 ** 32 - 1)


def direct_ols(x, y):
    # textbook closed form, a second independent route to the fit
    xm, ym = x.mean(), y.mean()
    slope = np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2)
    return slope, ym - slope * xm


@given(seeds)
def test_closed_form_matches_least_squares(seed):
    cfg = random_bias_config(np.random.default_rng(seed))
    rep = analytic_bias(cfg)
    data = synth_measured(cfg)
    _, _, g_fit, n_fit = oracle_ols(data)
    assert g_fit == pytest.approx(rep.gain_fit_analytic, rel=1e-9)
    assert n_fit == pytest.approx(rep.n_fit_analytic, rel=1e-9)
    slope, icpt = direct_ols(data.n_cal, data.n_meas)
    assert slope == pytest.approx(g_fit, rel=1e-9)


@given(seeds)
def test_noise_error_is_fit_minus_truth(seed):
    cfg = random_bias_config(np.random.default_rng(seed))
    rep = analytic_bias(cfg)
    assert rep.noise_error_analytic == pytest.approx(rep.n_fit_analytic - rep.n_sys_true0,
                                                     rel=1e-9, abs=1e-12)


@given(seeds)
def test_no_spurs_means_no_bias(seed):
    cfg = random_bias_config(np.random.default_rng(seed))
    cfg = cfg.replace(modes=[m for m in cfg.modes if m.n in (0, -1)])
    rep = analytic_bias(cfg)
    assert rep.beta == 0
    assert rep.gain_fit_analytic == pytest.approx(rep.gain_true, rel=1e-12)
    assert rep.noise_error_analytic == pytest.approx(0, abs=1e-12)


def test_calibration_flux_by_hand():
    cfg = build_reference_config()
    eps = cfg.eps[3]
    T = cfg.temperatures()[3]
    want = planck_occupation(4e9, T) + planck_occupation(4e9, T)  # idler at |4 - 8| GHz, A_i = A_s
    assert n_cal(cfg, eps) == pytest.approx(want, rel=1e-12)


def test_reference_scenario_signs():
    cfg = build_reference_config()
    rep, data = run_bias(cfg)
    assert rep.beta > 0
    assert rep.gain_fit_analytic > rep.gain_true
    assert rep.noise_error_analytic < 0
    assert rep.asymptotic_error < 0
    _, res = residuals(data)
    assert sign_changes(res[np.argsort(data.eps)]) >= 2


def test_reference_scenario_asymptote():
    cfg = build_reference_config(epsilon_grid=np.linspace(50, 500, 10))
    rep, _ = run_bias(cfg)
    assert rep.noise_error_analytic == pytest.approx(rep.asymptotic_error, rel=0.05)
    assert rep.beta == pytest.approx(rep.beta_asym, rel=0.01)
    assert rep.alpha == pytest.approx(rep.alpha_limit)


@pytest.mark.parametrize("g_db", [10, 15, 20, 25])
def test_bias_grows_with_spur_content(g_db):
    rep, _ = run_bias(build_reference_config(g_db))
    assert rep.beta > 0 and rep.noise_error_analytic < 0


def test_scattering_weights():
    assert scattering_weight(100.0, 0) == 100.0
    assert scattering_weight(100.0, 1) == pytest.approx(10.0)
    assert scattering_weight(100.0, -2) == pytest.approx(np.sqrt(99))
    cfg = build_reference_config()
    assert [m.n for m in cfg.modes] == [0, -1, 1, -2, 2, 3, -4, 4, -5]
    assert all(m.x2_back == pytest.approx(m.x2_fwd / 100) for m in cfg.modes)


def test_zero_noise_terms():
    cfg = build_reference_config()
    base = n_zero(cfg)
    more = n_zero(cfg.replace(n_exc_loss=0.2))
    assert more - base == pytest.approx(0.2)
    lossy = cfg.replace(A_s=0.5, modes=[ModeSpec(0, 4e9, 0.5, cfg.G, 0)] + list(cfg.modes[1:]))
    assert n_zero(lossy) > base


def test_delta_n_vanishes_only_as_vacuum():
    cfg = build_reference_config()
    d0 = delta_n(cfg, 0.0)
    assert d0 > 0  # spurs still carry vacuum
    assert delta_n(cfg, 10.0) > d0


def test_noisy_synthesis_is_seeded():
    cfg = build_reference_config()
    a = synth_measured(cfg, 1e-3, seed=4)
    b = synth_measured(cfg, 1e-3, seed=4)
    c = synth_measured(cfg, 1e-3, seed=5)
    assert np.array_equal(a.n_meas, b.n_meas) and not np.array_equal(a.n_meas, c.n_meas)


def test_shot_source_config():
    cfg = build_reference_config().replace(kind="shot", epsilon_grid=np.linspace(-20, 20, 9).tolist())
    rep = analytic_bias(cfg)
    assert np.all(np.isnan(rep.T_K))
    assert rep.beta > 0


def test_residual_csv():
    cfg = build_reference_config()
    _, data = run_bias(cfg)
    rows = list(csv.reader(io.StringIO(residual_csv(cfg, data))))
    assert tuple(rows[0]) == RESIDUAL_COLUMNS
    eps = [float(r[0]) for r in rows[1:]]
    assert eps == sorted(eps) and len(eps) == 10


def test_config_validation_and_json():
    cfg = build_reference_config()
    assert SerialBiasConfig.from_json(cfg.to_json()) == cfg
    d = cfg.to_dict()
    d["bogus"] = 1
    with pytest.raises(ConfigError):
        SerialBiasConfig.from_dict(d)
    with pytest.raises(UnderdeterminedError):
        cfg.replace(epsilon_grid=[1.0, 1.0])
    with pytest.raises(DomainError):
        cfg.replace(A_s=1.5)
    with pytest.raises(DomainError):
        cfg.replace(modes=[m for m in cfg.modes if m.n != -1])
    with pytest.raises(DomainError):
        build_reference_config(0.0)
    assert sign_changes([1, -1, 0, -2, 3]) == 2


def test_asymptotic_slopes():
    cfg = build_reference_config()
    a = asymptotic_prediction(cfg)
    # thermal flux is linear in eps at large eps with slope w_s / w
    big = np.array([1e4, 2e4])
    slope = np.diff(n_cal(cfg, big))[0] / 1e4
    assert slope == pytest.approx(a.alpha_limit, rel=1e-6)
    dslope = np.diff(delta_n(cfg, big))[0] / 1e4
    assert dslope == pytest.approx(a.gamma, rel=1e-6)
