import datetime as dt
import math

import numpy as np
import pytest

from tailvol.expansion import ForwardVarianceCurve
from tailvol.filters import FilterState, NoiseModel
from tailvol.measure import (
    Garch11Spec,
    RiskPremia,
    garch11_varswap,
    noise_moments,
    omega_eigen,
    varswap_price,
)
from tailvol.pricer import (
    McConfig,
    chain_from_ensemble,
    garch11_varswap_mc,
    price_european,
    realworld_drift_check,
    simulate_pricing,
    smile,
)
from tailvol.replication import OptionKind


def _paths(spec, premia, state, mom, horizons=(0.5,), n=20_000, seed=7, **kw):
    cfg = McConfig(n_paths=n, seed=seed, **kw)
    return simulate_pricing(spec, premia, state, mom, horizons, cfg)


def test_mc_config_validation():
    with pytest.raises(ValueError):
        McConfig(n_paths=0, seed=1)
    with pytest.raises(ValueError):
        McConfig(n_paths=10_001, seed=1, antithetic=True)
    with pytest.raises(ValueError):
        McConfig(n_paths=100, seed=1, block_size=7)
    with pytest.raises(ValueError):
        McConfig(n_paths=100, seed=1, steps_per_day=0)


def test_horizon_index(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments,
                   horizons=(0.1, 0.5), n=2_000)
    # 0.1y is not a whole number of days; the snapshot lands on the nearest
    # step but queries within half a step must still resolve
    assert paths.horizons[0] == pytest.approx(25.0 / 252.0)
    assert paths.horizon_index(0.5) == 1
    assert paths.horizon_index(0.1) == 0
    assert paths.horizon_index(float(paths.horizons[0])) == 0
    assert paths.dt_years == pytest.approx(1.0 / 252.0)
    with pytest.raises(ValueError):
        paths.horizon_index(0.3)


def test_simulation_is_seed_deterministic(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    a = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=4_000, seed=3)
    b = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=4_000, seed=3)
    np.testing.assert_array_equal(a.s, b.s)
    np.testing.assert_array_equal(a.int_var, b.int_var)
    np.testing.assert_array_equal(a.x, b.x)
    c = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=4_000, seed=4)
    assert not np.array_equal(a.s, c.s)


def test_block_size_only_reshuffles_randomness(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    # each block draws from its own counter stream, so path values move with
    # the block layout -- but the deterministic pieces must not, and the
    # estimates have to stay statistically compatible
    a = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=8_192, block_size=8_192)
    b = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=8_192, block_size=2_048)
    np.testing.assert_array_equal(a.control_var, b.control_var)
    np.testing.assert_array_equal(a.horizons, b.horizons)
    ma, ea = price_european(lambda s: s, a, 0.0, 0.5)
    mb, eb = price_european(lambda s: s, b, 0.0, 0.5)
    assert abs(ma - mb) < 5.0 * math.hypot(ea, eb)


def test_spot_is_a_martingale(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=40_000)
    price, se = price_european(lambda s: s, paths, 0.0, 0.5)
    assert abs(price - 1.0) < 4.0 * se
    ctrl = float(np.mean(paths.s_control[0]))
    assert abs(ctrl - 1.0) < 4.0 * float(np.std(paths.s_control[0])) / math.sqrt(40_000)


def test_antithetic_control_log_mean_is_exact(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    # pairing cancels the driving noise exactly, leaving the deterministic
    # -v/2 drift of the lognormal control
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=4_000)
    log_mean = float(np.mean(np.log(paths.s_control[0])))
    assert log_mean == pytest.approx(-0.5 * float(paths.control_var[0]), abs=1e-12)


def test_control_variance_integrates_forward_curve(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=2_000)
    eig = omega_eigen(three_scale_spec, mild_premia)
    curve = ForwardVarianceCurve(
        weights=(1.0 + mild_premia.lambda2)
        * eig.weights_tilde
        * eig.state_coords(flat_state.x),
        rates=eig.rates.copy(),
    )
    horizon = float(paths.horizons[0])
    # midpoint-rule total variance: second-order accurate at daily steps
    assert float(paths.control_var[0]) == pytest.approx(curve.integral(horizon), rel=1e-4)
    # sample variance of the lognormal control agrees with its parameter
    sample = float(np.var(np.log(paths.s_control[0])))
    assert sample == pytest.approx(paths.control_var[0], rel=0.1)


def test_integrated_variance_prices_varswap(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=40_000)
    mc, se = price_european(lambda s: s, paths, 0.0, 0.5)  # warm the API
    iv_mean, iv_se = (
        float(np.mean(paths.int_var[0])),
        float(np.std(paths.int_var[0], ddof=1)) / math.sqrt(40_000),
    )
    eig = omega_eigen(three_scale_spec, mild_premia)
    target = varswap_price(flat_state, eig, mild_premia, float(paths.horizons[0]))
    assert abs(iv_mean - target) < 4.0 * iv_se


def test_antithetic_reduces_error_on_linear_payoffs(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    anti = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=16_000, antithetic=True)
    plain = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=16_000, antithetic=False)
    _, se_anti = price_european(lambda s: s, anti, 0.0, 0.5)
    _, se_plain = price_european(lambda s: s, plain, 0.0, 0.5)
    # the payoff is not purely linear in the normals (vol feeds back), so the
    # cancellation is partial; measured ratio is around 0.58 here
    assert se_anti < 0.75 * se_plain


def test_price_european_discounts(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=2_000)
    p0, _ = price_european(lambda s: s, paths, 0.0, 0.5)
    p4, _ = price_european(lambda s: s, paths, 0.04, 0.5)
    horizon = float(paths.horizons[0])
    assert p4 == pytest.approx(p0 * math.exp(-0.04 * horizon), rel=1e-12)


def test_chain_put_call_parity_is_exact(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=10_000)
    strikes = np.array([0.8, 0.9, 1.0, 1.1, 1.25])
    chain = chain_from_ensemble(paths, 0.5, strikes)
    s_mean = float(np.mean(paths.s[0]))
    puts = {q.strike: q.mid for q in chain.quotes if q.kind is OptionKind.PUT}
    calls = {q.strike: q.mid for q in chain.quotes if q.kind is OptionKind.CALL}
    assert calls[1.0] - puts[1.0] == pytest.approx(s_mean - 1.0, abs=1e-12)


def test_chain_prices_match_brute_force(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=6_000)
    strikes = np.array([0.85, 1.0, 1.2])
    chain = chain_from_ensemble(paths, 0.5, strikes)
    s = paths.s[0]
    for q in chain.quotes:
        if q.kind is OptionKind.PUT:
            ref = float(np.mean(np.maximum(q.strike - s, 0.0)))
        else:
            ref = float(np.mean(np.maximum(s - q.strike, 0.0)))
        assert q.mid == pytest.approx(ref, rel=1e-10, abs=1e-14)


def test_chain_from_control_paths(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    paths = _paths(three_scale_spec, mild_premia, flat_state, gaussian_moments, n=6_000)
    strikes = np.array([0.9, 1.0, 1.1])
    ctrl = chain_from_ensemble(paths, 0.5, strikes, use_control=True)
    sv = chain_from_ensemble(paths, 0.5, strikes)
    assert ctrl.quotes[0].mid != sv.quotes[0].mid


def test_garch11_varswap_mc_agrees_with_closed_form(gaussian_moments):
    spec11 = Garch11Spec(nu_bar=0.04, alpha=0.3, length_days=20.0, dt_years=1.0 / 252.0)
    premia = RiskPremia(0.3, 0.0, 0.0)
    cfg = McConfig(n_paths=30_000, seed=11)
    # 0.4y is 100.8 daily steps: exercises the fractional final step
    mc, se = garch11_varswap_mc(spec11, premia, 0.09, gaussian_moments, 0.4, cfg)
    closed = garch11_varswap(0.09, spec11, premia, 0.4)
    assert abs(mc - closed) < 4.0 * se


def test_smile_skews_down_with_large_skew_premium(three_scale_spec, flat_state, gaussian_moments):
    # lambda4 must clear the kurtosis floor for this (lambda2, lambda3) pair
    premia = RiskPremia(0.2, 0.8, 2.0)
    cfg = McConfig(n_paths=30_000, seed=5)
    surf = smile(
        three_scale_spec, premia, flat_state, gaussian_moments,
        (0.25,), np.array([0.9, 1.0, 1.1]), cfg,
    )
    vols = {k: v for k, v in zip(surf.strikes[0], surf.vols[0])}
    assert vols[0.9] > vols[1.0] > vols[1.1]
    assert all(se < 0.01 for se in surf.stderrs[0])


def test_smile_drops_unpriceable_strikes(three_scale_spec, flat_state, mild_premia, gaussian_moments):
    cfg = McConfig(n_paths=4_000, seed=5)
    surf = smile(
        three_scale_spec, mild_premia, flat_state, gaussian_moments,
        (0.25,), np.array([0.05, 1.0, 20.0]), cfg,
    )
    assert len(surf.dropped) == 2
    assert list(surf.strikes[0]) == [1.0]


def test_drift_check_runs_and_reports(gaussian_moments):
    spec11 = Garch11Spec(nu_bar=0.04, alpha=0.25, length_days=25.0, dt_years=1.0 / 252.0)
    res = realworld_drift_check(
        spec11, RiskPremia(0.0, 0.0, 0.0), NoiseModel(), n_paths=400, n_days=200, seed=2
    )
    assert res.n_path_days == 400 * 200
    assert math.isfinite(res.z_score)
    assert abs(res.z_score) < 5.0
