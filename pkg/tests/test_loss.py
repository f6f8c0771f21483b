import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DEVICES, FITTED_LOSS
from nanofluxonium.circuit import ResonatorParams
from nanofluxonium.errors import ParameterError
from nanofluxonium.loss import (
    LossModel,
    MatrixElementTable,
    RateResult,
    crossover_frequency,
    equivalent_series_resistance,
    fit_quality_factors,
    gamma_capacitive,
    gamma_inductive,
    gamma_purcell,
    model_t1,
    t1_curve,
    thermal_factor,
)

DEVICE3 = DEVICES["device3"]
positive = st.floats(0.05, 20.0)


@pytest.fixture(scope="module")
def table3():
    return MatrixElementTable(DEVICE3)


class TestRates:
    @given(positive, positive, st.floats(0.01, 12.0), st.floats(1e-4, 4.0), st.floats(1e3, 1e6),
           st.floats(1e3, 1e6), st.floats(0.0, 0.2))
    def test_quotient_identity(self, e_c, e_l, f, me, q_l, q_c, temp):
        m = LossModel(q_l, q_c, temp)
        ratio = gamma_capacitive(e_c, f, me, m) / gamma_inductive(e_l, f, me, m)
        assert ratio == pytest.approx(f**2 * q_l / (8 * e_c * e_l * q_c), rel=1e-12)

    def test_zero_temperature_doubles(self):
        m = LossModel(39000, 15100, 0.0)
        bare = 2 * math.pi * 0.53 * 1e9 / 39000 * 0.3
        assert gamma_inductive(0.53, 1.0, 0.3, m) == pytest.approx(2 * bare, rel=1e-14)
        assert thermal_factor(1e-6, 0.0) == 2.0

    def test_inductive_flat_at_zero_temperature(self):
        m = LossModel(39000, 15100, 0.0)
        assert gamma_inductive(0.53, 0.5, 0.3, m) == gamma_inductive(0.53, 5.0, 0.3, m)

    def test_quadrupling_frequency(self):
        m = LossModel(39000, 15100, 0.0)
        assert gamma_capacitive(1.9, 2.0, 0.3, m) == pytest.approx(16 * gamma_capacitive(1.9, 0.5, 0.3, m),
                                                                   rel=1e-14)

    @given(st.floats(0.01, 10.0), st.floats(0.0, 0.3), st.floats(0.0, 0.3))
    def test_thermal_monotone(self, f, t_a, t_b):
        lo, hi = sorted((t_a, t_b))
        assert thermal_factor(f, lo) <= thermal_factor(f, hi)

    def test_bad_frequency(self):
        with pytest.raises(ParameterError):
            gamma_inductive(0.5, 0.0, 0.1, FITTED_LOSS)

    def test_loss_model_guards(self):
        with pytest.raises(ParameterError):
            LossModel(0, 1)
        with pytest.raises(ParameterError):
            LossModel(1, 1, -1e-3)

    @given(st.floats(0, 1e8), st.floats(0, 1e8), st.floats(0, 1e8))
    def test_composition_law(self, a, b, c):
        r = RateResult(a, b, c)
        if a + b + c > 0:
            assert r.t1_total == 1.0 / (a + b + c)
        else:
            assert r.t1_total == math.inf


class TestPurcell:
    def test_zero_coupling(self):
        assert gamma_purcell(0.0, 0.5, 1e-3) == 0.0

    @given(st.floats(1e-3, 0.2), st.floats(0.01, 3.0), st.floats(1e-5, 1e-2))
    def test_halving_detuning(self, g, delta, kappa):
        assert gamma_purcell(g, delta / 2, kappa) == pytest.approx(4 * gamma_purcell(g, delta, kappa), rel=1e-12)

    def test_resonant_rejected(self):
        with pytest.raises(ParameterError, match="resonant"):
            gamma_purcell(0.1, 0.0, 1e-3)

    def test_device3_window(self):
        r = ResonatorParams(7.5, 14800, 0.1)
        grid = np.linspace(-math.pi, 0.0, 41)
        checked = 0
        for pt in t1_curve(DEVICE3, FITTED_LOSS, grid, resonator=r):
            if abs(pt.omega_q - r.omega_r) > 0.3:
                assert pt.rates.gamma_purcell < 0.01 * pt.rates.total
                checked += 1
        assert checked > 20


class TestDerivedNumbers:
    def test_series_resistance(self):
        r = equivalent_series_resistance(0.55, 309e-9, 39000)
        assert r * 1e3 == pytest.approx(27.0, rel=0.05)

    def test_crossover(self):
        assert crossover_frequency(DEVICE3.e_c, DEVICE3.e_l, FITTED_LOSS) == pytest.approx(1.77, rel=0.05)

    def test_crossover_equal_rates(self):
        f = crossover_frequency(DEVICE3.e_c, DEVICE3.e_l, FITTED_LOSS)
        a = gamma_inductive(DEVICE3.e_l, f, 0.2, FITTED_LOSS)
        b = gamma_capacitive(DEVICE3.e_c, f, 0.2, FITTED_LOSS)
        assert a == pytest.approx(b, rel=1e-12)


@pytest.fixture(scope="module")
def curve():
    return t1_curve(DEVICE3, FITTED_LOSS, np.linspace(-math.pi, -0.3 * math.pi, 57))


class TestCurve:
    def test_peak_band(self, curve):
        best = max(curve, key=lambda pt: pt.rates.t1_total)
        assert 1.7 <= best.omega_q <= 3.5
        assert 3.5e-6 <= best.rates.t1_total <= 14e-6

    def test_peak_between_regimes(self, curve):
        best = max(curve, key=lambda pt: pt.rates.t1_total)
        lo = min(curve, key=lambda pt: pt.omega_q)
        hi = max(curve, key=lambda pt: pt.omega_q)
        assert lo.rates.gamma_ind > lo.rates.gamma_cap
        assert hi.rates.gamma_cap > hi.rates.gamma_ind
        assert lo.omega_q < best.omega_q < hi.omega_q

    def test_nonnegative(self, curve):
        for pt in curve:
            assert pt.rates.gamma_ind >= 0 and pt.rates.gamma_cap >= 0 and pt.rates.gamma_purcell >= 0

    def test_grid_order_independent(self):
        grid = np.linspace(-math.pi, -0.5 * math.pi, 7)
        fwd = {pt.phi_ext: pt.rates.t1_total for pt in t1_curve(DEVICE3, FITTED_LOSS, grid)}
        rev = {pt.phi_ext: pt.rates.t1_total for pt in t1_curve(DEVICE3, FITTED_LOSS, grid[::-1])}
        assert fwd == rev


def _synthetic(table, m, freqs, noise=0.0, seed=0):
    t1 = model_t1(DEVICE3, freqs, table, m)
    rng = np.random.default_rng(seed)
    return list(zip(freqs, t1 * (1 + noise * rng.standard_normal(len(freqs)))))


class TestQFit:
    start = LossModel(20000, 30000)

    def test_noiseless_exact(self, table3):
        freqs = np.linspace(0.6, 4.0, 12)
        fit = fit_quality_factors(_synthetic(table3, FITTED_LOSS, freqs), DEVICE3, self.start, table3)
        assert fit.model.q_l == pytest.approx(39000, rel=1e-6)
        assert fit.model.q_c == pytest.approx(15100, rel=1e-6)
        assert not fit.degenerate

    def test_noisy_recovery(self, table3):
        freqs = np.linspace(0.6, 4.0, 25)
        for seed in range(3):
            data = _synthetic(table3, FITTED_LOSS, freqs, noise=0.05, seed=seed)
            fit = fit_quality_factors(data, DEVICE3, self.start, table3)
            assert fit.model.q_l == pytest.approx(39000, rel=0.10)
            assert fit.model.q_c == pytest.approx(15100, rel=0.10)
            assert np.all(np.isfinite(fit.covariance))

    def test_permutation_invariant(self, table3):
        data = _synthetic(table3, FITTED_LOSS, np.linspace(0.6, 4.0, 10), noise=0.05, seed=7)
        a = fit_quality_factors(data, DEVICE3, self.start, table3).model
        b = fit_quality_factors(data[::-1], DEVICE3, self.start, table3).model
        assert a == b

    def test_degenerate_warns(self, table3):
        data = _synthetic(table3, FITTED_LOSS, np.linspace(0.5, 1.2, 6))
        with pytest.warns(UserWarning, match="crossover"):
            fit = fit_quality_factors(data, DEVICE3, self.start, table3)
        assert fit.degenerate and fit.messages

    def test_too_few_points(self, table3):
        with pytest.raises(ParameterError):
            fit_quality_factors([(1.0, 1e-6), (2.0, 2e-6)], DEVICE3, self.start, table3)

    def test_table_monotone(self, table3):
        assert np.all(np.diff(table3.freqs) > 0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert np.all(table3(table3.freqs) >= 0)
