# Copyright 2025 soibart Developers. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

import unittest

import numpy as np
from absl.testing import parameterized

from soibart._bart import BartConfig, fit, predict_draws, predict_mean, predict_median
from soibart.data import LagSpec, MonthStamp, TimeSeries, build_lag_matrix
from soibart.forecast import (
    ForecastConfig,
    iterate_forecast,
    iterate_points,
    point_predictor,
    quantile_label,
    sample_trajectories,
)

_FAST = BartConfig(m=5, n_iter=60, burn_in=10, log_every=0)
_SPEC = LagSpec((1, 2, 3))


def _series(n=150, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    values = 5. * np.sin(2. * np.pi * t / 12.) + rng.normal(scale=1., size=n)
    return TimeSeries(MonthStamp(1990, 1), values)


class TestForecastConfig(parameterized.TestCase):
    @parameterized.parameters(
        dict(horizon=0),
        dict(feedback='mode'),
        dict(n_trajectories=-1),
        dict(n_trajectories=1),
        dict(quantiles=(0.5, 0.25)),
        dict(quantiles=(0.5, 0.5)),
        dict(quantiles=(0., 0.5)),
    )
    def test_invalid(self, **kwargs):
        with self.assertRaises(ValueError):
            ForecastConfig(**kwargs)

    def test_defaults(self):
        config = ForecastConfig()
        self.assertEqual(config.horizon, 12)
        self.assertEqual(config.feedback, 'mean')
        self.assertTrue(config.refit_each_step)
        self.assertFalse(config.refit_trajectories)

    @parameterized.parameters((0.05, 'q05'), (0.5, 'q50'), (0.95, 'q95'), (0.025, 'q2.5'))
    def test_quantile_label(self, level, label):
        self.assertEqual(quantile_label(level), label)


class TestIterateForecast(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.series = _series()
        cls.posterior = fit(build_lag_matrix(cls.series, _SPEC), None, _FAST, seed=3)

    def _last_row(self):
        return self.series.values[len(self.series) - np.asarray(_SPEC.lags)]

    def test_one_step_is_posterior_mean(self):
        result = iterate_forecast(self.series, _SPEC, _FAST, ForecastConfig(horizon=1), 3, posterior=self.posterior)
        self.assertAlmostEqual(result.point[0], predict_mean(self.posterior, self._last_row()), places=10)

    def test_median_feedback(self):
        predict = point_predictor(self.posterior, 'median')
        self.assertAlmostEqual(predict(self._last_row()[None])[0], predict_median(self.posterior, self._last_row()),
                               places=10)
        with self.assertRaises(ValueError):
            point_predictor(self.posterior, 'mode')

    def test_fast_mode_feeds_points_back(self):
        fconfig = ForecastConfig(horizon=4, refit_each_step=False)
        result = iterate_forecast(self.series, _SPEC, _FAST, fconfig, 3, posterior=self.posterior)
        expected = iterate_points(self.series.values[-3:], _SPEC.lags, 4, point_predictor(self.posterior))
        np.testing.assert_allclose(result.point, expected)
        self.assertFalse(result.refit)
        self.assertIsNone(result.quantiles)

    def test_refit_shares_first_step(self):
        fast = iterate_forecast(self.series, _SPEC, _FAST, ForecastConfig(horizon=2, refit_each_step=False), 3,
                                posterior=self.posterior)
        refit = iterate_forecast(self.series, _SPEC, _FAST, ForecastConfig(horizon=2), 3, posterior=self.posterior)
        self.assertAlmostEqual(fast.point[0], refit.point[0], places=10)
        self.assertTrue(refit.refit)
        self.assertTrue(np.all(np.isfinite(refit.point)))

    def test_stamps_continue_calendar(self):
        series = TimeSeries(MonthStamp(2000, 1), self.series.values[:131])
        self.assertEqual(series.end, MonthStamp(2010, 11))
        result = iterate_forecast(series, _SPEC, _FAST, ForecastConfig(horizon=3, refit_each_step=False), 3)
        self.assertEqual(result.stamps, (MonthStamp(2010, 12), MonthStamp(2011, 1), MonthStamp(2011, 2)))
        self.assertEqual(result.horizon, 3)

    def test_rows_with_quantiles(self):
        fconfig = ForecastConfig(horizon=3, n_trajectories=40, refit_each_step=False)
        result = iterate_forecast(self.series, _SPEC, _FAST, fconfig, 3, posterior=self.posterior)
        rows = result.to_rows()
        self.assertEqual(len(rows), 3)
        self.assertEqual(list(rows[0]), ['year', 'month', 'point', 'q05', 'q25', 'q50', 'q75', 'q95'])
        self.assertEqual(result.trajectories.shape, (40, 3))
        self.assertTrue(np.all(np.diff(result.quantiles, axis=1) >= 0.))

    def test_target_month_rejected(self):
        with self.assertRaises(ValueError):
            iterate_forecast(self.series, LagSpec((1, 2), target_month=10), _FAST, ForecastConfig(horizon=1), 3)


class TestTrajectories(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.series = _series(seed=1)
        cls.posterior = fit(build_lag_matrix(cls.series, _SPEC), None, _FAST, seed=5)

    def test_first_step_within_predictive_range(self):
        sample = sample_trajectories(self.series, _SPEC, _FAST, 1, 50, 5, posterior=self.posterior)
        row = self.series.values[len(self.series) - np.asarray(_SPEC.lags)]
        draws = predict_draws(self.posterior, row)
        spread = 4. * self.posterior.sigma_raw.max()
        self.assertTrue(np.all(sample.paths[:, 0] >= draws.min() - spread))
        self.assertTrue(np.all(sample.paths[:, 0] <= draws.max() + spread))

    def test_deterministic(self):
        a = sample_trajectories(self.series, _SPEC, _FAST, 3, 10, 5, posterior=self.posterior)
        b = sample_trajectories(self.series, _SPEC, _FAST, 3, 10, 5, posterior=self.posterior)
        c = sample_trajectories(self.series, _SPEC, _FAST, 3, 10, 6, posterior=self.posterior)
        np.testing.assert_array_equal(a.paths, b.paths)
        self.assertFalse(np.array_equal(a.paths, c.paths))

    def test_trajectory_independent_of_count(self):
        few = sample_trajectories(self.series, _SPEC, _FAST, 3, 4, 5, posterior=self.posterior)
        many = sample_trajectories(self.series, _SPEC, _FAST, 3, 12, 5, posterior=self.posterior)
        np.testing.assert_allclose(few.paths, many.paths[:4])

    def test_quantiles_monotone(self):
        sample = sample_trajectories(self.series, _SPEC, _FAST, 4, 60, 5, posterior=self.posterior)
        self.assertEqual(sample.quantiles.shape, (4, 5))
        self.assertTrue(np.all(np.diff(sample.quantiles, axis=1) >= 0.))

    def test_refit_shares_first_step(self):
        plain = sample_trajectories(self.series, _SPEC, _FAST, 2, 2, 5, posterior=self.posterior)
        refit = sample_trajectories(self.series, _SPEC, _FAST, 2, 2, 5, posterior=self.posterior, refit=True)
        self.assertEqual(refit.paths.shape, (2, 2))
        np.testing.assert_allclose(plain.paths[:, 0], refit.paths[:, 0])

    def test_first_step_mean_matches_posterior_mean(self):
        n = 2000
        sample = sample_trajectories(self.series, _SPEC, _FAST, 1, n, 7, posterior=self.posterior)
        row = self.series.values[len(self.series) - np.asarray(_SPEC.lags)]
        first = sample.paths[:, 0]
        error = 3. * first.std(ddof=1) / np.sqrt(n)
        self.assertAlmostEqual(float(first.mean()), predict_mean(self.posterior, row), delta=error)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            sample_trajectories(self.series, _SPEC, _FAST, 0, 5, 5, posterior=self.posterior)


class TestUncertaintyGrowth(unittest.TestCase):
    def test_interval_width_grows_with_horizon(self):
        rng = np.random.default_rng(11)
        values = np.zeros(300)
        for i in range(1, values.size):
            values[i] = 0.9 * values[i - 1] + rng.normal()
        series = TimeSeries(MonthStamp(1980, 1), values)
        config = BartConfig(m=10, n_iter=200, burn_in=50, log_every=0)
        widths = []
        for seed in range(4):
            sample = sample_trajectories(series, _SPEC, config, 4, 300, seed, levels=(0.1, 0.9))
            widths.append(sample.quantiles[:, 1] - sample.quantiles[:, 0])
        widths = np.mean(widths, axis=0)
        # sampled quantiles carry Monte Carlo error of a few percent
        self.assertTrue(np.all(np.diff(widths) >= -0.1 * widths[0]), widths)
        self.assertGreater(widths[-1], widths[0])


if __name__ == '__main__':
    unittest.main()
