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

from soibart._bart import BartConfig, fit, predict_draws_batch
from soibart.data import LagSpec, MonthStamp, TimeSeries, build_lag_matrix, fit_stats, random_split
from soibart.forecast import (
    backtest_ar_horizons,
    backtest_horizons,
    backtest_run,
    summarize_runs,
)

_FAST = BartConfig(m=5, n_iter=60, burn_in=10, log_every=0)
_SPEC = LagSpec((1, 2, 3))


def _series(n=160, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    values = 5. * np.sin(2. * np.pi * t / 12.) + rng.normal(scale=1., size=n)
    return TimeSeries(MonthStamp(1980, 1), values)


def _ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    y = np.zeros(n)
    e = rng.normal(size=n)
    for t in range(1, n):
        y[t] = phi * y[t - 1] + e[t]
    return TimeSeries(MonthStamp(1900, 1), y)


class TestBacktestRun(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.series = _series()
        cls.bt_run = backtest_run(cls.series, _SPEC, _FAST, 2. / 3., 6, 11, feedbacks=('mean', 'median'), baseline=True)

    def test_one_step_matches_out_of_sample_fit(self):
        dataset = build_lag_matrix(self.series, _SPEC)
        mask = random_split(dataset.n, 2. / 3., 11)
        posterior = fit(dataset, mask, _FAST, 11)
        predicted = predict_draws_batch(posterior, dataset.rows[mask.test]).mean(axis=0)
        expected = fit_stats(predicted, dataset.targets[mask.test])
        got = self.bt_run.tables['mean'][0]
        self.assertEqual(got.n, expected.n)
        self.assertAlmostEqual(got.corr, expected.corr, places=10)
        self.assertAlmostEqual(got.rmse, expected.rmse, places=10)
        np.testing.assert_allclose(self.bt_run.residuals['mean'], dataset.targets[mask.test] - predicted)

    def test_scored_pairs_shrink_with_horizon(self):
        dataset = build_lag_matrix(self.series, _SPEC)
        mask = random_split(dataset.n, 2. / 3., 11)
        anchors = mask.test_index + _SPEC.max_lag - 1
        for key in ('mean', 'median', 'ar'):
            counts = [s.n for s in self.bt_run.tables[key]]
            self.assertEqual(len(counts), 6)
            self.assertTrue(all(b <= a for a, b in zip(counts, counts[1:])))
            for h, n in enumerate(counts, start=1):
                self.assertEqual(n, int(np.sum(anchors + h < len(self.series))))

    def test_summary(self):
        summary = summarize_runs([self.bt_run], 'median')
        self.assertEqual(summary.horizon, 6)
        self.assertEqual(summary.runs, 1)
        self.assertEqual(summary.feedback, 'median')
        rows = summary.to_rows()
        self.assertEqual(list(rows[0]), ['horizon', 'corr', 'mae', 'rmse', 'n'])
        self.assertEqual([r['horizon'] for r in rows], [1, 2, 3, 4, 5, 6])

    def test_invalid(self):
        with self.assertRaises(ValueError):
            backtest_run(self.series, _SPEC, _FAST, 2. / 3., 0, 1)
        with self.assertRaises(ValueError):
            backtest_run(self.series, _SPEC, _FAST, 2. / 3., 2, 1, feedbacks=('mode',))
        with self.assertRaises(ValueError):
            backtest_run(self.series, LagSpec((1,), target_month=10), _FAST, 2. / 3., 2, 1)


class TestBacktestHorizons(unittest.TestCase):
    def test_averages_runs(self):
        series = _series(seed=2)
        summary = backtest_horizons(series, _SPEC, _FAST, runs=2, horizon=3, seed=4)
        runs = [backtest_run(series, _SPEC, _FAST, 2. / 3., 3, 4 + r) for r in range(2)]
        expected = summarize_runs(runs, 'mean')
        self.assertEqual(summary.runs, 2)
        for a, b in zip(summary.stats, expected.stats):
            self.assertAlmostEqual(a.corr, b.corr, places=10)
            self.assertAlmostEqual(a.mae, b.mae, places=10)

    def test_refit_mode(self):
        series = _series(n=120, seed=3)
        plain = backtest_run(series, _SPEC, _FAST, 2. / 3., 2, 8)
        refit = backtest_run(series, _SPEC, _FAST, 2. / 3., 2, 8, refit_each_step=True)
        self.assertAlmostEqual(plain.tables['mean'][0].corr, refit.tables['mean'][0].corr, places=10)
        self.assertTrue(np.isfinite(refit.tables['mean'][1].rmse))
        self.assertTrue(summarize_runs([refit], 'mean', refit=True).refit)

    def test_runs_validated(self):
        with self.assertRaises(ValueError):
            backtest_horizons(_series(), _SPEC, _FAST, runs=0)


class TestBacktestAR(unittest.TestCase):
    def test_skill_decays(self):
        series = _ar1(0.8, 600, 0)
        summary = backtest_ar_horizons(series, LagSpec((1,)), runs=3, horizon=6, seed=0)
        self.assertEqual(summary.feedback, 'ar')
        self.assertFalse(summary.refit)
        self.assertGreater(summary.stats[0].corr, 0.7)
        self.assertGreater(summary.stats[0].corr, summary.stats[5].corr)
        dataset = build_lag_matrix(series, LagSpec((1,)))
        mask = random_split(dataset.n, 2. / 3., 0)
        self.assertEqual(summary.residuals.size, dataset.n - mask.n_train)


if __name__ == '__main__':
    unittest.main()
