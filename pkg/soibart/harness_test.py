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

from soibart import harness
from soibart._bart import BartConfig
from soibart._errors import SoiBartError, UnknownPreset
from soibart.data import LagSpec, MonthStamp, TimeSeries

_FAST = BartConfig(n_iter=60, burn_in=10, log_every=0)


def _series(years=40, seed=0):
    rng = np.random.default_rng(seed)
    n = 12 * years
    t = np.arange(n)
    noise = np.zeros(n)
    e = rng.normal(scale=4., size=n)
    for i in range(1, n):
        noise[i] = 0.6 * noise[i - 1] + e[i]
    return TimeSeries(MonthStamp(1960, 1), 8. * np.sin(2. * np.pi * t / 12.) + noise)


class TestRegistry(unittest.TestCase):
    def test_names(self):
        self.assertEqual(
            set(harness.PRESETS),
            {'oct-full', 'oct-reduced', 'oct-no-sep', 'oct-far', 'oct-far-73', 'ar-select', 'ar5-backtest'},
        )

    def test_contents(self):
        full = harness.get_preset('oct-full')
        self.assertEqual(full.spec.lags, tuple(range(1, 13)) + (41, 73))
        self.assertEqual(full.spec.target_month, 10)
        self.assertEqual((full.m, full.train_fraction, full.runs), (20, 0.8, 10))
        self.assertTrue(full.importance)
        self.assertEqual(harness.get_preset('oct-no-sep').spec.lags, (2, 3, 4, 5, 6))
        self.assertEqual(harness.get_preset('oct-far').spec.lags, (10, 41))
        select = harness.get_preset('ar-select')
        self.assertIsNone(select.spec.target_month)
        self.assertAlmostEqual(select.train_fraction, 2. / 3.)
        backtest = harness.get_preset('ar5-backtest')
        self.assertTrue(backtest.is_horizon)
        self.assertEqual((backtest.m, backtest.horizon), (40, 12))
        self.assertEqual(backtest.config(_FAST).m, 40)

    def test_unknown(self):
        with self.assertRaises(UnknownPreset):
            harness.get_preset('no-such')
        with self.assertRaises(SoiBartError):
            harness.run_preset('no-such', _series(), 0)

    def test_invalid_preset(self):
        with self.assertRaises(ValueError):
            harness.ExperimentPreset('x', LagSpec((1, 2), 10), m=5, train_fraction=0.5, horizon=3)
        with self.assertRaises(ValueError):
            harness.ExperimentPreset('x', LagSpec((1, 2)), m=5, train_fraction=1.)


class TestFitPresets(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.series = _series()
        cls.report = harness.run_preset('oct-reduced', cls.series, 7, runs=3, m=5, base_config=_FAST,
                                        select_best=True)

    def test_averages(self):
        report = self.report
        self.assertEqual(report.runs, 3)
        self.assertEqual(report.config.m, 5)
        self.assertEqual(report.train.n, report.per_run[0][0].n)
        self.assertAlmostEqual(report.test.rmse, np.mean([test.rmse for _, test in report.per_run]))
        self.assertIsNone(report.importance)
        self.assertEqual(report.horizons, {})

    def test_deterministic(self):
        again = harness.run_preset('oct-reduced', self.series, 7, runs=3, m=5, base_config=_FAST, select_best=True)
        self.assertEqual(again.train, self.report.train)
        self.assertEqual(again.test, self.report.test)
        self.assertEqual(again.best_run, self.report.best_run)

    def test_best_run(self):
        rmse = [test.rmse for _, test in self.report.per_run]
        self.assertEqual(self.report.best_run, int(np.argmin(rmse)))
        self.assertIn('best', harness.report_rows(self.report))

    def test_overfit_gap(self):
        self.assertAlmostEqual(harness.overfit_gap(self.report), self.report.test.rmse - self.report.train.rmse)

    def test_format(self):
        text = harness.format_report(self.report)
        self.assertTrue(text.startswith('oct-reduced: '))
        for word in ('Sample', 'CORR', 'MAE', 'RMSE', 'Training', 'Testing', 'overfit gap', 'best run'):
            self.assertIn(word, text)

    def test_rows(self):
        rows = harness.report_rows(self.report)
        self.assertEqual([r['sample'] for r in rows['']], ['train', 'test'])
        self.assertEqual(list(rows[''][0]), ['sample', 'corr', 'mae', 'rmse', 'n'])

    def test_importance(self):
        report = harness.run_preset('oct-full', self.series, 1, runs=2, m=5, base_config=_FAST)
        names = report.importance.feature_names
        self.assertEqual(len(names), 14)
        self.assertEqual((names[0], names[9], names[-1]), ('Sep', 'Dec-1', '-73'))
        self.assertAlmostEqual(float(np.mean(report.importance.importance)), 1., places=10)
        self.assertEqual(len(harness.report_rows(report)['importance']), 14)
        self.assertIn('Importance', harness.format_report(report))

    def test_sweep(self):
        reports = harness.tree_count_sweep('oct-far', self.series, 3, tree_counts=(3, 6), runs=1, base_config=_FAST)
        self.assertEqual([r.config.m for r in reports], [3, 6])
        self.assertEqual(reports[0].per_run[0][0].n, reports[1].per_run[0][0].n)


class TestHorizonPreset(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.report = harness.run_preset('ar5-backtest', _series(years=34), 2, runs=1, m=5, base_config=_FAST)

    def test_tables(self):
        self.assertEqual(set(self.report.horizons), {'mean', 'median', 'ar'})
        for table in self.report.horizons.values():
            self.assertEqual(table.horizon, 12)
        self.assertIsNone(self.report.train)
        self.assertIsNotNone(self.report.white_noise)
        self.assertEqual(self.report.white_noise.max_lag, 36)

    def test_rows_and_text(self):
        rows = harness.report_rows(self.report)
        self.assertEqual(set(rows), {'', 'median', 'ar', 'white-noise'})
        self.assertEqual(len(rows['']), 12)
        text = harness.format_report(self.report)
        self.assertIn('1 Month ', text)
        self.assertIn('12 Months', text)
        self.assertIn('AR baseline', text)
        self.assertIn('white noise:', text)


if __name__ == '__main__':
    unittest.main()
