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

"""
Reproduction checks on the real SOI record.

The record bundled with the package is used when it is installed;
``SOIBART_DATA`` overrides it with a Bureau of Meteorology table (or its
canonical CSV). Either must cover January 1876 to at least August 2009.
``SOIBART_JOBS`` sets the worker count. These runs take minutes each.
"""

import os
import unittest

import numpy as np

from soibart import harness
from soibart._bart import variable_importance
from soibart.cli import DEFAULT_SEED
from soibart.data import LagSpec, MonthStamp, build_lag_matrix, read_series, slice_series, snapshot_path
from soibart.forecast import ForecastConfig, iterate_forecast

_DATA = os.environ.get('SOIBART_DATA') or (str(snapshot_path()) if snapshot_path().is_file() else None)
_JOBS = int(os.environ.get('SOIBART_JOBS', '1'))


@unittest.skipUnless(_DATA, 'no bundled SOI record and SOIBART_DATA is not set')
class TestSoiRecord(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        series = read_series(_DATA)
        cls.series = slice_series(series, MonthStamp(1876, 1), MonthStamp(2009, 8))
        cls.reports = {}

    def _report(self, name):
        if name not in self.reports:
            self.reports[name] = harness.run_preset(name, self.series, DEFAULT_SEED, n_jobs=_JOBS)
        return self.reports[name]

    def test_record_span(self):
        self.assertEqual(len(self.series), 1604)
        dataset = build_lag_matrix(self.series, harness.get_preset('oct-full').spec)
        self.assertEqual(dataset.n, 127)
        self.assertEqual((dataset.target_stamps[0], dataset.target_stamps[-1]),
                         (MonthStamp(1882, 10), MonthStamp(2008, 10)))

    def test_october_full(self):
        report = self._report('oct-full')
        self.assertAlmostEqual(report.test.corr, 0.72, delta=0.10)
        self.assertAlmostEqual(report.train.corr, 0.92, delta=0.05)
        self.assertGreaterEqual(sum(train.corr > test.corr for train, test in report.per_run), 9)
        ranked = report.importance.ranked()
        self.assertEqual(ranked[0][0], 'Sep')

    def test_reduced_model_overfits_less(self):
        full, reduced = self._report('oct-full'), self._report('oct-reduced')
        self.assertLessEqual(reduced.test.rmse, full.test.rmse)
        self.assertLess(harness.overfit_gap(reduced), harness.overfit_gap(full))

    def test_autoregressive_selection(self):
        report = self._report('ar-select')
        importance = report.importance.importance
        self.assertEqual(report.importance.ranked()[0][0], 'Lag 1')
        self.assertAlmostEqual(float(np.mean(importance)), 1., delta=1e-9)
        self.assertGreater(importance[:5].mean(), importance[5:9].mean())

    def test_selection_without_split(self):
        spec = harness.get_preset('oct-full').spec
        report = variable_importance(build_lag_matrix(self.series, spec), runs=10, seed=DEFAULT_SEED,
                                     n_jobs=_JOBS, feature_names=spec.display_names())
        self.assertEqual(report.ranked()[0][0], 'Sep')

    def test_horizon_backtest(self):
        report = self._report('ar5-backtest')
        mean = [s.corr for s in report.horizons['mean'].stats]
        median = [s.corr for s in report.horizons['median'].stats]
        ar = [s.corr for s in report.horizons['ar'].stats]
        self.assertAlmostEqual(mean[0], 0.647, delta=0.08)
        self.assertAlmostEqual(mean[11], 0.218, delta=0.10)
        self.assertTrue(mean[0] > mean[5] > mean[11])
        self.assertGreaterEqual(mean[0], median[0])
        self.assertGreater(np.mean(mean[3:]), np.mean(ar[3:]))
        self.assertAlmostEqual(ar[0], 0.620, delta=0.08)
        self.assertTrue(report.white_noise.passed)

    def test_forecast_flattens(self):
        spec = LagSpec((1, 2, 3, 4, 5))
        config = harness.get_preset('ar5-backtest').config()
        ratios = []
        for seed in range(DEFAULT_SEED, DEFAULT_SEED + 5):
            result = iterate_forecast(self.series, spec, config, ForecastConfig(refit_each_step=False), seed)
            self.assertEqual(result.stamps[0], MonthStamp(2009, 9))
            ratios.append(np.var(result.point[5:]) / np.var(self.series.values))
        self.assertLess(np.mean(ratios), 0.04)


if __name__ == '__main__':
    unittest.main()
