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

from soibart._errors import RankDeficient, TooFewRows
from soibart.data import LagSpec, MonthStamp, TimeSeries, build_lag_matrix
from soibart.forecast import ARModel, fit_ar, forecast_ar, iterate_points, predict_ar


def _ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    y = np.zeros(n)
    e = rng.normal(size=n)
    for t in range(1, n):
        y[t] = phi * y[t - 1] + e[t]
    return TimeSeries(MonthStamp(1900, 1), y)


class TestFitAR(unittest.TestCase):
    def test_recovers_ar1(self):
        model = fit_ar(build_lag_matrix(_ar1(0.5, 10000, 0), LagSpec((1,))))
        self.assertTrue(0.45 <= model.coefficients[0] <= 0.55)
        self.assertAlmostEqual(model.residual_sd, 1., delta=0.05)

    def test_white_noise(self):
        rng = np.random.default_rng(1)
        series = TimeSeries(MonthStamp(1900, 1), rng.normal(size=10000))
        model = fit_ar(build_lag_matrix(series, LagSpec((1, 2, 3, 4, 5))))
        self.assertEqual(model.order, 5)
        self.assertTrue(np.all(np.abs(model.coefficients) < 0.05))

    def test_exact_sinusoid(self):
        omega = 2. * np.pi / 12.
        series = TimeSeries(MonthStamp(1900, 1), 3. * np.sin(omega * np.arange(120) + 0.3))
        model = fit_ar(build_lag_matrix(series, LagSpec((1, 2))))
        np.testing.assert_allclose(model.coefficients, [2. * np.cos(omega), -1.], atol=1e-8)
        self.assertAlmostEqual(model.intercept, 0., places=8)
        self.assertLess(model.residual_sd, 1e-8)

    def test_period_two_is_rank_deficient(self):
        series = TimeSeries(MonthStamp(1900, 1), np.tile([1., -1.], 30))
        with self.assertRaises(RankDeficient):
            fit_ar(build_lag_matrix(series, LagSpec((1, 2))))

    def test_too_few_rows(self):
        series = TimeSeries(MonthStamp(1900, 1), np.arange(5.) ** 2)
        with self.assertRaises(TooFewRows):
            fit_ar(build_lag_matrix(series, LagSpec((1, 2))))

    def test_record(self):
        model = ARModel((1, 2), 0.5, [0.3, -0.1], 1.2)
        record = model.to_dict()
        self.assertEqual(record, {'p': 2, 'lags': [1, 2], 'intercept': 0.5, 'coefficients': [0.3, -0.1],
                                  'residual_sd': 1.2})
        again = ARModel.from_dict(record)
        np.testing.assert_array_equal(again.coefficients, model.coefficients)
        with self.assertRaises(ValueError):
            ARModel((1,), 0., [0.1, 0.2])
        with self.assertRaises(ValueError):
            ARModel((1,), 0., [0.1], -1.)


class TestForecastAR(unittest.TestCase):
    def test_constant_model(self):
        model = ARModel((1, 2, 3), 2.5, [0., 0., 0.])
        np.testing.assert_array_equal(forecast_ar(model, [1., 2., 3.], 6), np.full(6, 2.5))

    def test_ar1_closed_form(self):
        phi, y = 0.7, 4.
        model = ARModel((1,), 0., [phi])
        np.testing.assert_allclose(forecast_ar(model, [y], 5), phi ** np.arange(1, 6) * y)

    def test_converges_to_mean(self):
        model = ARModel((1, 2), 1., [0.5, 0.2])
        path = forecast_ar(model, [10., -3.], 200)
        self.assertAlmostEqual(path[-1], 1. / (1. - 0.7), places=8)

    def test_batched_windows(self):
        model = ARModel((1, 3), 0.1, [0.4, 0.2])
        windows = np.array([[1., 2., 3.], [0., -1., 5.]])
        batch = forecast_ar(model, windows, 4)
        self.assertEqual(batch.shape, (2, 4))
        for i in range(2):
            np.testing.assert_allclose(batch[i], forecast_ar(model, windows[i], 4))

    def test_predict_rows(self):
        model = ARModel((1, 2), 1., [2., 3.])
        np.testing.assert_allclose(predict_ar(model, [[1., 1.], [0., 2.]]), [6., 7.])


class TestIteratePoints(unittest.TestCase):
    def test_lag_order(self):
        seen = []

        def predict(rows):
            seen.append(rows.copy())
            return rows[:, 0] + 100.

        out = iterate_points([1., 2., 3.], (1, 3), 2, predict)
        np.testing.assert_array_equal(seen[0], [[3., 1.]])
        np.testing.assert_array_equal(seen[1], [[103., 2.]])
        np.testing.assert_array_equal(out, [103., 203.])

    def test_stub_model(self):
        out = iterate_points(np.ones((3, 5)), (1, 2, 5), 4, lambda rows: np.zeros(rows.shape[0]))
        np.testing.assert_array_equal(out, np.zeros((3, 4)))

    def test_invalid_horizon(self):
        with self.assertRaises(ValueError):
            iterate_points([1.], (1,), 0, lambda rows: rows[:, 0])


if __name__ == '__main__':
    unittest.main()
