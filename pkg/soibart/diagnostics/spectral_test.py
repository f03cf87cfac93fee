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

from soibart._errors import ConstantSeries, LagTooLarge, TooShort
from soibart.data import MonthStamp, TimeSeries
from soibart.diagnostics import acf, acf_fft, correlogram, pacf, periodogram, white_noise_check


def _ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    y = np.zeros(n)
    e = rng.normal(size=n)
    y[0] = e[0] / np.sqrt(1. - phi * phi)
    for t in range(1, n):
        y[t] = phi * y[t - 1] + e[t]
    return y


class TestPeriodogram(parameterized.TestCase):
    def test_cosine_peak(self):
        t = np.arange(64)
        result = periodogram(np.cos(2. * np.pi * t / 8.))
        self.assertEqual(result.frequencies.size, 32)
        self.assertAlmostEqual(result.peak(), 8. / 64.)
        self.assertAlmostEqual(result.period[int(np.argmax(result.power))], 8.)

    def test_constant_series(self):
        result = periodogram(np.full(20, 3.7))
        np.testing.assert_allclose(result.power, 0., atol=1e-20)

    def test_white_noise_is_flat(self):
        rng = np.random.default_rng(0)
        result = periodogram(rng.normal(size=1000))
        self.assertLess(result.power.max(), 20. * np.median(result.power))

    @parameterized.parameters(101, 128)
    def test_parseval(self, n):
        rng = np.random.default_rng(n)
        values = rng.normal(size=n) * 7. + 2.
        result = periodogram(values)
        self.assertAlmostEqual(result.total_variance() / np.var(values), 1., delta=1e-6)

    def test_accepts_series_and_rows(self):
        series = TimeSeries(MonthStamp(2000, 1), np.sin(np.arange(24.)))
        result = periodogram(series)
        self.assertEqual(result.n, 24)
        rows = result.to_rows()
        self.assertEqual(list(rows[0]), ['frequency', 'period', 'power'])
        self.assertAlmostEqual(rows[0]['period'], 24.)

    def test_too_short(self):
        with self.assertRaises(TooShort):
            periodogram([1., 2., 3.])


class TestCorrelation(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.ar = _ar1(0.8, 20000, 1)

    def test_ar1_acf(self):
        r = acf(self.ar, 10)
        np.testing.assert_allclose(r[:3], 0.8 ** np.arange(1, 4), atol=0.03)

    def test_ar1_pacf(self):
        p = pacf(acf(self.ar, 10))
        self.assertAlmostEqual(p[0], 0.8, delta=0.02)
        self.assertTrue(np.all(np.abs(p[1:]) < 0.03))

    def test_pacf_first_equals_acf(self):
        r = acf(self.ar[:500], 12)
        p = pacf(r)
        self.assertEqual(p[0], r[0])
        self.assertTrue(np.all(np.abs(p) <= 1.))

    def test_pacf_of_exact_ar1(self):
        np.testing.assert_allclose(pacf(0.6 ** np.arange(1, 6)), [0.6, 0., 0., 0., 0.], atol=1e-12)

    def test_fft_matches_direct(self):
        rng = np.random.default_rng(2)
        values = rng.normal(size=333)
        np.testing.assert_allclose(acf_fft(values, 40), acf(values, 40), atol=1e-10)

    def test_errors(self):
        with self.assertRaises(LagTooLarge):
            acf(np.arange(20.), 10)
        with self.assertRaises(LagTooLarge):
            acf(np.arange(20.), 0)
        with self.assertRaises(ConstantSeries):
            acf(np.ones(50), 5)

    def test_correlogram(self):
        result = correlogram(self.ar[:400], 24)
        self.assertEqual(result.max_lag, 24)
        self.assertAlmostEqual(result.band, 1.96 / 20.)
        rows = result.to_rows()
        self.assertEqual(rows[0]['lag'], 1)
        self.assertEqual(list(rows[0]), ['lag', 'acf', 'pacf', 'band'])


class TestWhiteNoise(unittest.TestCase):
    def test_iid_noise(self):
        rng = np.random.default_rng(3)
        check = white_noise_check(rng.normal(size=2000), max_lag=24, threshold=0.75)
        self.assertTrue(check.passed)
        self.assertGreaterEqual(check.fraction_within_bands, 0.75)
        self.assertEqual(check.max_lag, 24)

    def test_persistent_series_fails(self):
        check = white_noise_check(_ar1(0.9, 500, 4))
        self.assertFalse(check.passed)

    def test_seasonal_series_fails(self):
        check = white_noise_check(np.sin(2. * np.pi * np.arange(240) / 12.))
        self.assertFalse(check.passed)

    def test_default_lag_fits_short_residuals(self):
        rng = np.random.default_rng(5)
        for n, expected in ((30, 14), (40, 19), (71, 35), (73, 36), (500, 36)):
            self.assertEqual(white_noise_check(rng.normal(size=n)).max_lag, expected)
        with self.assertRaises(LagTooLarge):
            white_noise_check(rng.normal(size=40), max_lag=36)

    def test_too_short(self):
        with self.assertRaises(TooShort):
            white_noise_check(np.arange(20.), max_lag=5)


if __name__ == '__main__':
    unittest.main()
