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
Spectral and correlation diagnostics of monthly series and residuals.

Conventions
-----------
All estimators work on the mean-centered series ``d_t = y_t - mean(y)``.

- Periodogram ordinates ``I(f_k) = |sum_t d_t exp(-2 pi i f_k t)|^2 / n`` at the
  Fourier frequencies ``f_k = k / n`` for ``k = 1 .. floor(n / 2)``. With this
  scaling Parseval's identity reads
  ``(2 * sum_k I(f_k) - I(1/2)) / n == sum_t d_t^2 / n`` where the Nyquist
  ordinate ``I(1/2)`` only exists for even ``n``.
- Autocovariances use the biased ``1 / n`` normalization, so the sequence is
  positive semidefinite and the Durbin-Levinson recursion keeps every partial
  autocorrelation inside ``[-1, 1]``.
- Correlogram bands are ``+-1.96 / sqrt(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import brainstate as bst
import numpy as np

from soibart._errors import ConstantSeries, LagTooLarge, TooShort
from soibart._misc import set_module_as
from soibart.data import TimeSeries

__all__ = [
    'Periodogram',
    'periodogram',
    'Correlogram',
    'acf',
    'acf_fft',
    'pacf',
    'correlogram',
    'WhiteNoiseCheck',
    'white_noise_check',
    'DEFAULT_MAX_LAG',
]

DEFAULT_MAX_LAG = 36
BAND_Z = 1.96


def _values(series: Union[TimeSeries, bst.typing.ArrayLike]) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    values = np.asarray(series, dtype=np.float64)
    assert values.ndim == 1, f'Expected a 1D series. Got shape {values.shape}.'
    return values


@dataclass(frozen=True, eq=False)
class Periodogram:
    """
    Raw periodogram at the Fourier frequencies.

    Parameters
    ----------
    frequencies : ndarray
      Cycles per month, ``k / n`` for ``k = 1 .. floor(n / 2)``.
    power : ndarray
      Non-negative ordinates.
    n : int
      Length of the analysed series.
    """
    __module__ = 'soibart.diagnostics'

    frequencies: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)
    n: int

    @property
    def period(self) -> np.ndarray:
        """Period of every ordinate in months."""
        return 1. / self.frequencies

    def total_variance(self) -> float:
        """The biased sample variance recovered from the ordinates."""
        total = 2. * self.power.sum()
        if self.n % 2 == 0:
            total -= self.power[-1]
        return float(total / self.n)

    def peak(self) -> float:
        """Frequency of the largest ordinate."""
        return float(self.frequencies[int(np.argmax(self.power))])

    def to_rows(self) -> List[Dict[str, Any]]:
        return [
            {'frequency': float(f), 'period': float(1. / f), 'power': float(p)}
            for f, p in zip(self.frequencies, self.power)
        ]


@set_module_as('soibart.diagnostics')
def periodogram(series: Union[TimeSeries, bst.typing.ArrayLike]) -> Periodogram:
    """
    Periodogram of the mean-centered series, without tapering or smoothing.

    Raises
    ------
    TooShort
      With fewer than four values.
    """
    values = _values(series)
    n = values.size
    if n < 4:
        raise TooShort(f'A periodogram needs at least 4 values, got {n}.')
    spectrum = np.fft.rfft(values - values.mean())
    k = np.arange(1, n // 2 + 1)
    power = np.abs(spectrum[k]) ** 2 / n
    return Periodogram(frequencies=k / n, power=power, n=n)


def _centered(values: np.ndarray, max_lag: int) -> np.ndarray:
    n = values.size
    if max_lag < 1 or max_lag >= n / 2:
        raise LagTooLarge(f'max_lag must be in [1, n / 2) = [1, {n / 2}). But we got {max_lag}.')
    d = values - values.mean()
    if not np.any(d):
        raise ConstantSeries('The autocorrelation of a constant series is undefined.')
    return d


@set_module_as('soibart.diagnostics')
def acf(series: Union[TimeSeries, bst.typing.ArrayLike], max_lag: int = DEFAULT_MAX_LAG) -> np.ndarray:
    """
    Sample autocorrelations at lags ``1 .. max_lag``.

    ``acf(k) = sum_t d_t d_{t+k} / sum_t d_t^2``.

    Raises
    ------
    LagTooLarge
      Unless ``1 <= max_lag < n / 2``.
    ConstantSeries
      When every value is equal.
    """
    d = _centered(_values(series), max_lag)
    denom = d @ d
    out = np.array([d[:-k] @ d[k:] for k in range(1, max_lag + 1)]) / denom
    return np.clip(out, -1., 1.)


@set_module_as('soibart.diagnostics')
def acf_fft(series: Union[TimeSeries, bst.typing.ArrayLike], max_lag: int = DEFAULT_MAX_LAG) -> np.ndarray:
    """:py:func:`acf` through a zero-padded FFT autocovariance."""
    d = _centered(_values(series), max_lag)
    size = 1 << int(np.ceil(np.log2(2 * d.size - 1)))
    f = np.fft.rfft(d, size)
    cov = np.fft.irfft(f * np.conj(f), size)[:max_lag + 1]
    return np.clip(cov[1:] / cov[0], -1., 1.)


@set_module_as('soibart.diagnostics')
def pacf(autocorrelations: bst.typing.ArrayLike) -> np.ndarray:
    """
    Partial autocorrelations from ``acf(1 .. L)`` by the Durbin-Levinson recursion.

    ``pacf[0] == acf[0]``.
    """
    r = np.asarray(autocorrelations, dtype=np.float64).reshape(-1)
    L = r.size
    out = np.zeros(L)
    phi = np.zeros(0)
    v = 1.
    for k in range(L):
        if k == 0:
            kappa = r[0]
        else:
            kappa = (r[k] - phi @ r[k - 1::-1]) / v if v > 0. else 0.
        kappa = float(np.clip(kappa, -1., 1.))
        phi = np.concatenate([phi - kappa * phi[::-1], [kappa]])
        v *= 1. - kappa * kappa
        out[k] = kappa
    return out


@dataclass(frozen=True, eq=False)
class Correlogram:
    """Autocorrelations and partial autocorrelations at lags ``1 .. L``."""
    __module__ = 'soibart.diagnostics'

    lags: np.ndarray = field(repr=False)
    acf: np.ndarray = field(repr=False)
    pacf: np.ndarray = field(repr=False)
    band: float
    n: int

    @property
    def max_lag(self) -> int:
        return int(self.lags.size)

    def to_rows(self) -> List[Dict[str, Any]]:
        return [
            {'lag': int(k), 'acf': float(a), 'pacf': float(p), 'band': self.band}
            for k, a, p in zip(self.lags, self.acf, self.pacf)
        ]


@set_module_as('soibart.diagnostics')
def correlogram(series: Union[TimeSeries, bst.typing.ArrayLike], max_lag: int = DEFAULT_MAX_LAG) -> Correlogram:
    values = _values(series)
    r = acf(values, max_lag)
    return Correlogram(
        lags=np.arange(1, max_lag + 1),
        acf=r,
        pacf=pacf(r),
        band=BAND_Z / float(np.sqrt(values.size)),
        n=int(values.size),
    )


@dataclass(frozen=True)
class WhiteNoiseCheck:
    """Share of residual autocorrelations inside the ``+-1.96 / sqrt(n)`` band."""
    __module__ = 'soibart.diagnostics'

    fraction_within_bands: float
    passed: bool
    max_lag: int
    band: float


@set_module_as('soibart.diagnostics')
def white_noise_check(
    residuals: bst.typing.ArrayLike,
    max_lag: Optional[int] = None,
    threshold: float = 0.9,
) -> WhiteNoiseCheck:
    """
    Band-count whiteness check of residuals.

    Passes when at least ``threshold`` of ``acf(1 .. max_lag)`` lies inside the
    band. ``max_lag`` defaults to :py:data:`DEFAULT_MAX_LAG`, shortened to the
    largest lag below half the residual count.

    Raises
    ------
    TooShort
      With fewer than 30 residuals.
    """
    residuals = _values(residuals)
    if residuals.size < 30:
        raise TooShort(f'The white-noise check needs at least 30 residuals, got {residuals.size}.')
    if max_lag is None:
        max_lag = min(DEFAULT_MAX_LAG, (residuals.size + 1) // 2 - 1)
    r = acf(residuals, max_lag)
    band = BAND_Z / float(np.sqrt(residuals.size))
    fraction = float(np.mean(np.abs(r) <= band))
    return WhiteNoiseCheck(fraction_within_bands=fraction, passed=fraction >= threshold, max_lag=max_lag, band=band)
