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

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import brainstate as bst
import numpy as np

from soibart._errors import (
    ConstantActuals,
    DegenerateSplit,
    EmptyInput,
    LengthMismatch,
    SeriesTooShort,
)
from soibart._misc import set_module_as
from .series import MonthStamp, TimeSeries, _MONTH_NAMES

__all__ = [
    'LagSpec',
    'parse_lags',
    'SupervisedDataset',
    'build_lag_matrix',
    'lag_windows',
    'export_dataset_csv',
    'SplitMask',
    'random_split',
    'ErrorStats',
    'FitStats',
    'error_stats',
    'fit_stats',
    'average_stats',
]

_LAG_ITEM = re.compile(r'^\s*(\d+)\s*(?:\.\.\s*(\d+)\s*)?$')


@dataclass(frozen=True)
class LagSpec:
    """
    Which months prior feed the regression.

    Parameters
    ----------
    lags : tuple of int
      Strictly increasing positive lags, in months.
    target_month : int, optional
      When given, only targets falling in this calendar month are used.
    """
    __module__ = 'soibart.data'

    lags: Tuple[int, ...]
    target_month: Optional[int] = None

    def __post_init__(self):
        lags = tuple(int(k) for k in self.lags)
        if len(lags) == 0:
            raise ValueError('lags must not be empty.')
        if lags[0] < 1:
            raise ValueError(f'lags must be >= 1. But we got {lags}.')
        if any(b <= a for a, b in zip(lags, lags[1:])):
            raise ValueError(f'lags must be strictly increasing. But we got {lags}.')
        object.__setattr__(self, 'lags', lags)
        if self.target_month is not None and not 1 <= int(self.target_month) <= 12:
            raise ValueError(f'target_month must be in [1, 12]. But we got {self.target_month}.')

    @property
    def max_lag(self) -> int:
        return self.lags[-1]

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return tuple(f'lag_{k}' for k in self.lags)

    def display_names(self) -> Tuple[str, ...]:
        """Human labels: calendar months for month-filtered specs, ``Lag k`` otherwise."""
        if self.target_month is None:
            return tuple(f'Lag {k}' for k in self.lags)
        names = []
        for k in self.lags:
            if k > 12:
                names.append(f'-{k}')
                continue
            shifted = self.target_month - k
            name = _MONTH_NAMES[(shifted - 1) % 12]
            names.append(name if shifted >= 1 else f'{name}-1')
        return tuple(names)


@set_module_as('soibart.data')
def parse_lags(text: str) -> Tuple[int, ...]:
    """
    Parse the lag-range syntax, e.g. ``"1..12,41,73"``.
    """
    lags: List[int] = []
    for item in str(text).split(','):
        match = _LAG_ITEM.match(item)
        if match is None:
            raise ValueError(f'Cannot parse lag item {item!r} in {text!r}.')
        lo = int(match.group(1))
        hi = int(match.group(2)) if match.group(2) is not None else lo
        if hi < lo:
            raise ValueError(f'Empty lag range {item!r}.')
        lags.extend(range(lo, hi + 1))
    return tuple(sorted(set(lags)))


@dataclass(frozen=True, eq=False)
class SupervisedDataset:
    """
    A lag-regression design: row ``i`` holds the series values ``lags[j]``
    months before ``target_stamps[i]``.
    """
    __module__ = 'soibart.data'

    feature_names: Tuple[str, ...]
    lags: Tuple[int, ...]
    rows: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    target_stamps: Tuple[MonthStamp, ...] = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        assert rows.ndim == 2, f'rows should be a 2D matrix. Got {rows.shape}.'
        assert rows.shape[0] == targets.size == len(self.target_stamps), (
            f'Inconsistent sizes: rows {rows.shape}, targets {targets.shape}, '
            f'stamps {len(self.target_stamps)}.'
        )
        assert rows.shape[1] == len(self.feature_names) == len(self.lags)
        rows.flags.writeable = False
        targets.flags.writeable = False
        object.__setattr__(self, 'rows', rows)
        object.__setattr__(self, 'targets', targets)
        object.__setattr__(self, 'target_stamps', tuple(self.target_stamps))

    @property
    def n(self) -> int:
        return int(self.targets.size)

    @property
    def p(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self):
        return self.n


@set_module_as('soibart.data')
def build_lag_matrix(series: TimeSeries, spec: LagSpec) -> SupervisedDataset:
    """
    Build the supervised dataset of ``spec`` over ``series``.

    One row per target month ``t`` with at least ``max(lags)`` months of
    history (and matching ``spec.target_month`` when set). Columns follow the
    order of ``spec.lags``.
    """
    n = len(series)
    if n <= spec.max_lag:
        raise SeriesTooShort(f'The series has {n} months; lag {spec.max_lag} needs at least {spec.max_lag + 1}.')
    t = np.arange(spec.max_lag, n)
    if spec.target_month is not None:
        first_month = series.start.month - 1
        t = t[(first_month + t) % 12 == spec.target_month - 1]
        if t.size == 0:
            raise SeriesTooShort(f'No target in month {spec.target_month} has {spec.max_lag} months of history.')
    lags = np.asarray(spec.lags)
    values = series.values
    return SupervisedDataset(
        feature_names=spec.feature_names,
        lags=spec.lags,
        rows=values[t[:, None] - lags[None, :]],
        targets=values[t],
        target_stamps=tuple(series.start.shift(int(i)) for i in t),
    )


@set_module_as('soibart.data')
def lag_windows(values: np.ndarray, anchors: np.ndarray, width: int) -> np.ndarray:
    """
    Gather the last ``width`` values up to and including each anchor index.

    Returns an ``(len(anchors), width)`` matrix whose last column is the
    anchor value itself.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    offsets = np.arange(-width + 1, 1)
    assert np.all(anchors - width + 1 >= 0), 'Every anchor needs a full history window.'
    return np.asarray(values, dtype=np.float64)[anchors[:, None] + offsets[None, :]]


@dataclass(frozen=True, eq=False)
class SplitMask:
    """
    A train/test assignment of dataset rows.

    Parameters
    ----------
    train : ndarray of bool
      ``True`` for training rows.
    seed : int
      The seed the assignment was drawn with.
    train_fraction : float
      The requested training fraction.
    """
    __module__ = 'soibart.data'

    train: np.ndarray = field(repr=False)
    seed: int = 0
    train_fraction: float = 0.8

    def __post_init__(self):
        train = np.asarray(self.train, dtype=bool).reshape(-1)
        train.flags.writeable = False
        object.__setattr__(self, 'train', train)

    def __eq__(self, other):
        if not isinstance(other, SplitMask):
            return NotImplemented
        return np.array_equal(self.train, other.train)

    @property
    def n(self) -> int:
        return int(self.train.size)

    @property
    def test(self) -> np.ndarray:
        return ~self.train

    @property
    def n_train(self) -> int:
        return int(self.train.sum())

    @property
    def train_index(self) -> np.ndarray:
        return np.flatnonzero(self.train)

    @property
    def test_index(self) -> np.ndarray:
        return np.flatnonzero(~self.train)

    @classmethod
    def all_train(cls, n: int) -> 'SplitMask':
        return cls(np.ones(n, dtype=bool), seed=0, train_fraction=1.0)


@set_module_as('soibart.data')
def random_split(n: int, train_fraction: float, seed: int) -> SplitMask:
    """
    Uniform random split without replacement.

    Exactly ``floor(n * train_fraction + 0.5)`` rows are assigned to training.
    The permutation comes from ``brainstate.random.RandomState(seed)``, so the
    same ``(n, train_fraction, seed)`` always gives the same mask.
    """
    if not 0. < train_fraction < 1.:
        raise ValueError(f'train_fraction must be in (0, 1). But we got {train_fraction}.')
    n = int(n)
    n_train = int(math.floor(n * train_fraction + 0.5))
    if n < 2 or n_train == 0 or n_train == n:
        raise DegenerateSplit(f'Splitting {n} rows with fraction {train_fraction} leaves one side empty.')
    rng = bst.random.RandomState(int(seed))
    order = np.asarray(rng.permutation(n))
    train = np.zeros(n, dtype=bool)
    train[order[:n_train]] = True
    return SplitMask(train, seed=int(seed), train_fraction=float(train_fraction))


@dataclass(frozen=True)
class ErrorStats:
    """Error magnitudes that stay defined when the correlation is not."""
    __module__ = 'soibart.data'

    mae: float
    rmse: float
    n: int


@dataclass(frozen=True)
class FitStats:
    """
    Forecast skill of predictions against actual values.

    Parameters
    ----------
    corr : float
      Pearson correlation of predictions and actuals.
    mae : float
      Mean absolute error.
    rmse : float
      Root mean square error.
    n : int
      Number of scored pairs.
    """
    __module__ = 'soibart.data'

    corr: float
    mae: float
    rmse: float
    n: int

    def as_dict(self) -> Dict[str, float]:
        return {'corr': self.corr, 'mae': self.mae, 'rmse': self.rmse, 'n': self.n}


def _pair(predicted, actual) -> Tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1)
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    if predicted.size != actual.size:
        raise LengthMismatch(f'{predicted.size} predictions for {actual.size} actual values.')
    if predicted.size < 2:
        raise EmptyInput(f'At least two pairs are needed, got {predicted.size}.')
    return predicted, actual


@set_module_as('soibart.data')
def error_stats(predicted: bst.typing.ArrayLike, actual: bst.typing.ArrayLike) -> ErrorStats:
    predicted, actual = _pair(predicted, actual)
    err = predicted - actual
    return ErrorStats(
        mae=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(np.mean(err * err))),
        n=int(err.size),
    )


@set_module_as('soibart.data')
def fit_stats(predicted: bst.typing.ArrayLike, actual: bst.typing.ArrayLike) -> FitStats:
    """
    Correlation, mean absolute error and root mean square error.

    Raises
    ------
    ConstantActuals
      When ``actual`` is constant; the exception's ``partial`` attribute holds
      the :py:class:`ErrorStats` that are still defined.
    """
    predicted, actual = _pair(predicted, actual)
    errors = error_stats(predicted, actual)
    da = actual - actual.mean()
    saa = float(np.dot(da, da))
    if saa == 0.:
        raise ConstantActuals('The actual values are constant, correlation is undefined.', partial=errors)
    dp = predicted - predicted.mean()
    spp = float(np.dot(dp, dp))
    # constant predictions carry no linear association
    corr = 0. if spp == 0. else float(np.dot(dp, da)) / math.sqrt(spp * saa)
    corr = min(1., max(-1., corr))
    return FitStats(corr=corr, mae=errors.mae, rmse=errors.rmse, n=errors.n)


@set_module_as('soibart.data')
def average_stats(stats: Iterable[FitStats]) -> FitStats:
    """Unweighted mean of per-run statistics (``n`` is the rounded mean count)."""
    stats = list(stats)
    if not stats:
        raise EmptyInput('Cannot average an empty sequence of statistics.')
    return FitStats(
        corr=float(np.mean([s.corr for s in stats])),
        mae=float(np.mean([s.mae for s in stats])),
        rmse=float(np.mean([s.rmse for s in stats])),
        n=int(round(float(np.mean([s.n for s in stats])))),
    )


@set_module_as('soibart.data')
def export_dataset_csv(dataset: SupervisedDataset, mask: Optional[SplitMask] = None) -> str:
    """CSV with ``lag_<k>`` columns, ``target``, ``year``, ``month`` and optionally ``split``."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    header = list(dataset.feature_names) + ['target', 'year', 'month']
    if mask is not None:
        assert mask.n == dataset.n, f'The mask covers {mask.n} rows, the dataset has {dataset.n}.'
        header.append('split')
    writer.writerow(header)
    for i in range(dataset.n):
        stamp = dataset.target_stamps[i]
        record = [repr(float(v)) for v in dataset.rows[i]]
        record += [repr(float(dataset.targets[i])), stamp.year, stamp.month]
        if mask is not None:
            record.append('train' if mask.train[i] else 'test')
        writer.writerow(record)
    return out.getvalue()
