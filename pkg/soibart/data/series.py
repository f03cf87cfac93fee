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

from dataclasses import dataclass, field
from typing import Iterator, Sequence, Tuple

import numpy as np

from soibart._errors import EmptySeries, OutOfRange
from soibart._misc import set_module_as

__all__ = [
    'MonthStamp',
    'TimeSeries',
    'slice_series',
]

_MONTH_NAMES = ('Jan', 'Feb', 'Mar', 'Apr', 'May', 'Jun',
                'Jul', 'Aug', 'Sep', 'Oct', 'Nov', 'Dec')


@dataclass(frozen=True, order=True)
class MonthStamp:
    """
    A calendar month. Ordering is lexicographic on ``(year, month)``.

    Parameters
    ----------
    year : int
      Calendar year, at least 1800.
    month : int
      Month number in ``1..12``.
    """
    __module__ = 'soibart.data'

    year: int
    month: int

    def __post_init__(self):
        if not 1 <= int(self.month) <= 12:
            raise ValueError(f'month must be in [1, 12]. But we got {self.month}.')
        if int(self.year) < 1800:
            raise ValueError(f'year must be >= 1800. But we got {self.year}.')
        object.__setattr__(self, 'year', int(self.year))
        object.__setattr__(self, 'month', int(self.month))

    @property
    def ordinal(self) -> int:
        """Months elapsed since January of year 0."""
        return self.year * 12 + self.month - 1

    @classmethod
    def from_ordinal(cls, ordinal: int) -> 'MonthStamp':
        year, month0 = divmod(int(ordinal), 12)
        return cls(year, month0 + 1)

    def shift(self, months: int) -> 'MonthStamp':
        return MonthStamp.from_ordinal(self.ordinal + int(months))

    def months_until(self, other: 'MonthStamp') -> int:
        return other.ordinal - self.ordinal

    def label(self) -> str:
        """Short label such as ``Sep 09``."""
        return f'{_MONTH_NAMES[self.month - 1]} {self.year % 100:02d}'

    def __str__(self):
        return f'{_MONTH_NAMES[self.month - 1]} {self.year}'


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """
    A gap-free monthly series.

    Index ``i`` of ``values`` is the month ``start.shift(i)``. The values are
    stored as a read-only float64 array and are all finite.

    Parameters
    ----------
    start : MonthStamp
      The month of the first value.
    values : sequence of float
      Consecutive monthly values.
    """
    __module__ = 'soibart.data'

    start: MonthStamp
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.start, MonthStamp):
            raise TypeError(f'start should be a MonthStamp. But we got {type(self.start)}.')
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise EmptySeries('A time series needs at least one value.')
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f'Non-finite value at {self.start.shift(bad)}.')
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.start == other.start and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.start, self.values.tobytes()))

    def __repr__(self):
        return f'TimeSeries(start={self.start}, end={self.end}, length={len(self)})'

    @property
    def end(self) -> MonthStamp:
        return self.start.shift(len(self) - 1)

    def stamp(self, index: int) -> MonthStamp:
        if index < 0:
            index += len(self)
        return self.start.shift(index)

    def stamps(self) -> Tuple[MonthStamp, ...]:
        return tuple(self.start.shift(i) for i in range(len(self)))

    def __iter__(self) -> Iterator[Tuple[MonthStamp, float]]:
        for i, v in enumerate(self.values):
            yield self.start.shift(i), float(v)

    def index_of(self, stamp: MonthStamp) -> int:
        index = self.start.months_until(stamp)
        if not 0 <= index < len(self):
            raise OutOfRange(f'{stamp} is outside the series span {self.start} .. {self.end}.')
        return index

    def extend(self, values: Sequence[float]) -> 'TimeSeries':
        """Return a new series with ``values`` appended after :py:attr:`end`."""
        return TimeSeries(self.start, np.concatenate([self.values, np.asarray(values, dtype=np.float64).reshape(-1)]))

    def std(self) -> float:
        return float(np.std(self.values))


@set_module_as('soibart.data')
def slice_series(series: TimeSeries, start: MonthStamp, stop: MonthStamp) -> TimeSeries:
    """
    Inclusive sub-series from ``start`` to ``stop``.

    Raises
    ------
    OutOfRange
      When ``start > stop`` or either month lies outside the series.
    """
    if start > stop:
        raise OutOfRange(f'Empty range: {start} is after {stop}.')
    i = series.index_of(start)
    j = series.index_of(stop)
    return TimeSeries(start, series.values[i:j + 1])
