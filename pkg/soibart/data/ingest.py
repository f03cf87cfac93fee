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
Readers and writers for monthly SOI records.

Two formats are understood:

- the Bureau of Meteorology plaintext table, one row per year holding the
  year followed by up to twelve monthly values;
- the canonical CSV ``year,month,value`` written by :py:func:`emit_csv`.

A record installed with :py:func:`install_snapshot` ships inside the package
and is read back by :py:func:`load_snapshot`.
"""

from __future__ import annotations

import csv
import importlib.resources
import io
import logging
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from soibart._errors import (
    EmptySeries,
    InteriorGap,
    MalformedLine,
    MissingHeader,
    MissingSnapshot,
    NonConsecutiveYears,
    SoiBartError,
    UnsortedRows,
)
from soibart._misc import set_module_as
from .series import MonthStamp, TimeSeries

__all__ = [
    'MissingValues',
    'parse_bom_plaintext',
    'parse_csv',
    'emit_csv',
    'read_series',
    'SNAPSHOT',
    'snapshot_path',
    'load_snapshot',
    'install_snapshot',
]

CSV_HEADER = ('year', 'month', 'value')

# file name of the bundled record inside the ``soibart.data`` package
SNAPSHOT = 'soi.csv'

_log = logging.getLogger(__name__)

_DATA_LINE = re.compile(r'^\s*(\d{4})(\s+.*)?$')


@dataclass(frozen=True)
class MissingValues:
    """
    Policy deciding which tokens mark a missing month.

    Parameters
    ----------
    tokens : tuple of str
      Literal tokens meaning "missing". Numeric tokens also match by value.
    max_abs : float
      Any number whose absolute value exceeds this bound is missing.
    """
    __module__ = 'soibart.data'

    tokens: Tuple[str, ...] = ('-999.9', '*')
    max_abs: float = 90.0

    def __post_init__(self):
        object.__setattr__(self, 'tokens', tuple(str(t) for t in self.tokens))
        if not self.max_abs > 0:
            raise ValueError(f'max_abs must be positive. But we got {self.max_abs}.')

    def is_value(self, token: str) -> bool:
        """Whether ``token`` is a number or a missing-month sentinel."""
        if token in self.tokens:
            return True
        try:
            float(token)
        except ValueError:
            return False
        return True

    def parse(self, token: str, line_number: Optional[int] = None) -> float:
        """Return the token's value, or ``nan`` when it marks a missing month."""
        if token in self.tokens:
            return math.nan
        try:
            value = float(token)
        except ValueError:
            raise MalformedLine(f'non-numeric token {token!r} in a data position', line_number) from None
        if not math.isfinite(value) or abs(value) > self.max_abs:
            return math.nan
        for t in self.tokens:
            try:
                if float(t) == value:
                    return math.nan
            except ValueError:
                continue
        return value


def _trim_missing(start: MonthStamp, values: np.ndarray) -> TimeSeries:
    # drop missing months at both ends, refuse them inside
    present = np.flatnonzero(~np.isnan(values))
    if present.size == 0:
        raise EmptySeries('No observed months in the input.')
    first, last = int(present[0]), int(present[-1])
    inner = values[first:last + 1]
    gaps = np.flatnonzero(np.isnan(inner))
    if gaps.size:
        stamp = start.shift(first + int(gaps[0]))
        raise InteriorGap(f'missing value at {stamp} inside the series', stamp)
    return TimeSeries(start.shift(first), inner)


@set_module_as('soibart.data')
def parse_bom_plaintext(text: str, missing: MissingValues = MissingValues()) -> TimeSeries:
    """
    Parse the Bureau of Meteorology plaintext SOI table.

    Data lines start with a four-digit year followed by at most twelve monthly
    values. A line whose first token after the year is neither a number nor a
    missing sentinel, such as ``2009 update notes``, is a header like any line
    without a leading year, and is skipped. A non-numeric token further along a
    data line raises :py:class:`MalformedLine`. Missing months at the start or
    end of the record are trimmed, missing months inside it raise
    :py:class:`InteriorGap`. A partial final year is accepted.

    Args:
      text: The raw file content.
      missing: The missing-value policy.

    Returns:
      The parsed :py:class:`TimeSeries`.
    """
    years: List[int] = []
    rows: List[List[float]] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        match = _DATA_LINE.match(line)
        if match is None:
            continue
        year = int(match.group(1))
        tokens = (match.group(2) or '').split()
        if tokens and not missing.is_value(tokens[0]):
            continue
        if len(tokens) > 12:
            raise MalformedLine(f'{len(tokens)} monthly values for year {year}, at most 12 expected', line_number)
        if year < 1800:
            raise MalformedLine(f'year {year} is before 1800', line_number)
        if years and year != years[-1] + 1:
            raise NonConsecutiveYears(f'line {line_number}: year {year} follows {years[-1]}')
        years.append(year)
        rows.append([missing.parse(tok, line_number) for tok in tokens])

    if not years:
        raise EmptySeries('No data lines found.')

    # months absent from a non-final row are missing; the final row may be partial
    values: List[float] = []
    for i, row in enumerate(rows):
        values.extend(row)
        if i < len(rows) - 1:
            values.extend([math.nan] * (12 - len(row)))
    return _trim_missing(MonthStamp(years[0], 1), np.asarray(values, dtype=np.float64))


@set_module_as('soibart.data')
def parse_csv(text: str, missing: MissingValues = MissingValues()) -> TimeSeries:
    """
    Parse the canonical ``year,month,value`` CSV.

    Rows must be strictly increasing in ``(year, month)`` and consecutive. An
    empty or missing-sentinel value counts as a missing month, with the same
    trimming rules as :py:func:`parse_bom_plaintext`.
    """
    reader = csv.reader(io.StringIO(text))
    header = None
    line_number = 0
    for row in reader:
        line_number = reader.line_num
        if any(cell.strip() for cell in row):
            header = tuple(cell.strip().lower() for cell in row)
            break
    if header != CSV_HEADER:
        raise MissingHeader(f'expected the header {",".join(CSV_HEADER)!r}, got {header!r}')

    start: Optional[MonthStamp] = None
    previous: Optional[MonthStamp] = None
    values: List[float] = []
    for row in reader:
        line_number = reader.line_num
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise MalformedLine(f'expected 3 fields, got {len(row)}', line_number)
        try:
            stamp = MonthStamp(int(row[0]), int(row[1]))
        except ValueError as e:
            raise MalformedLine(f'bad year/month {row[0]!r}/{row[1]!r} ({e})', line_number) from None
        token = row[2].strip()
        value = math.nan if token == '' else missing.parse(token, line_number)
        if previous is not None:
            if stamp <= previous:
                raise UnsortedRows(f'line {line_number}: {stamp} does not come after {previous}')
            if previous.months_until(stamp) != 1:
                gap = previous.shift(1)
                raise InteriorGap(f'line {line_number}: missing value at {gap} inside the series', gap)
        else:
            start = stamp
        previous = stamp
        values.append(value)

    if start is None:
        raise EmptySeries('The CSV has a header but no rows.')
    return _trim_missing(start, np.asarray(values, dtype=np.float64))


@set_module_as('soibart.data')
def emit_csv(series: TimeSeries) -> str:
    """Render ``series`` as canonical CSV with round-trip float precision."""
    lines = [','.join(CSV_HEADER)]
    for stamp, value in series:
        lines.append(f'{stamp.year},{stamp.month},{value!r}')
    return '\n'.join(lines) + '\n'


@set_module_as('soibart.data')
def read_series(path: Union[str, os.PathLike], missing: MissingValues = MissingValues()) -> TimeSeries:
    """
    Read a series from disk, sniffing the format from the first non-blank line.

    Errors are re-raised with the file name in the message.
    """
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    first = next((line for line in text.splitlines() if line.strip()), '')
    parser = parse_csv if first.replace(' ', '').lower().startswith('year,month') else parse_bom_plaintext
    try:
        return parser(text, missing)
    except SoiBartError as e:
        error = type(e)(f'{os.fspath(path)}: {e}')
        error.__dict__.update(e.__dict__)
        raise error from e


@set_module_as('soibart.data')
def snapshot_path() -> Path:
    """Location of the bundled SOI record, whether or not it is installed."""
    return Path(str(importlib.resources.files('soibart.data') / SNAPSHOT))


@set_module_as('soibart.data')
def load_snapshot(missing: MissingValues = MissingValues()) -> TimeSeries:
    """
    Read the SOI record bundled with the package.

    Raises:
      MissingSnapshot: when the record has not been installed; run
        ``soi-bart ingest --data <file> --install`` once with a downloaded
        Bureau of Meteorology table to install it.
    """
    path = snapshot_path()
    if not path.is_file():
        raise MissingSnapshot(f'no bundled SOI record at {path}; install one with '
                              f'"soi-bart ingest --data <soi.txt> --install" or pass --data')
    return read_series(path, missing)


@set_module_as('soibart.data')
def install_snapshot(series: TimeSeries) -> Path:
    """Write ``series`` as the bundled record in canonical CSV and return its path."""
    path = snapshot_path()
    path.write_text(emit_csv(series), encoding='utf-8')
    _log.info('installed %d months (%s to %s) at %s', len(series), series.start, series.end, path)
    return path
