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

from typing import Any, Optional

__all__ = [
    'SoiBartError',
    'MalformedLine',
    'NonConsecutiveYears',
    'InteriorGap',
    'EmptySeries',
    'MissingHeader',
    'UnsortedRows',
    'OutOfRange',
    'SeriesTooShort',
    'DegenerateSplit',
    'LengthMismatch',
    'ConstantActuals',
    'EmptyInput',
    'DimensionMismatch',
    'TooFewRows',
    'ConstantTarget',
    'RankDeficient',
    'TooShort',
    'LagTooLarge',
    'ConstantSeries',
    'UnknownPreset',
    'MissingSnapshot',
]


class SoiBartError(ValueError):
    """Base class of every data or model error raised by ``soibart``."""
    __module__ = 'soibart'


class MalformedLine(SoiBartError):
    """A data line holds a token that is not a number."""
    __module__ = 'soibart'

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f'line {line_number}: {message}'
        super().__init__(message)
        self.line_number = line_number


class NonConsecutiveYears(SoiBartError):
    __module__ = 'soibart'


class InteriorGap(SoiBartError):
    """A month inside the series is missing."""
    __module__ = 'soibart'

    def __init__(self, message: str, stamp: Any = None):
        super().__init__(message)
        self.stamp = stamp


class EmptySeries(SoiBartError):
    __module__ = 'soibart'


class MissingHeader(SoiBartError):
    __module__ = 'soibart'


class UnsortedRows(SoiBartError):
    __module__ = 'soibart'


class OutOfRange(SoiBartError):
    __module__ = 'soibart'


class SeriesTooShort(SoiBartError):
    __module__ = 'soibart'


class DegenerateSplit(SoiBartError):
    __module__ = 'soibart'


class LengthMismatch(SoiBartError):
    __module__ = 'soibart'


class ConstantActuals(SoiBartError):
    """
    The correlation is undefined because the actual values are constant.

    ``partial`` holds the error statistics that are still defined.
    """
    __module__ = 'soibart'

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class EmptyInput(SoiBartError):
    __module__ = 'soibart'


class DimensionMismatch(SoiBartError):
    __module__ = 'soibart'


class TooFewRows(SoiBartError):
    __module__ = 'soibart'


class ConstantTarget(SoiBartError):
    __module__ = 'soibart'


class RankDeficient(SoiBartError):
    __module__ = 'soibart'


class TooShort(SoiBartError):
    __module__ = 'soibart'


class LagTooLarge(SoiBartError):
    __module__ = 'soibart'


class ConstantSeries(SoiBartError):
    __module__ = 'soibart'


class UnknownPreset(SoiBartError):
    __module__ = 'soibart'


class MissingSnapshot(SoiBartError):
    """The bundled SOI record has not been installed in the package."""
    __module__ = 'soibart'
