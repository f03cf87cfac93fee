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

from .autoregressive import *
from .autoregressive import __all__ as _ar_all
from .backtest import *
from .backtest import __all__ as _backtest_all
from .iterate import *
from .iterate import __all__ as _iterate_all

__all__ = _ar_all + _iterate_all + _backtest_all
