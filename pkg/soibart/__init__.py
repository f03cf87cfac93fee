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

__version__ = "0.1.0"

from . import data
from . import diagnostics
from . import forecast
from . import harness
from ._bart import *
from ._bart import __all__ as _bart_all
from ._errors import *
from ._errors import __all__ as _errors_all
from ._sampler import *
from ._sampler import __all__ as _sampler_all
from ._tree import *
from ._tree import __all__ as _tree_all

__all__ = (
    ['data', 'forecast', 'diagnostics', 'harness'] +
    _tree_all +
    _sampler_all +
    _bart_all +
    _errors_all
)
