import os
import sys

import pytest

# Project root on sys.path so tests import modules as src.afrf.*
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from src.afrf.core import logging as alogging  # noqa: E402
from tests.factories import make_curves  # noqa: E402


@pytest.fixture(autouse=True)
def isolate_global_state():
    """Reset the package-level default_logger so console state does not leak between tests."""
    alogging.default_logger = None
    yield
    alogging.default_logger = None


@pytest.fixture
def curves():
    return make_curves()
