import logging

import pytest


@pytest.fixture(autouse=True)
def _quiet_clamp_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="stgames")
    yield
