import os

import numpy as np
import pytest

from larclab.core.f2core import DEFAULT_ENUMERATE_CAP, configure_enumerate_cap
from larclab.core.settings import SettingsManager
from larclab.core.task_manager import TaskManager
from tests.fixtures.sample_data import pairwise_trivial_family, three_plane_family


@pytest.fixture
def three_plane():
    return three_plane_family()


@pytest.fixture
def two_planes():
    return pairwise_trivial_family()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def config_dir(tmp_path, monkeypatch):
    """An isolated settings directory with no environment overrides."""
    monkeypatch.delenv('LARCLAB_MAX_N', raising=False)
    monkeypatch.delenv('LARCLAB_HOME', raising=False)
    path = tmp_path / 'larclab-home'
    return str(path)


@pytest.fixture
def settings(config_dir):
    return SettingsManager(config_dir)


@pytest.fixture(autouse=True)
def default_enumerate_cap():
    """CLI runs set the module-wide enumeration cap from settings; put it back."""
    yield
    configure_enumerate_cap(DEFAULT_ENUMERATE_CAP)


@pytest.fixture(params=[1, 4], ids=['serial', 'threads4'])
def task_manager(request):
    return TaskManager(request.param)


def pytest_collection_modifyitems(config, items):
    if os.environ.get('LARCLAB_RUN_SLOW'):
        return
    skip = pytest.mark.skip(reason="desk-scale acceptance run; set LARCLAB_RUN_SLOW=1")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)
