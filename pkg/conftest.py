"""pytest 公共设置：每个测试使用默认配置；慢速复现实验需 CRDA_RUN_SLOW=1"""

import os

import pytest

from project_config import use_config_values


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 完整规模的复现实验，设置 CRDA_RUN_SLOW=1 时运行")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("CRDA_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="设置 CRDA_RUN_SLOW=1 以运行慢速测试")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def default_config():
    """忽略工作目录下的 config.yaml"""
    yield use_config_values({})
    use_config_values({})
