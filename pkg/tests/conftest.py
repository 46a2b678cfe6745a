import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cvqkd import channel, snu, tx  # noqa: E402

SMALL_FRAME = 2**20


@pytest.fixture(scope="session")
def small_tx():
    return tx.TxConfig(frame_len=SMALL_FRAME)


@pytest.fixture(scope="session")
def on_params():
    return snu.table1_params("table1-100km-on")


@pytest.fixture(scope="session")
def on_scenario(on_params):
    return channel.ChannelScenario(on_params, seed=7)


@pytest.fixture(scope="session")
def small_cal(on_scenario):
    vac, ele = channel.simulate_calibration(on_scenario, 4 * SMALL_FRAME)
    return snu.calibrate(vac, ele)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
