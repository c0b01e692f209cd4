import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hift import tensor as T  # noqa: E402
from hift.config import RunConfig  # noqa: E402

# Desk learnability profile: smaller crops and 32-bit arithmetic so 2000 steps fit the time budget,
# with extra weight on the box term for tighter localisation.
DESK_INI = """
[backbone]
template_size = 48
search_size = 96

[loss]
lambda3 = 2.0

[train]
steps = 2000
batch_size = 4
lr = 0.005
precision = 32
"""


@pytest.fixture(autouse=True)
def float64_default():
    with T.default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Train once through the CLI; shared by the learnability and tracker tests."""
    from hift import cli

    root = tmp_path_factory.mktemp("desk")
    ini = root / "desk.ini"
    ini.write_text(DESK_INI)
    run = root / "run"
    t0 = time.perf_counter()
    with T.default_dtype(np.float64):
        code = cli.main(["train", "--config", str(ini), "--out", str(run)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    return {"root": root, "ini": ini, "run": run, "train_seconds": elapsed,
            "config": RunConfig.load(str(ini))}


@pytest.fixture(scope="session")
def desk_model(desk_run):
    from hift.training import load_model

    return load_model(desk_run["config"], str(desk_run["run"] / "checkpoint.hift"))
