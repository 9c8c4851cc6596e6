import pytest

from toneseek import harness, toy
from toneseek.rewards import built_in_rewards
from toneseek.schedule import make_schedule


@pytest.fixture(scope="session")
def task():
    return toy.build_default_task(0)


@pytest.fixture(scope="session")
def sched():
    return make_schedule()


@pytest.fixture(scope="session")
def registry(task):
    return built_in_rewards(task)


@pytest.fixture(scope="session")
def stats(task, sched):
    return harness.calibrate_builtin_stats(task, sched)
