import sys

import pytest

from toneseek.schedule import make_schedule
from toneseek.toy import build_default_task, task_to_json


@pytest.fixture(scope="session")
def task():
    return build_default_task(0)


@pytest.fixture(scope="session")
def sched():
    return make_schedule()


@pytest.fixture(scope="session")
def task_path(task, tmp_path_factory):
    path = tmp_path_factory.mktemp("task") / "task.json"
    path.write_text(task_to_json(task))
    return str(path)


@pytest.fixture(scope="session")
def worker_cmd(task_path):
    return [sys.executable, "-m", "toneseek_worker", "--task", task_path]
