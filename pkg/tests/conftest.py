import sys
from pathlib import Path

import numpy as np
import pytest

from tendonscore import kernels
from tendonscore.cnn import topology

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mini_topology():
    """Every AlexNet layer kind, small enough for the scalar oracle."""
    return [
        topology.conv("conv1", 3, 4, 5, stride=2), topology.relu(), topology.lrn(),
        topology.max_pool("pool1"),
        topology.conv("conv2", 4, 6, 3, padding=1, groups=2), topology.relu(),
        topology.max_pool("pool2"),
        topology.fc("fc6", 6, 10), topology.relu(),
    ]


@pytest.fixture
def mini_layers():
    return mini_topology()


SMALL = dict(patients=5, healthy=2, slices=10, feature_dim=64)


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    from tendonscore.pipeline import generate_synthetic_cohort
    root = tmp_path_factory.mktemp("cohort")
    generate_synthetic_cohort(root, seed=3, **SMALL)
    return root


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Time a numbered acceptance criterion and record PASS/FAIL for the summary."""
    import time
    from contextlib import contextmanager

    log = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    @contextmanager
    def run(number, title, limit):
        start = time.perf_counter()
        ok = False
        try:
            yield
            elapsed = time.perf_counter() - start
            assert elapsed < limit, f"took {elapsed:.1f} s, limit {limit} s"
            ok = True
        finally:
            log[number] = (title, ok, time.perf_counter() - start, limit)

    return run


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        title, ok, elapsed, limit = log[number]
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({elapsed:.2f} s, limit {limit} s)")
