import numpy as np
import pytest
from hypothesis import settings

import carvegraph as cg

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(params=cg.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    with cg.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_clustered():
    """2000 points, 16-d, 20 clusters, with 50 held-out queries."""
    full, labels = cg.gen_synthetic(2050, 16, 20, 0.1, seed=5, return_labels=True)
    data = cg.Dataset(full.data[:2000].copy())
    return data, np.ascontiguousarray(full.data[2000:]), labels[:2000]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        status, title, detail = results[num]
        line = f"[{status}] {num:2d}. {title}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
