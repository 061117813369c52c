import numpy as np
import pytest

from spacetime_ota.network import build_instance, draw_channels, draw_samples, generate_topology
from spacetime_ota.solver import available_backends


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


def make_instance(seed=0, n_senders=10, n_receivers=6, degree=3, noise_var=0.1, p_max=1.0):
    rng = np.random.default_rng(seed)
    topo = generate_topology(n_senders, n_receivers, degree, rng)
    return build_instance(topo, draw_channels(topo, rng), draw_samples(n_senders, rng),
                          p_max, noise_var)


@pytest.fixture
def small_instance():
    return make_instance()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
