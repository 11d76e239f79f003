import numpy as np
import pytest

from fgts.neural import MLP, init_network


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def with_random_biases(net, rng, scale=0.5):
    """Copy of ``net`` with random biases, so no ReLU input sits exactly at the kink."""
    arrays = {k: (v if k.startswith("W") else scale * rng.standard_normal(v.shape))
              for k, v in net.arrays().items()}
    return MLP(net.spec, arrays, net.rng_seed_used)


def random_net(spec, seed, rng):
    return with_random_biases(init_network(spec, seed), rng)


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
