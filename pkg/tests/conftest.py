import math

import pytest
from hypothesis import HealthCheck, settings

from rabispec.params import TWO_PI, TlsParams, fig1_tank, fig1_tls

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def device_tls():
    return fig1_tls(0.002)


@pytest.fixture
def device_tank():
    return fig1_tank()


@pytest.fixture
def ghz_tls():
    d = TWO_PI * 1e9
    return TlsParams(d, d, 0.01, TWO_PI * 4e6, TWO_PI * 0.1e6)


def rel(a, b):
    return abs(a - b) / abs(b)


def mhz(x):
    return TWO_PI * 1e6 * x


__all__ = ["math", "rel", "mhz"]
