"""Shared fixtures: random signals and small session-scoped certificates."""

import numpy as np
import pytest

from deautoconv.signal import GridSignal
from deautoconv.spectral import builtin_source, construct_source


def random_signal(rng, resolution: int, domain_length: int = 1) -> GridSignal:
    size = domain_length * resolution + 1
    draw = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return GridSignal(draw, resolution, domain_length)


@pytest.fixture(scope="session")
def rankone_cert():
    """Certificate of the constant source element: closed-form spectrum."""
    return construct_source(builtin_source("const:2", 64))


@pytest.fixture(scope="session")
def cert3_64():
    """Sinc-catalog certificate at N = 64, small enough for dense oracles."""
    return construct_source(builtin_source(3, 64))
