"""Shared fixtures: reference grids and randomized physical states."""

import numpy as np
import pytest

from ocmsim import MOMENTUM, WaveTensor, bandlimit_project, make_grid, symmetrize


@pytest.fixture(scope="session")
def grid64():
    """Fringe-resolving grid used by the NOON and sampling examples."""
    return make_grid(64, 0.5, 0.25)


@pytest.fixture(scope="session")
def grid32():
    """Small grid for dense multi-photon states."""
    return make_grid(32, 0.5, 0.5)


def random_symmetric_bandlimited(grid, n, rng):
    """Random exchange-symmetric state with zero power outside the band."""
    shape = (grid.m,) * n
    amp = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    state = symmetrize(WaveTensor(grid, MOMENTUM, amp))
    projected, _ = bandlimit_project(state)
    return projected
