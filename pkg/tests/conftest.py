"""Shared fixtures and helpers for the test suite."""

import math

import numpy as np
import pytest

from starsense import (
    DensityOperator,
    FockSpace,
    FockState,
    LinkParams,
    SourceParams,
    ghz_state,
    outcome_model,
    run_distribution,
    sigma_x_povm,
)

PATTERN_12 = frozenset({1, 2})
W4 = (0.25, -0.25, 0.25, -0.25)
DIR4 = (1.0, -1.0, 1.0, -1.0)


@pytest.fixture(scope="session")
def source():
    return SourceParams.from_intensity(0.8)


@pytest.fixture(scope="session")
def ghz_rho():
    return DensityOperator.from_pure(ghz_state(PATTERN_12))


@pytest.fixture(scope="session")
def ghz_sigma_x_model(ghz_rho):
    return outcome_model(ghz_rho, sigma_x_povm())


@pytest.fixture(scope="session")
def lossy_conditional(source):
    """Conditional state of pattern {1,2} at eta = 0.5."""
    return run_distribution(source, LinkParams(0.5)).conditionals[PATTERN_12]


def random_state(rng, n_modes=3, cutoff=3, n_terms=4):
    """A random normalized sparse state."""
    space = FockSpace(n_modes, cutoff)
    basis = space.basis()
    picks = rng.choice(len(basis), size=min(n_terms, len(basis)), replace=False)
    amp = {
        basis[i]: complex(rng.normal(), rng.normal()) for i in picks
    }
    return FockState(space, amp, normalize=True)


def random_density(rng, n_modes=2, cutoff=2, rank=2):
    """A random mixed state as a convex mix of random pure states."""
    weights = rng.dirichlet(np.ones(rank))
    space = FockSpace(n_modes, cutoff)
    mat = np.zeros((space.dim, space.dim), dtype=complex)
    for w in weights:
        vec = random_state(rng, n_modes, cutoff).to_vector()
        mat += w * np.outer(vec, vec.conj())
    return DensityOperator(space, mat)


def theta_pattern(t):
    """Station phases t*(1,-1,1,-1) sensing the combination t."""
    return tuple(t * d for d in DIR4)
