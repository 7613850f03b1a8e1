import itertools
import math

import numpy as np
import pytest
from scipy.special import expit

from exclusion_hydro.ensembles import rho_of_lambda
from exclusion_hydro.gibbs import (
    GibbsSpec,
    block_count_distribution,
    enumerate_distribution,
    exact_marginals,
    full_lattice_marginals,
    log_weights,
    sample_chain,
    sample_full_lattice,
    state_codes,
    total_variation,
)
from exclusion_hydro.model import ModelParams, hamiltonian

LN3 = math.log(3.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        GibbsSpec(0, "+", 0.0)
    with pytest.raises(ValueError):
        GibbsSpec(3, "*", 0.0)
    with pytest.raises(ValueError):
        GibbsSpec(3, "+", 0.0, LN3, (1, 0, 1))
    with pytest.raises(ValueError):
        GibbsSpec(3, "+", 0.0, LN3, (2, 0))
    # the free family ignores the boundary
    assert GibbsSpec(3, "-", 0.0, LN3, (1, 1)).boundary_pair() == (0, 0)


def test_free_family_is_bernoulli():
    rng = np.random.default_rng(10)
    lam = 0.7
    draws = sample_chain(GibbsSpec(20, "-", lam), rng, 5000)
    p = expit(lam)
    se = math.sqrt(p * (1 - p) / draws.size)
    assert abs(draws.mean() - p) <= 3 * se
    np.testing.assert_allclose(exact_marginals(GibbsSpec(7, "-", lam)), p)


def test_log_weights_match_hamiltonian():
    spec = GibbsSpec(6, "+", 0.4, LN3)
    states, _ = enumerate_distribution(spec)
    energy = LN3 * np.sum(states[:, :-1] * states[:, 1:], axis=1)
    np.testing.assert_allclose(log_weights(spec, states), -energy + 0.4 * states.sum(axis=1), atol=1e-14)


def test_state_codes_order():
    states, _ = enumerate_distribution(GibbsSpec(5, "-", 0.0))
    np.testing.assert_array_equal(state_codes(states), np.arange(32))


def test_chain_sampler_total_variation():
    rng = np.random.default_rng(11)
    spec = GibbsSpec(8, "+", 0.0, LN3)
    _, probs = enumerate_distribution(spec)
    samples = sample_chain(spec, rng, 1_000_000)
    assert total_variation(samples, probs) <= 0.01


@pytest.mark.parametrize("boundary", [(1, 0), (0, 1), (1, 1), (None, 1)])
def test_chain_sampler_with_boundary(boundary):
    rng = np.random.default_rng(12)
    spec = GibbsSpec(6, "+", -0.3, -1.1, boundary)
    _, probs = enumerate_distribution(spec)
    assert total_variation(sample_chain(spec, rng, 400_000), probs) <= 0.01


def test_single_draw_shape():
    rng = np.random.default_rng(13)
    assert sample_chain(GibbsSpec(5, "+", 0.0, LN3), rng).shape == (5,)
    assert sample_chain(GibbsSpec(5, "-", 0.0), rng).shape == (5,)


def test_q_zero_same_law_as_free():
    rng = np.random.default_rng(14)
    _, probs = enumerate_distribution(GibbsSpec(6, "-", 0.5))
    _, probs_plus = enumerate_distribution(GibbsSpec(6, "+", 0.5, 0.0))
    np.testing.assert_allclose(probs, probs_plus, atol=1e-15)
    assert total_variation(sample_chain(GibbsSpec(6, "+", 0.5, 0.0), rng, 200_000), probs) <= 0.01


@pytest.mark.parametrize("boundary", [None, (1, 0), (1, 1)])
def test_exact_marginals_against_enumeration(boundary):
    spec = GibbsSpec(8, "+", 0.2, LN3, boundary)
    states, probs = enumerate_distribution(spec)
    assert np.max(np.abs(exact_marginals(spec) - probs @ states)) <= 1e-12


def test_interior_marginal_reaches_bulk_density():
    for lam in (-1.0, 0.0, 0.8):
        m = exact_marginals(GibbsSpec(64, "+", lam, LN3))
        assert abs(m[32] - rho_of_lambda(lam, "+", LN3)) <= 1e-6


def test_marginals_extreme_lambda():
    m = exact_marginals(GibbsSpec(50, "+", 60.0, LN3))
    assert np.all(np.isfinite(m)) and m.min() > 0.99
    m = exact_marginals(GibbsSpec(50, "+", -60.0, LN3))
    assert np.all(np.isfinite(m)) and m.max() < 1e-20


def test_boundary_versus_free_ratio():
    q = LN3
    for omega in [(0, 1), (1, 0), (1, 1), (0, 0)]:
        for size in (3, 6, 8):
            states, free = enumerate_distribution(GibbsSpec(size, "+", 0.1, q))
            _, bound = enumerate_distribution(GibbsSpec(size, "+", 0.1, q, omega))
            ratio = bound / free
            assert ratio.min() >= math.exp(-4 * abs(q)) - 1e-12
            assert ratio.max() <= math.exp(4 * abs(q)) + 1e-12


def test_block_count_distribution_against_enumeration():
    states, probs = enumerate_distribution(GibbsSpec(9, "+", 0.3, LN3))
    counts = states.sum(axis=1)
    expected = np.bincount(counts, weights=probs, minlength=10)
    np.testing.assert_allclose(block_count_distribution(9, 0.3, "+", LN3), expected, atol=1e-14)
    binom = block_count_distribution(9, 0.3, "-")
    p = expit(0.3)
    np.testing.assert_allclose(binom, [math.comb(9, k) * p ** k * (1 - p) ** (9 - k) for k in range(10)], atol=1e-14)


def _full_lattice_enumeration(params, lam):
    n = params.n_sites
    states = np.array(list(itertools.product([0, 1], repeat=params.lattice_size)), dtype=np.int8)
    energy = np.array([hamiltonian(s, params) for s in states])
    lw = -energy + lam * states.sum(axis=1)
    p = np.exp(lw - lw.max())
    return states, p / p.sum()


def test_full_lattice_sampler_against_enumeration():
    # smallest admissible lattice (N = 4, 13 sites); TV of the 10-site window -2..7.
    # With 1024 cells the sampling floor of the TV at 1e6 draws is about 0.012,
    # so 4e6 draws are used to bring it near 0.006.
    params = ModelParams(1.0, 2.0, 0.0, 4)
    lam = 0.2
    states, probs = _full_lattice_enumeration(params, lam)
    n = params.n_sites
    lo, hi = -2 + n, 7 + n + 1
    window_codes = state_codes(states[:, lo:hi])
    window_probs = np.bincount(window_codes, weights=probs, minlength=2 ** 10)
    rng = np.random.default_rng(15)
    samples = sample_full_lattice(params, lam, rng, 4_000_000)
    floor = 0.5 * math.sqrt(2 / math.pi) * np.sum(np.sqrt(window_probs * (1 - window_probs))) / math.sqrt(4e6)
    assert floor < 0.008
    assert total_variation(samples[:, lo:hi], window_probs) <= 0.01
    np.testing.assert_allclose(full_lattice_marginals(params, lam), probs @ states, atol=1e-13)


def test_full_lattice_q_zero_bernoulli():
    params = ModelParams(1.0, 1.0, 1.0, 16)
    rng = np.random.default_rng(16)
    samples = sample_full_lattice(params, -0.4, rng, 20_000)
    p = expit(-0.4)
    se = math.sqrt(p * (1 - p) / samples.size)
    assert abs(samples.mean() - p) <= 3 * se
    np.testing.assert_allclose(full_lattice_marginals(params, -0.4), p)


def test_full_lattice_means_match_marginals():
    params = ModelParams(1.0, 2.0, 0.0, 16)
    rng = np.random.default_rng(17)
    samples = sample_full_lattice(params, 0.3, rng, 40_000)
    m = full_lattice_marginals(params, 0.3)
    se = np.sqrt(m * (1 - m) / samples.shape[0])
    z = np.abs(samples.mean(axis=0) - m) / se
    assert np.mean(z <= 3) >= 0.95
