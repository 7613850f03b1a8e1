import itertools
import math

import numpy as np
import pytest

from exclusion_hydro.ensembles import (
    EnsembleTable,
    canonical_log_partition,
    canonical_log_partitions,
    grand_log_partition,
    lambda_of_rho,
    phi,
    phi_unit,
    pressure_minus,
    pressure_plus,
    q_of_rho,
    rho_of_lambda,
    susceptibility,
)
from exclusion_hydro.model import ModelParams

LN3 = math.log(3.0)


def closed_form_pressure(lam, q):
    e = math.exp(lam - q)
    return math.log(e + 1 + math.sqrt((e + 1) ** 2 - 4 * (e - math.exp(lam)))) - math.log(2)


def closed_form_phi(rho, alpha, beta):
    # literal expression with the additive constant that makes it vanish at 0
    r = (alpha - beta) / (1 + alpha)
    raw = -(alpha / rho + beta / (1 - rho)) * (1 - math.sqrt(1 - 4 * r * (1 - rho) * rho)) / (2 * r * r)
    return raw + alpha / r


def gradient_expectation_phi(rho, alpha, beta, theta=1.0):
    """Phi as the expectation of the local current function under the infinite-volume chain."""
    q = math.log((theta + alpha) / (theta + beta)) if alpha != beta else 0.0
    lam = lambda_of_rho(rho, "+", q)
    T = np.array([[1.0, math.exp(lam / 2)], [math.exp(lam / 2), math.exp(lam - q)]])
    w, v = np.linalg.eigh(T)
    mu, vec = w[-1], np.abs(v[:, -1])
    pi = vec ** 2
    P = T * vec[None, :] / (mu * vec[:, None])
    total = 0.0
    for a, b, c in itertools.product([0, 1], repeat=3):
        prob = pi[a] * P[a, b] * P[b, c]
        h = theta * b + alpha * (a * b + b * c) - beta * a * c - (alpha - beta) * a * b * c
        total += prob * h
    return total


def brute_log_partition(size, lam, q):
    states = np.array(list(itertools.product([0, 1], repeat=size)), dtype=float)
    lw = -q * np.sum(states[:, :-1] * states[:, 1:], axis=1) + lam * states.sum(axis=1)
    return float(np.log(np.sum(np.exp(lw - lw.max()))) + lw.max())


# ---------------------------------------------------------------------------


def test_pressure_minus():
    assert pressure_minus(0.0) == pytest.approx(math.log(2), abs=1e-15)
    vals = pressure_minus(np.array([-5.0, -10.0, -20.0, -40.0]))
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-17
    assert pressure_minus(800.0) == pytest.approx(800.0)


def test_pressure_plus_examples():
    assert pressure_plus(0.0, LN3) == pytest.approx(math.log((2 + math.sqrt(10)) / 3), abs=1e-15)
    lam = np.linspace(-10, 10, 41)
    np.testing.assert_allclose(pressure_plus(lam, 0.0), pressure_minus(lam), atol=1e-13)


def test_pressure_plus_matches_closed_form_on_grid():
    worst = 0.0
    for lam in np.linspace(-5, 5, 21):
        for q in np.linspace(-2, 2, 9):
            worst = max(worst, abs(pressure_plus(lam, q) - closed_form_pressure(lam, q)))
    assert worst <= 1e-12


def test_pressure_plus_extreme_arguments_are_finite():
    for lam in (-700.0, -50.0, 50.0, 700.0):
        for q in (-30.0, 0.0, 30.0):
            assert math.isfinite(pressure_plus(lam, q))
            assert 0.0 <= rho_of_lambda(lam, "+", q) <= 1.0


def test_finite_volume_pressure_converges():
    lam = 0.3
    gaps = []
    for size in (8, 16, 32):
        log_z = grand_log_partition(size, lam, "+", LN3)
        if size <= 16:
            assert log_z == pytest.approx(brute_log_partition(size, lam, LN3), abs=1e-12)
        gaps.append(abs(log_z / size - pressure_plus(lam, LN3)))
    assert gaps[0] > gaps[1] > gaps[2]
    # the gap is a boundary effect of order 1/size
    assert gaps[1] / gaps[2] == pytest.approx(2.0, rel=0.05)


def test_rho_of_lambda_examples():
    assert rho_of_lambda(0.0, "-") == 0.5
    assert rho_of_lambda(0.0, "+", 0.0) == pytest.approx(0.5, abs=1e-15)
    r = rho_of_lambda(0.0, "+", LN3)
    assert 0.0 < r < 0.5
    assert r == pytest.approx(0.3418861169915810, abs=1e-13)


@pytest.mark.parametrize("q", [LN3, -0.7, 2.0])
def test_rho_plus_matches_richardson_derivative(q):
    for lam in np.linspace(-4, 4, 17):
        def d(h):
            return (pressure_plus(lam + h, q) - pressure_plus(lam - h, q)) / (2 * h)

        rich = (4 * d(5e-5) - d(1e-4)) / 3
        assert rho_of_lambda(lam, "+", q) == pytest.approx(rich, abs=1e-8)


def test_susceptibility_is_density_derivative():
    for family, q in (("-", 0.0), ("+", LN3), ("+", -1.0)):
        for lam in np.linspace(-3, 3, 13):
            h = 1e-5
            fd = (rho_of_lambda(lam + h, family, q) - rho_of_lambda(lam - h, family, q)) / (2 * h)
            assert susceptibility(lam, family, q) == pytest.approx(fd, rel=1e-7)


def test_lambda_of_rho_examples_and_domain():
    assert lambda_of_rho(0.5, "-") == 0.0
    rho = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(lambda_of_rho(rho, "+", 0.0), lambda_of_rho(rho, "-"), atol=1e-12)
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            lambda_of_rho(bad, "+", LN3)
        with pytest.raises(ValueError):
            lambda_of_rho(bad, "-")
    with pytest.raises(ValueError):
        lambda_of_rho(0.5, "x")


def test_lambda_plus_against_independent_inverse():
    # explicit inverse of the density map obtained by solving the quadratic in e^lam
    for q in (LN3, -1.2, 0.4):
        k = math.exp(-q)
        for rho in np.linspace(0.02, 0.98, 49):
            m = 2 * rho - 1
            p = rho * (1 - rho)
            if abs(m) < 1e-15:
                expected = q
            else:
                expected = q + math.copysign(
                    math.log1p((m * m + abs(m) * math.sqrt(4 * k * p + m * m)) / (2 * k * p)), m
                )
            assert lambda_of_rho(rho, "+", q) == pytest.approx(expected, abs=1e-11)


def test_round_trips():
    rho = np.linspace(0.05, 0.95, 19)
    for family, q in (("-", 0.0), ("+", LN3), ("+", -2.0)):
        back = rho_of_lambda(lambda_of_rho(rho, family, q), family, q)
        np.testing.assert_allclose(back, rho, atol=1e-9)
        lam = np.linspace(-8, 8, 161)
        np.testing.assert_allclose(lambda_of_rho(rho_of_lambda(lam, family, q), family, q), lam, atol=1e-10)
    assert abs(rho_of_lambda(lambda_of_rho(1e-9, "+", LN3), "+", LN3) - 1e-9) <= 1e-18


def test_phi_symmetric_case():
    p = ModelParams(1.0, 1.0, 1.0, 8)
    assert phi(0.5, p) == pytest.approx(0.75, abs=1e-15)
    rho = np.linspace(0, 1, 21)
    p2 = ModelParams(2.0, 0.5, 0.5, 8)
    np.testing.assert_allclose(phi(rho, p2), 2.0 * rho + 0.5 * rho ** 2, atol=1e-15)


def test_phi_repulsive_value():
    p = ModelParams(1.0, 2.0, 0.0, 8)
    assert phi(0.5, p) == pytest.approx(3 - 4.5 * (1 - 1 / math.sqrt(3)), abs=1e-14)
    assert phi(0.5, p) == pytest.approx(1.0980762113533, abs=1e-12)
    assert phi(0.0, p) == 0.0


@pytest.mark.parametrize("alpha,beta", [(2.0, 0.0), (0.0, 3.0), (1.5, 0.5), (-0.5, 2.0), (4.0, -0.5)])
def test_phi_matches_literal_closed_form(alpha, beta):
    for rho in np.linspace(0.05, 0.95, 19):
        assert phi_unit(rho, alpha, beta) == pytest.approx(closed_form_phi(rho, alpha, beta), abs=1e-11)


@pytest.mark.parametrize("theta,alpha,beta", [(1.0, 2.0, 0.0), (1.0, 0.0, 3.0), (2.0, 1.0, 0.2), (0.5, -0.2, 1.0)])
def test_phi_equals_current_expectation(theta, alpha, beta):
    p = ModelParams(theta, alpha, beta, 8)
    for rho in np.linspace(0.05, 0.95, 19):
        assert phi(rho, p) == pytest.approx(gradient_expectation_phi(rho, alpha, beta, theta), abs=1e-12)


def test_phi_small_r_limit():
    rho = np.linspace(0.0, 1.0, 11)
    for eps in (1e-3, 1e-4):
        err = np.max(np.abs(phi_unit(rho, 1.0 + eps, 1.0) - (rho + 1.0 * rho ** 2)))
        assert err <= 3 * eps
    # exact r = 0 branch and tiny r agree smoothly
    assert phi_unit(0.3, 1.0 + 1e-12, 1.0) == pytest.approx(0.3 + 0.09, abs=1e-11)


def test_phi_domain():
    p = ModelParams(1.0, 2.0, 0.0, 8)
    with pytest.raises(ValueError):
        phi(1.2, p)
    with pytest.raises(ValueError):
        phi(-0.01, p)


def test_phi_monotone():
    rho = np.linspace(0, 1, 2001)
    for alpha, beta in ((2.0, 0.0), (0.0, 3.0), (-0.5, 2.0), (4.0, -0.5), (1.0, 1.0)):
        assert np.all(np.diff(phi_unit(rho, alpha, beta)) > 0)


def test_q_of_rho():
    assert q_of_rho(0.5, "-") == pytest.approx(math.log(2), abs=1e-15)
    rho = np.linspace(0.05, 0.95, 19)
    entropy = -rho * np.log(rho) - (1 - rho) * np.log(1 - rho)
    np.testing.assert_allclose(q_of_rho(rho, "-"), entropy, atol=1e-14)


def test_q_plus_finite_volume():
    # half filling keeps n = rho * size exact for even sizes
    rho = 0.5
    errs = []
    for size in (12, 16, 20):
        n = int(math.floor(rho * size))
        errs.append(abs(canonical_log_partition(size, n, "+", LN3) / size - q_of_rho(rho, "+", LN3)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] <= 0.06


def test_canonical_partition_examples():
    for s in (1, 5, 12):
        for n in range(s + 1):
            assert canonical_log_partition(s, n, "-") == pytest.approx(math.log(math.comb(s, n)), abs=1e-12)
    assert canonical_log_partition(2, 2, "+", 0.7) == pytest.approx(-0.7, abs=1e-15)
    assert canonical_log_partition(3, 2, "+", LN3) == pytest.approx(math.log(2 / 3 + 1), abs=1e-15)
    with pytest.raises(ValueError):
        canonical_log_partition(3, 4, "+", LN3)


def test_canonical_partition_against_enumeration():
    q = -0.8
    for size in (6, 10):
        states = np.array(list(itertools.product([0, 1], repeat=size)))
        energy = q * np.sum(states[:, :-1] * states[:, 1:], axis=1)
        counts = states.sum(axis=1)
        logs = canonical_log_partitions(size, "+", q)
        for n in range(size + 1):
            assert logs[n] == pytest.approx(math.log(np.exp(-energy[counts == n]).sum()), abs=1e-12)


def test_convexity_and_concavity():
    lam = np.linspace(-6, 6, 241)
    rho = np.linspace(0.02, 0.98, 97)
    for family, q in (("-", 0.0), ("+", LN3), ("+", -1.5)):
        p = pressure_minus(lam) if family == "-" else pressure_plus(lam, q)
        assert np.min(np.diff(p, 2)) >= -1e-9
        assert np.max(np.diff(q_of_rho(rho, family, q), 2)) <= 1e-9


def test_legendre_duality():
    lam = np.linspace(-12, 12, 24001)
    for family, q in (("-", 0.0), ("+", LN3)):
        p = pressure_minus(lam) if family == "-" else pressure_plus(lam, q)
        for rho in (0.1, 0.3, 0.5, 0.8):
            # grid spacing 1e-3 gives a second-order error below 1e-6
            assert np.min(p - rho * lam) == pytest.approx(q_of_rho(rho, family, q), abs=1e-6)


def test_monotone_maps():
    lam = np.linspace(-10, 10, 401)
    rho = np.linspace(0.01, 0.99, 99)
    for q in (LN3, -1.0, 0.0):
        assert np.all(np.diff(rho_of_lambda(lam, "+", q)) > 0)
        assert np.all(np.diff(lambda_of_rho(rho, "+", q)) > 0)


def test_q_zero_collapse():
    table = EnsembleTable(1.0, 0.7, 0.7)
    assert table.q == 0.0
    lam = np.linspace(-5, 5, 21)
    rho = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(table.p_plus(lam), table.p_minus(lam), atol=1e-12)
    np.testing.assert_allclose(table.lambda_plus(rho), table.lambda_minus(rho), atol=1e-12)


def test_table_slope_bound():
    table = EnsembleTable(1.0, 2.0, 0.0)
    rho = np.linspace(0, 1, 100001)
    fine = np.max(np.gradient(table.phi(rho), rho))
    assert table.max_phi_slope() == pytest.approx(fine, rel=1e-3)
    assert EnsembleTable(1.0, 1.0, 1.0).max_phi_slope() == pytest.approx(3.0, rel=1e-3)
