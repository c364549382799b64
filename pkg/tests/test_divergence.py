import numpy as np
import pytest

from lrorder.divergence import (
    hellinger_sq,
    kullback,
    pearson,
    phi,
    phi_divergence,
)
from lrorder.errors import DomainError, InvalidDimensionError

LAMBDAS = [-1.5, -1.0, -0.5, 0.0, 2 / 3, 1.0, 1.5, 2.0, 3.0]


@pytest.mark.parametrize("lam", LAMBDAS)
def test_identical_vectors_have_zero_divergence(lam):
    p = np.array([0.1, 0.2, 0.3, 0.4])
    assert phi_divergence(p, p, lam) == pytest.approx(0.0, abs=1e-15)


def test_pearson_by_hand():
    # 0.5 * sum (p - q)^2 / q
    assert pearson([0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.02)


def test_kullback_and_reverse():
    p, q = np.array([0.6, 0.4]), np.array([0.5, 0.5])
    assert kullback(p, q) == pytest.approx(np.sum(p * np.log(p / q)))
    assert phi_divergence(p, q, -1.0) == pytest.approx(
        np.sum(q * np.log(q / p)))


def test_generic_formula_matches_closed_sum():
    rng = np.random.default_rng(2)
    p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
    for lam in (-1.5, -0.5, 2 / 3, 2.0):
        direct = (np.sum(p ** (lam + 1) / q ** lam) - 1) / (lam * (lam + 1))
        assert phi_divergence(p, q, lam) == pytest.approx(direct, rel=1e-10)


def test_hellinger_relation():
    rng = np.random.default_rng(3)
    p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
    # d_{-1/2} = 2 * sum (sqrt p - sqrt q)^2 = 4 (1 - sum sqrt(pq))
    assert phi_divergence(p, q, -0.5) == pytest.approx(
        2 * hellinger_sq(p, q), rel=1e-12)
    assert hellinger_sq(p, q) == pytest.approx(2 * (1 - np.sum(np.sqrt(p * q))))


def test_self_distances_vanish():
    p = np.array([0.3, 0.7])
    assert kullback(p, p) == pearson(p, p) == hellinger_sq(p, p) == 0


def test_phi_at_zero():
    assert phi(np.array([0.0]), 1.0)[0] == pytest.approx(0.5)
    assert phi(np.array([0.0]), 0.0)[0] == 1.0
    assert np.isinf(phi(np.array([0.0]), -1.0)[0])
    assert np.isinf(phi(np.array([0.0]), -2.0)[0])


def test_zero_in_p_follows_convention():
    # 0 * phi(0/q) contributes q * phi(0) = q / (lam + 1) for lam > -1
    p, q = np.array([0.0, 1.0]), np.array([0.5, 0.5])
    expected = (0.5 * 1.0 / 2.0) + 0.5 * phi(np.array([2.0]), 1.0)[0]
    assert phi_divergence(p, q, 1.0) == pytest.approx(expected)


def test_pearson_of_published_fits():
    from lrorder.table_model import theta_to_prob

    pt = theta_to_prob([-0.7164043, -1.0647107, -0.1823216, 1.5173226,
                        1.5173226, 0.6523252], 32, 32)
    ph = np.array([17, 12, 18, 17, 17, 12, 18, 17]) / 128
    assert 2 * 64 * pearson(pt, ph) == pytest.approx(5.8977, abs=1e-3)


def test_continuity_near_limits():
    ph = np.array([17, 12, 18, 17, 17, 12, 18, 17]) / 128
    pbar = np.array([11, 8, 8, 5, 6, 4, 10, 12]) / 64
    for base in (0.0, -1.0):
        limit = phi_divergence(pbar, ph, base)
        for step in (1e-6, -1e-6):
            near = phi_divergence(pbar, ph, base + step)
            assert abs(near - limit) <= 1e-6 * limit


def test_errors():
    with pytest.raises(InvalidDimensionError):
        phi_divergence([0.5, 0.5], [1.0], 1.0)
    with pytest.raises(DomainError):
        phi_divergence([0.5, 0.5], [1.0, 0.0], 1.0)
    with pytest.raises(DomainError):
        phi_divergence([-0.5, 1.5], [0.5, 0.5], 1.0)
