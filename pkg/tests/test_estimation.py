import numpy as np
import pytest

from conftest import random_table
from lrorder.errors import ConvergenceError, DomainError
from lrorder.estimation import (
    SolverOptions,
    active_set_oracle,
    loglik_gradient,
    mle_null,
    mle_restricted,
    require_converged,
    stationarity_residual,
)
from lrorder.table_model import ContingencyTable, log_odds_from_theta

THETA_TILDE = [-0.7164, -1.0647, -0.1823, 1.5173, 1.5173, 0.6523]
P_HAT = [0.1328, 0.0938, 0.1406, 0.1328, 0.1328, 0.0938, 0.1406, 0.1328]


def test_null_fit_published(example_table):
    fit = mle_null(example_table)
    assert np.max(np.abs(fit.p - P_HAT)) <= 5e-4
    assert np.allclose(log_odds_from_theta(fit.theta), 0, atol=1e-10)
    assert fit.active_set == (1, 2, 3)


def test_null_fit_of_equal_rows_is_empirical():
    t = ContingencyTable([[3, 5, 2], [3, 5, 2]])
    assert np.allclose(mle_null(t).p, t.relative_frequencies())


def test_null_fit_row_sums():
    t = ContingencyTable([[4, 0, 9], [1, 7, 2]])
    p = mle_null(t).p
    assert p[:3].sum() == pytest.approx(13 / 23, abs=1e-15)
    assert p[3:].sum() == pytest.approx(10 / 23, abs=1e-15)


def test_restricted_fit_published(example_table):
    fit = mle_restricted(example_table)
    assert fit.converged
    assert np.max(np.abs(fit.theta - THETA_TILDE)) <= 1e-3
    assert fit.active_set == (1,)
    assert fit.kkt_multipliers[0] < 0
    assert fit.kkt_multipliers[1:].tolist() == [0.0, 0.0]
    assert fit.diagnostics["stationarity"] <= 1e-8


def test_interior_optimum_is_saturated():
    # every empirical local odds ratio above one
    t = ContingencyTable([[10, 6, 2], [2, 6, 10]])
    fit = mle_restricted(t)
    assert fit.active_set == ()
    assert np.allclose(fit.p, t.relative_frequencies(), atol=1e-10)


def test_two_by_two_branches():
    up = ContingencyTable([[12, 8], [5, 15]])
    fit = mle_restricted(up)
    assert fit.active_set == ()
    assert np.allclose(fit.p, up.relative_frequencies(), atol=1e-12)
    down = ContingencyTable([[5, 15], [12, 8]])
    fit = mle_restricted(down)
    assert fit.active_set == (1,)
    assert np.allclose(fit.p, mle_null(down).p, atol=1e-12)


def test_oracle_published(example_table):
    fit = active_set_oracle(example_table)
    assert fit.active_set == (1,)
    assert np.max(np.abs(fit.theta - THETA_TILDE)) <= 1e-3


def test_oracle_two_by_two():
    assert active_set_oracle(ContingencyTable([[12, 8], [5, 15]])
                             ).active_set == ()
    assert active_set_oracle(ContingencyTable([[5, 15], [12, 8]])
                             ).active_set == (1,)


def test_oracle_limit():
    with pytest.raises(DomainError):
        active_set_oracle(ContingencyTable(np.ones((2, 7), dtype=int)))


@pytest.mark.parametrize("J", [2, 3, 4, 5])
def test_restricted_matches_oracle(J):
    rng = np.random.default_rng(100 + J)
    for _ in range(60):
        t = random_table(rng, J)
        fit, oracle = mle_restricted(t), active_set_oracle(t)
        assert fit.loglik == pytest.approx(oracle.loglik, abs=1e-6)


def test_kkt_conditions_on_random_tables():
    rng = np.random.default_rng(7)
    for _ in range(100):
        t = random_table(rng, 4)
        fit = mle_restricted(t)
        eta = fit.log_odds
        assert np.all(eta >= -1e-8)
        active = [j - 1 for j in fit.active_set]
        assert np.all(eta[active] <= 1e-6)
        assert np.all(fit.kkt_multipliers[active] <= 1e-8)
        inactive = [j for j in range(3) if j not in active]
        assert np.all(fit.kkt_multipliers[inactive] == 0)
        assert stationarity_residual(t.adjusted_counts(), fit.theta,
                                     fit.kkt_multipliers) <= 1e-8


def test_restricted_dominates_null():
    rng = np.random.default_rng(8)
    for _ in range(50):
        t = random_table(rng, 3)
        assert mle_restricted(t).loglik >= mle_null(t).loglik - 1e-9


def test_gradient_against_finite_differences():
    from lrorder.estimation import loglik
    from lrorder.table_model import theta_to_prob

    counts = np.array([[3.0, 5.0, 2.0], [4.0, 1.0, 6.0]])
    theta = np.array([0.2, -0.4, 0.3, 0.1])
    M = counts.sum(axis=1)

    def ell(th):
        return loglik(counts, theta_to_prob(th, M[0], M[1]))

    num = np.array([(ell(theta + h) - ell(theta - h)) / 2e-6
                    for h in np.eye(4) * 1e-6])
    assert np.allclose(loglik_gradient(counts, theta), num, atol=1e-6)


def test_non_convergence_is_reported(example_table):
    fit = mle_restricted(example_table, SolverOptions(max_iter=1))
    assert not fit.converged
    with pytest.raises(ConvergenceError):
        require_converged(fit)


def test_deterministic(example_table):
    a, b = mle_restricted(example_table), mle_restricted(example_table)
    assert a.loglik == b.loglik
    assert np.array_equal(a.theta, b.theta)


def test_solver_options_validation():
    with pytest.raises(DomainError):
        SolverOptions(kkt_tol=0)
