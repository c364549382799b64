"""Maximum likelihood under independence and under likelihood ratio order.

All fits work on the zero-adjusted counts (empty cells replaced by
``SolverOptions.zero_cell_eps``) and report the loglikelihood
``sum N_ij log p_ij`` of those counts, so fits produced by different routes
are directly comparable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import (
    ConvergenceError,
    DegenerateTableError,
    DomainError,
    OracleInconsistencyError,
)
from .table_model import (
    ZERO_CELL_EPS,
    ContingencyTable,
    log_odds_from_theta,
    prob_to_theta,
    theta_to_prob,
)

#: Starting values tried in turn, each used for every coordinate.
RESTART_LADDER = (0.0, 0.1, -0.1)


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 250
    zero_cell_eps: float = ZERO_CELL_EPS

    def __post_init__(self):
        for name in ("kkt_tol", "feas_tol", "max_iter", "zero_cell_eps"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


@dataclass(frozen=True)
class RestrictedFit:
    """Result of a (possibly constrained) maximum likelihood fit.

    ``active_set`` holds 1-based constraint indices ``j`` with
    ``(R theta)_j = 0``. Multipliers follow the sign convention
    ``lambda_j <= 0`` on active constraints and are zero elsewhere.
    """

    theta: np.ndarray
    p: np.ndarray
    loglik: float
    active_set: tuple
    kkt_multipliers: np.ndarray
    converged: bool
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def log_odds(self) -> np.ndarray:
        return log_odds_from_theta(self.theta)


def _options(opts):
    return SolverOptions() if opts is None else opts


def loglik(counts, p) -> float:
    """``sum N log p`` with the convention ``0 log 0 = 0``."""
    counts = np.asarray(counts, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    pos = counts > 0
    return float(np.sum(counts[pos] * np.log(p[pos])))


def loglik_gradient(counts, theta) -> np.ndarray:
    """Gradient of the loglikelihood with respect to ``theta``.

    ``counts`` are the (adjusted) counts; the row totals act as the
    multinomial sizes, so this equals ``W.T @ (N - M p)`` with the row
    scaling of ``p`` taken from the counts.
    """
    counts = np.asarray(counts, dtype=float)
    M = counts.sum(axis=1)
    p = theta_to_prob(theta, M[0], M[1])
    J = counts.shape[1]
    k = J - 1
    expected = M.sum() * p.reshape(2, J)
    resid = counts - expected
    g2 = resid[0, :k] + resid[1, :k]
    g12 = resid[0, :k]
    return np.concatenate([g2, g12])


def stationarity_residual(counts, theta, multipliers) -> float:
    """``max |-grad l + R^T lambda|``: KKT stationarity for minimizing ``-l``."""
    g = loglik_gradient(counts, theta)
    k = g.size // 2
    lam = np.asarray(multipliers, dtype=float)
    rt_lam = np.concatenate([np.zeros(k), lam - np.append(0.0, lam[:-1])])
    return float(np.max(np.abs(-g + rt_lam)))


def mle_null(table: ContingencyTable, opts: SolverOptions | None = None
             ) -> RestrictedFit:
    """Closed-form fit under equal row distributions.

    ``p_ij = (n_i / n) * (column j total / grand total)`` with column totals
    taken from the zero-adjusted counts.
    """
    opts = _options(opts)
    adj = table.adjusted_counts(opts.zero_cell_eps)
    col = adj.sum(axis=0)
    if not np.all(col > 0):
        raise DegenerateTableError("a column total is zero")
    pi = col / col.sum()
    n = table.n
    p = np.concatenate([pi * (table.n1 / n), pi * (table.n2 / n)])
    theta = prob_to_theta(p)
    k = table.J - 1
    mult = _null_multipliers(adj, theta)
    return RestrictedFit(
        theta=theta, p=p, loglik=loglik(adj, p),
        active_set=tuple(range(1, k + 1)), kkt_multipliers=mult,
        converged=True, iterations=0,
        diagnostics={"method": "closed_form"})


def _null_multipliers(adj, theta):
    # at a pooled fit the eta-gradient is the cumulative theta12 gradient
    g = loglik_gradient(adj, theta)
    k = g.size // 2
    return np.cumsum(g[k:])


def mle_restricted(table: ContingencyTable, opts: SolverOptions | None = None
                   ) -> RestrictedFit:
    """Maximize the loglikelihood over ``R theta >= 0``.

    Uses a primal active-set Newton method on the local log odds ratios,
    restarting from the values in ``RESTART_LADDER`` if a run fails. A fit
    that never meets the KKT tolerance is returned with
    ``converged=False``.
    """
    opts = _options(opts)
    adj = table.adjusted_counts(opts.zero_cell_eps)
    m = 2 * (table.J - 1)
    total_iter = 0
    result = None
    for rung, start in enumerate(RESTART_LADDER):
        result = _backend.fit_order_restricted(
            adj, np.full(m, start), opts.kkt_tol, opts.feas_tol,
            opts.max_iter)
        total_iter += result[3]
        if result[4] == _backend.STATUS_OK:
            break
    theta, mult, active, _, status, grad_norm = result
    M = adj.sum(axis=1)
    try:
        p_model = theta_to_prob(theta, M[0], M[1])
        p = theta_to_prob(theta, table.n1, table.n2)
    except Exception:
        p_model = p = np.full(2 * table.J, np.nan)
        status = _backend.STATUS_NUMERICAL
    converged = status == _backend.STATUS_OK
    residual = (stationarity_residual(adj, theta, mult) if converged
                else float("nan"))
    return RestrictedFit(
        theta=theta, p=p, loglik=loglik(adj, p_model),
        active_set=tuple(int(j) + 1 for j in np.flatnonzero(active)),
        kkt_multipliers=np.asarray(mult, dtype=float),
        converged=bool(converged), iterations=int(total_iter),
        diagnostics={"method": "active_set_newton", "status": int(status),
                     "restarts": rung, "grad_norm": float(grad_norm),
                     "stationarity": residual,
                     "backend": _backend.NAME})


def require_converged(fit: RestrictedFit) -> RestrictedFit:
    if not fit.converged:
        raise ConvergenceError(
            f"restricted fit did not converge (status "
            f"{fit.diagnostics.get('status')}, "
            f"{fit.iterations} iterations)")
    return fit


# --------------------------------------------------------------------------
# exhaustive oracle
# --------------------------------------------------------------------------


def _pooled_fit(adj, links):
    """Fit with ``theta_j = 1`` for every ``j`` in ``links`` (0-based).

    Linked neighbouring categories form blocks inside which the two row
    distributions are proportional; the MLE splits each block total by row
    and then by column total within the block.
    """
    J = adj.shape[1]
    M = adj.sum(axis=1)
    col = adj.sum(axis=0)
    pi = np.empty((2, J))
    start = 0
    for j in range(J):
        if j < J - 1 and j in links:
            continue
        block = slice(start, j + 1)
        share = col[block] / col[block].sum()
        for i in range(2):
            pi[i, block] = adj[i, block].sum() / M[i] * share
        start = j + 1
    return pi


def active_set_oracle(table: ContingencyTable,
                      opts: SolverOptions | None = None) -> RestrictedFit:
    """Restricted MLE by enumerating all ``2**(J-1)`` candidate active sets.

    Each candidate is solved in closed form and screened for primal
    feasibility and multiplier sign; among survivors the highest
    loglikelihood wins, ties going to the larger active set.
    """
    opts = _options(opts)
    J = table.J
    if J > 6:
        raise DomainError("oracle enumeration is limited to J <= 6")
    adj = table.adjusted_counts(opts.zero_cell_eps)
    M = adj.sum(axis=1)
    k = J - 1
    grad_tol = max(opts.kkt_tol, 1e-10 * adj.sum())
    best = None
    for size in range(k + 1):
        for S in itertools.combinations(range(k), size):
            pi = _pooled_fit(adj, set(S))
            p_model = np.concatenate([pi[0] * M[0], pi[1] * M[1]]) / M.sum()
            theta = prob_to_theta(p_model)
            eta = log_odds_from_theta(theta)
            free = [j for j in range(k) if j not in S]
            if any(eta[j] < -opts.feas_tol for j in free):
                continue
            g_eta = np.cumsum(adj[0, :k] - M[0] * pi[0, :k])
            if any(g_eta[j] > grad_tol for j in S):
                continue
            ll = loglik(adj, p_model)
            if best is None or ll > best[0] + 1e-12 * (1 + abs(ll)) or (
                    abs(ll - best[0]) <= 1e-12 * (1 + abs(ll))
                    and len(S) > len(best[1])):
                mult = np.zeros(k)
                mult[list(S)] = g_eta[list(S)]
                best = (ll, S, theta, mult)
    if best is None:
        raise OracleInconsistencyError(
            "no candidate active set passed feasibility and sign screens")
    ll, S, theta, mult = best
    active = set(S) | {j for j in range(k)
                       if log_odds_from_theta(theta)[j] <= opts.feas_tol}
    return RestrictedFit(
        theta=theta, p=theta_to_prob(theta, table.n1, table.n2), loglik=ll,
        active_set=tuple(sorted(j + 1 for j in active)),
        kkt_multipliers=mult, converged=True, iterations=0,
        diagnostics={"method": "enumeration", "candidate": [j + 1 for j in S]})
