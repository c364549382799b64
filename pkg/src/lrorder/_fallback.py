"""Pure numpy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; ``lrorder._backend`` picks
whichever is available. The fit works in the coordinates
``x = (theta2, eta)`` with ``eta = G @ theta12`` the local log odds ratios,
so the order constraints become the bounds ``eta >= 0`` and a primal
active-set Newton method applies directly.
"""

from __future__ import annotations

import math

import numpy as np

LAMBDA_LIMIT_TOL = 1e-9

STATUS_OK = 0
STATUS_MAX_ITER = 1
STATUS_NUMERICAL = 2

_ARMIJO = 1e-4
_MAX_HALVINGS = 60


def _to_x(theta):
    k = theta.size // 2
    th12 = theta[k:]
    eta = th12 - np.append(th12[1:], 0.0)
    return np.concatenate([theta[:k], eta])


def _to_theta(x):
    k = x.size // 2
    th12 = np.cumsum(x[k:][::-1])[::-1]
    return np.concatenate([x[:k], th12])


def _log_softmax_ref(a):
    full = np.append(a, 0.0)
    mx = full.max()
    return full - (mx + math.log(np.exp(full - mx).sum()))


def _loglik(x, N1, N2):
    k = x.size // 2
    th2 = x[:k]
    th12 = np.cumsum(x[k:][::-1])[::-1]
    lp1 = _log_softmax_ref(th2 + th12)
    lp2 = _log_softmax_ref(th2)
    return float(N1 @ lp1 + N2 @ lp2), lp1, lp2


def _grad_hess(lp1, lp2, N1, N2):
    k = lp1.size - 1
    pi1 = np.exp(lp1)[:k]
    pi2 = np.exp(lp2)[:k]
    M1, M2 = N1.sum(), N2.sum()
    g2 = N1[:k] + N2[:k] - M1 * pi1 - M2 * pi2
    g_eta = np.cumsum(N1[:k] - M1 * pi1)
    C1 = np.diag(pi1) - np.outer(pi1, pi1)
    C2 = np.diag(pi2) - np.outer(pi2, pi2)
    A = -M1 * C1
    H = np.empty((2 * k, 2 * k))
    H[:k, :k] = A - M2 * C2
    AU = np.cumsum(A, axis=1)
    H[:k, k:] = AU
    H[k:, :k] = AU.T
    H[k:, k:] = np.cumsum(AU, axis=0)
    return np.concatenate([g2, g_eta]), H


def _newton_direction(H_ff, g_f):
    neg = -H_ff
    try:
        L = np.linalg.cholesky(neg)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(neg)
        w = np.maximum(w, 1e-12 * max(w.max(), 1.0))
        return V @ ((V.T @ g_f) / w)
    y = np.linalg.solve(L, g_f)
    return np.linalg.solve(L.T, y)


def fit_order_restricted(counts, theta0, kkt_tol=1e-8, feas_tol=1e-8,
                         max_iter=250):
    """Maximize the product-multinomial loglikelihood subject to R theta >= 0.

    Parameters
    ----------
    counts : ndarray, shape (2, J)
        Strictly positive (already zero-adjusted) counts.
    theta0 : ndarray, shape (2(J-1),)
        Starting point in theta coordinates; projected onto the feasible set.

    Returns
    -------
    theta, multipliers, active, iterations, status, grad_norm
    """
    counts = np.asarray(counts, dtype=float)
    N1 = np.ascontiguousarray(counts[0])
    N2 = np.ascontiguousarray(counts[1])
    J = N1.size
    k = J - 1
    x = _to_x(np.asarray(theta0, dtype=float).copy())
    x[k:] = np.maximum(x[k:], 0.0)
    work = np.zeros(k, dtype=bool)
    work[:] = x[k:] <= 0.0

    status = STATUS_MAX_ITER
    iterations = 0
    ll, lp1, lp2 = _loglik(x, N1, N2)
    g, H = _grad_hess(lp1, lp2, N1, N2)
    grad_norm = np.inf
    while iterations < max_iter:
        free = np.concatenate([np.ones(k, dtype=bool), ~work])
        g_f = g[free]
        grad_norm = float(np.max(np.abs(g_f)))
        if grad_norm <= kkt_tol:
            if work.any():
                cand = np.flatnonzero(work)
                best = cand[np.argmax(g[k + cand])]
                if g[k + best] > kkt_tol:
                    work[best] = False
                    continue
            status = STATUS_OK
            break
        if not np.isfinite(grad_norm):
            status = STATUS_NUMERICAL
            break
        iterations += 1
        d = np.zeros(2 * k)
        d[free] = _newton_direction(H[np.ix_(free, free)], g_f)
        slope = float(g_f @ d[free])

        alpha_max, block = 1.0, -1
        for j in range(k):
            if not work[j] and d[k + j] < 0.0:
                step = x[k + j] / -d[k + j]
                if step < alpha_max:
                    alpha_max, block = step, j
        alpha = alpha_max
        slack = 1e-13 * (1.0 + abs(ll))
        accepted = False
        for _ in range(_MAX_HALVINGS):
            xn = x + alpha * d
            xn[k:] = np.maximum(xn[k:], 0.0)
            if block >= 0 and alpha == alpha_max:
                xn[k + block] = 0.0
            ll_new, lp1n, lp2n = _loglik(xn, N1, N2)
            if ll_new >= ll + _ARMIJO * alpha * slope - slack:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = STATUS_NUMERICAL
            break
        if block >= 0 and alpha == alpha_max:
            work[block] = True
        x, ll, lp1, lp2 = xn, ll_new, lp1n, lp2n
        g, H = _grad_hess(lp1, lp2, N1, N2)

    active = work | (x[k:] <= feas_tol)
    multipliers = np.where(active, g[k:], 0.0)
    return _to_theta(x), multipliers, active, iterations, status, grad_norm


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------


def _phi_terms(p, q, lam):
    x = p / q
    if abs(lam) <= LAMBDA_LIMIT_TOL:
        return q * (x * np.log(x) - x + 1.0)
    if abs(lam + 1.0) <= LAMBDA_LIMIT_TOL:
        return q * (-np.log(x) + x - 1.0)
    return q * (x * np.expm1(lam * np.log(x)) - lam * (x - 1.0)) / (
        lam * (lam + 1.0))


def power_divergence_stats(raw, p_tilde, p_hat, lambdas):
    """T_lambda and S_lambda for each lambda.

    ``raw`` are the unadjusted counts (length 2J); cells with a zero count
    are left out of the sums of T, whose terms carry ``pbar**(lam+1)``.
    """
    raw = np.asarray(raw, dtype=float).ravel()
    n = raw.sum()
    pos = raw > 0
    pbar = raw[pos] / n
    pt_pos, ph_pos = p_tilde[pos], p_hat[pos]
    a = np.log(pbar / ph_pos)
    b = np.log(pbar / pt_pos)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    T = np.empty(lambdas.size)
    S = np.empty(lambdas.size)
    for i, lam in enumerate(lambdas):
        if abs(lam) <= LAMBDA_LIMIT_TOL:
            T[i] = 2.0 * n * np.sum(pbar * (a - b))
        elif abs(lam + 1.0) <= LAMBDA_LIMIT_TOL:
            T[i] = 2.0 * n * np.sum(-ph_pos * a + pt_pos * b)
        else:
            T[i] = 2.0 * n * np.sum(
                pbar * (np.expm1(lam * a) - np.expm1(lam * b))) / (
                lam * (lam + 1.0))
        S[i] = 2.0 * n * max(float(np.sum(_phi_terms(p_tilde, p_hat, lam))),
                             0.0)
    return T, S


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------


def chi2_sf(x, df):
    """Upper tail of a chi-square with integer ``df >= 1``."""
    if x <= 0.0:
        return 1.0
    half = 0.5 * x
    if df % 2:
        q = math.erfc(math.sqrt(half))
        term = math.exp(-half) * math.sqrt(half) / math.gamma(1.5)
        k = 1
    else:
        q = math.exp(-half)
        term = q * half
        k = 2
    # Q(k + 2) = Q(k) + (x/2)^(k/2) e^(-x/2) / Gamma(k/2 + 1)
    while k < df:
        q += term
        k += 2
        term *= half / (0.5 * k)
    return min(q, 1.0)


def chibar_sf(t, weights):
    """Chi-bar-squared upper tail; ``weights[j]`` multiplies chi2 with
    ``len(weights) - 1 - j`` degrees of freedom."""
    if not t > 0.0:
        return 1.0
    top = len(weights) - 1
    total = 0.0
    for j in range(top):
        total += weights[j] * chi2_sf(t, top - j)
    return min(max(total, 0.0), 1.0)


def norm_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


# --------------------------------------------------------------------------
# batch driver used by the Monte Carlo engine
# --------------------------------------------------------------------------

_STARTS = (0.0, 0.1, -0.1)


def analyze_batch(tables, lambdas, eps=1e-5, kkt_tol=1e-8, feas_tol=1e-8,
                  max_iter=250):
    """Fit and compute T/S statistics for a stack of tables.

    Returns ``(T, S, status, iterations)`` with ``T`` and ``S`` of shape
    ``(R, L)``; rows whose fit failed on every start carry NaN.
    """
    tables = np.asarray(tables, dtype=float)
    R, _, J = tables.shape
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    T = np.full((R, lambdas.size), np.nan)
    S = np.full((R, lambdas.size), np.nan)
    status = np.empty(R, dtype=np.int64)
    iters = np.zeros(R, dtype=np.int64)
    m = 2 * (J - 1)
    for r in range(R):
        raw = tables[r]
        adj = np.where(raw > 0, raw, eps)
        n1, n2 = raw[0].sum(), raw[1].sum()
        n = n1 + n2
        for start in _STARTS:
            theta, _, _, it, st, _ = fit_order_restricted(
                adj, np.full(m, start), kkt_tol, feas_tol, max_iter)
            iters[r] += it
            if st == STATUS_OK:
                break
        status[r] = st
        if st != STATUS_OK:
            continue
        k = J - 1
        th2, th12 = theta[:k], theta[k:]
        pi1 = np.exp(_log_softmax_ref(th2 + th12))
        pi2 = np.exp(_log_softmax_ref(th2))
        p_tilde = np.concatenate([pi1 * (n1 / n), pi2 * (n2 / n)])
        col = adj.sum(axis=0)
        pi_hat = col / col.sum()
        p_hat = np.concatenate([pi_hat * (n1 / n), pi_hat * (n2 / n)])
        T[r], S[r] = power_divergence_stats(raw.ravel(), p_tilde, p_hat,
                                            lambdas)
    return T, S, status, iters
