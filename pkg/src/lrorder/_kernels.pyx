# cython: language_level=3, boundscheck=False, wraparound=False
# cython: cdivision=True, initializedcheck=False
"""Compiled kernels: order-restricted fit, power-divergence statistics and
chi-square tails. Same API and numerics as ``_fallback``."""

import numpy as np

from libc.math cimport exp, log, expm1, fabs, sqrt, erfc, tgamma, INFINITY
from libc.stdlib cimport malloc, free

DEF ARMIJO = 1e-4
DEF MAX_HALVINGS = 60

LAMBDA_LIMIT_TOL = 1e-9
cdef double _LTOL = 1e-9

STATUS_OK = 0
STATUS_MAX_ITER = 1
STATUS_NUMERICAL = 2


cdef struct Workspace:
    int J
    int k
    double *x
    double *xn
    double *d
    double *g
    double *H
    double *Hff
    double *rhs
    double *lp1
    double *lp2
    double *lp1n
    double *lp2n
    double *th12
    double *pi1
    double *pi2
    int *work
    int *free_idx


cdef int _ws_alloc(Workspace *w, int J) noexcept nogil:
    cdef int k = J - 1, m = 2 * (J - 1)
    w.J = J
    w.k = k
    w.x = <double *> malloc(m * sizeof(double))
    w.xn = <double *> malloc(m * sizeof(double))
    w.d = <double *> malloc(m * sizeof(double))
    w.g = <double *> malloc(m * sizeof(double))
    w.H = <double *> malloc(m * m * sizeof(double))
    w.Hff = <double *> malloc(m * m * sizeof(double))
    w.rhs = <double *> malloc(m * sizeof(double))
    w.lp1 = <double *> malloc(J * sizeof(double))
    w.lp2 = <double *> malloc(J * sizeof(double))
    w.lp1n = <double *> malloc(J * sizeof(double))
    w.lp2n = <double *> malloc(J * sizeof(double))
    w.th12 = <double *> malloc(k * sizeof(double))
    w.pi1 = <double *> malloc(k * sizeof(double))
    w.pi2 = <double *> malloc(k * sizeof(double))
    w.work = <int *> malloc(k * sizeof(int))
    w.free_idx = <int *> malloc(m * sizeof(int))
    if (w.x == NULL or w.xn == NULL or w.d == NULL or w.g == NULL
            or w.H == NULL or w.Hff == NULL or w.rhs == NULL
            or w.lp1 == NULL or w.lp2 == NULL or w.lp1n == NULL
            or w.lp2n == NULL or w.th12 == NULL or w.pi1 == NULL
            or w.pi2 == NULL or w.work == NULL or w.free_idx == NULL):
        return -1
    return 0


cdef void _ws_free(Workspace *w) noexcept nogil:
    free(w.x); free(w.xn); free(w.d); free(w.g); free(w.H); free(w.Hff)
    free(w.rhs); free(w.lp1); free(w.lp2); free(w.lp1n); free(w.lp2n)
    free(w.th12); free(w.pi1); free(w.pi2); free(w.work); free(w.free_idx)


cdef void _log_softmax_ref(const double *a, int k, double *out) noexcept nogil:
    # out has k + 1 entries; the last category has log-weight 0
    cdef int j
    cdef double mx = 0.0, s = 0.0, lse
    for j in range(k):
        if a[j] > mx:
            mx = a[j]
    for j in range(k):
        s += exp(a[j] - mx)
    s += exp(-mx)
    lse = mx + log(s)
    for j in range(k):
        out[j] = a[j] - lse
    out[k] = -lse


cdef double _loglik(const double *x, const double *N1, const double *N2,
                    Workspace *w, double *lp1, double *lp2) noexcept nogil:
    cdef int k = w.k, j
    cdef double acc = 0.0, ll = 0.0
    for j in range(k - 1, -1, -1):
        acc += x[k + j]
        w.th12[j] = x[j] + acc
    _log_softmax_ref(w.th12, k, lp1)
    _log_softmax_ref(x, k, lp2)
    for j in range(k + 1):
        ll += N1[j] * lp1[j] + N2[j] * lp2[j]
    return ll


cdef void _grad_hess(const double *N1, const double *N2, double M1,
                     double M2, Workspace *w) noexcept nogil:
    cdef int k = w.k, m = 2 * w.k, a, b
    cdef double acc, c1, c2
    cdef double *H = w.H
    for a in range(k):
        w.pi1[a] = exp(w.lp1[a])
        w.pi2[a] = exp(w.lp2[a])
    acc = 0.0
    for a in range(k):
        w.g[a] = N1[a] + N2[a] - M1 * w.pi1[a] - M2 * w.pi2[a]
        acc += N1[a] - M1 * w.pi1[a]
        w.g[k + a] = acc
    # top-left: A - M2 C2 with A = -M1 C1; stash A in the top-right block
    for a in range(k):
        for b in range(k):
            c1 = -w.pi1[a] * w.pi1[b]
            c2 = -w.pi2[a] * w.pi2[b]
            if a == b:
                c1 += w.pi1[a]
                c2 += w.pi2[a]
            H[a * m + b] = -M1 * c1 - M2 * c2
            H[a * m + k + b] = -M1 * c1
    # A U: cumulative sums along columns
    for a in range(k):
        for b in range(1, k):
            H[a * m + k + b] += H[a * m + k + b - 1]
    for a in range(k):
        for b in range(k):
            H[(k + b) * m + a] = H[a * m + k + b]
    # U^T A U: cumulative sums of A U along rows
    for b in range(k):
        H[k * m + k + b] = H[0 * m + k + b]
        for a in range(1, k):
            H[(k + a) * m + k + b] = H[(k + a - 1) * m + k + b] + H[a * m + k + b]


cdef int _cholesky_solve(double *A, double *b, int n) noexcept nogil:
    """Solve A y = b for symmetric positive definite A (overwritten)."""
    cdef int i, j, l
    cdef double s
    for j in range(n):
        s = A[j * n + j]
        for l in range(j):
            s -= A[j * n + l] * A[j * n + l]
        if not s > 0.0:
            return -1
        A[j * n + j] = sqrt(s)
        for i in range(j + 1, n):
            s = A[i * n + j]
            for l in range(j):
                s -= A[i * n + l] * A[j * n + l]
            A[i * n + j] = s / A[j * n + j]
    for i in range(n):
        s = b[i]
        for l in range(i):
            s -= A[i * n + l] * b[l]
        b[i] = s / A[i * n + i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for l in range(i + 1, n):
            s -= A[l * n + i] * b[l]
        b[i] = s / A[i * n + i]
    return 0


cdef int _newton_direction(Workspace *w, int nf) noexcept nogil:
    cdef int m = 2 * w.k, a, b, attempt
    cdef double ridge = 0.0, scale = 0.0
    for a in range(nf):
        if -w.H[w.free_idx[a] * m + w.free_idx[a]] > scale:
            scale = -w.H[w.free_idx[a] * m + w.free_idx[a]]
    if scale < 1.0:
        scale = 1.0
    for attempt in range(8):
        for a in range(nf):
            for b in range(nf):
                w.Hff[a * nf + b] = -w.H[w.free_idx[a] * m + w.free_idx[b]]
            w.Hff[a * nf + a] += ridge
            w.rhs[a] = w.g[w.free_idx[a]]
        if _cholesky_solve(w.Hff, w.rhs, nf) == 0:
            return 0
        ridge = scale * 1e-12 if ridge == 0.0 else ridge * 100.0
    return -1


cdef int _fit_core(const double *N1, const double *N2, Workspace *w,
                   double kkt_tol, int max_iter, int *iters_out,
                   double *grad_norm_out, double *ll_out) noexcept nogil:
    cdef int k = w.k, m = 2 * w.k, j, nf, block, best, h, accepted
    cdef int status = 1, iterations = 0
    cdef double M1 = 0.0, M2 = 0.0, ll, ll_new, gn, slope, alpha, alpha_max
    cdef double step, slack, gbest
    cdef double *tmp
    for j in range(k + 1):
        M1 += N1[j]
        M2 += N2[j]
    for j in range(k):
        w.work[j] = 1 if w.x[k + j] <= 0.0 else 0
    ll = _loglik(w.x, N1, N2, w, w.lp1, w.lp2)
    _grad_hess(N1, N2, M1, M2, w)
    gn = INFINITY
    while iterations < max_iter:
        nf = 0
        gn = 0.0
        for j in range(m):
            if j < k or not w.work[j - k]:
                w.free_idx[nf] = j
                nf += 1
                if fabs(w.g[j]) > gn or gn != gn:
                    gn = fabs(w.g[j])
                if w.g[j] != w.g[j]:
                    gn = w.g[j]
        if gn <= kkt_tol:
            best = -1
            gbest = -INFINITY
            for j in range(k):
                if w.work[j] and w.g[k + j] > gbest:
                    gbest = w.g[k + j]
                    best = j
            if best >= 0 and gbest > kkt_tol:
                w.work[best] = 0
                continue
            status = 0
            break
        if not (gn < INFINITY):
            status = 2
            break
        iterations += 1
        if _newton_direction(w, nf) != 0:
            status = 2
            break
        for j in range(m):
            w.d[j] = 0.0
        slope = 0.0
        for j in range(nf):
            w.d[w.free_idx[j]] = w.rhs[j]
            slope += w.g[w.free_idx[j]] * w.rhs[j]

        alpha_max = 1.0
        block = -1
        for j in range(k):
            if not w.work[j] and w.d[k + j] < 0.0:
                step = w.x[k + j] / -w.d[k + j]
                if step < alpha_max:
                    alpha_max = step
                    block = j
        alpha = alpha_max
        slack = 1e-13 * (1.0 + fabs(ll))
        accepted = 0
        for h in range(MAX_HALVINGS):
            for j in range(m):
                w.xn[j] = w.x[j] + alpha * w.d[j]
            for j in range(k):
                if w.xn[k + j] < 0.0:
                    w.xn[k + j] = 0.0
            if block >= 0 and alpha == alpha_max:
                w.xn[k + block] = 0.0
            ll_new = _loglik(w.xn, N1, N2, w, w.lp1n, w.lp2n)
            if ll_new >= ll + ARMIJO * alpha * slope - slack:
                accepted = 1
                break
            alpha *= 0.5
        if not accepted:
            status = 2
            break
        if block >= 0 and alpha == alpha_max:
            w.work[block] = 1
        tmp = w.x; w.x = w.xn; w.xn = tmp
        tmp = w.lp1; w.lp1 = w.lp1n; w.lp1n = tmp
        tmp = w.lp2; w.lp2 = w.lp2n; w.lp2n = tmp
        ll = ll_new
        _grad_hess(N1, N2, M1, M2, w)
    iters_out[0] = iterations
    grad_norm_out[0] = gn
    ll_out[0] = ll
    return status


cdef void _theta_to_x(const double *theta, Workspace *w) noexcept nogil:
    cdef int k = w.k, j
    for j in range(k):
        w.x[j] = theta[j]
        if j < k - 1:
            w.x[k + j] = theta[k + j] - theta[k + j + 1]
        else:
            w.x[k + j] = theta[k + j]
        if w.x[k + j] < 0.0:
            w.x[k + j] = 0.0


cdef void _x_to_theta(Workspace *w, double *theta) noexcept nogil:
    cdef int k = w.k, j
    cdef double acc = 0.0
    for j in range(k):
        theta[j] = w.x[j]
    for j in range(k - 1, -1, -1):
        acc += w.x[k + j]
        theta[k + j] = acc


def fit_order_restricted(counts, theta0, double kkt_tol=1e-8,
                         double feas_tol=1e-8, int max_iter=250):
    """Maximize the product-multinomial loglikelihood subject to R theta >= 0.

    Returns ``(theta, multipliers, active, iterations, status, grad_norm)``.
    """
    cdef double[:, ::1] N = np.ascontiguousarray(counts, dtype=np.float64)
    cdef double[::1] t0 = np.ascontiguousarray(theta0, dtype=np.float64)
    cdef int J = N.shape[1], k = J - 1, j, it = 0, status
    cdef double gn = 0.0, ll = 0.0
    cdef Workspace w
    if N.shape[0] != 2 or J < 2 or t0.shape[0] != 2 * k:
        raise ValueError("counts must be (2, J) and theta0 of length 2(J-1)")
    theta = np.empty(2 * k)
    mult = np.zeros(k)
    active = np.zeros(k, dtype=bool)
    cdef double[::1] th = theta
    cdef double[::1] mu = mult
    if _ws_alloc(&w, J) != 0:
        _ws_free(&w)
        raise MemoryError()
    try:
        _theta_to_x(&t0[0], &w)
        with nogil:
            status = _fit_core(&N[0, 0], &N[1, 0], &w, kkt_tol, max_iter,
                               &it, &gn, &ll)
        _x_to_theta(&w, &th[0])
        for j in range(k):
            if w.work[j] or w.x[k + j] <= feas_tol:
                active[j] = True
                mu[j] = w.g[k + j]
    finally:
        _ws_free(&w)
    return theta, mult, active, it, status, gn


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------


cdef double _phi_term(double p, double q, double lam) noexcept nogil:
    cdef double x = p / q
    if fabs(lam) <= _LTOL:
        return q * (x * log(x) - x + 1.0)
    if fabs(lam + 1.0) <= _LTOL:
        return q * (-log(x) + x - 1.0)
    return q * (x * expm1(lam * log(x)) - lam * (x - 1.0)) / (lam * (lam + 1.0))


cdef void _pd_stats(const double *raw, const double *pt, const double *ph,
                    int c, const double *lambdas, int L, double *T,
                    double *S) noexcept nogil:
    cdef int i, l
    cdef double n = 0.0, pbar, a, b, lam, tsum, ssum
    for i in range(c):
        n += raw[i]
    for l in range(L):
        lam = lambdas[l]
        tsum = 0.0
        ssum = 0.0
        for i in range(c):
            ssum += _phi_term(pt[i], ph[i], lam)
            if raw[i] <= 0.0:
                continue
            pbar = raw[i] / n
            a = log(pbar / ph[i])
            b = log(pbar / pt[i])
            if fabs(lam) <= _LTOL:
                tsum += pbar * (a - b)
            elif fabs(lam + 1.0) <= _LTOL:
                tsum += -ph[i] * a + pt[i] * b
            else:
                tsum += pbar * (expm1(lam * a) - expm1(lam * b))
        if fabs(lam) > _LTOL and fabs(lam + 1.0) > _LTOL:
            tsum /= lam * (lam + 1.0)
        T[l] = 2.0 * n * tsum
        S[l] = 2.0 * n * (ssum if ssum > 0.0 else 0.0)


def power_divergence_stats(raw, p_tilde, p_hat, lambdas):
    """T_lambda and S_lambda for each lambda (zero-count cells skipped in T)."""
    cdef double[::1] r = np.ascontiguousarray(raw, dtype=np.float64).ravel()
    cdef double[::1] pt = np.ascontiguousarray(p_tilde, dtype=np.float64)
    cdef double[::1] ph = np.ascontiguousarray(p_hat, dtype=np.float64)
    cdef double[::1] lam = np.ascontiguousarray(
        np.atleast_1d(lambdas), dtype=np.float64)
    T = np.empty(lam.shape[0])
    S = np.empty(lam.shape[0])
    cdef double[::1] Tv = T
    cdef double[::1] Sv = S
    _pd_stats(&r[0], &pt[0], &ph[0], r.shape[0], &lam[0], lam.shape[0],
              &Tv[0], &Sv[0])
    return T, S


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------


cdef double _chi2_sf(double x, int df) noexcept nogil:
    cdef double half, q, term
    cdef int k
    if x <= 0.0:
        return 1.0
    half = 0.5 * x
    if df % 2:
        q = erfc(sqrt(half))
        term = exp(-half) * sqrt(half) / tgamma(1.5)
        k = 1
    else:
        q = exp(-half)
        term = q * half
        k = 2
    while k < df:
        q += term
        k += 2
        term *= half / (0.5 * k)
    return q if q < 1.0 else 1.0


def chi2_sf(double x, int df):
    """Upper tail of a chi-square with integer ``df >= 1``."""
    return _chi2_sf(x, df)


def chibar_sf(double t, weights):
    """Chi-bar-squared upper tail; ``weights[j]`` multiplies chi2 with
    ``len(weights) - 1 - j`` degrees of freedom."""
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef int top = w.shape[0] - 1, j
    cdef double total = 0.0
    if not t > 0.0:
        return 1.0
    for j in range(top):
        total += w[j] * _chi2_sf(t, top - j)
    if total < 0.0:
        return 0.0
    return total if total < 1.0 else 1.0


def norm_cdf(double z):
    return 0.5 * erfc(-z / sqrt(2.0))


# --------------------------------------------------------------------------
# batch driver
# --------------------------------------------------------------------------


def analyze_batch(tables, lambdas, double eps=1e-5, double kkt_tol=1e-8,
                  double feas_tol=1e-8, int max_iter=250):
    """Fit and compute T/S statistics for a stack of tables.

    Returns ``(T, S, status, iterations)``; failed rows carry NaN.
    """
    cdef double[:, :, ::1] tab = np.ascontiguousarray(tables, dtype=np.float64)
    cdef double[::1] lam = np.ascontiguousarray(
        np.atleast_1d(lambdas), dtype=np.float64)
    cdef Py_ssize_t R = tab.shape[0], r
    cdef int J = tab.shape[2], k = J - 1, L = lam.shape[0], i, j, s, st = 0
    cdef int it = 0
    cdef double gn, ll, n1, n2, n, colsum
    cdef double starts[3]
    starts[0] = 0.0; starts[1] = 0.1; starts[2] = -0.1
    T = np.full((R, L), np.nan)
    S = np.full((R, L), np.nan)
    status = np.empty(R, dtype=np.int64)
    iters = np.zeros(R, dtype=np.int64)
    cdef double[:, ::1] Tv = T
    cdef double[:, ::1] Sv = S
    cdef long long[::1] stv = status
    cdef long long[::1] itv = iters
    cdef double[:, ::1] adj = np.empty((2, J))
    cdef double[::1] raw = np.empty(2 * J)
    cdef double[::1] theta0 = np.empty(2 * k)
    cdef double[::1] theta = np.empty(2 * k)
    cdef double[::1] pt = np.empty(2 * J)
    cdef double[::1] ph = np.empty(2 * J)
    cdef double[::1] tmp = np.empty(J)
    cdef Workspace w
    if _ws_alloc(&w, J) != 0:
        _ws_free(&w)
        raise MemoryError()
    try:
        with nogil:
            for r in range(R):
                n1 = 0.0
                n2 = 0.0
                for j in range(J):
                    raw[j] = tab[r, 0, j]
                    raw[J + j] = tab[r, 1, j]
                    n1 += raw[j]
                    n2 += raw[J + j]
                    adj[0, j] = raw[j] if raw[j] > 0.0 else eps
                    adj[1, j] = raw[J + j] if raw[J + j] > 0.0 else eps
                n = n1 + n2
                for s in range(3):
                    for j in range(2 * k):
                        theta0[j] = starts[s]
                    _theta_to_x(&theta0[0], &w)
                    st = _fit_core(&adj[0, 0], &adj[1, 0], &w, kkt_tol,
                                   max_iter, &it, &gn, &ll)
                    itv[r] += it
                    if st == 0:
                        break
                stv[r] = st
                if st != 0:
                    continue
                _x_to_theta(&w, &theta[0])
                for j in range(k):
                    tmp[j] = theta[j] + theta[k + j]
                _log_softmax_ref(&tmp[0], k, &pt[0])
                _log_softmax_ref(&theta[0], k, &pt[J])
                colsum = 0.0
                for j in range(J):
                    colsum += adj[0, j] + adj[1, j]
                for j in range(J):
                    pt[j] = exp(pt[j]) * (n1 / n)
                    pt[J + j] = exp(pt[J + j]) * (n2 / n)
                    ph[j] = (adj[0, j] + adj[1, j]) / colsum * (n1 / n)
                    ph[J + j] = (adj[0, j] + adj[1, j]) / colsum * (n2 / n)
                _pd_stats(&raw[0], &pt[0], &ph[0], 2 * J, &lam[0], L,
                          &Tv[r, 0], &Sv[r, 0])
    finally:
        _ws_free(&w)
    return T, S, status, iters
