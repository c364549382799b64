"""Chi-bar-squared null distribution of the order-restricted statistics.

Weight ``w[j]`` is the probability that exactly ``j`` of the ``J - 1``
constraints are active in the limiting projection problem and multiplies a
chi-square with ``(J - 1) - j`` degrees of freedom.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DomainError, InvalidDimensionError, NumericalRankError
from .table_model import conditional_probs, difference_matrix

_MC_BLOCK = 1 << 16


def worker_count() -> int:
    """Number of worker threads, capped by the ``LRO_THREADS`` variable."""
    n = os.cpu_count() or 1
    cap = os.environ.get("LRO_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


@dataclass(frozen=True)
class HMatrix:
    h: np.ndarray
    nu1: float
    nu2: float
    pi: np.ndarray

    @property
    def correlation(self) -> np.ndarray:
        d = np.sqrt(np.diag(self.h))
        return self.h / np.outer(d, d)


@dataclass(frozen=True)
class ChiBarWeights:
    w: np.ndarray
    method: str
    mc_reps: int | None = None

    def __len__(self):
        return len(self.w)

    def to_dict(self):
        return {"w": [float(x) for x in self.w], "method": self.method,
                "mc_reps": self.mc_reps}


def _check_fractions(nu1, nu2):
    if not (nu1 > 0 and nu2 > 0) or abs(nu1 + nu2 - 1.0) > 1e-12:
        raise DomainError("sampling fractions must be positive and sum to 1")


def fisher_information(theta0, nu1: float, nu2: float) -> np.ndarray:
    """Per-observation Fisher information of ``theta`` for sampling
    fractions ``(nu1, nu2)``.

    Blocks are ``[[nu1 C1 + nu2 C2, nu1 C1], [nu1 C1, nu1 C1]]`` where
    ``C_i = diag(pi_i) - pi_i pi_i^T`` on the first ``J - 1`` categories.
    """
    _check_fractions(nu1, nu2)
    pi1, pi2 = conditional_probs(theta0)
    if not (np.all(pi1 > 0) and np.all(pi2 > 0)):
        raise DomainError("category probabilities must be positive")
    k = pi1.size - 1
    a, b = pi1[:k], pi2[:k]
    C1 = np.diag(a) - np.outer(a, a)
    C2 = np.diag(b) - np.outer(b, b)
    return np.block([[nu1 * C1 + nu2 * C2, nu1 * C1],
                     [nu1 * C1, nu1 * C1]])


def h_matrix(pi, nu1: float, nu2: float) -> HMatrix:
    """Asymptotic covariance of the scaled local log odds ratios under
    independence, for common category probabilities ``pi``."""
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size < 2:
        raise InvalidDimensionError("pi must be a vector with J >= 2 entries")
    if not np.all(pi > 0) or abs(pi.sum() - 1.0) > 1e-10:
        raise DomainError("pi must be strictly positive and sum to 1")
    _check_fractions(nu1, nu2)
    k = pi.size - 1
    scale = 1.0 / (nu1 * nu2)
    h = np.zeros((k, k))
    for j in range(k):
        h[j, j] = (pi[j] + pi[j + 1]) / (pi[j] * pi[j + 1]) * scale
        if j + 1 < k:
            h[j, j + 1] = h[j + 1, j] = -scale / pi[j + 1]
    return HMatrix(h=h, nu1=float(nu1), nu2=float(nu2), pi=pi.copy())


def h_from_fisher(theta0, nu1: float, nu2: float) -> np.ndarray:
    """``R I_F^{-1} R^T`` computed by brute force; a check on :func:`h_matrix`."""
    info = fisher_information(theta0, nu1, nu2)
    k = info.shape[0] // 2
    R = np.hstack([np.zeros((k, k)), difference_matrix(k)])
    return R @ np.linalg.solve(info, R.T)


def _as_h(h):
    return h.h if isinstance(h, HMatrix) else np.asarray(h, dtype=float)


def _safe_acos(x):
    return math.acos(min(1.0, max(-1.0, x)))


def weights_closed_form(h) -> ChiBarWeights:
    """Exact weights for ``J <= 4`` from orthant probabilities of at most
    trivariate normals."""
    H = _as_h(h)
    k = H.shape[0]
    if k == 1:
        w = np.array([0.5, 0.5])
    elif k == 2:
        rho = H[0, 1] / math.sqrt(H[0, 0] * H[1, 1])
        w2 = _safe_acos(rho) / (2 * math.pi)
        w = np.array([0.5 - w2, 0.5, w2])
    elif k == 3:
        d = np.sqrt(np.diag(H))
        r = H / np.outer(d, d)
        r12, r13, r23 = r[0, 1], r[0, 2], r[1, 2]

        def partial(a, b, c):
            return (a - b * c) / math.sqrt((1 - b * b) * (1 - c * c))

        w0 = (2 * math.pi - _safe_acos(r12) - _safe_acos(r13)
              - _safe_acos(r23)) / (4 * math.pi)
        w1 = (3 * math.pi - _safe_acos(partial(r12, r13, r23))
              - _safe_acos(partial(r13, r12, r23))
              - _safe_acos(partial(r23, r12, r13))) / (4 * math.pi)
        w = np.array([w0, w1, 0.5 - w0, 0.5 - w1])
    else:
        raise InvalidDimensionError(
            "closed-form weights need J <= 4; use weights_monte_carlo")
    return ChiBarWeights(w=np.clip(w, 0.0, 1.0), method="closed_form")


def _orthant_mc(cov, reps, seed, subset_index, pool):
    """Monte Carlo estimate of ``P(Z >= 0)`` for ``Z ~ N(0, cov)``."""
    dim = cov.shape[0]
    if dim == 0:
        return 1.0
    if dim == 1:
        return 0.5
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericalRankError("covariance submatrix is not positive "
                                 "definite") from None
    pairs = (reps + 1) // 2
    blocks = [(b, min(_MC_BLOCK, pairs - b * _MC_BLOCK))
              for b in range((pairs + _MC_BLOCK - 1) // _MC_BLOCK)]

    def run(block):
        index, size = block
        ss = np.random.SeedSequence([seed, subset_index, index])
        rng = np.random.Generator(np.random.Philox(ss))
        z = rng.standard_normal((size, dim)) @ L.T
        # antithetic partner -z lands in the opposite orthant
        return int(np.all(z >= 0, axis=1).sum() + np.all(z <= 0, axis=1).sum())

    hits = sum(pool.map(run, blocks)) if pool else sum(map(run, blocks))
    return hits / (2 * pairs)


def weights_monte_carlo(h, reps: int = 1_000_000, seed: int = 0
                        ) -> ChiBarWeights:
    """Weights for any ``J`` by simulating the orthant probabilities.

    For every subset ``S`` of constraints the product
    ``P(N(0, H_SS^{-1}) >= 0) * P(N(0, H_CC - H_CS H_SS^{-1} H_SC) >= 0)``
    is accumulated into ``w[|S|]``; the vector is renormalized at the end.
    Draws come from Philox streams keyed by ``(seed, subset, block)`` so the
    result does not depend on the number of worker threads.
    """
    H = _as_h(h)
    if reps < 10_000:
        raise DomainError("weights_monte_carlo needs reps >= 10000")
    k = H.shape[0]
    w = np.zeros(k + 1)
    workers = worker_count()
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        subset_index = 0
        for size in range(k + 1):
            for S in itertools.combinations(range(k), size):
                S = list(S)
                C = [j for j in range(k) if j not in S]
                if S:
                    H_SS = H[np.ix_(S, S)]
                    try:
                        inv_SS = np.linalg.inv(H_SS)
                    except np.linalg.LinAlgError:
                        raise NumericalRankError(
                            f"H submatrix on {S} is singular") from None
                    if np.linalg.cond(H_SS) > 1e12:
                        raise NumericalRankError(
                            f"H submatrix on {S} is numerically singular")
                    cond = (H[np.ix_(C, C)]
                            - H[np.ix_(C, S)] @ inv_SS @ H[np.ix_(S, C)])
                else:
                    inv_SS = np.zeros((0, 0))
                    cond = H
                prob = (_orthant_mc(inv_SS, reps, seed, 2 * subset_index,
                                    pool)
                        * _orthant_mc(cond, reps, seed, 2 * subset_index + 1,
                                      pool))
                w[size] += prob
                subset_index += 1
    finally:
        if pool:
            pool.shutdown()
    w = w / w.sum()
    return ChiBarWeights(w=w, method="monte_carlo", mc_reps=int(reps))


def chi2_sf(x: float, df: int) -> float:
    """Upper tail probability of a chi-square with integer ``df``."""
    if df < 1 or int(df) != df:
        raise DomainError("df must be a positive integer")
    return float(_backend.chi2_sf(float(x), int(df)))


def _weights_array(w):
    return np.asarray(w.w if isinstance(w, ChiBarWeights) else w, dtype=float)


def chibar_pvalue(t: float, w) -> float:
    """``P(chi-bar^2 >= t)``; equal to 1 whenever ``t <= 0``."""
    return float(_backend.chibar_sf(float(t), _weights_array(w)))


# --------------------------------------------------------------------------
# vectorized helpers for the simulation engine
# --------------------------------------------------------------------------

_erfc = np.frompyfunc(math.erfc, 1, 1)


def chi2_sf_array(x, df: int) -> np.ndarray:
    """Vectorized :func:`chi2_sf`; entries with ``x <= 0`` map to 1."""
    x = np.asarray(x, dtype=float)
    half = np.where(x > 0, 0.5 * x, 0.0)
    if df % 2:
        q = _erfc(np.sqrt(half)).astype(float)
        term = np.exp(-half) * np.sqrt(half) / math.gamma(1.5)
        k = 1
    else:
        q = np.exp(-half)
        term = q * half
        k = 2
    while k < df:
        q = q + term
        k += 2
        term = term * half / (0.5 * k)
    return np.where(x > 0, np.minimum(q, 1.0), 1.0)


def chibar_pvalues(t, weights) -> np.ndarray:
    """p-values for statistics ``t`` (shape ``(R,)``) with per-row weights
    (shape ``(R, J)``) or one shared weight vector."""
    t = np.asarray(t, dtype=float)
    W = np.asarray(weights, dtype=float)
    if W.ndim == 1:
        W = np.broadcast_to(W, t.shape + W.shape)
    top = W.shape[-1] - 1
    out = np.zeros(t.shape)
    for j in range(top):
        out += W[..., j] * chi2_sf_array(t, top - j)
    out = np.clip(out, 0.0, 1.0)
    out[~(t > 0)] = 1.0
    out[np.isnan(t)] = np.nan
    return out


def closed_form_weights_batch(pi, nu1: float, nu2: float) -> np.ndarray:
    """Closed-form weights for many ``pi`` rows at once (``J <= 4``).

    The ``1/(nu1 nu2)`` factor of ``H`` cancels in every correlation, so
    only ``pi`` matters.
    """
    pi = np.asarray(pi, dtype=float)
    R, J = pi.shape
    k = J - 1
    if k == 1:
        return np.tile([0.5, 0.5], (R, 1))
    diag = (pi[:, :-1] + pi[:, 1:]) / (pi[:, :-1] * pi[:, 1:])
    off = -1.0 / pi[:, 1:-1]
    if k == 2:
        rho = off[:, 0] / np.sqrt(diag[:, 0] * diag[:, 1])
        w2 = np.arccos(np.clip(rho, -1, 1)) / (2 * math.pi)
        return np.column_stack([0.5 - w2, np.full(R, 0.5), w2])
    if k == 3:
        d = np.sqrt(diag)
        r12 = off[:, 0] / (d[:, 0] * d[:, 1])
        r23 = off[:, 1] / (d[:, 1] * d[:, 2])
        r13 = np.zeros(R)

        def partial(a, b, c):
            return np.clip((a - b * c) / np.sqrt((1 - b * b) * (1 - c * c)),
                           -1, 1)

        acos = np.arccos
        w0 = (2 * math.pi - acos(r12) - acos(r13) - acos(r23)) / (4 * math.pi)
        w1 = (3 * math.pi - acos(partial(r12, r13, r23))
              - acos(partial(r13, r12, r23))
              - acos(partial(r23, r12, r13))) / (4 * math.pi)
        return np.column_stack([w0, w1, 0.5 - w0, 0.5 - w1])
    raise InvalidDimensionError("closed-form weights need J <= 4")
