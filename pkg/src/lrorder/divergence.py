"""Power-divergence (Cressie-Read) phi-divergences between cell vectors.

``phi_lambda(x) = (x**(lam+1) - x - lam*(x - 1)) / (lam*(lam+1))`` with the
Kullback limits at ``lam = 0`` and ``lam = -1``. Every member has
``phi''(1) = 1``, so no extra normalization is needed in the statistics.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, InvalidDimensionError

#: Distance from 0 or -1 below which the analytic limit formula is used.
LAMBDA_LIMIT_TOL = 1e-9


def is_kullback(lam: float) -> bool:
    return abs(lam) <= LAMBDA_LIMIT_TOL


def is_reverse_kullback(lam: float) -> bool:
    return abs(lam + 1.0) <= LAMBDA_LIMIT_TOL


def phi(x, lam: float):
    """Evaluate ``phi_lambda`` elementwise for ``x >= 0``.

    ``phi(0)`` is ``1/(lam+1)`` for ``lam > -1`` and ``+inf`` otherwise.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x > 0
    xp = x[pos]
    logx = np.log(xp)
    if is_kullback(lam):
        out[pos] = xp * logx - xp + 1.0
        out[~pos] = 1.0
    elif is_reverse_kullback(lam):
        out[pos] = -logx + xp - 1.0
        out[~pos] = np.inf
    else:
        # x**(lam+1) - x == x * expm1(lam log x) keeps precision near lam=0
        num = xp * np.expm1(lam * logx) - lam * (xp - 1.0)
        out[pos] = num / (lam * (lam + 1.0))
        out[~pos] = 1.0 / (lam + 1.0) if lam > -1.0 else np.inf
    return out


def _check_pair(p, q):
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise InvalidDimensionError(
            f"length mismatch: {p.size} vs {q.size}")
    if np.any(p < 0):
        raise DomainError("p must be nonnegative")
    if not np.all(q > 0):
        raise DomainError("q must be strictly positive")
    return p, q


def phi_divergence(p, q, lam: float) -> float:
    """Power divergence ``sum q * phi_lambda(p / q)``.

    For probability vectors this equals
    ``(sum p**(lam+1) / q**lam - 1) / (lam (lam+1))``, ``sum p log(p/q)`` at
    ``lam = 0`` and ``sum q log(q/p)`` at ``lam = -1``.
    """
    p, q = _check_pair(p, q)
    terms = q * phi(p / q, lam)
    return float(max(terms.sum(), 0.0))


def kullback(p, q) -> float:
    return phi_divergence(p, q, 0.0)


def pearson(p, q) -> float:
    return phi_divergence(p, q, 1.0)


def hellinger_sq(p, q) -> float:
    """Squared Hellinger distance ``sum (sqrt(p) - sqrt(q))**2``."""
    p, q = _check_pair(p, q)
    return float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))
