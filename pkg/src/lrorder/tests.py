"""Hypothesis tests for likelihood ratio ordering of two rows.

Provides the two power-divergence families (``T`` compares the empirical
vector with both fits, ``S`` measures the divergence between the fits),
their chi-bar-squared p-values, the Wilcoxon mid-rank test and the closed
forms available for 2 x 2 tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .chibar import (
    ChiBarWeights,
    HMatrix,
    chibar_pvalue,
    chi2_sf,
    h_matrix,
    weights_closed_form,
    weights_monte_carlo,
)
from .errors import DegenerateTableError, InvalidDimensionError
from .estimation import (
    RestrictedFit,
    SolverOptions,
    mle_null,
    mle_restricted,
    require_converged,
)
from .table_model import ContingencyTable

#: The nine indices reported for the worked example.
DEFAULT_LAMBDAS = (-1.5, -1.0, -0.5, 0.0, 2.0 / 3.0, 1.0, 1.5, 2.0, 3.0)

FAMILIES = ("T", "S", "Wilcoxon", "G2_2x2", "Gbar2_2x2", "Gtilde2_2x2")


@dataclass(frozen=True)
class WeightOptions:
    method: str = "closed"
    mc_reps: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("closed", "mc"):
            raise ValueError("method must be 'closed' or 'mc'")


@dataclass
class TestReport:
    """Outcome of one test on one table.

    ``pvalue`` is ``None`` when the restricted fit failed; the reason is in
    ``diagnostics``.
    """

    __test__ = False  # keep pytest from collecting this class

    table: ContingencyTable
    family: str
    statistic: float | None
    pvalue: float | None
    lam: float | None = None
    weights: ChiBarWeights | None = None
    fit_null: RestrictedFit | None = None
    fit_restricted: RestrictedFit | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"family": self.family, "lambda": self.lam,
               "statistic": self.statistic, "pvalue": self.pvalue}
        if self.weights is not None:
            out["weights"] = self.weights.to_dict()
        if self.fit_restricted is not None:
            fr = self.fit_restricted
            out["restricted"] = {
                "theta": fr.theta.tolist(), "p": fr.p.tolist(),
                "loglik": fr.loglik, "active_set": list(fr.active_set),
                "kkt_multipliers": fr.kkt_multipliers.tolist(),
                "converged": fr.converged, "iterations": fr.iterations}
        if self.fit_null is not None:
            out["null"] = {"theta": self.fit_null.theta.tolist(),
                           "p": self.fit_null.p.tolist(),
                           "loglik": self.fit_null.loglik}
        out["diagnostics"] = self.diagnostics
        return out


def plug_in_h(table: ContingencyTable, opts: SolverOptions | None = None
              ) -> HMatrix:
    """H evaluated at the pooled category probabilities and ``n_i / n``."""
    null = mle_null(table, opts)
    J = table.J
    pi = null.p[:J] / null.p[:J].sum()
    nu1 = table.n1 / table.n
    return h_matrix(pi, nu1, 1.0 - nu1)


def plug_in_weights(table: ContingencyTable,
                    weight_opts: WeightOptions | None = None,
                    opts: SolverOptions | None = None) -> ChiBarWeights:
    """Chi-bar weights of the local test. Closed forms are used up to
    ``J = 4``; larger tables always go through Monte Carlo."""
    weight_opts = weight_opts or WeightOptions()
    h = plug_in_h(table, opts)
    if weight_opts.method == "closed" and table.J <= 4:
        return weights_closed_form(h)
    return weights_monte_carlo(h, weight_opts.mc_reps, weight_opts.seed)


def _statistics(null, restricted, table, lambdas):
    return _backend.power_divergence_stats(
        table.counts.ravel().astype(float), restricted.p, null.p,
        np.asarray(lambdas, dtype=float))


def _fits(table, opts):
    return mle_null(table, opts), mle_restricted(table, opts)


def t_statistic(table: ContingencyTable, lam: float,
                opts: SolverOptions | None = None) -> float:
    """``T_lambda``: power divergence of the empirical vector from the null
    fit minus that from the restricted fit, scaled by ``2n``."""
    null, restricted = _fits(table, opts)
    require_converged(restricted)
    return float(_statistics(null, restricted, table, [lam])[0][0])


def s_statistic(table: ContingencyTable, lam: float,
                opts: SolverOptions | None = None) -> float:
    """``S_lambda = 2n d_lambda(p_restricted, p_null)``."""
    null, restricted = _fits(table, opts)
    require_converged(restricted)
    return float(_statistics(null, restricted, table, [lam])[1][0])


def analyze(table: ContingencyTable, lambdas=DEFAULT_LAMBDAS,
            families=("T", "S"), weight_opts: WeightOptions | None = None,
            opts: SolverOptions | None = None) -> list[TestReport]:
    """Run the requested families over several indices, fitting once."""
    for fam in families:
        if fam not in ("T", "S"):
            raise ValueError(f"unknown family {fam!r}")
    lambdas = [float(x) for x in lambdas]
    if np.count_nonzero(table.column_totals) < 2:
        raise DegenerateTableError(
            "all observations fall in one category; no ordering to test")
    null, restricted = _fits(table, opts)
    weights = plug_in_weights(table, weight_opts, opts)
    diag = {"solver": restricted.diagnostics}
    if not restricted.converged:
        return [TestReport(table, fam, None, None, lam, weights, null,
                           restricted, dict(diag, error="solver failure"))
                for fam in families for lam in lambdas]
    T, S = _statistics(null, restricted, table, lambdas)
    if len(restricted.active_set) == table.J - 1:
        # both fits coincide; drop rounding noise that would move p off 1
        T, S = np.zeros_like(T), np.zeros_like(S)
    values = {"T": T, "S": S}
    return [TestReport(table, fam, float(values[fam][i]),
                       chibar_pvalue(values[fam][i], weights), lam, weights,
                       null, restricted, dict(diag))
            for fam in families for i, lam in enumerate(lambdas)]


def run_test(table: ContingencyTable, lam: float, family: str = "T",
             weight_opts: WeightOptions | None = None,
             opts: SolverOptions | None = None) -> TestReport:
    """One statistic with its chi-bar-squared p-value."""
    return analyze(table, [lam], [family], weight_opts, opts)[0]


# --------------------------------------------------------------------------
# Wilcoxon
# --------------------------------------------------------------------------


def midranks(column_totals) -> np.ndarray:
    col = np.asarray(column_totals, dtype=float)
    return np.cumsum(col) - col + (col + 1.0) / 2.0


def wilcoxon_midrank(table: ContingencyTable, sided: str = "one"
                     ) -> TestReport:
    """Rank-sum test with mid-ranks for tied categories.

    ``W`` is the rank sum of row 1. Under the alternative row 1 sits in
    lower categories, so the one-sided p-value is the lower normal tail.
    """
    if sided not in ("one", "two"):
        raise ValueError("sided must be 'one' or 'two'")
    n, n1, n2 = table.n, table.n1, table.n2
    if n < 2:
        raise DegenerateTableError("at least two observations are needed")
    col = table.column_totals.astype(float)
    W = float(midranks(col) @ table.counts[0])
    mu = n1 * (n + 1) / 2.0
    ties = float(np.sum(col ** 3 - col)) / (n * (n - 1))
    var = n1 * n2 * (n + 1 - ties) / 12.0
    if not var > 0:
        raise DegenerateTableError("all observations share one category")
    z = (W - mu) / math.sqrt(var)
    if sided == "one":
        p = _backend.norm_cdf(z)
    else:
        p = 2.0 * _backend.norm_cdf(-abs(z))
    return TestReport(table, "Wilcoxon", W, float(min(p, 1.0)),
                      diagnostics={"z": z, "mean": mu, "variance": var,
                                   "sided": sided})


# --------------------------------------------------------------------------
# 2 x 2 closed forms
# --------------------------------------------------------------------------


def two_sided_g2(counts) -> float:
    """Likelihood ratio statistic for equality against any difference."""
    N = np.asarray(counts, dtype=float)
    n = N.sum()
    expected = np.outer(N.sum(axis=1), N.sum(axis=0)) / n
    pos = N > 0
    return float(2.0 * np.sum(N[pos] * np.log(N[pos] / expected[pos])))


def two_by_two_suite(table: ContingencyTable
                     ) -> tuple[TestReport, TestReport, TestReport]:
    """One-sided ``G2``, two-sided ``Gbar2`` and composite-null ``Gtilde2``.

    The one-sided forms use the ``(1/2, 1/2)`` mixture of a point mass at
    zero and chi-square(1); a statistic of zero gets p-value 1.
    """
    if table.J != 2:
        raise InvalidDimensionError("the 2 x 2 suite needs J = 2")
    N = table.counts
    gbar = two_sided_g2(N)
    prop1 = N[0, 0] / table.n1
    prop2 = N[1, 0] / table.n2
    # compare n11 n2 with n21 n1 to avoid rounding in the ratios
    left, right = int(N[0, 0]) * table.n2, int(N[1, 0]) * table.n1
    g2 = gbar if left > right else 0.0
    gtilde = gbar if left >= right else 0.0

    def one_sided(stat):
        return 0.5 * chi2_sf(stat, 1) if stat > 0 else 1.0

    diag = {"prop1": prop1, "prop2": prop2}
    return (
        TestReport(table, "G2_2x2", g2, one_sided(g2), diagnostics=diag),
        TestReport(table, "Gbar2_2x2", gbar, chi2_sf(gbar, 1),
                   diagnostics=diag),
        TestReport(table, "Gtilde2_2x2", gtilde, one_sided(gtilde),
                   diagnostics=diag),
    )
