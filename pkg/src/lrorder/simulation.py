"""Monte Carlo estimation of exact size and power.

Every replication draws from its own Philox stream whose counter is keyed by
the replication index, so results are identical for any chunking or number
of worker threads.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .chibar import (
    chibar_pvalues,
    chi2_sf_array,
    closed_form_weights_batch,
    h_matrix,
    weights_monte_carlo,
    worker_count,
)
from .errors import (
    ConvergenceError,
    DomainError,
    InvalidDimensionError,
    UndefinedEfficiencyError,
)
from .estimation import SolverOptions
from .tests import DEFAULT_LAMBDAS

CHUNK = 1000
MAX_FAILURE_RATE = 1e-3
_SIZE_TAG, _POWER_TAG = 0, 1


@dataclass(frozen=True)
class Scenario:
    """Sampling design of one simulation cell.

    Cell probabilities come from :func:`scenario_probs` unless ``probs`` is
    given. ``null_probs`` (default: uniform rows) is used for size runs.
    """

    name: str
    n1: int
    n2: int
    delta: float = 0.0
    J: int = 3
    reps: int = 25_000
    alpha: float = 0.05
    seed: int = 0
    probs: tuple | None = None
    null_probs: tuple | None = None

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise DomainError("sample sizes must be >= 1")
        if self.reps < 1:
            raise DomainError("reps must be >= 1")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if self.delta < 0:
            raise DomainError("delta must be >= 0")
        if self.J < 2:
            raise InvalidDimensionError("J must be >= 2")
        for name in ("probs", "null_probs"):
            value = getattr(self, name)
            if value is not None:
                arr = np.asarray(value, dtype=float)
                if arr.shape != (2, self.J):
                    raise InvalidDimensionError(
                        f"{name} must have shape (2, {self.J})")
                if np.any(arr < 0) or np.any(
                        np.abs(arr.sum(axis=1) - 1) > 1e-9):
                    raise DomainError(f"rows of {name} must be distributions")

    def cell_probs(self) -> np.ndarray:
        if self.probs is not None:
            return np.asarray(self.probs, dtype=float)
        return scenario_probs(self.delta, self.J)

    def null_scenario(self) -> "Scenario":
        return replace(self, delta=0.0, probs=self.null_probs)


def _design(name, n1, n2):
    return Scenario(name=name, n1=n1, n2=n2)


SCENARIOS = {
    "A": _design("A", 20, 4),
    "B": _design("B", 20, 10),
    "C": _design("C", 20, 16),
    "D": _design("D", 20, 20),
    "E": _design("E", 16, 20),
    "F": _design("F", 10, 20),
    "G": _design("G", 4, 20),
}


@dataclass
class PowerEstimate:
    """Rejection fractions ``p < alpha`` per statistic."""

    estimates: dict
    reps: int
    kind: str
    failures: int = 0
    scenario: Scenario | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def mc_se(self) -> dict:
        m = max(self.reps - self.failures, 1)
        return {k: math.sqrt(v * (1 - v) / m)
                for k, v in self.estimates.items()}


def scenario_probs(delta: float, J: int = 3) -> np.ndarray:
    """Rows ``pi_i`` with ``pi_ij`` proportional to ``1 + i (j - 1) delta``.

    Both rows are uniform at ``delta = 0`` and ``pi_2j / pi_1j`` grows with
    ``j`` for ``delta > 0``.
    """
    if delta < 0:
        raise DomainError("delta must be >= 0")
    j = np.arange(J, dtype=float)
    rows = np.vstack([1.0 + i * j * delta for i in (1, 2)])
    return rows / rows.sum(axis=1, keepdims=True)


def multinomial_sample(probs, n: int, rng: np.random.Generator) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if n == 0:
        return np.zeros(probs.size, dtype=np.int64)
    return rng.multinomial(n, probs / probs.sum())


def replication_rng(key, index: int, tag: int) -> np.random.Generator:
    """Generator for replication ``index``: fixed Philox key, counter
    ``(0, 0, index, tag)``."""
    return np.random.Generator(
        np.random.Philox(key=key, counter=[0, 0, int(index), int(tag)]))


def run_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def draw_tables(scenario: Scenario, start: int, stop: int, tag: int
                ) -> np.ndarray:
    probs = scenario.cell_probs()
    key = run_key(scenario.seed)
    out = np.empty((stop - start, 2, scenario.J), dtype=np.int64)
    for r in range(start, stop):
        rng = replication_rng(key, r, tag)
        out[r - start, 0] = multinomial_sample(probs[0], scenario.n1, rng)
        out[r - start, 1] = multinomial_sample(probs[1], scenario.n2, rng)
    return out


# --------------------------------------------------------------------------
# statistic names
# --------------------------------------------------------------------------

_PD_NAME = re.compile(r"^([TS])_(-?\d+(?:\.\d*)?(?:[eE]-?\d+)?)$")


def lambda_label(lam: float) -> str:
    return f"{float(lam):.6g}"


def pd_name(family: str, lam: float) -> str:
    return f"{family}_{lambda_label(lam)}"


def default_statistics(J: int, lambdas=DEFAULT_LAMBDAS) -> list[str]:
    names = [pd_name(f, lam) for f in ("T", "S") for lam in lambdas]
    for base in (("T", 0.0), ("S", 1.0)):
        if pd_name(*base) not in names:
            names.append(pd_name(*base))
    names += ["W", "W2"]
    if J == 2:
        names += ["G2", "Gbar2", "Gtilde2"]
    return names


def _parse_statistics(names, J):
    lambdas, pd = [], []
    for name in names:
        m = _PD_NAME.match(name)
        if m:
            lam = float(m.group(2))
            if lam not in lambdas:
                lambdas.append(lam)
            pd.append((name, m.group(1), lambdas.index(lam)))
        elif name in ("W", "W2"):
            continue
        elif name in ("G2", "Gbar2", "Gtilde2"):
            if J != 2:
                raise InvalidDimensionError(f"{name} needs J = 2")
        else:
            raise ValueError(f"unknown statistic {name!r}")
    return lambdas, pd


# --------------------------------------------------------------------------
# vectorized p-values for a chunk of tables
# --------------------------------------------------------------------------


def _wilcoxon_pvalues(tables, sided):
    N = tables.astype(float)
    col = N.sum(axis=1)
    n1 = N[:, 0].sum(axis=1)
    n2 = N[:, 1].sum(axis=1)
    n = n1 + n2
    ranks = np.cumsum(col, axis=1) - col + (col + 1) / 2
    W = np.sum(ranks * N[:, 0], axis=1)
    ties = np.sum(col ** 3 - col, axis=1) / (n * (n - 1))
    var = n1 * n2 * (n + 1 - ties) / 12
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (W - n1 * (n + 1) / 2) / np.sqrt(var)
    z = np.where(var > 0, z, np.nan)
    erfc = np.frompyfunc(math.erfc, 1, 1)
    if sided == "one":
        arg = -z / math.sqrt(2)
        scale = 0.5
    else:
        arg = np.abs(z) / math.sqrt(2)
        scale = 1.0
    p = np.full(z.shape, np.nan)
    ok = ~np.isnan(z)
    p[ok] = scale * erfc(arg[ok]).astype(float)
    return p


def _two_by_two_pvalues(tables):
    N = tables.astype(float)
    n = N.sum(axis=(1, 2))
    expected = (N.sum(axis=2)[:, :, None] * N.sum(axis=1)[:, None, :]
                / n[:, None, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(N > 0, N * np.log(N / expected), 0.0)
    gbar = 2 * terms.sum(axis=(1, 2))
    left = tables[:, 0, 0] * tables[:, 1].sum(axis=1)
    right = tables[:, 1, 0] * tables[:, 0].sum(axis=1)
    half = 0.5 * chi2_sf_array(gbar, 1)
    return {
        "Gbar2": chi2_sf_array(gbar, 1),
        "G2": np.where((left > right) & (gbar > 0), half, 1.0),
        "Gtilde2": np.where((left >= right) & (gbar > 0), half, 1.0),
    }


def _chunk_weights(tables, eps, cache):
    adj = np.where(tables > 0, tables, eps).astype(float)
    col = adj.sum(axis=1)
    pi = col / col.sum(axis=1, keepdims=True)
    J = tables.shape[2]
    if J <= 4:
        return closed_form_weights_batch(pi, 0.5, 0.5)
    out = np.empty((tables.shape[0], J))
    for r in range(tables.shape[0]):
        key = tuple(col[r])
        if key not in cache:
            n1 = tables[r, 0].sum()
            nu1 = n1 / tables[r].sum()
            cache[key] = weights_monte_carlo(
                h_matrix(pi[r], nu1, 1 - nu1), 10_000, 0).w
        out[r] = cache[key]
    return out


def _chunk_pvalues(tables, names, lambdas, pd, opts, cache):
    out = {}
    failures = np.zeros(tables.shape[0], dtype=bool)
    if pd:
        T, S, status, _ = _backend.analyze_batch(
            tables.astype(float), np.asarray(lambdas), opts.zero_cell_eps,
            opts.kkt_tol, opts.feas_tol, opts.max_iter)
        failures = status != _backend.STATUS_OK
        W = _chunk_weights(tables, opts.zero_cell_eps, cache)
        for name, fam, idx in pd:
            stat = (T if fam == "T" else S)[:, idx]
            out[name] = chibar_pvalues(stat, W)
    if "W" in names:
        out["W"] = _wilcoxon_pvalues(tables, "one")
    if "W2" in names:
        out["W2"] = _wilcoxon_pvalues(tables, "two")
    if any(nm in names for nm in ("G2", "Gbar2", "Gtilde2")):
        g = _two_by_two_pvalues(tables)
        for nm in ("G2", "Gbar2", "Gtilde2"):
            if nm in names:
                out[nm] = g[nm]
    return out, failures


def estimate_size_power(scenario: Scenario, statistics=None,
                        opts: SolverOptions | None = None, progress=None
                        ) -> PowerEstimate:
    """Fraction of replications with p-value below ``scenario.alpha``.

    The result is a size estimate when both rows of the cell probabilities
    coincide and a power estimate otherwise. ``progress`` is called with a
    dict after every block of ``CHUNK`` replications, in order.
    """
    opts = opts or SolverOptions()
    names = list(statistics) if statistics else default_statistics(
        scenario.J)
    lambdas, pd = _parse_statistics(names, scenario.J)
    probs = scenario.cell_probs()
    kind = "size" if np.allclose(probs[0], probs[1], atol=0) else "power"
    tag = _SIZE_TAG if kind == "size" else _POWER_TAG
    bounds = [(s, min(s + CHUNK, scenario.reps))
              for s in range(0, scenario.reps, CHUNK)]
    cache = {}

    def work(bound):
        tables = draw_tables(scenario, bound[0], bound[1], tag)
        pvals, failed = _chunk_pvalues(tables, names, lambdas, pd, opts,
                                       cache)
        rejections = {nm: int(np.sum((pvals[nm] < scenario.alpha)
                                     & ~failed)) for nm in names}
        return rejections, int(failed.sum()), bound[1] - bound[0]

    totals = dict.fromkeys(names, 0)
    failures = done = 0
    workers = worker_count()
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        results = pool.map(work, bounds) if pool else map(work, bounds)
        for rejections, failed, count in results:
            for nm, v in rejections.items():
                totals[nm] += v
            failures += failed
            done += count
            if progress is not None:
                progress({"kind": kind, "completed": done,
                          "reps": scenario.reps, "failures": failures})
    finally:
        if pool:
            pool.shutdown()
    if failures > MAX_FAILURE_RATE * scenario.reps:
        raise ConvergenceError(
            f"{failures} of {scenario.reps} replications failed to fit")
    valid = scenario.reps - failures
    estimates = {nm: totals[nm] / valid for nm in names}
    return PowerEstimate(estimates=estimates, reps=scenario.reps, kind=kind,
                         failures=failures, scenario=scenario)


# --------------------------------------------------------------------------
# post-processing
# --------------------------------------------------------------------------


def dale_filter(alpha_hat: float, alpha: float = 0.05, e: float = 0.35
                ) -> bool:
    """``|logit(1 - alpha_hat) - logit(1 - alpha)| <= e``."""
    if not (0 < alpha_hat < 1 and 0 < alpha < 1):
        raise DomainError("rates must lie in (0, 1)")

    def logit(x):
        return math.log(x / (1 - x))

    return abs(logit(1 - alpha_hat) - logit(1 - alpha)) <= e


def relative_efficiency(target, baseline) -> float:
    """``((b_T - a_T) - (b_B - a_B)) / (b_B - a_B)`` from
    ``(alpha_hat, beta_hat)`` pairs."""
    a_t, b_t = target
    a_b, b_b = baseline
    denom = b_b - a_b
    if denom == 0:
        raise UndefinedEfficiencyError("baseline power equals its size")
    return ((b_t - a_t) - denom) / denom


def parse_lambda_grid(spec: str) -> list[float]:
    """``"start:end:step"`` (end inclusive) or a comma list."""
    if ":" not in spec:
        return [float(x) for x in spec.split(",") if x.strip()]
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError("grid must be start:end:step")
    start, end, step = (float(x) for x in parts)
    if step <= 0 or end < start:
        raise ValueError("grid needs step > 0 and end >= start")
    count = int(math.floor((end - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def run_study(scenario: Scenario, lambdas=DEFAULT_LAMBDAS,
              opts: SolverOptions | None = None, progress=None,
              extra_statistics=()) -> list[dict]:
    """Size, power (when the design has an alternative) and efficiency
    records for every statistic."""
    names = default_statistics(scenario.J, lambdas) + [
        s for s in extra_statistics
        if s not in default_statistics(scenario.J, lambdas)]
    size = estimate_size_power(scenario.null_scenario(), names, opts,
                               progress)
    probs = scenario.cell_probs()
    power = None
    if not np.allclose(probs[0], probs[1], atol=0):
        power = estimate_size_power(scenario, names, opts, progress)
    records = []
    for nm in names:
        rec = {"statistic": nm, "alpha_hat": size.estimates[nm],
               "alpha_se": size.mc_se[nm]}
        rec["dale_pass"] = (dale_filter(rec["alpha_hat"], scenario.alpha)
                            if 0 < rec["alpha_hat"] < 1 else False)
        if power is not None:
            rec["beta_hat"] = power.estimates[nm]
            rec["beta_se"] = power.mc_se[nm]
            for key, base in (("rho_T0", pd_name("T", 0.0)),
                              ("rho_S1", pd_name("S", 1.0))):
                try:
                    rec[key] = relative_efficiency(
                        (size.estimates[nm], power.estimates[nm]),
                        (size.estimates[base], power.estimates[base]))
                except UndefinedEfficiencyError:
                    rec[key] = None
        records.append(rec)
    return records
