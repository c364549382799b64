"""2 x J contingency tables and the saturated loglinear parametrization.

Cell vectors are stacked in lexicographic order ``(p11..p1J, p21..p2J)``.
A parameter vector ``theta`` has length ``2(J-1)`` and is laid out as
``(theta2, theta12)``: the column effects first, then the row-1 interaction
terms. The identifiability zeros and the normalizing terms ``u`` and
``u1(1)`` are never stored; they are recomputed from ``theta`` and the two
sample sizes whenever probabilities are needed.

The order constraint "treatment 2 dominates treatment 1 in likelihood
ratio order" is ``R @ theta >= 0``, where row ``j`` of ``R @ theta`` is the
log of the local odds ratio ``p1j p2,j+1 / (p2j p1,j+1)``.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DomainError,
    InvalidDimensionError,
    SaturationError,
    TableFormatError,
)

#: Replacement count for empty cells wherever a logarithm of an empirical
#: frequency is required.
ZERO_CELL_EPS = 1e-5


@dataclass(frozen=True)
class ContingencyTable:
    """Counts of two independent multinomial samples over J ordered categories.

    Parameters
    ----------
    counts : array_like, shape (2, J)
        Nonnegative integer counts; row 0 is treatment 1 (control), row 1 is
        treatment 2.
    """

    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 2 or arr.shape[0] != 2:
            raise InvalidDimensionError(
                f"counts must have shape (2, J); got {arr.shape}")
        if arr.shape[1] < 2:
            raise InvalidDimensionError("at least J=2 categories are required")
        if not np.all(np.isfinite(arr)):
            raise TableFormatError("counts must be finite")
        if np.any(arr < 0):
            raise TableFormatError("counts must be nonnegative")
        if np.any(arr != np.round(arr)):
            raise TableFormatError("counts must be integers")
        arr = arr.astype(np.int64)
        if np.any(arr.sum(axis=1) == 0):
            raise TableFormatError("both row totals must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    def __repr__(self):
        return f"ContingencyTable({self.counts.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, ContingencyTable):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash(self.counts.tobytes())

    @property
    def J(self) -> int:
        return self.counts.shape[1]

    @property
    def n1(self) -> int:
        return int(self.counts[0].sum())

    @property
    def n2(self) -> int:
        return int(self.counts[1].sum())

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def column_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def relative_frequencies(self) -> np.ndarray:
        """Empirical cell vector ``N / n`` in lexicographic order."""
        return self.counts.ravel() / self.n

    def adjusted_counts(self, eps: float = ZERO_CELL_EPS) -> np.ndarray:
        """Float counts with every empty cell replaced by ``eps``."""
        out = self.counts.astype(float)
        out[out == 0] = eps
        return out

    def swapped(self) -> "ContingencyTable":
        """The same data with the two treatment rows exchanged."""
        return ContingencyTable(self.counts[::-1].copy())


class DesignMatrices(NamedTuple):
    """Design and restriction matrices of the saturated loglinear model."""

    W0: np.ndarray
    W: np.ndarray
    R: np.ndarray
    G: np.ndarray


def difference_matrix(k: int) -> np.ndarray:
    """k x k matrix with ones on the diagonal and -1 on the superdiagonal."""
    return np.eye(k) - np.eye(k, k=1)


def build_design_matrices(J: int) -> DesignMatrices:
    """Design matrices for a 2 x J table.

    ``W0`` (2J x 2) multiplies ``(u, u1(1))`` and ``W`` (2J x 2(J-1)) the
    free parameters, so that ``log p = W0 @ u + W @ theta``. ``R`` is
    ``(0 | G)`` and acts on the interaction block of ``theta``.
    """
    if int(J) != J or J < 2:
        raise InvalidDimensionError(f"J must be an integer >= 2; got {J!r}")
    J = int(J)
    block = np.array([[1.0, 1.0], [1.0, 0.0]])
    W0 = np.kron(block, np.ones((J, 1)))
    W = np.kron(block, np.vstack([np.eye(J - 1), np.zeros((1, J - 1))]))
    G = difference_matrix(J - 1)
    R = np.hstack([np.zeros((J - 1, J - 1)), G])
    return DesignMatrices(W0=W0, W=W, R=R, G=G)


def _category_count(theta: np.ndarray) -> int:
    m = theta.shape[-1]
    if m < 2 or m % 2:
        raise InvalidDimensionError(
            f"theta must have even length 2(J-1) >= 2; got {m}")
    return m // 2 + 1


def split_theta(theta) -> tuple[np.ndarray, np.ndarray]:
    """Return the ``(theta2, theta12)`` blocks of a parameter vector."""
    theta = np.asarray(theta, dtype=float)
    k = _category_count(theta) - 1
    return theta[:k], theta[k:]


def _softmax_with_reference(a: np.ndarray) -> np.ndarray:
    # last category is the reference with log-weight 0
    full = np.append(a, 0.0)
    full = full - full.max()
    w = np.exp(full)
    return w / w.sum()


def conditional_probs(theta) -> tuple[np.ndarray, np.ndarray]:
    """Row-conditional probabilities ``(pi_1, pi_2)`` implied by ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise SaturationError("theta contains non-finite entries")
    theta2, theta12 = split_theta(theta)
    pi2 = _softmax_with_reference(theta2)
    pi1 = _softmax_with_reference(theta2 + theta12)
    return pi1, pi2


def theta_to_prob(theta, n1: float, n2: float) -> np.ndarray:
    """Joint cell probabilities of the loglinear model.

    Row ``i`` sums to ``n_i / n``. Raises :class:`SaturationError` if some
    cell underflows to zero.
    """
    if n1 <= 0 or n2 <= 0:
        raise DomainError("sample sizes must be positive")
    pi1, pi2 = conditional_probs(theta)
    n = n1 + n2
    p = np.concatenate([pi1 * (n1 / n), pi2 * (n2 / n)])
    if not np.all(p > 0):
        raise SaturationError(
            "theta is too extreme: some cell probability underflows to 0")
    return p


def prob_to_theta(p) -> np.ndarray:
    """Inverse of :func:`theta_to_prob` (the row scaling is discarded)."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 4 or p.size % 2:
        raise InvalidDimensionError(
            f"p must be a vector of even length 2J >= 4; got shape {p.shape}")
    if not np.all(p > 0):
        raise DomainError("all cell probabilities must be strictly positive")
    J = p.size // 2
    logp = np.log(p)
    l1, l2 = logp[:J], logp[J:]
    theta2 = l2[:-1] - l2[-1]
    theta12 = l1[:-1] - l1[-1] - theta2
    return np.concatenate([theta2, theta12])


def normalizing_terms(theta, n1: float, n2: float) -> tuple[float, float]:
    """The redundant terms ``(u, u1(1))`` determined by ``theta``."""
    theta2, theta12 = split_theta(theta)
    n = n1 + n2
    s2 = np.logaddexp.reduce(np.append(theta2, 0.0))
    s1 = np.logaddexp.reduce(np.append(theta2 + theta12, 0.0))
    u = np.log(n2) - np.log(n) - s2
    u1 = np.log(n1 / n2) + s2 - s1
    return float(u), float(u1)


def local_odds_ratios(p) -> np.ndarray:
    """Local odds ratios ``p1j p2,j+1 / (p2j p1,j+1)``, j = 1..J-1."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 2:
        p = p.ravel()
    if p.size % 2 or p.size < 4:
        raise InvalidDimensionError("p must have 2J entries with J >= 2")
    if not np.all(p > 0):
        raise DomainError("local odds ratios need strictly positive cells")
    J = p.size // 2
    p1, p2 = p[:J], p[J:]
    return p1[:-1] * p2[1:] / (p2[:-1] * p1[1:])


def log_odds_from_theta(theta) -> np.ndarray:
    """``R @ theta`` without forming ``R``."""
    _, theta12 = split_theta(theta)
    return theta12 - np.append(theta12[1:], 0.0)


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------


def _parse_cell(text, line, column):
    text = str(text).strip()
    try:
        value = float(text)
    except ValueError:
        raise TableFormatError(f"not a number: {text!r}", line, column)
    if not np.isfinite(value) or value != int(value):
        raise TableFormatError(f"not an integer count: {text!r}", line, column)
    if value < 0:
        raise TableFormatError(f"negative count: {text!r}", line, column)
    return int(value)


def _rows_to_table(rows, lines) -> ContingencyTable:
    if not rows:
        raise TableFormatError("empty table")
    if len(rows) != 2:
        raise TableFormatError(
            f"exactly two treatment rows required; got {len(rows)}")
    if len(rows[0]) != len(rows[1]):
        raise TableFormatError(
            f"ragged rows: {len(rows[0])} and {len(rows[1])} columns",
            lines[1])
    if len(rows[0]) < 2:
        raise TableFormatError("at least two response categories required",
                               lines[0])
    for i, row in enumerate(rows):
        if sum(row) == 0:
            raise TableFormatError("row total must be positive", lines[i])
    return ContingencyTable(np.array(rows, dtype=np.int64))


def parse_csv(text: str) -> ContingencyTable:
    """Parse two comma-separated rows of integer counts.

    Blank lines and lines starting with ``#`` are ignored.
    """
    rows, lines = [], []
    reader = csv.reader(io.StringIO(text))
    for lineno, record in enumerate(reader, start=1):
        if not record or all(not c.strip() for c in record):
            continue
        if record[0].lstrip().startswith("#"):
            continue
        rows.append([_parse_cell(c, lineno, k)
                     for k, c in enumerate(record, start=1)])
        lines.append(lineno)
    return _rows_to_table(rows, lines)


def parse_json(text: str) -> ContingencyTable:
    """Parse ``{"counts": [[...], [...]]}``."""
    if not text.strip():
        raise TableFormatError("empty table")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TableFormatError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict) or "counts" not in doc:
        raise TableFormatError('expected an object with a "counts" key')
    counts = doc["counts"]
    if not isinstance(counts, list) or not all(
            isinstance(r, list) for r in counts):
        raise TableFormatError('"counts" must be a list of rows')
    rows = [[_parse_cell(c, None, None) for c in r] for r in counts]
    return _rows_to_table(rows, [None] * len(rows))


def read_table(path) -> ContingencyTable:
    """Load a table from a ``.json`` or CSV file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if os.fspath(path).lower().endswith(".json") or text.lstrip().startswith("{"):
        return parse_json(text)
    return parse_csv(text)
