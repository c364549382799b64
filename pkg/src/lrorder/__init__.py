"""Tests of likelihood ratio ordering between two multinomial samples over
ordered categories."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConvergenceError,
    DegenerateTableError,
    DomainError,
    InvalidDimensionError,
    LROError,
    NumericalRankError,
    OracleInconsistencyError,
    SaturationError,
    TableFormatError,
    UndefinedEfficiencyError,
)
from .table_model import ContingencyTable, build_design_matrices  # noqa: E402
from .estimation import (  # noqa: E402
    RestrictedFit,
    SolverOptions,
    active_set_oracle,
    mle_null,
    mle_restricted,
)
from .chibar import (  # noqa: E402
    ChiBarWeights,
    HMatrix,
    chibar_pvalue,
    fisher_information,
    h_matrix,
    weights_closed_form,
    weights_monte_carlo,
)
from .tests import (  # noqa: E402
    TestReport,
    WeightOptions,
    analyze,
    run_test,
    s_statistic,
    t_statistic,
    two_by_two_suite,
    wilcoxon_midrank,
)
from . import _backend  # noqa: E402

BACKEND = _backend.NAME
