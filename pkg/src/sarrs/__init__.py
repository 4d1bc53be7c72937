"""Row-sparse reduced-rank regression by subspace-assisted group penalized least squares."""

from .estimator import FitReport, SarrsConfig, SarrsError, Split, bsw_fit, sarrs_fit, split_responses
from .gpls import GplsError, GplsProblem, GplsSolution, default_lambda, kkt_certificate, solve_gpls, theorem_lambda
from .init import InitResult, RankZeroError, estimate_sigma, init_low_rank, init_sparse, subspace_overlap
from .linalg import ThinSvd, operator_norm, projection_onto_column_space, schatten_norm_sq, sparse_riesz_constants, thin_svd
from .penalty import PenaltyKind, PenaltySpec, group_threshold, penalty_value

__version__ = "0.1.0"

__all__ = [
    "FitReport", "SarrsConfig", "SarrsError", "Split", "bsw_fit", "sarrs_fit", "split_responses",
    "GplsError", "GplsProblem", "GplsSolution", "default_lambda", "kkt_certificate", "solve_gpls",
    "theorem_lambda", "InitResult", "RankZeroError", "estimate_sigma", "init_low_rank", "init_sparse",
    "subspace_overlap", "ThinSvd", "operator_norm", "projection_onto_column_space", "schatten_norm_sq",
    "sparse_riesz_constants", "thin_svd", "PenaltyKind", "PenaltySpec", "group_threshold", "penalty_value",
]
