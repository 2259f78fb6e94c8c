"""Minimal equilibrium prices and speculative bubbles for a CIR dividend
stream traded by two groups with heterogeneous beliefs."""
from .closed_form import (
    PasteConstants,
    PriceCurve,
    bubble_size,
    check_e_nonneg,
    compute_paste_constants,
    owner,
    phi,
    price_curve,
    relative_bubble,
)
from .estimators import ClosedFormPricer, HJBPricer, ResalePricer
from .exceptions import (
    CirBubbleError,
    ConsistencyError,
    ConvergenceError,
    DomainError,
    EvaluationError,
    RegimeError,
    SchemeError,
)
from .hjb import Grid, SolveReport, resale_fixed_point, solve_hjb, supersolution_residual
from .market_model import (
    ModelParams,
    bubble_exists,
    conditional_mean,
    intrinsic_value,
    normalize_params,
    thresholds,
)
from .mc import McEstimate, SimConfig, mc_intrinsic, mc_stopping_value, simulate_paths

__version__ = "0.1.0"
