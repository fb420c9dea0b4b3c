"""Lower and upper bounds on Bell violations of bipartite quantum states."""

from .dual import (
    PreconditionError,
    UpperBoundResult,
    compatible_domain,
    find_threshold,
    fixed_trace_bound,
    order0_bound,
    semianalytic_chsh,
    state_dependent_bound,
)
from .model import (
    BellInequality,
    DensityState,
    MeasurementSettings,
    builtin_inequality,
    cg_state,
    evaluate,
    horodecki_h_state,
    isotropic_state,
    load_inequality,
    load_state,
    ppt_check,
)
from .seesaw import SeesawOptions, SeesawResult, seesaw
from .sos import SizeError, solve_sos

__version__ = "0.1.0"
