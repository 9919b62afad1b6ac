"""First-passage laws, supremum laws and ladder processes for Levy processes
with phase-type upward jumps, via a matrix Wiener-Hopf factorisation solved by
monotone fixed-point iteration."""

from .fluctuation import (
    AtomPlusPhaseType,
    LadderHeightDescription,
    first_passage_lt,
    joint_transform,
    ladder_cumulant_minus,
    ladder_cumulant_plus,
    ladder_height_law,
    ladder_phase,
    overshoot_law,
    sup_law,
    wh3_identity,
    wh4_rhs,
    wh_minus,
    wh_plus_matrix,
    wh_plus_roots,
)
from .model import (
    LevyMeasureSpec,
    PathClass,
    PhLevyModel,
    SpectrallyNegativeComponent,
    approximate,
    classify_paths,
    cl_roots,
    levy_exponent,
    mean_slope,
    phi_root,
)
from .phasetype import PhaseType, erlang, exponential, hyperexponential
from .simulate import SimConfig, SimEstimate, simulate_first_passage, simulate_paths, simulate_sup, simulate_wh4
from .whfactor import LadderSolution, contraction_bound, solve_ladder, solve_tilted, tilt_model, tilt_root

__version__ = "0.1.0"
