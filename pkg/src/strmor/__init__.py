"""Structure-preserving interpolatory model reduction for polynomial
structured dynamical systems."""

from .expr import (
    Const, Exp, Expr, Freq, Mul, Neg, Param, Pow, S, delay_factor, diff_expr,
    eval_expr, param, parse_expr, to_text,
)
from .model import (
    BilinTerm, InterpPlan, ParamMatrix, PlanEntry, PolyTerm, ReducedSystem,
    StructuredOperator, System,
)
from .tensor import (
    MultiIndex, apply_bilin, apply_poly, col_index, decode, mode2_bilin,
    mode2_poly, reduce_bilin, reduce_poly, symmetrize_mode1,
    symmetrize_state_part,
)
from .transfer import (
    SingularPencilError, SolveCache, dtf, grad_p_tf, shifted_solve, tf_bilin,
    tf_family, tf_linear, tf_poly,
)
from .basis import BasisBundle, build_VW, orth_dedup, primitive_columns, realify
from .reduction import (
    SingularValueReport, build_rom, estimate_order, numerical_rank,
    pencil_blocks, project, truncate,
)
from .simulate import (
    SimulationError, TimeGrid, Trajectory, classify, error_metrics, simulate,
    sweep_error,
)
from . import bench
from .bundleio import load_plan, load_system, save_plan, save_system
from .signals import Signal

__version__ = "0.1.0"
